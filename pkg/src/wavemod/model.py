"""Reaction-diffusion systems u_t = D u_xx + f(u) with hand-coded derivatives."""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class RDSystem:
    """A reaction-diffusion model.

    ``f``, ``df`` and ``d2f`` are vectorised over leading axes: ``f`` maps
    ``(..., n)`` to ``(..., n)``, ``df`` maps ``(..., n)`` to ``(..., n, n)``
    and ``d2f(u, v, w)`` returns the bilinear Hessian action ``f''(u)(v, w)``.
    """

    name: str
    D: np.ndarray
    f: Callable
    df: Callable
    d2f: Callable
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        D = np.array(self.D, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise DimensionError("diffusion matrix must be square")
        if not np.allclose(D, D.T):
            raise ValueError("diffusion matrix must be symmetric")
        if np.linalg.eigvalsh(D).min() <= 0:
            raise ValueError("diffusion matrix must be positive definite")
        D.setflags(write=False)
        object.__setattr__(self, "D", D)

    @property
    def n(self):
        return self.D.shape[0]

    def _check(self, *arrays):
        for a in arrays:
            if np.shape(a)[-1:] != (self.n,):
                raise DimensionError(
                    f"expected trailing dimension {self.n}, got shape {np.shape(a)}")

    def reaction(self, u):
        u = np.asarray(u, dtype=float)
        self._check(u)
        return self.f(u)

    def jacobian(self, u):
        u = np.asarray(u, dtype=float)
        self._check(u)
        return self.df(u)

    def hessian(self, u, v, w):
        u = np.asarray(u, dtype=float)
        self._check(u, v, w)
        return self.d2f(u, v, w)


def evaluate_reaction(sys, u):
    return sys.reaction(u)


def evaluate_jacobian(sys, u):
    return sys.jacobian(u)


def evaluate_hessian_bilinear(sys, u, v, w):
    return sys.hessian(u, v, w)


# --- presets -----------------------------------------------------------------

def _real_gl():
    def f(u):
        r2 = np.sum(u * u, axis=-1, keepdims=True)
        return u - r2 * u

    def df(u):
        r2 = np.sum(u * u, axis=-1)[..., None, None]
        eye = np.eye(2)
        return (1.0 - r2) * eye - 2.0 * u[..., :, None] * u[..., None, :]

    def d2f(u, v, w):
        uv = np.sum(u * v, axis=-1, keepdims=True)
        uw = np.sum(u * w, axis=-1, keepdims=True)
        vw = np.sum(v * w, axis=-1, keepdims=True)
        return -2.0 * (uw * v + uv * w + vw * u)

    return RDSystem("real-ginzburg-landau", np.eye(2), f, df, d2f, {})


def _complex_gl(c3=0.5, mu=1.0):
    # real form of A_t = A_xx + mu (A - (1 + i c3)|A|^2 A)
    def rot(u):
        return np.stack([-u[..., 1], u[..., 0]], axis=-1)

    def f(u):
        r2 = np.sum(u * u, axis=-1, keepdims=True)
        return mu * ((1.0 - r2) * u - c3 * r2 * rot(u))

    def df(u):
        r2 = np.sum(u * u, axis=-1)[..., None, None]
        J = np.array([[0.0, -1.0], [1.0, 0.0]])
        Ju = rot(u)
        return mu * ((1.0 - r2) * np.eye(2) - 2.0 * u[..., :, None] * u[..., None, :]
                     - c3 * (2.0 * Ju[..., :, None] * u[..., None, :] + r2 * J))

    def d2f(u, v, w):
        uv = np.sum(u * v, axis=-1, keepdims=True)
        uw = np.sum(u * w, axis=-1, keepdims=True)
        vw = np.sum(v * w, axis=-1, keepdims=True)
        cubic = -2.0 * (uw * v + uv * w + vw * u)
        twist = -2.0 * c3 * (vw * rot(u) + uv * rot(w) + uw * rot(v))
        return mu * (cubic + twist)

    return RDSystem("complex-ginzburg-landau", np.eye(2), f, df, d2f, {"c3": c3, "mu": mu})


def _uuv_hessian(u, v, w):
    # Hessian action of the cubic term x^2 y, returned as a scalar field.
    x, y = u[..., 0], u[..., 1]
    return 2.0 * y * v[..., 0] * w[..., 0] + 2.0 * x * (v[..., 0] * w[..., 1] + v[..., 1] * w[..., 0])


def _brusselator(a=1.0, b=3.0, du=1.0, dv=1.0):
    def f(u):
        x, y = u[..., 0], u[..., 1]
        xxy = x * x * y
        return np.stack([a - (b + 1.0) * x + xxy, b * x - xxy], axis=-1)

    def df(u):
        x, y = u[..., 0], u[..., 1]
        J = np.empty(u.shape[:-1] + (2, 2))
        J[..., 0, 0] = -(b + 1.0) + 2.0 * x * y
        J[..., 0, 1] = x * x
        J[..., 1, 0] = b - 2.0 * x * y
        J[..., 1, 1] = -x * x
        return J

    def d2f(u, v, w):
        h = _uuv_hessian(u, v, w)
        return np.stack([h, -h], axis=-1)

    return RDSystem("brusselator", np.diag([du, dv]), f, df, d2f,
                    {"a": a, "b": b, "du": du, "dv": dv})


def _schnakenberg(a=0.1, b=0.9, du=1.0, dv=10.0):
    def f(u):
        x, y = u[..., 0], u[..., 1]
        xxy = x * x * y
        return np.stack([a - x + xxy, b - xxy], axis=-1)

    def df(u):
        x, y = u[..., 0], u[..., 1]
        J = np.empty(u.shape[:-1] + (2, 2))
        J[..., 0, 0] = -1.0 + 2.0 * x * y
        J[..., 0, 1] = x * x
        J[..., 1, 0] = -2.0 * x * y
        J[..., 1, 1] = -x * x
        return J

    def d2f(u, v, w):
        h = _uuv_hessian(u, v, w)
        return np.stack([h, -h], axis=-1)

    return RDSystem("schnakenberg", np.diag([du, dv]), f, df, d2f,
                    {"a": a, "b": b, "du": du, "dv": dv})


PRESETS = {
    "real-ginzburg-landau": _real_gl,
    "brusselator": _brusselator,
    "schnakenberg": _schnakenberg,
    "complex-ginzburg-landau": _complex_gl,
}


def preset(name, **params):
    """Build a preset system; keyword arguments override default parameters."""
    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(**params)


def steady_state(sys):
    """Homogeneous equilibrium of a preset (closed form)."""
    p = sys.params
    if sys.name == "brusselator":
        return np.array([p["a"], p["b"] / p["a"]])
    if sys.name == "schnakenberg":
        s = p["a"] + p["b"]
        return np.array([s, p["b"] / s**2])
    return np.zeros(sys.n)
