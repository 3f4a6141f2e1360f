"""Viscous Hamilton-Jacobi, Burgers and Whitham dynamics of the phase.

    gamma_t = d gamma_xx + a gamma_x + nu gamma_x^2          (viscous HJ)
    k_t     = d k_xx + a k_x + nu (k^2)_x                    (viscous Burgers)

The HJ equation is solved exactly through the Cole-Hopf substitution
y = exp(nu gamma / d) - 1, which turns it into the convective heat equation.
Independent ETDRK4 integrators on a periodic grid serve as oracles, and the
same integrator solves the fully nonlinear Whitham and HJ equations built from
the tabulated dispersion relation omega(k) and diffusion coefficient d(k).
"""

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy.interpolate import CubicSpline
from scipy.special import erfc

from . import spectral
from .fitting import fit_decay
from .stepping import integrate, rfft_wavenumbers


class DomainError(ValueError):
    pass


class ColeHopfError(ValueError):
    pass


class TableRangeError(ValueError):
    pass


@dataclass
class PhaseField:
    x: np.ndarray
    values: np.ndarray
    t: float
    a: float
    d: float
    nu: float = 0.0

    def to_dict(self):
        return {"t": self.t, "a": self.a, "d": self.d, "nu": self.nu,
                "grid": {"points": int(self.x.size), "x_min": float(self.x[0]),
                         "x_max": float(self.x[-1])}}


def erf_paper(x):
    """(4 pi)^{-1/2} times the integral of exp(-y^2/4) from -inf to x."""
    return 0.5 * erfc(-np.asarray(x, dtype=float) / 2)


def _spacing(x):
    x = np.asarray(x, dtype=float)
    h = np.diff(x)
    if x.ndim != 1 or x.size < 4 or np.ptp(h) > 1e-9 * abs(h[0]):
        raise ValueError("x must be a uniform 1-D grid with at least 4 points")
    return float(h[0])


def _affine_tail(x, w, side, points=8):
    sl = slice(0, points) if side == "left" else slice(-points, None)
    slope, icpt = np.polyfit(x[sl], w[sl], 1)
    return slope, icpt


def heat_solve(x, w0, t, a, d, boundary="affine"):
    """exp((d dx^2 + a dx) t) w0 on the uniform grid ``x``.

    With ``boundary="periodic"`` the grid is one period of a torus of length
    len(x) * h and the multiplier is applied directly.  Otherwise the data are extended affinely beyond both ends (the exact tail of an erf
    front) far enough that the kernel never sees the periodic wrap; the
    convolution with the Gaussian kernel is then applied as its exact Fourier
    multiplier, which equals trapezoidal convolution with the sampled kernel.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if d <= 0:
        raise ValueError("d must be positive")
    w0 = np.asarray(w0, dtype=float)
    if t == 0:
        return w0.copy()
    h = _spacing(x)
    x = np.asarray(x, dtype=float)
    if boundary == "periodic":
        kappa = rfft_wavenumbers(x.size, x.size * h)
        mult = np.exp((1j * a * kappa - d * kappa ** 2) * t)
        return sfft.irfft(mult * sfft.rfft(w0), n=x.size)
    if boundary != "affine":
        raise ValueError(f"unknown boundary {boundary!r}")
    span = x[-1] - x[0]
    sigma = np.sqrt(2 * d * t)
    if abs(a) * t + 6 * sigma > 0.5 * span:
        raise DomainError("domain too small for the requested drift and spreading")
    pad = int(np.ceil((abs(a) * t + 12 * sigma) / h)) + 8
    M = sfft.next_fast_len(x.size + 2 * pad, real=True)
    right = M - x.size - pad
    sl, il = _affine_tail(x, w0, "left")
    sr, ir = _affine_tail(x, w0, "right")
    xl = x[0] - h * np.arange(pad, 0, -1)
    xr = x[-1] + h * np.arange(1, right + 1)
    ext = np.concatenate([sl * xl + il, w0, sr * xr + ir])
    kappa = rfft_wavenumbers(M, M * h)
    mult = np.exp((1j * a * kappa - d * kappa ** 2) * t)
    out = sfft.irfft(mult * sfft.rfft(ext), n=M)
    return out[pad:pad + x.size]


def hj_solve(x, gamma0, t, a, d, nu, boundary="affine"):
    """Viscous HJ solution at time t by the Cole-Hopf transform."""
    gamma0 = np.asarray(gamma0, dtype=float)
    if nu == 0:
        return PhaseField(np.asarray(x), heat_solve(x, gamma0, t, a, d, boundary),
                          t, a, d, nu)
    y0 = np.expm1(nu / d * gamma0)
    y = heat_solve(x, y0, t, a, d, boundary)
    if np.min(1 + y) <= 0:
        raise ColeHopfError("Cole-Hopf positivity violated; data too large")
    return PhaseField(np.asarray(x), d / nu * np.log1p(y), t, a, d, nu)


def antiderivative(x, k, left_value=0.0):
    """Spectral antiderivative of samples that decay towards both grid ends."""
    h = _spacing(x)
    x = np.asarray(x, dtype=float)
    N = x.size
    length = N * h
    c = np.fft.rfft(k)
    mean = c[0].real / N
    kappa = rfft_wavenumbers(N, length)
    m = np.zeros_like(c)
    m[1:] = c[1:] / (1j * kappa[1:])
    if N % 2 == 0:
        m[-1] = 0.0
    periodic = np.fft.irfft(m, n=N)
    g = periodic + mean * (x - x[0])
    return g - g[0] + left_value


def burgers_solve(x, k0bar, t, a, d, nu, gamma_left=0.0):
    """Viscous Burgers solution k = d_x gamma with gamma the Cole-Hopf HJ solution.

    The x-derivative is taken analytically through the transform:
    k = (d/nu) y_x / (1 + y), where y_x is the heat flow of y0'.
    """
    k0bar = np.asarray(k0bar, dtype=float)
    if nu == 0:
        return PhaseField(np.asarray(x), heat_solve(x, k0bar, t, a, d), t, a, d, nu)
    gamma0 = antiderivative(x, k0bar, gamma_left)
    e = np.exp(nu / d * gamma0)
    y = heat_solve(x, e - 1, t, a, d)
    yx = heat_solve(x, nu / d * k0bar * e, t, a, d)
    if np.min(1 + y) <= 0:
        raise ColeHopfError("Cole-Hopf positivity violated; data too large")
    return PhaseField(np.asarray(x), d / nu * yx / (1 + y), t, a, d, nu)


# --- front solutions ------------------------------------------------------------

def _front_profile(y, gamma_minus, gamma_plus, d, nu):
    """G and its first three derivatives, with gamma_f = G((x + a(1+t)) / sqrt(d(1+t)))."""
    y = np.asarray(y, dtype=float)
    E = erf_paper(y)
    E1 = np.exp(-y ** 2 / 4) / np.sqrt(4 * np.pi)
    E2 = -0.5 * y * E1
    E3 = (0.25 * y ** 2 - 0.5) * E1
    jump = gamma_plus - gamma_minus
    if nu == 0 or jump == 0:
        return gamma_minus + jump * E, jump * E1, jump * E2, jump * E3
    beta = np.expm1(nu * jump / d)
    P = 1 + beta * E
    c = d / nu
    G = gamma_minus + c * np.log1p(beta * E)
    G1 = c * beta * E1 / P
    G2 = c * (beta * E2 / P - (beta * E1 / P) ** 2)
    G3 = c * (beta * E3 / P - 3 * beta ** 2 * E2 * E1 / P ** 2 + 2 * (beta * E1 / P) ** 3)
    return G, G1, G2, G3


def front_solution(gamma_minus, gamma_plus, x, t, a, d, nu):
    """Monotone front of the viscous HJ equation joining gamma_- to gamma_+."""
    if d <= 0 or np.any(np.asarray(t) < 0):
        raise ValueError("need d > 0 and t >= 0")
    tau = 1.0 + np.asarray(t, dtype=float)
    y = (np.asarray(x, dtype=float) + a * tau) / np.sqrt(d * tau)
    return _front_profile(y, gamma_minus, gamma_plus, d, nu)[0]


def resolved_front_time(d, spacing, cells=8.0):
    """Earliest t >= 0 at which the front width sqrt(d (1 + t)) spans ``cells`` grid cells."""
    return max(0.0, (cells * spacing) ** 2 / d - 1.0)


def front_derivatives(gamma_minus, gamma_plus, x, t, a, d, nu):
    """Analytic (gamma, gamma_x, gamma_xx, gamma_t) of the front solution."""
    tau = 1.0 + np.asarray(t, dtype=float)
    s = np.sqrt(d * tau)
    y = (np.asarray(x, dtype=float) + a * tau) / s
    G, G1, G2, _ = _front_profile(y, gamma_minus, gamma_plus, d, nu)
    yt = a / s - y / (2 * tau)
    return G, G1 / s, G2 / s ** 2, G1 * yt


def hj_residual(gamma_x, gamma_xx, gamma_t, a, d, nu):
    return gamma_t - d * gamma_xx - a * gamma_x - nu * gamma_x ** 2


@dataclass
class FrontDecay:
    j: int
    l: int
    slope: float
    expected: float
    ratio_min: float
    ratio_max: float
    norms: np.ndarray

    def ok(self, tol=0.05, C=50.0):
        two_sided = self.ratio_min > 1.0 / C and self.ratio_max < C
        return abs(self.slope - self.expected) <= tol and two_sided


def front_decay_rates(gamma_minus, gamma_plus, j, l, times, a, d, nu, points=20001,
                      half_width=None):
    """sup_x |d_x^j (d_t - a d_x)^l gamma_f| over ``times`` and its log-log slope in 1+t.

    The norm is sampled on a fixed wide x-grid; the ratio of the norm to
    max(|gamma_-|, |gamma_+|) (d (1+t))^{-j/2} (1+t)^{-l} is returned as the
    two-sided constant range (the d scaling makes it dimensionless).
    """
    if j not in (0, 1, 2) or l not in (0, 1):
        raise ValueError("(j, l) must lie in {0, 1, 2} x {0, 1}")
    times = np.asarray(times, dtype=float)
    tau_max = 1 + times.max()
    core = 10 * np.sqrt(d * tau_max)
    centre = -a * (1 + times)
    if half_width is None:
        half_width = np.max(np.abs(centre)) + core
    if np.any(np.abs(centre) + core > half_width):
        raise DomainError("grid too narrow to contain the front core")
    x = np.linspace(-half_width, half_width, points)
    norms = []
    for t in times:
        tau = 1 + t
        s = np.sqrt(d * tau)
        y = (x + a * tau) / s
        G = _front_profile(y, gamma_minus, gamma_plus, d, nu)
        if l == 0:
            field = G[j] / s ** j
        else:
            # (d_t - a d_x) gamma = -y G'(y) / (2 tau); d_y^j(y G') = y G^(j+1) + j G^(j)
            field = -(y * G[j + 1] + j * G[j]) / (2 * tau) / s ** j
        norms.append(np.max(np.abs(field)))
    norms = np.array(norms)
    fit = fit_decay(times, norms, shift=1.0)
    expected = -(0.5 * j + l)
    scale = max(abs(gamma_minus), abs(gamma_plus))
    ratio = norms * (1 + times) ** (0.5 * j + l) * d ** (0.5 * j) / scale
    return FrontDecay(j, l, fit.slope, expected, float(ratio.min()), float(ratio.max()),
                      norms)


# --- direct integrators on a periodic grid -----------------------------------

def _periodic_setup(x):
    h = _spacing(x)
    N = np.asarray(x).size
    length = N * h
    return N, length, rfft_wavenumbers(N, length)


def _dx(u, length):
    return spectral.diff(u, 1, length)


def hj_imex(x, gamma0, t, a, d, nu, dt=1e-3):
    """ETDRK4 for the viscous HJ equation on the periodic grid ``x``."""
    N, length, kappa = _periodic_setup(x)
    symbol = -d * kappa ** 2 + 1j * a * kappa
    return integrate(gamma0, t, symbol, lambda g: nu * _dx(g, length) ** 2, dt)


def burgers_imex(x, k0, t, a, d, nu, dt=1e-3):
    """ETDRK4 for the viscous Burgers equation on the periodic grid ``x``."""
    N, length, kappa = _periodic_setup(x)
    symbol = -d * kappa ** 2 + 1j * a * kappa
    return integrate(k0, t, symbol, lambda k: nu * _dx(k * k, length), dt)


# --- Whitham and full Hamilton-Jacobi ----------------------------------------

@dataclass
class DispersionTables:
    """omega(k) and d(k) tabulated on a wavenumber grid around k0."""

    ks: np.ndarray
    omegas: np.ndarray
    ds: np.ndarray
    k0: float

    def __post_init__(self):
        self.ks = np.asarray(self.ks, dtype=float)
        self._omega = CubicSpline(self.ks, self.omegas)
        self._d = CubicSpline(self.ks, self.ds)
        if not self.ks[0] <= self.k0 <= self.ks[-1]:
            raise TableRangeError("k0 lies outside the tables")

    @classmethod
    def from_family(cls, sys, family):
        from .bloch import diffusion_table
        ks, ds = diffusion_table(sys, family)
        return cls(ks, family.omega_of_k[1:-1], ds, family.k0)

    def _check(self, k):
        if np.min(k) < self.ks[0] or np.max(k) > self.ks[-1]:
            raise TableRangeError(f"wavenumber range [{np.min(k):.6g}, {np.max(k):.6g}] "
                                  f"leaves the tables [{self.ks[0]:.6g}, {self.ks[-1]:.6g}]")

    def omega(self, k):
        self._check(k)
        return self._omega(k)

    def d(self, k):
        self._check(k)
        return self._d(k)

    @property
    def omega0(self):
        return float(self._omega(self.k0))

    @property
    def d0(self):
        return float(self._d(self.k0))

    @property
    def a(self):
        return self.omega0 - self.k0 * float(self._omega(self.k0, 1))

    @property
    def nu(self):
        return -0.5 * self.k0 ** 2 * float(self._omega(self.k0, 2))


def _guarded(u0, t, symbol, rhs, dt, growth):
    u = integrate(u0, t, symbol, rhs, dt)
    if np.max(np.abs(u)) > growth * max(np.max(np.abs(u0)), 1e-300):
        raise FloatingPointError("norm growth detected; reduce the time step")
    return u


def whitham_solve(x, kappa0, t, tables, dt=1e-2, growth=10.0):
    """kappa_t = (d(k0 kappa) kappa_x)_x + (omega(k0) kappa - omega(k0 kappa))_x.

    Integrated for m = kappa - 1 with the constant-coefficient part
    d(k0) m_xx + a m_x exact and the rest explicit.
    """
    N, length, kappa = _periodic_setup(x)
    k0, d0, a, om0 = tables.k0, tables.d0, tables.a, tables.omega0
    symbol = -d0 * kappa ** 2 + 1j * a * kappa

    def rhs(m):
        k = k0 * (1 + m)
        diff_flux = (tables.d(k) - d0) * _dx(m, length)
        transport = om0 * m - (tables.omega(k) - om0) - a * m
        return _dx(diff_flux + transport, length)

    m = _guarded(np.asarray(kappa0, dtype=float) - 1, t, symbol, rhs, dt, growth)
    return 1 + m


def hj2_solve(x, upsilon0, t, tables, dt=1e-2, growth=10.0):
    """Upsilon_t = d(k0 Upsilon_x) Upsilon_xx + omega(k0) Upsilon_x - omega(k0 Upsilon_x).

    Solved for gamma = Upsilon - x, which is periodic for localized data.
    """
    N, length, kappa = _periodic_setup(x)
    x = np.asarray(x, dtype=float)
    k0, d0, a, om0 = tables.k0, tables.d0, tables.a, tables.omega0
    symbol = -d0 * kappa ** 2 + 1j * a * kappa

    def rhs(g):
        gx = _dx(g, length)
        k = k0 * (1 + gx)
        return ((tables.d(k) - d0) * spectral.diff(g, 2, length)
                + om0 * gx - (tables.omega(k) - om0) - a * gx)

    g = _guarded(np.asarray(upsilon0, dtype=float) - x, t, symbol, rhs, dt, growth)
    return x + g


def burgers_approximant(x, kappa0, t, tables, dt=1e-2):
    """1 + k with k the viscous Burgers solution for k(0) = kappa0 - 1 (same integrator)."""
    return 1 + burgers_imex(x, np.asarray(kappa0, dtype=float) - 1, t, tables.a,
                            tables.d0, tables.nu, dt)
