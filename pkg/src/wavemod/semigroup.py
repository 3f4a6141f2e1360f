"""The linearised semigroup e^{L0 t} on a long periodic domain and its pieces.

On a domain of ``L`` periods the Floquet-Bloch transform is exact: a field
splits into L Bloch components with xi_m = 2 pi m / L, and L0 acts on the
m-th component through the Bloch matrix L(xi_m).  Every propagator below is
assembled mode by mode from that splitting:

    full      e^{L(xi) t}
    S_c       chi(t) rho(xi) e^{lambda_c t} Phi_xi <Phi~_xi, .>
    S_e       full - S_c
    S_p^i     chi(t) rho(xi) e^{lambda_c t} <d^i Phi~_xi, .>     (scalar field)
    S_r       S_c - (phi0' + k0 d_k phi d_zeta) S_p^0
    S_h^i     convective heat kernel applied to d^i Phi~_0^* v
    S~_r^i    S_p^i - S_h^i

A second, independent route evaluates the principal Green's function on the
real line by Gauss-Legendre quadrature in xi.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.interpolate import CubicSpline

from . import spectral
from .bloch import bloch_parts, critical_eigenpair
from .fitting import fit_decay


class HypothesisError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


# --- cutoffs -----------------------------------------------------------------

def _g(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smoothstep(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    a, b = _g(s), _g(1.0 - s)
    return a / (a + b)


def smoothstep_prime(s):
    s = np.asarray(s, dtype=float)
    a, b = _g(s), _g(1.0 - s)
    inside = (s > 0) & (s < 1)
    ap = np.zeros_like(s)
    bp = np.zeros_like(s)
    ap[inside] = a[inside] / s[inside] ** 2
    bp[inside] = b[inside] / (1.0 - s[inside]) ** 2
    return (ap * b + a * bp) / (a + b) ** 2


@dataclass(frozen=True)
class CutoffPair:
    """rho = 1 on |xi| <= xi0/2, 0 on |xi| >= xi0; chi = 0 on [0, 1], 1 on [2, inf)."""

    xi0: float

    def rho(self, xi):
        h = 0.5 * self.xi0
        return 1.0 - smoothstep((np.abs(xi) - h) / h)

    def chi(self, t):
        return smoothstep(np.asarray(t, dtype=float) - 1.0)

    def chi_prime(self, t):
        return smoothstep_prime(np.asarray(t, dtype=float) - 1.0)


def heat_kernel(x, t, a, d):
    """H(x, t) = exp(-(x + a t)^2 / (4 d t)) / sqrt(4 pi d t)."""
    if np.any(np.asarray(t) <= 0):
        raise ValueError("heat kernel needs t > 0")
    if d <= 0:
        raise ValueError("heat kernel needs d > 0")
    x = np.asarray(x, dtype=float)
    return np.exp(-(x + a * t) ** 2 / (4 * d * t)) / np.sqrt(4 * np.pi * d * t)


# --- periodic-domain realisation ----------------------------------------------

class TorusSemigroup:
    """Bloch-exact propagators on [-L/2, L/2) for a wave train with L periods.

    ``curve`` supplies the adjoint kernel and a starting guess for lambda_c;
    the critical eigenpair is recomputed exactly at every xi_m with
    rho(xi_m) > 0.  ``dk_phi`` is the gauge-normalised d_k phi(.; k0).
    """

    def __init__(self, sys, wave, L, curve=None, cutoffs=None, dk_phi=None,
                 a=None, d=None, gauge=1.0):
        if L < 2 or int(L) != L:
            raise ValueError("L must be an integer number of periods >= 2")
        self.sys, self.wave, self.L = sys, wave, int(L)
        self.N, self.n = wave.phi.shape
        self.M = self.L * self.N
        self.x0 = -0.5 * self.L
        self.x = self.x0 + np.arange(self.M) / self.N
        self.m = np.fft.fftfreq(self.L, 1.0 / self.L)
        self.xis = 2 * np.pi * self.m / self.L
        L0, L1, L2 = bloch_parts(sys, wave)
        self.mats = (L0[None] + 1j * self.xis[:, None, None] * L1[None]
                     - (self.xis ** 2)[:, None, None] * L2[None])
        self._expm = {}
        zeta = spectral.grid(self.N)
        self._phase = np.exp(-1j * np.outer(self.xis, self.x0 + zeta))  # (L, N)
        self.cutoffs = cutoffs
        self.curve = curve
        self.a, self.d = a, d
        self.dk_phi = dk_phi
        if curve is not None:
            if cutoffs is None:
                raise ValueError("critical components need cutoffs")
            self._setup_critical(gauge)

    def _setup_critical(self, gauge):
        N, n = self.N, self.n
        adj0 = self.curve.adjoint0.ravel()
        self.rho = self.cutoffs.rho(self.xis)
        self.lam = np.zeros(self.L, dtype=complex)
        self.Phi = np.zeros((self.L, N * n), dtype=complex)
        self.Phi_adj = np.zeros((self.L, N * n), dtype=complex)
        for j in np.nonzero(self.rho > 0)[0]:
            xi = self.xis[j]
            if abs(xi) > self.curve.xi0 + 1e-12:
                raise ValueError("cutoff support exceeds the computed critical curve")
            target = complex(self.curve.lambda_at(xi))
            lam, v, w, _ = critical_eigenpair(self.mats[j], target, adj0, self.wave.k,
                                              xi, N, gauge)
            self.lam[j], self.Phi[j], self.Phi_adj[j] = lam, v, w
        adj = self.Phi_adj.reshape(self.L, N, n)
        self.dPhi_adj = [self.Phi_adj,
                         spectral.diff(adj, 1, axis=1).reshape(self.L, N * n),
                         spectral.diff(adj, 2, axis=1).reshape(self.L, N * n)]
        adj0 = self.curve.adjoint0
        self.dadj0 = [adj0, spectral.diff(adj0, 1), spectral.diff(adj0, 2)]

    # transforms
    def tile(self, periodic):
        """Repeat one-period samples over the domain."""
        reps = (self.L,) + (1,) * (np.ndim(periodic) - 1)
        return np.tile(periodic, reps)

    def transform(self, v):
        """(..., M, n) -> Bloch components (..., L, N*n)."""
        v = np.asarray(v)
        lead = v.shape[:-2]
        w = v.reshape(lead + (self.L, self.N, self.n))
        W = np.fft.fft(w, axis=-3) / self.L
        W = W * self._phase[..., None]
        return W.reshape(lead + (self.L, self.N * self.n))

    def inverse(self, vc, n_out=None):
        """Bloch components (..., L, N*k) -> field (..., M, k)."""
        vc = np.asarray(vc)
        lead = vc.shape[:-2]
        k = vc.shape[-1] // self.N
        w = vc.reshape(lead + (self.L, self.N, k)) / self._phase[..., None]
        out = np.fft.ifft(w, axis=-3) * self.L
        return out.reshape(lead + (self.M, k))

    def _scalar_inverse(self, coef):
        """Per-mode scalars c_m -> field sum_m c_m e^{i xi_m x}, shape (..., M)."""
        lead = coef.shape[:-1]
        vc = np.broadcast_to(coef[..., None], lead + (self.L, self.N))
        return self.inverse(vc)[..., 0]

    @staticmethod
    def _real(u):
        return np.real(u)

    def _expm_at(self, t):
        key = float(t)
        if key not in self._expm:
            if len(self._expm) > 8:
                self._expm.clear()
            self._expm[key] = scipy.linalg.expm(self.mats * t)
        return self._expm[key]

    # propagators
    def full(self, v, t):
        if t < 0:
            raise ValueError("t must be non-negative")
        vc = self.transform(v)
        out = np.einsum("mij,...mj->...mi", self._expm_at(t), vc)
        return self._real(self.inverse(out))

    def _coef(self, v, i=0):
        vc = self.transform(v)
        return np.einsum("mj,...mj->...m", np.conj(self.dPhi_adj[i]), vc) / self.N

    def _time_factor(self, t, l=0):
        chi = self.cutoffs.chi(t)
        e = np.exp(self.lam * t)
        if l == 0:
            return self.rho * chi * e
        if l == 1:
            # (d_t - a d_zeta) applied to chi(t) e^{lambda t} e^{i xi x}
            return self.rho * (self.cutoffs.chi_prime(t)
                               + chi * (self.lam - 1j * self.a * self.xis)) * e
        raise ValueError("only l in {0, 1} is supported")

    def critical(self, v, t):
        coef = self._coef(v) * self._time_factor(t)
        return self._real(self.inverse(coef[..., None] * self.Phi))

    def exponential(self, v, t):
        return self.full(v, t) - self.critical(v, t)

    def principal(self, v, t, i=0, j=0, l=0):
        """d_zeta^j (d_t - a d_zeta)^l S_p^i(t) v, a scalar field."""
        coef = self._coef(v, i) * self._time_factor(t, l) * (1j * self.xis) ** j
        return self._real(self._scalar_inverse(coef))

    def heat(self, v, t, i=0, j=0):
        """d_zeta^j S_h^i(t) v on the periodic domain."""
        if t <= 0:
            raise ValueError("S_h needs t > 0")
        h = np.sum(np.conj(self.tile(self.dadj0[i])) * v, axis=-1)
        kappa = spectral.wavenumbers(self.M, self.L)
        mult = np.exp((1j * self.a * kappa - self.d * kappa ** 2) * t) * (1j * kappa) ** j
        if j % 2 == 1 and self.M % 2 == 0:
            mult[self.M // 2] = 0.0
        return self._real(np.fft.ifft(mult * np.fft.fft(h, axis=-1), axis=-1))

    def principal_remainder(self, v, t, i=0, j=0):
        return self.principal(v, t, i, j) - self.heat(v, t, i, j)

    def residual(self, v, t):
        p0 = self.principal(v, t)
        p0x = self.principal(v, t, j=1)
        phase_part = (self.tile(self.wave.dphi) * p0[..., None]
                      + self.wave.k * self.tile(self.dk_phi) * p0x[..., None])
        return self.critical(v, t) - phase_part

    def apply(self, tag, v, t):
        tags = {
            "full": lambda: self.full(v, t),
            "S_c": lambda: self.critical(v, t),
            "S_e": lambda: self.exponential(v, t),
            "S_r": lambda: self.residual(v, t),
        }
        for i in range(3):
            tags[f"S_p{i}"] = (lambda i=i: self.principal(v, t, i))
            tags[f"S_h{i}"] = (lambda i=i: self.heat(v, t, i))
            tags[f"S_tr{i}"] = (lambda i=i: self.principal_remainder(v, t, i))
        if tag not in tags:
            raise ValueError(f"unknown propagator {tag!r}; choose from {sorted(tags)}")
        return tags[tag]()

    # norms
    def deltas(self):
        """Unit point masses at the first-period grid points, shape (N*n, M, n)."""
        B = self.N * self.n
        v = np.zeros((B, self.M, self.n))
        for b in range(B):
            v[b, b // self.n, b % self.n] = 1.0
        return v

    def operator_norm(self, op):
        """Exact sup-to-sup norm of the discrete operator ``op``.

        Uses the integer-shift invariance: kernel columns at one period of
        source points determine every row sum.
        """
        out = np.abs(op(self.deltas()))
        if out.ndim == 2:
            out = out[..., None]
        B, M, k = out.shape
        rows = out.reshape(B, self.L, self.N, k).sum(axis=(0, 1))
        return float(rows.max())


def heat_expansion_check(bench, g, v, times):
    """Max defect of S_h^0(g v) = H(t)(<Phi~0, g> v - A_h(g) v') + d_zeta H(t)(A_h(g) v).

    ``g`` is one period of a periodic n-vector field (N, n); ``v`` is a scalar
    field on the torus (M,).  H(t) is the convective heat semigroup and A_h(g)
    the zero-mean periodic antiderivative of the oscillating part of Phi~0^* g.
    """
    from .bloch import antiderivative_operator
    adj0 = bench.curve.adjoint0
    mean = spectral.inner(adj0, g).real
    A = bench.tile(antiderivative_operator(g, adj0))
    dv = spectral.diff(v, 1, bench.L)
    kappa = spectral.wavenumbers(bench.M, bench.L)
    worst = 0.0
    for t in times:
        mult = np.exp((1j * bench.a * kappa - bench.d * kappa ** 2) * t)
        heat = lambda w, j=0: np.fft.ifft(mult * (1j * kappa) ** j * np.fft.fft(w)).real
        lhs = bench.heat(bench.tile(g) * v[:, None], t)
        rhs = heat(mean * v - A * dv) + heat(A * v, 1)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def apply_full_semigroup(sys, wave, v0, t, L=None):
    """e^{L0 t} v0 for samples v0 on the periodic domain of L periods."""
    N = wave.N
    v0 = np.asarray(v0, dtype=float)
    if L is None:
        if v0.shape[0] % N:
            raise ValueError("sample count must be a multiple of the profile grid")
        L = v0.shape[0] // N
    return TorusSemigroup(sys, wave, L).full(v0, t)


def decay_rate_probe(bench, tag, times, j=0, l=0, i=0, t_min=None, t_max=None,
                     log_correction=False, floor=1e-12):
    """Operator norms of a composed propagator over ``times`` and their log-log slope.

    tag in {"S_p", "S_h", "S_tr", "S_r", "S_e", "S_c", "full"}; j counts
    zeta-derivatives on the left and l applications of (d_t - a d_zeta)
    (the latter for S_p only).
    """
    def op_at(t):
        if tag == "S_p":
            return lambda v: bench.principal(v, t, i, j, l)
        if l:
            raise ValueError("time derivatives are only available for S_p")
        if tag == "S_h":
            return lambda v: bench.heat(v, t, i, j)
        if tag == "S_tr":
            return lambda v: bench.principal_remainder(v, t, i, j)
        if j:
            return lambda v: spectral.diff(bench.apply(tag, v, t), j, bench.L, axis=1)
        return lambda v: bench.apply(tag, v, t)

    norms = np.array([bench.operator_norm(op_at(t)) for t in times])
    fit = fit_decay(times, norms, t_min, t_max, log_correction, floor)
    return fit, norms


# --- real-line quadrature route -----------------------------------------------

def gauss_legendre_panels(a, b, panels, order=16):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    h = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + h[:, None] * x[None, :]).ravel()
    weights = (h[:, None] * w[None, :]).ravel()
    return nodes, weights


def _adjoint_derivative_at(curve, xi, i):
    A = curve.adjoint_at(xi)  # (Q, N, n)
    return spectral.diff(A, i, axis=1) if i else A


def greens_principal(i, x, xt, t, curve, cutoffs, tol=1e-8, panels=8, max_panels=4096):
    """G_p^i(x, xt, t), a complex row n-vector, by adaptive panel quadrature in xi."""
    if cutoffs.chi(t) == 0:
        return np.zeros(curve.n, dtype=complex)
    xi0 = cutoffs.xi0
    if xi0 > curve.xi0 + 1e-12:
        raise ValueError("cutoff support exceeds the computed critical curve")
    lam_spline = CubicSpline(curve.xis, curve.lambda_c)
    frac = np.mod(xt, 1.0)

    def value(p):
        nodes, w = gauss_legendre_panels(-xi0, xi0, p)
        A = _adjoint_derivative_at(curve, nodes, i)
        Ax = spectral.interp_periodic(np.moveaxis(A, 1, 0), frac)  # (Q, n)
        f = cutoffs.rho(nodes) * np.exp(1j * nodes * (x - xt) + lam_spline(nodes) * t)
        return cutoffs.chi(t) / (2 * np.pi) * np.sum((w * f)[:, None] * np.conj(Ax), axis=0)

    prev = value(panels)
    while panels < max_panels:
        panels *= 2
        cur = value(panels)
        if np.max(np.abs(cur - prev)) < tol:
            return cur
        prev = cur
    raise QuadratureError("principal Green's function quadrature did not converge")


class RealLinePrincipal:
    """S_p^i on the real line for data supported in a window of whole periods.

    ``v`` is sampled at x~ = start + j / (N r) over ``P`` periods, where N is
    the curve grid and r = ``refine``; the x~ integral is the trapezoid rule
    and the xi integral uses ``panels`` Gauss-Legendre panels.
    """

    def __init__(self, curve, cutoffs, panels=32, order=16, refine=1):
        self.curve, self.cutoffs = curve, cutoffs
        self.Nq = curve.N * refine
        self.nodes, self.weights = gauss_legendre_panels(-cutoffs.xi0, cutoffs.xi0,
                                                         panels, order)
        self.lam = CubicSpline(curve.xis, curve.lambda_c)(self.nodes)
        self.rho = cutoffs.rho(self.nodes)
        fine = spectral.grid(self.Nq)
        self.adj = []
        for i in range(3):
            A = _adjoint_derivative_at(curve, self.nodes, i)
            if refine != 1:
                A = np.moveaxis(spectral.interp_periodic(np.moveaxis(A, 1, 0), fine), 0, 1)
            self.adj.append(A)

    def sample_points(self, start, periods):
        return start + np.arange(periods * self.Nq) / self.Nq

    def transform(self, v, start, i=0):
        """V_i(xi) = integral of e^{-i xi x~} d^i Phi~_xi(x~)^* v(x~) dx~."""
        Nq, n = self.Nq, self.curve.n
        P = v.shape[0] // Nq
        if P * Nq != v.shape[0] or abs(start - round(start)) > 1e-12:
            raise ValueError("data must cover whole periods starting at an integer")
        w = v.reshape(P, Nq, n)
        p = start + np.arange(P)
        E = np.exp(-1j * np.outer(self.nodes, p))  # (Q, P)
        S = np.einsum("qp,pjc->qjc", E, w)
        ph = np.exp(-1j * np.outer(self.nodes, spectral.grid(Nq)))  # (Q, Nq)
        return np.einsum("qj,qjc,qjc->q", ph, np.conj(self.adj[i]), S) / Nq

    def apply(self, v, start, x, t, i=0, j=0):
        """d_x^j S_p^i(t) v at points ``x``; d_x acts on e^{i xi x} exactly."""
        V = self.transform(v, start, i)
        f = self.weights * self.rho * np.exp(self.lam * t) * V * (1j * self.nodes) ** j
        out = np.exp(1j * np.outer(x, self.nodes)) @ f
        return (self.cutoffs.chi(t) / (2 * np.pi) * out).real


def commutator_check(curve, cutoffs, v_fn, start, periods, times, panels=32,
                     refine=1, out_points=400):
    """Max defect of both commutator identities for S_p^0 on the real line.

    ``v_fn(x, order)`` returns the order-th derivative (0, 1, 2) of the data
    at points x, shape (P, n).  Both sides share the xi nodes, so the defect
    measures the x~ quadrature (resolution ``refine``) and round-off.
    """
    rp = RealLinePrincipal(curve, cutoffs, panels, refine=refine)
    xs = rp.sample_points(start, periods)
    v0, v1, v2 = (v_fn(xs, o) for o in range(3))
    lam = CubicSpline(curve.xis, curve.lambda_c)
    a = float(np.imag(lam(1e-4) - lam(-1e-4)) / 2e-4)
    defects = []
    for t in times:
        hw = 0.5 * periods + 6 * np.sqrt(max(t, 1.0))
        x = start + 0.5 * periods - a * t + np.linspace(-hw, hw, out_points)
        first = (rp.apply(v0, start, x, t, j=1) - rp.apply(v1, start, x, t)
                 - rp.apply(v0, start, x, t, i=1))
        second = (rp.apply(v0, start, x, t, j=2) - rp.apply(v2, start, x, t)
                  - 2 * rp.apply(v0, start, x, t, i=1, j=1) + rp.apply(v0, start, x, t, i=2))
        defects.append(max(np.max(np.abs(first)), np.max(np.abs(second))))
    return float(max(defects)) if defects else 0.0


# --- oscillatory integral bound -------------------------------------------------

def oscillatory_integral(lam, m, chi, x, t, xi0, points_per_radian=4, order=16):
    """Integral over (-xi0, xi0) of e^{t lam(xi)} xi^m chi(xi) e^{i xi x}."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    span = np.max(np.abs(x)) + 1.0
    panels = max(8, int(np.ceil(2 * xi0 * span * points_per_radian / order)))
    nodes, w = gauss_legendre_panels(-xi0, xi0, panels, order)
    f = w * np.exp(t * lam(nodes)) * nodes ** m * chi(nodes)
    return np.exp(1j * np.outer(x, nodes)) @ f


def oscillatory_bound_check(lam, m, chi, xs, ts, xi0, slope_tol=1e-8):
    """max over (x, t) of |integral| / (t^{-(m+1)/2} (1 + (x + a t)^4 / t^2)^{-1}).

    ``lam`` is a callable or a pair (xi samples, lambda samples).  Raises
    HypothesisError if Re lam(xi) <= -mu xi^2 fails for every mu > 0 or
    lam'(0) is not imaginary.
    """
    if not callable(lam):
        xs_l, vals = lam
        lam = CubicSpline(np.asarray(xs_l), np.asarray(vals, dtype=complex))
    probe = np.linspace(-xi0, xi0, 401)
    probe = probe[np.abs(probe) > 1e-9]
    mu = np.min(-np.real(lam(probe)) / probe ** 2)
    if not mu > 0:
        raise HypothesisError("Re lambda(xi) <= -mu xi^2 fails for every mu > 0")
    h = 1e-4
    dlam0 = (lam(h) - lam(-h)) / (2 * h)
    if abs(np.real(dlam0)) > slope_tol + 1e-6 * abs(dlam0):
        raise HypothesisError("lambda'(0) is not purely imaginary")
    a = float(np.imag(dlam0))
    worst = 0.0
    for t in ts:
        if t < 1:
            raise ValueError("the bound is stated for t >= 1")
        val = np.abs(oscillatory_integral(lam, m, chi, xs, t, xi0))
        bound = t ** (-(m + 1) / 2) / (1 + (np.asarray(xs) + a * t) ** 4 / t ** 2)
        worst = max(worst, float(np.max(val / bound)))
    return worst
