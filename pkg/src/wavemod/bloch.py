"""Bloch operators of a wave train, spectral certification, the critical curve
lambda_c(xi) and the modulation coefficients a, d, nu."""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.interpolate import CubicSpline

from . import spectral


class SpectralError(RuntimeError):
    pass


class GapCollapse(SpectralError):
    pass


class ContinuationAmbiguity(SpectralError):
    pass


# --- operators ---------------------------------------------------------------

def bloch_parts(sys, wave):
    """Dense (L0, L1, L2) with L(xi) = L0 + i xi L1 - xi^2 L2 (kron layout i*n + c)."""
    N, n = wave.phi.shape
    k, om = wave.k, wave.omega
    D1 = spectral.diff_matrix(N, 1)
    D2 = spectral.diff_matrix(N, 2)
    I_n = np.eye(n)
    L0 = k * k * np.kron(D2, sys.D) + om * np.kron(D1, I_n)
    L0 += scipy.linalg.block_diag(*sys.df(wave.phi))
    L1 = 2 * k * k * np.kron(D1, sys.D) + om * np.eye(N * n)
    L2 = k * k * np.kron(np.eye(N), sys.D)
    return L0, L1, L2


@dataclass
class BlochMatrix:
    xi: float
    matrix: np.ndarray

    @property
    def size(self):
        return self.matrix.shape[0]


def assemble_bloch(sys, wave, xi, N=None):
    if abs(xi) > np.pi + 1e-12:
        raise ValueError("Bloch frequency must lie in [-pi, pi]")
    if N is not None and N != wave.N:
        wave = wave.resampled(N)
    L0, L1, L2 = bloch_parts(sys, wave)
    return BlochMatrix(float(xi), L0 + 1j * xi * L1 - xi * xi * L2)


def _sorted_eigvals(M):
    lam = np.linalg.eigvals(M)
    return lam[np.lexsort((lam.imag, -lam.real))]


def bloch_spectrum(sys, wave, xi, N=None):
    """Eigenvalues of L(xi), rightmost first."""
    return _sorted_eigvals(assemble_bloch(sys, wave, xi, N).matrix)


# --- D1-D3 -------------------------------------------------------------------

@dataclass
class StabilityReport:
    d1_holds: bool
    d3_holds: bool
    d2_theta: float
    d2_witness: float
    spectral_margin: float
    grid_resolutions: tuple
    xis: np.ndarray = field(repr=False, default=None)
    max_real: np.ndarray = field(repr=False, default=None)
    zero_eigenvalue: complex = 0j
    failed_xi: float = None

    @property
    def stable(self):
        return bool(self.d1_holds and self.d3_holds and self.d2_theta > 0)

    def to_dict(self):
        return {
            "d1_holds": bool(self.d1_holds),
            "d2_theta": float(self.d2_theta),
            "d2_witness": None if self.d2_witness is None else float(self.d2_witness),
            "d3_holds": bool(self.d3_holds),
            "stable": self.stable,
            "spectral_margin": float(self.spectral_margin),
            "grid_resolutions": list(self.grid_resolutions),
            "zero_eigenvalue": [float(self.zero_eigenvalue.real), float(self.zero_eigenvalue.imag)],
        }


def stability_report(sys, wave, xi_count=101, N=None, radius=1e-6, slack=1e-10,
                     min_overlap=1e-3):
    """Sweep L(xi) over xi in [0, pi] (the negative half follows by conjugation)."""
    if N is not None and N != wave.N:
        wave = wave.resampled(N)
    L0, L1, L2 = bloch_parts(sys, wave)
    xis = np.linspace(0.0, np.pi, xi_count)
    max_real = np.empty(xi_count)

    lam, vl, vr = scipy.linalg.eig(L0, left=True, right=True)
    near = np.abs(lam) < radius
    i0 = int(np.argmin(np.abs(lam)))
    overlap = abs(np.vdot(vl[:, i0], vr[:, i0])) / (
        np.linalg.norm(vl[:, i0]) * np.linalg.norm(vr[:, i0]))
    d3 = bool(near.sum() == 1 and overlap > min_overlap)
    rest = np.delete(lam, i0)
    d1 = bool(np.all(rest.real < 0))
    max_real[0] = rest.real.max()

    for j in range(1, xi_count):
        xi = xis[j]
        try:
            ev = np.linalg.eigvals(L0 + 1j * xi * L1 - xi * xi * L2)
        except np.linalg.LinAlgError:
            return StabilityReport(d1, d3, -np.inf, xi, np.inf, (xi_count, wave.N),
                                   xis, max_real, lam[i0], failed_xi=xi)
        max_real[j] = ev.real.max()
    d1 = d1 and bool(np.all(max_real[1:] < 0))

    ratios = -(max_real[1:] - slack) / xis[1:] ** 2
    jmin = int(np.argmin(ratios))
    theta = float(ratios[jmin])
    witness = float(xis[1:][jmin]) if theta <= 0 else None
    margin = float(np.max(max_real[1:] + theta * xis[1:] ** 2))
    return StabilityReport(d1, d3, theta, witness, margin, (xi_count, wave.N),
                           xis, max_real, complex(lam[i0]))


# --- critical curve ----------------------------------------------------------

@dataclass
class SpectralCurve:
    xis: np.ndarray
    lambda_c: np.ndarray
    Phi: np.ndarray
    Phi_adj: np.ndarray
    xi0: float
    gap: np.ndarray = None
    k0: float = None
    N: int = None
    n: int = None

    @property
    def adjoint0(self):
        i = int(np.argmin(np.abs(self.xis)))
        return self.Phi_adj[i].real

    @property
    def Phi0(self):
        i = int(np.argmin(np.abs(self.xis)))
        return self.Phi[i]

    def _spline(self, values):
        return CubicSpline(self.xis, values, axis=0)

    def lambda_at(self, xi):
        return self._spline(self.lambda_c)(xi)

    def adjoint_at(self, xi):
        return self._spline(self.Phi_adj)(xi)

    def eigenfunction_at(self, xi):
        return self._spline(self.Phi)(xi)


def _left_normalise(v_left, v_right, N):
    """Scale the left vector so that <left, right> = 1 with <u,v> = sum conj(u) v / N."""
    s = np.vdot(v_left, v_right) / N
    return v_left / np.conj(s)


def critical_eigenpair(M, target, adj0, k, xi, N, gauge=1.0, ambiguity_tol=1e-9):
    """Eigenpair of the Bloch matrix ``M`` nearest to ``target``, normalised.

    Returns (lambda, Phi, Phi~, gap) with <adj0, Phi> = 1 + i k xi gauge and
    <Phi~, Phi> = 1; ``adj0`` is the real adjoint kernel of L(0), flattened,
    and N the number of grid points per period.
    """
    lam, vl, vr = scipy.linalg.eig(M, left=True, right=True)
    dist = np.abs(lam - target)
    order = np.argsort(dist)
    i = order[0]
    if dist[order[1]] - dist[i] < ambiguity_tol:
        raise ContinuationAmbiguity(f"two eigenvalues equidistant at xi={xi}")
    gap = float(np.min(np.abs(np.delete(lam, i) - lam[i])))
    v = vr[:, i]
    v = v * (1 + 1j * k * xi * gauge) / (np.vdot(adj0, v) / N)
    w = _left_normalise(vl[:, i], v, N)
    return complex(lam[i]), v, w, gap


def critical_curve(sys, wave, xi0_request, xi_count=41, N=None, gap_floor=0.1,
                   gauge=1.0, ambiguity_tol=1e-9):
    """Continue the eigenpair through 0 of L(0) over a symmetric grid in xi.

    Eigenfunctions are scaled so that <Phi~_0, Phi_xi> = 1 + i k0 xi * gauge,
    the analytic normalisation compatible with Phi_xi = phi0' + i k0 xi d_k phi
    + O(xi^2); adjoints then satisfy <Phi~_xi, Phi_xi> = 1.
    """
    if N is not None and N != wave.N:
        wave = wave.resampled(N)
    if xi_count % 2 == 0:
        xi_count += 1
    Nw, n = wave.phi.shape
    L0, L1, L2 = bloch_parts(sys, wave)
    half = np.linspace(0.0, xi0_request, xi_count // 2 + 1)
    phi0p = wave.dphi.ravel()

    lam, vl, vr = scipy.linalg.eig(L0, left=True, right=True)
    order = np.argsort(np.abs(lam))
    i0 = order[0]
    gap0 = abs(lam[order[1]] - lam[i0])
    if gap0 < 1e-6:
        raise GapCollapse("zero eigenvalue of L(0) is not isolated")
    r = vr[:, i0]
    r = r * (np.vdot(r, phi0p) / np.vdot(r, r))
    r_adj = _left_normalise(vl[:, i0], phi0p, Nw)
    # the adjoint kernel of a real matrix is real up to a phase
    r_adj = r_adj.real
    adj0 = r_adj.copy()

    lams = [complex(lam[i0])]
    Phis = [r.astype(complex)]
    adjs = [r_adj.astype(complex)]
    gaps = [gap0]
    for xi in half[1:]:
        M = L0 + 1j * xi * L1 - xi * xi * L2
        # extrapolate linearly from the last two points for the match
        target = lams[-1] if len(lams) < 2 else 2 * lams[-1] - lams[-2]
        lam_i, v, w, gap = critical_eigenpair(M, target, adj0, wave.k, xi, Nw,
                                              gauge, ambiguity_tol)
        if gap < gap_floor * gap0:
            break
        lams.append(lam_i)
        Phis.append(v)
        adjs.append(w)
        gaps.append(gap)
    m = len(lams)
    half = half[:m]
    xis = np.concatenate([-half[:0:-1], half])
    lam_c = np.array(lams)
    lam_c = np.concatenate([np.conj(lam_c[:0:-1]), lam_c])
    P = np.array(Phis)
    P = np.concatenate([np.conj(P[:0:-1]), P])
    A = np.array(adjs)
    A = np.concatenate([np.conj(A[:0:-1]), A])
    g = np.array(gaps)
    g = np.concatenate([g[:0:-1], g])
    shape = (len(xis), Nw, n)
    return SpectralCurve(xis, lam_c, P.reshape(shape), A.reshape(shape),
                         float(half[-1]), g, wave.k, Nw, n)


def curve_residuals(sys, wave, curve):
    """Max relative residuals of the right and adjoint eigenpairs along the curve."""
    L0, L1, L2 = bloch_parts(sys, wave)
    worst_r = worst_l = 0.0
    for xi, lam, P, A in zip(curve.xis, curve.lambda_c, curve.Phi, curve.Phi_adj):
        M = L0 + 1j * xi * L1 - xi * xi * L2
        p, a = P.ravel(), A.ravel()
        worst_r = max(worst_r, np.linalg.norm(M @ p - lam * p) / np.linalg.norm(p))
        worst_l = max(worst_l, np.linalg.norm(M.conj().T @ a - np.conj(lam) * a)
                      / np.linalg.norm(a))
    return worst_r, worst_l


# --- coefficients ------------------------------------------------------------

@dataclass
class RouteValue:
    route_a: float
    route_b: float

    @property
    def value(self):
        return self.route_b

    @property
    def discrepancy(self):
        return abs(self.route_a - self.route_b)

    @property
    def relative_discrepancy(self):
        scale = max(abs(self.route_a), abs(self.route_b))
        return self.discrepancy / scale if scale > 0 else 0.0


@dataclass
class ModulationCoefficients:
    a: RouteValue
    d: RouteValue
    nu: RouteValue
    f_p: np.ndarray = None
    A_h_fp: np.ndarray = None
    d_gauge_term: float = 0.0
    fit_window: float = None

    def to_dict(self):
        out = {}
        for name in ("a", "d", "nu"):
            rv = getattr(self, name)
            out[name] = {"value": rv.value, "route_a": rv.route_a, "route_b": rv.route_b,
                         "discrepancy": rv.discrepancy}
        out["d_gauge_term"] = self.d_gauge_term
        out["fit_window"] = self.fit_window
        return out


def fit_critical_curve(curve, window=None, degree=3):
    """Least-squares fit of lambda_c near 0: Im odd (a xi + ...), Re even (-d xi^2 + ...).

    Returns (a, d).  Points are weighted uniformly inside ``window``.
    """
    if window is None:
        window = curve.xi0
    mask = (curve.xis > 0) & (curve.xis <= window + 1e-15)
    xi = curve.xis[mask]
    lam = curve.lambda_c[mask]
    if xi.size < degree:
        raise ValueError("fit window contains too few curve points")
    odd = np.column_stack([xi ** (2 * j + 1) for j in range(degree)])
    even = np.column_stack([xi ** (2 * j + 2) for j in range(degree)])
    ca = np.linalg.lstsq(odd, lam.imag, rcond=None)[0]
    cd = np.linalg.lstsq(even, lam.real, rcond=None)[0]
    return float(ca[0]), float(-cd[0])


def d_of_profile(sys, k, adjoint0, dphi, dzk_phi, omega1=0.0, dk_phi=None):
    """k^2 <Phi~0, D phi' + 2 k D d_zk phi>, plus k^2 omega' <Phi~0, d_k phi> if given.

    The second term makes the value independent of the choice of d_k phi
    modulo multiples of phi'; it vanishes in the gauge <Phi~0, d_k phi> = 0.
    """
    base = k * k * spectral.inner(adjoint0, dphi @ sys.D.T + 2 * k * dzk_phi @ sys.D.T)
    extra = 0.0
    if dk_phi is not None:
        extra = k * k * omega1 * spectral.inner(adjoint0, dk_phi)
    return float(np.real(base)), float(np.real(extra))


def adjoint_kernel(sys, wave):
    """Real left null vector Phi~0 of L(0), normalised so that <Phi~0, phi0'> = 1."""
    L0, _, _ = bloch_parts(sys, wave)
    lam, vl = scipy.linalg.eig(L0, left=True, right=False)
    i = int(np.argmin(np.abs(lam)))
    adj = _left_normalise(vl[:, i], wave.dphi.ravel(), wave.N).real
    return adj.reshape(wave.phi.shape)


def diffusion_table(sys, family):
    """(ks, d(k)) at every interior sample of ``family``.

    d(k) is the gauge-invariant diffusion coefficient of the wave train with
    wavenumber k; d_k phi and omega' come from centred differences of the
    neighbouring samples, so the raw (ungauged) derivative is sufficient.
    """
    ks = np.asarray(family.ks)
    if len(ks) < 3:
        raise ValueError("need at least three family samples")
    omegas = family.omega_of_k
    out = []
    for i in range(1, len(ks) - 1):
        w = family.samples[i]
        h = ks[i + 1] - ks[i - 1]
        dk = (family.samples[i + 1].phi - family.samples[i - 1].phi) / h
        om1 = (omegas[i + 1] - omegas[i - 1]) / h
        adj = adjoint_kernel(sys, w)
        base, extra = d_of_profile(sys, w.k, adj, w.dphi, spectral.diff(dk, 1), om1, dk)
        out.append(base + extra)
    return ks[1:-1].copy(), np.array(out)


def compute_fp(sys, family, adjoint0, omega1):
    """f_p = 1/2 f''(phi0)(d_k phi, d_k phi) + omega' d_zk phi + D(phi0'' + 2 k0 d_zzk phi).

    Returns the samples and k0^2 <Phi~0, f_p>.
    """
    if family.dk_phi is None:
        raise ValueError("family has no gauge-normalised k-derivatives")
    phi0 = family.base.phi
    k0 = family.k0
    fp = (0.5 * sys.d2f(phi0, family.dk_phi, family.dk_phi)
          + omega1 * family.dzk_phi
          + (family.base.d2phi + 2 * k0 * family.dzzk_phi) @ sys.D.T)
    return fp, float(np.real(k0 * k0 * spectral.inner(adjoint0, fp)))


def antiderivative_operator(g, adjoint0):
    """Zero-mean periodic antiderivative of the zero-mean part of Phi~0^* g."""
    h = np.sum(np.conj(adjoint0) * g, axis=-1)
    N = h.shape[0]
    c = np.fft.fft(h) / N
    j = np.fft.fftfreq(N, d=1.0 / N)
    m = np.zeros(N, dtype=complex)
    nz = j != 0
    m[nz] = 1.0 / (2j * np.pi * j[nz])
    if N % 2 == 0:
        m[N // 2] = 0.0
    out = np.fft.ifft(m * c) * N
    if np.isrealobj(adjoint0) and np.isrealobj(g):
        return out.real
    return out


def antiderivative_bound_constant(adjoint0):
    """C with ||A_h(g)||_inf <= C ||g||_L2 from Cauchy-Schwarz on the Fourier series."""
    sup = np.max(np.linalg.norm(adjoint0, axis=-1))
    return float(sup * np.sqrt(2 * np.pi**2 / 6 / (4 * np.pi**2)))


def modulation_coefficients(sys, curve, family, adjoint0, omega1, omega2,
                            fit_window=None, tol=1e-3):
    """Both routes for a, d, nu.

    Route A takes a, d from the critical curve and nu from k0^2 <Phi~0, f_p>;
    route B uses omega', omega'' and the inner-product formula for d.
    """
    base = family.base
    k0 = base.k
    a_fit, d_fit = fit_critical_curve(curve, fit_window)
    a_formula = base.omega - k0 * omega1
    d_base, d_extra = d_of_profile(sys, k0, adjoint0, base.dphi, family.dzk_phi,
                                   omega1, family.dk_phi)
    fp, nu_fp = compute_fp(sys, family, adjoint0, omega1)
    nu_disp = -0.5 * k0 * k0 * omega2
    return ModulationCoefficients(
        RouteValue(a_fit, a_formula),
        RouteValue(d_fit, d_base + d_extra),
        RouteValue(nu_fp, nu_disp),
        fp, np.fft.fft(antiderivative_operator(fp, adjoint0)) / fp.shape[0],
        d_extra, fit_window if fit_window is not None else curve.xi0)
