"""Wave-train profiles by Newton iteration, continuation in the wavenumber,
and the dispersion data omega'(k0), omega''(k0), d_k phi."""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from . import spectral
from .model import steady_state


class WaveTrainError(RuntimeError):
    pass


class NewtonDivergence(WaveTrainError):
    pass


class ConstantCollapse(WaveTrainError):
    """Newton landed on (or started from) a spatially constant state."""


class ContinuationFailure(WaveTrainError):
    pass


class AlignmentError(WaveTrainError):
    pass


@dataclass
class WaveProfile:
    k: float
    omega: float
    phi: np.ndarray
    residual: float = np.nan
    history: list = field(default_factory=list)

    @property
    def N(self):
        return self.phi.shape[0]

    @property
    def grid(self):
        return spectral.grid(self.N)

    @property
    def dphi(self):
        return spectral.diff(self.phi, 1)

    @property
    def d2phi(self):
        return spectral.diff(self.phi, 2)

    @property
    def d3phi(self):
        return spectral.diff(self.phi, 3)

    def shifted(self, s):
        """Profile of phi(. + s)."""
        return WaveProfile(self.k, self.omega, spectral.shift_periodic(self.phi, s),
                           self.residual, list(self.history))

    def resampled(self, N):
        z = spectral.grid(N)
        return WaveProfile(self.k, self.omega, spectral.interp_periodic(self.phi, z),
                           self.residual, list(self.history))


def profile_residual(sys, k, omega, phi):
    """k^2 D phi'' + omega phi' + f(phi) on the grid."""
    return (k * k * spectral.diff(phi, 2) @ sys.D.T
            + omega * spectral.diff(phi, 1) + sys.f(phi))


def _newton_matrix(sys, k, omega, phi, D1, D2):
    N, n = phi.shape
    J = k * k * np.kron(D2, sys.D) + omega * np.kron(D1, np.eye(n))
    Jf = sys.df(phi)
    for i in range(N):
        J[i * n:(i + 1) * n, i * n:(i + 1) * n] += Jf[i]
    return J


def _is_constant(phi, tol):
    return np.max(np.ptp(phi, axis=0)) < tol


def solve_wavetrain(sys, k, guess, omega=None, tol=1e-10, reference=None,
                    max_iter=60, const_tol=1e-6):
    """Newton solve for (phi, omega) of k^2 D phi'' + omega phi' + f(phi) = 0.

    ``guess`` is a WaveProfile or an (N, n) array of samples.  The system is
    closed by <ref', phi - ref> = 0 against ``reference`` (default: the guess).
    """
    if isinstance(guess, WaveProfile):
        phi = np.array(guess.phi, dtype=float)
        if omega is None:
            omega = guess.omega
    else:
        phi = np.array(guess, dtype=float)
    if omega is None:
        omega = 0.0
    if phi.ndim != 2 or phi.shape[1] != sys.n:
        raise ValueError(f"guess must have shape (N, {sys.n})")
    if _is_constant(phi, const_tol):
        raise ConstantCollapse("initial guess is spatially constant")
    ref = phi.copy() if reference is None else np.asarray(reference, dtype=float)
    if isinstance(reference, WaveProfile):
        ref = reference.phi
    dref = spectral.diff(ref, 1)
    N, n = phi.shape
    D1 = spectral.diff_matrix(N, 1)
    D2 = spectral.diff_matrix(N, 2)
    omega = float(omega)

    def full_residual(phi, omega):
        F = profile_residual(sys, k, omega, phi)
        g = np.sum(dref * (phi - ref)) / N
        return F, g

    F, g = full_residual(phi, omega)
    history = [max(np.max(np.abs(F)), abs(g))]
    for _ in range(max_iter):
        if history[-1] < tol:
            break
        J = np.zeros((N * n + 1, N * n + 1))
        J[:N * n, :N * n] = _newton_matrix(sys, k, omega, phi, D1, D2)
        J[:N * n, -1] = spectral.diff(phi, 1).ravel()
        J[-1, :N * n] = dref.ravel() / N
        rhs = -np.concatenate([F.ravel(), [g]])
        try:
            step = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError as exc:
            raise NewtonDivergence(f"singular Newton matrix at k={k}") from exc
        # backtracking on the sup-norm residual
        lam = 1.0
        while True:
            phi_new = phi + lam * step[:-1].reshape(N, n)
            omega_new = omega + lam * step[-1]
            F_new, g_new = full_residual(phi_new, omega_new)
            r_new = max(np.max(np.abs(F_new)), abs(g_new))
            if np.isfinite(r_new) and (r_new < history[-1] or lam < 1e-3):
                break
            lam *= 0.5
        phi, omega, F, g = phi_new, omega_new, F_new, g_new
        history.append(r_new)
        if not np.isfinite(r_new):
            break
    if not history[-1] < tol:
        raise NewtonDivergence(
            f"Newton did not converge at k={k}: residual {history[-1]:.3e}")
    if _is_constant(phi, const_tol):
        raise ConstantCollapse(f"Newton collapsed to a constant state at k={k}")
    return WaveProfile(float(k), float(omega), phi, history[-1], history)


def harmonic_guess(N, center, cos_vec, sin_vec):
    z = spectral.grid(N)[:, None]
    c = np.cos(2 * np.pi * z)
    s = np.sin(2 * np.pi * z)
    return np.asarray(center)[None, :] + c * np.asarray(cos_vec) + s * np.asarray(sin_vec)


def rotating_wave_guess(N, amplitude):
    """amplitude * (cos 2 pi z, sin 2 pi z): the roll of the real GL equation."""
    return harmonic_guess(N, [0.0, 0.0], [amplitude, 0.0], [0.0, amplitude])


def hopf_guess(sys, N, amplitude):
    """Single-harmonic guess from the oscillatory eigenpair at the steady state.

    Returns ``(phi, omega)``; omega is the linear frequency in cycles per unit time.
    """
    ubar = steady_state(sys)
    lam, vecs = np.linalg.eig(sys.df(ubar))
    i = int(np.argmax(lam.imag))
    if lam[i].imag <= 0:
        raise WaveTrainError("steady state has no oscillatory eigenvalue")
    e = vecs[:, i] / np.max(np.abs(vecs[:, i]))
    # u(0, t) = phi(-omega t) with u ~ Re(e exp(i Omega t))
    phi = harmonic_guess(N, ubar, amplitude * e.real, amplitude * e.imag)
    return phi, lam[i].imag / (2 * np.pi)


def limit_cycle_guess(sys, N, t_transient=200.0, u0=None):
    """Profile guess from the kinetic limit cycle u' = f(u) (the k -> 0 wave).

    Returns ``(phi, omega)`` with phi(zeta) = u(-zeta * period) so that the
    spatially homogeneous oscillation reads phi(k x - omega t) at k = 0.
    """
    ubar = steady_state(sys)
    start = ubar + 0.1 if u0 is None else np.asarray(u0, dtype=float)
    rhs = lambda t, u: sys.f(u)
    sol = solve_ivp(rhs, (0, t_transient), start, rtol=1e-10, atol=1e-12)
    u1 = sol.y[:, -1]
    # period from successive upward crossings of the first component's mean level
    sol = solve_ivp(rhs, (0, t_transient), u1, rtol=1e-10, atol=1e-12, dense_output=True)
    ts = np.linspace(0, t_transient, 200001)
    x = sol.sol(ts)[0]
    level = 0.5 * (x.max() + x.min())
    up = np.nonzero((x[:-1] < level) & (x[1:] >= level))[0]
    if up.size < 3:
        raise WaveTrainError("no sustained kinetic oscillation")
    tc = ts[up] + (level - x[up]) / (x[up + 1] - x[up]) * (ts[1] - ts[0])
    period = float(np.mean(np.diff(tc[-3:])))
    t0 = tc[-3]
    z = spectral.grid(N)
    phi = sol.sol(t0 + period - z * period).T
    return phi, 1.0 / period


# --- families ----------------------------------------------------------------

@dataclass
class WaveFamily:
    base: WaveProfile
    ks: np.ndarray
    samples: list
    failure_index: int = None
    gauge_shift: float = 0.0
    dk_phi: np.ndarray = None
    dzk_phi: np.ndarray = None
    dzzk_phi: np.ndarray = None

    @property
    def omega_of_k(self):
        return np.array([s.omega for s in self.samples])

    @property
    def k0(self):
        return self.base.k

    @property
    def base_index(self):
        return int(np.argmin(np.abs(self.ks - self.base.k)))

    def profile(self, k):
        """Gauge-consistent profile phi(.; k) on the base grid."""
        phis = np.array([s.phi for s in self.samples])
        spline = CubicSpline(self.ks, phis, axis=0)
        phi = spline(k)
        if self.gauge_shift:
            phi = spectral.shift_periodic(phi, self.gauge_shift * (k - self.k0))
        return phi

    def omega(self, k):
        return CubicSpline(self.ks, self.omega_of_k)(k)


def continue_family(sys, base, dk, half_count, tol=1e-10, align_tol=1e-6, jump_tol=0.2):
    """Natural-parameter continuation to k0 +- j dk, j <= half_count.

    Every member is pinned by the phase condition against the base profile, so
    the family is aligned by construction.  On failure the partial family is
    returned with ``failure_index`` set to the first failed offset j.
    """
    dref = base.dphi
    N = base.N
    members = {0: base}
    failure = None
    for sign in (1, -1):
        prev, prev2 = base, None
        for j in range(1, half_count + 1):
            k = base.k + sign * j * dk
            if prev2 is None:
                guess_phi, guess_om = prev.phi, prev.omega
            else:
                guess_phi = 2 * prev.phi - prev2.phi
                guess_om = 2 * prev.omega - prev2.omega
            try:
                w = solve_wavetrain(sys, k, guess_phi, omega=guess_om, tol=tol,
                                    reference=base.phi)
            except WaveTrainError:
                failure = sign * j if failure is None else failure
                break
            align = abs(np.sum(dref * (w.phi - base.phi)) / N)
            jump = np.max(np.abs(w.phi - prev.phi))
            if align > align_tol or jump > jump_tol:
                failure = sign * j if failure is None else failure
                break
            members[sign * j] = w
            prev2, prev = prev, w
    offsets = sorted(members)
    ks = np.array([base.k + j * dk for j in offsets])
    ks[offsets.index(0)] = base.k
    return WaveFamily(base, ks, [members[j] for j in offsets], failure)


def _centered(values, ks, k0, order):
    """Richardson-extrapolated centered differences of tabulated values."""
    values = np.asarray(values)
    i0 = int(np.argmin(np.abs(ks - k0)))
    h = ks[i0 + 1] - ks[i0] if i0 + 1 < len(ks) else None
    if h is None or i0 < 2 or i0 + 2 >= len(ks):
        raise ValueError("need at least two symmetric samples on each side of k0")
    f0, fp1, fm1, fp2, fm2 = (values[i0], values[i0 + 1], values[i0 - 1],
                              values[i0 + 2], values[i0 - 2])
    if order == 1:
        d_h = (fp1 - fm1) / (2 * h)
        d_2h = (fp2 - fm2) / (4 * h)
    else:
        d_h = (fp1 - 2 * f0 + fm1) / h**2
        d_2h = (fp2 - 2 * f0 + fm2) / (4 * h**2)
    rich = (4 * d_h - d_2h) / 3
    return rich, d_h, d_2h


@dataclass
class DispersionDerivative:
    value: float
    error: float
    narrow: float
    wide: float


def dispersion_derivatives(family):
    """(omega'(k0), omega''(k0)) by Richardson-extrapolated centered differences."""
    out = []
    for order in (1, 2):
        rich, d_h, d_2h = _centered(family.omega_of_k, family.ks, family.k0, order)
        out.append(DispersionDerivative(float(rich), float(abs(d_h - d_2h)),
                                        float(d_h), float(d_2h)))
    return tuple(out)


def raw_dk_phi(family):
    phis = np.array([s.phi for s in family.samples])
    rich, _, _ = _centered(phis, family.ks, family.k0, 1)
    return rich


def k_derivatives_of_profile(family, adjoint0, gauge=1.0):
    """Gauge-normalised (d_k phi, d_zk phi, d_zzk phi) at k0.

    The raw difference quotient is corrected by c * phi0' with
    c = gauge - <adj0, raw>, so that <adj0, d_k phi> = gauge.  ``adjoint0``
    must satisfy <adj0, phi0'> = 1.
    """
    phi0p = family.base.dphi
    if abs(spectral.inner(adjoint0, phi0p) - 1) > 1e-8:
        raise ValueError("adjoint eigenfunction is not normalised against phi0'")
    raw = raw_dk_phi(family)
    c = float(np.real(gauge - spectral.inner(adjoint0, raw)))
    dk = raw + c * phi0p
    family.gauge_shift = c
    family.dk_phi = dk
    family.dzk_phi = spectral.diff(dk, 1)
    family.dzzk_phi = spectral.diff(dk, 2)
    return family.dk_phi, family.dzk_phi, family.dzzk_phi
