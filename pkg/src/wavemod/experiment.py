"""Nonlinear simulations of perturbed wave trains and their phase diagnostics.

Everything lives in the comoving frame zeta = k0 x - omega0 t, where the
wave train is the stationary solution of

    u_t = k0^2 D u_zz + omega0 u_z + f(u),

on a torus of L periods.  The phase gamma(zeta, t) is extracted from snapshots
by demodulation plus a windowed orbit-distance Newton solve, and the decay of
the modulated quantities is measured by log-log fits.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import spectral
from .fitting import fit_decay
from .phase_dynamics import erf_paper, hj_solve
from .stepping import ETDRK4, rfft_wavenumbers


class SmallnessError(ValueError):
    pass


class ExtractionError(RuntimeError):
    pass


class InvertibilityError(ValueError):
    pass


class BlowUpError(RuntimeError):
    pass


# --- torus helpers ----------------------------------------------------------

def torus_grid(L, N):
    """Grid on [-L/2, L/2) with N points per period."""
    return -0.5 * L + np.arange(L * N) / N


def profile_at(profile, z):
    """Trigonometric interpolant of one period of samples at arbitrary points."""
    return spectral.interp_periodic(profile, np.mod(z, 1.0))


def tile_profile(profile, L, N=None):
    """One-period samples repeated over the torus (resampled to N points per period)."""
    if N is not None and N != profile.shape[0]:
        profile = spectral.interp_periodic(profile, spectral.grid(N))
    zeta0 = -0.5 * L
    if abs(zeta0 - round(zeta0)) > 1e-12:
        profile = spectral.shift_periodic(profile, zeta0 - np.floor(zeta0))
    reps = (L,) + (1,) * (profile.ndim - 1)
    return np.tile(profile, reps)


def taylor_shift(u, s, L, tol=1e-15, max_terms=60):
    """Samples of u(zeta + s(zeta)) for band-limited torus samples u (axis 0).

    Sums the Taylor series with spectral derivatives; valid for shifts much
    smaller than the domain, which is the regime of every phase modulation here.
    Round-off level Fourier modes are dropped first, since repeated
    differentiation would amplify them.
    """
    u = np.asarray(u, dtype=float)
    s = np.asarray(s, dtype=float)
    sc = s.reshape(s.shape + (1,) * (u.ndim - 1))
    scale = max(np.max(np.abs(u)), 1e-300)
    uh = np.fft.fft(u, axis=0)
    uh[np.abs(uh) < 1e-13 * np.max(np.abs(uh))] = 0.0
    ik = (1j * spectral.wavenumbers(u.shape[0], L)).reshape((-1,) + (1,) * (u.ndim - 1))
    if u.shape[0] % 2 == 0:
        ik[u.shape[0] // 2] = 0.0
    out = np.fft.ifft(uh, axis=0).real
    coef = np.ones_like(sc)
    small = 0
    for m in range(1, max_terms + 1):
        uh = uh * ik
        coef = coef * sc / m
        term = coef * np.fft.ifft(uh, axis=0).real
        out += term
        small = small + 1 if np.max(np.abs(term)) < tol * scale else 0
        if small >= 2:
            return out
    raise ExtractionError("Taylor shift did not converge; shift too large")


def w2inf_norm(v, L):
    """max over j <= 2 of sup |d^j v| on the torus."""
    return float(max(np.max(np.abs(spectral.diff(v, j, L, axis=0))) if j else np.max(np.abs(v))
                     for j in range(3)))


# --- initial data -------------------------------------------------------------

@dataclass
class PerturbationSpec:
    """Initial perturbation of the wave train.

    kind: phase-front, wavenumber-modulated, additive-random or additive-custom.
    Phase kinds rise from gamma_minus to gamma_plus across ``width`` at -L/4
    and fall back at +L/4, so the data are L-periodic.  ``target_E0`` rescales
    the jump (phase kinds) or amplitude (additive kinds) to that W^{2,inf} norm.
    """

    kind: str = "phase-front"
    amplitude: float = 0.0
    gamma_minus: float = 0.0
    gamma_plus: float = 0.0
    width: float = 0.1
    seed: int = 0
    smoothing: float = 0.5
    target_E0: float = None
    custom: object = None

    KINDS = ("phase-front", "wavenumber-modulated", "additive-random", "additive-custom")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.width <= 0 or self.smoothing <= 0:
            raise ValueError("width and smoothing must be positive")


@dataclass
class InitialData:
    x: np.ndarray
    u0: np.ndarray
    v0: np.ndarray
    gamma0: np.ndarray
    E0: float
    L: int
    N: int
    centres: tuple = ()


def phase_ramp(x, L, gamma_minus, gamma_plus, width):
    """Periodic plateau profile: gamma_- outside, gamma_+ on (-L/4, L/4)."""
    jump = gamma_plus - gamma_minus
    up = erf_paper((x + 0.25 * L) / width)
    down = erf_paper((x - 0.25 * L) / width)
    return gamma_minus + jump * (up - down)


def phase_ramp_derivative(x, L, gamma_minus, gamma_plus, width):
    jump = gamma_plus - gamma_minus
    g = lambda y: np.exp(-y ** 2 / 4) / np.sqrt(4 * np.pi) / width
    return jump * (g((x + 0.25 * L) / width) - g((x - 0.25 * L) / width))


class WavenumberModel:
    """phi(z; k0 (1 + kappa)) to second order in kappa.

    The k-derivatives are taken from the continuation samples, which are pinned
    by <phi0', phi - phi0> = 0.  That is the normalisation in which the
    orbit-distance phase of ``PhaseExtractor`` carries no O(gamma_z) translation.
    """

    def __init__(self, phi0, dk_phi, dkk_phi, k0):
        self.phi0, self.dk_phi, self.dkk_phi, self.k0 = phi0, dk_phi, dkk_phi, k0

    @classmethod
    def from_family(cls, family):
        i = family.base_index
        P = [s.phi for s in family.samples]
        h = family.ks[i + 1] - family.ks[i]
        if i < 1 or i + 1 >= len(P):
            raise ValueError("family needs samples on both sides of k0")
        d1 = (P[i + 1] - P[i - 1]) / (2 * h)
        d2 = (P[i + 1] - 2 * P[i] + P[i - 1]) / h ** 2
        if i >= 2 and i + 2 < len(P):
            # Richardson with the +-2h samples
            d1 = (4 * d1 - (P[i + 2] - P[i - 2]) / (4 * h)) / 3
            d2 = (4 * d2 - (P[i + 2] - 2 * P[i] + P[i - 2]) / (4 * h ** 2)) / 3
        return cls(family.base.phi, d1, d2, family.k0)

    def __call__(self, z, kappa):
        dk = self.k0 * np.asarray(kappa)[..., None]
        return (profile_at(self.phi0, z) + dk * profile_at(self.dk_phi, z)
                + 0.5 * dk ** 2 * profile_at(self.dkk_phi, z))


def build_initial_data(sys, wave, spec, L, N=None, family=None, smallness=0.1):
    """u(., 0) on the torus of L periods with N points per period, plus v0 and E0."""
    N = N or wave.N
    x = torus_grid(L, N)
    phi0 = tile_profile(wave.phi, L, N)
    if spec.kind == "wavenumber-modulated" and family is None:
        raise ValueError("wavenumber-modulated data need a wave family")
    model = WavenumberModel.from_family(family) if spec.kind == "wavenumber-modulated" else None

    def make(scale):
        gamma0 = np.zeros_like(x)
        if spec.kind in ("phase-front", "wavenumber-modulated"):
            gm, gp = scale * spec.gamma_minus, scale * spec.gamma_plus
            gamma0 = phase_ramp(x, L, gm, gp, spec.width)
            if spec.kind == "phase-front":
                u0 = profile_at(wave.phi, x + gamma0)
            else:
                kappa = phase_ramp_derivative(x, L, gm, gp, spec.width)
                u0 = model(x + gamma0, kappa)
        elif spec.kind == "additive-random":
            rng = np.random.default_rng(spec.seed)
            noise = rng.standard_normal(phi0.shape)
            kap = rfft_wavenumbers(x.size, L)
            filt = np.exp(-0.5 * (kap * spec.smoothing) ** 2)[:, None]
            smooth = np.fft.irfft(filt * np.fft.rfft(noise, axis=0), n=x.size, axis=0)
            smooth /= max(np.max(np.abs(smooth)), 1e-300)
            u0 = phi0 + scale * spec.amplitude * smooth
        else:
            custom = spec.custom(x) if callable(spec.custom) else np.asarray(spec.custom)
            u0 = phi0 + scale * spec.amplitude * custom
        return u0, gamma0

    scale = 1.0
    u0, gamma0 = make(scale)
    E0 = w2inf_norm(u0 - phi0, L)
    if spec.target_E0 is not None:
        if E0 == 0:
            raise ValueError("cannot rescale a zero perturbation to a target norm")
        f = lambda s: w2inf_norm(make(s)[0] - phi0, L) - spec.target_E0
        hi = 2 * spec.target_E0 / E0
        while f(hi) < 0:
            hi *= 2
        scale = brentq(f, 0.0, hi, xtol=1e-14, rtol=1e-12)
        u0, gamma0 = make(scale)
        E0 = w2inf_norm(u0 - phi0, L)
    if E0 > smallness:
        raise SmallnessError(f"E0 = {E0:.3g} exceeds the smallness gate {smallness}")
    centres = (-0.25 * L, 0.25 * L) if spec.kind in ("phase-front", "wavenumber-modulated") else ()
    return InitialData(x, u0, u0 - phi0, gamma0, E0, L, N, centres)


def local_wavenumber(x, u, k0, component=0, level=None):
    """Local wavenumbers k0 / (spacing of upward level crossings) and their positions."""
    s = u[:, component]
    level = np.mean(s) if level is None else level
    up = np.nonzero((s[:-1] < level) & (s[1:] >= level))[0]
    pos = x[up] + (level - s[up]) / (s[up + 1] - s[up]) * (x[up + 1] - x[up])
    return 0.5 * (pos[1:] + pos[:-1]), k0 / np.diff(pos)


# --- simulation -------------------------------------------------------------

@dataclass
class Trajectory:
    x: np.ndarray
    times: np.ndarray
    snapshots: np.ndarray
    L: int
    N: int
    dt: float
    k0: float
    omega0: float
    scheme: str = "ETDRK4"
    halving_error: float = None
    meta: dict = field(default_factory=dict)

    def manifest(self):
        return {"L": self.L, "N": self.N, "dt": self.dt, "k0": self.k0,
                "omega0": self.omega0, "scheme": self.scheme,
                "halving_error": self.halving_error, "times": list(map(float, self.times)),
                **self.meta}


def comoving_symbol(sys, k, omega, M, L):
    D = np.asarray(sys.D)
    if np.any(np.abs(D - np.diag(np.diag(D))) > 0):
        raise ValueError("the Fourier stepper needs a diagonal diffusion matrix")
    kap = rfft_wavenumbers(M, L)[:, None]
    return -k * k * np.diag(D)[None, :] * kap ** 2 + 1j * omega * kap


def snapshot_schedule(t0, T, ratio=1.25, dt=None):
    """0, then geometric times from t0 to T, snapped to multiples of dt."""
    times = [t0]
    while times[-1] * ratio < T * (1 - 1e-12):
        times.append(times[-1] * ratio)
    times.append(T)
    times = np.array([0.0] + times)
    if dt is not None:
        times = np.unique(np.round(times / dt)) * dt
    return times


def _run(sys, k, omega, u0, times, dt, L, cap):
    M = u0.shape[0]
    stepper = ETDRK4(comoving_symbol(sys, k, omega, M, L), sys.f, dt, M, cap=cap)
    steps = np.round(np.asarray(times) / dt).astype(int)
    out = np.empty((len(times),) + u0.shape)
    u, done = u0.copy(), 0
    for i, s in enumerate(steps):
        try:
            u = stepper.advance(u, s - done)
        except RuntimeError as exc:
            raise BlowUpError(str(exc)) from exc
        done = s
        out[i] = u
    return out


def simulate(sys, wave, init, T, dt=0.05, t0=0.5, ratio=1.25, halving=True, cap=1e3):
    """Integrate from ``init`` to T, storing snapshots at geometric times.

    With ``halving`` the run is repeated with dt/2 and the sup difference at T
    is recorded as the step-halving error estimate.
    """
    if T <= 0 or dt <= 0:
        raise ValueError("T and dt must be positive")
    times = snapshot_schedule(t0, T, ratio, dt)
    snaps = _run(sys, wave.k, wave.omega, init.u0, times, dt, init.L, cap)
    err = None
    if halving:
        fine = _run(sys, wave.k, wave.omega, init.u0, times[-1:], dt / 2, init.L, cap)
        err = float(np.max(np.abs(fine[-1] - snaps[-1])))
    return Trajectory(init.x, times, snaps, init.L, init.N, dt, wave.k, wave.omega,
                      halving_error=err)


# --- phase extraction ---------------------------------------------------------

@dataclass
class PhaseDiagnostics:
    times: np.ndarray
    gamma: np.ndarray
    gamma_z: np.ndarray
    gamma_zz: np.ndarray
    gamma_t: np.ndarray
    failures: np.ndarray
    window: float


def _gaussian_window(M, L, sigma):
    x = np.fft.fftfreq(M, d=1.0 / L)  # periodic offsets
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def _periodic_conv(w_hat, field):
    return np.fft.ifft(w_hat.reshape((-1,) + (1,) * (field.ndim - 1))
                       * np.fft.fft(field, axis=0), axis=0)


class PhaseExtractor:
    """Phase of torus snapshots relative to one-period profile samples ``phi0``.

    Minimises F_i(g) = sum_j W(zeta_j - zeta_i) |u_j - phi0(zeta_j + g)|^2 for
    every grid point i, expanding phi0 in its Fourier modes so each Newton
    step costs one pass over the retained modes.
    """

    def __init__(self, phi0, L, N, window=1.0, mode_tol=1e-13, newton_tol=1e-13,
                 max_iter=30):
        self.L, self.N, self.M = L, N, L * N
        self.x = torus_grid(L, N)
        self.window = float(window)
        self.newton_tol, self.max_iter = newton_tol, max_iter
        Np = phi0.shape[0]
        c = np.fft.fft(phi0, axis=0) / Np
        m = np.fft.fftfreq(Np, d=1.0 / Np)
        keep = (m > 0) & (m < Np / 2) & (np.max(np.abs(c), axis=1) > mode_tol * np.abs(c).max())
        self.modes = m[keep]
        self.c = c[keep]  # phi0 = c_0 + sum 2 Re(c_m e^{2 pi i m z})
        self.c0 = c[0].real
        if not np.any(self.modes == 1):
            raise ExtractionError("profile has no first harmonic to demodulate")
        self.c1 = c[m == 1][0]
        self.w_hat = np.fft.fft(_gaussian_window(self.M, L, self.window))
        # G(s) = sum_j W_j |phi0(s + offset_j)|^2, tabulated on a fine one-period grid
        fine = 8 * Np
        s = spectral.grid(fine)
        offsets = np.fft.fftfreq(self.M, d=1.0 / L)
        wts = _gaussian_window(self.M, L, self.window)
        sig = wts > 1e-17
        sq = np.sum(phi0 ** 2, axis=1)
        zz = s[:, None] + offsets[sig][None, :]
        self.G = (profile_at(sq, zz) * wts[sig][None, :]).sum(axis=1)
        self.G_hat = np.fft.fft(self.G) / fine
        self.G_kappa = 2 * np.pi * np.fft.fftfreq(fine, d=1.0 / fine)

    def _G(self, s, order):
        E = np.exp(1j * np.outer(s, self.G_kappa))
        return (E * (1j * self.G_kappa) ** order) @ self.G_hat

    def coarse(self, u):
        """Demodulated phase: one-period boxcar average of c1^H u e^{-2 pi i zeta}."""
        z = (u @ np.conj(self.c1)) * np.exp(-2j * np.pi * self.x)
        box = np.zeros(self.M)
        box[:self.N] = 1.0 / self.N
        box = np.roll(box, -(self.N // 2))
        Z = np.fft.ifft(np.fft.fft(box) * np.fft.fft(z))
        g = np.angle(Z / np.vdot(self.c1, self.c1).real) / (2 * np.pi)
        return np.unwrap(2 * np.pi * g) / (2 * np.pi)

    def _projections(self, u):
        P = _periodic_conv(self.w_hat, u[:, None, :] * np.exp(
            2j * np.pi * np.outer(self.x, self.modes))[:, :, None])
        return np.einsum("mc,imc->im", self.c, P)  # (M, modes)

    def _dF(self, cP, g, order):
        e = np.exp(1j * np.outer(g, 2 * np.pi * self.modes)) * cP
        return -4 * np.real(e @ (2j * np.pi * self.modes) ** order)

    def refine(self, u, g):
        cP = self._projections(u)
        g = g.copy()
        failed = np.ones(self.M, dtype=bool)
        for _ in range(self.max_iter):
            F1 = self._dF(cP, g, 1) + self._G(self.x + g, 1).real
            F2 = self._dF(cP, g, 2) + self._G(self.x + g, 2).real
            bad = F2 <= 0
            step = np.where(bad, 0.0, -F1 / np.where(bad, 1.0, F2))
            step = np.clip(step, -0.1, 0.1)
            g += step
            failed = bad | (np.abs(step) > self.newton_tol)
            if not np.any(failed):
                break
        return g, failed

    def rate(self, u, ut, g):
        """d gamma / dt at fixed zeta by implicit differentiation of F_1(gamma; u) = 0."""
        F2 = self._dF(self._projections(u), g, 2) + self._G(self.x + g, 2).real
        return -self._dF(self._projections(ut), g, 1) / F2

    def __call__(self, u, reference=None):
        g, failed = self.refine(u, self.coarse(u))
        if reference is not None:
            g -= np.round(np.mean(g - reference))
        return g, failed


def _time_derivative(times, values):
    """d/dt at each snapshot from the quadratic through three neighbouring snapshots."""
    t = np.asarray(times)
    out = np.empty_like(values)
    S = len(t)
    for i in range(S):
        j = min(max(i - 1, 0), S - 3)
        t0, t1, t2 = t[j:j + 3]
        y0, y1, y2 = values[j:j + 3]
        tt = t[i]
        out[i] = (y0 * (2 * tt - t1 - t2) / ((t0 - t1) * (t0 - t2))
                  + y1 * (2 * tt - t0 - t2) / ((t1 - t0) * (t1 - t2))
                  + y2 * (2 * tt - t0 - t1) / ((t2 - t0) * (t2 - t1)))
    return out


def comoving_rate(sys, k, omega, u, L):
    """u_t = k^2 D u_zz + omega u_z + f(u) on the torus."""
    return (k * k * (spectral.diff(u, 2, L, axis=0) @ sys.D.T)
            + omega * spectral.diff(u, 1, L, axis=0) + sys.f(u))


def extract_phase(traj, wave, window=1.0, gamma0=None, smoothing=0.0, max_fail=0.01,
                  sys=None):
    """gamma(zeta, t) for every snapshot with derivative fields.

    With ``sys`` the time derivative is exact: u_t comes from the equation and
    gamma_t from implicit differentiation of the extraction condition.
    Otherwise gamma_t is a three-snapshot quadratic difference.
    """
    ex = PhaseExtractor(wave.phi, traj.L, traj.N, window)
    ref = np.zeros(traj.x.size) if gamma0 is None else np.asarray(gamma0)
    gammas, fails, rates = [], [], []
    for u in traj.snapshots:
        g, failed = ex(u, ref)
        if sys is not None:
            ut = comoving_rate(sys, traj.k0, traj.omega0, u, traj.L)
            rates.append(ex.rate(u, ut, g))
        if np.mean(failed) > max_fail:
            raise ExtractionError(f"Newton refinement failed at {np.mean(failed):.1%} of points")
        if np.max(np.abs(np.diff(np.append(g, g[0])))) > 0.5:
            raise ExtractionError("phase jump exceeds half a period between neighbours")
        gammas.append(g)
        fails.append(int(failed.sum()))
        ref = g
    gamma = np.array(gammas)
    L = traj.L
    kap = spectral.wavenumbers(traj.x.size, L)
    filt = np.exp(-0.5 * (kap * smoothing) ** 2) if smoothing else 1.0
    ghat = np.fft.fft(gamma, axis=1) * filt
    gz = np.fft.ifft(ghat * (1j * kap), axis=1).real
    gzz = np.fft.ifft(ghat * (1j * kap) ** 2, axis=1).real
    gt = np.array(rates) if sys is not None else _time_derivative(traj.times, gamma)
    return PhaseDiagnostics(traj.times, gamma, gz, gzz, gt, np.array(fails), window)


# --- decay measurements --------------------------------------------------------

def report_mask(traj, t, a=0.0, centres=(), margin=1.0):
    """Points whose periodic distance to the artificial return ramp exceeds L/4 + margin.

    The return ramp at centres[1] moves with the group velocity -a in the
    comoving frame.  Without centres every point is reported.
    """
    if len(centres) < 2:
        return np.ones(traj.x.size, dtype=bool)
    L = traj.L
    c = centres[1] - a * t
    dist = np.abs((traj.x - c + 0.5 * L) % L - 0.5 * L)
    return dist >= 0.25 * L + margin


@dataclass
class DecayReport:
    times: np.ndarray
    series: dict
    fits: dict

    def to_dict(self):
        return {name: fit.to_dict() for name, fit in self.fits.items()}


LOG_RATED = ("wavenumber_corrected", "gamma_zz", "corollary_wavenumber")


def modulated_fields(traj, diag, i):
    """u(zeta - gamma(zeta, t), t) at snapshot i."""
    return taylor_shift(traj.snapshots[i], -diag.gamma[i], traj.L)


def measure_decay(traj, diag, wave, wmodel=None, t_min=10.0, t_max=None, a=0.0,
                  centres=(), margin=1.0):
    """Interior sup norms of the modulated quantities and their log-log fits in 1+t."""
    t_max = t_max or traj.times[-1]
    if t_max < 10 * t_min * (1 - 1e-9):
        raise ValueError("fit window shorter than one decade in t")
    phi0 = tile_profile(wave.phi, traj.L, traj.N)
    names = ["unmodulated", "modulated", "gamma", "gamma_z", "gamma_zz", "gamma_t"]
    if wmodel is not None:
        names.insert(2, "wavenumber_corrected")
    series = {n: [] for n in names}
    for i, t in enumerate(traj.times):
        mask = report_mask(traj, t, a, centres, margin)
        um = modulated_fields(traj, diag, i)
        sup = lambda f: float(np.max(np.abs(f[mask])))
        series["unmodulated"].append(sup(traj.snapshots[i] - phi0))
        series["modulated"].append(sup(um - phi0))
        if wmodel is not None:
            series["wavenumber_corrected"].append(sup(um - wmodel(traj.x, diag.gamma_z[i])))
        series["gamma"].append(sup(diag.gamma[i]))
        series["gamma_z"].append(sup(diag.gamma_z[i]))
        series["gamma_zz"].append(sup(diag.gamma_zz[i]))
        series["gamma_t"].append(sup(diag.gamma_t[i]))
    series = {k: np.array(v) for k, v in series.items()}
    fits = {}
    for name, vals in series.items():
        fits[name] = fit_decay(traj.times, vals, t_min, t_max,
                               "free" if name in LOG_RATED else False, shift=1.0)
        if name in LOG_RATED:
            fits[name + "_plain"] = fit_decay(traj.times, vals, t_min, t_max, False, shift=1.0)
            fits[name + "_fixed_log"] = fit_decay(traj.times, vals, t_min, t_max, True,
                                                  shift=1.0)
    return DecayReport(traj.times, series, fits)


# --- Hamilton-Jacobi comparison ---------------------------------------------

@dataclass
class HJComparison:
    times: np.ndarray
    errors: np.ndarray  # (2, S): j = 0, 1
    gamma_norm: np.ndarray
    relative: np.ndarray

    def decreasing(self, t_from=10.0):
        sel = self.times >= t_from
        r = self.relative[sel]
        return bool(np.all(np.diff(r) < 0))


def compare_to_hj(traj, diag, v0, a, d, nu, adjoint0, centres=(), margin=1.0):
    """||d^j (gamma - gamma_HJ)||, j = 0, 1, with gamma_HJ(0) = Phi~0^* v0 pointwise."""
    adj = tile_profile(adjoint0, traj.L, traj.N)
    g0 = np.sum(adj * v0, axis=1)
    errs, norms = [[], []], []
    for i, t in enumerate(traj.times):
        mask = report_mask(traj, t, a, centres, margin)
        hj = hj_solve(traj.x, g0, t, a, d, nu, boundary="periodic").values
        diff = diag.gamma[i] - hj
        errs[0].append(np.max(np.abs(diff[mask])))
        errs[1].append(np.max(np.abs(spectral.diff(diff, 1, traj.L)[mask])))
        norms.append(np.max(np.abs(diag.gamma[i][mask])))
    errs = np.array(errs)
    norms = np.array(norms)
    rel = errs[0] / np.where(norms > 0, norms, 1.0)
    return HJComparison(traj.times, errs, norms, rel)


# --- corollary ---------------------------------------------------------------

def invert_phase_map(x, gamma, L, tol=1e-12, max_iter=200):
    """psi^{-1}(zeta) with psi(zeta) = zeta - gamma(zeta): iterate z <- zeta + gamma(z)."""
    gz = spectral.diff(gamma, 1, L)
    q = np.max(np.abs(gz))
    if q >= 1:
        raise InvertibilityError(f"contraction factor {q:.3g} >= 1")
    s = np.zeros_like(gamma)  # z = zeta + s
    for _ in range(max_iter):
        new = taylor_shift(gamma, s, L)
        if np.max(np.abs(new - s)) < tol:
            s = new
            break
        s = new
    else:
        raise InvertibilityError("fixed-point iteration did not converge")
    return x + s


@dataclass
class CorollaryReport:
    times: np.ndarray
    residual: np.ndarray
    taylor_ok: np.ndarray
    derivative_ok: np.ndarray
    series: dict
    fits: dict


def corollary_check(traj, diag, wave, wmodel, t_min=10.0, t_max=None, a=0.0,
                    centres=(), margin=1.0):
    """Inversion residuals, the two Taylor defect bounds and the two modulated-frame norms."""
    t_max = t_max or traj.times[-1]
    L = traj.L
    res, tay, der = [], [], []
    series = {"corollary_plain": [], "corollary_wavenumber": []}
    for i, t in enumerate(traj.times):
        g, gz, gzz = diag.gamma[i], diag.gamma_z[i], diag.gamma_zz[i]
        z = invert_phase_map(traj.x, g, L)
        s = z - traj.x
        res.append(np.max(np.abs(s - taylor_shift(g, s, L))))
        ng, ngz, ngzz = (np.max(np.abs(f)) for f in (g, gz, gzz))
        defect = np.abs(s - g * (1 + gz))
        tay.append(bool(np.all(defect <= (ngz ** 2 + 0.5 * ngzz * ng) * ng * (1 + 1e-9) + 1e-15)))
        shifted_gz = taylor_shift(gz, s, L)
        der.append(bool(np.all(np.abs(shifted_gz - gz) <= ngzz * ng * (1 + 1e-9) + 1e-15)))
        mask = report_mask(traj, t, a, centres, margin)
        u = traj.snapshots[i]
        plain = u - profile_at(wave.phi, traj.x + g)
        corr = u - wmodel(traj.x + g * (1 + gz), gz)
        series["corollary_plain"].append(np.max(np.abs(plain[mask])))
        series["corollary_wavenumber"].append(np.max(np.abs(corr[mask])))
    series = {k: np.array(v) for k, v in series.items()}
    fits = {name: fit_decay(traj.times, vals, t_min, t_max,
                            "free" if name in LOG_RATED else False, shift=1.0)
            for name, vals in series.items()}
    return CorollaryReport(traj.times, np.array(res), np.array(tay), np.array(der),
                           series, fits)


# --- nonlinearities of the modulated equation -------------------------------

@dataclass
class ModulationContext:
    """Wave data entering the nonlinearities on a torus of L periods."""

    sys: object
    phi0: np.ndarray   # tiled profile (M, n)
    dk_phi: np.ndarray  # tiled gauge-normalised d_k phi (M, n)
    k0: float
    omega0: float
    omega1: float
    L: int

    @classmethod
    def build(cls, sys, wave, dk_phi, omega1, L, N=None):
        return cls(sys, tile_profile(wave.phi, L, N), tile_profile(dk_phi, L, N),
                   wave.k, wave.omega, omega1, L)

    def dz(self, f, j=1):
        return spectral.diff(f, j, self.L, axis=0)

    @property
    def a(self):
        return self.omega0 - self.k0 * self.omega1


def _col(g):
    return np.asarray(g)[:, None]


def nonlinearity_eval(kind, ctx, v, gamma, gamma_t=None, z=None, variant="derived"):
    """Q, R, S (modulated equation) or Q_p, R_p, S_p (after the gamma_z^2 extraction).

    ``variant="printed"`` swaps in the alternative forms gamma_z^2 v / (1 - gamma_z)
    in the diffusive part of R, R_p and +B gamma_z in Q_p; the residual checks
    show these are not exact, the default forms are.
    """
    if variant not in ("derived", "printed"):
        raise ValueError(f"unknown variant {variant!r}")
    printed = variant == "printed"
    f, df, d2f = ctx.sys.f, ctx.sys.df, ctx.sys.d2f
    D = ctx.sys.D
    k0, phi0 = ctx.k0, ctx.phi0
    gz = ctx.dz(gamma)
    if np.max(np.abs(gz)) > 0.5:
        raise ValueError("||gamma_z|| must not exceed 1/2")
    gzz, gzzz = ctx.dz(gamma, 2), ctx.dz(gamma, 3)
    G, G2, G3 = _col(gz), _col(gzz), _col(gzzz)
    B = f(phi0 + v) - f(phi0) - np.einsum("mij,mj->mi", df(phi0), v)
    # curvature coupling of the diffusive flux
    cv = G ** 2 * v / (1 - G) if printed else G * G2 * v / (1 - G)
    if kind == "Q":
        return B * (1 - G)
    if kind == "R":
        return (-_col(gamma_t) * v + ctx.omega0 * G * v
                + k0 ** 2 / (1 - G) * ((G ** 2 * ctx.dz(phi0) - G2 * v - cv) @ D.T))
    if kind == "S":
        return k0 ** 2 * ((2 * G * v + G ** 2 * v / (1 - G)) @ D.T)
    p = ctx.dk_phi
    if z is None:
        z = v - k0 * p * G
    gt = _col(gamma_t) - ctx.a * G if gamma_t is not None else None
    if kind == "Q_p":
        return ((B if printed else -B) * G + B - 0.5 * d2f(phi0, v, v) + 0.5 * d2f(phi0, z, z)
                + k0 * G * d2f(phi0, z, p) + 2 * k0 ** 2 * ctx.omega1 * G * G2 * p
                + 2 * k0 ** 2 * ((G * G2 * (ctx.dz(phi0) + 4 * k0 * ctx.dz(p))
                                  + 2 * k0 * (G2 ** 2 + G * G3) * p) @ D.T))
    if kind == "R_p":
        return (-v * gt + k0 * ctx.omega1 * G * z
                + k0 ** 2 / (1 - G) * ((G ** 3 * ctx.dz(phi0) - G2 * v - cv) @ D.T))
    if kind == "S_p":
        return k0 ** 2 * ((2 * G * z + G ** 2 * v / (1 - G)) @ D.T)
    raise ValueError(f"unknown nonlinearity {kind!r}")


def full_nonlinearity(ctx, v, gamma, gamma_t, variant="derived"):
    ev = lambda kind: nonlinearity_eval(kind, ctx, v, gamma, gamma_t, variant=variant)
    return ev("Q") + ctx.dz(ev("R")) + ctx.dz(ev("S"), 2)


def fp_periodic(ctx):
    """f_p tiled over the torus, from the tiled profile and d_k phi."""
    p = ctx.dk_phi
    return (0.5 * ctx.sys.d2f(ctx.phi0, p, p) + ctx.omega1 * ctx.dz(p)
            + (ctx.dz(ctx.phi0, 2) + 2 * ctx.k0 * ctx.dz(p, 2)) @ ctx.sys.D.T)


def fp_decomposition_check(ctx, v, gamma, gamma_t, variant="derived"):
    """sup |N(v, gamma, gamma_t) - k0^2 f_p gamma_z^2 - N_p(z, v, gamma, gamma~)|."""
    gz = ctx.dz(gamma)
    ev = lambda kind: nonlinearity_eval(kind, ctx, v, gamma, gamma_t, variant=variant)
    Np = ev("Q_p") + ctx.dz(ev("R_p")) + ctx.dz(ev("S_p"), 2)
    lhs = full_nonlinearity(ctx, v, gamma, gamma_t, variant)
    return float(np.max(np.abs(lhs - ctx.k0 ** 2 * fp_periodic(ctx) * _col(gz) ** 2 - Np)))


def _L0(ctx, w):
    return (ctx.k0 ** 2 * (ctx.dz(w, 2) @ ctx.sys.D.T) + ctx.omega0 * ctx.dz(w)
            + np.einsum("mij,mj->mi", ctx.sys.df(ctx.phi0), w))


def modulation_residual_check(ctx, u, gamma, gamma_t, variant="derived"):
    """Defect of (d_t - L0)[v + phi0' gamma - gamma_z v] = N(v, gamma, gamma_t).

    ``u`` is any smooth torus field; its time derivative is taken from the
    comoving reaction-diffusion equation, so u is a solution at this instant.
    v(zeta) = u(zeta - gamma(zeta)) - phi0(zeta), and d_t v follows by the
    chain rule.  ``gamma_t`` is the prescribed time derivative of gamma.
    """
    sys, k0, L = ctx.sys, ctx.k0, ctx.L
    ut = k0 ** 2 * (ctx.dz(u, 2) @ sys.D.T) + ctx.omega0 * ctx.dz(u) + sys.f(u)
    shift = -np.asarray(gamma)
    uc = taylor_shift(u, shift, L)
    v = uc - ctx.phi0
    vt = taylor_shift(ut, shift, L) - _col(gamma_t) * taylor_shift(ctx.dz(u), shift, L)
    gz = ctx.dz(gamma)
    gzt = ctx.dz(gamma_t)
    W = v + ctx.dz(ctx.phi0) * _col(gamma) - _col(gz) * v
    Wt = vt + ctx.dz(ctx.phi0) * _col(gamma_t) - _col(gzt) * v - _col(gz) * vt
    lhs = Wt - _L0(ctx, W)
    rhs = full_nonlinearity(ctx, v, gamma, gamma_t, variant)
    return float(np.max(np.abs(lhs - rhs)))
