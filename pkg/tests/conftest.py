import re
from types import SimpleNamespace

import numpy as np
import pytest

from wavemod import bloch, experiment as ex, model, wavetrain as wt
from wavemod.semigroup import CutoffPair, TorusSemigroup


def build_setup(sys, k, N=64, dk=1e-3, half=3, xi0=1.0, points=41, omega=None, amp=0.8,
                fit_window=None):
    wave = wt.solve_wavetrain(sys, k, wt.rotating_wave_guess(N, amp), omega=omega)
    family = wt.continue_family(sys, wave, dk, half)
    curve = bloch.critical_curve(sys, wave, xi0, points)
    o1, o2 = wt.dispersion_derivatives(family)
    wt.k_derivatives_of_profile(family, curve.adjoint0)
    co = bloch.modulation_coefficients(sys, curve, family, curve.adjoint0, o1.value,
                                       o2.value, fit_window=fit_window)
    return SimpleNamespace(sys=sys, k=k, wave=wave, family=family, curve=curve,
                           coeffs=co, omega1=o1.value, omega2=o2.value,
                           a=co.a.value, d=co.d.value, nu=co.nu.value)


def cgl_wave_data(c3, mu, s):
    """Closed forms for the CGL wave train with Q^2 = q^2 / mu = s."""
    q = np.sqrt(s * mu)
    k = q / (2 * np.pi)
    return SimpleNamespace(
        k=k, q=q, R=np.sqrt(1 - s), omega=c3 * (mu - q * q) / (2 * np.pi),
        a=c3 * (mu + q * q) / (2 * np.pi), nu=2 * np.pi * c3 * k * k,
        d=k * k * (1 - 2 * s * (1 + c3 ** 2) / (1 - s)))


@pytest.fixture(scope="session")
def rgl():
    return build_setup(model.preset("real-ginzburg-landau"), 0.05)


@pytest.fixture(scope="session")
def cgl1():
    return build_setup(model.preset("complex-ginzburg-landau", c3=0.5, mu=1.0), 0.05)


@pytest.fixture(scope="session")
def cgl250():
    c3, mu, s = 0.5, 250.0, 0.15
    ref = cgl_wave_data(c3, mu, s)
    setup = build_setup(model.preset("complex-ginzburg-landau", c3=c3, mu=mu), ref.k, N=16,
                        dk=1e-3 * ref.k, half=2, xi0=3.0, points=61, omega=ref.omega,
                        amp=0.9 * ref.R, fit_window=0.5)
    setup.ref = ref
    return setup


@pytest.fixture(scope="session")
def bench250(cgl250):
    s = cgl250
    return TorusSemigroup(s.sys, s.wave, 128, s.curve, CutoffPair(3.0), s.family.dk_phi,
                          s.a, s.d)


LONG_RUN = dict(L=16, N=64, T=200.0, dt=0.05, width=0.05, window=0.05, t_min=20.0)


def long_run(setup, E0):
    p = LONG_RUN
    spec = ex.PerturbationSpec("phase-front", gamma_minus=0.0, gamma_plus=1.0,
                               width=p["width"], target_E0=E0)
    init = ex.build_initial_data(setup.sys, setup.wave, spec, p["L"], p["N"])
    traj = ex.simulate(setup.sys, setup.wave, init, p["T"], p["dt"])
    diag = ex.extract_phase(traj, setup.wave, p["window"], init.gamma0, sys=setup.sys)
    wm = ex.WavenumberModel.from_family(setup.family)
    decay = ex.measure_decay(traj, diag, setup.wave, wm, p["t_min"], p["T"], setup.a,
                             init.centres)
    hj = ex.compare_to_hj(traj, diag, init.v0, setup.a, setup.d, setup.nu,
                          setup.curve.adjoint0, init.centres)
    cor = ex.corollary_check(traj, diag, setup.wave, wm, p["t_min"], p["T"], setup.a,
                             init.centres)
    return SimpleNamespace(init=init, traj=traj, diag=diag, decay=decay, hj=hj, cor=cor,
                           wm=wm)


@pytest.fixture(scope="session")
def rgl_run(rgl):
    return long_run(rgl, 0.02)


@pytest.fixture(scope="session")
def cgl_run(cgl1):
    return long_run(cgl1, 0.02)


@pytest.fixture(scope="session")
def cgl_run_half(cgl1):
    return long_run(cgl1, 0.01)


@pytest.fixture(scope="session")
def whitham_tables():
    from wavemod import phase_dynamics as pd
    c3, mu, s = 0.5, 250.0, 0.08
    ref = cgl_wave_data(c3, mu, s)
    sys = model.preset("complex-ginzburg-landau", c3=c3, mu=mu)
    wave = wt.solve_wavetrain(sys, ref.k, wt.rotating_wave_guess(16, 0.9 * ref.R),
                              omega=ref.omega)
    family = wt.continue_family(sys, wave, 0.01 * ref.k, 7)
    return pd.DispersionTables.from_family(sys, family)


# --- acceptance summary ------------------------------------------------------------

ACCEPTANCE_TITLES = {
    1: "wave-train correctness",
    2: "spectral certification",
    3: "coefficient cross-validation",
    4: "semigroup decomposition",
    5: "decay-rate probes",
    6: "oscillatory integral bound",
    7: "phase dynamics",
    8: "modulated decay of the full system",
    9: "Hamilton-Jacobi approximation",
    10: "modulation in the original frame",
    11: "Whitham/Burgers equivalence",
    12: "determinism",
}
_acceptance = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_c(\d+)_", report.nodeid)
    if not m or (report.when != "call" and report.passed):
        return
    if hasattr(report, "wasxfail"):
        outcome = "xfail" if report.skipped else "failed"
    else:
        outcome = report.outcome
    _acceptance.setdefault(int(m.group(1)), []).append(outcome)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for c, title in ACCEPTANCE_TITLES.items():
        outcomes = _acceptance.get(c)
        if not outcomes:
            continue
        ok = "failed" not in outcomes and "passed" in outcomes
        xf = outcomes.count("xfail")
        note = f" ({xf} documented strict xfail)" if xf else ""
        terminalreporter.write_line(
            f"criterion {c:2d} {title}: {'PASS' if ok else 'FAIL'}{note}")
