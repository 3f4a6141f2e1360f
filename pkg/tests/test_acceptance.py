"""End-to-end acceptance checks, one group per criterion (test_cNN_*).

The terminal summary prints one pass/fail line per criterion.
"""

import filecmp
import json

import numpy as np
import pytest

from conftest import LONG_RUN
from wavemod import bloch, cli, phase_dynamics as pd, semigroup as sg, spectral
from wavemod import wavetrain as wt
from wavemod.fitting import geometric_times


def gl_wave(sys, k, N):
    return wt.solve_wavetrain(sys, k, wt.rotating_wave_guess(N, 0.8))


def slope(report, name):
    return report.fits[name].slope


# --- 1 ----------------------------------------------------------------------------

def test_c01_wave_train(rgl):
    w = rgl.wave
    assert w.residual < 1e-10
    R = np.sqrt(1 - (2 * np.pi * rgl.k) ** 2)
    np.testing.assert_allclose(np.linalg.norm(w.phi, axis=1), R, atol=1e-8)
    assert np.max(np.abs(rgl.family.omega_of_k)) < 1e-9
    assert max(s.residual for s in rgl.family.samples) < 1e-10


# --- 2 ----------------------------------------------------------------------------

def test_c02_critical_eigenvalue(rgl):
    cur, w = rgl.curve, rgl.wave
    assert abs(cur.lambda_at(0.0)) < 1e-8
    c = spectral.inner(w.dphi, cur.Phi0) / spectral.inner(w.dphi, w.dphi)
    assert np.max(np.abs(cur.Phi0 - c * w.dphi)) < 1e-8


def test_c02_certified_and_refuted(rgl):
    assert bloch.stability_report(rgl.sys, rgl.wave, 101).stable
    bad = bloch.stability_report(rgl.sys, gl_wave(rgl.sys, 0.12, 64), 101)
    assert not bad.stable and bad.d2_theta <= 0


def test_c02_boundary_stable_under_doubling(rgl):
    # rolls destabilise at (2 pi k)^2 = 1/3, k = 0.0919
    ks = [0.085, 0.09, 0.095, 0.10]
    found = []
    for xi_count, N in ((51, 32), (101, 64)):
        flags = [bloch.stability_report(rgl.sys, gl_wave(rgl.sys, k, N), xi_count).stable
                 for k in ks]
        found.append(ks[flags.index(False)])
    assert found == [0.095, 0.095]


# --- 3 ----------------------------------------------------------------------------

@pytest.mark.parametrize("setup", ["rgl", "cgl250"])
def test_c03_route_agreement(setup, request):
    co = request.getfixturevalue(setup).coeffs
    for rv in (co.a, co.d, co.nu):
        floor = 1e-6
        assert rv.discrepancy <= max(1e-3 * max(abs(rv.route_a), abs(rv.route_b)), floor)


def test_c03_nu_three_routes(cgl250):
    ref, nu = cgl250.ref, cgl250.coeffs.nu
    routes = [nu.route_a, nu.route_b, ref.nu]
    assert (max(routes) - min(routes)) / abs(ref.nu) < 1e-3


def test_c03_real_gl_values(rgl):
    co = rgl.coeffs
    assert abs(co.a.value) < 1e-6 and abs(co.nu.value) < 1e-6
    assert abs(co.nu.route_a) < 1e-6
    assert co.d.value > 0


# --- 4 ----------------------------------------------------------------------------

@pytest.mark.parametrize("t", [2.0, 5.0, 10.0])
def test_c04_decomposition(bench250, t):
    v = np.random.default_rng(0).standard_normal((bench250.M, 2))
    d = bench250.full(v, t) - bench250.exponential(v, t) - bench250.critical(v, t)
    assert np.max(np.abs(d)) < 1e-6


def test_c04_commutators(cgl250):
    from test_semigroup import gaussian_times_profile
    v_fn = gaussian_times_profile(cgl250.wave, 0.03)
    assert sg.commutator_check(cgl250.curve, sg.CutoffPair(3.0), v_fn, -20, 40,
                               [2.0, 10.0], refine=4) < 1e-6


def test_c04_heat_expansion(cgl250, bench250):
    w = cgl250.wave
    g = w.dphi + 0.3 * w.phi ** 2
    v = np.exp(-bench250.x ** 2 / 200)
    assert sg.heat_expansion_check(bench250, g, v, [2.0, 5.0, 10.0]) < 1e-6


# --- 5 ----------------------------------------------------------------------------

PROBE_TIMES = geometric_times(4.0, 100.0, 1.25)


@pytest.fixture(scope="module")
def probes(bench250):
    spec = {"dS_p": ("S_p", dict(j=1)), "dtS_p": ("S_p", dict(l=1)), "S_r": ("S_r", {}),
            "S_tr": ("S_tr", {}), "S_h": ("S_h", {}), "S_e": ("S_e", {})}
    return {name: sg.decay_rate_probe(bench250, tag, PROBE_TIMES, **kw)[0]
            for name, (tag, kw) in spec.items()}


def test_c05_principal(probes):
    assert probes["dS_p"].slope == pytest.approx(-0.5, abs=0.1)
    assert probes["dtS_p"].slope == pytest.approx(-1.0, abs=0.15)


def test_c05_remainders(probes):
    assert probes["S_r"].slope <= -0.9
    assert probes["S_tr"].slope - probes["S_h"].slope <= -0.4
    assert probes["S_e"].slope <= -1.0


# --- 6 ----------------------------------------------------------------------------

@pytest.mark.parametrize("setup", ["rgl", "cgl250"])
@pytest.mark.parametrize("m", [0, 1, 2])
def test_c06_oscillatory_bound(setup, m, request):
    s = request.getfixturevalue(setup)
    cur = s.curve
    # the drift i a xi moves the centre to x = -a t; removing it keeps the
    # centre inside the fixed x window
    lam = (cur.xis, cur.lambda_c - 1j * s.a * cur.xis)
    cut = sg.CutoffPair(1.0)
    ratios = []
    for f in (1, 2):
        xs = np.linspace(-60, 60, 120 * f + 1)
        ts = np.geomspace(1, 100, 15 * f)
        ratios.append(sg.oscillatory_bound_check(lam, m, cut.rho, xs, ts, 1.0))
    assert np.isfinite(ratios[0])
    assert abs(ratios[1] / ratios[0] - 1) < 0.2


# --- 7 ----------------------------------------------------------------------------

X = -200 + 400 * np.arange(4096) / 4096


# fine enough to resolve sqrt(d t) ~ 0.06 at t = 1 for the preset values of d
XF = -50 + 100 * np.arange(8192) / 8192


@pytest.mark.parametrize("setup", ["rgl", "cgl1"])
def test_c07_hj_vs_imex(setup, request):
    s = request.getfixturevalue(setup)
    # start from the exact front once its width spans 8 grid cells
    t0 = pd.resolved_front_time(s.d, XF[1] - XF[0])
    g0 = pd.front_solution(0.0, 0.5, XF, t0, s.a, s.d, s.nu)
    exact = pd.hj_solve(XF, g0, 1.0, s.a, s.d, s.nu).values
    direct = pd.hj_imex(XF, g0, 1.0, s.a, s.d, s.nu, dt=1e-3)
    interior = np.abs(XF) < 25
    assert np.max(np.abs(exact - direct)[interior]) < 1e-6
    front = pd.front_solution(0.0, 0.5, XF, t0 + 1, s.a, s.d, s.nu)
    assert np.max(np.abs(exact - front)[interior]) < 1e-6


@pytest.mark.parametrize("nu", [0.0, 0.7, -0.4])
def test_c07_front_residual(nu):
    G, gx, gxx, gt = pd.front_derivatives(-0.3, 0.5, X, 3.0, 0.8, 1.3, nu)
    assert np.max(np.abs(pd.hj_residual(gx, gxx, gt, 0.8, 1.3, nu))) < 1e-8


@pytest.mark.parametrize("nu", [0.0, 0.7, -0.4])
@pytest.mark.parametrize("j, l", [(1, 0), (2, 0), (0, 1)])
def test_c07_front_decay(nu, j, l):
    r = pd.front_decay_rates(-0.3, 0.5, j, l, np.geomspace(1, 100, 15), 0.8, 1.3, nu)
    assert r.slope == pytest.approx(-(j / 2 + l), abs=0.05)
    assert r.ok(tol=0.05)


# --- 8 ----------------------------------------------------------------------------

def test_c08_preset_certified(cgl1, rgl):
    for s in (rgl, cgl1):
        assert bloch.stability_report(s.sys, s.wave, 101).stable


@pytest.mark.parametrize("run", ["rgl_run", "cgl_run"])
def test_c08_decay(run, request):
    r = request.getfixturevalue(run)
    assert r.init.E0 == pytest.approx(0.02, rel=1e-6)
    assert r.traj.times[-1] == pytest.approx(LONG_RUN["T"])
    d = r.decay
    assert slope(d, "modulated") == pytest.approx(-0.5, abs=0.1)
    assert slope(d, "gamma") == pytest.approx(0.0, abs=0.05)
    assert slope(d, "gamma_z") == pytest.approx(-0.5, abs=0.1)
    assert slope(d, "gamma_zz") == pytest.approx(-1.0, abs=0.15)
    assert slope(d, "wavenumber_corrected") == pytest.approx(-1.0, abs=0.2)


def test_c08_gamma_t(cgl_run):
    assert slope(cgl_run.decay, "gamma_t") == pytest.approx(-0.5, abs=0.1)


@pytest.mark.xfail(strict=True, reason=(
    "with a = nu = 0 the phase obeys gamma_t = d gamma_zz to leading order, "
    "so |gamma_t| decays like 1/t (slope -0.99), faster than the -1/2 upper rate"))
def test_c08_gamma_t_real_gl(rgl_run):
    assert slope(rgl_run.decay, "gamma_t") == pytest.approx(-0.5, abs=0.1)


@pytest.mark.xfail(strict=True, reason=(
    "with the log power fixed to 1 the gamma_zz fit gives about -1.22; the free "
    "log power fit is the one checked above"))
def test_c08_gamma_zz_fixed_log(cgl_run):
    assert slope(cgl_run.decay, "gamma_zz_fixed_log") == pytest.approx(-1.0, abs=0.15)


# --- 9 ----------------------------------------------------------------------------

@pytest.mark.parametrize("run", ["rgl_run", "cgl_run"])
def test_c09_relative_error_decreasing(run, request):
    hj = request.getfixturevalue(run).hj
    assert hj.times[hj.times >= 10][-1] == pytest.approx(200.0)
    assert hj.decreasing(10.0)


def test_c09_amplitude_exponent(cgl_run, cgl_run_half):
    full, half = cgl_run.hj, cgl_run_half.hj
    late = full.times >= 100
    exponent = np.median(np.log2(full.errors[0][late] / half.errors[0][late]))
    assert 1.0 <= exponent <= 2.0


# --- 10 ---------------------------------------------------------------------------

@pytest.mark.parametrize("run", ["rgl_run", "cgl_run"])
def test_c10_inversion_and_taylor(run, request):
    cor = request.getfixturevalue(run).cor
    assert cor.residual.max() < 1e-10
    assert cor.taylor_ok.all() and cor.derivative_ok.all()


@pytest.mark.parametrize("run", ["rgl_run", "cgl_run"])
def test_c10_original_frame_decay(run, request):
    cor = request.getfixturevalue(run).cor
    assert slope(cor, "corollary_plain") == pytest.approx(-0.5, abs=0.1)
    assert slope(cor, "corollary_wavenumber") == pytest.approx(-1.0, abs=0.2)


# --- 11 ---------------------------------------------------------------------------

def test_c11_amplitude_halving(whitham_tables):
    x = -200 + 400 * np.arange(2048) / 2048
    errs = []
    for eps in (0.02, 0.01, 0.005):
        k0 = 1 + eps * np.exp(-x ** 2 / 50)
        w = pd.whitham_solve(x, k0, 1.0, whitham_tables, dt=2e-3)
        b = pd.burgers_approximant(x, k0, 1.0, whitham_tables, dt=2e-3)
        errs.append(np.max(np.abs(w - b)))
    ratios = np.array(errs[:-1]) / errs[1:]
    assert np.all((3.3 <= ratios) & (ratios <= 4.7))


# --- 12 ---------------------------------------------------------------------------

def test_c12_byte_identical_pipeline(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"schema": cli.SCHEMA, "seed": 11,
                               "perturbation": {"kind": "additive-random",
                                                "amplitude": 1e-4, "target_E0": None}}))
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        cli.main(["run", "--config", str(cfg), "--out", str(out)])
    csvs = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*.csv"))
    assert len(csvs) > 20
    assert {"simulate", "compare", "semigroup-bench"} <= {p.parts[0] for p in csvs}
    for rel in csvs:
        assert filecmp.cmp(outs[0] / rel, outs[1] / rel, shallow=False), rel
    assert csvs == sorted(p.relative_to(outs[1]) for p in outs[1].rglob("*.csv"))
