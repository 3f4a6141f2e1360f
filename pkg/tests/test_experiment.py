import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavemod import experiment as ex, model, spectral, wavetrain as wt


L_SMALL, N_SMALL = 8, 32


@pytest.fixture(scope="module")
def small(rgl):
    wave = rgl.wave.resampled(N_SMALL)
    return wave


def zero_init(wave, L=L_SMALL):
    spec = ex.PerturbationSpec("additive-random", amplitude=0.0)
    return ex.build_initial_data(None, wave, spec, L, wave.N)


# --- helpers ------------------------------------------------------------------

def test_torus_grid_and_tiling(rgl):
    x = ex.torus_grid(3, 64)
    assert x[0] == -1.5 and x.size == 192
    tiled = ex.tile_profile(rgl.wave.phi, 3)
    np.testing.assert_allclose(tiled, ex.profile_at(rgl.wave.phi, x), atol=1e-12)
    tiled = ex.tile_profile(rgl.wave.phi, 4, 32)
    np.testing.assert_allclose(tiled, ex.profile_at(rgl.wave.phi, ex.torus_grid(4, 32)),
                               atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(-0.2, 0.2), m=st.integers(1, 3))
def test_taylor_shift_matches_interpolation(rgl, c, m):
    L = 4
    x = ex.torus_grid(L, 64)
    u = ex.tile_profile(rgl.wave.phi, L)
    s = c * np.sin(2 * np.pi * m * x / L)
    np.testing.assert_allclose(ex.taylor_shift(u, s, L), ex.profile_at(rgl.wave.phi, x + s),
                               atol=1e-11)


def test_taylor_shift_too_large(rgl):
    u = ex.tile_profile(rgl.wave.phi, 2)
    with pytest.raises(ex.ExtractionError):
        ex.taylor_shift(u, np.full(u.shape[0], 30.0), 2, max_terms=10)


def test_w2inf_norm():
    L = 4
    x = ex.torus_grid(L, 64)
    v = 0.1 * np.sin(2 * np.pi * x / L)[:, None]
    w = 2 * np.pi / L
    assert ex.w2inf_norm(v, L) == pytest.approx(0.1 * max(1, w, w * w), rel=1e-10)


# --- initial data -------------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ValueError):
        ex.PerturbationSpec("bump")
    with pytest.raises(ValueError):
        ex.PerturbationSpec(width=0.0)


def test_zero_amplitude(small):
    init = zero_init(small)
    np.testing.assert_array_equal(init.u0, ex.tile_profile(small.phi, L_SMALL))
    assert init.E0 == 0.0


def test_phase_front_scaling(rgl):
    E = []
    for delta in (2e-4, 1e-4, 5e-5):
        spec = ex.PerturbationSpec("phase-front", gamma_plus=delta, width=0.5)
        E.append(ex.build_initial_data(rgl.sys, rgl.wave, spec, 8).E0)
    assert E[0] / E[1] == pytest.approx(2.0, abs=0.02)
    assert E[1] / E[2] == pytest.approx(2.0, abs=0.01)


def test_target_norm_and_gate(rgl):
    spec = ex.PerturbationSpec("phase-front", gamma_plus=1.0, width=0.05, target_E0=0.02)
    init = ex.build_initial_data(rgl.sys, rgl.wave, spec, 8)
    assert init.E0 == pytest.approx(0.02, rel=1e-9)
    np.testing.assert_allclose(init.v0, init.u0 - ex.tile_profile(rgl.wave.phi, 8))
    assert init.centres == (-2.0, 2.0)
    big = ex.PerturbationSpec("phase-front", gamma_plus=0.3, width=0.05)
    with pytest.raises(ex.SmallnessError):
        ex.build_initial_data(rgl.sys, rgl.wave, big, 8)
    zero = ex.PerturbationSpec("phase-front", target_E0=0.01)
    with pytest.raises(ValueError):
        ex.build_initial_data(rgl.sys, rgl.wave, zero, 8)


def test_additive_kinds(rgl):
    spec = ex.PerturbationSpec("additive-random", amplitude=0.01, seed=4)
    a = ex.build_initial_data(rgl.sys, rgl.wave, spec, 4, smallness=1e3)
    b = ex.build_initial_data(rgl.sys, rgl.wave, spec, 4, smallness=1e3)
    np.testing.assert_array_equal(a.u0, b.u0)
    assert np.max(np.abs(a.v0)) == pytest.approx(0.01)
    custom = ex.PerturbationSpec("additive-custom", amplitude=0.5,
                                 custom=lambda x: np.stack([np.cos(np.pi * x / 2)] * 2, 1))
    c = ex.build_initial_data(rgl.sys, rgl.wave, custom, 4, smallness=1e3)
    assert np.max(np.abs(c.v0)) == pytest.approx(0.5)
    np.testing.assert_array_equal(c.gamma0, 0.0)


def test_wavenumber_modulated_local_wavenumber(rgl):
    spec = ex.PerturbationSpec("wavenumber-modulated", gamma_plus=0.5, width=1.0)
    with pytest.raises(ValueError):
        ex.build_initial_data(rgl.sys, rgl.wave, spec, 16, smallness=1e3)
    init = ex.build_initial_data(rgl.sys, rgl.wave, spec, 16, family=rgl.family,
                                 smallness=1e3)
    mid, k = ex.local_wavenumber(init.x, init.u0, rgl.k)
    gz = ex.phase_ramp_derivative(mid, 16, 0.0, 0.5, 1.0)
    np.testing.assert_allclose(k, rgl.k * (1 + gz), atol=5e-3 * rgl.k)  # spacing averages gamma_z over a period
    # plateaus carry the base wavenumber
    plateau = np.abs(np.abs(mid) - 4) > 4
    np.testing.assert_allclose(k[plateau], rgl.k, atol=1e-6)


def test_wavenumber_model(rgl):
    wm = ex.WavenumberModel.from_family(rgl.family)
    z = np.linspace(0, 1, 7)
    np.testing.assert_allclose(wm(z, np.zeros(7)), ex.profile_at(rgl.wave.phi, z),
                               atol=1e-12)
    # continuation samples are pinned, unlike the gauge-shifted family.profile
    i = rgl.family.base_index + 1
    kappa = rgl.family.ks[i] / rgl.k - 1
    exact = ex.profile_at(rgl.family.samples[i].phi, z)
    assert np.max(np.abs(wm(z, np.full(7, kappa)) - exact)) < 1e-6


# --- simulation ---------------------------------------------------------------

def test_schedule():
    t = ex.snapshot_schedule(0.5, 200, 1.25, 0.05)
    assert t[0] == 0 and t[1] == 0.5 and t[-1] == pytest.approx(200)
    np.testing.assert_allclose(t / 0.05, np.round(t / 0.05), atol=1e-9)


def test_equilibrium_and_translate(rgl, small):
    init = zero_init(small)
    traj = ex.simulate(rgl.sys, small, init, 5.0, dt=0.05)
    assert np.max(np.abs(traj.snapshots - init.u0)) < 1e-9
    shifted = small.shifted(0.13)
    init2 = zero_init(shifted)
    traj2 = ex.simulate(rgl.sys, shifted, init2, 5.0, dt=0.05)
    np.testing.assert_allclose(traj2.snapshots[-1], ex.tile_profile(shifted.phi, L_SMALL),
                               atol=1e-9)
    assert traj.manifest()["scheme"] == "ETDRK4"


def test_blow_up_and_arguments(rgl, small):
    spec = ex.PerturbationSpec("additive-custom", amplitude=1.0,
                               custom=lambda x: np.full((x.size, 2), 5.0))
    init = ex.build_initial_data(rgl.sys, small, spec, L_SMALL, smallness=100)
    with pytest.raises(ex.BlowUpError):
        ex.simulate(rgl.sys, small, init, 2.0, dt=0.5, cap=10.0, halving=False)
    with pytest.raises(ValueError):
        ex.simulate(rgl.sys, small, zero_init(small), -1.0)


def test_non_diagonal_diffusion_rejected():
    base = model.preset("real-ginzburg-landau")
    sys = model.RDSystem("coupled", np.array([[1.0, 0.2], [0.2, 1.0]]), base.f, base.df,
                         base.d2f)
    with pytest.raises(ValueError):
        ex.comoving_symbol(sys, 0.05, 0.0, 64, 4)


# --- phase extraction ---------------------------------------------------------

@pytest.mark.parametrize("s", [0.0, 0.01, -0.2, 0.37])
def test_extract_pure_translate(rgl, s):
    e = ex.PhaseExtractor(rgl.wave.phi, 4, 64)
    g, failed = e(ex.profile_at(rgl.wave.phi, ex.torus_grid(4, 64) + s))
    np.testing.assert_allclose(g, s, atol=1e-12)
    assert not failed.any()


def test_extract_manufactured_front(cgl1):
    L, N = 16, 64
    x = ex.torus_grid(L, N)
    gf = ex.phase_ramp(x, L, 0.0, 0.3, 0.5)
    u = ex.profile_at(cgl1.wave.phi, x + gf)
    errs = [np.max(np.abs(ex.PhaseExtractor(cgl1.wave.phi, L, N, w)(u)[0] - gf))
            for w in (0.05, 0.3, 1.0)]
    assert errs[0] < 1e-3
    # the window averages gamma, so the bias grows with its width
    assert errs[0] < errs[1] < errs[2]


def test_extraction_needs_first_harmonic(rgl):
    x = spectral.grid(32)
    phi = np.column_stack([np.cos(4 * np.pi * x), np.sin(4 * np.pi * x)])
    with pytest.raises(ex.ExtractionError):
        ex.PhaseExtractor(phi, 4, 32)


def test_time_derivative_exact_for_quadratics():
    t = np.array([0.0, 0.5, 1.3, 2.0, 3.1])
    y = (2 + 3 * t - 0.7 * t ** 2)[:, None] * np.ones((1, 3))
    np.testing.assert_allclose(ex._time_derivative(t, y), (3 - 1.4 * t)[:, None] * np.ones(3),
                               atol=1e-12)


def test_comparison_with_zero_data(rgl, small):
    init = zero_init(small)
    traj = ex.simulate(rgl.sys, small, init, 2.0, halving=False)
    diag = ex.extract_phase(traj, small)
    np.testing.assert_allclose(diag.gamma, 0.0, atol=1e-12)
    hj = ex.compare_to_hj(traj, diag, init.v0, 0.0, rgl.d, 0.0, rgl.curve.adjoint0)
    assert np.max(hj.errors) < 1e-12
    with pytest.raises(ValueError):
        ex.measure_decay(traj, diag, small, t_min=1.0, t_max=2.0)


# --- corollary --------------------------------------------------------------------

def test_invert_constant_shift():
    x = ex.torus_grid(4, 32)
    np.testing.assert_allclose(ex.invert_phase_map(x, np.full(x.size, 0.3), 4), x + 0.3,
                               atol=1e-15)


def test_invert_residual_and_gate():
    L = 4
    x = ex.torus_grid(L, 64)
    g = 0.1 * np.sin(2 * np.pi * x / L)
    z = ex.invert_phase_map(x, g, L)
    s = z - x
    assert np.max(np.abs(s - ex.taylor_shift(g, s, L))) < 1e-10
    with pytest.raises(ex.InvertibilityError):
        ex.invert_phase_map(x, 1.0 * np.sin(2 * np.pi * x / L), L)


# --- nonlinearities -----------------------------------------------------------------

@pytest.fixture(scope="module")
def ctx_fields(cgl1):
    L, N = 4, 32
    wave = cgl1.wave.resampled(N)
    dk = spectral.interp_periodic(cgl1.family.dk_phi, spectral.grid(N))
    ctx = ex.ModulationContext.build(cgl1.sys, wave, dk, cgl1.omega1, L)
    x = ex.torus_grid(L, N)
    v = 0.05 * np.stack([np.sin(2 * np.pi * x / L + 0.3), np.cos(6 * np.pi * x / L)], 1)
    g = 0.05 * np.sin(2 * np.pi * x / L)
    gt = 0.03 * np.cos(2 * np.pi * x / L)
    return ctx, x, v, g, gt


@pytest.mark.parametrize("kind", ["Q", "R", "S"])
def test_nonlinearities_vanish(ctx_fields, kind):
    ctx, x, v, g, gt = ctx_fields
    out = ex.nonlinearity_eval(kind, ctx, 0 * v, np.full(x.size, 0.2), 0 * gt)
    np.testing.assert_allclose(out, 0.0, atol=1e-14)


def test_q_is_quadratic(ctx_fields):
    ctx, x, v, g, gt = ctx_fields
    norms = [np.max(np.abs(ex.nonlinearity_eval("Q", ctx, e * v, g))) for e in (1, 0.5, 0.25)]
    assert norms[0] / norms[1] == pytest.approx(4, rel=0.1)
    assert norms[1] / norms[2] == pytest.approx(4, rel=0.05)


def test_fp_decomposition(ctx_fields):
    ctx, x, v, g, gt = ctx_fields
    assert ex.fp_decomposition_check(ctx, v, g, gt) < 1e-10


@pytest.mark.parametrize("scale", [1.0, 0.5])
def test_modulation_residual(ctx_fields, scale):
    ctx, x, v, g, gt = ctx_fields
    assert ex.modulation_residual_check(ctx, ctx.phi0 + v, scale * g, scale * gt) < 1e-10


def test_printed_forms_are_not_exact(ctx_fields):
    ctx, x, v, g, gt = ctx_fields
    assert ex.modulation_residual_check(ctx, ctx.phi0 + v, g, gt, "printed") > 1e-6
    assert ex.fp_decomposition_check(ctx, v, g, gt, "printed") > 1e-6


def test_nonlinearity_arguments(ctx_fields):
    ctx, x, v, g, gt = ctx_fields
    with pytest.raises(ValueError):
        ex.nonlinearity_eval("T", ctx, v, g, gt)
    with pytest.raises(ValueError):
        ex.nonlinearity_eval("Q", ctx, v, 2.0 * np.sin(2 * np.pi * x), gt)
    with pytest.raises(ValueError):
        ex.nonlinearity_eval("Q", ctx, v, g, gt, variant="draft")


# --- invariants of the long runs ---------------------------------------------------

@pytest.mark.parametrize("run", ["rgl_run", "cgl_run"])
def test_run_invariants(run, request):
    r = request.getfixturevalue(run)
    assert r.traj.halving_error < 1e-6
    assert np.max(np.abs(r.diag.gamma_z)) < 1
    assert r.diag.failures.max() == 0
    late = r.traj.times >= 20
    s = r.decay.series
    assert np.all(s["modulated"][late] <= s["unmodulated"][late] + 1e-8)


@pytest.mark.parametrize("run", ["rgl_run", "cgl_run"])
def test_wavenumber_correction_gains_half_power(run, request):
    f = request.getfixturevalue(run).decay.fits
    gain = f["modulated"].slope - f["wavenumber_corrected_plain"].slope
    assert 0.35 <= gain <= 0.6
