import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from wavemod import model

PRESET_NAMES = ["real-ginzburg-landau", "brusselator", "schnakenberg",
                "complex-ginzburg-landau"]
states = arrays(float, 2, elements=st.floats(-2, 2))


@pytest.mark.parametrize("u, expected", [
    ((0.0, 0.0), (0.0, 0.0)),
    ((1.0, 0.0), (0.0, 0.0)),
    ((2.0, 0.0), (-6.0, 0.0)),
])
def test_real_gl_reaction(u, expected):
    sys = model.preset("real-ginzburg-landau")
    np.testing.assert_allclose(model.evaluate_reaction(sys, u), expected, atol=1e-15)


def test_real_gl_derivatives():
    sys = model.preset("real-ginzburg-landau")
    np.testing.assert_allclose(model.evaluate_jacobian(sys, [0.0, 0.0]), np.eye(2))
    e = np.array([1.0, 0.0])
    np.testing.assert_allclose(model.evaluate_hessian_bilinear(sys, e, e, e), [-6.0, 0.0])


def test_real_gl_definition():
    sys = model.preset("real-ginzburg-landau")
    assert sys.n == 2
    np.testing.assert_array_equal(sys.D, np.eye(2))


def test_brusselator_steady_state():
    sys = model.preset("brusselator")
    u = model.steady_state(sys)
    np.testing.assert_allclose(u, [1.0, 3.0])
    np.testing.assert_allclose(sys.reaction(u), 0.0, atol=1e-14)


def test_schnakenberg_steady_state():
    sys = model.preset("schnakenberg")
    np.testing.assert_allclose(sys.reaction(model.steady_state(sys)), 0.0, atol=1e-14)


def test_unknown_preset():
    with pytest.raises(KeyError):
        model.preset("unknown")


def test_dimension_mismatch():
    sys = model.preset("real-ginzburg-landau")
    with pytest.raises(model.DimensionError):
        model.evaluate_reaction(sys, [1.0, 2.0, 3.0])
    with pytest.raises(model.DimensionError):
        model.evaluate_hessian_bilinear(sys, [1.0, 0.0], [1.0], [0.0, 1.0])


def test_diffusion_matrix_validated():
    sys = model.preset("real-ginzburg-landau")
    with pytest.raises(ValueError):
        model.RDSystem("bad", np.array([[1.0, 0.0], [0.0, -1.0]]), sys.f, sys.df, sys.d2f)
    with pytest.raises(ValueError):
        model.RDSystem("bad", np.array([[1.0, 0.5], [0.0, 1.0]]), sys.f, sys.df, sys.d2f)


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_jacobian_central_difference_order(name):
    sys = model.preset(name)
    rng = np.random.default_rng(1)
    for _ in range(100):
        u = rng.uniform(-2, 2, 2)
        h = rng.standard_normal(2)
        h /= np.linalg.norm(h)
        err = []
        for eps in (1e-2, 5e-3):
            fd = (sys.f(u + eps * h) - sys.f(u - eps * h)) / 2
            err.append(np.linalg.norm(sys.df(u) @ (eps * h) - fd))
        if err[0] > 1e-12:
            assert 6.0 < err[0] / err[1] < 10.0


@pytest.mark.parametrize("name", PRESET_NAMES)
@settings(max_examples=50, deadline=None)
@given(u=states, v=states, w=states)
def test_hessian_symmetric(name, u, v, w):
    sys = model.preset(name)
    np.testing.assert_allclose(sys.d2f(u, v, w), sys.d2f(u, w, v), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name", PRESET_NAMES)
@settings(max_examples=30, deadline=None)
@given(u=states, v=states, w=states)
def test_hessian_matches_jacobian_differences(name, u, v, w):
    sys = model.preset(name)
    h = 1e-5
    fd = (sys.df(u + h * w) - sys.df(u - h * w)) @ v / (2 * h)
    scale = 1 + np.linalg.norm(v) * np.linalg.norm(w)
    np.testing.assert_allclose(sys.d2f(u, v, w), fd, atol=1e-6 * scale)


def test_vectorised_over_leading_axes():
    sys = model.preset("brusselator")
    u = np.random.default_rng(0).uniform(0, 2, (7, 3, 2))
    np.testing.assert_allclose(sys.f(u)[2, 1], sys.f(u[2, 1]))
    assert sys.df(u).shape == (7, 3, 2, 2)
