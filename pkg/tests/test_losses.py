import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from banditsgd.core import ConfigError
from banditsgd.losses import LossModel, grad, hess, value

SQ, LOG, PIN = LossModel("squared"), LossModel("logistic"), LossModel("pinball", 0.75)

vec3 = st.lists(st.floats(-2, 2), min_size=3, max_size=3).map(np.array)


def test_grad_examples():
    np.testing.assert_allclose(grad(SQ, [1, 0], [1, 1], 2), [-1, -1])
    np.testing.assert_allclose(grad(PIN, [0, 0], [1, 0], 0.5), [-0.75, 0])
    np.testing.assert_allclose(grad(LOG, [0, 0], [2, 0], 1), [-1, 0])


def test_hess_examples():
    np.testing.assert_allclose(hess(SQ, [0, 0], [1, 2], 0), [[1, 2], [2, 4]])
    x = np.array([0.3, -1.2])
    np.testing.assert_allclose(hess(LOG, [0, 0], x, -1), 0.25 * np.outer(x, x))
    assert hess(PIN, [0, 0], [1, 2], 0) is None


def test_value_examples():
    assert value(SQ, [0.0], [1.0], 2.0) == pytest.approx(2.0)
    assert value(PIN, [0.0], [1.0], -1.0) == pytest.approx(0.25)
    assert value(LOG, [0.0], [1.0], 1.0) == pytest.approx(np.log(2))


def test_pinball_tie_takes_tau_branch():
    np.testing.assert_allclose(grad(PIN, [1.0], [1.0], 1.0), [-0.75])


def test_logistic_hessian_stable_for_large_margins():
    h = hess(LOG, [800.0], [1.0], 1.0)
    assert np.all(np.isfinite(h)) and h[0, 0] >= 0


def test_model_validation():
    with pytest.raises(ConfigError):
        LossModel("hinge")
    with pytest.raises(ConfigError):
        LossModel("pinball")
    with pytest.raises(ConfigError):
        LossModel("squared", 0.5)
    with pytest.raises(ConfigError):
        grad(SQ, [0, 0], [1, 0, 0], 1)
    with pytest.raises(ConfigError):
        grad(SQ, [0, 0], [1, np.inf], 1)


def _fd_grad(model, th, x, y, h=1e-6):
    out = np.zeros_like(th)
    for i in range(len(th)):
        e = np.zeros_like(th); e[i] = h
        out[i] = (value(model, th + e, x, y) - value(model, th - e, x, y)) / (2 * h)
    return out


@given(th=vec3, x=vec3, y=st.floats(-3, 3), kind=st.sampled_from(["squared", "logistic"]))
def test_grad_matches_finite_differences(th, x, y, kind):
    model = LossModel(kind)
    if kind == "logistic":
        y = 1.0 if y >= 0 else -1.0
    g = grad(model, th, x, y)
    np.testing.assert_allclose(_fd_grad(model, th, x, y), g, rtol=1e-6, atol=1e-7)


@given(th=vec3, x=vec3, y=st.floats(-3, 3), kind=st.sampled_from(["squared", "logistic"]))
def test_hess_matches_finite_differences(th, x, y, kind):
    model = LossModel(kind)
    if kind == "logistic":
        y = 1.0 if y >= 0 else -1.0
    h = 1e-6
    fd = np.zeros((3, 3))
    for i in range(3):
        e = np.zeros(3); e[i] = h
        fd[:, i] = (grad(model, th + e, x, y) - grad(model, th - e, x, y)) / (2 * h)
    np.testing.assert_allclose(fd, hess(model, th, x, y), rtol=1e-5, atol=1e-6)


@given(th=vec3, x=vec3, y=st.floats(-3, 3), tau=st.floats(0.05, 0.95))
def test_pinball_grad_is_slope_off_the_kink(th, x, y, tau):
    model = LossModel("pinball", tau)
    assume(abs(y - x @ th) > 1e-3 and np.linalg.norm(x) > 1e-3)
    np.testing.assert_allclose(_fd_grad(model, th, x, y, h=1e-7), grad(model, th, x, y), atol=1e-6)


@given(a=vec3, b=vec3, x=vec3, y=st.floats(-3, 3),
       model=st.sampled_from([SQ, LOG, PIN, LossModel("pinball", 0.2)]))
def test_convexity(a, b, x, y, model):
    if model.kind == "logistic":
        y = 1.0 if y >= 0 else -1.0
    mid = value(model, 0.5 * (a + b), x, y)
    assert mid <= 0.5 * (value(model, a, x, y) + value(model, b, x, y)) + 1e-12
