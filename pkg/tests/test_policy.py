import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from banditsgd.core import ConfigError
from banditsgd.policy import (EpsilonSchedule, WeightScheme, epsilon_at, prob_arm0, prob_arm0_batch,
                              sample_action, weight)

theta4 = st.lists(st.floats(-5, 5), min_size=4, max_size=4).map(np.array)
x2 = st.lists(st.floats(-5, 5), min_size=2, max_size=2).map(np.array)


def test_prob_arm0_examples():
    th = np.array([2.0, 0.0, 1.0, 0.0])
    assert prob_arm0([1.0, 0.0], th, 1.0) == 0.5
    assert prob_arm0([1.0, 0.0], th, 0.02) == pytest.approx(0.99)
    tie = np.array([1.0, 0.0, 1.0, 0.0])
    assert prob_arm0([1.0, 0.0], tie, 0.02) == pytest.approx(0.01)


@given(x=x2, th=theta4, eps=st.floats(0.001, 1.0), c=st.floats(0.01, 100))
def test_prob_bounds_and_scale_invariance(x, th, eps, c):
    p = prob_arm0(x, th, eps)
    assert eps / 2 - 1e-15 <= p <= 1 - eps / 2 + 1e-15
    assert prob_arm0(x, c * th, eps) == p or abs(x @ th[:2] - x @ th[2:]) < 1e-9


def test_prob_batch_matches_scalar(rng):
    X = rng.standard_normal((50, 3))
    th = rng.standard_normal(6)
    np.testing.assert_allclose(prob_arm0_batch(X, th, 0.1), [prob_arm0(x, th, 0.1) for x in X])


def test_sample_action_examples():
    rng = np.random.default_rng(0)
    assert sample_action(rng, 0.5)[1] == 0.5
    a1 = [sample_action(np.random.default_rng(3), 0.3) for _ in range(1)]
    g1, g2 = np.random.default_rng(3), np.random.default_rng(3)
    s1 = [sample_action(g1, 0.3) for _ in range(200)]
    s2 = [sample_action(g2, 0.3) for _ in range(200)]
    assert s1 == s2 and a1[0] == s1[0]
    for a, pr in s1:
        assert pr == (0.3 if a == 0 else 0.7)


def test_sample_action_frequency():
    p0 = 1 - 1e-3
    rng = np.random.default_rng(1)
    n = 10 ** 6
    hits = sum(1 for _ in range(n) if sample_action(rng, p0)[0] == 0)
    sd = np.sqrt(n * p0 * (1 - p0))
    assert abs(hits - n * p0) <= 3 * sd


def test_weight_examples():
    assert weight(WeightScheme("vanilla"), 0.123) == 1.0
    assert weight(WeightScheme("ipw"), 0.5) == 1.0
    assert weight(WeightScheme("sqrt_ipw"), 0.005) == pytest.approx(10.0)
    assert weight(WeightScheme("power", -1.0), 0.25) == pytest.approx(4.0)


@given(p=st.floats(0.01, 0.99))
def test_ipw_unbiases_to_uniform(p):
    w = WeightScheme("ipw")
    # arm 0 drawn w.p. p, arm 1 w.p. 1-p
    assert p * weight(w, p) == pytest.approx(0.5)
    assert (1 - p) * weight(w, 1 - p) == pytest.approx(0.5)


@given(eps=st.floats(0.01, 1.0), kind=st.sampled_from(["vanilla", "ipw", "sqrt_ipw"]))
def test_weights_bounded_for_eps_bounded_away(eps, kind):
    s = WeightScheme(kind)
    probs = np.array([eps / 2, 1 - eps / 2, 0.5])
    w = s.phi(probs)
    assert np.all(w > 0) and np.all(w <= 1 / eps + 1e-12)


def test_weight_scheme_parse():
    assert WeightScheme.parse("sqrt-ipw") == WeightScheme("sqrt_ipw")
    assert WeightScheme.parse("power:-0.5") == WeightScheme("power", -0.5)
    assert WeightScheme.parse("power:-0.5").label == "power:-0.5"
    for bad in ("power:x", "foo"):
        with pytest.raises(ConfigError):
            WeightScheme.parse(bad)
    with pytest.raises(ConfigError):
        weight(WeightScheme(), 1.0)


def test_epsilon_examples():
    assert epsilon_at(EpsilonSchedule.constant(0.02), 12345) == 0.02
    conv = EpsilonSchedule("converging", 0.02, c=0.5, beta=0.5)
    assert epsilon_at(conv, 10_000) == pytest.approx(0.025)
    flat = EpsilonSchedule("converging", 0.02, c=0.0)
    ts = np.arange(1, 100)
    np.testing.assert_allclose(epsilon_at(flat, ts), epsilon_at(EpsilonSchedule.constant(0.02), ts))


def test_epsilon_validation_and_rate_warning():
    with pytest.raises(ConfigError):
        EpsilonSchedule.constant(0.0)
    with pytest.raises(ConfigError):
        EpsilonSchedule("sometimes")
    with pytest.raises(ConfigError):
        epsilon_at(EpsilonSchedule.constant(0.1), 0)
    with pytest.warns(UserWarning):
        EpsilonSchedule("converging", 0.02, c=1.0, beta=0.1).check_rate(0.8)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        EpsilonSchedule("converging", 0.02, c=1.0, beta=0.5).check_rate(0.8)
