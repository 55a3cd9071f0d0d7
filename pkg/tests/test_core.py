import numpy as np
import pytest
from hypothesis import given, strategies as st

from banditsgd.core import (ConfigError, DivergenceError, Observation, SeedSpec, StepSchedule, arm_slice,
                            check_arm, step_size)


def test_step_size_examples():
    assert step_size(StepSchedule(0.5, 0.8, 300), 1) == pytest.approx(0.5 * 300 ** -0.8)
    assert step_size(StepSchedule(0.5, 0.8, 300), 1) == pytest.approx(0.005219, rel=1e-3)
    assert step_size(StepSchedule(1.0, 0.8, 1), 1) == 1.0
    # the formula value; a commonly quoted 6.136e-5 does not follow from it
    assert step_size(StepSchedule(0.5, 0.8, 300), 80_000) == pytest.approx(5.9772e-5, rel=1e-4)


def test_step_size_vectorized_and_callable():
    sched = StepSchedule()
    ts = np.arange(1, 1000)
    np.testing.assert_allclose(step_size(sched, ts), [sched(t) for t in ts])


@given(eta0=st.floats(1e-3, 10), alpha=st.floats(0.51, 0.99), t0=st.integers(1, 1000),
       t=st.integers(1, 10 ** 6))
def test_step_size_positive_nonincreasing(eta0, alpha, t0, t):
    s = StepSchedule(eta0, alpha, t0)
    assert s(t) > 0
    assert s(t + 1) <= s(t)


@pytest.mark.parametrize("kw", [dict(eta0=0), dict(alpha=0.5), dict(alpha=1.0), dict(meltdown=0),
                                dict(meltdown=2.5)])
def test_step_schedule_rejects(kw):
    with pytest.raises(ConfigError):
        StepSchedule(**kw)


def test_step_size_rejects_t0():
    with pytest.raises(ConfigError):
        step_size(StepSchedule(), 0)


def test_arm_slice_examples():
    th = np.array([1.0, 2, 3, 4])
    np.testing.assert_array_equal(arm_slice(th, 0), [1, 2])
    np.testing.assert_array_equal(arm_slice(th, 1), [3, 4])
    big = np.arange(1, 21)
    np.testing.assert_array_equal(arm_slice(big, 1), np.arange(11, 21))


def test_arm_slice_is_view():
    th = np.zeros(6)
    arm_slice(th, 1)[:] = 5
    np.testing.assert_array_equal(th, [0, 0, 0, 5, 5, 5])


@given(p=st.integers(1, 20))
def test_arm_slices_partition(p):
    idx = np.arange(2 * p)
    a, b = arm_slice(idx, 0), arm_slice(idx, 1)
    assert set(a).isdisjoint(b)
    assert sorted(np.concatenate([a, b])) == list(idx)


def test_arm_errors():
    with pytest.raises(ConfigError):
        arm_slice(np.zeros(4), 2)
    with pytest.raises(ConfigError):
        arm_slice(np.zeros(5), 0)
    with pytest.raises(ConfigError, match="K=2"):
        check_arm(0, n_arms=3)


def test_observation_validation():
    Observation(np.ones(2), 1, 0.0, 0.5)
    with pytest.raises(ConfigError):
        Observation(np.ones(2), 0, 0.0, 1.0)
    with pytest.raises(ConfigError):
        Observation(np.array([np.nan, 1.0]), 0, 0.0, 0.5)
    with pytest.raises(ConfigError):
        Observation(np.ones(2), 2, 0.0, 0.5)


def test_seed_spec_reproducible_and_distinct():
    a = SeedSpec(7, 3).generators(3)
    b = SeedSpec(7, 3).generators(3)
    c = SeedSpec(7, 4).generators(3)
    for ga, gb in zip(a, b):
        np.testing.assert_array_equal(ga.random(10), gb.random(10))
    assert not np.array_equal(SeedSpec(7, 3).rng().random(10), c[0].random(10))
    # children of one spec differ from each other
    g = SeedSpec(7, 3).generators(2)
    assert not np.array_equal(g[0].random(5), g[1].random(5))


def test_divergence_error_message():
    err = DivergenceError(12, 1e300, (5, 9))
    assert err.t == 12 and err.seed == (5, 9)
    assert "stream=9" in str(err)
