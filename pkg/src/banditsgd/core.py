"""Shared domain types: arms, parameter slices, step sizes, seeded streams."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_ARMS = 2


class ConfigError(ValueError):
    """Invalid configuration or argument; raised before any compute starts."""


class DivergenceError(RuntimeError):
    """The SGD recursion produced a non-finite iterate."""

    def __init__(self, t: int, norm: float, seed: tuple | None = None):
        self.t = t
        self.norm = norm
        self.seed = seed
        msg = f"SGD diverged at step t={t} (||theta||={norm:.3g})"
        if seed is not None:
            msg += f" [seed={seed[0]}, stream={seed[1]}]"
        super().__init__(msg)


def check_arm(a: int, n_arms: int = N_ARMS) -> int:
    if n_arms != N_ARMS:
        raise ConfigError(f"only K={N_ARMS} arms are supported, got K={n_arms}")
    a = int(a)
    if not 0 <= a < n_arms:
        raise ConfigError(f"arm index {a} out of range [0, {n_arms})")
    return a


def arm_slice(theta: np.ndarray, a: int, n_arms: int = N_ARMS) -> np.ndarray:
    """Return the contiguous block of ``theta`` owned by arm ``a``.

    The result is a view, so in-place writes touch exactly that arm's
    coordinates. Arm 0 owns the first ``p`` entries, arm 1 the next ``p``.
    """
    a = check_arm(a, n_arms)
    theta = np.asarray(theta)
    if theta.ndim != 1 or theta.shape[0] % n_arms:
        raise ConfigError(f"parameter length {theta.shape} is not divisible by K={n_arms}")
    p = theta.shape[0] // n_arms
    return theta[a * p:(a + 1) * p]


@dataclass(frozen=True)
class Observation:
    """One adaptively collected triplet plus the probability of the drawn action."""

    x: np.ndarray
    action: int
    reward: float
    action_prob: float

    def __post_init__(self):
        check_arm(self.action)
        if not 0.0 < self.action_prob < 1.0:
            raise ConfigError(f"action_prob must lie in (0, 1), got {self.action_prob}")
        if not np.all(np.isfinite(self.x)):
            raise ConfigError("covariate vector contains non-finite values")


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``eta0 * max(t, meltdown) ** -alpha``.

    The flat ``meltdown`` warm-up keeps early steps from blowing up while
    the iterate is far from the optimum.
    """

    eta0: float = 0.5
    alpha: float = 0.8
    meltdown: int = 300

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ConfigError(f"eta0 must be positive, got {self.eta0}")
        if not 0.5 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0.5, 1), got {self.alpha}")
        if int(self.meltdown) != self.meltdown or self.meltdown < 1:
            raise ConfigError(f"meltdown must be a positive integer, got {self.meltdown}")

    def __call__(self, t):
        return step_size(self, t)


def step_size(schedule: StepSchedule, t):
    t_arr = np.asarray(t)
    if np.any(t_arr < 1):
        raise ConfigError("step index t must be >= 1")
    out = schedule.eta0 * np.power(np.maximum(t_arr, schedule.meltdown).astype(float), -schedule.alpha)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SeedSpec:
    """Key of one reproducible random stream: ``(master_seed, stream_id)``.

    Streams come from :class:`numpy.random.SeedSequence` with the stream id
    as spawn key, so replication ``k`` draws the same numbers no matter how
    many replications run or in which order.
    """

    master_seed: int
    stream_id: int = 0

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=int(self.master_seed) & 0xFFFFFFFFFFFFFFFF,
            spawn_key=(int(self.stream_id),),
        )

    def generators(self, n: int) -> list[np.random.Generator]:
        """``n`` independent child generators (one per purpose: covariates, noise, actions ...)."""
        return [np.random.Generator(np.random.PCG64(s)) for s in self.seed_sequence().spawn(n)]

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_sequence()))
