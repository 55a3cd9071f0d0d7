"""Epsilon-greedy action probabilities and gradient weights."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, arm_slice

WEIGHT_CODES = {"vanilla": 0, "ipw": 1, "sqrt_ipw": 2, "power": 3}


@dataclass(frozen=True)
class EpsilonSchedule:
    """Exploration rate per step.

    ``constant`` emits ``eps_inf`` for every step. ``converging`` emits
    ``clip(eps_inf + c * t**-beta, lo, hi)``.
    """

    kind: str = "constant"
    eps_inf: float = 0.02
    c: float = 0.0
    beta: float = 0.5
    lo: float = 1e-6
    hi: float = 1.0 - 1e-6

    def __post_init__(self):
        if self.kind not in ("constant", "converging"):
            raise ConfigError(f"unknown epsilon schedule {self.kind!r}")
        if not 0.0 < self.eps_inf <= 1.0:
            raise ConfigError(f"eps must lie in (0, 1], got {self.eps_inf}")
        if self.kind == "converging":
            if self.c < 0 or self.beta <= 0:
                raise ConfigError("converging schedule needs c >= 0 and beta > 0")
            if not 0.0 < self.lo <= self.hi < 1.0:
                raise ConfigError("converging schedule needs 0 < lo <= hi < 1")

    @classmethod
    def constant(cls, eps: float) -> "EpsilonSchedule":
        return cls("constant", eps)

    def check_rate(self, alpha: float) -> None:
        """Warn when the schedule converges slower than t^(-alpha/2)."""
        if self.kind == "converging" and self.c > 0 and self.beta < alpha / 2:
            warnings.warn(
                f"epsilon schedule decays as t^-{self.beta}, slower than the "
                f"t^-{alpha / 2:g} needed for the Bahadur remainder rate",
                stacklevel=2,
            )


def epsilon_at(schedule: EpsilonSchedule, t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 1):
        raise ConfigError("t must be >= 1")
    if schedule.kind == "constant":
        out = np.full(t_arr.shape, schedule.eps_inf)
    else:
        out = np.clip(schedule.eps_inf + schedule.c * t_arr ** -schedule.beta, schedule.lo, schedule.hi)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class WeightScheme:
    """Gradient weight as a function of the realized action probability.

    ``ipw`` and ``sqrt_ipw`` carry the factor 2 of a uniform two-arm
    reference policy; ``power`` is the bare ``prob ** gamma``.
    """

    kind: str = "vanilla"
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in WEIGHT_CODES:
            raise ConfigError(f"unknown weight scheme {self.kind!r}")

    @property
    def code(self) -> int:
        return WEIGHT_CODES[self.kind]

    @property
    def label(self) -> str:
        if self.kind == "power":
            return f"power:{self.gamma:g}"
        return self.kind.replace("_", "-")

    def phi(self, prob):
        """Weight function applied to an action probability (vectorized)."""
        prob = np.asarray(prob, dtype=float)
        if self.kind == "vanilla":
            out = np.ones_like(prob)
        elif self.kind == "ipw":
            out = 1.0 / (2.0 * prob)
        elif self.kind == "sqrt_ipw":
            out = np.sqrt(1.0 / (2.0 * prob))
        else:
            out = prob ** self.gamma
        return float(out) if out.ndim == 0 else out

    @classmethod
    def parse(cls, text: str) -> "WeightScheme":
        """Parse ``vanilla``, ``ipw``, ``sqrt-ipw`` or ``power:<gamma>``."""
        text = text.strip().lower()
        if text.startswith("power:"):
            try:
                return cls("power", float(text.split(":", 1)[1]))
            except ValueError:
                raise ConfigError(f"bad power exponent in {text!r}") from None
        key = text.replace("-", "_")
        if key not in ("vanilla", "ipw", "sqrt_ipw"):
            raise ConfigError(f"unknown weight scheme {text!r}")
        return cls(key)


def weight(scheme: WeightScheme, action_prob: float) -> float:
    if not 0.0 < action_prob < 1.0:
        raise ConfigError(f"action_prob must lie in (0, 1), got {action_prob}")
    return scheme.phi(action_prob)


def prob_arm0(x, theta, eps: float) -> float:
    """Probability that epsilon-greedy pulls arm 0.

    Arm 0 is greedy only when its predicted reward is strictly larger;
    ties send the greedy mass to arm 1.
    """
    if not 0.0 < eps <= 1.0:
        raise ConfigError(f"eps must lie in (0, 1], got {eps}")
    x = np.asarray(x, dtype=float)
    greedy0 = float(x @ arm_slice(theta, 0)) > float(x @ arm_slice(theta, 1))
    return (1.0 - eps) * greedy0 + eps / 2.0


def prob_arm0_batch(X: np.ndarray, theta: np.ndarray, eps) -> np.ndarray:
    p = X.shape[1]
    greedy0 = X @ theta[:p] > X @ theta[p:]
    return (1.0 - eps) * greedy0 + eps / 2.0


def sample_action(rng: np.random.Generator, p0: float) -> tuple[int, float]:
    """Draw an arm; returns it with the probability it had of being drawn."""
    if not 0.0 < p0 < 1.0:
        raise ConfigError(f"p0 must lie in (0, 1), got {p0}")
    return (0, p0) if rng.random() < p0 else (1, 1.0 - p0)
