"""Per-observation losses for the three regression models.

Each function takes the selected arm's parameter block only; embedding into
the full parameter vector is the engine's job.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import ConfigError

KINDS = ("squared", "logistic", "pinball")
MODEL_CODES = {"squared": 0, "logistic": 1, "pinball": 2}


@dataclass(frozen=True)
class LossModel:
    kind: str = "squared"
    tau: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "pinball":
            if self.tau is None or not 0.0 < self.tau < 1.0:
                raise ConfigError(f"pinball loss needs tau in (0, 1), got {self.tau}")
        elif self.tau is not None:
            raise ConfigError(f"tau is only meaningful for the pinball loss, not {self.kind!r}")

    @property
    def code(self) -> int:
        return MODEL_CODES[self.kind]

    @property
    def smooth(self) -> bool:
        return self.kind != "pinball"


def _check(theta_arm, x, y):
    theta_arm = np.asarray(theta_arm, dtype=float)
    x = np.asarray(x, dtype=float)
    if theta_arm.shape != x.shape:
        raise ConfigError(f"dimension mismatch: theta {theta_arm.shape} vs x {x.shape}")
    if not (np.all(np.isfinite(theta_arm)) and np.all(np.isfinite(x)) and np.isfinite(y)):
        raise ConfigError("non-finite input to loss")
    return theta_arm, x, float(y)


def value(model: LossModel, theta_arm, x, y) -> float:
    theta_arm, x, y = _check(theta_arm, x, y)
    m = x @ theta_arm
    if model.kind == "squared":
        return 0.5 * (y - m) ** 2
    if model.kind == "logistic":
        return float(np.logaddexp(0.0, -y * m))
    u = y - m
    return u * (model.tau - (1.0 if u < 0 else 0.0))


def grad(model: LossModel, theta_arm, x, y) -> np.ndarray:
    """Stochastic (sub)gradient with respect to the arm block.

    For the pinball loss the tie ``y == x @ theta`` takes the ``tau`` branch.
    """
    theta_arm, x, y = _check(theta_arm, x, y)
    m = x @ theta_arm
    if model.kind == "squared":
        return (m - y) * x
    if model.kind == "logistic":
        # -y x / (1 + exp(y m)) written as -y * sigmoid(-y m) * x
        return -y * expit(-y * m) * x
    return -(model.tau - (1.0 if y - m < 0 else 0.0)) * x


def hess(model: LossModel, theta_arm, x, y) -> np.ndarray | None:
    """Pointwise Hessian, or ``None`` for the pinball loss (it has none)."""
    theta_arm, x, y = _check(theta_arm, x, y)
    if model.kind == "squared":
        return np.outer(x, x)
    if model.kind == "logistic":
        m = x @ theta_arm
        return expit(m) * expit(-m) * np.outer(x, x)
    return None
