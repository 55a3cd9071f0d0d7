"""Synthetic two-arm environments that emit potential outcomes in blocks.

Every environment draws covariates, reward noise and action uniforms from
three separate generators, so the block size never changes the stream.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from ..core import ConfigError, arm_slice
from ..engine import Draws
from ..losses import LossModel

ENV_KINDS = ("linear", "quantile", "logistic")


def default_theta_star(p: int, scale: float = 0.275) -> np.ndarray:
    """Fixed, arm-distinct true parameter used by the default simulation setups.

    Every coordinate has magnitude ``scale``. Arm 0 alternates signs, arm 1
    is positive on its first half and negative on the second. When the
    two patterns coincide (``p <= 2``) arm 1 is the negation of arm 0.
    """
    k = np.arange(p)
    arm0 = np.where(k % 2 == 0, scale, -scale)
    arm1 = np.where(k < (p + 1) // 2, scale, -scale)
    if np.array_equal(arm0, arm1):
        arm1 = -arm0
    return np.concatenate([arm0, arm1]).astype(float)


@dataclass
class Environment:
    """I.i.d. covariates ``X ~ N(mu, I)`` and per-arm potential outcomes.

    Parameters
    ----------
    kind
        ``linear`` (Gaussian noise), ``quantile`` (Gaussian noise shifted so
        that its ``tau``-quantile is zero) or ``logistic`` (labels in {-1, +1}).
    theta_star
        Concatenated true parameter of length ``2p``.
    mu
        Covariate mean; zero when omitted.
    sigma
        Noise standard deviation (linear and quantile).
    tau
        Quantile level (quantile only).
    intercept
        Replace the first covariate by a constant 1.
    """

    kind: str
    theta_star: np.ndarray
    mu: np.ndarray | None = None
    sigma: float = 0.1
    tau: float | None = None
    intercept: bool = False
    shift: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.kind not in ENV_KINDS:
            raise ConfigError(f"unknown environment kind {self.kind!r}; expected one of {ENV_KINDS}")
        self.theta_star = np.asarray(self.theta_star, dtype=float)
        if self.theta_star.ndim != 1 or self.theta_star.shape[0] % 2:
            raise ConfigError("theta_star must have even length 2p")
        p = self.p
        self.mu = np.zeros(p) if self.mu is None else np.asarray(self.mu, dtype=float)
        if self.mu.shape != (p,):
            raise ConfigError(f"mu must have length p={p}")
        if np.array_equal(arm_slice(self.theta_star, 0), arm_slice(self.theta_star, 1)):
            raise ConfigError("theta_star arms must differ")
        if self.kind in ("linear", "quantile") and not self.sigma >= 0:
            raise ConfigError(f"sigma must be non-negative, got {self.sigma}")
        if self.kind == "quantile":
            if self.tau is None or not 0.0 < self.tau < 1.0:
                raise ConfigError(f"quantile environment needs tau in (0, 1), got {self.tau}")
            if not self.sigma > 0:
                raise ConfigError("quantile environment needs sigma > 0")
            # P(sigma Z + shift <= 0) = tau
            self.shift = -self.sigma * float(norm.ppf(self.tau))
        elif self.tau is not None:
            raise ConfigError("tau is only meaningful for the quantile environment")

    @property
    def p(self) -> int:
        return self.theta_star.shape[0] // 2

    @property
    def d(self) -> int:
        return self.theta_star.shape[0]

    def loss_model(self) -> LossModel:
        if self.kind == "linear":
            return LossModel("squared")
        if self.kind == "logistic":
            return LossModel("logistic")
        return LossModel("pinball", self.tau)

    def noise_density_at_zero(self) -> float:
        """Density of the quantile noise at 0 (the ``q(0)`` factor of the quantile Hessian)."""
        if self.kind != "quantile":
            raise ConfigError("noise density is only defined for the quantile environment")
        return float(norm.pdf(-self.shift / self.sigma) / self.sigma)

    def covariates(self, rng: np.random.Generator, n: int) -> np.ndarray:
        X = rng.standard_normal((n, self.p))
        X += self.mu
        if self.intercept:
            X[:, 0] = 1.0
        return X

    def draw(self, gens, n: int) -> Draws:
        """Draw ``n`` rounds from the three generators ``(covariates, noise, actions)``."""
        g_x, g_y, g_a = gens
        X = self.covariates(g_x, n)
        # row-wise reductions, not BLAS: keeps results bit-identical across block sizes
        means = np.column_stack([(X * arm_slice(self.theta_star, a)).sum(axis=1) for a in (0, 1)])
        if self.kind == "logistic":
            u = g_y.random(n)[:, None]
            Y = np.where(u < 1.0 / (1.0 + np.exp(-means)), 1.0, -1.0)
        else:
            # one noise draw per round, shared by both potential outcomes
            e = self.sigma * g_y.standard_normal(n) + self.shift
            Y = means + e[:, None]
        return Draws(X, Y, g_a.random(n))
