"""Online plug-in sandwich covariance and Wald-type reports.

Scaling convention: :func:`sandwich` returns the covariance of the averaged
iterate itself, ``H^-1 S H^-1 / n``. Multiply by ``n`` for the covariance
of ``sqrt(n) * (theta_bar - theta_star)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.stats import norm

from .core import ConfigError, check_arm

Z95 = 1.959964


class SingularHessianError(np.linalg.LinAlgError):
    """The plug-in Hessian block of an arm is not positive definite."""

    def __init__(self, arm: int, detail: str = ""):
        self.arm = arm
        super().__init__(
            f"plug-in Hessian block for arm {arm} is singular or indefinite"
            f"{': ' + detail if detail else ''} (was the arm ever selected?)"
        )


@dataclass
class PlugInAccumulator:
    """Running sums for the plug-in estimates of ``S`` and ``H``.

    ``S_sum`` adds ``w^2 g g^T`` for the full-dimension gradient ``g``;
    ``H_sum`` adds ``w * hess`` into the selected arm's diagonal block.
    Accumulators over disjoint step ranges combine with ``+``.
    """

    d: int
    S_sum: np.ndarray = field(default=None)
    H_sum: np.ndarray = field(default=None)
    n: int = 0
    smooth: bool = True

    def __post_init__(self):
        if self.d % 2:
            raise ConfigError(f"dimension {self.d} is not divisible by K=2")
        if self.S_sum is None:
            self.S_sum = np.zeros((self.d, self.d))
        if self.H_sum is None:
            self.H_sum = np.zeros((self.d, self.d))

    @property
    def p(self) -> int:
        return self.d // 2

    def __add__(self, other: "PlugInAccumulator") -> "PlugInAccumulator":
        if self.d != other.d:
            raise ConfigError("cannot merge accumulators of different dimension")
        return PlugInAccumulator(
            self.d, self.S_sum + other.S_sum, self.H_sum + other.H_sum,
            self.n + other.n, self.smooth and other.smooth,
        )

    @property
    def S_hat(self) -> np.ndarray:
        return self.S_sum / max(self.n, 1)

    @property
    def H_hat(self) -> np.ndarray:
        return self.H_sum / max(self.n, 1)


def accumulate(acc: PlugInAccumulator, w: float, grad_full, hess_block, arm: int) -> PlugInAccumulator:
    arm = check_arm(arm)
    g = np.asarray(grad_full, dtype=float)
    p = acc.p
    outside = np.delete(g, np.s_[arm * p:(arm + 1) * p])
    if np.any(outside != 0):
        raise ConfigError("gradient must be zero outside the selected arm's block")
    if hess_block is None:
        if acc.smooth and acc.n > 0 and np.any(acc.H_sum):
            raise ConfigError("missing Hessian for a smooth model")
        acc.smooth = False
    else:
        blk = slice(arm * p, (arm + 1) * p)
        acc.H_sum[blk, blk] += w * np.asarray(hess_block, dtype=float)
    acc.S_sum += (w * w) * np.outer(g, g)
    acc.n += 1
    return acc


def _block_inverse(H: np.ndarray, p: int) -> np.ndarray:
    Hinv = np.zeros_like(H)
    for a in range(2):
        blk = slice(a * p, (a + 1) * p)
        Hb = 0.5 * (H[blk, blk] + H[blk, blk].T)
        if not np.any(Hb):
            raise SingularHessianError(a, "block is all zeros")
        try:
            c = linalg.cho_factor(Hb, lower=True)
        except linalg.LinAlgError as exc:
            raise SingularHessianError(a, str(exc)) from None
        rcond = np.min(np.diag(c[0])) ** 2 / np.max(np.diag(c[0])) ** 2
        if rcond < 1e-14:
            raise SingularHessianError(a, f"condition estimate {rcond:.1e}")
        Hinv[blk, blk] = linalg.cho_solve(c, np.eye(p))
    return Hinv


def sandwich(acc: PlugInAccumulator, H: np.ndarray | None = None) -> np.ndarray:
    """Plug-in covariance ``H^-1 S H^-1 / n`` of the averaged iterate.

    ``H`` overrides the plug-in Hessian; needed for the pinball loss, whose
    pointwise Hessian does not exist.
    """
    if acc.n < 1:
        raise ConfigError("accumulator is empty")
    if H is None:
        if not acc.smooth:
            raise ConfigError("non-smooth model: pass a Hessian explicitly")
        H = acc.H_hat
    Hinv = _block_inverse(np.asarray(H, dtype=float), acc.p)
    cov = Hinv @ acc.S_hat @ Hinv / acc.n
    return 0.5 * (cov + cov.T)


@dataclass
class InferenceReport:
    estimate: np.ndarray
    std_error: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    t_value: np.ndarray
    p_value: np.ndarray
    n: int
    level: float

    @property
    def names(self) -> list[str]:
        return [f"theta_{i + 1}" for i in range(len(self.estimate))]

    def rows(self):
        for i, name in enumerate(self.names):
            yield (name, self.estimate[i], self.std_error[i], self.ci_low[i],
                   self.ci_high[i], self.t_value[i], self.p_value[i])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["parameter", "estimate", "se", "lb", "ub", "t_value", "p_value"])
            for row in self.rows():
                writer.writerow([row[0]] + [f"{v:.10g}" for v in row[1:]])


def z_quantile(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise ConfigError(f"confidence level must lie in (0, 1), got {level}")
    if level == 0.95:
        return Z95
    return float(norm.ppf(0.5 * (1.0 + level)))


def wald_report(estimate, cov: np.ndarray, n: int, level: float = 0.95) -> InferenceReport:
    z = z_quantile(level)
    est = np.asarray(estimate, dtype=float)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        tval = np.where(se > 0, est / se, np.where(est == 0, 0.0, np.sign(est) * np.inf))
    pval = 2.0 * norm.sf(np.abs(tval))
    return InferenceReport(est, se, est - z * se, est + z * se, tval, pval, n, level)


def report(theta_bar, acc: PlugInAccumulator, level: float = 0.95, H: np.ndarray | None = None) -> InferenceReport:
    return wald_report(theta_bar, sandwich(acc, H), acc.n, level)
