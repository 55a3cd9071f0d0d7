"""Offline evaluation of epsilon-greedy weighted SGD on logged click data.

A logged row is consumed only when the action sampled by the online policy
equals the logged action. Skipped rows leave the state untouched and do not
advance the step counter.

Log schema (CSV with header): ``timestamp,article_id,click,f1,f2,f3,f4,f5,f6``.
``f1..f5`` sum to one and ``f6`` is constant; the model uses
``x = (1, f2, f3, f4, f5)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from ..core import ConfigError, SeedSpec, StepSchedule
from ..engine import Draws, SgdState, advance
from ..inference import InferenceReport, PlugInAccumulator, report
from ..losses import LossModel
from ..policy import EpsilonSchedule, WeightScheme

HEADER = ["timestamp", "article_id", "click", "f1", "f2", "f3", "f4", "f5", "f6"]
# article id of arm 0, arm 1
DEFAULT_ARTICLES = (109520, 109510)
P_REPLAY = 5


class LogParseError(ConfigError):
    """A malformed row in a replay log; carries the 1-based line number."""

    def __init__(self, line: int, detail: str):
        self.line = line
        super().__init__(f"line {line}: {detail}")


class EmptyReplayError(RuntimeError):
    """No logged row matched the online policy."""


@dataclass(frozen=True)
class ReplayRecord:
    logged_action: int
    reward: float
    features: tuple

    @property
    def x(self) -> np.ndarray:
        f = self.features
        return np.array([1.0, f[1], f[2], f[3], f[4]])


def parse_log(lines: Iterable[str], articles: tuple[int, int] = DEFAULT_ARTICLES) -> Iterator[ReplayRecord]:
    """Yield records from CSV text lines (header first)."""
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise LogParseError(1, "empty log (missing header)") from None
    if [h.strip() for h in header] != HEADER:
        raise LogParseError(1, f"expected header {','.join(HEADER)}")
    arm_of = {int(articles[0]): 0, int(articles[1]): 1}
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(HEADER):
            raise LogParseError(line, f"expected {len(HEADER)} fields, got {len(row)}")
        try:
            article = int(row[1])
            click = int(row[2])
            feats = tuple(float(v) for v in row[3:])
        except ValueError as exc:
            raise LogParseError(line, str(exc)) from None
        if article not in arm_of:
            raise LogParseError(line, f"article_id {article} is not one of {tuple(articles)}")
        if click not in (0, 1):
            raise LogParseError(line, f"click must be 0 or 1, got {click}")
        if not all(np.isfinite(feats)):
            raise LogParseError(line, "non-finite feature")
        yield ReplayRecord(arm_of[article], 1.0 if click else -1.0, feats)


def load_log(path, articles: tuple[int, int] = DEFAULT_ARTICLES):
    """Read a log file into arrays ``(X, actions, rewards)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        recs = list(parse_log(fh, articles))
    return records_to_arrays(recs)


def records_to_arrays(records) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    recs = list(records)
    X = np.array([r.x for r in recs], dtype=float).reshape(len(recs), P_REPLAY)
    A = np.array([r.logged_action for r in recs], dtype=np.int64)
    Y = np.array([r.reward for r in recs], dtype=float)
    return X, A, Y


@dataclass
class ReplayResult:
    report: InferenceReport
    state: SgdState
    consumed: int
    skipped: int
    total: int

    @property
    def match_rate(self) -> float:
        seen = self.consumed + self.skipped
        return self.consumed / seen if seen else float("nan")


def replay(
    X: np.ndarray,
    actions: np.ndarray,
    rewards: np.ndarray,
    eps_schedule: EpsilonSchedule,
    scheme: WeightScheme,
    schedule: StepSchedule,
    seed: SeedSpec,
    *,
    max_consumed: int | None = None,
    level: float = 0.95,
    backend: str | None = None,
) -> ReplayResult:
    """Run the matching protocol over logged rows in order.

    ``max_consumed`` stops once that many rows were consumed; the rows
    after the stopping point count toward neither ``consumed`` nor
    ``skipped``, so ``consumed + skipped`` equals the number of rows read
    (``total``).
    """
    X = np.ascontiguousarray(X, dtype=float)
    n, p = X.shape
    actions = np.asarray(actions, dtype=np.int64)
    rewards = np.asarray(rewards, dtype=float)
    if actions.shape != (n,) or rewards.shape != (n,):
        raise ConfigError("X, actions and rewards must have matching lengths")
    if np.any((actions != 0) & (actions != 1)):
        raise ConfigError("logged actions must be 0 or 1")
    target = n if max_consumed is None else int(max_consumed)
    if target < 1:
        raise ConfigError("max_consumed must be >= 1")
    model = LossModel("logistic")
    state = SgdState.zeros(2 * p, schedule)
    acc = PlugInAccumulator(2 * p)
    u = seed.generators(3)[2].random(n)
    Y = np.repeat(rewards[:, None], 2, axis=1)
    pos = 0
    while pos < n and state.t < target:
        # every row consumes at most one step, so this block cannot overshoot
        m = min(target - state.t, n - pos)
        blk = slice(pos, pos + m)
        advance(state, acc, model, scheme, eps_schedule, Draws(X[blk], Y[blk], u[blk]),
                logged=actions[blk], backend=backend, seed=seed)
        pos += m
    if state.t == 0:
        raise EmptyReplayError(f"no logged row matched the online policy ({pos} rows read)")
    rep = report(state.theta_bar, acc, level)
    return ReplayResult(rep, state, state.t, state.skipped, pos)


def replay_file(path, eps_schedule, scheme, schedule, seed, *, articles=DEFAULT_ARTICLES, **kw) -> ReplayResult:
    X, A, Y = load_log(path, articles)
    if X.shape[0] == 0:
        raise EmptyReplayError(f"log {path} has no data rows")
    return replay(X, A, Y, eps_schedule, scheme, schedule, seed, **kw)


# ---------------------------------------------------------------------------
# Synthetic logs with a planted truth
# ---------------------------------------------------------------------------

def planted_theta() -> np.ndarray:
    """Planted logistic parameter of magnitude similar to real click logs.

    Intercepts of -1.5, slopes between -0.6 and -1.2. Each arm has its
    smallest penalties where the other has its largest, so both arms are
    greedy on part of the feature space.
    """
    arm0 = [-1.5, -0.6, -0.8, -1.0, -1.2]
    arm1 = [-1.5, -1.2, -1.0, -0.8, -0.6]
    return np.array(arm0 + arm1)


def synthetic_features(rng: np.random.Generator, n: int, concentration: float = 0.2) -> np.ndarray:
    """Raw ``f1..f6``: a Dirichlet draw on the first five, constant 1 as the sixth."""
    F = np.empty((n, 6))
    F[:, :5] = rng.dirichlet(np.full(5, concentration), size=n)
    F[:, 5] = 1.0
    return F


def synthetic_log(n_rows: int, seed: int, theta_star: np.ndarray | None = None,
                  concentration: float = 0.2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw features, logged actions and clicks from a uniform logging policy.

    Returns ``(F, actions, clicks)`` with ``F`` the ``n_rows x 6`` feature block.
    """
    theta_star = planted_theta() if theta_star is None else np.asarray(theta_star, dtype=float)
    if theta_star.shape != (2 * P_REPLAY,):
        raise ConfigError(f"planted theta must have length {2 * P_REPLAY}")
    if n_rows < 1:
        raise ConfigError("n_rows must be >= 1")
    g_x, g_a, g_y = SeedSpec(seed).generators(3)
    F = synthetic_features(g_x, n_rows, concentration)
    X = features_to_x(F)
    A = (g_a.random(n_rows) < 0.5).astype(np.int64)
    logits = np.where(A == 0, X @ theta_star[:P_REPLAY], X @ theta_star[P_REPLAY:])
    click = (g_y.random(n_rows) < 1.0 / (1.0 + np.exp(-logits))).astype(np.int64)
    return F, A, click


def features_to_x(F: np.ndarray) -> np.ndarray:
    """Model covariates ``(1, f2, f3, f4, f5)`` from raw ``f1..f6``."""
    F = np.asarray(F, dtype=float)
    return np.column_stack([np.ones(F.shape[0]), F[:, 1:5]])


def generate_log(path, n_rows: int, seed: int, theta_star: np.ndarray | None = None,
                 articles: tuple[int, int] = DEFAULT_ARTICLES, concentration: float = 0.2) -> Path:
    """Write :func:`synthetic_log` output as a CSV click log; returns the path."""
    F, A, click = synthetic_log(n_rows, seed, theta_star, concentration)
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for i in range(n_rows):
            w.writerow([1241160900 + i, articles[A[i]], click[i]] + [f"{v:.6f}" for v in F[i]])
    return path
