"""Empirical study of the linear Bahadur decomposition across replications.

One replication runs the linear environment once up to the largest horizon
and decomposes the averaged iterate at every requested horizon, reusing
the draws recorded through an engine hook.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..core import ConfigError, SeedSpec
from ..engine import run_online
from ..oracle import BahadurBasis, LinearGaussianSpec, bahadur_decompose
from .mc import McConfig, default_parallelism

DEFAULT_HORIZONS = (4000, 16000, 20000, 64000)


def _chunk(horizons) -> int:
    g = 0
    for t in horizons:
        g = math.gcd(g, int(t))
    return g


def _spec(config: McConfig) -> LinearGaussianSpec:
    return LinearGaussianSpec(config.mu_vector(), config.theta_star(), config.sigma, config.eps,
                              config.weight_scheme())


def decompose_rep(config: McConfig, stream_id: int, horizons, bases=None) -> dict:
    """``{t: BahadurTerms}`` for one replication."""
    horizons = sorted(int(t) for t in horizons)
    if not np.allclose(config.mu, 0.0):
        raise ConfigError("the Bahadur study supports centered covariates (mu = 0) only")
    if bases is None:
        spec = _spec(config)
        bases = {t: BahadurBasis.build(spec, config.step_schedule(), t) for t in horizons}
    env = config.environment()
    blocks, bars = [], {}
    want = set(horizons)

    def hook(draws, state):
        blocks.append((draws.X, draws.Y, draws.u_act))
        if state.t in want:
            bars[state.t] = state.theta_bar.copy()

    run_online(env, env.loss_model(), config.weight_scheme(), config.eps_schedule(),
               config.step_schedule(), horizons[-1], SeedSpec(config.seed, stream_id),
               accumulate=False, hooks=[hook], chunk_size=_chunk(horizons))
    X = np.vstack([b[0] for b in blocks])
    Y = np.vstack([b[1] for b in blocks])
    U = np.concatenate([b[2] for b in blocks])
    return {t: bahadur_decompose(bases[t], X, Y, U, bars[t]) for t in horizons}


def _run_block(args):
    config, ids, horizons = args
    spec = _spec(config)
    bases = {t: BahadurBasis.build(spec, config.step_schedule(), t) for t in horizons}
    out = []
    for k in ids:
        terms = decompose_rep(config, k, horizons, bases)
        out.append((k, {t: (terms[t].W, float(np.linalg.norm(terms[t].residual))) for t in horizons}))
    return out


@dataclass
class BahadurStudy:
    """Leading terms and residual norms per horizon, rows ordered by stream id."""

    horizons: tuple
    W: dict          # t -> (n_reps, d)
    residual: dict   # t -> (n_reps,)

    @property
    def n_reps(self) -> int:
        return next(iter(self.residual.values())).shape[0]

    def w_mean_z(self, t: int) -> np.ndarray:
        """Elementwise mean of ``W`` in units of its Monte-Carlo standard error."""
        W = self.W[t]
        return W.mean(0) / (W.std(0, ddof=1) / math.sqrt(W.shape[0]))

    def w_cov_error(self, t: int) -> float:
        """``max |Cov(W) - I|`` over all entries."""
        W = self.W[t]
        return float(np.abs(np.cov(W, rowvar=False) - np.eye(W.shape[1])).max())

    def median_residual(self) -> dict:
        return {t: float(np.median(self.residual[t])) for t in self.horizons}

    def loglog_slope(self, horizons=None) -> float:
        ts = self.horizons if horizons is None else horizons
        med = self.median_residual()
        x = np.log(np.asarray(ts, dtype=float))
        y = np.log([med[t] for t in ts])
        return float(np.polyfit(x, y, 1)[0])

    def to_csv(self, path) -> None:
        """One row per horizon: median residual, mean |z| of E[W], max |Cov(W) - I|."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "n_reps", "median_residual", "max_abs_w_mean_z", "max_abs_cov_w_minus_i"])
            for t in self.horizons:
                w.writerow([t, self.n_reps, f"{np.median(self.residual[t]):.6f}",
                            f"{np.abs(self.w_mean_z(t)).max():.6f}", f"{self.w_cov_error(t):.6f}"])


def bahadur_study(config: McConfig, horizons=DEFAULT_HORIZONS, n_reps: int | None = None,
                  parallelism: int | None = None) -> BahadurStudy:
    if config.kind != "linear":
        raise ConfigError("the Bahadur study uses the linear environment")
    horizons = tuple(sorted(int(t) for t in horizons))
    if not horizons or horizons[0] < 2:
        raise ConfigError("horizons must be >= 2")
    n_reps = config.n_reps if n_reps is None else n_reps
    if n_reps < 2:
        raise ConfigError("the Bahadur study needs at least 2 replications")
    workers = default_parallelism() if parallelism is None else int(parallelism)
    ids = list(range(n_reps))
    if workers <= 1:
        rows = _run_block((config, ids, horizons))
    else:
        nb = min(n_reps, workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_run_block, [(config, ids[i::nb], horizons) for i in range(nb)])
            rows = [r for part in parts for r in part]
    rows.sort(key=lambda r: r[0])
    W = {t: np.array([r[1][t][0] for r in rows]) for t in horizons}
    res = {t: np.array([r[1][t][1] for r in rows]) for t in horizons}
    return BahadurStudy(horizons, W, res)
