"""Monte-Carlo replication harness for the linear and quantile simulation studies.

Each replication ``k`` runs on its own stream ``SeedSpec(seed, k)``, so the
results depend only on ``(config, k)``. Workers return per-replication rows
keyed by ``k`` and the parent sorts them; output is therefore identical for
any degree of parallelism.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy import stats

from ..core import ConfigError, DivergenceError, SeedSpec, StepSchedule
from ..engine import run_online
from ..inference import Z95, sandwich, z_quantile
from ..oracle import LinearGaussianSpec, OracleCovariance, oracle_cov, quantile_oracle_cov
from ..policy import EpsilonSchedule, WeightScheme
from .environments import Environment, default_theta_star

# Calibrated defaults for the linear/quantile studies (see README): the
# true-parameter magnitude and eta0 are not pinned down by the setup and
# jointly control the start-up transient.
DEFAULT_THETA_SCALE = 0.275
DEFAULT_ETA0 = 2.25


@dataclass(frozen=True)
class McConfig:
    """One simulation setting. All fields are plain scalars so the config echoes as text."""

    kind: str = "linear"
    p: int = 10
    sigma: float = 0.1
    eps: float = 0.02
    scheme: str = "vanilla"
    alpha: float = 0.8
    eta0: float = DEFAULT_ETA0
    meltdown: int = 300
    n_steps: int = 80_000
    n_reps: int = 1000
    seed: int = 2024
    theta_scale: float = DEFAULT_THETA_SCALE
    mu: float = 0.0
    tau: float = 0.75
    level: float = 0.95

    def __post_init__(self):
        if self.kind not in ("linear", "quantile"):
            raise ConfigError(f"Monte-Carlo studies support kind linear|quantile, got {self.kind!r}")
        if self.p < 1:
            raise ConfigError("p must be >= 1")
        if self.n_steps < 2:
            raise ConfigError("n_steps must be >= 2")
        if self.n_reps < 1:
            raise ConfigError("n_reps must be >= 1")
        if not 0.0 < self.eps < 1.0:
            raise ConfigError("eps must lie in (0, 1) for the oracle comparison")
        if not 0.0 < self.level < 1.0:
            raise ConfigError("level must lie in (0, 1)")
        if self.theta_scale <= 0:
            raise ConfigError("theta_scale must be positive")
        WeightScheme.parse(self.scheme)
        self.step_schedule()
        self.environment()

    def weight_scheme(self) -> WeightScheme:
        return WeightScheme.parse(self.scheme)

    def step_schedule(self) -> StepSchedule:
        return StepSchedule(self.eta0, self.alpha, self.meltdown)

    def eps_schedule(self) -> EpsilonSchedule:
        return EpsilonSchedule.constant(self.eps)

    def theta_star(self) -> np.ndarray:
        return default_theta_star(self.p, self.theta_scale)

    def mu_vector(self) -> np.ndarray:
        return np.full(self.p, float(self.mu))

    def environment(self) -> Environment:
        tau = self.tau if self.kind == "quantile" else None
        return Environment(self.kind, self.theta_star(), self.mu_vector(), self.sigma, tau)

    def oracle(self) -> OracleCovariance:
        spec = LinearGaussianSpec(self.mu_vector(), self.theta_star(), self.sigma, self.eps, self.weight_scheme())
        if self.kind == "linear":
            return oracle_cov(spec)
        env = self.environment()
        return quantile_oracle_cov(spec, self.tau, env.noise_density_at_zero())

    def fingerprint(self) -> str:
        """Short hash of every field except ``n_reps``."""
        items = {k: v for k, v in asdict(self).items() if k != "n_reps"}
        blob = json.dumps(items, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "McConfig":
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class RepResult:
    """One replication: scaled error and (scaled) plug-in standard errors."""

    stream_id: int
    err: np.ndarray          # sqrt(t) (theta_bar - theta_star)
    se: np.ndarray           # sqrt(t) * plug-in standard error
    min_weight: float
    max_weight: float


def run_rep(config: McConfig, stream_id: int, oracle: OracleCovariance | None = None) -> RepResult:
    env = config.environment()
    scheme = config.weight_scheme()
    seed = SeedSpec(config.seed, stream_id)
    state, acc, _ = run_online(env, env.loss_model(), scheme, config.eps_schedule(),
                               config.step_schedule(), config.n_steps, seed)
    n = config.n_steps
    if config.kind == "quantile":
        # pinball has no pointwise Hessian: plug in the known-density block
        oracle = oracle if oracle is not None else config.oracle()
        cov = sandwich(acc, H=oracle.H)
    else:
        cov = sandwich(acc)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None) * n)
    err = math.sqrt(n) * (state.theta_bar - env.theta_star)
    return RepResult(stream_id, err, se, state.min_weight, state.max_weight)


def _run_block(args):
    config, ids = args
    oracle = config.oracle() if config.kind == "quantile" else None
    return [run_rep(config, k, oracle) for k in ids]


def default_parallelism() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def run_reps(config: McConfig, n_reps: int | None = None, parallelism: int | None = None) -> list[RepResult]:
    """All replications ``0..n_reps-1``, ordered by stream id."""
    n_reps = config.n_reps if n_reps is None else n_reps
    workers = default_parallelism() if parallelism is None else int(parallelism)
    if workers < 1:
        raise ConfigError("parallelism must be >= 1")
    ids = list(range(n_reps))
    if workers == 1 or n_reps == 1:
        out = _run_block((config, ids))
    else:
        nblocks = min(n_reps, 4 * workers)
        blocks = [ids[i::nblocks] for i in range(nblocks)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = [r for res in pool.map(_run_block, [(config, b) for b in blocks]) for r in res]
    out.sort(key=lambda r: r.stream_id)
    return out


@dataclass
class ArmSummary:
    """Table-style row: coverage averaged over the arm's coordinates, then over replications."""

    arm: int
    plugin_cov: float
    plugin_cov_sd: float
    oracle_cov: float
    oracle_cov_sd: float
    plugin_len: float
    plugin_len_sd: float
    oracle_len: float
    n_reps: int

    @property
    def plugin_cov_mcse(self) -> float:
        return self.plugin_cov_sd / math.sqrt(self.n_reps)

    @property
    def oracle_cov_mcse(self) -> float:
        return self.oracle_cov_sd / math.sqrt(self.n_reps)

    @property
    def plugin_len_mcse(self) -> float:
        return self.plugin_len_sd / math.sqrt(self.n_reps)


@dataclass
class McSummary:
    """Per-coordinate statistics of ``sqrt(t) (theta_bar_t - theta_star)`` over replications.

    When the spread is degenerate (e.g. zero noise) ``degenerate`` is set and
    the coverage fields are ``None``: a coverage rate is not meaningful.
    """

    config: McConfig
    n_reps: int
    mean: np.ndarray
    sd: np.ndarray
    oracle_sd: np.ndarray
    plugin_coverage: np.ndarray | None
    oracle_coverage: np.ndarray | None
    plugin_length: np.ndarray
    oracle_length: np.ndarray
    ks: np.ndarray | None
    skew: np.ndarray | None
    excess_kurtosis: np.ndarray | None
    arms: list = field(default_factory=list)
    degenerate: bool = False
    min_weight: float = float("nan")
    max_weight: float = float("nan")

    @property
    def fingerprint(self) -> str:
        return self.config.fingerprint()

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, np.ndarray):
                return [clean(x) for x in v.tolist()]
            if isinstance(v, float):
                return None if not math.isfinite(v) else v
            if isinstance(v, list):
                return [clean(x) for x in v]
            return v

        out = {
            "fingerprint": self.fingerprint,
            "config": self.config.to_dict(),
            "n_reps": self.n_reps,
            "degenerate": self.degenerate,
            "min_weight": clean(self.min_weight),
            "max_weight": clean(self.max_weight),
        }
        for name in ("mean", "sd", "oracle_sd", "plugin_coverage", "oracle_coverage",
                     "plugin_length", "oracle_length", "ks", "skew", "excess_kurtosis"):
            v = getattr(self, name)
            out[name] = None if v is None else clean(np.asarray(v, dtype=float))
        out["arms"] = [{k: clean(v) for k, v in asdict(a).items()} for a in self.arms]
        return json.dumps(out, sort_keys=True)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["parameter", "mean", "sd", "oracle_sd", "plugin_coverage", "oracle_coverage",
                        "plugin_length", "oracle_length", "ks", "skew", "excess_kurtosis"])
            for i in range(len(self.mean)):
                def cell(arr):
                    return "degenerate" if arr is None else f"{arr[i]:.6f}"
                w.writerow([f"theta_{i + 1}", f"{self.mean[i]:.6f}", f"{self.sd[i]:.6f}",
                            f"{self.oracle_sd[i]:.6f}", cell(self.plugin_coverage), cell(self.oracle_coverage),
                            f"{self.plugin_length[i]:.6f}", f"{self.oracle_length[i]:.6f}",
                            cell(self.ks), cell(self.skew), cell(self.excess_kurtosis)])


def write_raw(reps: list[RepResult], path) -> None:
    """Per-replication CSV: stream id, scaled errors and scaled plug-in standard errors."""
    d = len(reps[0].err) if reps else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stream_id"] + [f"err_{i + 1}" for i in range(d)] + [f"se_{i + 1}" for i in range(d)])
        for r in reps:
            w.writerow([r.stream_id] + [repr(float(v)) for v in r.err] + [repr(float(v)) for v in r.se])


def matched_ks(sample: np.ndarray) -> float:
    """KS distance to the normal with the sample's own mean and sd."""
    sd = sample.std(ddof=1)
    return float(stats.kstest(sample, "norm", args=(sample.mean(), sd)).statistic)


def summarize(config: McConfig, reps: list[RepResult], oracle: OracleCovariance | None = None) -> McSummary:
    if not reps:
        raise ConfigError("no replications to summarize")
    oracle = config.oracle() if oracle is None else oracle
    E = np.array([r.err for r in reps])
    SE = np.array([r.se for r in reps])
    n_reps, d = E.shape
    z = Z95 if config.level == 0.95 else z_quantile(config.level)
    osd = np.sqrt(np.diag(oracle.Sigma))
    sd = E.std(axis=0, ddof=1) if n_reps > 1 else np.zeros(d)
    scale = max(float(np.max(osd)), 1e-300)
    degenerate = bool(np.all(osd < 1e-12) or np.all(sd < 1e-9 * max(scale, 1.0)) or n_reps < 3)
    plugin_len = 2.0 * z * SE
    oracle_len = 2.0 * z * osd
    wmin = min(r.min_weight for r in reps)
    wmax = max(r.max_weight for r in reps)
    if degenerate:
        return McSummary(config, n_reps, E.mean(0), sd, osd, None, None, plugin_len.mean(0), oracle_len,
                         None, None, None, [], True, wmin, wmax)
    with np.errstate(divide="ignore", invalid="ignore"):
        hit_plug = np.abs(E) <= z * SE
        hit_orc = np.abs(E) <= z * osd[None, :]
    p = d // 2
    arms = []
    for a in range(2):
        blk = slice(a * p, (a + 1) * p)
        cp = hit_plug[:, blk].mean(axis=1)
        co = hit_orc[:, blk].mean(axis=1)
        ln = plugin_len[:, blk].mean(axis=1)
        ddof = 1 if n_reps > 1 else 0
        arms.append(ArmSummary(a, float(cp.mean()), float(cp.std(ddof=ddof)), float(co.mean()),
                               float(co.std(ddof=ddof)), float(ln.mean()), float(ln.std(ddof=ddof)),
                               float(oracle_len[blk].mean()), n_reps))
    ks = np.array([matched_ks(E[:, j]) for j in range(d)])
    return McSummary(config, n_reps, E.mean(0), sd, osd, hit_plug.mean(0), hit_orc.mean(0),
                     plugin_len.mean(0), oracle_len, ks, stats.skew(E, axis=0),
                     stats.kurtosis(E, axis=0), arms, False, wmin, wmax)


def run_mc(config: McConfig, n_reps: int | None = None, parallelism: int | None = None,
           raw_path=None) -> McSummary:
    """Replicate, optionally write the raw per-replication CSV, and summarize.

    A diverging replication aborts the study; the error names its stream.
    """
    reps = run_reps(config, n_reps, parallelism)
    if raw_path is not None:
        write_raw(reps, raw_path)
    return summarize(config, reps)


def quantile_mc(config: McConfig, n_reps: int | None = None, parallelism: int | None = None,
                raw_path=None) -> McSummary:
    if config.kind != "quantile":
        config = replace(config, kind="quantile")
    return run_mc(config, n_reps, parallelism, raw_path)


COVERAGE_HEADER = ["scheme", "arm", "n_steps", "plugin_cov", "plugin_cov_sd", "plugin_cov_mcse",
                   "oracle_cov", "oracle_cov_sd", "oracle_cov_mcse", "plugin_len", "plugin_len_sd",
                   "plugin_len_mcse", "oracle_len"]


def coverage_table(base: McConfig, schemes=("vanilla", "sqrt-ipw", "ipw"), sizes=(20_000, 80_000),
                   n_reps: int | None = None, parallelism: int | None = None, path=None):
    """Coverage/length rows per (scheme, arm, sample size); returns the row list.

    ``*_sd`` columns are across-replication standard deviations (the
    bracketed numbers of a coverage table); ``*_mcse`` divides them by
    ``sqrt(n_reps)``.
    """
    rows = []
    for scheme in schemes:
        for n in sizes:
            cfg = replace(base, scheme=scheme, n_steps=int(n))
            summ = run_mc(cfg, n_reps, parallelism)
            if summ.degenerate:
                raise ConfigError(f"degenerate spread for scheme {scheme} at n={n}; coverage undefined")
            for a in summ.arms:
                rows.append([scheme, a.arm, int(n), a.plugin_cov, a.plugin_cov_sd, a.plugin_cov_mcse,
                             a.oracle_cov, a.oracle_cov_sd, a.oracle_cov_mcse, a.plugin_len,
                             a.plugin_len_sd, a.plugin_len_mcse, a.oracle_len])
    rows.sort(key=lambda r: (list(schemes).index(r[0]), r[1], r[2]))
    if path is not None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COVERAGE_HEADER)
            for r in rows:
                w.writerow(r[:3] + [f"{v:.6f}" for v in r[3:]])
    return rows


__all__ = ["McConfig", "McSummary", "ArmSummary", "RepResult", "run_rep", "run_reps", "run_mc",
           "quantile_mc", "summarize", "coverage_table", "write_raw", "matched_ks", "DivergenceError"]
