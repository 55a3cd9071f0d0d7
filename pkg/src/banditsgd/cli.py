"""Command-line entry point: ``banditsgd <subcommand> [options]``.

Parameters resolve in three layers: built-in defaults, then an optional
``--config`` file (INI-style ``key = value`` with one section per
subcommand plus an optional ``[DEFAULT]``), then command-line flags. The
resolved parameters are echoed to ``<out>/config.ini``; passing that file
back with ``--config`` reproduces the run.

Exit codes: 0 success, 1 configuration error, 2 runtime failure
(divergence, nothing to replay), 3 I/O or log-format error. Errors go to
standard error prefixed with ``ERROR <code>:``.
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .core import ConfigError, DivergenceError, SeedSpec, StepSchedule
from .oracle import LinearGaussianSpec, eigen_c, g_curve, oracle_cov
from .policy import EpsilonSchedule, WeightScheme

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# parameter parsing
# ---------------------------------------------------------------------------

def _int(s: str) -> int:
    try:
        return int(str(s).strip())
    except ValueError:
        raise ConfigError(f"expected an integer, got {s!r}") from None


def _float(s: str) -> float:
    try:
        return float(str(s).strip())
    except ValueError:
        raise ConfigError(f"expected a number, got {s!r}") from None


def _mu(s: str) -> float:
    return 0.0 if str(s).strip().lower() == "zero" else _float(s)


def _scheme(s: str) -> str:
    text = str(s).strip()
    WeightScheme.parse(text)
    return text


def _int_list(s: str) -> tuple:
    items = [v for v in str(s).replace(" ", "").split(",") if v]
    if not items:
        raise ConfigError(f"expected a comma-separated list, got {s!r}")
    return tuple(_int(v) for v in items)


def _scheme_list(s: str) -> tuple:
    items = [v for v in str(s).replace(" ", "").split(",") if v]
    if not items:
        raise ConfigError(f"expected a comma-separated list of schemes, got {s!r}")
    return tuple(_scheme(v) for v in items)


def parse_grid(s: str) -> np.ndarray:
    """``a:b:step`` to an inclusive grid, rounded to 10 decimals."""
    parts = str(s).split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid must be start:stop:step, got {s!r}")
    a, b, step = (_float(v) for v in parts)
    if step <= 0 or b < a:
        raise ConfigError(f"invalid grid {s!r}")
    n = int(np.floor((b - a) / step + 1e-9)) + 1
    return np.round(a + step * np.arange(n), 10)


def _grid(s: str) -> str:
    parse_grid(s)
    return str(s).strip()


def _path(s: str) -> str:
    return str(s).strip()


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


@dataclass(frozen=True)
class Param:
    name: str
    parse: Callable
    default: object
    help: str = ""


MC_PARAMS = [
    Param("p", _int, 10, "covariate dimension per arm"),
    Param("sigma", _float, 0.1, "noise standard deviation"),
    Param("eps", _float, 0.02, "exploration rate"),
    Param("scheme", _scheme, "vanilla", "vanilla | ipw | sqrt-ipw | power:<gamma>"),
    Param("alpha", _float, 0.8, "step-size decay exponent"),
    Param("eta0", _float, 2.25, "step-size scale"),
    Param("t0", _int, 300, "step-size meltdown time"),
    Param("steps", _int, 80_000, "rounds per replication"),
    Param("reps", _int, 1000, "Monte-Carlo replications"),
    Param("seed", _int, 2024, "master seed"),
    Param("theta_scale", _float, 0.275, "magnitude of every true coefficient"),
    Param("mu", _mu, 0.0, "covariate mean ('zero' or a number used for every coordinate)"),
    Param("level", _float, 0.95, "confidence level"),
]

ORACLE_PARAMS = [p for p in MC_PARAMS if p.name in ("p", "sigma", "eps", "scheme", "theta_scale", "mu", "level")]

PARAMS = {
    "simulate": MC_PARAMS,
    "coverage": [p for p in MC_PARAMS if p.name not in ("scheme", "steps")] + [
        Param("schemes", _scheme_list, ("vanilla", "sqrt-ipw", "ipw"), "comma-separated schemes"),
        Param("sizes", _int_list, (20_000, 80_000), "comma-separated sample sizes"),
    ],
    "quantile": MC_PARAMS + [Param("tau", _float, 0.75, "quantile level")],
    "oracle": ORACLE_PARAMS,
    "gcurve": [
        Param("eps", _float, 0.02, "exploration rate"),
        Param("b", _float, 0.5, "mass of the greedy region"),
        Param("gammas", _grid, "-1:1:0.05", "gamma grid start:stop:step"),
    ],
    "bahadur": [p for p in MC_PARAMS if p.name not in ("steps", "mu", "level")] + [
        Param("horizons", _int_list, (4000, 16_000, 20_000, 64_000), "comma-separated horizons"),
    ],
    "replay": [
        Param("log", _path, "", "replay log CSV (empty: generate a synthetic log)"),
        Param("generate_rows", _int, 110_000, "rows of the synthetic log when no log is given"),
        Param("log_seed", _int, 7, "seed of the synthetic log"),
        Param("articles", _int_list, (109520, 109510), "article ids of arm 0 and arm 1"),
        Param("max_consumed", _int, 50_000, "stop after this many matched rows (0: whole log)"),
        Param("eps", _float, 0.2, "exploration rate"),
        Param("scheme", _scheme, "ipw", "vanilla | ipw | sqrt-ipw | power:<gamma>"),
        Param("alpha", _float, 0.55, "step-size decay exponent"),
        Param("eta0", _float, 15.0, "step-size scale"),
        Param("t0", _int, 300, "step-size meltdown time"),
        Param("seed", _int, 2024, "seed of the online policy"),
        Param("level", _float, 0.95, "confidence level"),
    ],
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="banditsgd", description="Weighted SGD inference for epsilon-greedy bandits.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    descr = {
        "simulate": "Monte-Carlo study of the linear model",
        "coverage": "coverage and CI length table over schemes and sample sizes",
        "quantile": "Monte-Carlo study of the quantile model",
        "oracle": "closed-form covariance and CI lengths",
        "gcurve": "efficiency curve over power-law weights",
        "bahadur": "leading-term and residual study",
        "replay": "offline replay of a click log",
    }
    for name, params in PARAMS.items():
        sp = sub.add_parser(name, help=descr[name], description=descr[name])
        sp.add_argument("--config", help="INI file with a section per subcommand")
        sp.add_argument("--out", help="output directory (default: banditsgd-out/<command>)")
        sp.add_argument("--parallel", help="worker processes (default: available CPUs)")
        sp.add_argument("--json-summary", action="store_true", help="print the summary as JSON")
        if name == "coverage":
            sp.add_argument("--fast", action="store_true", help="single n=20000 row with 200 replications")
        for p in params:
            sp.add_argument("--" + p.name.replace("_", "-"), dest=p.name, default=None,
                            help=f"{p.help} (default: {_fmt(p.default)})")
    return parser


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then flags."""
    params = PARAMS[command]
    raw = {p.name: p.default for p in params}
    names = {p.name for p in params}
    if args.config:
        cp = configparser.ConfigParser()
        try:
            with open(args.config, encoding="utf-8") as fh:
                cp.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config {args.config}: {exc}") from None
        section = dict(cp.defaults())
        if cp.has_section(command):
            section.update({k: v for k, v in cp.items(command)})
        shared = set(cp.defaults())
        unknown = sorted(k for k in section if k not in names and k not in shared)
        if unknown:
            raise ConfigError(f"unknown keys in [{command}]: {', '.join(unknown)}")
        for k, v in section.items():
            if k in names:
                raw[k] = v
    for p in params:
        v = getattr(args, p.name, None)
        if v is not None:
            raw[p.name] = v
    out = {}
    for p in params:
        v = raw[p.name]
        out[p.name] = v if v is p.default else p.parse(v)
    if command == "coverage" and getattr(args, "fast", False):
        out["sizes"] = (20_000,)
        out["reps"] = 200
    return out


def echo_config(command: str, values: dict, out_dir: Path) -> Path:
    cp = configparser.ConfigParser()
    cp[command] = {k: _fmt(v) for k, v in values.items()}
    path = out_dir / "config.ini"
    with open(path, "w", encoding="utf-8") as fh:
        cp.write(fh)
    return path


def _parallel(args) -> int | None:
    if args.parallel is None:
        return None
    n = _int(args.parallel)
    if n < 1:
        raise ConfigError("--parallel must be >= 1")
    return n


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _mc_config(v: dict, kind: str, scheme: str | None = None, steps: int | None = None):
    from .experiments.mc import McConfig

    return McConfig(kind=kind, p=v["p"], sigma=v["sigma"], eps=v["eps"], scheme=scheme or v["scheme"],
                    alpha=v["alpha"], eta0=v["eta0"], meltdown=v["t0"],
                    n_steps=steps if steps is not None else v.get("steps", 2),
                    n_reps=v["reps"], seed=v["seed"], theta_scale=v["theta_scale"], mu=v.get("mu", 0.0),
                    tau=v.get("tau", 0.75), level=v.get("level", 0.95))


def _print_summary(summ, as_json: bool) -> None:
    if as_json:
        print(summ.to_json())
        return
    print(f"fingerprint {summ.fingerprint}  reps {summ.n_reps}")
    if summ.degenerate:
        print("degenerate spread: coverage is not reported")
        return
    for a in summ.arms:
        print(f"arm {a.arm}: plug-in coverage {a.plugin_cov:.3f} ({a.plugin_cov_sd:.3f})  "
              f"oracle coverage {a.oracle_cov:.3f}  plug-in length {a.plugin_len:.3f}  "
              f"oracle length {a.oracle_len:.3f}")
    print(f"max KS {np.max(summ.ks):.4f}  max |sd/oracle - 1| {np.max(np.abs(summ.sd / summ.oracle_sd - 1)):.4f}")


def cmd_simulate(v, args, out: Path, kind: str = "linear") -> None:
    from .experiments.mc import run_mc

    cfg = _mc_config(v, kind)
    summ = run_mc(cfg, parallelism=_parallel(args), raw_path=out / "raw.csv")
    summ.to_csv(out / "summary.csv")
    _print_summary(summ, args.json_summary)


def cmd_quantile(v, args, out: Path) -> None:
    cmd_simulate(v, args, out, kind="quantile")


def cmd_coverage(v, args, out: Path) -> None:
    from .experiments.mc import COVERAGE_HEADER, coverage_table

    cfg = _mc_config(v, "linear", scheme=v["schemes"][0], steps=max(v["sizes"]))
    rows = coverage_table(cfg, v["schemes"], v["sizes"], parallelism=_parallel(args), path=out / "coverage.csv")
    if args.json_summary:
        print(json.dumps([dict(zip(COVERAGE_HEADER, r)) for r in rows], sort_keys=True))
        return
    print(f"{'scheme':>10} {'arm':>3} {'n':>7} {'coverage':>15} {'length':>15} {'oracle len':>10}")
    for r in rows:
        print(f"{r[0]:>10} {r[1]:>3} {r[2]:>7} {r[3]:>7.3f} ({r[4]:.3f}) {r[9]:>7.3f} ({r[10]:.3f}) {r[12]:>10.3f}")


def _spec_from(v: dict) -> LinearGaussianSpec:
    from .experiments.environments import default_theta_star

    p = v["p"]
    return LinearGaussianSpec(np.full(p, v["mu"]), default_theta_star(p, v["theta_scale"]),
                              v["sigma"], v["eps"], WeightScheme.parse(v["scheme"]))


def cmd_oracle(v, args, out: Path) -> None:
    spec = _spec_from(v)
    orc = oracle_cov(spec)
    lengths = orc.ci_length(v["level"])
    with open(out / "oracle.csv", "w", encoding="utf-8") as fh:
        fh.write("parameter,variance,ci_length\n")
        for i, (var, ln) in enumerate(zip(np.diag(orc.Sigma), lengths)):
            fh.write(f"theta_{i + 1},{var:.10f},{ln:.10f}\n")
    c = None
    if np.allclose(spec.mu, 0.0) or spec.scheme.kind == "vanilla":
        try:
            c = eigen_c(spec)
        except ConfigError:
            c = None
    if c is not None:
        with open(out / "eigen_c.csv", "w", encoding="utf-8") as fh:
            fh.write("c1,c2,c3,c4\n" + ",".join(f"{x:.10f}" for x in c) + "\n")
    if args.json_summary:
        print(json.dumps({"ci_length": lengths.tolist(), "variance": np.diag(orc.Sigma).tolist(),
                          "eigen_c": None if c is None else list(c)}, sort_keys=True))
        return
    print(f"oracle CI length ({spec.scheme.label}, level {v['level']}): "
          f"mean {lengths.mean():.4f}  min {lengths.min():.4f}  max {lengths.max():.4f}")
    if c is not None:
        print("eigenvalues c1..c4: " + " ".join(f"{x:.6f}" for x in c))


def cmd_gcurve(v, args, out: Path) -> None:
    gam = parse_grid(v["gammas"])
    g = g_curve(gam, v["eps"], v["b"])
    with open(out / "gcurve.csv", "w", encoding="utf-8") as fh:
        fh.write("gamma,g\n")
        for a, b in zip(gam, g):
            fh.write(f"{a:.10g},{b:.10f}\n")
    k = int(np.argmin(g))
    if args.json_summary:
        print(json.dumps({"gamma": gam.tolist(), "g": np.asarray(g).tolist(), "argmin": float(gam[k])}))
        return
    print(f"minimum g = {g[k]:.6f} at gamma = {gam[k]:.10g}")


def cmd_bahadur(v, args, out: Path) -> None:
    from .experiments.bahadur import bahadur_study

    cfg = _mc_config(v, "linear", steps=max(v["horizons"]))
    study = bahadur_study(cfg, v["horizons"], parallelism=_parallel(args))
    study.to_csv(out / "bahadur.csv")
    slope = study.loglog_slope()
    if args.json_summary:
        print(json.dumps({"median_residual": {str(k): x for k, x in study.median_residual().items()},
                          "slope": slope, "cov_error": {str(t): study.w_cov_error(t) for t in study.horizons}},
                         sort_keys=True))
        return
    for t, m in study.median_residual().items():
        print(f"t={t}: median |residual| {m:.4f}  max |Cov(W) - I| {study.w_cov_error(t):.4f}")
    print(f"log-log slope {slope:.4f}")


def cmd_replay(v, args, out: Path) -> None:
    from .experiments.replay import generate_log, replay_file

    articles = v["articles"]
    if len(articles) != 2 or articles[0] == articles[1]:
        raise ConfigError("articles must be two distinct ids")
    log = v["log"]
    if not log:
        log = generate_log(out / "synthetic_log.csv", v["generate_rows"], v["log_seed"], articles=articles)
    res = replay_file(log, EpsilonSchedule.constant(v["eps"]), WeightScheme.parse(v["scheme"]),
                      StepSchedule(v["eta0"], v["alpha"], v["t0"]), SeedSpec(v["seed"]),
                      articles=articles, max_consumed=v["max_consumed"] or None, level=v["level"])
    res.report.to_csv(out / "report.csv")
    with open(out / "match.csv", "w", encoding="utf-8") as fh:
        fh.write("consumed,skipped,total,match_rate\n")
        fh.write(f"{res.consumed},{res.skipped},{res.total},{res.match_rate:.10f}\n")
    if args.json_summary:
        print(json.dumps({"consumed": res.consumed, "skipped": res.skipped, "total": res.total,
                          "estimate": res.report.estimate.tolist(), "std_error": res.report.std_error.tolist()}))
        return
    print(f"consumed {res.consumed}  skipped {res.skipped}  total {res.total}  match rate {res.match_rate:.4f}")
    print(f"{'parameter':>10} {'estimate':>10} {'s.e.':>8} {'lower':>9} {'upper':>9}")
    for name, est, se, lo, hi in zip(res.report.names, res.report.estimate, res.report.std_error,
                                     res.report.ci_low, res.report.ci_high):
        print(f"{name:>10} {est:>10.4f} {se:>8.4f} {lo:>9.4f} {hi:>9.4f}")


COMMANDS = {
    "simulate": cmd_simulate, "coverage": cmd_coverage, "quantile": cmd_quantile, "oracle": cmd_oracle,
    "gcurve": cmd_gcurve, "bahadur": cmd_bahadur, "replay": cmd_replay,
}


def _fail(code: int, msg: str) -> int:
    print(f"ERROR {code}: {msg}", file=sys.stderr)
    return code


def _join_negative_values(argv: list[str]) -> list[str]:
    """Rewrite ``--flag -1:1:0.1`` as ``--flag=-1:1:0.1`` so argparse does not read a flag."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else None
        if (a.startswith("--") and "=" not in a and nxt is not None and len(nxt) > 1
                and nxt[0] == "-" and (nxt[1].isdigit() or nxt[1] == ".")):
            out.append(f"{a}={nxt}")
            i += 2
        else:
            out.append(a)
            i += 1
    return out


def main(argv=None) -> int:
    from .experiments.replay import EmptyReplayError, LogParseError

    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(_join_negative_values(argv))
        values = resolve(args.command, args)
        _parallel(args)
        out = Path(args.out) if args.out else Path("banditsgd-out") / args.command
        out.mkdir(parents=True, exist_ok=True)
        echo_config(args.command, values, out)
        COMMANDS[args.command](values, args, out)
    except LogParseError as exc:
        return _fail(EXIT_IO, f"malformed log: {exc}")
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except (DivergenceError, EmptyReplayError) as exc:
        return _fail(EXIT_RUNTIME, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
