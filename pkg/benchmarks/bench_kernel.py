"""Compare the compiled SGD kernel with the pure-Python fallback.

Usage::

    python benchmarks/bench_kernel.py [--steps 20000] [--repeat 3]

Both backends run the same seeded linear study; the script checks that their
averaged iterates agree before reporting throughput.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from banditsgd._backend import BACKENDS
from banditsgd.core import SeedSpec
from banditsgd.engine import run_online
from banditsgd.experiments.mc import McConfig


def time_backend(name: str, cfg: McConfig, repeat: int):
    env = cfg.environment()
    best, state = float("inf"), None
    for _ in range(repeat):
        start = time.perf_counter()
        state, _, _ = run_online(env, env.loss_model(), cfg.weight_scheme(), cfg.eps_schedule(),
                                 cfg.step_schedule(), cfg.n_steps, SeedSpec(cfg.seed), backend=name)
        best = min(best, time.perf_counter() - start)
    return best, state.theta_bar


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--p", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    cfg = McConfig(p=args.p, n_steps=args.steps)
    results = {name: time_backend(name, cfg, args.repeat) for name in sorted(BACKENDS)}
    if "compiled" not in results:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation` first")
    ref = results["python"][1]
    print(f"{'backend':>10} {'seconds':>9} {'steps/s':>12} {'max |diff|':>11}")
    for name, (sec, bar) in results.items():
        print(f"{name:>10} {sec:>9.4f} {args.steps / sec:>12.0f} {np.abs(bar - ref).max():>11.2e}")
    if "compiled" in results:
        print(f"speed-up: {results['python'][0] / results['compiled'][0]:.1f}x")


if __name__ == "__main__":
    main()
