"""Weighted SGD recursion with Polyak averaging and the online bandit loop.

``sgd_step`` is the readable single-step reference. ``run_online`` and
``advance`` drive the same recursion through the selected kernel backend
(compiled when available), which consumes pre-drawn covariates, potential
outcomes and action uniforms.
"""
from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import _backend
from .core import ConfigError, DivergenceError, Observation, SeedSpec, StepSchedule, arm_slice, step_size
from .inference import PlugInAccumulator
from .losses import LossModel, grad, hess
from .policy import EpsilonSchedule, WeightScheme, epsilon_at, weight


@dataclass
class Draws:
    """Pre-drawn randomness for a block of steps.

    ``Y[:, a]`` is the potential outcome of arm ``a``; only the pulled arm's
    entry is ever read. ``u_act`` are the uniforms that pick the action.
    """

    X: np.ndarray
    Y: np.ndarray
    u_act: np.ndarray

    def __len__(self):
        return self.X.shape[0]


@dataclass
class SgdState:
    theta: np.ndarray
    schedule: StepSchedule = field(default_factory=StepSchedule)
    theta_sum: np.ndarray = None
    # [t, pulls of arm 0, pulls of arm 1, skipped replay rows]
    counts: np.ndarray = None
    # [min weight, max weight]
    wext: np.ndarray = None

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=float)
        if self.theta.ndim != 1 or self.theta.shape[0] % 2:
            raise ConfigError("theta must be a 1-d vector of even length (K=2 arms)")
        if self.theta_sum is None:
            self.theta_sum = np.zeros_like(self.theta)
        if self.counts is None:
            self.counts = np.zeros(4, dtype=np.int64)
        if self.wext is None:
            self.wext = np.array([np.inf, -np.inf])

    @classmethod
    def zeros(cls, d: int, schedule: StepSchedule | None = None) -> "SgdState":
        return cls(np.zeros(d), schedule or StepSchedule())

    @property
    def d(self) -> int:
        return self.theta.shape[0]

    @property
    def p(self) -> int:
        return self.d // 2

    @property
    def t(self) -> int:
        return int(self.counts[0])

    @property
    def pulls(self) -> np.ndarray:
        return self.counts[1:3].copy()

    @property
    def skipped(self) -> int:
        return int(self.counts[3])

    @property
    def min_weight(self) -> float:
        return float(self.wext[0])

    @property
    def max_weight(self) -> float:
        return float(self.wext[1])

    @property
    def theta_bar(self) -> np.ndarray:
        """Mean of the pre-update iterates theta_0, ..., theta_{t-1}."""
        if self.t == 0:
            return self.theta.copy()
        return self.theta_sum / self.t


class Trajectory:
    """Thinned log of ``(t, theta_t, theta_bar_t, A_t, w_t, eta_t)``."""

    def __init__(self, d: int, capacity: int, stride: int):
        if stride < 1:
            raise ConfigError("trajectory stride must be >= 1")
        self.stride = stride
        self.theta = np.zeros((capacity, d))
        self.theta_bar = np.zeros((capacity, d))
        self.t = np.zeros(capacity, dtype=np.int64)
        self.action = np.zeros(capacity, dtype=np.int64)
        self.weight = np.zeros(capacity)
        self.eta = np.zeros(capacity)
        self.size = 0

    @classmethod
    def empty(cls, d: int) -> "Trajectory":
        tr = cls.__new__(cls)
        tr.stride = 0
        tr.theta = np.zeros((0, d))
        tr.theta_bar = np.zeros((0, d))
        tr.t = np.zeros(0, dtype=np.int64)
        tr.action = np.zeros(0, dtype=np.int64)
        tr.weight = np.zeros(0)
        tr.eta = np.zeros(0)
        tr.size = 0
        return tr

    def __len__(self):
        return self.size

    def trimmed(self) -> "Trajectory":
        out = Trajectory.empty(self.theta.shape[1])
        out.stride = self.stride
        n = self.size
        out.theta, out.theta_bar = self.theta[:n], self.theta_bar[:n]
        out.t, out.action = self.t[:n], self.action[:n]
        out.weight, out.eta = self.weight[:n], self.eta[:n]
        out.size = n
        return out

    def to_csv(self, path) -> None:
        d = self.theta.shape[1]
        header = (["t"] + [f"theta_{k}" for k in range(d)]
                  + [f"theta_bar_{k}" for k in range(d)] + ["action", "weight", "eta"])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for i in range(self.size):
                writer.writerow(
                    [int(self.t[i])]
                    + [repr(float(v)) for v in self.theta[i]]
                    + [repr(float(v)) for v in self.theta_bar[i]]
                    + [int(self.action[i]), repr(float(self.weight[i])), repr(float(self.eta[i]))]
                )


def sgd_step(state: SgdState, obs: Observation, model: LossModel, scheme: WeightScheme) -> SgdState:
    """One weighted SGD update on the pulled arm's block.

    Returns a new state; the input is not modified.
    """
    new = copy.deepcopy(state)
    if obs.x.shape[0] != new.p:
        raise ConfigError(f"covariate length {obs.x.shape[0]} does not match p={new.p}")
    t = new.t + 1
    eta = step_size(new.schedule, t)
    w = weight(scheme, obs.action_prob)
    block = arm_slice(new.theta, obs.action)
    g = grad(model, block, obs.x, obs.reward)
    new.theta_sum += new.theta
    block -= eta * w * g
    if not np.all(np.isfinite(block)):
        raise DivergenceError(t, float(np.linalg.norm(new.theta)))
    new.counts[0] = t
    new.counts[1 + obs.action] += 1
    new.wext[0] = min(new.wext[0], w)
    new.wext[1] = max(new.wext[1], w)
    return new


def step_contributions(state_before: SgdState, obs: Observation, model: LossModel, scheme: WeightScheme):
    """``(w, full gradient, Hessian block)`` fed to the plug-in accumulator at one step."""
    w = weight(scheme, obs.action_prob)
    block = arm_slice(state_before.theta, obs.action)
    g_full = np.zeros(state_before.d)
    arm_slice(g_full, obs.action)[:] = grad(model, block, obs.x, obs.reward)
    return w, g_full, hess(model, block, obs.x, obs.reward)


def advance(
    state: SgdState,
    acc: PlugInAccumulator | None,
    model: LossModel,
    scheme: WeightScheme,
    eps_schedule: EpsilonSchedule,
    draws: Draws,
    *,
    logged: np.ndarray | None = None,
    traj: Trajectory | None = None,
    backend: str | None = None,
    seed: SeedSpec | None = None,
) -> SgdState:
    """Run the kernel over one block of draws, mutating ``state``/``acc``/``traj`` in place.

    With ``logged`` given, rows whose sampled online action differs from the
    logged one are skipped (replay matching) and do not advance ``t``.
    """
    run = _backend.BACKENDS[backend] if backend else _backend.run_steps
    n = len(draws)
    if n == 0:
        return state
    if draws.X.shape[1] != state.p:
        raise ConfigError(f"covariate dimension {draws.X.shape[1]} does not match p={state.p}")
    t0 = state.t
    eps = np.ascontiguousarray(epsilon_at(eps_schedule, np.arange(t0 + 1, t0 + n + 1)), dtype=float)
    eps = np.atleast_1d(eps)
    if acc is None:
        S = H = np.zeros((state.d, state.d))
        do_acc = False
    else:
        S, H, do_acc = acc.S_sum, acc.H_sum, True
    if traj is None:
        traj = Trajectory.empty(state.d)
    logged_arr = (np.zeros(0, dtype=np.int64) if logged is None
                  else np.ascontiguousarray(logged, dtype=np.int64))
    sched = state.schedule
    status, traj.size = run(
        model.code, float(model.tau or 0.0),
        np.ascontiguousarray(draws.X, dtype=float), np.ascontiguousarray(draws.Y, dtype=float),
        np.ascontiguousarray(draws.u_act, dtype=float), logged_arr, eps,
        scheme.code, float(scheme.gamma), float(sched.eta0), float(sched.alpha), int(sched.meltdown),
        state.theta, state.theta_sum, S, H, state.counts, state.wext, do_acc,
        int(traj.stride), traj.theta, traj.theta_bar, traj.t, traj.action, traj.weight, traj.eta,
        int(traj.size),
    )
    if status:
        key = None if seed is None else (seed.master_seed, seed.stream_id)
        raise DivergenceError(int(status), float(np.linalg.norm(state.theta)), key)
    if acc is not None:
        acc.n = state.t
        if not model.smooth:
            acc.smooth = False
    return state


Hook = Callable[[Draws, SgdState], None]


def run_online(
    env,
    model: LossModel,
    scheme: WeightScheme,
    eps_schedule: EpsilonSchedule,
    schedule: StepSchedule,
    n_steps: int,
    seed: SeedSpec,
    *,
    theta0: np.ndarray | None = None,
    accumulate: bool = True,
    stride: int = 0,
    hooks: Iterable[Hook] = (),
    chunk_size: int = 1 << 16,
    backend: str | None = None,
) -> tuple[SgdState, PlugInAccumulator, Trajectory]:
    """Simulate ``n_steps`` rounds of epsilon-greedy with weighted SGD.

    Randomness is drawn block by block from three child streams of
    ``seed`` (covariates, rewards, actions), so results do not depend on
    ``chunk_size``. Hooks are called after each block with read-only views
    of the draws and the current state; they must not mutate either.
    """
    if n_steps < 1:
        raise ConfigError("n_steps must be >= 1")
    eps_schedule.check_rate(schedule.alpha)
    d = 2 * env.p
    theta0 = np.zeros(d) if theta0 is None else np.asarray(theta0, dtype=float)
    if theta0.shape != (d,):
        raise ConfigError(f"theta0 must have shape ({d},)")
    state = SgdState(theta0.copy(), schedule)
    acc = PlugInAccumulator(d, smooth=model.smooth) if accumulate else None
    traj = Trajectory(d, n_steps // stride, stride) if stride else None
    gens = seed.generators(3)
    done = 0
    while done < n_steps:
        m = min(chunk_size, n_steps - done)
        draws = env.draw(gens, m)
        advance(state, acc, model, scheme, eps_schedule, draws, traj=traj, backend=backend, seed=seed)
        done += m
        if hooks:
            for arr in (draws.X, draws.Y, draws.u_act):
                arr.flags.writeable = False
            for hook in hooks:
                hook(draws, state)
    if acc is None:
        acc = PlugInAccumulator(d, smooth=model.smooth)
    return state, acc, (traj.trimmed() if traj is not None else Trajectory.empty(d))
