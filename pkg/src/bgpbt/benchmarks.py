"""Synthetic time-varying objectives and a stateful agent-training simulator.

Every objective exposes the same small interface used by the scheduler:

* ``initial_handle(config, rng)`` -> opaque immutable performance state
* ``advance(handle, config, steps, t, rng)`` -> (new handle, observed return)
* ``score(handle, config, t)`` -> noiseless quality of an agent right now
* ``distill(teacher_handle, teacher_config, student_config, budget, schedule, rng,
  start=None, offset=0, total=None)`` -> student performance state
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .search_space import ConfigVector, SearchSpace, mixed_benchmark_space, ppo_space

FAMILIES = ("drifting-quadratic", "categorical-gated-drift", "stationary-mixed")


class OversizedGridError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticState:
    steps: int = 0


class SyntheticObjective:
    """f_t(z) = 1 - ||x - c(t)||^2 + sum_j bonus_j(h_j, t), observed with Gaussian noise.

    The center ``c(t)`` travels around a circle of radius 0.3 inside the unit
    cube with chord length ``drift`` per timestep, so ``||c(t+1) - c(t)|| = drift``.
    ``categorical-gated-drift`` adds a per-label bonus on each categorical dim;
    with ``switch_period > 0`` the best label rotates every period.
    """

    radius = 0.3
    stateful = False

    def __init__(
        self,
        family: str = "categorical-gated-drift",
        space: SearchSpace | None = None,
        drift: float = 0.02,
        noise: float = 0.01,
        seed: int = 0,
        bonus: Sequence[Sequence[float]] | None = None,
        switch_period: int = 0,
    ):
        if family not in FAMILIES:
            raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")
        self.family = family
        self.space = space or mixed_benchmark_space()
        self.drift = 0.0 if family == "stationary-mixed" else float(drift)
        self.noise = float(noise)
        self.seed = int(seed)
        self.switch_period = int(switch_period)
        if self.drift < 0 or self.drift > 2 * self.radius:
            raise ValueError("drift must lie in [0, 0.6]")
        d_x = self.space.d_x
        rng = np.random.default_rng(self.seed)
        if d_x >= 2:
            q, _ = np.linalg.qr(rng.normal(size=(d_x, 2)))
            self._u, self._v = q[:, 0], q[:, 1]
        elif self.drift > 0:
            raise ValueError("a drifting objective needs at least two x dims")
        else:
            self._u, self._v = np.ones(d_x), np.zeros(d_x)
        self._theta0 = float(rng.uniform(0, 2 * np.pi))
        self._dtheta = 2.0 * math.asin(self.drift / (2 * self.radius)) if self.drift > 0 else 0.0
        if family == "drifting-quadratic":
            self.bonus = [np.zeros(n) for n in self.space.cardinalities]
        elif bonus is not None:
            self.bonus = [np.asarray(b, dtype=float) for b in bonus]
            if len(self.bonus) != self.space.d_h or any(
                len(b) != n for b, n in zip(self.bonus, self.space.cardinalities)
            ):
                raise ValueError("bonus tables must match the categorical dims")
        else:
            self.bonus = [rng.permutation(np.linspace(0.0, 0.5, n)) for n in self.space.cardinalities]

    def center(self, t: float) -> np.ndarray:
        if self.space.d_x == 1:
            return np.array([0.5 + self.radius * math.cos(self._theta0)])
        th = self._theta0 + self._dtheta * t
        return 0.5 + self.radius * (math.cos(th) * self._u + math.sin(th) * self._v)

    def _bonus_table(self, j: int, t: float) -> np.ndarray:
        b = self.bonus[j]
        if self.switch_period > 0:
            return np.roll(b, int(t // self.switch_period))
        return b

    def truth_arrays(self, X, H, t) -> np.ndarray:
        X, H = np.asarray(X, dtype=float), np.asarray(H, dtype=int)
        n = max(len(X), len(H))
        X, H = X.reshape(n, self.space.d_x), H.reshape(n, self.space.d_h)
        val = 1.0 - np.sum((X - self.center(t)) ** 2, axis=1)
        for j in range(self.space.d_h):
            val = val + self._bonus_table(j, t)[H[:, j]]
        return val

    def truth(self, z: ConfigVector, t) -> float:
        if z.space != self.space:
            raise ValueError("config comes from a different space")
        return float(self.truth_arrays(z.x[None, :], z.h[None, :], t)[0])

    # -- scheduler interface ------------------------------------------------------------

    def initial_handle(self, config, rng) -> SyntheticState:
        return SyntheticState()

    def advance(self, handle, config, steps, t, rng):
        return SyntheticState(handle.steps + int(steps)), evaluate(self, config, t, rng)

    def score(self, handle, config, t) -> float:
        return self.truth(config, t)

    def distill(self, teacher_handle, teacher_config, student_config, budget, schedule, rng, start=None, offset=0, total=None):
        return SyntheticState((0 if start is None else start.steps) + int(budget))

    def describe(self) -> dict:
        return {"family": self.family, "drift": self.drift, "noise": self.noise, "seed": self.seed}


def evaluate(objective: SyntheticObjective, z: ConfigVector, t, rng: np.random.Generator) -> float:
    """Ground truth at (z, t) plus zero-mean Gaussian noise."""
    value = objective.truth(z, t)
    if objective.noise > 0:
        value += float(rng.normal(0.0, objective.noise))
    return value


# -- agent simulator --------------------------------------------------------------------


@dataclass(frozen=True)
class AgentState:
    perf: float
    steps: int = 0


@dataclass
class AgentSimObjective:
    """Scalar-performance stand-in for RL training.

    Per step, performance ``p`` grows by
    ``rate * (ceiling - p) * exp(-(log lr - log lr*(p))^2 / width) * eff``
    and loses ``instability * max(0, capacity - p - margin)`` when the network
    is large relative to what ``p`` supports. ``lr*(p) = lr_max (1 - p)^kappa``
    (floored at the smallest learning rate), so decreasing schedules win.
    """

    stateful = True

    space: SearchSpace = field(default_factory=ppo_space)
    lr_max: float = 1e-3
    lr_min: float = 1e-4
    kappa: float = 2.0
    width: float = 0.5
    rate: float = 0.08
    noise: float = 0.01
    cold_start: float = 0.05
    base_ceiling: float = 0.55
    capacity_gain: float = 0.45
    instability: float = 0.04
    margin: float = 0.3
    distill_rate: float = 0.25
    transfer_gap: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        names = set(self.space.names)
        if "learning_rate" not in names:
            raise ValueError("agent simulator needs a 'learning_rate' dimension")
        rng = np.random.default_rng(self.seed)
        self._others = [
            d.name
            for d in self.space.dims
            if not d.arch and d.name not in ("learning_rate", "batch_size")
        ]
        self._other_targets = {n: float(rng.uniform(0.2, 0.8)) for n in self._others}

    def optimal_lr(self, p: float) -> float:
        return max(self.lr_min, self.lr_max * (1.0 - min(max(p, 0.0), 1.0)) ** self.kappa)

    def _unit(self, config: ConfigVector, name: str) -> float:
        space = config.space
        for i, d in enumerate(space.x_dims):
            if d.name == name:
                return float(config.x[i])
        for i, d in enumerate(space.h_dims):
            if d.name == name:
                return float(config.h[i]) / (space.cardinalities[i] - 1)
        raise KeyError(name)

    def capacity(self, config: ConfigVector) -> float:
        parts = [self._unit(config, n) for n in ("pi_width", "pi_depth", "v_width", "v_depth") if n in self.space.names]
        return float(np.mean(parts)) if parts else 0.5

    def ceiling(self, config: ConfigVector) -> float:
        return self.base_ceiling + self.capacity_gain * self.capacity(config)

    def _spectral(self, config: ConfigVector) -> float:
        flags = [self._unit(config, n) for n in ("pi_spectral_norm", "v_spectral_norm") if n in self.space.names]
        return float(np.mean(flags)) if flags else 0.0

    def _features(self, config: ConfigVector, lr: float | None = None) -> tuple:
        """Per-config constants reused by every step of a run."""
        if lr is None:
            lr = float(config.decode()["learning_rate"])
        bs = self._unit(config, "batch_size") if "batch_size" in self.space.names else None
        other = 1.0
        if self._others:
            sq = np.mean([(self._unit(config, n) - self._other_targets[n]) ** 2 for n in self._others])
            other = math.exp(-sq / 0.5)
        return math.log(lr), self.ceiling(config), self.capacity(config), self._spectral(config), bs, other

    def _gain(self, p: float, feats: tuple, log_lr: float | None = None) -> float:
        lr_log, ceil, cap, sn, bs, other = feats
        if log_lr is not None:
            lr_log = log_lr
        eff = other if bs is None else other * math.exp(-((bs - p) ** 2) / 0.5)
        match = math.exp(-((lr_log - math.log(self.optimal_lr(p))) ** 2) / self.width)
        gain = self.rate * (ceil - p) * match * eff * (1.0 - 0.1 * sn)
        penalty = self.instability * max(0.0, cap - p - self.margin) * (1.0 - 0.7 * sn)
        return gain - penalty

    def efficiency(self, config: ConfigVector, p: float) -> float:
        _, _, _, _, bs, other = self._features(config, lr=1.0)
        return other if bs is None else other * math.exp(-((bs - p) ** 2) / 0.5)

    def step_gain(self, p: float, config: ConfigVector, lr: float | None = None) -> float:
        return self._gain(p, self._features(config, lr))

    def _run(self, p: float, config: ConfigVector, steps: int, lr: float | None = None) -> float:
        feats = self._features(config, lr)
        for _ in range(int(steps)):
            p = min(1.0, max(0.0, p + self._gain(p, feats)))
        return p

    # -- scheduler interface

    def initial_handle(self, config, rng) -> AgentState:
        return AgentState(self.cold_start, 0)

    def advance(self, handle: AgentState, config: ConfigVector, steps: int, t, rng):
        if config.space != self.space:
            raise ValueError("config comes from a different space")
        p = self._run(handle.perf, config, steps)
        ret = p + (float(rng.normal(0.0, self.noise)) if self.noise > 0 else 0.0)
        return AgentState(p, handle.steps + int(steps)), ret

    def score(self, handle: AgentState, config, t) -> float:
        return handle.perf

    def compatibility(self, teacher_config: ConfigVector, student_config: ConfigVector) -> float:
        return 1.0 - self.transfer_gap * abs(self.capacity(teacher_config) - self.capacity(student_config))

    def distill(self, teacher_handle, teacher_config, student_config, budget, schedule, rng, start=None, offset=0, total=None):
        """Pull a student towards the teacher with annealed weight while it trains.

        ``offset``/``total`` place these ``budget`` steps inside a longer
        distillation phase so the annealing continues across halving rungs.
        """
        from .generational import anneal_weights

        p = self.cold_start if start is None else start.perf
        budget = int(budget)
        total = max(budget + offset, 1) if total is None else max(int(total), 1)
        target = min(self.ceiling(student_config), teacher_handle.perf * self.compatibility(teacher_config, student_config))
        alpha0 = max(schedule.alpha_pi, 1e-12)
        feats = self._features(student_config)
        for k in range(budget):
            _, _, a_pi = anneal_weights(schedule, min(1.0, (offset + k) / total))
            pull = self.distill_rate * (a_pi / alpha0) * max(0.0, target - p)
            p = min(1.0, max(0.0, p + pull + max(0.0, self._gain(p, feats))))
        steps = (0 if start is None else start.steps) + budget
        return AgentState(p, steps)

    def oracle_curve(self, n_steps: int, config: ConfigVector | None = None) -> np.ndarray:
        """Noiseless performance of the lr = lr*(p) policy, one entry per step."""
        config = config or self.max_capacity_config()
        feats = self._features(config, lr=1.0)
        p = self.cold_start
        out = np.empty(n_steps)
        for k in range(n_steps):
            p = min(1.0, max(0.0, p + self._gain(p, feats, math.log(self.optimal_lr(p)))))
            out[k] = p
        return out

    def max_capacity_config(self) -> ConfigVector:
        raw = self.space.default_config().decode()
        for d in self.space.dims:
            if d.arch and d.kind == "ordinal":
                raw[d.name] = d.values[-1]
        for n in self._others:
            d = self.space.dim(n)
            raw[n] = d.from_unit(self._other_targets[n]) if d.kind != "categorical" else raw[n]
        return self.space.encode(raw)

    def describe(self) -> dict:
        return {"family": "agent-sim", "noise": self.noise, "kappa": self.kappa, "seed": self.seed}


# -- brute-force oracle -----------------------------------------------------------------


@dataclass(frozen=True)
class OracleGrid:
    points: int = 21
    max_size: int = 1_000_000

    def axes(self, space: SearchSpace) -> tuple[list[np.ndarray], list[np.ndarray]]:
        xs = []
        for d in space.x_dims:
            if d.kind == "continuous":
                xs.append(np.linspace(0.0, 1.0, self.points))
            else:
                n = len(d.values)
                xs.append(np.arange(n) / (n - 1))
        hs = [np.arange(n) for n in space.cardinalities]
        return xs, hs

    def size(self, space: SearchSpace) -> int:
        xs, hs = self.axes(space)
        return int(np.prod([len(a) for a in xs + hs], dtype=float))

    def enumerate(self, space: SearchSpace) -> tuple[np.ndarray, np.ndarray]:
        if self.size(space) > self.max_size:
            raise OversizedGridError(f"grid of {self.size(space)} points exceeds {self.max_size}")
        xs, hs = self.axes(space)
        px, ph = list(itertools.product(*xs)), list(itertools.product(*hs))
        X = np.array(px, dtype=float).reshape(len(px), space.d_x)
        H = np.array(ph, dtype=int).reshape(len(ph), space.d_h)
        Xf = np.repeat(X, len(H), axis=0)
        Hf = np.tile(H, (len(X), 1))
        return Xf, Hf


def brute_force_optimum(objective: SyntheticObjective, grid: OracleGrid, t) -> tuple[ConfigVector, float]:
    """Exhaustive argmax of the noiseless objective over the grid at time ``t``."""
    X, H = grid.enumerate(objective.space)
    vals = objective.truth_arrays(X, H, t)
    i = int(np.argmax(vals))
    return objective.space.make(X[i], H[i]), float(vals[i])


def make_objective(name: str, params: Mapping[str, Any] | None = None, space: SearchSpace | None = None, seed: int = 0):
    """Construct a benchmark by family name (``agent-sim`` or a synthetic family)."""
    params = dict(params or {})
    if name in ("agent-sim", "agent_sim"):
        if space is not None:
            params.setdefault("space", space)
        params.setdefault("seed", seed)
        return AgentSimObjective(**params)
    if name in FAMILIES:
        params.setdefault("seed", seed)
        return SyntheticObjective(family=name, space=space, **params)
    raise ValueError(f"unknown objective {name!r}")


__all__ = [
    "AgentSimObjective",
    "AgentState",
    "FAMILIES",
    "OracleGrid",
    "OversizedGridError",
    "SyntheticObjective",
    "SyntheticState",
    "brute_force_optimum",
    "evaluate",
    "make_objective",
]
