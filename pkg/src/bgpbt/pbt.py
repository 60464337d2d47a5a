"""Population-based training loop with trust-region BO explore and generational NAS."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import acquisition
from .analysis import beta_schedule
from .config import ExperimentConfig, TReadySchedule
from .generational import (
    DistillationSchedule,
    GenerationPlan,
    collect_arch_records,
    successive_halving,
    suggest_architectures,
)
from .gp import Dataset, GPModel, fit
from .search_space import ConfigVector, SearchSpace, random_config
from .trust_region import (
    RestartArchive,
    TrustRegionConfig,
    TrustRegionState,
    is_success,
    needs_restart,
    record_result,
    refresh_archive,
    restart_center,
    top_count,
)

log = logging.getLogger(__name__)


@dataclass
class Agent:
    """One population member; ``handle`` stands in for the network weights."""

    id: int
    config: ConfigVector
    handle: Any
    steps: int = 0
    last_return: float = float("nan")
    generation: int = 0
    failed: bool = False
    stale: bool = False
    proposed: bool = False

    @property
    def rank_value(self) -> float:
        if self.failed or not math.isfinite(self.last_return):
            return -math.inf
        return self.last_return


@dataclass
class ScheduleRecord:
    """Append-only table with one row per agent per synchronization point."""

    space: SearchSpace
    rows: list[dict] = field(default_factory=list)

    def append(self, row: dict) -> None:
        self.rows.append(row)

    def ticks(self) -> list[int]:
        return sorted({r["tick"] for r in self.rows})

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for row in self.rows:
                fh.write(json.dumps(_jsonable(row), sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, path: str | Path, space: SearchSpace) -> ScheduleRecord:
        with open(path) as fh:
            rows = [json.loads(line) for line in fh if line.strip()]
        return cls(space, rows)

    def to_csv(self, path: str | Path) -> None:
        names = self.space.names
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tick", "agent_id", "return", "generation", "event", *names])
            for r in self.rows:
                w.writerow([r["tick"], r["agent_id"], r["return"], r["generation"], r["event"], *(r["config"][n] for n in names)])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


@dataclass
class PopulationState:
    agents: list[Agent]
    dataset: Dataset
    tr: TrustRegionState
    archive: RestartArchive = field(default_factory=RestartArchive)
    step: int = 0
    tick: int = 0
    generation: int = 0
    failures: int = 0
    steps_since_generation: int = 0
    best_return: float = -math.inf
    total_steps: int = 0
    model: GPModel | None = None
    restart_sets: list[list[ConfigVector]] = field(default_factory=list)
    current_restart: list[tuple[ConfigVector, float]] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.agents)

    def ranked(self) -> list[Agent]:
        return sorted(self.agents, key=lambda a: (-a.rank_value, a.id))

    def best(self) -> Agent:
        return self.ranked()[0]


# -- schedule helpers -------------------------------------------------------------------


def t_ready_at(schedule: TReadySchedule, t: float, horizon: float | None = None) -> int:
    """Steps until the next synchronization point when the global step is ``t``."""
    if schedule.mode == "constant":
        return int(schedule.start)
    horizon = schedule.horizon if horizon is None else horizon
    if horizon is None or horizon <= 0:
        raise ValueError("linear t_ready needs a positive horizon")
    if not 0 <= t <= horizon:
        raise ValueError("t must lie in [0, horizon]")
    value = schedule.start + (schedule.end - schedule.start) * (t / horizon)
    g = schedule.granularity
    return max(g, int(round(value / g)) * g)


def generation_due(pop: PopulationState, patience: int, step_budget: int) -> bool:
    return pop.failures >= patience or pop.steps_since_generation >= step_budget


def exploit(pop: PopulationState, q: float, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Bottom ceil(Bq/100) agents copy the handle and full config of a random top agent."""
    ranked = pop.ranked()
    k = top_count(len(ranked), q)
    top = ranked[:k]
    losers = [a for a in ranked[len(ranked) - k :] if a not in top]
    pairs = []
    for loser in losers:
        winner = top[int(rng.integers(k))]
        loser.handle = winner.handle
        loser.config = winner.config
        loser.steps = max(loser.steps, winner.steps)
        loser.last_return = winner.last_return
        loser.failed = False
        loser.stale = True
        pairs.append((loser.id, winner.id))
    return pairs


def _random_hparams(agent: Agent, space: SearchSpace, rng: np.random.Generator) -> ConfigVector:
    z = random_config(space, rng)
    x = np.where(space.arch_x_mask, agent.config.x, z.x)
    h = np.where(space.arch_h_mask, agent.config.h, z.h)
    return z.replace(x=x, h=h)


def explore(
    pop: PopulationState,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
    t: float,
) -> list[int]:
    """New hyperparameters for stale agents; the architecture block stays fixed."""
    stale = [a for a in pop.agents if a.stale]
    if not stale:
        return []
    space = pop.dataset.space
    opt = cfg.optimizer
    use_bo = opt.explore == "bo" and len(pop.dataset) > 0 and pop.model is not None
    configs = None
    if use_bo:
        free_x, free_h = ~space.arch_x_mask, ~space.arch_h_mask
        dims = int(free_x.sum() + free_h.sum())
        beta = opt.beta_scale * beta_schedule(max(1, int(t)), dims, opt.beta_delta)
        ctx = acquisition.AcquisitionContext(
            pop.model, pop.tr, t=float(t), beta=beta, free_x=free_x, free_h=free_h, budget=opt.acq_budget
        )
        try:
            configs = acquisition.suggest_batch(ctx, len(stale), rng, n_starts=opt.acq_starts, fixed=[a.config for a in stale])
        except Exception as exc:
            log.warning("BO explore failed (%s); sampling at random", exc)
            configs = None
    for i, agent in enumerate(stale):
        agent.config = configs[i] if configs is not None else _random_hparams(agent, space, rng)
        agent.stale = False
        agent.proposed = configs is not None
    return [a.id for a in stale]


# -- the scheduler ----------------------------------------------------------------------


class Scheduler:
    """Runs one seed of a population method and records the full schedule."""

    def __init__(self, cfg: ExperimentConfig, objective, rng: np.random.Generator, space: SearchSpace | None = None):
        self.cfg = cfg
        self.objective = objective
        self.rng = rng
        self.space = space if space is not None else getattr(objective, "space", None) or cfg.build_space()
        self.nas = cfg.optimizer.enable_nas and self.space.has_arch
        s = cfg.optimizer.trust_region
        tr_cfg = TrustRegionConfig(s.multiplier, s.succ_tol, s.fail_tol, s.min_x, s.min_h, s.init_x, s.init_h)
        self.pop = PopulationState(
            agents=[],
            dataset=Dataset(self.space),
            tr=TrustRegionState(config=tr_cfg, enabled=cfg.optimizer.enable_trust_region),
        )
        self.record = ScheduleRecord(self.space)
        self.horizon = cfg.scheduler.t_ready.horizon or cfg.scheduler.t_max
        self.best_so_far: list[float] = []
        target = cfg.optimizer.target
        if target == "auto":
            target = "improvement" if getattr(objective, "stateful", False) else "return"
        self.improvement = target == "improvement"

    # -- helpers

    def _t_ready(self) -> int:
        dt = t_ready_at(self.cfg.scheduler.t_ready, min(self.pop.step, self.horizon), self.horizon)
        return max(1, min(dt, self.cfg.scheduler.t_max - self.pop.step))

    def _initial_config(self) -> ConfigVector:
        z = random_config(self.space, self.rng)
        if self.nas:
            return z
        d = self.space.default_config()
        return z.replace(x=np.where(self.space.arch_x_mask, d.x, z.x), h=np.where(self.space.arch_h_mask, d.h, z.h))

    def _advance(self, agent: Agent, steps: int, t: int) -> None:
        try:
            handle, ret = self.objective.advance(agent.handle, agent.config, steps, t, self.rng)
            ret = float(ret)
            if not math.isfinite(ret):
                raise FloatingPointError("non-finite return")
        except Exception as exc:
            log.warning("agent %d failed at tick %d: %s", agent.id, t, exc)
            agent.failed, agent.last_return = True, float("nan")
            return
        agent.handle, agent.last_return, agent.failed = handle, ret, False
        agent.steps += int(steps)

    def _row(self, agent_id: int, tick: int, steps: int, agent_steps: int, generation: int, config, ret, score, tags) -> dict:
        return {
            "tick": tick,
            "agent_id": agent_id,
            "return": ret if ret is not None and math.isfinite(ret) else None,
            "score": score,
            "generation": generation,
            "event": "+".join(tags) if tags else "step",
            "steps": steps,
            "agent_steps": agent_steps,
            "L_x": self.pop.tr.length_x if self.pop.tr.enabled else None,
            "L_h": self.pop.tr.length_h if self.pop.tr.enabled else None,
            "config": _jsonable(config.decode()),
        }

    def _score(self, agent: Agent, t) -> float | None:
        if agent.failed:
            return None
        return float(self.objective.score(agent.handle, agent.config, t))

    def _refit(self) -> None:
        pop, opt = self.pop, self.cfg.optimizer
        if opt.explore != "bo" or len(pop.dataset) == 0:
            pop.model = None
            return
        init = pop.model.params if pop.model is not None else None
        try:
            pop.model = fit(
                pop.dataset, rng=self.rng, n_restarts=opt.gp_restarts, init=init,
                max_points=opt.max_points, maxiter=opt.gp_maxiter,
            )
        except Exception as exc:
            log.warning("GP fit failed at tick %d: %s", pop.tick, exc)
            pop.model = None

    def _observe(self, agent: Agent, t: int, before: float) -> None:
        """Add the surrogate target: the return, or its change over the interval."""
        y = agent.last_return
        if self.improvement:
            if not math.isfinite(before):
                return
            y = y - before
        self.pop.dataset.add(agent.config, t, y)
        self.pop.current_restart.append((agent.config, y))

    def _incumbent(self, t: float) -> ConfigVector:
        """Restart-bucket config with the highest posterior mean now (best target without a model)."""
        bucket = self.pop.current_restart
        if bucket and self.pop.model is not None:
            configs = list(dict.fromkeys(c for c, _ in bucket))
            means = [m for m, _ in self.pop.model.posterior_batch(configs, t)]
            return configs[int(np.argmax(means))]
        if bucket:
            return max(bucket, key=lambda item: item[1])[0]
        return self.pop.tr.center if self.pop.tr.center is not None else self.pop.best().config

    # -- phases

    def warm_start(self) -> None:
        """Train the initial pool for one interval and keep the top B."""
        cfg, pop = self.cfg.scheduler, self.pop
        dt = self._t_ready()
        pool = [Agent(i, self._initial_config(), None) for i in range(cfg.init_pool_size)]
        before = {}
        for a in pool:
            a.handle = self.objective.initial_handle(a.config, self.rng)
            before[a.id] = float(self.objective.score(a.handle, a.config, 0))
            self._advance(a, dt, 0)
        pop.total_steps += dt * len(pool)
        ranked = sorted(pool, key=lambda a: (-a.rank_value, a.id))
        keep = {a.id for a in ranked[: cfg.population_size]}
        for a in pool:
            if not a.failed:
                self._observe(a, 0, before[a.id])
            tags = ["init"] if a.id in keep else ["init", "dropped"]
            self.record.append(self._row(a.id, 0, dt, a.steps, 0, a.config, a.last_return, self._score(a, 0), tags))
        pop.agents = [Agent(new_id, a.config, a.handle, a.steps, a.last_return) for new_id, a in enumerate(ranked[: cfg.population_size])]
        pop.steps_since_generation += dt
        pop.best_return = max(a.rank_value for a in pop.agents)
        pop.tr.center = pop.best().config
        self._refit()
        self.best_so_far.append(max(s for s in (self._score(a, 0) for a in pop.agents) if s is not None))

    def tick(self) -> None:
        cfg, pop = self.cfg, self.pop
        pop.tick += 1
        t = pop.tick
        dt = self._t_ready()
        before = {a.id: a.last_return for a in pop.agents}
        for a in pop.agents:
            self._advance(a, dt, t)
        pop.step += dt
        pop.steps_since_generation += dt
        pop.total_steps += dt * pop.size
        snap = {a.id: (a.config, a.last_return, self._score(a, t), a.steps, pop.generation) for a in pop.agents}
        tags: dict[int, list[str]] = {a.id: [] for a in pop.agents}

        returns = [a.rank_value for a in pop.agents]
        for a in pop.agents:
            if a.failed:
                tags[a.id].append("failed")
                continue
            self._observe(a, t, before[a.id])
        if pop.tr.enabled:
            for a in pop.agents:
                if a.proposed:
                    change = record_result(pop.tr, is_success(a.rank_value, returns, cfg.scheduler.q))
                    if change:
                        pop.events.append({"tick": t, "event": change, "L_x": pop.tr.length_x, "L_h": pop.tr.length_h})
        for a in pop.agents:
            a.proposed = False

        tick_best = max(returns)
        if tick_best > pop.best_return:
            pop.best_return, pop.failures = tick_best, 0
        else:
            pop.failures += 1

        global_tags: list[str] = []
        if pop.step >= cfg.scheduler.t_max:
            pass  # nothing left to train; keep the final population as evaluated
        elif self.nas and generation_due(pop, cfg.scheduler.patience, cfg.scheduler.generation_budget):
            self._generation(t)
            global_tags.append("generation")
        else:
            for loser, winner in exploit(pop, cfg.scheduler.q, self.rng):
                tags[loser].append(f"exploit:{winner}")
            self._refit()
            if needs_restart(pop.tr) and pop.model is not None:
                self._restart(t)
                global_tags.append("restart")
            else:
                pop.tr.center = self._incumbent(t + 1)
            explore(pop, cfg, self.rng, t + 1)

        for aid, (config, ret, score, steps, gen) in snap.items():
            self.record.append(self._row(aid, t, dt, steps, gen, config, ret, score, tags[aid] + global_tags))
        scores = [v[2] for v in snap.values() if v[2] is not None]
        prev = self.best_so_far[-1] if self.best_so_far else -math.inf
        self.best_so_far.append(max([prev] + scores))

    def _restart(self, t: int) -> None:
        pop = self.pop
        pop.restart_sets.append([c for c, _ in pop.current_restart])
        pop.archive = refresh_archive(pop.archive, pop.restart_sets, pop.model, t)
        opt = self.cfg.optimizer
        dims = self.space.d_x + self.space.d_h
        beta = opt.beta_scale * beta_schedule(max(1, t), dims, opt.beta_delta)
        center = restart_center(pop.archive, self.space, beta, self.rng, n_starts=opt.acq_starts)
        if not self.nas:
            center = self._pin_arch(center, pop.best().config)
        pop.tr.reset(center)
        pop.current_restart = []
        pop.events.append({"tick": t, "event": "restart", "center": _jsonable(center.decode())})

    def _pin_arch(self, z: ConfigVector, ref: ConfigVector) -> ConfigVector:
        s = self.space
        return z.replace(x=np.where(s.arch_x_mask, ref.x, z.x), h=np.where(s.arch_h_mask, ref.h, z.h))

    def _generation(self, t: int) -> None:
        """New architectures, distillation from the best agent and successive halving."""
        cfg, pop, space = self.cfg.scheduler, self.pop, self.space
        teacher = pop.best()
        arch_space = space.arch_subspace()
        records = collect_arch_records(self.record, pop.generation, arch_space) if self.record.rows else []
        n_bo = min(cfg.n_bo_arch, cfg.candidate_count)
        archs = suggest_architectures(records, n_bo, cfg.candidate_count - n_bo, arch_space, self.rng)
        candidates = [(space.merge(teacher.config, y), None) for y in archs]
        plan = GenerationPlan(cfg.population_size, len(candidates), n_bo, cfg.distill_budget)
        schedule = DistillationSchedule(horizon=cfg.distill_budget)
        offsets = np.concatenate([[0], np.cumsum(plan.rung_budgets())])

        def evaluate(cand, rung, budget):
            config, handle = cand
            handle = self.objective.distill(
                teacher.handle, teacher.config, config, budget, schedule, self.rng,
                start=handle, offset=int(offsets[rung]), total=cfg.distill_budget,
            )
            _, ret = self.objective.advance(handle, config, 0, t, self.rng)
            return (config, handle), ret

        result = successive_halving(candidates, evaluate, plan, self.rng)
        pop.total_steps += result.steps
        pop.generation += 1
        pop.agents = [
            Agent(i, config, handle, teacher.steps + int(getattr(handle, "steps", 0)), ret, pop.generation)
            for i, ((config, handle), ret) in enumerate(zip(result.survivors, result.returns))
        ]
        pop.events.append(
            {
                "tick": t,
                "event": "generation",
                "generation": pop.generation,
                "teacher": teacher.id,
                "candidates": [_jsonable(c.decode()) for c, _ in candidates],
                "rungs": _jsonable(result.rungs),
                "survivors": [_jsonable(c.decode()) for c, _ in result.survivors],
                "steps": result.steps,
            }
        )
        # surrogate data is kept: architectures are contextual dims of the same GP
        pop.tr.reset(pop.best().config)
        pop.failures = 0
        pop.steps_since_generation = 0
        pop.best_return = -math.inf

    # -- driver

    def run(self) -> dict:
        self.warm_start()
        while self.pop.step < self.cfg.scheduler.t_max:
            self.tick()
        return self.summary()

    def summary(self) -> dict:
        pop = self.pop
        t = pop.tick
        scored = [(self._score(a, t), a) for a in pop.agents]
        scored = [(s, a) for s, a in scored if s is not None]
        final, best = max(scored, key=lambda item: (item[0], -item[1].id)) if scored else (float("nan"), pop.agents[0])
        return _jsonable(
            {
                "final_score": final,
                "final_best_return": max(a.rank_value for a in pop.agents),
                "best_agent": best.id,
                "best_config": best.config.decode(),
                "ticks": t,
                "steps_per_agent": pop.step,
                "total_steps": pop.total_steps,
                "generations": pop.generation,
                "restarts": sum(1 for e in pop.events if e["event"] == "restart"),
                "best_so_far": self.best_so_far,
                "gp_params": pop.model.params.to_dict() if pop.model is not None else None,
            }
        )


def run(cfg: ExperimentConfig, objective, rng: np.random.Generator) -> tuple[ScheduleRecord, dict, list[dict]]:
    """Run one seed; returns the schedule record, the summary and the event log."""
    sched = Scheduler(cfg, objective, rng)
    summary = sched.run()
    return sched.record, summary, sched.pop.events


def nominal_budget(cfg: ExperimentConfig) -> int:
    s = cfg.scheduler
    return s.init_pool_size * t_ready_at(s.t_ready, 0, s.t_ready.horizon or s.t_max) + s.population_size * s.t_max


def random_search(
    cfg: ExperimentConfig, objective, rng: np.random.Generator, total_budget: int | None = None
) -> tuple[ScheduleRecord, dict, list[dict]]:
    """Independent agents with fixed random configs, as many as the step budget allows."""
    space = objective.space
    s = cfg.scheduler
    budget = nominal_budget(cfg) if total_budget is None else int(total_budget)
    n = max(s.population_size, math.ceil(budget / s.t_max))
    default = space.default_config()
    agents = []
    for i in range(n):
        z = random_config(space, rng)
        if not (cfg.optimizer.enable_nas and space.has_arch):
            z = z.replace(x=np.where(space.arch_x_mask, default.x, z.x), h=np.where(space.arch_h_mask, default.h, z.h))
        agents.append(Agent(i, z, objective.initial_handle(z, rng)))
    record = ScheduleRecord(space)
    horizon = s.t_ready.horizon or s.t_max
    step, tick, total = 0, 0, 0
    best_so_far: list[float] = []
    while step < s.t_max:
        tick += 1
        dt = max(1, min(t_ready_at(s.t_ready, min(step, horizon), horizon), s.t_max - step))
        scores = []
        for a in agents:
            try:
                a.handle, a.last_return = objective.advance(a.handle, a.config, dt, tick, rng)
                a.steps += dt
                score = float(objective.score(a.handle, a.config, tick))
            except Exception as exc:
                log.warning("agent %d failed at tick %d: %s", a.id, tick, exc)
                a.failed, a.last_return, score = True, float("nan"), None
            if score is not None:
                scores.append(score)
            record.append(
                {
                    "tick": tick, "agent_id": a.id, "return": a.last_return if math.isfinite(a.last_return) else None,
                    "score": score, "generation": 0, "event": "failed" if a.failed else "step", "steps": dt,
                    "agent_steps": a.steps, "L_x": None, "L_h": None, "config": _jsonable(a.config.decode()),
                }
            )
        step += dt
        total += dt * n
        best_so_far.append(max(scores + best_so_far[-1:], default=-math.inf))
    final_scores = [(float(objective.score(a.handle, a.config, tick)), a) for a in agents if not a.failed]
    final, best = max(final_scores, key=lambda item: (item[0], -item[1].id))
    summary = _jsonable(
        {
            "final_score": final,
            "final_best_return": max(a.rank_value for a in agents),
            "best_agent": best.id,
            "best_config": best.config.decode(),
            "ticks": tick,
            "steps_per_agent": step,
            "total_steps": total,
            "generations": 0,
            "restarts": 0,
            "best_so_far": best_so_far,
        }
    )
    return record, summary, []


__all__ = [
    "Agent",
    "PopulationState",
    "ScheduleRecord",
    "Scheduler",
    "exploit",
    "explore",
    "generation_due",
    "nominal_budget",
    "random_search",
    "run",
    "t_ready_at",
]
