"""Generation boundaries: new architectures, successive halving and distillation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .search_space import ConfigVector, SearchSpace, encode, random_config

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DistillationSchedule:
    alpha_rl: float = 1.0
    alpha_v: float = 0.0
    alpha_pi: float = 5.0
    horizon: int = 30

    def __post_init__(self) -> None:
        if min(self.alpha_rl, self.alpha_v, self.alpha_pi) < 0:
            raise ValueError("loss weights must be non-negative")


def anneal_weights(schedule: DistillationSchedule, progress: float) -> tuple[float, float, float]:
    """(alpha_RL, alpha_V, alpha_pi) with the supervised weights scaled by 1 - progress."""
    if not 0.0 <= progress <= 1.0:
        raise ValueError("progress must lie in [0, 1]")
    keep = 1.0 - progress
    return schedule.alpha_rl, schedule.alpha_v * keep, schedule.alpha_pi * keep


@dataclass(frozen=True)
class ArchRecord:
    arch: ConfigVector
    best_return: float


def collect_arch_records(schedule_record, generation: int, arch_space: SearchSpace) -> list[ArchRecord]:
    """Best return per distinct architecture over the rows of one generation."""
    best: dict[tuple, float] = {}
    for row in schedule_record.rows:
        if row["generation"] != generation or row["tick"] < 1:
            continue
        ret = row["return"]
        if ret is None or not math.isfinite(ret):
            continue
        key = tuple(row["config"][n] for n in arch_space.names)
        if key not in best or ret > best[key]:
            best[key] = ret
    return [ArchRecord(encode(dict(zip(arch_space.names, k)), arch_space), v) for k, v in best.items()]


def suggest_architectures(
    records: Sequence[ArchRecord],
    n_bo: int,
    n_random: int,
    arch_space: SearchSpace,
    rng: np.random.Generator,
    beta: float = 4.0,
    n_starts: int = 4,
) -> list[ConfigVector]:
    """``n_bo`` UCB suggestions from a GP over architectures plus ``n_random`` uniform draws."""
    from .acquisition import AcquisitionContext, suggest_batch
    from .gp import Dataset, fit
    from .trust_region import TrustRegionState

    total = n_bo + n_random
    out: list[ConfigVector] = []
    if records and n_bo > 0:
        data = Dataset(arch_space)
        for r in records:
            data.add(r.arch, 0, r.best_return)
        try:
            model = fit(data, rng=rng, n_restarts=2, fit_omega=False, omega=0.0)
            best = max(records, key=lambda r: r.best_return).arch
            ctx = AcquisitionContext(model, TrustRegionState(center=best, enabled=False), t=0.0, beta=beta)
            out = suggest_batch(ctx, n_bo, rng, n_starts=n_starts)
        except Exception as exc:
            log.warning("architecture GP failed (%s); falling back to random sampling", exc)
            out = []
    unique: list[ConfigVector] = []
    for a in out:
        if a not in unique:
            unique.append(a)
    tries = 0
    while len(unique) < total:
        a = random_config(arch_space, rng)
        tries += 1
        if a not in unique or tries > 50 * total:
            unique.append(a)
    return unique


@dataclass(frozen=True)
class GenerationPlan:
    population_size: int = 8
    n_candidates: int = 24
    n_bo: int = 4
    distill_budget: int = 30

    def __post_init__(self) -> None:
        if self.n_candidates < self.population_size:
            raise ValueError("need at least population_size candidates")
        if self.distill_budget < 1:
            raise ValueError("distillation budget must be positive")

    def rung_sizes(self) -> list[int]:
        sizes = [self.n_candidates]
        while sizes[-1] > self.population_size:
            sizes.append(max(self.population_size, sizes[-1] // 2))
        return sizes

    def rung_budgets(self) -> list[int]:
        n = len(self.rung_sizes())
        base, extra = divmod(self.distill_budget, n)
        budgets = [base] * n
        for i in range(extra):
            budgets[n - 1 - i] += 1
        return budgets

    @property
    def total_budget(self) -> int:
        return sum(s * b for s, b in zip(self.rung_sizes(), self.rung_budgets()))


@dataclass
class HalvingResult:
    survivors: list[Any]
    returns: list[float]
    rungs: list[dict] = field(default_factory=list)
    steps: int = 0


def successive_halving(
    candidates: Sequence[Any],
    objective_eval: Callable[[Any, int, int], tuple[Any, float]],
    plan: GenerationPlan,
    rng: np.random.Generator | None = None,
) -> HalvingResult:
    """Advance every live candidate by the rung budget, then drop the worse half (never below B).

    ``objective_eval(candidate, rung_index, budget)`` returns the advanced
    candidate and its return. Ties are broken by candidate position.
    """
    if len(candidates) < plan.population_size:
        raise ValueError("fewer candidates than population size")
    sizes = GenerationPlan(plan.population_size, len(candidates), plan.n_bo, plan.distill_budget).rung_sizes()
    budgets = GenerationPlan(plan.population_size, len(candidates), plan.n_bo, plan.distill_budget).rung_budgets()
    live = list(enumerate(candidates))
    rungs = []
    steps = 0
    returns: dict[int, float] = {}
    for r, budget in enumerate(budgets):
        advanced = []
        for idx, cand in live:
            cand, ret = objective_eval(cand, r, budget)
            steps += budget
            ret = float(ret) if ret is not None and math.isfinite(ret) else -math.inf
            returns[idx] = ret
            advanced.append((idx, cand))
        keep = sizes[r + 1] if r + 1 < len(sizes) else len(advanced)
        order = sorted(advanced, key=lambda item: (-returns[item[0]], item[0]))
        survivors, dropped = order[:keep], order[keep:]
        rungs.append(
            {
                "rung": r,
                "budget": budget,
                "live": [i for i, _ in advanced],
                "returns": [returns[i] for i, _ in advanced],
                "eliminated": [i for i, _ in dropped],
                "threshold": returns[survivors[-1][0]] if survivors else None,
            }
        )
        live = sorted(survivors, key=lambda item: item[0])
    return HalvingResult([c for _, c in live], [returns[i] for i, _ in live], rungs, steps)


def distill_transfer(
    teacher_handle,
    teacher_config: ConfigVector,
    student_config: ConfigVector,
    objective,
    budget: int,
    schedule: DistillationSchedule,
    rng: np.random.Generator,
    start=None,
    offset: int = 0,
    total: int | None = None,
):
    """Student state after ``budget`` steps of distillation from the teacher.

    ``start`` continues an earlier partial transfer; ``offset`` and ``total``
    place these steps within the whole distillation phase for annealing.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    return objective.distill(
        teacher_handle, teacher_config, student_config, budget, schedule, rng, start=start, offset=offset, total=total
    )


__all__ = [
    "ArchRecord",
    "DistillationSchedule",
    "GenerationPlan",
    "HalvingResult",
    "anneal_weights",
    "collect_arch_records",
    "distill_transfer",
    "successive_halving",
    "suggest_architectures",
]
