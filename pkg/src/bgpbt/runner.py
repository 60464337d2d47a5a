"""Per-seed method execution and cross-seed aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from . import pbt
from .benchmarks import make_objective
from .config import ExperimentConfig


@dataclass
class SeedResult:
    method: str
    seed: int
    record: pbt.ScheduleRecord
    summary: dict
    events: list[dict]
    objective: object


def run_method(cfg: ExperimentConfig, method: str, seed: int, budget: int | None = None) -> SeedResult:
    """Run ``method`` on a fresh objective for ``seed``.

    Random search gets ``budget`` total steps (defaults to the nominal
    population budget); the other methods are configured via ``with_method``.
    """
    mcfg = cfg.with_method(method) if method != "random_search" else cfg
    space = mcfg.build_space()
    objective = make_objective(cfg.objective.name, cfg.objective.params, space, seed=seed)
    rng = np.random.default_rng(seed)
    if method == "random_search":
        record, summary, events = pbt.random_search(mcfg, objective, rng, total_budget=budget)
    else:
        record, summary, events = pbt.run(mcfg, objective, rng)
    summary = {**summary, "method": method, "seed": seed}
    return SeedResult(method, seed, record, summary, events, objective)


def run_methods(cfg: ExperimentConfig, seed: int, methods: Sequence[str] | None = None) -> dict[str, SeedResult]:
    """All methods for one seed; random search is matched to the largest population budget."""
    methods = list(methods or cfg.methods)
    out: dict[str, SeedResult] = {}
    for m in methods:
        if m != "random_search":
            out[m] = run_method(cfg, m, seed)
    if "random_search" in methods:
        budgets = [r.summary["total_steps"] for r in out.values()]
        out["random_search"] = run_method(cfg, "random_search", seed, max(budgets) if budgets else None)
    return {m: out[m] for m in methods}


def mean_sem(values: Sequence[float]) -> tuple[float, float]:
    v = np.asarray([x for x in values if x is not None and math.isfinite(x)], dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(stats.sem(v))


def comparison_table(results: dict[str, list[float]], fmt: str = "{:.4f}") -> str:
    """Methods as columns; one row of mean ± sem plus the seed count."""
    methods = list(results)
    cells = []
    for m in methods:
        mu, se = mean_sem(results[m])
        cells.append(f"{fmt.format(mu)} ± {fmt.format(se)}")
    widths = [max(len(m), len(c)) for m, c in zip(methods, cells)]
    header = " | ".join(m.ljust(w) for m, w in zip(methods, widths))
    line = " | ".join(c.ljust(w) for c, w in zip(cells, widths))
    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([header, sep, line])


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    if len(x) < 2 or np.all(np.asarray(y) == np.asarray(y)[0]):
        return 0.0
    return float(stats.spearmanr(x, y)[0])


def best_agent_series(record: pbt.ScheduleRecord, name: str) -> tuple[list[int], list]:
    """Per tick (>= 1), the decoded value of ``name`` for the agent with the highest return."""
    ticks: dict[int, dict] = {}
    for r in record.rows:
        if r["tick"] < 1 or r["return"] is None:
            continue
        cur = ticks.get(r["tick"])
        if cur is None or (r["return"], -r["agent_id"]) > (cur["return"], -cur["agent_id"]):
            ticks[r["tick"]] = r
    order = sorted(ticks)
    return order, [ticks[t]["config"][name] for t in order]


__all__ = ["SeedResult", "best_agent_series", "comparison_table", "mean_sem", "run_method", "run_methods", "spearman"]
