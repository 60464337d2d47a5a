"""Information gain, the UCB exploration schedule and time-varying regret."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .benchmarks import OracleGrid, SyntheticObjective, brute_force_optimum
from .kernels import KernelParams, cross_cov


def info_gain(kernel_matrix, noise_var: float) -> float:
    """0.5 * log det(I + K / noise_var)."""
    K = np.asarray(kernel_matrix, dtype=float)
    if K.size == 0:
        return 0.0
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("kernel matrix must be square")
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    A = np.eye(len(K)) + K / noise_var
    try:
        L = np.linalg.cholesky(0.5 * (A + A.T))
    except np.linalg.LinAlgError:
        raise ValueError("kernel matrix is not positive semi-definite") from None
    return float(np.sum(np.log(np.diag(L))))


def beta_schedule(tick: int, dims: int, delta: float = 0.1) -> float:
    """GP-UCB exploration weight: 2 log(pi^2 t^2 / (3 delta)) + 2 d log(t^2)."""
    if tick < 1:
        raise ValueError("tick must be >= 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return 2.0 * math.log(math.pi**2 * tick**2 / (3.0 * delta)) + 2.0 * dims * math.log(tick**2)


def theorem_reference_curve(
    ticks: Sequence[int], batch: int, gamma_x: Sequence[float], eta: float, n_tilde: float, omega: float,
    noise_var: float = 1.0, lam: float = 0.5, dims: int = 1, delta: float = 0.1,
) -> np.ndarray:
    """Reference value of the mixed time-varying regret bound (not an assertion)."""
    out = []
    c1 = 8.0 / math.log(1.0 + 1.0 / noise_var)
    for i, g in zip(ticks, gamma_x):
        ib = i * batch
        gamma = ib / n_tilde * (lam * eta * g + (eta - 2 * lam) * math.log(ib) + n_tilde**3 * omega / noise_var)
        out.append(math.sqrt(max(0.0, c1 * i * beta_schedule(i, dims, delta) / batch * gamma)) + 2.0)
    return np.array(out)


@dataclass
class RegretTrace:
    ticks: list[int] = field(default_factory=list)
    oracle: list[float] = field(default_factory=list)
    best_return: list[float] = field(default_factory=list)
    instantaneous: list[float] = field(default_factory=list)
    cumulative: list[float] = field(default_factory=list)
    beta: list[float] = field(default_factory=list)
    info_gain: list[float] = field(default_factory=list)
    restarts: list[int] = field(default_factory=list)

    def append(self, tick, oracle, best, beta=float("nan"), gain=float("nan")) -> None:
        r = max(0.0, oracle - best)
        self.ticks.append(int(tick))
        self.oracle.append(float(oracle))
        self.best_return.append(float(best))
        self.instantaneous.append(r)
        self.cumulative.append((self.cumulative[-1] if self.cumulative else 0.0) + r)
        self.beta.append(float(beta))
        self.info_gain.append(float(gain))

    def average(self) -> np.ndarray:
        return np.asarray(self.cumulative) / np.arange(1, len(self.cumulative) + 1)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tick", "oracle", "best_return", "instantaneous", "cumulative", "beta", "info_gain"])
            for row in zip(self.ticks, self.oracle, self.best_return, self.instantaneous, self.cumulative, self.beta, self.info_gain):
                w.writerow(row)


def _polish(objective: SyntheticObjective, z, t) -> float:
    """Refine a grid optimum over the continuous coordinates (discrete dims fixed)."""
    space = objective.space
    cont = np.flatnonzero(space.continuous_mask)
    if cont.size == 0:
        return objective.truth(z, t)
    x0 = z.x.copy()

    def neg(v):
        x = x0.copy()
        x[cont] = v
        return -float(objective.truth_arrays(x[None, :], z.h[None, :], t)[0])

    res = minimize(neg, x0[cont], method="L-BFGS-B", bounds=[(0.0, 1.0)] * cont.size)
    return max(-float(res.fun), objective.truth(z, t))


def oracle_value(objective: SyntheticObjective, grid: OracleGrid, t) -> float:
    z, _ = brute_force_optimum(objective, grid, t)
    return _polish(objective, z, t)


def final_quartile_decreasing(trace: RegretTrace) -> bool:
    """R_t / t is non-increasing across the last quarter of ticks and strictly lower at the end."""
    avg = trace.average()
    n = len(avg)
    if n < 4:
        return False
    tail = avg[n - max(2, n // 4) - 1 :]
    return bool(np.all(np.diff(tail) <= 1e-12) and tail[-1] < tail[0])


def info_gain_curve(schedule_record, params: KernelParams, ticks: Sequence[int]) -> list[float]:
    """Information gain of all recorded observations up to each tick under fixed kernel params."""
    space = schedule_record.space
    rows = sorted((r for r in schedule_record.rows if r["return"] is not None), key=lambda r: r["tick"])
    if not rows:
        return [0.0 for _ in ticks]
    configs = [space.encode(r["config"]) for r in rows]
    X, H = space.to_arrays(configs)
    T = np.array([r["tick"] for r in rows], dtype=float)
    K = cross_cov(X, H, T, X, H, T, params)
    K = 0.5 * (K + K.T)
    counts = np.searchsorted(T, np.asarray(ticks, dtype=float), side="right")
    return [info_gain(K[:n, :n], params.noise_var) for n in counts]


def regret_trace(
    schedule_record,
    objective,
    grid: OracleGrid | None = None,
    dims: int | None = None,
    delta: float = 0.1,
    params: KernelParams | None = None,
) -> RegretTrace:
    """Per-tick batch regret of the population against the noiseless optimum.

    Synthetic objectives use a brute-force grid optimum (polished over the
    continuous coordinates). The agent simulator is compared against the
    performance of its oracle learning-rate policy after the same number of steps.
    """
    rows = [r for r in schedule_record.rows if r["tick"] >= 1]
    by_tick: dict[int, list] = {}
    for r in rows:
        by_tick.setdefault(r["tick"], []).append(r)
    trace = RegretTrace()
    space = objective.space
    dims = space.d_x + space.d_h if dims is None else dims
    oracle_curve = None
    if not isinstance(objective, SyntheticObjective):
        last = max((r["agent_steps"] for r in rows), default=0)
        oracle_curve = objective.oracle_curve(int(last) + 1)
    grid = grid or OracleGrid()
    for tick in sorted(by_tick):
        group = by_tick[tick]
        scores = [r["score"] for r in group if r["score"] is not None]
        best = max(scores) if scores else -np.inf
        if oracle_curve is not None:
            steps = int(max(r["agent_steps"] for r in group))
            oracle = max(float(oracle_curve[max(0, steps - 1)]), best)
        else:
            oracle = max(oracle_value(objective, grid, tick), best)
        trace.append(tick, oracle, best, beta_schedule(tick, dims, delta))
        if any("restart" in (r["event"] or "") for r in group):
            trace.restarts.append(tick)
    if params is not None and trace.ticks:
        trace.info_gain = info_gain_curve(schedule_record, params, trace.ticks)
    return trace


__all__ = [
    "RegretTrace",
    "beta_schedule",
    "final_quartile_decreasing",
    "info_gain",
    "info_gain_curve",
    "oracle_value",
    "regret_trace",
    "theorem_reference_curve",
]
