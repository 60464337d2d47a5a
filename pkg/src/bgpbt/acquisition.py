"""UCB acquisition and its interleaved maximization over a mixed space.

Each round takes one projected finite-difference gradient step on the free
continuous dims, then one local-search move on a randomly chosen free
ordinal (adjacent rank) or categorical (any other label) dim. Moves are only
accepted on strict improvement, so the acquisition trace is non-decreasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .gp import GPModel
from .search_space import ConfigVector
from .trust_region import TrustRegionState, hamming_fraction


@dataclass
class AcquisitionContext:
    """Everything needed to score and search configs.

    ``free_x``/``free_h`` mark searchable dims; the rest keep the value they
    have in ``fixed`` (or in the start config), e.g. the architecture block.
    """

    model: GPModel
    tr: TrustRegionState
    t: float
    beta: float = 1.0
    free_x: np.ndarray | None = None
    free_h: np.ndarray | None = None
    fixed: ConfigVector | None = None
    budget: int = 64
    tol: float = 1e-8
    fd_step: float = 1e-4

    def __post_init__(self) -> None:
        space = self.model.space
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        self.free_x = np.ones(space.d_x, bool) if self.free_x is None else np.asarray(self.free_x, bool)
        self.free_h = np.ones(space.d_h, bool) if self.free_h is None else np.asarray(self.free_h, bool)

    @property
    def space(self):
        return self.model.space

    def with_model(self, model: GPModel) -> AcquisitionContext:
        return replace(self, model=model)

    def with_fixed(self, fixed: ConfigVector | None) -> AcquisitionContext:
        return replace(self, fixed=fixed)

    # -- trust-region geometry on the free dims ----------------------------------------

    def radii(self) -> np.ndarray:
        return self.tr.radii(self.model.params.lengthscales, self.free_x)

    def inside(self, z: ConfigVector) -> bool:
        if self.tr.center is None:
            return True
        return self.tr.contains(z, self.model.params.lengthscales, self.free_x, self.free_h)

    def pin(self, z: ConfigVector) -> ConfigVector:
        """Copy the fixed dims of ``self.fixed`` into ``z``."""
        if self.fixed is None:
            return z
        x = np.where(self.free_x, z.x, self.fixed.x)
        h = np.where(self.free_h, z.h, self.fixed.h)
        return z.replace(x=x, h=h)


def ucb_arrays(ctx: AcquisitionContext, X, H) -> np.ndarray:
    mean, var = ctx.model.predict(X, H, ctx.t)
    return mean + np.sqrt(ctx.beta) * np.sqrt(var)


def ucb(ctx: AcquisitionContext, z: ConfigVector) -> float:
    """mu + sqrt(beta) * sigma at (z, t)."""
    return float(ucb_arrays(ctx, z.x[None, :], z.h[None, :])[0])


def ordinal_neighbors(z: ConfigVector, index: int) -> list[ConfigVector]:
    """Configs one rank away on x-block ordinal dim ``index``."""
    space = z.space
    n = space.ordinal_counts[index]
    if n == 0:
        raise ValueError("dimension is not ordinal")
    rank = space.x_dims[index].rank_of(z.x[index])
    out = []
    for r in (rank - 1, rank + 1):
        if 0 <= r < n:
            x = z.x.copy()
            x[index] = r / (n - 1)
            out.append(z.replace(x=x))
    return out


def categorical_neighbors(z: ConfigVector, index: int) -> list[ConfigVector]:
    out = []
    for k in range(z.space.cardinalities[index]):
        if k != z.h[index]:
            h = z.h.copy()
            h[index] = k
            out.append(z.replace(h=h))
    return out


def _continuous_box(ctx: AcquisitionContext):
    space = ctx.space
    lo, hi = np.zeros(space.d_x), np.ones(space.d_x)
    if ctx.tr.center is not None and ctx.tr.enabled:
        r = ctx.radii()
        c = ctx.tr.center.x
        finite = np.isfinite(r)
        # shave the open boundary so projected points stay strictly inside
        shrink = r * (1.0 - 1e-9)
        lo[finite] = np.maximum(0.0, c[finite] - shrink[finite])
        hi[finite] = np.minimum(1.0, c[finite] + shrink[finite])
    return lo, hi


@dataclass
class _SearchState:
    x: np.ndarray
    h: np.ndarray
    value: float
    step: float = 0.1
    trace: list = field(default_factory=list)


def _continuous_step(ctx, st: _SearchState, cont: np.ndarray, lo, hi) -> None:
    if cont.size == 0:
        return
    eps = ctx.fd_step
    k = cont.size
    plus = np.repeat(st.x[None, :], k, axis=0)
    minus = plus.copy()
    idx = np.arange(k)
    plus[idx, cont] = np.minimum(hi[cont], st.x[cont] + eps)
    minus[idx, cont] = np.maximum(lo[cont], st.x[cont] - eps)
    width = plus[idx, cont] - minus[idx, cont]
    usable = width > 0
    if not usable.any():
        return
    vals = ucb_arrays(ctx, np.vstack([plus, minus]), np.repeat(st.h[None, :], 2 * k, axis=0))
    grad = np.zeros(k)
    grad[usable] = (vals[:k][usable] - vals[k:][usable]) / width[usable]
    gmax = np.max(np.abs(grad))
    if not np.isfinite(gmax) or gmax == 0.0:
        return
    direction = grad / gmax
    steps = st.step * 0.5 ** np.arange(12)
    cand = np.repeat(st.x[None, :], len(steps), axis=0)
    cand[:, cont] = np.clip(st.x[cont] + steps[:, None] * direction, lo[cont], hi[cont])
    cand = ctx.space.snap(cand)
    cvals = ucb_arrays(ctx, cand, np.repeat(st.h[None, :], len(steps), axis=0))
    best = int(np.argmax(cvals))
    if cvals[best] > st.value:
        st.x, st.value = cand[best], float(cvals[best])
        st.step = min(0.5, 2.0 * steps[best])
    else:
        st.step = max(1e-6, st.step * 0.25)


def _discrete_step(ctx, st: _SearchState, choices: list, lo, hi, rng) -> None:
    if not choices:
        return
    block, i = choices[int(rng.integers(len(choices)))]
    space = ctx.space
    cand_x, cand_h = [], []
    if block == "x":
        n = space.ordinal_counts[i]
        rank = space.x_dims[i].rank_of(st.x[i])
        for r in (rank - 1, rank + 1):
            if 0 <= r < n:
                v = r / (n - 1)
                if lo[i] <= v <= hi[i] and _inside_open(ctx, i, v):
                    x = st.x.copy()
                    x[i] = v
                    cand_x.append(x)
                    cand_h.append(st.h)
    else:
        for k in range(space.cardinalities[i]):
            if k == st.h[i]:
                continue
            h = st.h.copy()
            h[i] = k
            if _cat_ok(ctx, h):
                cand_x.append(st.x)
                cand_h.append(h)
    if not cand_x:
        return
    vals = ucb_arrays(ctx, np.array(cand_x), np.array(cand_h))
    best = int(np.argmax(vals))
    if vals[best] > st.value:
        st.x, st.h, st.value = np.array(cand_x[best]), np.array(cand_h[best]), float(vals[best])


def _inside_open(ctx, i, v) -> bool:
    if ctx.tr.center is None or not ctx.tr.enabled:
        return True
    r = ctx.radii()[i]
    return abs(v - ctx.tr.center.x[i]) < r


def _cat_ok(ctx, h) -> bool:
    if ctx.tr.center is None or not ctx.tr.enabled or not ctx.free_h.any():
        return True
    return hamming_fraction(h[ctx.free_h], ctx.tr.center.h[ctx.free_h]) <= ctx.tr.length_h


def maximize_with_trace(ctx: AcquisitionContext, start: ConfigVector, rng: np.random.Generator):
    """Interleaved maximization; returns (config, value, per-round value trace)."""
    space = ctx.space
    cont = np.flatnonzero(space.continuous_mask & ctx.free_x)
    choices = [("x", int(i)) for i in np.flatnonzero(space.ordinal_mask & ctx.free_x)]
    choices += [("h", int(i)) for i in np.flatnonzero(ctx.free_h)]
    lo, hi = _continuous_box(ctx)
    x0 = start.x.copy()
    st = _SearchState(x0, start.h.copy(), ucb(ctx, start))
    st.trace.append(st.value)
    patience = max(1, len(choices))
    stagnant = 0
    for _ in range(ctx.budget):
        before = st.value
        _continuous_step(ctx, st, cont, lo, hi)
        _discrete_step(ctx, st, choices, lo, hi, rng)
        st.trace.append(st.value)
        if st.value - before < ctx.tol:
            stagnant += 1
            if stagnant >= patience:
                break
        else:
            stagnant = 0
    if st.value > st.trace[0]:
        return start.replace(x=st.x, h=st.h), st.value, st.trace
    return start, st.trace[0], st.trace


def interleaved_maximize(ctx: AcquisitionContext, start: ConfigVector, rng: np.random.Generator) -> ConfigVector:
    return maximize_with_trace(ctx, start, rng)[0]


def random_tr_point(ctx: AcquisitionContext, rng: np.random.Generator, base: ConfigVector) -> ConfigVector:
    """Random config inside the trust region around ``base`` (fixed dims untouched)."""
    space = ctx.space
    lo, hi = _continuous_box(ctx)
    x = base.x.copy()
    cont = np.flatnonzero(space.continuous_mask & ctx.free_x)
    x[cont] = lo[cont] + (hi[cont] - lo[cont]) * rng.random(cont.size)
    for i in np.flatnonzero(space.ordinal_mask & ctx.free_x):
        n = space.ordinal_counts[i]
        vals = np.arange(n) / (n - 1)
        ok = vals[(vals >= lo[i]) & (vals <= hi[i])]
        ok = [v for v in ok if _inside_open(ctx, i, v)]
        if ok:
            x[i] = ok[int(rng.integers(len(ok)))]
    h = base.h.copy()
    free_h = np.flatnonzero(ctx.free_h)
    if free_h.size:
        if ctx.tr.enabled and ctx.tr.center is not None:
            max_m = int(np.floor(ctx.tr.length_h * free_h.size + 1e-9))
        else:
            max_m = free_h.size
        m = int(rng.integers(0, max_m + 1))
        for i in rng.choice(free_h, size=m, replace=False):
            n = space.cardinalities[i]
            h[i] = (h[i] + int(rng.integers(1, n))) % n
    return base.replace(x=x, h=h)


def _start_point(ctx: AcquisitionContext, center: ConfigVector | None) -> ConfigVector:
    base = center if center is not None else ctx.tr.center
    if base is None:
        raise ValueError("no start point: trust region has no center")
    return ctx.pin(base)


def suggest(
    ctx: AcquisitionContext,
    n_starts: int,
    rng: np.random.Generator,
    extra_starts: Sequence[ConfigVector] = (),
    center: ConfigVector | None = None,
) -> ConfigVector:
    """Best of several interleaved searches; the TR center is always the first start."""
    first = _start_point(ctx, center)
    starts = [first] + [ctx.pin(s) for s in extra_starts]
    starts += [random_tr_point(ctx, rng, first) for _ in range(max(0, n_starts - 1))]
    best, best_val = None, -np.inf
    for s in starts:
        z, val, _ = maximize_with_trace(ctx, s, rng)
        if val > best_val:
            best, best_val = z, val
    return best


def suggest_batch(
    ctx: AcquisitionContext,
    m: int,
    rng: np.random.Generator,
    n_starts: int = 4,
    fixed: Sequence[ConfigVector | None] | None = None,
) -> list[ConfigVector]:
    """Sequential batch: each pick conditions the model on a posterior-mean fantasy."""
    if m < 1:
        raise ValueError("m must be at least 1")
    chosen: list[ConfigVector] = []
    local = ctx
    for k in range(m):
        if fixed is not None:
            local = local.with_fixed(fixed[k])
        z = suggest(local, n_starts, rng)
        tries = 0
        while z in chosen and tries < 8:
            z = interleaved_maximize(local, random_tr_point(local, rng, _start_point(local, None)), rng)
            tries += 1
        # a tiny discrete region may hold fewer than m points; give up after 100 draws
        while z in chosen and tries < 108:
            z = random_tr_point(local, rng, _start_point(local, None))
            tries += 1
        chosen.append(z)
        mean, _ = local.model.posterior(z, local.t)
        local = local.with_model(local.model.condition_on([z], local.t, [mean]))
    return chosen


__all__ = [
    "AcquisitionContext",
    "categorical_neighbors",
    "interleaved_maximize",
    "maximize_with_trace",
    "ordinal_neighbors",
    "random_tr_point",
    "suggest",
    "suggest_batch",
    "ucb",
    "ucb_arrays",
]
