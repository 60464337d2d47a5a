"""Trust-region state machine with restart archive.

Radii are stored as integer expansion levels so that repeated resizing is
exact: ``L_x = L_x_init * multiplier ** level_x`` (and likewise for ``L_h``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .search_space import ConfigVector, SearchSpace, random_config

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrustRegionConfig:
    multiplier: float = 1.5
    succ_tol: int = 3
    fail_tol: int = 10
    min_x: float = 0.15
    min_h: float = 0.1
    init_x: float = 0.4
    init_h: float = 1.0
    max_x_factor: float = 4.0

    @property
    def max_level_x(self) -> int:
        return int(math.floor(math.log(self.max_x_factor) / math.log(self.multiplier) + 1e-12))

    @property
    def max_level_h(self) -> int:
        return int(math.floor(math.log(1.0 / self.init_h) / math.log(self.multiplier) + 1e-12))


@dataclass
class TrustRegionState:
    center: ConfigVector | None = None
    config: TrustRegionConfig = field(default_factory=TrustRegionConfig)
    level_x: int = 0
    level_h: int = 0
    success_streak: int = 0
    failure_streak: int = 0
    enabled: bool = True

    @property
    def length_x(self) -> float:
        return self.config.init_x * self.config.multiplier**self.level_x

    @property
    def length_h(self) -> float:
        return min(1.0, self.config.init_h * self.config.multiplier**self.level_h)

    def snapshot(self) -> dict:
        return {
            "L_x": self.length_x,
            "L_h": self.length_h,
            "success_streak": self.success_streak,
            "failure_streak": self.failure_streak,
        }

    def reset(self, center: ConfigVector | None = None) -> None:
        self.level_x = self.level_h = 0
        self.success_streak = self.failure_streak = 0
        if center is not None:
            self.center = center

    # -- geometry ---------------------------------------------------------------------

    def radii(self, lengthscales, free_x: np.ndarray | None = None) -> np.ndarray:
        """Per-dimension box half-widths over the x block (inf for fixed dims)."""
        ls = np.asarray(lengthscales, dtype=float).reshape(-1)
        free = np.ones(ls.shape, bool) if free_x is None else np.asarray(free_x, bool)
        out = np.full(ls.shape, np.inf)
        if not self.enabled:
            return out
        out[free] = lengthscale_weights(ls[free]) * self.length_x
        return out

    def box(self, lengthscales, free_x: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Closed approximation of the (open) box, clipped to [0, 1]."""
        c = self.center.x
        r = self.radii(lengthscales, free_x)
        return np.maximum(0.0, c - r), np.minimum(1.0, c + r)

    def contains(self, z: ConfigVector, lengthscales, free_x=None, free_h=None) -> bool:
        return contains(self, z, lengthscales, free_x, free_h)


def lengthscale_weights(ls: np.ndarray) -> np.ndarray:
    """l_i / geomean(l): mean-normalized lengthscales divided by their geometric mean."""
    ls = np.asarray(ls, dtype=float)
    if ls.size == 0:
        return ls
    if np.all(ls == ls[0]):
        return np.ones_like(ls)
    tilde = ls / ls.mean()
    return tilde / np.exp(np.mean(np.log(tilde)))


def hamming_fraction(h: np.ndarray, h2: np.ndarray) -> float:
    if len(h) == 0:
        return 0.0
    return float(np.mean(np.asarray(h) != np.asarray(h2)))


def contains(tr: TrustRegionState, z: ConfigVector, lengthscales, free_x=None, free_h=None) -> bool:
    """Membership test; dims outside ``free_x``/``free_h`` are ignored (contextual dims)."""
    if tr.center is None:
        raise ValueError("trust region has no center")
    if z.space != tr.center.space:
        raise ValueError("config and trust region come from different spaces")
    if not tr.enabled:
        return True
    space = z.space
    fx = np.ones(space.d_x, bool) if free_x is None else np.asarray(free_x, bool)
    fh = np.ones(space.d_h, bool) if free_h is None else np.asarray(free_h, bool)
    if fh.any() and hamming_fraction(z.h[fh], tr.center.h[fh]) > tr.length_h:
        return False
    if fx.any():
        r = tr.radii(lengthscales, fx)[fx]
        if np.any(np.abs(z.x[fx] - tr.center.x[fx]) >= r):
            return False
    return True


def is_success(agent_return: float, population_returns: Sequence[float], q: float) -> bool:
    """True iff the return is at least the ceil(B q / 100)-th largest population return."""
    returns = np.asarray(population_returns, dtype=float)
    if returns.size == 0:
        raise ValueError("population is empty")
    if not 0 < q <= 50:
        raise ValueError("q must lie in (0, 50]")
    k = top_count(len(returns), q)
    threshold = np.sort(returns)[::-1][k - 1]
    return bool(agent_return >= threshold)


def top_count(b: int, q: float) -> int:
    return max(1, math.ceil(b * q / 100.0 - 1e-9))


def record_result(tr: TrustRegionState, success: bool) -> str | None:
    """Update streaks and radii in place; returns ``expand``/``shrink`` when resized."""
    cfg = tr.config
    if success:
        tr.failure_streak = 0
        tr.success_streak += 1
        if tr.success_streak >= cfg.succ_tol:
            tr.success_streak = 0
            tr.level_x = min(cfg.max_level_x, tr.level_x + 1)
            tr.level_h = min(cfg.max_level_h, tr.level_h + 1)
            return "expand"
    else:
        tr.success_streak = 0
        tr.failure_streak += 1
        if tr.failure_streak >= cfg.fail_tol:
            tr.failure_streak = 0
            tr.level_x -= 1
            tr.level_h -= 1
            return "shrink"
    return None


def needs_restart(tr: TrustRegionState) -> bool:
    if not tr.enabled:
        return False
    return tr.length_x < tr.config.min_x or tr.length_h < tr.config.min_h


@dataclass
class ArchiveEntry:
    config: ConfigVector
    score: float


@dataclass
class RestartArchive:
    entries: list[ArchiveEntry] = field(default_factory=list)
    restarts: int = 0

    def __len__(self) -> int:
        return len(self.entries)


def refresh_archive(
    archive: RestartArchive,
    restart_data_sets: Sequence[Sequence[ConfigVector]],
    surrogate,
    T: float,
) -> RestartArchive:
    """Re-score each completed restart by the present posterior mean and keep its argmax."""
    entries = []
    for configs in restart_data_sets:
        if not configs:
            continue
        preds = surrogate.posterior_batch(list(configs), T)
        means = [m for m, _ in preds]
        best = int(np.argmax(means))
        entries.append(ArchiveEntry(configs[best], float(means[best])))
    return RestartArchive(entries, restarts=max(archive.restarts, len(restart_data_sets)))


def restart_center(
    archive: RestartArchive,
    space: SearchSpace,
    beta: float,
    rng: np.random.Generator,
    fit_fn: Callable | None = None,
    n_starts: int = 8,
) -> ConfigVector:
    """UCB maximizer of an auxiliary time-invariant GP fitted on the archive."""
    if len(archive) == 0:
        return random_config(space, rng)
    from . import acquisition
    from .gp import Dataset, fit

    data = Dataset(space)
    for e in archive.entries:
        data.add(e.config, 0, e.score)
    try:
        model = (fit_fn or fit)(data, rng=rng, n_restarts=2, fit_omega=False, omega=0.0)
    except Exception as exc:
        log.warning("auxiliary GP fit failed (%s); using a random restart center", exc)
        return random_config(space, rng)
    full = TrustRegionState(center=archive.entries[0].config, enabled=False)
    ctx = acquisition.AcquisitionContext(model, full, t=0.0, beta=beta)
    best = max(archive.entries, key=lambda e: e.score).config
    return acquisition.suggest(ctx, n_starts, rng, extra_starts=[e.config for e in archive.entries], center=best)


__all__ = [
    "ArchiveEntry",
    "RestartArchive",
    "TrustRegionConfig",
    "TrustRegionState",
    "contains",
    "hamming_fraction",
    "is_success",
    "lengthscale_weights",
    "needs_restart",
    "record_result",
    "refresh_archive",
    "restart_center",
    "top_count",
]
