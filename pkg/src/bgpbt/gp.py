"""Time-varying Gaussian process surrogate.

Targets are z-scored over the current dataset; kernel parameters (lengthscales,
categorical weights, signal variance, noise variance and the forgetting rate
omega) are fitted by multi-start L-BFGS-B on the log marginal likelihood with
analytic gradients.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .kernels import KernelParams, PairwiseCache, cross_cov
from .search_space import ConfigVector, SearchSpace, TimestampedObservation

log = logging.getLogger(__name__)

MAX_JITTER = 1e-2
LOG_2PI = math.log(2.0 * math.pi)


class IllConditionedError(np.linalg.LinAlgError):
    """Covariance could not be factorized even after jitter escalation."""


class Dataset:
    """Raw observations with timesteps; normalization is computed on demand."""

    def __init__(self, space: SearchSpace, observations: Sequence[TimestampedObservation] = ()):
        self.space = space
        self.observations: list[TimestampedObservation] = list(observations)

    def __len__(self) -> int:
        return len(self.observations)

    def __iter__(self):
        return iter(self.observations)

    def add(self, config: ConfigVector, timestep: int, value: float) -> None:
        if config.space != self.space:
            raise ValueError("config space does not match dataset space")
        self.observations.append(TimestampedObservation(config, int(timestep), float(value)))

    def extend(self, observations) -> None:
        for o in observations:
            self.add(o.config, o.timestep, o.value)

    def clear(self) -> None:
        self.observations.clear()

    def copy(self) -> Dataset:
        return Dataset(self.space, self.observations)

    @property
    def current_timestep(self) -> int:
        return max((o.timestep for o in self.observations), default=0)

    def recent(self, max_points: int | None) -> Dataset:
        """The ``max_points`` most recent observations (ties keep insertion order)."""
        if max_points is None or len(self) <= max_points:
            return self.copy()
        order = sorted(range(len(self)), key=lambda i: (self.observations[i].timestep, i))
        keep = sorted(order[-max_points:])
        return Dataset(self.space, [self.observations[i] for i in keep])

    def arrays(self):
        n = len(self)
        X = np.array([o.config.x for o in self.observations], dtype=float).reshape(n, self.space.d_x)
        H = np.array([o.config.h for o in self.observations], dtype=int).reshape(n, self.space.d_h)
        T = np.array([o.timestep for o in self.observations], dtype=float)
        y = np.array([o.value for o in self.observations], dtype=float)
        return X, H, T, y

    def target_stats(self) -> tuple[float, float]:
        return target_stats(np.array([o.value for o in self.observations], dtype=float))


def target_stats(y: np.ndarray) -> tuple[float, float]:
    if y.size == 0:
        return 0.0, 1.0
    mean = float(np.mean(y))
    std = float(np.std(y))
    if not np.isfinite(std) or std < 1e-12:
        std = 1.0
    return mean, std


def _cholesky(Ky: np.ndarray, base_jitter: float):
    """Cholesky with multiplicative jitter escalation; returns (L, jitter added)."""
    jitter = 0.0
    extra = base_jitter if base_jitter > 0 else 1e-10
    for _ in range(12):
        try:
            return np.linalg.cholesky(Ky if jitter == 0.0 else Ky + jitter * np.eye(len(Ky))), jitter
        except np.linalg.LinAlgError:
            jitter = extra if jitter == 0.0 else jitter * 10.0
            if jitter > MAX_JITTER:
                break
    raise IllConditionedError("covariance not positive definite after jitter escalation")


class GPModel:
    """A fitted (or explicitly parameterized) GP conditioned on a dataset snapshot."""

    def __init__(self, params: KernelParams, space: SearchSpace, X, H, T, y, y_mean=None, y_std=None):
        self.params = params
        self.space = space
        self.T = np.asarray(T, dtype=float).reshape(-1)
        # explicit row counts: reshape(-1, 0) is ambiguous for empty blocks
        self.X = np.asarray(X, dtype=float).reshape(len(self.T), space.d_x)
        self.H = np.asarray(H, dtype=int).reshape(len(self.T), space.d_h)
        self.y = np.asarray(y, dtype=float).reshape(-1)
        m, s = target_stats(self.y)
        self.y_mean = m if y_mean is None else float(y_mean)
        self.y_std = s if y_std is None else float(y_std)
        self.f = (self.y - self.y_mean) / self.y_std
        self.n = len(self.y)
        self.extra_jitter = 0.0
        if self.n:
            K = cross_cov(self.X, self.H, self.T, self.X, self.H, self.T, params)
            K = 0.5 * (K + K.T)
            K[np.diag_indices_from(K)] += params.noise_var + params.jitter * params.signal_var
            self.L, self.extra_jitter = _cholesky(K, params.jitter * params.signal_var)
            self.alpha = cho_solve((self.L, True), self.f)
        else:
            self.L = np.zeros((0, 0))
            self.alpha = np.zeros(0)

    @classmethod
    def from_dataset(cls, params: KernelParams, dataset: Dataset, y_mean=None, y_std=None) -> GPModel:
        X, H, T, y = dataset.arrays()
        return cls(params, dataset.space, X, H, T, y, y_mean, y_std)

    @property
    def current_timestep(self) -> float:
        return float(self.T.max()) if self.n else 0.0

    @property
    def prior_variance(self) -> float:
        return self.params.signal_var * self.y_std**2

    def log_marginal_likelihood(self) -> float:
        if self.n == 0:
            return 0.0
        return float(
            -0.5 * self.f @ self.alpha - np.sum(np.log(np.diag(self.L))) - 0.5 * self.n * LOG_2PI
        )

    def predict(self, Xq, Hq, t) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and latent variance (raw target units) at query arrays."""
        Xq, Hq = np.asarray(Xq, dtype=float), np.asarray(Hq, dtype=int)
        m = max(len(Xq), len(Hq))
        Xq = Xq.reshape(m, self.space.d_x)
        Hq = Hq.reshape(m, self.space.d_h)
        tq = np.broadcast_to(np.asarray(t, dtype=float), (m,))
        prior = self.params.signal_var
        if m == 0:
            return np.zeros(0), np.zeros(0)
        if self.n == 0:
            return np.full(m, self.y_mean), np.full(m, prior * self.y_std**2)
        Ks = cross_cov(self.X, self.H, self.T, Xq, Hq, tq, self.params)
        mean = Ks.T @ self.alpha
        v = solve_triangular(self.L, Ks, lower=True)
        var = prior - np.sum(v * v, axis=0)
        var = np.maximum(var, 0.0)
        return mean * self.y_std + self.y_mean, var * self.y_std**2

    def posterior(self, z: ConfigVector, t) -> tuple[float, float]:
        mean, var = self.predict(z.x[None, :], z.h[None, :], t)
        return float(mean[0]), float(var[0])

    def posterior_batch(self, configs: Sequence[ConfigVector], t) -> list[tuple[float, float]]:
        if not configs:
            return []
        X, H = self.space.to_arrays(configs)
        mean, var = self.predict(X, H, t)
        return list(zip(mean.tolist(), var.tolist()))

    def data_weights(self, z: ConfigVector, t) -> np.ndarray:
        """d mean / d y_i for each training target (raw units)."""
        Ks = cross_cov(self.X, self.H, self.T, z.x[None, :], z.h[None, :], np.array([t], float), self.params)
        return cho_solve((self.L, True), Ks[:, 0])

    def condition_on(self, configs: Sequence[ConfigVector], t, values) -> GPModel:
        """Same parameters and normalization, with extra (e.g. fantasy) observations appended."""
        if not configs:
            return self
        X, H = self.space.to_arrays(configs)
        T = np.broadcast_to(np.asarray(t, dtype=float), (len(configs),))
        return GPModel(
            self.params,
            self.space,
            np.vstack([self.X, X]),
            np.vstack([self.H, H]),
            np.concatenate([self.T, T]),
            np.concatenate([self.y, np.asarray(values, dtype=float)]),
            self.y_mean,
            self.y_std,
        )

    def describe(self) -> dict:
        return {"n": self.n, "y_mean": self.y_mean, "y_std": self.y_std, **self.params.to_dict()}


def log_marginal_likelihood(params: KernelParams, dataset: Dataset) -> float:
    """Log evidence of the z-scored targets under ``params``."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    return GPModel.from_dataset(params, dataset).log_marginal_likelihood()


@dataclass(frozen=True)
class FitBounds:
    lengthscale: tuple[float, float] = (1e-2, 1e2)
    cat_weight: tuple[float, float] = (1e-2, 1e1)
    signal_var: tuple[float, float] = (5e-2, 2e1)
    noise_var: tuple[float, float] = (1e-6, 1.0)
    omega: tuple[float, float] = (0.0, 0.9)

    def __post_init__(self) -> None:
        for name in ("lengthscale", "cat_weight", "signal_var", "noise_var", "omega"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"invalid bounds for {name}: {lo} >= {hi}")
        if self.lengthscale[0] <= 0 or self.cat_weight[0] <= 0 or self.signal_var[0] <= 0 or self.noise_var[0] <= 0:
            raise ValueError("log-parameter bounds must be positive")
        if self.omega[0] < 0 or self.omega[1] > 1:
            raise ValueError("omega bounds must lie in [0, 1]")


class _Objective:
    """Negative LML and gradient over the packed parameter vector."""

    def __init__(self, X, H, T, f, d_x, d_h, jitter, lam, fit_omega, omega_fixed):
        self.X, self.H, self.T, self.f = X, H, T, f
        self.d_x, self.d_h = d_x, d_h
        self.jitter, self.lam = jitter, lam
        self.fit_omega, self.omega_fixed = fit_omega, omega_fixed
        self.n = len(f)
        self.cache = PairwiseCache(X, H, T)

    def unpack(self, theta) -> KernelParams:
        i = 0
        ls = np.exp(theta[i : i + self.d_x]); i += self.d_x
        w = np.exp(theta[i : i + self.d_h]); i += self.d_h
        sv = math.exp(theta[i]); i += 1
        nv = math.exp(theta[i]); i += 1
        om = float(theta[i]) if self.fit_omega else self.omega_fixed
        return KernelParams(ls, w, sv, om, nv, self.jitter, self.lam)

    def __call__(self, theta):
        p = self.unpack(theta)
        K, contract = self.cache.cov_and_contract(p, fit_omega=self.fit_omega)
        diag = p.noise_var + self.jitter * p.signal_var
        Ky = K.copy()
        Ky[np.diag_indices_from(Ky)] += diag
        try:
            L = np.linalg.cholesky(Ky)
        except np.linalg.LinAlgError:
            return 1e10, np.zeros_like(theta)
        alpha = cho_solve((L, True), self.f)
        nll = 0.5 * self.f @ alpha + np.sum(np.log(np.diag(L))) + 0.5 * self.n * LOG_2PI
        Kinv = cho_solve((L, True), np.eye(self.n))
        W = np.outer(alpha, alpha) - Kinv
        traces = 0.5 * contract(W)
        n_pre = self.d_x + self.d_h
        trW = np.trace(W)
        g = np.empty(len(theta))
        g[: n_pre + 1] = traces[: n_pre + 1]
        g[n_pre] += 0.5 * self.jitter * p.signal_var * trW
        g[n_pre + 1] = 0.5 * p.noise_var * trW
        if self.fit_omega:
            g[n_pre + 2] = traces[n_pre + 1]
        return float(nll), -g


def _pack(p: KernelParams, fit_omega: bool) -> np.ndarray:
    parts = [np.log(p.lengthscales), np.log(p.cat_weights), [math.log(p.signal_var), math.log(p.noise_var)]]
    if fit_omega:
        parts.append([p.omega])
    return np.concatenate([np.asarray(a, dtype=float) for a in parts])


def fit(
    dataset: Dataset,
    bounds: FitBounds | None = None,
    rng: np.random.Generator | None = None,
    n_restarts: int = 8,
    init: KernelParams | None = None,
    fit_omega: bool = True,
    omega: float = 0.0,
    max_points: int | None = None,
    jitter: float = 1e-6,
    lam: float = 0.5,
    maxiter: int = 200,
) -> GPModel:
    """Fit kernel parameters by maximizing the log marginal likelihood.

    Args:
        dataset: observations to condition on (non-empty).
        bounds: box bounds on the parameters.
        rng: source for the random restarts; fixed seed gives identical fits.
        n_restarts: number of local optimizations (the first starts at ``init``).
        init: warm start; defaults to mid-range values.
        fit_omega: if False, omega is held at ``omega`` (time-invariant GP when 0).
        max_points: condition only on the most recent observations.
    """
    if len(dataset) == 0:
        raise ValueError("cannot fit a GP on an empty dataset")
    bounds = bounds or FitBounds()
    rng = rng if rng is not None else np.random.default_rng(0)
    data = dataset.recent(max_points)
    space = data.space
    X, H, T, y = data.arrays()
    y_mean, y_std = target_stats(y)
    f = (y - y_mean) / y_std
    d_x, d_h = space.d_x, space.d_h

    obj = _Objective(X, H, T, f, d_x, d_h, jitter, lam, fit_omega, omega)
    lo = np.concatenate(
        [
            np.full(d_x, math.log(bounds.lengthscale[0])),
            np.full(d_h, math.log(bounds.cat_weight[0])),
            [math.log(bounds.signal_var[0]), math.log(bounds.noise_var[0])],
            [bounds.omega[0]] if fit_omega else [],
        ]
    )
    hi = np.concatenate(
        [
            np.full(d_x, math.log(bounds.lengthscale[1])),
            np.full(d_h, math.log(bounds.cat_weight[1])),
            [math.log(bounds.signal_var[1]), math.log(bounds.noise_var[1])],
            [bounds.omega[1]] if fit_omega else [],
        ]
    )
    if init is None:
        init = KernelParams(np.full(d_x, 0.5), np.ones(d_h), 1.0, min(0.1, bounds.omega[1]) if fit_omega else omega, 0.05, jitter, lam)
    starts = [np.clip(_pack(init, fit_omega), lo, hi)]
    for _ in range(max(0, n_restarts - 1)):
        s = rng.uniform(lo, hi)
        if fit_omega:
            s[-1] = rng.uniform(bounds.omega[0], min(bounds.omega[1], 0.5))
        starts.append(s)

    best_theta, best_val = None, np.inf
    box = list(zip(lo, hi))
    for s in starts:
        res = minimize(obj, s, jac=True, method="L-BFGS-B", bounds=box, options={"maxiter": maxiter})
        theta = np.clip(res.x, lo, hi)
        val = float(res.fun)
        if np.isfinite(val) and val < best_val:
            best_val, best_theta = val, theta
    if best_theta is None or best_val >= 1e10:
        raise IllConditionedError("GP fit failed for every restart")
    params = obj.unpack(best_theta)
    return GPModel(params, space, X, H, T, y, y_mean, y_std)


__all__ = [
    "Dataset",
    "FitBounds",
    "GPModel",
    "IllConditionedError",
    "fit",
    "log_marginal_likelihood",
    "target_stats",
]
