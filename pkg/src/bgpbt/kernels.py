"""Spatiotemporal covariance for mixed continuous/ordinal/categorical inputs.

The combined kernel is::

    k(z, z', i, j) = s * [(1 - lam) * (k_x + k_h) / 2 + lam * k_x * k_h] * (1 - omega) ** (|i - j| / 2)

with ``k_x`` a Matern-5/2 ARD kernel on the ``x`` block, ``k_h`` an
exponentiated overlap kernel on the ``h`` block and ``s`` the signal variance.
The sum term is averaged so the self-covariance equals ``s`` exactly. When a
block is empty the kernel reduces to the other sub-kernel times the decay.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class KernelParams:
    lengthscales: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cat_weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    signal_var: float = 1.0
    omega: float = 0.0
    noise_var: float = 1e-3
    jitter: float = 1e-6
    lam: float = 0.5

    def __post_init__(self) -> None:
        ls = np.asarray(self.lengthscales, dtype=float).reshape(-1)
        w = np.asarray(self.cat_weights, dtype=float).reshape(-1)
        if np.any(ls <= 0):
            raise ValueError("lengthscales must be strictly positive")
        if np.any(w <= 0):
            raise ValueError("categorical weights must be strictly positive")
        if self.signal_var <= 0:
            raise ValueError("signal variance must be positive")
        if self.noise_var < 0:
            raise ValueError("noise variance must be non-negative")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "cat_weights", w)
        object.__setattr__(self, "omega", float(min(1.0, max(0.0, self.omega))))

    @classmethod
    def default(cls, d_x: int, d_h: int, **kw) -> KernelParams:
        return cls(lengthscales=np.full(d_x, 0.5), cat_weights=np.ones(d_h), **kw)

    def replace(self, **kw) -> KernelParams:
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "lengthscales": self.lengthscales.tolist(),
            "cat_weights": self.cat_weights.tolist(),
            "signal_var": float(self.signal_var),
            "omega": float(self.omega),
            "noise_var": float(self.noise_var),
            "jitter": float(self.jitter),
            "lam": float(self.lam),
        }

    @classmethod
    def from_dict(cls, d: dict) -> KernelParams:
        return cls(**{k: np.asarray(v) if k in ("lengthscales", "cat_weights") else v for k, v in d.items()})


# -- scalar sub-kernels ----------------------------------------------------------------


def matern52(x, x2, lengthscales) -> float:
    """Matern-5/2 correlation with per-dimension lengthscales (unit variance)."""
    x, x2, ls = (np.asarray(a, dtype=float).reshape(-1) for a in (x, x2, lengthscales))
    if x.shape != x2.shape or x.shape != ls.shape:
        raise ValueError("dimension mismatch")
    r = np.sqrt(np.sum(((x - x2) / ls) ** 2))
    return float((1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * np.exp(-SQRT5 * r))


def overlap_kernel(h, h2, weights) -> float:
    """Exponentiated overlap: exp(mean(w * match)) / exp(mean(w)), equal to 1 iff h == h2."""
    h, h2 = np.asarray(h).reshape(-1), np.asarray(h2).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if h.shape != h2.shape or h.shape != w.shape:
        raise ValueError("dimension mismatch")
    if h.size == 0:
        return 1.0
    match = (h == h2).astype(float)
    return float(np.exp(np.sum(w * (match - 1.0)) / h.size))


def time_decay(i, j, omega: float) -> float:
    return float((1.0 - omega) ** (abs(int(i) - int(j)) / 2.0))


def combine(kx, kh, lam: float = 0.5):
    return (1.0 - lam) * 0.5 * (kx + kh) + lam * kx * kh


def mixed_kernel(z, z2, i, j, params: KernelParams) -> float:
    """Covariance between two configs observed at timesteps ``i`` and ``j``."""
    if z.space != z2.space:
        raise ValueError("configs come from different spaces")
    space = z.space
    decay = time_decay(i, j, params.omega)
    if space.d_h == 0:
        s = matern52(z.x, z2.x, params.lengthscales)
    elif space.d_x == 0:
        s = overlap_kernel(z.h, z2.h, params.cat_weights)
    else:
        s = combine(matern52(z.x, z2.x, params.lengthscales), overlap_kernel(z.h, z2.h, params.cat_weights), params.lam)
    return float(params.signal_var * s * decay)


# -- matrix forms ---------------------------------------------------------------------


def _matern_matrix(X1, X2, ls):
    diff = (X1[:, None, :] - X2[None, :, :]) / ls
    sq = diff * diff
    r = np.sqrt(np.sum(sq, axis=-1))
    e = np.exp(-SQRT5 * r)
    k = (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * e
    return k, sq, r, e


def _overlap_matrix(H1, H2, w):
    mism = (H1[:, None, :] != H2[None, :, :]).astype(float)
    k = np.exp(-(mism @ w) / H1.shape[1])
    return k, mism


def _decay_matrix(T1, T2, omega):
    dt = np.abs(np.asarray(T1, dtype=float)[:, None] - np.asarray(T2, dtype=float)[None, :])
    if omega >= 1.0:
        return (dt == 0).astype(float), dt
    return (1.0 - omega) ** (dt / 2.0), dt


def cross_cov(X1, H1, T1, X2, H2, T2, params: KernelParams) -> np.ndarray:
    """Covariance matrix between two sets of (x, h, t) inputs, without noise or jitter."""
    n1, n2 = len(T1), len(T2)
    d_x, d_h = X1.shape[1], H1.shape[1]
    if d_x and d_h:
        kx = _matern_matrix(X1, X2, params.lengthscales)[0]
        kh = _overlap_matrix(H1, H2, params.cat_weights)[0]
        s = combine(kx, kh, params.lam)
    elif d_x:
        s = _matern_matrix(X1, X2, params.lengthscales)[0]
    elif d_h:
        s = _overlap_matrix(H1, H2, params.cat_weights)[0]
    else:
        s = np.ones((n1, n2))
    return params.signal_var * s * _decay_matrix(T1, T2, params.omega)[0]


def cov_and_grads(X, H, T, params: KernelParams, fit_omega: bool = True):
    """Training covariance ``K`` (no noise) and its derivatives.

    Derivatives are taken w.r.t. log lengthscales, log categorical weights,
    log signal variance and (optionally) omega, in that order.
    """
    d_x, d_h = X.shape[1], H.shape[1]
    n = len(T)
    decay, dt = _decay_matrix(T, T, params.omega)
    sv = params.signal_var
    grads = []
    kx = kh = None
    if d_x:
        kx, sq, r, e = _matern_matrix(X, X, params.lengthscales)
    if d_h:
        kh, mism = _overlap_matrix(H, H, params.cat_weights)
    if d_x and d_h:
        s = combine(kx, kh, params.lam)
        ds_dkx = (1.0 - params.lam) * 0.5 + params.lam * kh
        ds_dkh = (1.0 - params.lam) * 0.5 + params.lam * kx
    elif d_x:
        s, ds_dkx = kx, 1.0
    elif d_h:
        s, ds_dkh = kh, 1.0
    else:
        s = np.ones((n, n))
    scale = sv * decay
    if d_x:
        # d k / d log l_d = 5/3 (1 + sqrt5 r) exp(-sqrt5 r) * (diff_d / l_d)^2
        base = (5.0 / 3.0) * (1.0 + SQRT5 * r) * e * ds_dkx * scale
        for d in range(d_x):
            grads.append(base * sq[:, :, d])
    if d_h:
        base = -kh * ds_dkh * scale / d_h
        w = params.cat_weights
        for d in range(d_h):
            grads.append(base * w[d] * mism[:, :, d])
    K = sv * s * decay
    grads.append(K)
    if fit_omega:
        om = params.omega
        with np.errstate(divide="ignore", invalid="ignore"):
            dd = np.where(dt > 0, -(dt / 2.0) * (1.0 - om) ** (dt / 2.0 - 1.0), 0.0)
        grads.append(sv * s * dd)
    return K, grads


class PairwiseCache:
    """Parameter-free pairwise quantities of one training set, reused across LML evaluations."""

    def __init__(self, X, H, T):
        X = np.asarray(X, dtype=float)
        H = np.asarray(H)
        self.d_x, self.d_h = X.shape[1], H.shape[1]
        self.n = len(T)
        self.sq = (X[:, None, :] - X[None, :, :]) ** 2
        self.mism = (H[:, None, :] != H[None, :, :]).astype(float)
        T = np.asarray(T, dtype=float)
        self.dt = np.abs(T[:, None] - T[None, :])

    def cov_and_contract(self, params: KernelParams, fit_omega: bool = True):
        """``K`` and a map ``W -> [sum(W * dK/dtheta_k)]`` in the :func:`cov_and_grads` order."""
        d_x, d_h, n = self.d_x, self.d_h, self.n
        om = params.omega
        decay = (self.dt == 0).astype(float) if om >= 1.0 else (1.0 - om) ** (self.dt / 2.0)
        sv = params.signal_var
        if d_x:
            inv2 = 1.0 / np.asarray(params.lengthscales, dtype=float) ** 2
            r = np.sqrt(np.maximum(self.sq @ inv2, 0.0))
            e = np.exp(-SQRT5 * r)
            kx = (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * e
        if d_h:
            w = np.asarray(params.cat_weights, dtype=float)
            kh = np.exp(-(self.mism @ w) / d_h)
        if d_x and d_h:
            s = combine(kx, kh, params.lam)
            ds_dkx = (1.0 - params.lam) * 0.5 + params.lam * kh
            ds_dkh = (1.0 - params.lam) * 0.5 + params.lam * kx
        elif d_x:
            s, ds_dkx = kx, 1.0
        elif d_h:
            s, ds_dkh = kh, 1.0
        else:
            s = np.ones((n, n))
        scale = sv * decay
        K = s * scale

        def contract(W):
            out = []
            if d_x:
                base = (5.0 / 3.0) * (1.0 + SQRT5 * r) * e * ds_dkx * scale * W
                out.append(np.einsum("ij,ijd->d", base, self.sq) * inv2)
            if d_h:
                base = -kh * ds_dkh * scale * W / d_h
                out.append(np.einsum("ij,ijd->d", base, self.mism) * w)
            out.append([np.sum(W * K)])
            if fit_omega:
                with np.errstate(divide="ignore", invalid="ignore"):
                    dd = np.where(self.dt > 0, -(self.dt / 2.0) * (1.0 - om) ** (self.dt / 2.0 - 1.0), 0.0)
                out.append([np.sum(W * sv * s * dd)])
            return np.concatenate([np.asarray(o, dtype=float) for o in out])

        return K, contract


def observation_arrays(observations: Sequence):
    """Stack a sequence of TimestampedObservation into (X, H, T, y) arrays."""
    space = observations[0].config.space
    X = np.array([o.config.x for o in observations], dtype=float).reshape(len(observations), space.d_x)
    H = np.array([o.config.h for o in observations], dtype=int).reshape(len(observations), space.d_h)
    T = np.array([o.timestep for o in observations], dtype=float)
    y = np.array([o.value for o in observations], dtype=float)
    return X, H, T, y


def kernel_matrix(observations: Sequence, params: KernelParams, with_jitter: bool = True) -> np.ndarray:
    """Symmetric covariance over observations; jitter (relative to signal variance) on the diagonal."""
    if len(observations) == 0:
        raise ValueError("kernel_matrix needs at least one observation")
    X, H, T, _ = observation_arrays(observations)
    K = cross_cov(X, H, T, X, H, T, params)
    K = 0.5 * (K + K.T)
    if with_jitter:
        K[np.diag_indices_from(K)] += params.jitter * params.signal_var
    return K


__all__ = [
    "KernelParams",
    "PairwiseCache",
    "combine",
    "cov_and_grads",
    "cross_cov",
    "kernel_matrix",
    "matern52",
    "mixed_kernel",
    "observation_arrays",
    "overlap_kernel",
    "time_decay",
]
