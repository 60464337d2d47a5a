"""Independent reference implementations used as test oracles.

These are deliberately naive: scalar loops, explicit inverses, plain
enumeration. They share no code with the package beyond reading the
normalized ``x``/``h`` blocks of a config.
"""

from __future__ import annotations

import math

import numpy as np


def matern52_oracle(x, x2, ls) -> float:
    r2 = 0.0
    for a, b, l in zip(x, x2, ls):
        r2 += ((a - b) / l) ** 2
    r = math.sqrt(r2)
    return (1.0 + math.sqrt(5.0) * r + 5.0 * r * r / 3.0) * math.exp(-math.sqrt(5.0) * r)


def overlap_oracle(h, h2, w) -> float:
    d = len(h)
    if d == 0:
        return 1.0
    matched = sum(wi for a, b, wi in zip(h, h2, w) if a == b)
    return math.exp(matched / d) / math.exp(sum(w) / d)


def kernel_oracle(x, h, i, x2, h2, j, params) -> float:
    decay = (1.0 - params.omega) ** (abs(i - j) / 2.0) if params.omega < 1.0 else float(i == j)
    if len(h) == 0:
        s = matern52_oracle(x, x2, params.lengthscales)
    elif len(x) == 0:
        s = overlap_oracle(h, h2, params.cat_weights)
    else:
        kx = matern52_oracle(x, x2, params.lengthscales)
        kh = overlap_oracle(h, h2, params.cat_weights)
        s = (1.0 - params.lam) * (kx + kh) / 2.0 + params.lam * kx * kh
    return params.signal_var * s * decay


def gram_oracle(X, H, T, params, X2=None, H2=None, T2=None) -> np.ndarray:
    if X2 is None:
        X2, H2, T2 = X, H, T
    K = np.empty((len(T), len(T2)))
    for a in range(len(T)):
        for b in range(len(T2)):
            K[a, b] = kernel_oracle(X[a], H[a], T[a], X2[b], H2[b], T2[b], params)
    return K


def dense_posterior(params, X, H, T, y, Xq, Hq, tq):
    """z-scored targets, explicit inverse of (K + (noise + jitter*s) I)."""
    mu, sd = float(np.mean(y)), float(np.std(y))
    if sd < 1e-12:
        sd = 1.0
    f = (y - mu) / sd
    K = gram_oracle(X, H, T, params) + (params.noise_var + params.jitter * params.signal_var) * np.eye(len(y))
    Kinv = np.linalg.inv(K)
    Tq = np.full(len(Xq), float(tq))
    Ks = gram_oracle(X, H, T, params, Xq, Hq, Tq)
    mean = Ks.T @ Kinv @ f
    var = params.signal_var - np.einsum("ij,ik,kj->j", Ks, Kinv, Ks)
    return mean * sd + mu, np.maximum(var, 0.0) * sd * sd


def info_gain_oracle(K, noise_var) -> float:
    if len(K) == 0:
        return 0.0
    sign, logdet = np.linalg.slogdet(np.eye(len(K)) + np.asarray(K) / noise_var)
    assert sign > 0
    return 0.5 * logdet


def spearman_oracle(x, y) -> float:
    """Pearson correlation of average ranks."""

    def ranks(v):
        v = np.asarray(v, dtype=float)
        order = np.argsort(v, kind="mergesort")
        r = np.empty(len(v))
        i = 0
        while i < len(v):
            j = i
            while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
                j += 1
            r[order[i : j + 1]] = (i + j) / 2.0
            i = j + 1
        return r

    a, b = ranks(x), ranks(y)
    a, b = a - a.mean(), b - b.mean()
    return float(a @ b / math.sqrt((a @ a) * (b @ b)))
