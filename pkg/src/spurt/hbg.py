"""Hurdle Bernoulli-geometric daily count model and its window aggregates.

A day is active with probability ``gamma``; an active day carries ``r >= 1``
attacks with probability ``(1 - mu) * mu**(r - 1)``.  Over a window of
``delta`` independent days this gives closed forms for the number of active
days X, the total attack count Y and their joint law, implemented here in log
space so that long windows and large counts do not underflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp, xlog1py, xlogy


@dataclass(frozen=True)
class HbgParams:
    gamma: float
    mu: float

    def __post_init__(self):
        g, m = float(self.gamma), float(self.mu)
        if not (0.0 <= g <= 1.0) or not np.isfinite(g):
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not (0.0 <= m < 1.0) or not np.isfinite(m):
            raise ValueError(f"mu must lie in [0, 1), got {self.mu}")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "mu", m)

    @property
    def mean(self) -> float:
        return self.gamma / (1.0 - self.mu)

    @property
    def variance(self) -> float:
        g, m = self.gamma, self.mu
        return g * (1.0 + m - g) / (1.0 - m) ** 2


def _log_comb(n, k):
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def hbg_logpmf(params: HbgParams, r) -> np.ndarray:
    r = np.asarray(r)
    g, m = params.gamma, params.mu
    pos = xlogy(1.0, g) + xlog1py(1.0, -m) + xlogy(np.maximum(r - 1, 0), m)
    out = np.where(r == 0, xlog1py(1.0, -g), pos)
    return np.where(r < 0, -np.inf, out)


def hbg_pmf(params: HbgParams, r) -> np.ndarray:
    return np.exp(hbg_logpmf(params, r))


def hbg_sample(params: HbgParams, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw daily counts: a Bernoulli hurdle followed by a geometric count on {1, 2, ...}."""
    active = rng.random(size) < params.gamma
    counts = rng.geometric(1.0 - params.mu, size)
    return np.where(active, counts, 0).astype(np.int64)


def joint_xy_logpmf(params: HbgParams, delta: int, k, r) -> np.ndarray:
    """log P(X = k, Y = r) for one window; requires 0 <= k <= delta and k <= r."""
    k = np.asarray(k)
    r = np.asarray(r)
    if np.any(k < 0) or np.any(k > delta) or np.any(r < k):
        raise ValueError("joint pmf needs 0 <= k <= delta and r >= k")
    g, m = params.gamma, params.mu
    kk = np.maximum(k, 0)
    rr = np.maximum(r, 0)
    valid = (k > 0) | (r == 0)
    kc = np.clip(kk, 0, delta)
    out = (
        _log_comb(delta, kc)
        + np.where(kc > 0, _log_comb(np.maximum(rr - 1, 0), np.maximum(rr - kc, 0)), 0.0)
        + xlog1py(delta - kc, -g)
        + xlogy(kc, g)
        + xlog1py(kc, -m)
        + xlogy(np.maximum(rr - kc, 0), m)
    )
    return np.where(valid, out, -np.inf)


def joint_xy_pmf(params: HbgParams, delta: int, k, r) -> np.ndarray:
    return np.exp(joint_xy_logpmf(params, delta, k, r))


def x_logpmf(params: HbgParams, delta: int, k) -> np.ndarray:
    """Active days are Binomial(delta, gamma)."""
    k = np.asarray(k)
    kc = np.clip(k, 0, delta)
    g = params.gamma
    out = _log_comb(delta, kc) + xlogy(kc, g) + xlog1py(delta - kc, -g)
    return np.where((k >= 0) & (k <= delta), out, -np.inf)


def x_pmf(params: HbgParams, delta: int, k) -> np.ndarray:
    return np.exp(x_logpmf(params, delta, k))


def _y_logpmf_scalar(params: HbgParams, delta: int, r: int) -> float:
    g, m = params.gamma, params.mu
    if r < 0:
        return -np.inf
    if r == 0:
        return float(xlog1py(delta, -g))
    if m == 0.0:
        return float(x_logpmf(params, delta, r)) if r <= delta else -np.inf
    if g == 0.0:
        return -np.inf
    if g == 1.0:
        return float(joint_xy_logpmf(params, delta, delta, r)) if r >= delta else -np.inf
    ks = np.arange(1, min(r, delta) + 1)
    log_a = np.log1p(-m) + np.log(g) - np.log1p(-g) - np.log(m)
    terms = _log_comb(delta, ks) + _log_comb(r - 1, r - ks) + ks * log_a
    return float(delta * np.log1p(-g) + r * np.log(m) + logsumexp(terms))


def y_logpmf(params: HbgParams, delta: int, r) -> np.ndarray:
    """log P(Y = r) for the total attacks in one window, as an exact finite sum."""
    r = np.asarray(r)
    vals, inv = np.unique(r.ravel(), return_inverse=True)
    table = np.array([_y_logpmf_scalar(params, delta, int(v)) for v in vals])
    return table[inv].reshape(r.shape)


def y_pmf(params: HbgParams, delta: int, r) -> np.ndarray:
    return np.exp(y_logpmf(params, delta, r))
