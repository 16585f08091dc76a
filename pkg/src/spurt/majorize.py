"""Majorization, trumping and Schur-type functionals on frequency vectors.

Vectors are compared after sorting in non-increasing order and zero padding
to a common length.  Power means are taken over the positive support and
normalised by the support size ``NZ``; ``alpha = 0`` is the geometric mean of
the positive entries and ``alpha = +/-inf`` the largest / smallest positive
entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL = 1e-12

DEFAULT_ALPHA_GRID = (
    -8.0, -4.0, -2.0, -1.0, -0.5, -0.1, 0.0, 0.1, 0.5, 0.9,
    1.0, 1.1, 1.5, 2.0, 3.0, 4.0, 8.0, 16.0,
)


class ProbVector:
    """A probability vector with a cached non-increasing view."""

    def __init__(self, entries, tol: float = 1e-9):
        p = np.asarray(entries, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("a probability vector must be a non-empty 1-d array")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("entries must be finite and non-negative")
        if abs(p.sum() - 1.0) > tol:
            raise ValueError(f"entries sum to {p.sum()}, not 1")
        self.entries = p
        self.sorted = -np.sort(-p)

    @classmethod
    def from_counts(cls, counts) -> "ProbVector":
        c = np.asarray(counts, dtype=float)
        return cls(c / c.sum())

    def __len__(self):
        return self.entries.size

    def __array__(self, dtype=None, copy=None):
        return self.sorted if dtype is None else self.sorted.astype(dtype)


def _vec(p) -> np.ndarray:
    if isinstance(p, ProbVector):
        return p.sorted
    return -np.sort(-np.asarray(p, dtype=float))


def _pad(p, q):
    p, q = _vec(p), _vec(q)
    n = max(p.size, q.size)
    return np.pad(p, (0, n - p.size)), np.pad(q, (0, n - q.size))


def majorizes(p, q, tol: float = TOL) -> bool:
    """True when ``p`` is majorized by ``q`` (q is the more concentrated vector)."""
    p, q = _pad(p, q)
    if abs(p.sum() - q.sum()) > 1e-9:
        raise ValueError("vectors must have equal totals")
    return bool(np.all(np.cumsum(p) <= np.cumsum(q) + tol))


def kron_majorizes(p, q, lift) -> bool:
    """Majorization of ``p (x) lift`` by ``q (x) lift``."""
    l = np.asarray(lift, dtype=float)
    return majorizes(np.kron(_vec(p), l), np.kron(_vec(q), l))


def nonzero_count(p) -> int:
    return int(np.count_nonzero(_vec(p) > 0))


def shannon_entropy(p) -> float:
    """Entropy in nats."""
    s = _vec(p)
    s = s[s > 0]
    return float(-np.sum(s * np.log(s)))


def geometric_mean(p) -> float:
    """Classical geometric mean over all entries; zero if any entry is zero."""
    v = _vec(p)
    if np.any(v <= 0):
        return 0.0
    return float(np.exp(np.mean(np.log(v))))


def power_mean(p, alpha: float) -> float:
    s = _vec(p)
    s = s[s > 0]
    if alpha == np.inf:
        return float(s[0])
    if alpha == -np.inf:
        return float(s[-1])
    if alpha == 0:
        return float(np.exp(np.mean(np.log(s))))
    return float(np.mean(s**alpha) ** (1.0 / alpha))


def normalized_power_mean(p, alpha: float) -> float:
    return power_mean(p, alpha) / nonzero_count(p)


def schur_eval(p, which: str, alpha: float | None = None) -> float:
    if not np.any(_vec(p) > 0):
        raise ValueError("functionals are undefined on the all-zero vector")
    which = which.upper()
    if which == "SE":
        return shannon_entropy(p)
    if which == "GM":
        return geometric_mean(p)
    if which == "NZ":
        return float(nonzero_count(p))
    if alpha is None:
        raise ValueError(f"{which} needs alpha")
    if which == "PM":
        return power_mean(p, alpha)
    if which == "NPM":
        return normalized_power_mean(p, alpha)
    raise ValueError(f"unknown functional {which!r}")


def power_mean_rows(v: np.ndarray, alpha: float) -> np.ndarray:
    """``power_mean`` applied to each row of a (n, delta) array of vectors."""
    pos = v > 0
    nz = pos.sum(axis=1)
    if alpha == np.inf:
        return v.max(axis=1)
    if alpha == -np.inf:
        return np.where(pos, v, np.inf).min(axis=1)
    safe = np.where(pos, v, 1.0)
    if alpha == 0:
        return np.exp(np.log(safe).sum(axis=1) / nz)
    return (np.where(pos, safe**alpha, 0.0).sum(axis=1) / nz) ** (1.0 / alpha)


def npm_rows(v: np.ndarray, alpha: float) -> np.ndarray:
    return power_mean_rows(v, alpha) / (v > 0).sum(axis=1)


def necessary_extremes(p, q) -> bool:
    """Largest entry of p at most that of q and smallest entry at least that of q."""
    p, q = _pad(p, q)
    return bool(p[0] <= q[0] + TOL and p[-1] >= q[-1] - TOL)


@dataclass(frozen=True)
class TrumpingReport:
    pm_above_one: bool
    pm_below_one: bool
    entropy: bool
    extremes: bool
    precondition: str | None = None

    @property
    def verdict(self) -> str:
        if self.precondition is not None:
            return "precondition-violated"
        ok = self.pm_above_one and self.pm_below_one and self.entropy and self.extremes
        return "holds-on-grid" if ok else "fails"


def trumping_conditions(p, q, alpha_grid=DEFAULT_ALPHA_GRID, tol: float = TOL) -> TrumpingReport:
    """Check the power-mean and entropy conditions for ``q`` trumping ``p`` on a grid.

    A condition counts as met when it holds up to ``tol``; the extreme
    orders +/-inf are checked non-strictly.  ``alpha = 1`` is skipped since
    every vector has the same mean.
    """
    p, q = _pad(p, q)
    problem = None
    if np.allclose(p, q, atol=tol, rtol=0):
        problem = "p equals q"
    elif p[-1] <= 0:
        problem = "p lacks full support"
    grid = np.asarray(alpha_grid, dtype=float)
    hi = [a for a in grid if a > 1 and np.isfinite(a)]
    lo = [a for a in grid if a < 1 and np.isfinite(a)]
    above = all(power_mean(p, a) < power_mean(q, a) + tol for a in hi)
    below = all(power_mean(p, a) > power_mean(q, a) - tol for a in lo)
    ent = shannon_entropy(p) > shannon_entropy(q) - tol
    return TrumpingReport(above, below, ent, necessary_extremes(p, q), problem)


def ratio_ordered_check(p, q, tol: float = TOL) -> bool:
    """``Q(k) / P(k)`` non-increasing over the positive support of ``q``.

    Both vectors are taken in sorted order.  When it holds, the power-mean
    ordering follows at every order without a grid sweep.
    """
    p, q = _pad(p, q)
    kstar = nonzero_count(q)
    if p[kstar - 1] <= 0:
        raise ValueError("p must be positive wherever q is")
    r = q[:kstar] / p[:kstar]
    return bool(np.all(np.diff(r) <= tol))


@dataclass(frozen=True)
class AlphaExtremes:
    alpha_max_pm: float
    alpha_max_npm: float
    alpha_min_pm: float
    alpha_min_npm: float


def _functional(name):
    return power_mean if name == "PM" else normalized_power_mean


def _alpha_max(p, q, f, grid, tol):
    if f(p, np.inf) > f(q, np.inf):
        p, q = q, p
    for a in sorted((a for a in grid if a > 1), reverse=True):
        if f(p, a) > f(q, a) + tol:
            return float(a)
    return 1.0


def _alpha_min(p, q, f, grid, tol):
    if f(p, -np.inf) < f(q, -np.inf):
        p, q = q, p
    for a in sorted(a for a in grid if a < 1):
        if f(p, a) < f(q, a) - tol:
            return float(a)
    return 1.0


def alpha_extremes(p, q, alpha_grid=DEFAULT_ALPHA_GRID, tol: float = TOL) -> AlphaExtremes:
    """Outermost grid orders at which the power-mean ordering breaks.

    For each functional the pair is first oriented by its limit at +inf (for
    the upper side) or -inf (for the lower side).  ``alpha_max`` is then the
    largest grid order above 1 at which the oriented inequality fails, or 1
    when it holds throughout; ``alpha_min`` is the mirror image below 1.
    """
    p, q = _pad(p, q)
    grid = [float(a) for a in alpha_grid if np.isfinite(a) and a != 1]
    out = {}
    for name in ("PM", "NPM"):
        f = _functional(name)
        out[name] = (_alpha_max(p, q, f, grid, tol), _alpha_min(p, q, f, grid, tol))
    return AlphaExtremes(out["PM"][0], out["NPM"][0], out["PM"][1], out["NPM"][1])
