"""Daily attack-count profiles and their per-window summaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class WindowMetrics:
    """Summary of one window of ``delta`` consecutive days.

    ``x`` is the number of active days, ``y`` the total number of attacks and
    ``freq`` the window's counts divided by ``y``, sorted in non-increasing
    order and zero padded to length ``delta``.  An empty window (``y == 0``)
    has ``freq is None``; downstream code treats it with a sentinel.
    """

    x: int
    y: int
    freq: np.ndarray | None


@dataclass(frozen=True)
class ActivityProfile:
    counts: np.ndarray
    delta: int = 7
    _windows: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1:
            raise ProfileError("counts must be one-dimensional")
        if counts.size and not np.issubdtype(counts.dtype, np.integer):
            if not np.all(np.isfinite(counts)) or np.any(counts != np.round(counts)):
                raise ProfileError("counts must be integers")
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise ProfileError("counts must be non-negative")
        if not isinstance(self.delta, (int, np.integer)) or self.delta < 1:
            raise ProfileError("delta must be a positive integer")
        if counts.size < self.delta:
            raise ProfileError(f"need at least one full window of {self.delta} days, got {counts.size}")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        k = counts.size // self.delta
        windows = counts[: k * self.delta].reshape(k, self.delta)
        object.__setattr__(self, "_windows", windows)

    @property
    def n_days(self) -> int:
        return int(self.counts.size)

    @property
    def n_windows(self) -> int:
        """Number of complete windows; trailing partial days are dropped."""
        return int(self._windows.shape[0])

    def window_matrix(self) -> np.ndarray:
        return self._windows

    def window_metrics(self, n: int) -> WindowMetrics:
        """Metrics for window ``n``, counted from 1."""
        if not 1 <= n <= self.n_windows:
            raise IndexError(f"window {n} out of range 1..{self.n_windows}")
        w = self._windows[n - 1]
        y = int(w.sum())
        x = int(np.count_nonzero(w))
        freq = None
        if y > 0:
            freq = np.sort(w / y)[::-1]
        return WindowMetrics(x, y, freq)

    def all_windows(self) -> list[WindowMetrics]:
        return [self.window_metrics(n) for n in range(1, self.n_windows + 1)]

    def active_days(self) -> np.ndarray:
        """X for every window."""
        return np.count_nonzero(self._windows, axis=1)

    def total_attacks(self) -> np.ndarray:
        """Y for every window."""
        return self._windows.sum(axis=1)

    def frequency_matrix(self) -> np.ndarray:
        """Sorted frequency vectors, one row per window; empty windows are all zero."""
        y = self.total_attacks()
        out = np.sort(self._windows, axis=1)[:, ::-1].astype(float)
        nz = y > 0
        out[nz] /= y[nz, None]
        return out
