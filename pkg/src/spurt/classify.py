"""Per-window tactic labels and the resilience / coordination tracking functions."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .hmm import ObservationMode
from .majorize import npm_rows
from .profile import ActivityProfile

LABELS = ("resilient", "coordinating", "both", "active")


@dataclass(frozen=True)
class Thresholds:
    eta_x: float = 3
    eta_y: float = 6
    eta_hat: float = 3
    eta_hat_x: float = 3
    eta_hat_y: float = 5
    eta_tilde_x: float = 3
    eta_tilde_y: float = 6
    se_floor: float = 1.0
    npm_floor: float = 0.0625
    alpha_star: float = 2.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not np.isfinite(v):
                raise ValueError(f"threshold {k} must be finite")
        if self.alpha_star < 1:
            raise ValueError("alpha_star must be at least 1")


@dataclass
class TacticLabels:
    """Boolean label per window; a field is None when the method does not produce it."""

    resilient: np.ndarray | None = None
    coordinating: np.ndarray | None = None
    both: np.ndarray | None = None
    active: np.ndarray | None = None

    def __len__(self):
        for name in LABELS:
            v = getattr(self, name)
            if v is not None:
                return len(v)
        return 0

    def get(self, which: str) -> np.ndarray:
        v = getattr(self, which)
        if v is None:
            raise KeyError(f"label {which!r} is not produced by this method")
        return v

    def count(self, which: str) -> int:
        return int(np.sum(self.get(which)))


def window_entropy(profile: ActivityProfile) -> np.ndarray:
    """Shannon entropy of every window's frequency vector; 0 for empty windows."""
    f = profile.frequency_matrix()
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(f > 0, f * np.log(np.where(f > 0, f, 1.0)), 0.0)
    return -t.sum(axis=1)


def window_npm(profile: ActivityProfile, alpha: float) -> np.ndarray:
    """Normalized power mean of every window's frequency vector; 0 for empty windows."""
    f = profile.frequency_matrix()
    out = np.zeros(f.shape[0])
    nz = profile.total_attacks() > 0
    out[nz] = npm_rows(f[nz], alpha)
    return out


def label_from_daily_states(states, profile: ActivityProfile, th: Thresholds) -> TacticLabels:
    states = np.asarray(states)
    k, d = profile.n_windows, profile.delta
    if states.size < k * d:
        raise ValueError(f"need {k * d} daily states, got {states.size}")
    s = states[: k * d].reshape(k, d).sum(axis=1)
    x, y = profile.active_days(), profile.total_attacks()
    active = s > th.eta_hat
    return TacticLabels(
        resilient=active & (x > th.eta_hat_x),
        coordinating=active & (y > th.eta_hat_y),
        both=active & (x > th.eta_hat_x) & (y > th.eta_hat_y),
        active=active,
    )


def label_from_window_states(states, mode: ObservationMode) -> TacticLabels:
    on = np.asarray(states) == 1
    mode = ObservationMode(mode)
    if mode is ObservationMode.ACTIVE_DAYS:
        return TacticLabels(resilient=on)
    if mode is ObservationMode.TOTAL_ATTACKS:
        return TacticLabels(coordinating=on)
    if mode is ObservationMode.JOINT:
        return TacticLabels(both=on)
    raise ValueError("daily states are labelled with label_from_daily_states")


def label_majorization(profile: ActivityProfile, th: Thresholds) -> TacticLabels:
    x, y = profile.active_days(), profile.total_attacks()
    res = (window_entropy(profile) > th.se_floor) & (x > th.eta_tilde_x)
    coord = (window_npm(profile, th.alpha_star) > th.npm_floor) & (y > th.eta_tilde_y)
    return TacticLabels(resilient=res, coordinating=coord, both=res & coord)


def _window_on(states, k: int, delta: int) -> np.ndarray:
    s = np.asarray(states)
    if s.size == k:
        return s == 1
    if s.size >= k * delta:
        return np.all(s[: k * delta].reshape(k, delta) == 1, axis=1)
    raise ValueError(f"need {k} window states or {k * delta} daily states, got {s.size}")


def ground_truth_labels(states, profile: ActivityProfile, th: Thresholds) -> TacticLabels:
    """Truth from simulator states: a window counts as state 1 only when all its days are."""
    on = _window_on(states, profile.n_windows, profile.delta)
    hx = profile.active_days() > th.eta_x
    hy = profile.total_attacks() > th.eta_y
    return TacticLabels(resilient=on & hx, coordinating=on & hy, both=on & hx & hy, active=on)


@dataclass
class TrackingSeries:
    res: np.ndarray
    coord: np.ndarray
    n_max: int


def tracking_update(profile: ActivityProfile, alpha_star: float, n_max: int | None = None) -> TrackingSeries:
    """Cumulative centred resilience and coordination scores.

    Increments are ``SE + X`` and ``NPM + Y`` per window, centred by their
    mean over the first ``n_max`` windows, so both series return to 0 at
    ``n_max``.
    """
    k = profile.n_windows
    n_max = k if n_max is None else int(n_max)
    if not 1 <= n_max <= k:
        raise ValueError(f"n_max must lie in 1..{k}, got {n_max}")
    r = (window_entropy(profile) + profile.active_days())[:n_max]
    c = (window_npm(profile, alpha_star) + profile.total_attacks())[:n_max]
    res = np.concatenate([[0.0], np.cumsum(r - r.mean())])
    coord = np.concatenate([[0.0], np.cumsum(c - c.mean())])
    return TrackingSeries(res, coord, n_max)
