"""Two-state hidden Markov model with HBG emissions.

State 0 is the quiet state and state 1 the active one.  The chain can emit
daily counts directly or one of three window aggregates (active days, total
attacks, or both).  Inference uses a scaled forward-backward pass, learning
uses Baum-Welch with closed-form M-steps, and decoding uses a log-domain
Viterbi recursion.

``pi`` is the distribution of the state behind the first observation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .hbg import HbgParams, hbg_logpmf, joint_xy_logpmf, x_logpmf, y_logpmf
from .profile import ActivityProfile

PARAM_FLOOR = 1e-6


class ObservationMode(str, enum.Enum):
    DAILY = "daily"
    ACTIVE_DAYS = "active_days"
    TOTAL_ATTACKS = "total_attacks"
    JOINT = "joint"


class EmissionError(ArithmeticError):
    """Raised when an observation has zero likelihood under both states."""


@dataclass(frozen=True)
class HmmModel:
    pi: tuple[float, float]
    p0: float
    q0: float
    emit: tuple[HbgParams, HbgParams]
    delta: int = 7

    def __post_init__(self):
        pi = tuple(float(v) for v in self.pi)
        if len(pi) != 2 or min(pi) < 0 or abs(sum(pi) - 1.0) > 1e-9:
            raise ValueError(f"pi must be a distribution over two states, got {self.pi}")
        for name in ("p0", "q0"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
            object.__setattr__(self, name, v)
        if len(self.emit) != 2:
            raise ValueError("need one emission law per state")
        if self.delta < 1:
            raise ValueError("delta must be positive")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "emit", tuple(self.emit))

    @property
    def transition(self) -> np.ndarray:
        return np.array([[1.0 - self.p0, self.p0], [self.q0, 1.0 - self.q0]])

    def stationary(self) -> tuple[float, float]:
        s = self.p0 + self.q0
        if s == 0.0:
            return self.pi
        return (self.q0 / s, self.p0 / s)

    def to_dict(self) -> dict:
        return {
            "pi": list(self.pi),
            "p0": self.p0,
            "q0": self.q0,
            "gamma": [e.gamma for e in self.emit],
            "mu": [e.mu for e in self.emit],
            "delta": self.delta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HmmModel":
        emit = tuple(HbgParams(g, m) for g, m in zip(d["gamma"], d["mu"]))
        return cls(tuple(d["pi"]), d["p0"], d["q0"], emit, int(d.get("delta", 7)))


@dataclass
class Posteriors:
    gamma: np.ndarray
    xi: np.ndarray
    loglik: float


@dataclass
class FitResult:
    model: HmmModel
    trace: list[float]
    converged: bool
    n_iter: int
    warnings: list[str] = field(default_factory=list)


def observations(profile: ActivityProfile, mode: ObservationMode) -> np.ndarray:
    mode = ObservationMode(mode)
    if mode is ObservationMode.DAILY:
        return np.asarray(profile.counts)
    x = profile.active_days()
    y = profile.total_attacks()
    if mode is ObservationMode.ACTIVE_DAYS:
        return x
    if mode is ObservationMode.TOTAL_ATTACKS:
        return y
    return np.column_stack([x, y])


def emission_loglik(model: HmmModel, obs, mode: ObservationMode) -> np.ndarray:
    """Per-step log-likelihood under each state, shape (N, 2)."""
    mode = ObservationMode(mode)
    obs = np.asarray(obs)
    cols = []
    for e in model.emit:
        if mode is ObservationMode.DAILY:
            cols.append(hbg_logpmf(e, obs))
        elif mode is ObservationMode.ACTIVE_DAYS:
            cols.append(x_logpmf(e, model.delta, obs))
        elif mode is ObservationMode.TOTAL_ATTACKS:
            cols.append(y_logpmf(e, model.delta, obs))
        else:
            cols.append(joint_xy_logpmf(e, model.delta, obs[:, 0], obs[:, 1]))
    return np.column_stack(cols)


def _log(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


def _scaled_likelihood(model: HmmModel, obs, mode):
    logb = emission_loglik(model, obs, mode)
    peak = logb.max(axis=1)
    bad = np.flatnonzero(~np.isfinite(peak))
    if bad.size:
        raise EmissionError(f"observation at step {bad[0] + 1} has zero likelihood under both states")
    return np.exp(logb - peak[:, None]), peak


def _recursions(pi, T, b):
    """Scaled forward and backward passes written out for two states."""
    n = len(b)
    t00, t01, t10, t11 = T[0, 0], T[0, 1], T[1, 0], T[1, 1]
    b0, b1 = b[:, 0].tolist(), b[:, 1].tolist()
    fa0, fa1, c = [0.0] * n, [0.0] * n, [0.0] * n
    a0, a1 = pi[0] * b0[0], pi[1] * b1[0]
    for t in range(n):
        if t:
            p0, p1 = fa0[t - 1], fa1[t - 1]
            a0 = (p0 * t00 + p1 * t10) * b0[t]
            a1 = (p0 * t01 + p1 * t11) * b1[t]
        ct = a0 + a1
        if ct <= 0.0:
            raise EmissionError(f"observation at step {t + 1} is unreachable under the model")
        c[t] = ct
        fa0[t], fa1[t] = a0 / ct, a1 / ct
    fb0, fb1 = [1.0] * n, [1.0] * n
    for t in range(n - 2, -1, -1):
        u0, u1 = b0[t + 1] * fb0[t + 1], b1[t + 1] * fb1[t + 1]
        ct = c[t + 1]
        fb0[t] = (t00 * u0 + t01 * u1) / ct
        fb1[t] = (t10 * u0 + t11 * u1) / ct
    alpha = np.column_stack([fa0, fa1])
    beta = np.column_stack([fb0, fb1])
    return alpha, beta, np.asarray(c)


def forward_backward(model: HmmModel, obs, mode: ObservationMode) -> Posteriors:
    b, peak = _scaled_likelihood(model, obs, mode)
    if b.shape[0] == 0:
        raise ValueError("empty observation sequence")
    T = model.transition
    alpha, beta, c = _recursions(model.pi, T, b)
    post = alpha * beta
    post /= post.sum(axis=1, keepdims=True)
    xi = alpha[:-1, :, None] * T[None] * (b[1:] * beta[1:])[:, None, :] / c[1:, None, None]
    loglik = float(np.sum(np.log(c)) + peak.sum())
    return Posteriors(post, xi, loglik)


def viterbi(model: HmmModel, obs, mode: ObservationMode) -> np.ndarray:
    """Most likely state path; ties go to state 0."""
    logb = emission_loglik(model, obs, mode)
    n = logb.shape[0]
    logT = _log(model.transition)
    score = _log(np.asarray(model.pi)) + logb[0]
    back = np.zeros((n, 2), dtype=np.int64)
    for t in range(1, n):
        cand = score[:, None] + logT
        back[t] = np.argmax(cand, axis=0)
        score = cand[back[t], [0, 1]] + logb[t]
    if not np.any(np.isfinite(score)):
        raise EmissionError("no state path has positive probability")
    path = np.empty(n, dtype=np.int64)
    path[-1] = int(np.argmax(score))
    for t in range(n - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def _clip(v):
    return float(np.clip(v, PARAM_FLOOR, 1.0 - PARAM_FLOOR))


def active_days_mu(counts) -> float:
    """Moment estimate of mu from daily counts, shared by both states."""
    m = np.asarray(counts, dtype=float)
    den = np.sum(m * (m + 1))
    return _clip(np.sum(m * (m - 1)) / den) if den > 0 else PARAM_FLOOR


def _m_step_emit(obs, w, mode, delta, fixed_mu, notes):
    """Closed-form emission update for one state with posterior weights w."""
    sw = w.sum()
    if sw <= 0:
        return None
    if mode is ObservationMode.DAILY:
        act = obs > 0
        g = np.sum(w[act]) / sw
        den = np.sum((obs * w)[act])
        m = np.sum(((obs - 1) * w)[act]) / den if den > 0 else PARAM_FLOOR
    elif mode is ObservationMode.ACTIVE_DAYS:
        g = np.sum(obs * w) / (delta * sw)
        m = fixed_mu
    elif mode is ObservationMode.JOINT:
        sx = np.sum(obs[:, 0] * w)
        sy = np.sum(obs[:, 1] * w)
        g = sx / (delta * sw)
        m = 1.0 - sx / sy if sy > 0 else PARAM_FLOOR
    else:
        # the sum of gamma_n Y_n alone does not identify both parameters;
        # this fixes gamma * delta = 1 + 2 / delta and solves for mu
        lead = 1.0 + 2.0 / delta
        g = lead / delta
        if g <= 1.0 / delta + 1e-9:
            g = 1.0 / delta + 1e-9
            notes.add("gamma clamped above 1/delta")
        sy = np.sum(obs * w)
        m = 1.0 - (sw / sy) * lead if sy > 0 else PARAM_FLOOR
        if m <= g:
            notes.add("mu not above gamma")
    return HbgParams(_clip(g), _clip(m))


def m_step(obs, post: Posteriors, mode, model: HmmModel, fixed_mu=None, notes=None) -> HmmModel:
    mode = ObservationMode(mode)
    notes = set() if notes is None else notes
    obs = np.asarray(obs)
    g = post.gamma
    pi = g[0] / g[0].sum()
    xs = post.xi.sum(axis=0)
    p0 = xs[0, 1] / xs[0].sum() if xs[0].sum() > 0 else model.p0
    q0 = xs[1, 0] / xs[1].sum() if xs[1].sum() > 0 else model.q0
    if mode is ObservationMode.ACTIVE_DAYS and fixed_mu is None:
        fixed_mu = model.emit[0].mu
    emit = []
    for j in range(2):
        e = _m_step_emit(obs, g[:, j], mode, model.delta, fixed_mu, notes)
        emit.append(model.emit[j] if e is None else e)
    return HmmModel((float(pi[0]), float(pi[1])), _clip(p0), _clip(q0), tuple(emit), model.delta)


def _window_moments(x, y, delta):
    sx, sy = float(np.sum(x)), float(np.sum(y))
    g = sx / (delta * len(x))
    m = 1.0 - sx / sy if sy > 0 else PARAM_FLOOR
    return HbgParams(_clip(g), _clip(m))


def default_init(obs, mode: ObservationMode, delta: int = 7, fixed_mu=None) -> HmmModel:
    """Symmetric transitions; state 1 emissions from the loudest third of windows, state 0 from the rest."""
    mode = ObservationMode(mode)
    obs = np.asarray(obs)
    if mode is ObservationMode.DAILY:
        k = max(len(obs) // delta, 1)
        w = obs[: k * delta].reshape(k, -1) if len(obs) >= delta else obs.reshape(1, -1)
        x, y = np.count_nonzero(w, axis=1), w.sum(axis=1)
    elif mode is ObservationMode.JOINT:
        x, y = obs[:, 0], obs[:, 1]
    elif mode is ObservationMode.ACTIVE_DAYS:
        x, y = obs, None
    else:
        x, y = None, obs
    key = y if y is not None else x
    order = np.argsort(key, kind="stable")
    third = max(len(order) // 3, 1)
    # a zero-heavy profile makes the quietest third all-empty windows, which
    # pins state 0 at gamma = 0; the rest of the profile is used instead
    groups = (order[:-third] if len(order) > third else order, order[-third:])
    emit = []
    for idx in groups:
        if mode is ObservationMode.ACTIVE_DAYS:
            g = np.mean(x[idx]) / delta
            emit.append(HbgParams(_clip(g), _clip(0.3 if fixed_mu is None else fixed_mu)))
        elif mode is ObservationMode.TOTAL_ATTACKS:
            lead = 1.0 + 2.0 / delta
            my = np.mean(y[idx])
            m = 1.0 - lead / my if my > 0 else PARAM_FLOOR
            emit.append(HbgParams(_clip(lead / delta), _clip(m)))
        else:
            emit.append(_window_moments(x[idx], y[idx], delta))
    return HmmModel((0.5, 0.5), 0.3, 0.3, tuple(emit), delta)


def _relabel(model: HmmModel) -> HmmModel:
    """Order states so that state 1 has the larger expected daily count."""
    if model.emit[0].mean <= model.emit[1].mean:
        return model
    return HmmModel(model.pi[::-1], model.q0, model.p0, model.emit[::-1], model.delta)


def baum_welch(
    obs,
    mode: ObservationMode,
    init: HmmModel | None = None,
    max_iters: int = 500,
    tol: float = 1e-6,
    delta: int = 7,
    fixed_mu: float | None = None,
    relabel: bool = True,
) -> FitResult:
    """Fit by expectation-maximisation.

    ``trace`` holds the log-likelihood of every model visited, starting with
    ``init``; iteration stops when it improves by less than ``tol``.  For the
    active-days mode ``fixed_mu`` is the shared mu (see ``active_days_mu``).
    """
    mode = ObservationMode(mode)
    obs = np.asarray(obs)
    if init is None:
        init = default_init(obs, mode, delta, fixed_mu)
    if mode is ObservationMode.ACTIVE_DAYS and fixed_mu is not None:
        init = replace(init, emit=tuple(HbgParams(e.gamma, fixed_mu) for e in init.emit))
    model = init
    notes: set[str] = set()
    post = forward_backward(model, obs, mode)
    trace = [post.loglik]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        model = m_step(obs, post, mode, model, fixed_mu, notes)
        post = forward_backward(model, obs, mode)
        trace.append(post.loglik)
        if abs(trace[-1] - trace[-2]) < tol:
            converged = True
            break
    if relabel:
        model = _relabel(model)
    return FitResult(model, trace, converged, it, sorted(notes))


def solution1_residuals(weights, y, delta: int) -> tuple[float, float]:
    """How far the total-attacks update is from the exact stationarity conditions.

    Returns the residual of the exact mu relation and the relative residual
    of the quadratic that gamma solves once the large-delta form for mu is
    substituted, both evaluated at the update for posterior ``weights``.
    """
    w = np.asarray(weights, dtype=float)
    s0 = float(w.sum())
    s1 = float(np.sum(w * np.asarray(y, dtype=float)))
    d = float(delta)
    lead = 1.0 + 2.0 / d
    g = lead / d
    mu = 1.0 - (s0 / s1) * lead
    relation = abs(mu - (1.0 - g * d * s0 / s1))
    a = (d * d + d + 2) * d * s0 + (d * d + d) * s1
    b = d * (d + 3) * s0 + (d * d + 2 * d + 3) * s1
    c = (d + 3) * s1
    quad = abs(a * g * g - b * g + c) / (abs(a) * g * g + abs(b) * g + abs(c))
    return relation, quad
