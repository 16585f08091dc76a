"""Scoring against ground truth and the Monte Carlo studies on random vectors."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .classify import (
    TacticLabels,
    Thresholds,
    ground_truth_labels,
    label_from_daily_states,
    label_from_window_states,
    label_majorization,
)
from .hmm import ObservationMode, active_days_mu, baum_welch, observations, viterbi
from .majorize import DEFAULT_ALPHA_GRID, TOL, normalized_power_mean, npm_rows, power_mean_rows, shannon_entropy
from .profile import ActivityProfile
from .simulate import SimConfig, VectorModel, reference_model, sample_vector_pairs, simulate_hmm, stream

BLOCK = 5000


@dataclass(frozen=True)
class ConfusionReport:
    n_true: int
    n_declared: int
    n_missed: int
    n_false: int
    p_md: float
    p_fa: float
    se_md: float
    se_fa: float
    md_defined: bool
    fa_defined: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _se(p: float, n: int) -> float:
    return float(np.sqrt(p * (1 - p) / n)) if n else 0.0


def confusion(truth: TacticLabels, pred: TacticLabels, which: str) -> ConfusionReport:
    t = np.asarray(truth.get(which), dtype=bool)
    p = np.asarray(pred.get(which), dtype=bool)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.size} truth vs {p.size} predicted windows")
    n_true, n_decl = int(t.sum()), int(p.sum())
    missed, false = int(np.sum(t & ~p)), int(np.sum(p & ~t))
    p_md = missed / n_true if n_true else 0.0
    p_fa = false / n_decl if n_decl else 0.0
    return ConfusionReport(
        n_true, n_decl, missed, false, p_md, p_fa,
        _se(p_md, n_true), _se(p_fa, n_decl), n_true > 0, n_decl > 0,
    )


# single-function search


def _rows(name: str, v: np.ndarray, alpha: float) -> np.ndarray:
    return power_mean_rows(v, alpha) if name == "PM" else npm_rows(v, alpha)


def _entropy_rows(v: np.ndarray) -> np.ndarray:
    safe = np.where(v > 0, v, 1.0)
    return -np.sum(v * np.log(safe), axis=1)


def _side_grid(alpha_star: float, grid) -> list[float]:
    g = [float(a) for a in grid if a != 1]
    if alpha_star >= 1:
        return [a for a in g if a > 1] + [np.inf]
    return [a for a in g if a < 1] + [-np.inf]


def _trial_events(name, alpha_star, P, Q, grid, event, tol=TOL):
    """Conditioning mask and event mask for one functional at one order.

    The pair is oriented so that ``P`` is the one the functional at
    ``alpha_star`` ranks as more spread out.  Events:

    ``"side"``: the same functional keeps this ordering at every grid order
    on the same side of 1 as ``alpha_star``; above 1 the entropy ordering is
    also required.
    ``"proxy"``: the ordering part of ``"side"`` alone.
    ``"theorem"``: every power-mean and entropy condition of the trumping
    theorem.
    """
    fp, fq = _rows(name, P, alpha_star), _rows(name, Q, alpha_star)
    cond = np.abs(fp - fq) > tol
    upper = alpha_star >= 1
    swap = (fp > fq) if upper else (fp < fq)
    A = np.where(swap[:, None], Q, P)
    B = np.where(swap[:, None], P, Q)
    ok = np.ones(len(P), dtype=bool)
    if event in ("side", "proxy"):
        for a in _side_grid(alpha_star, grid):
            fa, fb = _rows(name, A, a), _rows(name, B, a)
            ok &= (fa <= fb + tol) if upper else (fa >= fb - tol)
        if event == "side" and upper:
            ok &= _entropy_rows(A) >= _entropy_rows(B) - tol
    elif event == "theorem":
        for a in _side_grid(2.0, grid):
            ok &= power_mean_rows(A, a) <= power_mean_rows(B, a) + tol
        for a in _side_grid(0.0, grid):
            ok &= power_mean_rows(A, a) >= power_mean_rows(B, a) - tol
        ok &= _entropy_rows(A) >= _entropy_rows(B) - tol
    else:
        raise ValueError(f"unknown event {event!r}")
    return cond, ok & cond


def _sf_block(args):
    model, delta, alpha_stars, n, seed, block, grid, event = args
    rng = stream(seed, model.kind, model.K, block)
    P, Q = sample_vector_pairs(model, delta, n, rng)
    out = {}
    for name in ("PM", "NPM"):
        for a in alpha_stars:
            cond, ev = _trial_events(name, a, P, Q, grid, event)
            out[(name, a)] = (int(cond.sum()), int(ev.sum()))
    return out


def _blocks(n_trials: int):
    sizes = [BLOCK] * (n_trials // BLOCK)
    if n_trials % BLOCK:
        sizes.append(n_trials % BLOCK)
    return sizes


def _map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def single_function_study(
    model: VectorModel,
    delta: int = 7,
    alpha_stars=(-1.0, 0.0, 1.0, 2.0),
    n_trials: int = 25_000,
    seed: int = 0,
    grid=DEFAULT_ALPHA_GRID,
    event: str = "side",
    workers: int = 1,
) -> list[dict]:
    """Conditional frequency with which a single power-mean comparison at ``alpha_star``
    predicts the full ordering, for PM and NPM.

    Trials are split into fixed blocks with their own random streams, so the
    result does not depend on ``workers``.  Ties at ``alpha_star`` are dropped.
    """
    if n_trials < 1000:
        raise ValueError("n_trials must be at least 1000")
    jobs = [
        (model, delta, tuple(alpha_stars), n, seed, b, tuple(grid), event)
        for b, n in enumerate(_blocks(n_trials))
    ]
    parts = _map(_sf_block, jobs, workers)
    rows = []
    for name in ("PM", "NPM"):
        for a in alpha_stars:
            n_cond = sum(p[(name, a)][0] for p in parts)
            n_ev = sum(p[(name, a)][1] for p in parts)
            p = n_ev / n_cond if n_cond else float("nan")
            rows.append({
                "functional": name,
                "alpha_star": float(a),
                "p": p,
                "se": _se(p, n_cond) if n_cond else float("nan"),
                "n_cond": n_cond,
                "defined": n_cond > 0,
            })
    return rows


TABLE1_MODELS = (VectorModel(1), VectorModel(2), VectorModel(3, 10), VectorModel(3, 15))


def table1(n_trials: int = 25_000, seed: int = 0, delta: int = 7, event: str = "side", workers: int = 1) -> list[dict]:
    """One row per vector model with columns PM(-1), PM(0), PM(1), PM(2), NPM(-1), ..., NPM(2)."""
    out = []
    for m in TABLE1_MODELS:
        rows = single_function_study(m, delta, (-1.0, 0.0, 1.0, 2.0), n_trials, seed, event=event, workers=workers)
        rec = {"model": m.label}
        for r in rows:
            key = f"{r['functional']}({r['alpha_star']:g})"
            rec[key] = r["p"]
            rec[key + "_se"] = r["se"]
        out.append(rec)
    return out


# alpha extremes


def _extreme_rows(name, P, Q, grid, upper, tol=TOL):
    lim = np.inf if upper else -np.inf
    fp, fq = _rows(name, P, lim), _rows(name, Q, lim)
    swap = (fp > fq) if upper else (fp < fq)
    A = np.where(swap[:, None], Q, P)
    B = np.where(swap[:, None], P, Q)
    side = sorted((a for a in grid if (a > 1 if upper else a < 1)), reverse=upper)
    res = np.ones(len(P))
    found = np.zeros(len(P), dtype=bool)
    for a in side:
        fa, fb = _rows(name, A, a), _rows(name, B, a)
        bad = (fa > fb + tol) if upper else (fa < fb - tol)
        hit = bad & ~found
        res[hit] = a
        found |= bad
    return res


def alpha_extremes_rows(P: np.ndarray, Q: np.ndarray, grid=DEFAULT_ALPHA_GRID) -> dict[str, np.ndarray]:
    """Row-wise counterpart of ``majorize.alpha_extremes``."""
    g = [float(a) for a in grid if np.isfinite(a) and a != 1]
    return {
        "alpha_max_pm": _extreme_rows("PM", P, Q, g, True),
        "alpha_max_npm": _extreme_rows("NPM", P, Q, g, True),
        "alpha_min_pm": _extreme_rows("PM", P, Q, g, False),
        "alpha_min_npm": _extreme_rows("NPM", P, Q, g, False),
    }


@dataclass
class AlphaCdf:
    grid: np.ndarray
    samples: dict[str, np.ndarray]

    def cdf(self, key: str) -> np.ndarray:
        s = self.samples[key]
        return np.array([np.mean(s <= g) for g in self.grid])

    def mass_at_one(self, key: str) -> float:
        return float(np.mean(self.samples[key] == 1.0))

    def table(self) -> list[dict]:
        keys = list(self.samples)
        cdfs = {k: self.cdf(k) for k in keys}
        return [{"alpha": float(g), **{k: float(cdfs[k][i]) for k in keys}} for i, g in enumerate(self.grid)]


def _cdf_block(args):
    model, delta, n, seed, block, grid = args
    rng = stream(seed, 100 + model.kind, model.K, block)
    P, Q = sample_vector_pairs(model, delta, n, rng)
    return alpha_extremes_rows(P, Q, grid)


def alpha_cdf_study(
    model: VectorModel,
    delta: int = 7,
    n_trials: int = 10_000,
    seed: int = 0,
    grid=DEFAULT_ALPHA_GRID,
    workers: int = 1,
) -> AlphaCdf:
    jobs = [(model, delta, n, seed, b, tuple(grid)) for b, n in enumerate(_blocks(n_trials))]
    parts = _map(_cdf_block, jobs, workers)
    samples = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    samples["max_pm_minus_npm"] = samples["alpha_max_pm"] - samples["alpha_max_npm"]
    samples["min_pm_minus_npm"] = samples["alpha_min_pm"] - samples["alpha_min_npm"]
    pts = sorted(set(float(a) for a in grid if np.isfinite(a)) | {1.0})
    return AlphaCdf(np.array(pts), samples)


# benchmark vectors


def benchmark_vector(k: int, K: int, delta: int) -> np.ndarray:
    v = np.zeros(delta)
    v[0] = (K - k) / K
    v[1 : k + 1] = 1.0 / K
    return v


def benchmark_divergence(K: int, delta: int = 7, alpha_star: float = 2.0) -> list[dict]:
    """Distance of P_k from the uniform and point-mass benchmarks, k = 0..delta-1."""
    if K < delta:
        raise ValueError("K must be at least delta")
    uni = np.full(delta, 1.0 / delta)
    point = np.zeros(delta)
    point[0] = 1.0
    se_r, se_c = shannon_entropy(uni), shannon_entropy(point)
    npm_r, npm_c = normalized_power_mean(uni, alpha_star), normalized_power_mean(point, alpha_star)
    rows = []
    for k in range(delta):
        p = benchmark_vector(k, K, delta)
        se, npm = shannon_entropy(p), normalized_power_mean(p, alpha_star)
        rows.append({
            "k": k,
            "dSE_r": abs(se_r - se),
            "dSE_c": abs(se - se_c),
            "dNPM_r": abs(npm_r - npm),
            "dNPM_c": abs(npm - npm_c),
        })
    return rows


# comparative study on simulated HMM data


def run_pipelines(profile: ActivityProfile, th: Thresholds, max_iters: int = 500) -> dict:
    """Labels and fitted models from the majorization rule and the four HMM pipelines."""
    out = {"majorization": {"labels": label_majorization(profile, th)}}
    daily = observations(profile, ObservationMode.DAILY)
    fit = baum_welch(daily, ObservationMode.DAILY, delta=profile.delta, max_iters=max_iters)
    path = viterbi(fit.model, daily, ObservationMode.DAILY)
    out["daily"] = {"labels": label_from_daily_states(path, profile, th), "fit": fit}
    for mode in (ObservationMode.ACTIVE_DAYS, ObservationMode.TOTAL_ATTACKS, ObservationMode.JOINT):
        obs = observations(profile, mode)
        mu = active_days_mu(profile.counts) if mode is ObservationMode.ACTIVE_DAYS else None
        fit = baum_welch(obs, mode, delta=profile.delta, fixed_mu=mu, max_iters=max_iters)
        path = viterbi(fit.model, obs, mode)
        out[mode.value] = {"labels": label_from_window_states(path, mode), "fit": fit}
    return out


PIPELINE_LABELS = {
    "majorization": ("resilient", "coordinating", "both"),
    "daily": ("resilient", "coordinating", "both"),
    "active_days": ("resilient",),
    "total_attacks": ("coordinating",),
    "joint": ("both",),
}


def comparative_study(
    seed: int = 0,
    n_windows: int = 1500,
    th: Thresholds | None = None,
    state_binning: str = "window",
    max_iters: int = 500,
) -> dict:
    """Simulate the reference model and score every pipeline against the simulator's states."""
    th = th or Thresholds()
    model = reference_model()
    counts, states = simulate_hmm(SimConfig(model, n_windows * model.delta, seed, state_binning))
    profile = ActivityProfile(counts, model.delta)
    truth = ground_truth_labels(states, profile, th)
    results = run_pipelines(profile, th, max_iters)
    report = {"truth": {k: truth.count(k) for k in ("resilient", "coordinating", "both")}, "pipelines": {}}
    for name, res in results.items():
        entry = {lab: confusion(truth, res["labels"], lab) for lab in PIPELINE_LABELS[name]}
        if "fit" in res:
            entry["model"] = res["fit"].model
            entry["converged"] = res["fit"].converged
            entry["warnings"] = res["fit"].warnings
        report["pipelines"][name] = entry
    return report
