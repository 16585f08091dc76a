"""Seeded synthetic data: HMM attack profiles and random frequency-vector pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hbg import HbgParams, hbg_sample
from .hmm import HmmModel


def stream(seed: int, *ids: int) -> np.random.Generator:
    """Independent generator for the stream named by ``ids`` under ``seed``.

    Streams are derived by key, not by draw order, so a result computed in
    chunks does not depend on how the chunks are scheduled.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in ids))
    return np.random.Generator(np.random.Philox(ss))


def reference_model() -> HmmModel:
    """Parameters used for the synthetic comparison study."""
    return HmmModel(
        pi=(0.6, 0.4),
        p0=0.4,
        q0=0.6,
        emit=(HbgParams(0.1, 0.3), HbgParams(0.2, 0.4)),
        delta=7,
    )


@dataclass(frozen=True)
class SimConfig:
    model: HmmModel
    n_days: int
    seed: int = 0
    # "window": one state per window of delta days; "day": the chain moves daily
    state_binning: str = "window"
    # "stationary" draws the first state from the chain's stationary law, "model" uses model.pi
    start: str = "stationary"

    def __post_init__(self):
        if self.n_days < 1:
            raise ValueError("n_days must be positive")
        if self.state_binning not in ("window", "day"):
            raise ValueError(f"unknown state_binning {self.state_binning!r}")
        if self.start not in ("stationary", "model"):
            raise ValueError(f"unknown start {self.start!r}")


def markov_chain(T: np.ndarray, start: tuple[float, float], n: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(n)
    s = np.empty(n, dtype=np.int64)
    s[0] = int(u[0] >= start[0])
    stay = np.diag(T)
    for t in range(1, n):
        prev = s[t - 1]
        s[t] = prev if u[t] < stay[prev] else 1 - prev
    return s


def simulate_hmm(cfg: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(counts, states)``, both of length ``n_days``."""
    model = cfg.model
    start = model.stationary() if cfg.start == "stationary" else model.pi
    rng_state = stream(cfg.seed, 0)
    rng_emit = stream(cfg.seed, 1)
    if cfg.state_binning == "window":
        n_steps = -(-cfg.n_days // model.delta)
        states = np.repeat(markov_chain(model.transition, start, n_steps, rng_state), model.delta)[: cfg.n_days]
    else:
        states = markov_chain(model.transition, start, cfg.n_days, rng_state)
    counts = np.zeros(cfg.n_days, dtype=np.int64)
    for j in (0, 1):
        draws = hbg_sample(model.emit[j], rng_emit, cfg.n_days)
        counts = np.where(states == j, draws, counts)
    return counts, states


@dataclass(frozen=True)
class VectorModel:
    """Weight law for random frequency vectors: 1 uniform, 2 half-normal, 3 integers 1..K."""

    kind: int
    K: int = 10

    def __post_init__(self):
        if self.kind not in (1, 2, 3):
            raise ValueError(f"unknown vector model {self.kind}")
        if self.kind == 3 and self.K < 1:
            raise ValueError("K must be positive")

    @property
    def label(self) -> str:
        return f"model{self.kind}" + (f"_K{self.K}" if self.kind == 3 else "")


def sample_vectors(model: VectorModel, delta: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` random sorted frequency vectors, shape (n, delta).

    Each row has a support size drawn uniformly from 1..delta, weights drawn
    from the model, normalisation to unit sum and zero padding.
    """
    size = rng.integers(1, delta + 1, n)
    if model.kind == 1:
        w = rng.random((n, delta))
    elif model.kind == 2:
        w = np.abs(rng.standard_normal((n, delta)))
    else:
        w = rng.integers(1, model.K + 1, (n, delta)).astype(float)
    w[np.arange(delta)[None, :] >= size[:, None]] = 0.0
    # a half-normal or uniform draw can be exactly zero only with probability zero
    w[:, 0] = np.where(w[:, 0] > 0, w[:, 0], 1.0)
    v = w / w.sum(axis=1, keepdims=True)
    return -np.sort(-v, axis=1)


def sample_vector_pairs(model: VectorModel, delta: int, n: int, rng: np.random.Generator):
    """Two independent batches of vectors, each of shape (n, delta)."""
    return sample_vectors(model, delta, n, rng), sample_vectors(model, delta, n, rng)
