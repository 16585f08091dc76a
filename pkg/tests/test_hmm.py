import itertools

import numpy as np
import pytest
from scipy.optimize import minimize

from spurt.hbg import HbgParams
from spurt.hmm import (
    EmissionError,
    HmmModel,
    ObservationMode,
    active_days_mu,
    baum_welch,
    default_init,
    emission_loglik,
    forward_backward,
    m_step,
    observations,
    solution1_residuals,
    viterbi,
)
from spurt.profile import ActivityProfile
from spurt.simulate import SimConfig, reference_model, simulate_hmm

MODES = list(ObservationMode)


def random_model(rng, delta=7):
    pi0 = rng.uniform(0.1, 0.9)
    emit = tuple(HbgParams(rng.uniform(0.05, 0.9), rng.uniform(0.0, 0.8)) for _ in range(2))
    return HmmModel((pi0, 1 - pi0), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), emit, delta)


def random_obs(rng, mode, n, delta=7):
    days = rng.geometric(0.5, (n, delta)) * (rng.random((n, delta)) < 0.4)
    if mode is ObservationMode.DAILY:
        return days[:, 0]
    x, y = (days > 0).sum(axis=1), days.sum(axis=1)
    return {ObservationMode.ACTIVE_DAYS: x, ObservationMode.TOTAL_ATTACKS: y}.get(mode, np.column_stack([x, y]))


def enumerate_paths(model, obs, mode):
    """Oracle: joint probability of every state path."""
    b = np.exp(emission_loglik(model, obs, mode))
    T = model.transition
    n = b.shape[0]
    paths = np.array(list(itertools.product((0, 1), repeat=n)))
    probs = np.empty(len(paths))
    for i, s in enumerate(paths):
        p = model.pi[s[0]] * b[0, s[0]]
        for t in range(1, n):
            p *= T[s[t - 1], s[t]] * b[t, s[t]]
        probs[i] = p
    return paths, probs


def path_logprob(model, obs, mode, path):
    lb = emission_loglik(model, obs, mode)
    with np.errstate(divide="ignore"):
        lT = np.log(model.transition)
        lp = np.log(model.pi[path[0]]) + lb[0, path[0]]
    for t in range(1, len(path)):
        lp += lT[path[t - 1], path[t]] + lb[t, path[t]]
    return lp


@pytest.fixture(scope="module")
def sim_profile():
    counts, states = simulate_hmm(SimConfig(reference_model(), 140 * 7, seed=11))
    return ActivityProfile(counts, 7), states


class TestExhaustive:
    @pytest.mark.parametrize("mode", MODES, ids=lambda m: m.value)
    @pytest.mark.parametrize("n", [1, 5, 12])
    def test_forward_backward(self, mode, n):
        rng = np.random.default_rng(42 + n)
        model, obs = random_model(rng), random_obs(rng, mode, n)
        paths, probs = enumerate_paths(model, obs, mode)
        post = forward_backward(model, obs, mode)
        assert post.loglik == pytest.approx(np.log(probs.sum()), abs=1e-10)
        w = probs / probs.sum()
        for t in range(n):
            np.testing.assert_allclose(post.gamma[t, 1], w[paths[:, t] == 1].sum(), atol=1e-10)
        for t in range(n - 1):
            for i, j in itertools.product((0, 1), repeat=2):
                mask = (paths[:, t] == i) & (paths[:, t + 1] == j)
                assert post.xi[t, i, j] == pytest.approx(w[mask].sum(), abs=1e-10)

    @pytest.mark.parametrize("mode", MODES, ids=lambda m: m.value)
    @pytest.mark.parametrize("n", [2, 8, 12])
    def test_viterbi(self, mode, n):
        rng = np.random.default_rng(7 * n)
        model, obs = random_model(rng), random_obs(rng, mode, n)
        paths, probs = enumerate_paths(model, obs, mode)
        path = viterbi(model, obs, mode)
        assert path_logprob(model, obs, mode, path) == pytest.approx(np.log(probs.max()), abs=1e-10)


class TestPosteriors:
    def test_symmetric_single_observation(self):
        e = HbgParams(0.3, 0.5)
        m = HmmModel((0.5, 0.5), 0.2, 0.4, (e, e))
        np.testing.assert_allclose(forward_backward(m, [2], "daily").gamma[0], [0.5, 0.5], atol=1e-15)

    def test_absorbing_chain(self):
        m = HmmModel((1.0, 0.0), 0.0, 0.0, (HbgParams(0.3, 0.5), HbgParams(0.8, 0.2)))
        g = forward_backward(m, [0, 3, 1, 0, 0, 7], "daily").gamma
        np.testing.assert_allclose(g[:, 0], 1.0)

    def test_normalisation_long_sequence(self, sim_profile):
        rng = np.random.default_rng(42)
        obs = hbg_days(rng, 20_000)
        post = forward_backward(reference_model(), obs, "daily")
        assert np.isfinite(post.loglik)
        np.testing.assert_allclose(post.gamma.sum(axis=1), 1.0, atol=1e-10)
        np.testing.assert_allclose(post.xi.sum(axis=(1, 2)), 1.0, atol=1e-10)

    def test_impossible_observation_names_step(self):
        e = HbgParams(0.0, 0.5)
        m = HmmModel((0.5, 0.5), 0.2, 0.2, (e, e))
        with pytest.raises(EmissionError, match="step 3"):
            forward_backward(m, [0, 0, 2], "daily")
        with pytest.raises(EmissionError):
            viterbi(m, [0, 0, 2], "daily")

    def test_empty_sequence(self):
        with pytest.raises(ValueError):
            forward_backward(reference_model(), np.array([], dtype=int), "daily")


def hbg_days(rng, n):
    return rng.geometric(0.6, n) * (rng.random(n) < 0.15)


class TestViterbi:
    def test_prior_dominates(self):
        e = HbgParams(0.3, 0.5)
        m = HmmModel((1.0, 0.0), 0.1, 0.1, (e, e))
        assert viterbi(m, [0, 4, 1, 0, 2], "daily").tolist() == [0] * 5

    def test_ties_go_to_state_zero(self):
        e = HbgParams(0.3, 0.5)
        m = HmmModel((0.5, 0.5), 0.5, 0.5, (e, e))
        assert viterbi(m, [0, 1, 0], "daily").tolist() == [0, 0, 0]

    def test_bursts_flip_the_path(self):
        m = HmmModel((0.5, 0.5), 0.1, 0.1, (HbgParams(0.01, 0.2), HbgParams(0.9, 0.2)))
        obs = [0] * 6 + [2, 1, 3, 1, 1] + [0] * 6
        assert viterbi(m, obs, "daily").tolist() == [0] * 6 + [1] * 5 + [0] * 6

    def test_beats_random_and_posterior_paths(self, sim_profile):
        pr, _ = sim_profile
        obs = observations(pr, "joint")
        m = reference_model()
        best = path_logprob(m, obs, "joint", viterbi(m, obs, "joint"))
        rng = np.random.default_rng(42)
        for _ in range(100):
            assert best >= path_logprob(m, obs, "joint", rng.integers(0, 2, len(obs)))
        argmax = forward_backward(m, obs, "joint").gamma.argmax(axis=1)
        assert best >= path_logprob(m, obs, "joint", argmax)


def expected_complete_ll(params, obs, w, mode, delta):
    m = HmmModel((0.5, 0.5), 0.5, 0.5, (HbgParams(*params), HbgParams(*params)), delta)
    return float(np.sum(w * emission_loglik(m, obs, mode)[:, 0]))


class TestMStep:
    @pytest.mark.parametrize("mode", [ObservationMode.DAILY, ObservationMode.JOINT], ids=lambda m: m.value)
    def test_closed_form_maximises_expected_loglik(self, mode, sim_profile):
        """Oracle: numerical maximisation of the weighted emission log-likelihood."""
        pr, _ = sim_profile
        obs = observations(pr, mode)
        post = forward_backward(reference_model(), obs, mode)
        upd = m_step(obs, post, mode, reference_model())
        for j in (0, 1):
            w = post.gamma[:, j]
            res = minimize(
                lambda v: -expected_complete_ll(v, obs, w, mode, 7),
                x0=[0.3, 0.3],
                bounds=[(1e-4, 1 - 1e-4)] * 2,
                method="L-BFGS-B",
                options={"ftol": 1e-14, "gtol": 1e-10},
            )
            np.testing.assert_allclose([upd.emit[j].gamma, upd.emit[j].mu], res.x, atol=1e-4)
            assert -res.fun <= expected_complete_ll([upd.emit[j].gamma, upd.emit[j].mu], obs, w, mode, 7) + 1e-8

    def test_transition_update(self, sim_profile):
        pr, _ = sim_profile
        obs = observations(pr, "joint")
        post = forward_backward(reference_model(), obs, "joint")
        upd = m_step(obs, post, "joint", reference_model())
        xs = post.xi.sum(axis=0)
        assert upd.p0 == pytest.approx(xs[0, 1] / xs[0].sum())
        assert upd.q0 == pytest.approx(xs[1, 0] / xs[1].sum())
        assert upd.pi == pytest.approx(tuple(post.gamma[0]))

    def test_active_days_mu_is_shared(self, sim_profile):
        pr, _ = sim_profile
        mu = active_days_mu(pr.counts)
        m = pr.counts.astype(float)
        assert mu == pytest.approx(np.sum(m * (m - 1)) / np.sum(m * (m + 1)))
        fit = baum_welch(observations(pr, "active_days"), "active_days", fixed_mu=mu, max_iters=20)
        assert fit.model.emit[0].mu == fit.model.emit[1].mu == pytest.approx(mu)

    def test_total_attacks_uses_fixed_gamma(self, sim_profile):
        pr, _ = sim_profile
        fit = baum_welch(observations(pr, "total_attacks"), "total_attacks", max_iters=20)
        for e in fit.model.emit:
            assert e.gamma == pytest.approx((1 + 2 / 7) / 7)


class TestBaumWelch:
    @pytest.mark.parametrize("mode", [ObservationMode.DAILY, ObservationMode.JOINT], ids=lambda m: m.value)
    def test_monotone_trace(self, mode, sim_profile):
        pr, _ = sim_profile
        obs = observations(pr, mode)
        rng = np.random.default_rng(42)
        for _ in range(50):
            fit = baum_welch(obs, mode, init=random_model(rng), max_iters=15, tol=0)
            assert np.all(np.diff(fit.trace) >= -1e-9)

    def test_converged_flag(self, sim_profile):
        pr, _ = sim_profile
        obs = observations(pr, "joint")
        assert baum_welch(obs, "joint", max_iters=500).converged
        short = baum_welch(obs, "joint", max_iters=2, tol=0)
        assert not short.converged and short.n_iter == 2 and len(short.trace) == 3

    def test_state_one_is_the_busier_state(self, sim_profile):
        pr, _ = sim_profile
        for mode in MODES:
            obs = observations(pr, mode)
            mu = active_days_mu(pr.counts) if mode is ObservationMode.ACTIVE_DAYS else None
            m = baum_welch(obs, mode, fixed_mu=mu, max_iters=50).model
            assert m.emit[0].mean <= m.emit[1].mean

    def test_unreachable_state(self):
        true = HmmModel((1.0, 0.0), 0.0, 0.5, (HbgParams(0.3, 0.4), HbgParams(0.9, 0.1)))
        counts, _ = simulate_hmm(SimConfig(true, 20_000, seed=5, state_binning="day", start="model"))
        init = HmmModel((1.0, 0.0), 0.0, 0.5, (HbgParams(0.5, 0.5), HbgParams(0.6, 0.6)))
        fit = baum_welch(counts, "daily", init=init, relabel=False, max_iters=100)
        assert fit.model.emit[0].gamma == pytest.approx(0.3, abs=0.015)
        assert fit.model.emit[0].mu == pytest.approx(0.4, abs=0.02)

    def test_default_init_is_deterministic_and_ordered(self, sim_profile):
        pr, _ = sim_profile
        for mode in MODES:
            obs = observations(pr, mode)
            a, b = default_init(obs, mode), default_init(obs, mode)
            assert a == b
            assert a.pi == (0.5, 0.5) and a.p0 == a.q0 == 0.3
            assert a.emit[0].mean <= a.emit[1].mean

    def test_daily_fit_near_truth_emissions(self):
        counts, _ = simulate_hmm(SimConfig(reference_model(), 400 * 7, seed=3, state_binning="day"))
        fit = baum_welch(counts, "daily", init=reference_model(), max_iters=60)
        assert fit.model.emit[1].gamma > fit.model.emit[0].gamma

    def test_model_round_trip(self):
        m = reference_model()
        assert HmmModel.from_dict(m.to_dict()) == m

    @pytest.mark.parametrize("bad", [dict(pi=(0.7, 0.7)), dict(p0=1.2), dict(q0=-0.1)])
    def test_invalid_model(self, bad):
        kw = dict(pi=(0.5, 0.5), p0=0.3, q0=0.3, emit=(HbgParams(0.1, 0.1),) * 2)
        kw.update(bad)
        with pytest.raises(ValueError):
            HmmModel(**kw)


class TestSolutionOne:
    def test_relation_residual_vanishes(self):
        rng = np.random.default_rng(42)
        w, y = rng.random(300), rng.integers(0, 12, 300)
        for d in (7, 14, 28, 56):
            rel, _ = solution1_residuals(w, y, d)
            assert rel < 1e-12

    def test_quadratic_residual_shrinks(self):
        rng = np.random.default_rng(42)
        w, y = rng.random(300), rng.integers(0, 12, 300)
        q = [solution1_residuals(w, y, d)[1] for d in (7, 14, 28, 56)]
        assert all(a > b for a, b in zip(q, q[1:]))
