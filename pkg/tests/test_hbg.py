import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spurt.hbg import (
    HbgParams,
    hbg_pmf,
    hbg_sample,
    joint_xy_pmf,
    x_pmf,
    y_pmf,
)

GRID = [HbgParams(g, m) for g in (0.1, 0.4, 0.8) for m in (0.0, 0.3, 0.7)]


def tail_cutoff(mu, delta, eps=1e-13):
    """Support bound R with P(Y > R) below eps, from a negative-binomial tail."""
    if mu == 0:
        return delta
    r = delta
    while True:
        tail = sum(math.comb(r + j, delta - 1) * mu ** (r + j - delta + 1) for j in range(400))
        if tail < eps:
            return r
        r += 10


def convolved_y(params, delta, R):
    """Oracle: the law of Y as the delta-fold convolution of the daily pmf."""
    day = hbg_pmf(params, np.arange(R + 1))
    out = np.array([1.0])
    for _ in range(delta):
        out = np.convolve(out, day)[: R + 1]
    return out


def test_pmf_examples():
    p = HbgParams(0.1, 0.3)
    assert hbg_pmf(p, 0) == pytest.approx(0.9, abs=1e-15)
    assert hbg_pmf(p, 1) == pytest.approx(0.07, abs=1e-15)
    assert hbg_pmf(p, 3) == pytest.approx(0.0063, abs=1e-15)


def test_moments():
    p = HbgParams(0.3, 0.6)
    r = np.arange(400)
    w = hbg_pmf(p, r)
    m = np.sum(r * w)
    assert m == pytest.approx(p.mean, rel=1e-12)
    assert np.sum((r - m) ** 2 * w) == pytest.approx(p.variance, rel=1e-10)


@pytest.mark.parametrize("g,m", [(-0.1, 0.2), (1.1, 0.2), (0.5, 1.0), (0.5, -0.1), (float("nan"), 0.1)])
def test_param_validation(g, m):
    with pytest.raises(ValueError):
        HbgParams(g, m)


def test_sampler_degenerate_cases():
    rng = np.random.default_rng(42)
    assert np.all(hbg_sample(HbgParams(0.0, 0.5), rng, 1000) == 0)
    assert np.all(hbg_sample(HbgParams(1.0, 0.0), rng, 1000) == 1)


def test_sampler_mean():
    x = hbg_sample(HbgParams(0.1, 0.3), np.random.default_rng(42), 10**6)
    assert abs(x.mean() - 0.1 / 0.7) < 0.002


def test_window_examples():
    p = HbgParams(0.1, 0.3)
    assert joint_xy_pmf(p, 7, 0, 0) == pytest.approx(0.9**7, rel=1e-13)
    assert joint_xy_pmf(p, 7, 1, 1) == pytest.approx(7 * 0.9**6 * 0.1 * 0.7, rel=1e-13)
    assert x_pmf(p, 7, 0) == pytest.approx(0.9**7, rel=1e-13)
    assert x_pmf(p, 7, 7) == pytest.approx(1e-7, rel=1e-12)
    assert y_pmf(p, 7, 0) == pytest.approx(0.9**7, rel=1e-13)


def test_joint_domain_error():
    with pytest.raises(ValueError):
        joint_xy_pmf(HbgParams(0.2, 0.4), 7, 3, 2)
    with pytest.raises(ValueError):
        joint_xy_pmf(HbgParams(0.2, 0.4), 7, 8, 9)


def test_zero_activity_without_zero_count_is_impossible():
    assert joint_xy_pmf(HbgParams(0.2, 0.4), 7, 0, 3) == 0.0


def test_joint_against_enumeration():
    """Oracle: enumerate every count vector of a short window."""
    p, delta, R = HbgParams(0.35, 0.45), 3, 12
    table = np.zeros((delta + 1, R + 1))
    for m in itertools.product(range(R + 1), repeat=delta):
        if sum(m) <= R:
            table[sum(v > 0 for v in m), sum(m)] += np.prod(hbg_pmf(p, np.array(m)))
    for k in range(delta + 1):
        for r in range(k, R + 1):
            assert joint_xy_pmf(p, delta, k, r) == pytest.approx(table[k, r], abs=1e-15)


@pytest.mark.parametrize("p", GRID, ids=lambda p: f"g{p.gamma}-m{p.mu}")
def test_y_matches_convolution(p):
    R = 40
    np.testing.assert_allclose(y_pmf(p, 7, np.arange(R + 1)), convolved_y(p, 7, R), rtol=1e-11, atol=1e-15)


def test_mu_zero_means_y_equals_x():
    p = HbgParams(0.3, 0.0)
    r = np.arange(0, 12)
    np.testing.assert_allclose(y_pmf(p, 7, r), np.where(r <= 7, x_pmf(p, 7, np.minimum(r, 7)), 0.0), atol=1e-15)


def test_gamma_one_means_every_day_active():
    p = HbgParams(1.0, 0.5)
    assert x_pmf(p, 7, 7) == 1.0
    assert y_pmf(p, 7, 6) == 0.0
    assert y_pmf(p, 7, 7) == pytest.approx(0.5**7)


def test_y_log_space_has_no_underflow():
    p = HbgParams(0.5, 0.9)
    v = y_pmf(p, 56, np.array([500, 2000]))
    assert np.all(np.isfinite(v)) and np.all(v >= 0)
    assert v[0] > 0


def test_window_monte_carlo():
    """(X, Y) histogram from simulated windows sits within 4 standard errors of the pmf."""
    p, delta, n = HbgParams(0.2, 0.4), 7, 10**6
    d = hbg_sample(p, np.random.default_rng(42), (n, delta))
    x, y = (d > 0).sum(axis=1), d.sum(axis=1)
    for k, r in [(0, 0), (1, 1), (1, 2), (2, 3), (3, 5), (4, 8)]:
        pr = joint_xy_pmf(p, delta, k, r)
        emp = np.mean((x == k) & (y == r))
        assert abs(emp - pr) < 4 * math.sqrt(pr * (1 - pr) / n)


class TestMarginals:
    @pytest.mark.parametrize("p", GRID, ids=lambda p: f"g{p.gamma}-m{p.mu}")
    def test_marginalisation(self, p):
        delta = 7
        R = tail_cutoff(p.mu, delta)
        ks = np.arange(delta + 1)
        rs = np.arange(R + 1)
        J = np.zeros((delta + 1, R + 1))
        for k in ks:
            J[k, k:] = joint_xy_pmf(p, delta, k, rs[k:])
        np.testing.assert_allclose(J.sum(axis=1), x_pmf(p, delta, ks), atol=1e-12)
        np.testing.assert_allclose(J.sum(axis=0), y_pmf(p, delta, rs), atol=1e-12)
        assert J.sum() > 1 - 1e-9
        assert y_pmf(p, delta, rs).sum() > 1 - 1e-9

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.01, 0.99), st.floats(0.0, 0.9), st.integers(1, 14))
    def test_normalisation(self, g, m, delta):
        p = HbgParams(g, m)
        R = tail_cutoff(m, delta)
        assert abs(y_pmf(p, delta, np.arange(R + 1)).sum() - 1) < 1e-9
        assert abs(x_pmf(p, delta, np.arange(delta + 1)).sum() - 1) < 1e-12
        assert abs(hbg_pmf(p, np.arange(2000)).sum() - 1) < 1e-9
