import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize

from seqprice.distributions import (DegenerateTailError, ValuationDistribution, monopoly_price,
                                    price_search_bracket)

EXP1 = ValuationDistribution.exponential(1.0)
G2 = ValuationDistribution.gamma(2.0, 0.5)
LAWS = [EXP1, ValuationDistribution.exponential(2.5), G2, ValuationDistribution.gamma(0.5, 2.0),
        ValuationDistribution.gamma(5.0, 10.0)]


def test_survival_examples():
    assert EXP1.survival(0.0) == 1.0
    assert EXP1.survival(1.0) == pytest.approx(math.exp(-1), rel=1e-15)
    assert G2.survival(-3.0) == 1.0


def test_means():
    assert ValuationDistribution.exponential(2.0).mean == 0.5
    assert G2.mean == 1.0
    assert ValuationDistribution.gamma(5, 10).mean == 50.0
    assert G2.variance == pytest.approx(0.5)


@pytest.mark.parametrize("d", LAWS, ids=str)
def test_density_integrates_to_one(d):
    total, _ = integrate.quad(lambda x: d.density(x), 0, np.inf, limit=200)
    assert total == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("d", LAWS, ids=str)
def test_survival_matches_trapezoid_of_density(d):
    # geometric spacing keeps the grid fine next to t, where the density is steepest
    for t in np.array([0.3, 1.0, 2.5]) * d.mean:
        span = 60 * d.mean + 60 * math.sqrt(d.variance)
        x = t + np.concatenate(([0.0], np.geomspace(1e-10 * span, span, 400_000)))
        tail = integrate.trapezoid(d.density(x), x)
        assert d.survival(t) == pytest.approx(tail, abs=1e-8)


@given(st.floats(-5, 20), st.floats(0, 5))
@settings(max_examples=200, deadline=None)
def test_survival_monotone_and_bounded(t, dt):
    for d in (EXP1, G2):
        a, b = d.survival(t), d.survival(t + dt)
        assert 0.0 <= b <= a <= 1.0
        if t <= 0:
            assert a == 1.0


def test_survival_vectorized():
    t = np.array([-1.0, 0.0, 0.5, 2.0])
    np.testing.assert_allclose(EXP1.survival(t), np.exp(-np.maximum(t, 0)))
    np.testing.assert_allclose(G2.cdf(t) + G2.survival(t), 1.0)


def test_conditional_tail_mean_examples():
    assert EXP1.conditional_tail_mean(2.0) == pytest.approx(3.0, abs=1e-12)
    assert G2.conditional_tail_mean(0.0) == pytest.approx(1.0)
    # quadrature oracle for E[eps | eps >= 1] under Gamma(2, 1/2)
    num, _ = integrate.quad(lambda x: x * x * math.exp(-2 * x), 1, np.inf, epsrel=1e-13)
    den, _ = integrate.quad(lambda x: x * math.exp(-2 * x), 1, np.inf, epsrel=1e-13)
    assert num / den == pytest.approx(5 / 3, rel=1e-12)
    assert G2.conditional_tail_mean(1.0) == pytest.approx(num / den, rel=1e-10)


def test_exponential_memorylessness():
    for alpha in (0.3, 1.0, 4.0):
        d = ValuationDistribution.exponential(alpha)
        for t in np.linspace(0, 20 / alpha, 41):
            assert abs(d.conditional_tail_mean(t) - t - 1 / alpha) < 1e-12


@pytest.mark.parametrize("d", LAWS, ids=str)
def test_conditional_tail_mean_bounds(d):
    for t in np.array([-1.0, 0.0, 0.5, 1.0, 3.0, 8.0]) * d.mean:
        m = d.conditional_tail_mean(t)
        assert m >= max(t, d.mean) - 1e-12


@pytest.mark.parametrize("d", LAWS, ids=str)
def test_expected_excess_matches_quadrature(d):
    for t in np.array([0.0, 0.4, 1.5, 6.0, 25.0]) * d.mean:
        ref, _ = integrate.quad(lambda s: d.survival(s), t, np.inf, epsabs=0, epsrel=1e-12,
                                limit=200)
        assert d.expected_excess(t) == pytest.approx(ref, rel=1e-9, abs=1e-300)


def test_degenerate_tail():
    with pytest.raises(DegenerateTailError):
        EXP1.conditional_tail_mean(800.0)


def test_monopoly_price_examples():
    p, profit = monopoly_price(EXP1, 0.0, 0.0)
    assert p == 1.0 and profit == pytest.approx(math.exp(-1))
    p, profit = monopoly_price(ValuationDistribution.exponential(2.0), 0.5, 1.0)
    assert p == 1.5 and profit == pytest.approx(0.5 * math.exp(-2))


def test_gamma_monopoly_price_against_oracle():
    golden = (2 + math.sqrt(20)) / 8
    # root of 1 + 2p - 4p^2 = 0, the first-order condition of p (1 + 2p) exp(-2p)
    assert 1 + 2 * golden - 4 * golden ** 2 == pytest.approx(0, abs=1e-14)
    oracle = optimize.fminbound(lambda p: -float(G2.survival(p)) * p, 0, 20, xtol=1e-12)
    p, _ = monopoly_price(G2, 0.0, 0.0)
    assert abs(p - golden) < 1e-10
    assert abs(p - oracle) < 1e-6


def test_exponential_monopoly_grid():
    rng = np.random.default_rng(3)
    for _ in range(200):
        alpha = rng.uniform(0.2, 5)
        c = rng.uniform(-2, 2)
        v = c - rng.uniform(0, 3)
        d = ValuationDistribution.exponential(alpha)
        assert abs(monopoly_price(d, v, c)[0] - (c + 1 / alpha)) < 1e-10


def test_exponential_monopoly_sure_sale_kink():
    # with v - c > 1/alpha the sale is certain at p = v
    p, profit = monopoly_price(EXP1, 3.0, 0.0)
    assert p == 3.0 and profit == 3.0
    oracle = optimize.fminbound(lambda q: -float(EXP1.survival(q - 3.0)) * q, 0, 10, xtol=1e-12)
    assert abs(p - oracle) < 1e-5


def test_gamma_monopoly_random_against_fminbound():
    rng = np.random.default_rng(11)
    for _ in range(20):
        d = ValuationDistribution.gamma(rng.uniform(1.2, 6), rng.uniform(0.2, 3))
        v, c = rng.uniform(-2, 0), rng.uniform(0, 1)
        lo, hi = price_search_bracket(d, v, c)
        oracle = optimize.fminbound(lambda q: -float(d.survival(q - v)) * (q - c), lo, hi,
                                    xtol=1e-12)
        p, profit = monopoly_price(d, v, c)
        assert abs(p - oracle) < 1e-5 * max(1, abs(p))
        assert profit >= float(d.survival(oracle - v)) * (oracle - c) - 1e-14


def test_json_round_trip_and_validation():
    for d in LAWS:
        assert ValuationDistribution.from_dict(d.to_dict()) == d
    with pytest.raises(ValueError):
        ValuationDistribution.exponential(-1)
    with pytest.raises(ValueError):
        ValuationDistribution.from_dict({"type": "lognormal"})
    with pytest.raises(ValueError):
        ValuationDistribution.from_dict({"type": "gamma", "shape": 2})
