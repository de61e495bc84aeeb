# -*- coding: utf-8 -*-
"""
组合构建测试
"""

import numpy as np
import pytest
from scipy.special import ndtr

from src.augment import UNBOUNDED, optimal_strength
from src.dataio import PriceSeries, compute_returns
from src.errors import InvalidParameter, SingularCovariance, ZeroVolatility
from src.portfolio import (
    Constraint, Portfolio, apply_constraint, augmented_closed_form, fitted_weights,
    make_strategy_builder, markowitz_multi, merton_stationary, proposed_optimal_portfolio,
    sign_strategy, stationary_augmented_portfolio
)
from src.procgen import GbmParams, simulate_gbm_batch
from src.rng import NoiseSource


def test_sign_strategy_ties_go_long():
    portfolio = sign_strategy(np.array([0.02, -0.01, 0.0]))
    np.testing.assert_array_equal(portfolio.weights, [1.0, -1.0, 1.0])


def test_constraints_clip_and_validate():
    np.testing.assert_array_equal(apply_constraint([-2.0, 0.5, 3.0], 'box'), [-1.0, 0.5, 1.0])
    np.testing.assert_array_equal(apply_constraint([-2.0, 0.5, 3.0], 'long-only'), [0.0, 0.5, 1.0])
    with pytest.raises(InvalidParameter):
        Portfolio(np.array([1.5]), Constraint.BOX)


def test_augmented_closed_form_formula():
    prices = PriceSeries(np.array([1.0, 1.1, 1.0, 1.2]))
    returns = compute_returns(prices)
    portfolio = augmented_closed_form(returns, prices, lam=2.0, gamma_sq=0.5)

    expected = returns.returns * prices.prices[:-1] ** 2 / (2.0 * 2.0 * 0.5)
    np.testing.assert_allclose(portfolio.weights, expected)


def test_augmented_closed_form_unbounded_gives_zero():
    prices = PriceSeries(np.array([1.0, 1.1, 1.0]))
    returns = compute_returns(prices)

    np.testing.assert_array_equal(augmented_closed_form(returns, prices, 1.0, UNBOUNDED).weights, 0.0)
    mixed = augmented_closed_form(returns, prices, 1.0, np.array([np.inf, 0.1]))
    assert mixed.weights[0] == 0.0
    with pytest.raises(InvalidParameter):
        augmented_closed_form(returns, prices, 1.0, 0.0)


def test_proposed_strength_gives_merton_on_rising_steps(gbm_series, gbm_model):
    profile = optimal_strength('proposed', gbm_series, gbm_model)
    returns = compute_returns(gbm_series)
    weights = augmented_closed_form(returns, gbm_series, 1.0, profile).weights
    expected = proposed_optimal_portfolio(returns, gbm_model, 1.0).weights

    merton = gbm_model.r / gbm_model.sigma ** 2
    np.testing.assert_allclose(weights[returns.returns > 0], merton)
    np.testing.assert_array_equal(weights[returns.returns < 0], 0.0)
    np.testing.assert_allclose(weights[returns.returns != 0], expected[returns.returns != 0])


def test_zero_return_step_invests_merton(gbm_model):
    series = PriceSeries(np.array([1.0, 1.0, 1.01]))
    returns = compute_returns(series)
    profile = optimal_strength('proposed', series, gbm_model)
    expected = [50.0, 50.0]

    assert not profile.unbounded.any()
    np.testing.assert_allclose(proposed_optimal_portfolio(returns, gbm_model, 1.0).weights, expected)
    np.testing.assert_allclose(augmented_closed_form(returns, series, 1.0, profile).weights, expected)
    np.testing.assert_allclose(make_strategy_builder('proposed', gbm_model, 1.0)(series), expected)
    np.testing.assert_allclose(fitted_weights('proposed', 1.0, series.prices, 1.0, gbm_model), expected)


def test_merton_and_stationary_portfolio(gbm_series, gbm_model):
    assert merton_stationary(gbm_model, 2.0) == pytest.approx(25.0)
    assert merton_stationary(gbm_model, 2.0, 'box') == 1.0

    profile = optimal_strength('proposed', gbm_series, gbm_model)
    value = stationary_augmented_portfolio(compute_returns(gbm_series), gbm_series, 2.0, profile)
    assert value == pytest.approx(25.0, rel=1e-10)

    with pytest.raises(ZeroVolatility):
        merton_stationary(GbmParams(sigma=0.0), 1.0)


def test_fitted_weights_match_closed_form(gbm_series, gbm_model):
    rho = optimal_strength('additive', gbm_series, gbm_model)
    returns = compute_returns(gbm_series)

    fitted = fitted_weights('additive', rho, gbm_series.prices, 1.0, gbm_model)
    direct = augmented_closed_form(returns, gbm_series, 1.0, rho ** 2).weights
    np.testing.assert_allclose(fitted, direct)

    np.testing.assert_array_equal(fitted_weights('additive', 0.0, gbm_series.prices, 1.0),
                                  sign_strategy(returns).weights)


def test_strategy_builders(gbm_series, gbm_model):
    sign = make_strategy_builder('sign', gbm_model, 1.0)(gbm_series)
    merton = make_strategy_builder('merton', gbm_model, 1.0)(gbm_series)
    constant = make_strategy_builder('constant', gbm_model, 1.0, strength=0.3)(gbm_series)

    assert sign.size == merton.size == constant.size == len(gbm_series) - 1
    np.testing.assert_allclose(merton, 50.0)
    np.testing.assert_allclose(constant, 0.3)
    with pytest.raises(InvalidParameter):
        make_strategy_builder('constant', gbm_model, 1.0)


@pytest.mark.parametrize('dimension', [1, 2, 5, 20, 50])
def test_markowitz_residual(dimension):
    rng = NoiseSource(dimension).generator('spd')
    a = rng.standard_normal((dimension, dimension))
    C = a @ a.T + dimension * np.eye(dimension)
    g = rng.standard_normal(dimension)
    lam = 3.0

    solution = markowitz_multi(g, C, lam, C_true=2.0 * C)
    residual = np.linalg.norm(lam * C @ solution.weights - g) / np.linalg.norm(g)
    assert residual <= 1e-10
    assert solution.in_sample_risk == pytest.approx(solution.weights @ C @ solution.weights)
    assert solution.true_risk == pytest.approx(2.0 * solution.in_sample_risk)


def test_markowitz_rejects_singular():
    with pytest.raises(SingularCovariance):
        markowitz_multi(np.ones(2), np.array([[1.0, 1.0], [1.0, 1.0]]), 1.0)


def test_sign_strategy_long_fraction_matches_normal_cdf(gbm_model):
    paths = simulate_gbm_batch(gbm_model, 400, 50, NoiseSource(17))
    returns = (paths[:, 1:] - paths[:, :-1]) / paths[:, :-1]
    weights = sign_strategy(returns.ravel()).weights

    expected = float(ndtr(gbm_model.r / gbm_model.sigma))
    se = np.sqrt(expected * (1.0 - expected) / weights.size)
    assert abs(np.mean(weights == 1.0) - expected) <= 3.0 * se


def test_scale_equivariance(gbm_series):
    k = 3.7
    scaled = PriceSeries(gbm_series.prices * k)
    returns = compute_returns(gbm_series)
    scaled_returns = compute_returns(scaled)

    np.testing.assert_array_equal(sign_strategy(returns).weights, sign_strategy(scaled_returns).weights)
    base = augmented_closed_form(returns, gbm_series, 1.5, 0.04).weights
    moved = augmented_closed_form(scaled_returns, scaled, 1.5, 0.04 * k ** 2).weights
    np.testing.assert_allclose(moved, base, rtol=1e-10)
