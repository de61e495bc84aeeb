# -*- coding: utf-8 -*-
"""
数据增强方案测试
"""

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from src.augment import (
    UNBOUNDED, AugmentationScheme, SchemeKind, StrengthProfile, VolEstimate, audit_perturbation, augment_prices,
    augment_returns, calibrate_strength, clustering_diagnostic, estimate_volatility, multi_asset_noise,
    multi_asset_scale, noisified_return, optimal_strength, perturbation_scale, return_noise_variance,
    smooth_abs_returns
)
from src.dataio import PriceSeries, ReturnSeries, compute_returns
from src.errors import (
    DimensionMismatch, InvalidParameter, NotPSD, WindowTooLarge, ZeroDrift
)
from src.procgen import GbmParams, RegimeParams, simulate_gbm, simulate_regime_switching
from src.rng import NoiseSource


def test_scheme_aliases():
    assert SchemeKind.parse('proposed') == SchemeKind.PROPOSED
    assert SchemeKind.parse('naive') == SchemeKind.NAIVE
    assert SchemeKind.parse('no-aug') == SchemeKind.NONE
    with pytest.raises(InvalidParameter):
        SchemeKind.parse('dropout')


def test_no_augmentation_returns_original(gbm_series):
    scheme = AugmentationScheme(kind='none')
    augmented = augment_prices(gbm_series, scheme)
    np.testing.assert_array_equal(augmented, gbm_series.prices)


def test_additive_and_naive_scales(gbm_series):
    additive = perturbation_scale(gbm_series, AugmentationScheme('additive', 0.3))
    naive = perturbation_scale(gbm_series, AugmentationScheme('naive', 0.2))

    np.testing.assert_allclose(additive, 0.3)
    np.testing.assert_allclose(naive, 0.2 * gbm_series.prices)


def test_proposed_scale_vanishes_where_returns_vanish():
    prices = PriceSeries(np.array([1.0, 1.0, 1.0, 1.1, 1.1]))
    vol = VolEstimate(np.full(len(prices) - 1, 0.02), window=2)
    scheme = AugmentationScheme('proposed', 1.0, tau=1)
    scale = perturbation_scale(prices, scheme, vol)

    # r = (0, 0, 0.1, 0)，价格 i 使用 r_i，最后一个价格复用最后一个收益
    np.testing.assert_allclose(scale[[0, 1, 3, 4]], 0.0)
    np.testing.assert_allclose(scale[2], 0.02 * np.sqrt(0.1) * 1.0)


def test_proposed_requires_volatility(gbm_series):
    with pytest.raises(InvalidParameter):
        perturbation_scale(gbm_series, AugmentationScheme('proposed', 1.0))


def test_fold_volatility_drops_sigma(gbm_series):
    scheme = AugmentationScheme('proposed', 2.0, tau=1, fold_volatility=True)
    scale = perturbation_scale(gbm_series, scheme)
    magnitude = np.abs(compute_returns(gbm_series).returns)

    np.testing.assert_allclose(scale[:-1], 2.0 * np.sqrt(magnitude) * gbm_series.prices[:-1])


def test_augmentation_is_seed_reproducible(gbm_series):
    vol = estimate_volatility(compute_returns(gbm_series), 20)
    scheme = AugmentationScheme('proposed', 1.0, noise=NoiseSource(3), tau=20)

    first = augment_prices(gbm_series, scheme, vol, scheme.noise.generator('x'))
    second = augment_prices(gbm_series, scheme, vol, scheme.noise.generator('x'))
    np.testing.assert_array_equal(first, second)
    assert not np.array_equal(first, gbm_series.prices)


def test_noisified_return_uses_original_price():
    assert noisified_return(1.2, 1.0, 2.0) == pytest.approx(0.1)
    with pytest.raises(InvalidParameter):
        noisified_return(1.0, 1.0, 0.0)


def test_estimate_volatility():
    returns = ReturnSeries(np.array([0.01, -0.01, 0.01, -0.01, 0.02]))
    vol = estimate_volatility(returns, 4)

    assert len(vol) == 5
    expected_first = np.std([0.01, -0.01, 0.01, -0.01], ddof=1)
    np.testing.assert_allclose(vol.sigma_hat[:4], expected_first)
    np.testing.assert_allclose(vol.sigma_hat[4], np.std([-0.01, 0.01, -0.01, 0.02], ddof=1))

    with pytest.raises(WindowTooLarge):
        estimate_volatility(returns, 6)
    with pytest.raises(InvalidParameter):
        estimate_volatility(returns, 1)


def test_smooth_abs_returns_truncated_average():
    values = np.array([1.0, -3.0, 2.0, -4.0])
    np.testing.assert_allclose(smooth_abs_returns(values, 2), [1.0, 2.0, 2.5, 3.0])
    np.testing.assert_allclose(smooth_abs_returns(values, 1), np.abs(values))


def test_augment_returns_target_uses_last_input_scale():
    inputs = np.array([0.01, 0.04])
    noise = NoiseSource(0, 'rademacher')
    rng = noise.generator('r')
    noisy_inputs, noisy_target = augment_returns(inputs, 0.0, 1.0, 0.5, noise, rng)

    # rademacher 噪声下扰动幅度恰为尺度本身
    np.testing.assert_allclose(np.abs(noisy_inputs - inputs), 0.5 * np.sqrt(np.abs(inputs)))
    assert abs(noisy_target) == pytest.approx(0.5 * np.sqrt(0.04))

    same_inputs, same_target = augment_returns(inputs, 0.03, 0.0, 0.5, noise, rng)
    np.testing.assert_array_equal(same_inputs, inputs)
    assert same_target == 0.03


def _brute_force_strength(weights_at, model, lam):
    """
    在对数强度上做一维有界搜索，最大化精确内层效用
    """
    def negative_utility(log_strength):
        weights = weights_at(np.exp(log_strength))
        return -(model.r * weights.mean() - 0.5 * lam * model.sigma ** 2 * np.mean(weights ** 2))

    result = minimize_scalar(negative_utility, bounds=(np.log(1e-5), np.log(10.0)), method='bounded',
                             options={'xatol': 1e-10})
    return float(np.exp(result.x))


@pytest.mark.parametrize('lam', [1.0, 3.0])
def test_optimal_strengths_match_brute_force(gbm_model, lam):
    noise = NoiseSource(31)
    for index in range(20):
        series = simulate_gbm(gbm_model, 400, noise, index)
        returns = compute_returns(series).returns
        prices = series.prices[:-1]

        rho = optimal_strength('additive', series, gbm_model)
        rho0 = optimal_strength('naive', series, gbm_model)
        assert rho is not UNBOUNDED and rho0 is not UNBOUNDED

        additive = _brute_force_strength(lambda s: returns * prices ** 2 / (2.0 * lam * s ** 2),
                                         gbm_model, lam)
        naive = _brute_force_strength(lambda s: returns / (2.0 * lam * s ** 2), gbm_model, lam)

        assert abs(rho - additive) / additive <= 1e-3
        assert abs(rho0 - naive) / naive <= 1e-3


def test_optimal_strength_unbounded_and_errors():
    falling = PriceSeries(np.array([1.0, 0.9, 0.8, 0.7]))
    model = GbmParams(r=0.005, sigma=0.01)

    assert optimal_strength('additive', falling, model) is UNBOUNDED
    assert optimal_strength('naive', falling, model) is UNBOUNDED
    profile = optimal_strength('proposed', falling, model)
    assert isinstance(profile, StrengthProfile)
    assert profile.unbounded.all()

    with pytest.raises(ZeroDrift):
        optimal_strength('additive', falling, GbmParams(r=0.0, sigma=0.01))
    with pytest.raises(InvalidParameter):
        optimal_strength('additive', falling, GbmParams(r=-0.01, sigma=0.01))


def test_proposed_profile_formula(gbm_series, gbm_model):
    profile = optimal_strength('proposed', gbm_series, gbm_model)
    returns = compute_returns(gbm_series).returns
    expected = gbm_model.sigma ** 2 / (2.0 * gbm_model.r) * returns * gbm_series.prices[:-1] ** 2

    np.testing.assert_allclose(profile.raw, expected)
    rising = returns >= 0
    np.testing.assert_allclose(profile.gamma_sq[rising], expected[rising])
    assert np.all(np.isnan(profile.gamma_sq[~rising]))
    assert profile.factor == pytest.approx(gbm_model.sigma ** 2 / (2.0 * gbm_model.r))


def test_calibrate_strength_hits_target_variance(gbm_series):
    vol = estimate_volatility(compute_returns(gbm_series), 20)
    for kind in ('additive', 'naive', 'proposed'):
        strength = calibrate_strength(gbm_series, kind, 1e-5, vol)
        scheme = AugmentationScheme(kind, strength)
        assert return_noise_variance(gbm_series, scheme, vol).mean() == pytest.approx(1e-5, rel=1e-10)


def test_audit_matches_prescribed_variance(gbm_series):
    scheme = AugmentationScheme('naive', 0.01, noise=NoiseSource(5))
    audit = audit_perturbation(gbm_series, scheme, n_draws=4000)

    assert audit['mean_empirical_variance'] == pytest.approx(audit['mean_prescribed_variance'], rel=0.05)
    assert audit['max_relative_variance_error'] < 0.2


def test_proposed_preserves_volatility_clustering():
    noise = NoiseSource(17).child('regime')
    closer = 0
    for trial in range(100):
        series, _ = simulate_regime_switching(RegimeParams(), 1000, noise, trial)
        result = clustering_diagnostic(series, NoiseSource(18), index=trial)
        closer += result['proposed_closer']
    assert closer >= 90


def test_multi_asset_scale():
    sigma = np.array([[1e-4, 2e-5], [2e-5, 4e-4]])
    prices = np.array([1.0, 2.0])
    returns = np.array([0.01, -0.02])
    scale = multi_asset_scale(prices, returns, sigma, 2.0)
    expected = 2.0 * np.sqrt(sigma @ (np.abs(returns) * prices ** 2))
    np.testing.assert_allclose(scale, expected)

    perturbed = multi_asset_noise(prices, returns, sigma, 2.0, NoiseSource(0, 'rademacher'))
    np.testing.assert_allclose(np.abs(perturbed - prices), expected)

    with pytest.raises(DimensionMismatch):
        multi_asset_scale(prices, returns[:1], sigma, 1.0)
    with pytest.raises(NotPSD):
        multi_asset_scale(prices, returns, np.array([[1.0, 2.0], [2.0, 1.0]]), 1.0)
