# -*- coding: utf-8 -*-
"""
增强强度搜索测试
"""

import numpy as np
import pytest

from src.augment import optimal_strength
from src.errors import InvalidParameter
from src.metaopt import OmegaPrior, ThetaGrid, bayes_theta, best_theta, minimax_theta, value_matrix
from src.procgen import GbmParams


def test_best_theta_recovers_additive_closed_form(gbm_series, gbm_model):
    grid = ThetaGrid.linspace(0.01, 0.5, 50, 'additive')
    result = best_theta(grid, gbm_model, 1.0, training_paths=gbm_series.prices[np.newaxis, :])

    rho = optimal_strength('additive', gbm_series, gbm_model)
    step = grid.values[1] - grid.values[0]
    assert abs(result.theta - rho) <= step
    assert result.curve.shape == (50,)
    assert len(result.rows()) == 50


def test_ties_resolve_to_smallest_theta(gbm_model):
    grid = ThetaGrid(np.array([0.3, 0.1, 0.2]))

    def flat(theta, omega):
        return 1.0

    result = best_theta(grid, gbm_model, 1.0, evaluator=flat)
    assert result.theta == 0.1


def test_evaluator_receives_every_omega():
    grid = ThetaGrid(np.array([1.0, 2.0]))
    omegas = [GbmParams(r=0.01, sigma=0.1), GbmParams(r=0.02, sigma=0.1)]
    values, errors = value_matrix(grid, omegas, 1.0, evaluator=lambda theta, omega: (theta * omega.r, 0.5))

    np.testing.assert_allclose(values, [[0.01, 0.02], [0.02, 0.04]])
    np.testing.assert_allclose(errors, 0.5)


def test_bayes_ignores_zero_weight_support():
    grid = ThetaGrid(np.array([0.0, 1.0]))
    good = GbmParams(r=0.01, sigma=0.1)
    bad = GbmParams(r=0.02, sigma=0.1)
    prior = OmegaPrior((good, bad), np.array([1.0, 0.0]))
    seen = []

    def evaluator(theta, omega):
        seen.append(omega)
        return -abs(theta - 1.0) if omega is good else 100.0 * theta

    result = bayes_theta(grid, prior, 1.0, evaluator=evaluator)
    assert result.theta == 1.0
    assert bad not in seen


def test_minimax_picks_best_worst_case():
    grid = ThetaGrid(np.array([0.0, 1.0, 2.0]))
    omegas = [GbmParams(r=0.01, sigma=0.1), GbmParams(r=0.02, sigma=0.1)]
    table = {(0.01, 0.0): 5.0, (0.01, 1.0): 2.0, (0.01, 2.0): 0.0,
             (0.02, 0.0): -1.0, (0.02, 1.0): 1.5, (0.02, 2.0): 3.0}

    result = minimax_theta(grid, omegas, 1.0, evaluator=lambda theta, omega: table[(omega.r, theta)])
    assert result.theta == 1.0
    assert result.value == 1.5


def test_grid_and_prior_validation():
    with pytest.raises(InvalidParameter):
        ThetaGrid(np.array([]))
    with pytest.raises(InvalidParameter):
        ThetaGrid(np.array([-0.1, 0.2]))
    with pytest.raises(InvalidParameter):
        OmegaPrior((GbmParams(),), np.array([0.5]))
    with pytest.raises(InvalidParameter):
        value_matrix(ThetaGrid(np.array([1.0])), [], 1.0)


def _small_run(**overrides):
    return {'lam': 1.0, 'T': 200, 'n_train_sets': 200, 'seed': 3, **overrides}


def test_point_mass_prior_matches_best_theta(gbm_model):
    grid = ThetaGrid.linspace(0.01, 0.5, 25, 'additive')
    single = best_theta(grid, gbm_model, **_small_run())
    prior = OmegaPrior((gbm_model, GbmParams(r=0.005, sigma=0.02)), np.array([1.0, 0.0]))
    bayes = bayes_theta(grid, prior, **_small_run())

    assert bayes.theta == single.theta
    np.testing.assert_allclose(bayes.curve, single.curve)


def test_two_point_prior_lies_between_single_optima():
    grid = ThetaGrid.linspace(0.01, 1.0, 100, 'additive')
    calm = GbmParams(r=0.005, sigma=0.01)
    volatile = GbmParams(r=0.005, sigma=0.02)
    low = best_theta(grid, calm, **_small_run()).theta
    high = best_theta(grid, volatile, **_small_run()).theta
    bayes = bayes_theta(grid, OmegaPrior.uniform((calm, volatile)), **_small_run()).theta

    assert low < high
    assert low <= bayes <= high


def test_minimax_value_never_exceeds_bayes_value():
    grid = ThetaGrid.linspace(0.01, 1.0, 40, 'additive')
    omegas = (GbmParams(r=0.005, sigma=0.01), GbmParams(r=0.004, sigma=0.015))
    bayes = bayes_theta(grid, OmegaPrior.uniform(omegas), **_small_run())
    minimax = minimax_theta(grid, omegas, **_small_run())
    assert minimax.value <= bayes.value


def test_proposed_factor_grid_picks_unit_factor(gbm_model):
    grid = ThetaGrid(np.array([0.5, 1.0, 2.0]), 'proposed')
    result = best_theta(grid, gbm_model, **_small_run(n_train_sets=50))
    assert result.theta == 1.0


def test_adding_grid_point_never_lowers_best_value(gbm_model):
    coarse = ThetaGrid.linspace(0.05, 0.5, 10, 'additive')
    finer = ThetaGrid(np.append(coarse.values, 0.123), 'additive')
    base = best_theta(coarse, gbm_model, **_small_run())
    assert best_theta(finer, gbm_model, **_small_run()).value >= base.value


def test_best_theta_is_stable_as_training_sets_grow(gbm_model):
    grid = ThetaGrid.linspace(0.01, 0.5, 50, 'additive')
    few = best_theta(grid, gbm_model, 1.0, n_train_sets=500)
    many = best_theta(grid, gbm_model, 1.0, n_train_sets=2000)
    assert abs(few.theta - many.theta) <= grid.values[1] - grid.values[0] + 1e-12
