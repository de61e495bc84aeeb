# -*- coding: utf-8 -*-
"""
回测与 Sharpe / MCL 统计测试
"""

import numpy as np
import pandas as pd
import pytest

from src.backtest import (
    MclPoint, WealthTrajectory, constant_rule, mcl_point, mcl_slope, model_rule, run_backtest,
    sharpe, write_wealth_csv
)
from src.dataio import PriceSeries
from src.errors import InvalidParameter, NoExcessReturn, SeriesTooShort, ZeroDispersion
from src.nntrain import MlpModel
from src.procgen import GbmParams, simulate_gbm
from src.rng import NoiseSource


def _trajectory(wealth) -> WealthTrajectory:
    wealth = np.asarray(wealth, dtype=float)
    steps = wealth.size - 1
    return WealthTrajectory(wealth, np.ones(steps), wealth[1:] / wealth[:-1] - 1.0)


def test_zero_position_keeps_wealth_constant(gbm_series):
    trajectory = run_backtest(constant_rule(0.0), gbm_series, 10)
    np.testing.assert_array_equal(trajectory.wealth, 1.0)
    assert not trajectory.bankrupt


def test_buy_and_hold_telescopes(gbm_series):
    window = 5
    trajectory = run_backtest(constant_rule(1.0), gbm_series, window)
    prices = gbm_series.prices

    assert trajectory.positions.size == len(gbm_series) - 1 - window
    assert trajectory.final_wealth == pytest.approx(prices[-1] / prices[window], rel=1e-10)


def test_bankruptcy_truncates_trajectory():
    test = PriceSeries(np.array([1.0, 1.1, 0.55, 0.6]))
    trajectory = run_backtest(constant_rule(2.0), test, 1, label='levered')

    assert trajectory.bankrupt
    np.testing.assert_allclose(trajectory.wealth, [1.0, 0.0])
    assert trajectory.positions.size == 1


def test_backtest_validates_inputs():
    test = PriceSeries(np.array([1.0, 1.1, 1.2]))
    with pytest.raises(SeriesTooShort):
        run_backtest(constant_rule(1.0), test, 3)
    with pytest.raises(InvalidParameter):
        run_backtest(lambda windows: np.ones(5), test, 1)


def test_model_rule_applies_constraint(gbm_series):
    model = MlpModel.stationary(3.0, 'identity')
    trajectory = run_backtest(model_rule(model, 'box'), gbm_series, 10)
    np.testing.assert_array_equal(trajectory.positions, 1.0)


def test_sharpe_values():
    assert sharpe(_trajectory([1.0, 1.1, 0.99])) == pytest.approx(0.0, abs=1e-12)

    with pytest.raises(ZeroDispersion):
        sharpe(_trajectory([1.0, 1.01, 1.0201]))
    with pytest.raises(SeriesTooShort):
        sharpe(_trajectory([1.0]))


def test_sharpe_sampling_error_matches_theory():
    model = GbmParams(s0=1.0, r=0.0005, sigma=0.01)
    noise = NoiseSource(21)
    ratios = []
    for index in range(1000):
        series = simulate_gbm(model, 201, noise, index)
        ratios.append(sharpe(run_backtest(constant_rule(1.0), series, 1)))

    assert np.std(ratios, ddof=1) == pytest.approx(1.0 / np.sqrt(200), rel=0.2)


def test_mcl_slope_picks_smallest_ratio():
    points = [MclPoint(0.06, 0.1, 'a'), MclPoint(0.03, 0.1, 'b'), MclPoint(0.005, 0.01, 'c')]
    best, slope = mcl_slope(points, r0=0.01)

    assert best.label == 'a'
    assert slope == pytest.approx(2.0)
    with pytest.raises(NoExcessReturn):
        mcl_slope([MclPoint(0.005, 0.01)], r0=0.01)
    with pytest.raises(InvalidParameter):
        MclPoint(0.01, -1.0)


def test_sharpe_is_invariant_to_scaling_wealth(gbm_series):
    trajectory = run_backtest(constant_rule(0.7), gbm_series, 10)
    scaled = WealthTrajectory(trajectory.wealth * 250.0, trajectory.positions, trajectory.returns)
    assert sharpe(scaled) == pytest.approx(sharpe(trajectory), rel=1e-12)


def test_mcl_slope_ignores_duplicates_and_improves_with_dominating_point():
    points = [MclPoint(0.03, 0.1, 'a'), MclPoint(0.02, 0.04, 'b')]
    _, slope = mcl_slope(points, r0=0.01)
    _, duplicated = mcl_slope(points + points, r0=0.01)
    assert duplicated == slope

    # 收益更高且风险更低的点
    _, improved = mcl_slope(points + [MclPoint(0.04, 0.04, 'c')], r0=0.01)
    assert improved <= slope


def test_mcl_point_from_trajectory():
    point = mcl_point(_trajectory([1.0, 1.1, 0.99]), 'x')
    assert point.mean_return == pytest.approx(0.0, abs=1e-12)
    assert point.risk == pytest.approx(0.1)
    assert point.label == 'x'


def test_write_wealth_csv(tmp_path, gbm_series):
    trajectory = run_backtest(constant_rule(0.5), gbm_series, 10)
    path = write_wealth_csv(tmp_path / 'wealth.csv', trajectory)
    frame = pd.read_csv(path)

    assert list(frame.columns) == ['step', 'wealth', 'position', 'asset_return']
    assert len(frame) == trajectory.wealth.size
    assert np.isnan(frame['position'].iloc[0])
    np.testing.assert_allclose(frame['position'].iloc[1:], 0.5)
