# -*- coding: utf-8 -*-
"""
回测模块

在样本外价格上滚动执行持仓规则，计算财富轨迹、Sharpe 比率（不年化）及 MCL 统计。
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from src.dataio import CSV_FLOAT_FORMAT, PriceSeries, compute_returns
from src.errors import InvalidParameter, NoExcessReturn, SeriesTooShort, ZeroDispersion
from src.portfolio import Constraint, apply_constraint

logger = logging.getLogger(__name__)

# 规则：输入 (n, L) 收益窗口，输出 (n,) 仓位
Rule = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class WealthTrajectory:
    """
    财富轨迹 W_1 = 1, W_{t+1} = W_t (1 + pi_t r_t)

    Args:
        wealth: 财富序列
        positions: 每步仓位
        returns: 每步资产收益
        bankrupt: 财富是否触及 0 以下（触及后截断）
        label: 标识
    """
    wealth: np.ndarray
    positions: np.ndarray
    returns: np.ndarray
    bankrupt: bool = False
    label: str = ''

    @property
    def final_wealth(self) -> float:
        return float(self.wealth[-1])


@dataclass(frozen=True)
class MclPoint:
    """
    收益-风险平面上的一个点
    """
    mean_return: float
    risk: float
    label: str = ''

    def __post_init__(self):
        if not self.risk >= 0:
            raise InvalidParameter(f"风险必须非负: {self.risk}")


def constant_rule(value: float) -> Rule:
    """
    常数仓位规则
    """
    return lambda windows: np.full(len(windows), float(value))


def model_rule(model, constraint: Union[str, Constraint] = Constraint.UNBOUNDED) -> Rule:
    """
    把训练好的模型包装成持仓规则（输出再按约束截断）
    """
    return lambda windows: apply_constraint(model.forward(windows), constraint)


def run_backtest(rule: Rule, test: PriceSeries, window: int, label: str = '') -> WealthTrajectory:
    """
    样本外回测

    Args:
        rule: 持仓规则
        test: 测试价格
        window: 输入收益窗口 L

    Returns:
        WealthTrajectory: 财富轨迹；财富 <= 0 时截断并标记破产
    """
    if len(test) <= window:
        raise SeriesTooShort(len(test), window + 1)

    returns = compute_returns(test).returns
    traded = returns[window:]
    if traded.size == 0:
        return WealthTrajectory(np.ones(1), np.zeros(0), np.zeros(0), False, label)

    windows = sliding_window_view(returns, window)[:traded.size]
    positions = np.asarray(rule(windows), dtype=float).reshape(-1)
    if positions.size != traded.size:
        raise InvalidParameter(f"规则输出 {positions.size} 个仓位，期望 {traded.size}")

    wealth = np.concatenate(([1.0], np.cumprod(1.0 + positions * traded)))
    ruined = np.flatnonzero(wealth <= 0)
    bankrupt = bool(ruined.size)
    if bankrupt:
        end = int(ruined[0])
        logger.warning(f"回测 {label or test.label} 在第 {end} 步破产，轨迹截断")
        wealth = wealth[:end + 1]
        positions = positions[:end]
        traded = traded[:end]

    return WealthTrajectory(wealth, positions, traded, bankrupt, label)


def wealth_returns(trajectory: WealthTrajectory) -> np.ndarray:
    wealth = trajectory.wealth
    if wealth.size < 2:
        raise SeriesTooShort(wealth.size, 2)
    return wealth[1:] / wealth[:-1] - 1.0


def sharpe(trajectory: WealthTrajectory) -> float:
    """
    Sharpe 比率 M / sqrt(mean(R^2) - M^2)，R_i = W_{i+1}/W_i - 1，不年化
    """
    R = wealth_returns(trajectory)
    if np.allclose(R, R[0], rtol=1e-9, atol=1e-15):
        raise ZeroDispersion()
    dispersion = np.sqrt(np.var(R))
    if not dispersion > 0:
        raise ZeroDispersion()
    return float(np.mean(R) / dispersion)


def mcl_point(trajectory: WealthTrajectory, label: Optional[str] = None) -> MclPoint:
    """
    由财富轨迹得到 (平均收益, 收益标准差)
    """
    R = wealth_returns(trajectory)
    return MclPoint(float(np.mean(R)), float(np.sqrt(np.var(R))),
                    trajectory.label if label is None else label)


def mcl_slope(points: Sequence[MclPoint], r0: float = 0.01) -> Tuple[MclPoint, float]:
    """
    MCL 斜率：min over points of risk / (mean_return - r0)，越小越好

    Returns:
        Tuple[MclPoint, float]: 取得最小斜率的点与斜率
    """
    best_point, best_slope = None, np.inf
    for point in points:
        excess = point.mean_return - r0
        if excess <= 0:
            continue
        slope = point.risk / excess
        if slope < best_slope:
            best_point, best_slope = point, slope

    if best_point is None:
        raise NoExcessReturn(r0)
    return best_point, float(best_slope)


def write_wealth_csv(path: Union[str, Path], trajectory: WealthTrajectory) -> Path:
    """
    写出财富轨迹 CSV（step, wealth, position, asset_return），首行无仓位
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({
        'step': np.arange(trajectory.wealth.size),
        'wealth': trajectory.wealth,
        'position': np.concatenate(([np.nan], trajectory.positions)),
        'asset_return': np.concatenate(([np.nan], trajectory.returns)),
    })
    frame.to_csv(path, index=False, lineterminator='\n', float_format=CSV_FLOAT_FORMAT)
    return path
