# -*- coding: utf-8 -*-
"""
闭式组合策略模块

包含无增强的符号策略、增强后的闭式最优组合、Merton 平稳组合以及经典多资产均值-方差解。
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from src.augment import (
    UNBOUNDED, SchemeKind, StrengthProfile, gamma_squared, optimal_strength
)
from src.dataio import PriceSeries, ReturnSeries, compute_returns
from src.errors import (
    DimensionMismatch, InvalidParameter, LengthMismatch, SingularCovariance, ZeroVolatility
)
from src.procgen import GbmParams

logger = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12


class Constraint(str, Enum):
    """
    仓位约束
    """
    UNBOUNDED = 'unbounded'
    BOX = 'box'
    LONG_ONLY = 'long-only'

    @property
    def bounds(self):
        return {
            Constraint.UNBOUNDED: (-np.inf, np.inf),
            Constraint.BOX: (-1.0, 1.0),
            Constraint.LONG_ONLY: (0.0, 1.0),
        }[self]


@dataclass(frozen=True)
class Portfolio:
    """
    逐步仓位 pi_t（投入风险资产的财富比例）
    """
    weights: np.ndarray
    constraint: Constraint = Constraint.UNBOUNDED

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float).reshape(-1)
        constraint = Constraint(self.constraint)
        low, high = constraint.bounds
        if np.any(weights < low) or np.any(weights > high):
            raise InvalidParameter(f"仓位超出 {constraint.value} 约束")
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'constraint', constraint)

    def __len__(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class MarkowitzSolution:
    """
    多资产均值-方差解：权重、样本内风险、以及给定真实协方差时的真实风险
    """
    weights: np.ndarray
    in_sample_risk: float
    true_risk: Optional[float] = None


def _check_lambda(lam: float):
    if not lam > 0:
        raise InvalidParameter(f"风险厌恶系数必须为正: {lam}")


def _returns_array(returns) -> np.ndarray:
    if isinstance(returns, ReturnSeries):
        return returns.returns
    return np.asarray(returns, dtype=float)


def apply_constraint(weights, constraint: Union[str, Constraint] = Constraint.UNBOUNDED) -> np.ndarray:
    """
    把仓位截断到约束区间内
    """
    low, high = Constraint(constraint).bounds
    return np.clip(np.asarray(weights, dtype=float), low, high)


def sign_strategy(returns, constraint: Union[str, Constraint] = Constraint.UNBOUNDED) -> Portfolio:
    """
    无增强时训练目标的最优解：r_t >= 0 取 +1，否则取 -1
    """
    values = _returns_array(returns)
    weights = np.where(values >= 0, 1.0, -1.0)
    return Portfolio(apply_constraint(weights, constraint), Constraint(constraint))


def augmented_closed_form(returns, prices, lam: float, gamma_sq,
                          constraint: Union[str, Constraint] = Constraint.UNBOUNDED) -> Portfolio:
    """
    增强训练目标的逐步闭式最优解 pi_t = r_t S_t^2 / (2 lambda gamma_t^2)

    Args:
        returns: 训练收益 r_t
        prices: 对应的价格 S_t（也可传入完整价格序列，自动去掉最后一个价格）
        lam: 风险厌恶系数
        gamma_sq: 逐步噪声方差，标量、数组、StrengthProfile 或 UNBOUNDED；无界（inf/nan）位置仓位为 0
        constraint: 仓位约束

    Returns:
        Portfolio: 闭式最优组合
    """
    _check_lambda(lam)
    values = _returns_array(returns)
    prices = prices.prices if isinstance(prices, PriceSeries) else np.asarray(prices, dtype=float)
    if prices.size == values.size + 1:
        prices = prices[:-1]
    if prices.size != values.size:
        raise LengthMismatch(f"价格长度 {prices.size} 与收益长度 {values.size} 不一致")

    tie_weight = None
    if isinstance(gamma_sq, StrengthProfile):
        # r_t = 0 时 gamma_t^2 = 0，仓位取 r_t -> 0 的极限
        tie_weight = 1.0 / (2.0 * lam * gamma_sq.factor)
        gamma_sq = np.where(gamma_sq.unbounded, np.inf, gamma_sq.gamma_sq)
    elif gamma_sq is UNBOUNDED:
        gamma_sq = np.inf
    gamma_sq = np.broadcast_to(np.asarray(gamma_sq, dtype=float), values.shape)

    unbounded = ~np.isfinite(gamma_sq)
    ties = (gamma_sq == 0) & (values == 0) if tie_weight is not None else np.zeros(values.shape, dtype=bool)
    if np.any(gamma_sq[~unbounded & ~ties] <= 0):
        raise InvalidParameter("有限的 gamma_t^2 必须为正")

    safe = np.where(unbounded | ties, 1.0, gamma_sq)
    weights = np.where(unbounded, 0.0, values * prices ** 2 / (2.0 * lam * safe))
    if tie_weight is not None:
        weights = np.where(ties, tie_weight, weights)
    return Portfolio(apply_constraint(weights, constraint), Constraint(constraint))


def proposed_optimal_portfolio(returns, model: GbmParams, lam: float,
                               constraint: Union[str, Constraint] = Constraint.UNBOUNDED) -> Portfolio:
    """
    proposed 最优强度下的组合 pi_t = r / (lambda sigma^2) * Theta(r_t)，Theta(0) = 1
    """
    _check_lambda(lam)
    if model.sigma == 0:
        raise ZeroVolatility()
    values = _returns_array(returns)
    weights = np.where(values >= 0, model.r / (lam * model.sigma ** 2), 0.0)
    return Portfolio(apply_constraint(weights, constraint), Constraint(constraint))


def merton_stationary(model: GbmParams, lam: float,
                      constraint: Union[str, Constraint] = Constraint.UNBOUNDED) -> float:
    """
    GBM 下的最优平稳组合 r / (lambda sigma^2)
    """
    _check_lambda(lam)
    if model.sigma == 0:
        raise ZeroVolatility()
    return float(apply_constraint(model.r / (lam * model.sigma ** 2), constraint))


def stationary_augmented_portfolio(returns, prices, lam: float, gamma_sq) -> float:
    """
    增强目标下的最优平稳组合 pi = sum(r_t) / (2 lambda sum(gamma_t^2 / S_t^2))

    gamma_sq 可以是带符号的原始强度（StrengthProfile.raw），此时结果为 r / (lambda sigma^2)。
    """
    _check_lambda(lam)
    values = _returns_array(returns)
    prices = prices.prices if isinstance(prices, PriceSeries) else np.asarray(prices, dtype=float)
    if prices.size == values.size + 1:
        prices = prices[:-1]
    if isinstance(gamma_sq, StrengthProfile):
        gamma_sq = gamma_sq.raw
    gamma_sq = np.broadcast_to(np.asarray(gamma_sq, dtype=float), values.shape)

    denominator = 2.0 * lam * np.sum(gamma_sq / prices ** 2)
    if denominator == 0:
        raise InvalidParameter("平稳组合分母为 0")
    return float(np.sum(values) / denominator)


def markowitz_multi(g, C, lam: float, C_true=None) -> MarkowitzSolution:
    """
    经典多资产解 pi* = C^{-1} g / lambda，风险以二次型 pi^T C pi 计算

    Args:
        g: 期望收益向量
        C: 估计协方差（对称正定）
        lam: 风险厌恶系数
        C_true: 真实协方差，给出时额外返回真实风险

    Returns:
        MarkowitzSolution: 权重与风险
    """
    _check_lambda(lam)
    g = np.asarray(g, dtype=float).reshape(-1)
    C = np.asarray(C, dtype=float)
    if C.shape != (g.size, g.size):
        raise DimensionMismatch(f"协方差形状 {C.shape} 与收益维度 {g.size} 不一致")
    if not np.allclose(C, C.T, rtol=1e-10, atol=1e-14):
        raise SingularCovariance("协方差矩阵不对称")

    condition = np.linalg.cond(C)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise SingularCovariance(f"协方差矩阵条件数过大: {condition:.3e}")
    try:
        factor = cho_factor(C)
    except LinAlgError:
        raise SingularCovariance("协方差矩阵不是正定的")

    weights = cho_solve(factor, g) / lam
    in_sample = float(weights @ C @ weights)

    true_risk = None
    if C_true is not None:
        C_true = np.asarray(C_true, dtype=float)
        if C_true.shape != C.shape:
            raise DimensionMismatch(f"真实协方差形状 {C_true.shape} 与 {C.shape} 不一致")
        true_risk = float(weights @ C_true @ weights)

    return MarkowitzSolution(weights=weights, in_sample_risk=in_sample, true_risk=true_risk)


def fitted_weights(kind: Union[str, SchemeKind], theta: float, prices: np.ndarray, lam: float,
                   model: Optional[GbmParams] = None) -> np.ndarray:
    """
    给定方案与强度 theta 的闭式拟合仓位，按行向量化

    - none: 符号策略
    - additive: gamma_t^2 = theta^2
    - naive: gamma_t^2 = theta^2 S_t^2
    - proposed: gamma_t^2 = theta * sigma^2/(2r) * r_t S_t^2（theta 为最优强度的倍数）

    theta = 0 视为不增强，退化为符号策略。

    Args:
        prices: 形状 (..., T+1) 的训练价格

    Returns:
        np.ndarray: 形状 (..., T) 的无约束仓位
    """
    _check_lambda(lam)
    kind = SchemeKind.parse(kind)
    prices = np.asarray(prices, dtype=float)
    returns = (prices[..., 1:] - prices[..., :-1]) / prices[..., :-1]
    base = prices[..., :-1]

    if kind == SchemeKind.NONE or theta == 0:
        return np.where(returns >= 0, 1.0, -1.0)
    if theta < 0 or not np.isfinite(theta):
        raise InvalidParameter(f"强度必须为非负有限值: {theta}")

    if kind == SchemeKind.ADDITIVE:
        return returns * base ** 2 / (2.0 * lam * theta ** 2)
    if kind == SchemeKind.NAIVE:
        return returns / (2.0 * lam * theta ** 2)

    if model is None or model.sigma == 0:
        raise ZeroVolatility("proposed 方案需要正的模型波动率")
    # r_t S_t^2 约去后只剩 Theta(r_t) r / (lambda sigma^2 theta)
    scale = model.r / (lam * model.sigma ** 2 * theta)
    return np.where(returns >= 0, scale, 0.0)


def fitted_portfolio(kind: Union[str, SchemeKind], theta: float, series: PriceSeries, lam: float,
                     model: Optional[GbmParams] = None,
                     constraint: Union[str, Constraint] = Constraint.UNBOUNDED) -> Portfolio:
    """
    单条训练序列上的闭式拟合组合
    """
    weights = fitted_weights(kind, theta, series.prices, lam, model)
    return Portfolio(apply_constraint(weights, constraint), Constraint(constraint))


StrategyBuilder = Callable[[PriceSeries], np.ndarray]


def make_strategy_builder(name: str, model: GbmParams, lam: float,
                          strength: Optional[float] = None,
                          constraint: Union[str, Constraint] = Constraint.UNBOUNDED) -> StrategyBuilder:
    """
    按名称构造“训练序列 -> 仓位”的规则

    Args:
        name: sign / no-aug / additive / naive / proposed / merton / constant
        model: 构造最优强度时使用的模型参数
        lam: 风险厌恶系数
        strength: 给出时使用固定强度（constant 规则为常数仓位）
        constraint: 仓位约束

    Returns:
        StrategyBuilder: 可调用对象
    """
    _check_lambda(lam)
    key = name.strip().lower()

    if key in ('sign', 'no-aug', 'none'):
        return lambda series: sign_strategy(compute_returns(series), constraint).weights

    if key == 'merton':
        value = merton_stationary(model, lam, constraint)
        return lambda series: np.full(len(series) - 1, value)

    if key == 'constant':
        if strength is None:
            raise InvalidParameter("constant 规则需要给出仓位")
        value = float(apply_constraint(strength, constraint))
        return lambda series: np.full(len(series) - 1, value)

    kind = SchemeKind.parse(key)
    if strength is not None:
        return lambda series: fitted_portfolio(kind, strength, series, lam, model, constraint).weights

    def build(series: PriceSeries) -> np.ndarray:
        best = optimal_strength(kind, series, model)
        if kind == SchemeKind.PROPOSED:
            gamma = best
        elif best is UNBOUNDED:
            gamma = UNBOUNDED
        else:
            gamma = gamma_squared(kind, best, series)
        return augmented_closed_form(compute_returns(series), series, lam, gamma, constraint).weights

    return build

