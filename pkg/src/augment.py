# -*- coding: utf-8 -*-
"""
噪声注入数据增强模块

包含价格空间与收益空间的增强方案、滚动波动率估计、|r| 平滑，以及各方案的闭式最优强度。
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from src.dataio import PriceSeries, ReturnSeries, compute_returns
from src.errors import (
    DimensionMismatch, InvalidParameter, LengthMismatch, NotPSD,
    WindowTooLarge, ZeroDrift
)
from src.procgen import GbmParams
from src.rng import NoiseSource

logger = logging.getLogger(__name__)


class SchemeKind(str, Enum):
    """
    增强方案类型
    """
    NONE = 'none'
    ADDITIVE = 'additive'
    NAIVE = 'naive-multiplicative'
    PROPOSED = 'proposed-multiplicative'

    @classmethod
    def parse(cls, name: Union[str, 'SchemeKind']) -> 'SchemeKind':
        if isinstance(name, cls):
            return name
        aliases = {'naive': cls.NAIVE, 'proposed': cls.PROPOSED, 'no-aug': cls.NONE}
        key = str(name).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise InvalidParameter(f"未知增强方案: {name}")


class Unbounded(Enum):
    """
    理论上无穷大的增强强度（对应零仓位），只出现在理论验证路径
    """
    UNBOUNDED = 'unbounded'


UNBOUNDED = Unbounded.UNBOUNDED


@dataclass(frozen=True)
class AugmentationScheme:
    """
    增强方案

    Args:
        kind: 方案类型
        strength: additive 为 rho（价格单位），naive 为 rho0，proposed 为 c
        noise: 噪声源
        tau: proposed 方案中 |r| 的平滑窗口，1 表示直接使用 |r_i|
        fold_volatility: 为 True 时把 sigma_hat 并入 c，不再单独乘以波动率
    """
    kind: SchemeKind = SchemeKind.NONE
    strength: float = 0.0
    noise: NoiseSource = field(default_factory=NoiseSource)
    tau: int = 1
    fold_volatility: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'kind', SchemeKind.parse(self.kind))
        if not np.isfinite(self.strength) or self.strength < 0:
            raise InvalidParameter(f"增强强度必须为非负有限值: {self.strength}")
        if int(self.tau) < 1:
            raise InvalidParameter(f"tau 必须 >= 1: {self.tau}")

    def describe(self) -> Dict[str, Any]:
        return {
            'kind': self.kind.value,
            'strength': float(self.strength),
            'tau': int(self.tau),
            'fold_volatility': bool(self.fold_volatility),
            'seed': self.noise.seed,
            'distribution': self.noise.distribution,
        }


@dataclass(frozen=True)
class VolEstimate:
    """
    每个收益下标上的波动率估计 sigma_hat
    """
    sigma_hat: np.ndarray
    window: int

    def __len__(self) -> int:
        return self.sigma_hat.size


@dataclass(frozen=True)
class StrengthProfile:
    """
    proposed 方案的逐步最优强度

    Args:
        gamma_sq: gamma_t^2，无界位置为 nan；r_t = 0 的位置为 0
        unbounded: 无界位置掩码（r_t < 0）
        raw: 不截断的带符号值 sigma^2/(2r) * r_t S_t^2，供平稳组合理论使用
        factor: 系数 sigma^2/(2r)；r_t = 0 处的仓位取极限 1 / (2 lambda factor)
    """
    gamma_sq: np.ndarray
    unbounded: np.ndarray
    raw: np.ndarray
    factor: float

    def scaled(self, factor: float) -> 'StrengthProfile':
        return StrengthProfile(self.gamma_sq * factor, self.unbounded, self.raw * factor, self.factor * factor)


def _abs_returns(returns: Union[ReturnSeries, np.ndarray]) -> np.ndarray:
    values = returns.returns if isinstance(returns, ReturnSeries) else np.asarray(returns, dtype=float)
    return np.abs(values)


def estimate_volatility(returns: ReturnSeries, window: int = 20) -> VolEstimate:
    """
    滚动样本标准差估计波动率

    Args:
        returns: 收益序列
        window: 回看窗口（>= 2）

    Returns:
        VolEstimate: sigma_hat[t] 为以 t 结尾的窗口样本标准差，前 window-1 个位置用第一个可计算值回填
    """
    if window < 2:
        raise InvalidParameter(f"波动率窗口必须 >= 2: {window}")
    values = returns.returns if isinstance(returns, ReturnSeries) else np.asarray(returns, dtype=float)
    if values.size < window:
        raise WindowTooLarge(window, values.size)

    rolling = sliding_window_view(values, window).std(axis=1, ddof=1)
    sigma_hat = np.concatenate((np.full(window - 1, rolling[0]), rolling))
    return VolEstimate(sigma_hat=sigma_hat, window=window)


def smooth_abs_returns(returns: Union[ReturnSeries, np.ndarray], tau: int = 20) -> np.ndarray:
    """
    |r| 的截断滑动平均：|r_hat_t| = mean(|r_{t-tau+1}|, ..., |r_t|)，t < tau-1 时对已有元素取平均
    """
    if tau < 1:
        raise InvalidParameter(f"tau 必须 >= 1: {tau}")
    magnitude = _abs_returns(returns)
    if tau == 1:
        return magnitude.copy()

    padded = np.concatenate((np.zeros(tau - 1), magnitude))
    sums = sliding_window_view(padded, tau).sum(axis=1)
    counts = np.minimum(np.arange(1, magnitude.size + 1), tau)
    return sums / counts


def _price_aligned(values: np.ndarray, n_prices: int) -> np.ndarray:
    """
    把收益下标上的量对齐到价格下标：价格 i 使用 r_i，最后一个价格复用最后一个收益
    """
    index = np.minimum(np.arange(n_prices), values.size - 1)
    return values[index]


def perturbation_scale(series: PriceSeries, scheme: AugmentationScheme,
                       vol: Optional[VolEstimate] = None) -> np.ndarray:
    """
    每个价格点的噪声标准差

    Args:
        series: 原始价格
        scheme: 增强方案
        vol: 波动率估计（proposed 且未并入 c 时必需）

    Returns:
        np.ndarray: 与价格等长的噪声尺度
    """
    prices = series.prices
    kind = scheme.kind

    if kind == SchemeKind.NONE or scheme.strength == 0:
        return np.zeros_like(prices)
    if kind == SchemeKind.ADDITIVE:
        return np.full_like(prices, scheme.strength)
    if kind == SchemeKind.NAIVE:
        return scheme.strength * prices

    returns = compute_returns(series)
    magnitude = smooth_abs_returns(returns, scheme.tau)
    if scheme.fold_volatility:
        variance = magnitude
    else:
        if vol is None:
            raise InvalidParameter("proposed 方案需要波动率估计")
        if len(vol) < len(returns):
            raise LengthMismatch(f"波动率长度 {len(vol)} 小于收益长度 {len(returns)}")
        variance = vol.sigma_hat[:len(returns)] ** 2 * magnitude
    return scheme.strength * np.sqrt(_price_aligned(variance, prices.size)) * prices


def augment_prices(series: PriceSeries, scheme: AugmentationScheme,
                   vol: Optional[VolEstimate] = None,
                   rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    价格空间增强：S_i -> S_i + scale_i * eps_i

    增强后的价格允许穿越 0，因此返回原始数组而不是 PriceSeries。

    Args:
        series: 原始价格
        scheme: 增强方案
        vol: 波动率估计
        rng: 指定生成器；None 时使用方案噪声源的顺序流，每次调用产生新的噪声

    Returns:
        np.ndarray: 增强后的价格
    """
    if scheme.kind == SchemeKind.NONE:
        return series.prices.copy()
    scale = perturbation_scale(series, scheme, vol)
    eps = scheme.noise.sample(scale.size, rng)
    return series.prices + scale * eps


def noisified_return(z_next, z_t, s_t):
    """
    加噪收益 (z_{t+1} - z_t) / S_t，分母使用原始价格
    """
    s_t = np.asarray(s_t, dtype=float)
    if np.any(~(s_t > 0)):
        raise InvalidParameter("分母价格必须为正")
    result = (np.asarray(z_next, dtype=float) - np.asarray(z_t, dtype=float)) / s_t
    return float(result) if result.ndim == 0 else result


def noisified_returns(augmented: np.ndarray, series: PriceSeries) -> np.ndarray:
    """
    整条增强价格序列对应的加噪收益
    """
    augmented = np.asarray(augmented, dtype=float)
    if augmented.shape[-1] != len(series):
        raise LengthMismatch(f"增强价格长度 {augmented.shape[-1]} 与原始长度 {len(series)} 不一致")
    return noisified_return(augmented[..., 1:], augmented[..., :-1], series.prices[:-1])


def augment_returns(inputs: np.ndarray, target, c: float, sigma_hat,
                    noise: NoiseSource, rng: Optional[np.random.Generator] = None):
    """
    收益空间增强：r_i -> r_i + c * sqrt(sigma_hat_i^2 |r_i|) * eps_i

    目标收益使用最后一个输入收益的尺度。支持批量输入（最后一维为窗口）。

    Args:
        inputs: 输入收益窗口，形状 (..., L)
        target: 目标收益，形状 (...)
        c: 增强强度
        sigma_hat: 与输入对齐的波动率（标量或可广播数组）
        noise: 噪声源
        rng: 指定生成器

    Returns:
        Tuple[np.ndarray, np.ndarray]: 扰动后的输入与目标
    """
    inputs = np.asarray(inputs, dtype=float)
    target = np.asarray(target, dtype=float)
    if c < 0:
        raise InvalidParameter(f"增强强度必须非负: {c}")
    if c == 0:
        return inputs.copy(), target.copy()

    sigma_hat = np.broadcast_to(np.asarray(sigma_hat, dtype=float), inputs.shape)
    input_scale = c * np.sqrt(sigma_hat ** 2 * np.abs(inputs))
    target_scale = input_scale[..., -1]

    eps = noise.sample(inputs.shape, rng)
    eps_target = noise.sample(target.shape, rng)
    return inputs + input_scale * eps, target + target_scale * eps_target


def _split(series: PriceSeries, model: GbmParams):
    if model.r == 0:
        raise ZeroDrift()
    if model.r < 0:
        raise InvalidParameter(f"最优强度公式要求 r > 0: {model.r}")
    returns = compute_returns(series).returns
    return returns, series.prices[:-1]


def optimal_strength(kind: Union[str, SchemeKind], series: PriceSeries, model: GbmParams):
    """
    闭式最优增强强度

    - additive: rho*^2 = sigma^2/(2r) * sum((r_t S_t^2)^2) / sum(r_t S_t^2)，分母 <= 0 时无界
    - naive: rho0*^2 = sigma^2/(2r) * sum(r_t^2) / sum(r_t)，分母 <= 0 时无界
    - proposed: gamma_t^2 = sigma^2/(2r) * r_t S_t^2，r_t < 0 的位置无界

    Args:
        kind: 方案类型
        series: 训练价格序列
        model: GBM 参数

    Returns:
        additive/naive 返回强度 rho 或 UNBOUNDED；proposed 返回 StrengthProfile
    """
    kind = SchemeKind.parse(kind)
    returns, prices = _split(series, model)
    factor = model.sigma ** 2 / (2.0 * model.r)

    if kind == SchemeKind.ADDITIVE:
        weighted = returns * prices ** 2
        denominator = weighted.sum()
        if denominator <= 0:
            return UNBOUNDED
        return float(np.sqrt(factor * np.sum(weighted ** 2) / denominator))

    if kind == SchemeKind.NAIVE:
        denominator = returns.sum()
        if denominator <= 0:
            return UNBOUNDED
        return float(np.sqrt(factor * np.sum(returns ** 2) / denominator))

    if kind == SchemeKind.PROPOSED:
        raw = factor * returns * prices ** 2
        unbounded = returns < 0
        gamma_sq = np.where(unbounded, np.nan, raw)
        return StrengthProfile(gamma_sq=gamma_sq, unbounded=unbounded, raw=raw, factor=factor)

    raise InvalidParameter("none 方案没有增强强度")


def gamma_squared(kind: Union[str, SchemeKind], strength, series: PriceSeries) -> np.ndarray:
    """
    方案对应的逐步价格噪声方差 gamma_t^2（additive: rho^2；naive: rho0^2 S_t^2）

    strength 为 UNBOUNDED 时返回全 inf；proposed 需直接传入 StrengthProfile
    """
    kind = SchemeKind.parse(kind)
    prices = series.prices[:-1]
    if isinstance(strength, StrengthProfile):
        return np.where(strength.unbounded, np.inf, strength.gamma_sq)
    if strength is UNBOUNDED:
        return np.full_like(prices, np.inf)
    if kind == SchemeKind.ADDITIVE:
        return np.full_like(prices, float(strength) ** 2)
    if kind == SchemeKind.NAIVE:
        return float(strength) ** 2 * prices ** 2
    raise InvalidParameter(f"{kind.value} 方案需要 StrengthProfile")


def return_noise_variance(series: PriceSeries, scheme: AugmentationScheme,
                          vol: Optional[VolEstimate] = None) -> np.ndarray:
    """
    价格噪声差分后在收益上的方差 (v_t + v_{t+1}) / S_t^2
    """
    variance = perturbation_scale(series, scheme, vol) ** 2
    return (variance[:-1] + variance[1:]) / series.prices[:-1] ** 2


def calibrate_strength(series: PriceSeries, kind: Union[str, SchemeKind], target_variance: float,
                       vol: Optional[VolEstimate] = None, tau: int = 1) -> float:
    """
    求使收益噪声平均方差等于 target_variance 的强度，用于不同方案在相同总体噪声下比较
    """
    kind = SchemeKind.parse(kind)
    unit = AugmentationScheme(kind=kind, strength=1.0, tau=tau)
    mean_unit = return_noise_variance(series, unit, vol).mean()
    if not mean_unit > 0:
        raise InvalidParameter(f"{kind.value} 方案在该序列上的噪声方差为 0，无法校准")
    return float(np.sqrt(target_variance / mean_unit))


def abs_return_autocorr(returns, lag: int = 1) -> float:
    """
    |收益| 的滞后自相关
    """
    return float(pd.Series(_abs_returns(returns)).autocorr(lag))


def clustering_diagnostic(series: PriceSeries, noise: NoiseSource, index: int = 0,
                          vol_window: int = 20, noise_ratio: float = 0.25) -> Dict[str, Any]:
    """
    波动率聚集诊断：比较原始、additive、proposed 三者 |收益| 的一阶自相关

    两个方案校准到相同的平均收益噪声方差（noise_ratio * Var(r)），并共用同一组 eps。

    Returns:
        Dict[str, Any]: 各自相关系数与 proposed 是否更接近原始值
    """
    returns = compute_returns(series)
    vol = estimate_volatility(returns, vol_window)
    target = noise_ratio * float(np.var(returns.returns))
    eps = noise.sample(len(series), noise.generator('clustering', index))

    result = {'raw': abs_return_autocorr(returns)}
    for kind in (SchemeKind.ADDITIVE, SchemeKind.PROPOSED):
        strength = calibrate_strength(series, kind, target, vol)
        scheme = AugmentationScheme(kind=kind, strength=strength, noise=noise)
        augmented = series.prices + perturbation_scale(series, scheme, vol) * eps
        result[kind.value] = abs_return_autocorr(noisified_returns(augmented, series))

    result['proposed_closer'] = bool(
        abs(result[SchemeKind.PROPOSED.value] - result['raw'])
        < abs(result[SchemeKind.ADDITIVE.value] - result['raw'])
    )
    return result


def audit_perturbation(series: PriceSeries, scheme: AugmentationScheme,
                       vol: Optional[VolEstimate] = None, n_draws: int = 2000,
                       rng: Optional[np.random.Generator] = None) -> Dict[str, Any]:
    """
    噪声方差审计：逐点比较经验方差与方案规定的方差

    Returns:
        Dict[str, Any]: 均值偏差、方差相对误差等汇总量
    """
    if n_draws < 2:
        raise InvalidParameter(f"审计抽样次数必须 >= 2: {n_draws}")
    scale = perturbation_scale(series, scheme, vol)
    eps = scheme.noise.sample((n_draws, scale.size), rng or scheme.noise.generator('audit'))
    perturbation = scale * eps

    prescribed = scale ** 2
    empirical = perturbation.var(axis=0, ddof=1)
    mean_bias = perturbation.mean(axis=0)
    mean_se = np.sqrt(prescribed / n_draws)
    active = prescribed > 0
    relative = np.abs(empirical[active] / prescribed[active] - 1.0) if active.any() else np.zeros(0)

    return {
        'n_draws': int(n_draws),
        'mean_prescribed_variance': float(prescribed.mean()),
        'mean_empirical_variance': float(empirical.mean()),
        'max_relative_variance_error': float(relative.max()) if relative.size else 0.0,
        'max_mean_bias_in_se': float(np.max(np.abs(mean_bias[active]) / mean_se[active])) if active.any() else 0.0,
    }


def _check_psd(sigma: np.ndarray):
    if not np.allclose(sigma, sigma.T, rtol=1e-10, atol=1e-14):
        raise NotPSD("协方差矩阵不对称")
    eigenvalues = np.linalg.eigvalsh(sigma)
    tolerance = 1e-12 * max(1.0, float(np.abs(eigenvalues).max()))
    if eigenvalues.min() < -tolerance:
        raise NotPSD(f"协方差矩阵不是半正定的，最小特征值 {eigenvalues.min():.3e}")


def multi_asset_scale(prices, returns, sigma, c: float) -> np.ndarray:
    """
    多资产噪声尺度 c * sqrt(sum_j Sigma_ij |r_j| S_j^2)
    """
    prices = np.asarray(prices, dtype=float)
    returns = np.asarray(returns, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    n = prices.size
    if returns.shape != (n,) or sigma.shape != (n, n):
        raise DimensionMismatch(
            f"维度不一致: prices {prices.shape}, returns {returns.shape}, Sigma {sigma.shape}"
        )
    _check_psd(sigma)

    argument = sigma @ (np.abs(returns) * prices ** 2)
    if np.any(argument < 0):
        logger.warning(f"多资产噪声方差出现负值 {argument.min():.3e}，截断为 0")
        argument = np.maximum(argument, 0.0)
    return c * np.sqrt(argument)


def multi_asset_noise(prices, returns, sigma, c: float, noise: NoiseSource,
                      rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    多资产价格扰动（每个资产独立的 eps）
    """
    scale = multi_asset_scale(prices, returns, sigma, c)
    return np.asarray(prices, dtype=float) + scale * noise.sample(scale.size, rng)
