# -*- coding: utf-8 -*-
"""
价格过程模拟模块（GBM、Heston、两状态波动率切换）
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.dataio import PriceSeries
from src.errors import InvalidParameter, NonPositivePriceGenerated
from src.rng import NoiseSource

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GbmParams:
    """
    离散 GBM 参数：S_{t+1} = (1 + r) S_t + sigma S_t eta_t
    """
    s0: float = 1.0
    r: float = 0.005
    sigma: float = 0.01

    def __post_init__(self):
        if not np.isfinite(self.s0) or self.s0 <= 0:
            raise InvalidParameter(f"s0 必须为正: {self.s0}")
        if not np.isfinite(self.r):
            raise InvalidParameter(f"r 必须为有限值: {self.r}")
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise InvalidParameter(f"sigma 必须非负: {self.sigma}")


@dataclass(frozen=True)
class HestonParams:
    """
    Heston 随机波动率参数，xi 缺省 0.1，dt 缺省 1（离散时间设定）
    """
    s0: float = 1.0
    r: float = 0.005
    nu0: float = 1e-4
    kappa: float = 0.25
    theta: float = 1e-4
    xi: float = 0.1
    rho: float = 0.0
    dt: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.s0) or self.s0 <= 0:
            raise InvalidParameter(f"s0 必须为正: {self.s0}")
        for name in ('nu0', 'kappa', 'theta', 'xi'):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise InvalidParameter(f"{name} 必须非负: {value}")
        if not -1.0 <= self.rho <= 1.0:
            raise InvalidParameter(f"rho 必须在 [-1, 1] 内: {self.rho}")
        if not self.dt > 0:
            raise InvalidParameter(f"dt 必须为正: {self.dt}")


@dataclass(frozen=True)
class RegimeParams:
    """
    两状态马尔可夫切换波动率的 GBM 参数，用于波动率聚集诊断
    """
    s0: float = 1.0
    r: float = 0.0005
    sigma_low: float = 0.005
    sigma_high: float = 0.03
    switch_prob: float = 0.02

    def __post_init__(self):
        if self.s0 <= 0:
            raise InvalidParameter(f"s0 必须为正: {self.s0}")
        if self.sigma_low < 0 or self.sigma_high < 0:
            raise InvalidParameter("波动率必须非负")
        if not 0.0 <= self.switch_prob <= 1.0:
            raise InvalidParameter(f"切换概率必须在 [0, 1] 内: {self.switch_prob}")


def _check_steps(T: int):
    if int(T) < 1:
        raise InvalidParameter(f"步数 T 必须 >= 1: {T}")


def _check_positive(column: np.ndarray, step: int, first_index: int = 0):
    bad = np.flatnonzero(~(column > 0))
    if bad.size:
        raise NonPositivePriceGenerated(step, first_index + int(bad[0]))


def _gbm_recursion(params: GbmParams, eta: np.ndarray, first_index: int = 0) -> np.ndarray:
    """
    对形状 (n, T) 的噪声按行执行 GBM 递推，返回 (n, T+1) 价格
    """
    n_paths, T = eta.shape
    paths = np.empty((n_paths, T + 1))
    paths[:, 0] = params.s0
    r, sigma = params.r, params.sigma
    for t in range(T):
        s = paths[:, t]
        paths[:, t + 1] = s + r * s + sigma * s * eta[:, t]
        _check_positive(paths[:, t + 1], t + 1, first_index)
    return paths


def simulate_gbm(params: GbmParams, T: int, noise: NoiseSource, index: int = 0) -> PriceSeries:
    """
    模拟一条 GBM 轨迹

    Args:
        params: GBM 参数
        T: 步数，输出长度 T+1
        noise: 噪声源
        index: 轨迹编号，决定使用的子流

    Returns:
        PriceSeries: 价格序列
    """
    _check_steps(T)
    eta = noise.sample(int(T), noise.generator(index))
    path = _gbm_recursion(params, eta[np.newaxis, :], first_index=index)[0]
    return PriceSeries(path, label=f"gbm-{noise.seed}-{index}")


def simulate_gbm_batch(params: GbmParams, T: int, n_paths: int, noise: NoiseSource,
                       start: int = 0) -> np.ndarray:
    """
    批量模拟 GBM，第 i 行与 simulate_gbm(index=start+i) 逐位一致

    Returns:
        np.ndarray: 形状 (n_paths, T+1)
    """
    _check_steps(T)
    eta = np.stack([noise.sample(int(T), noise.generator(start + i)) for i in range(n_paths)])
    return _gbm_recursion(params, eta, first_index=start)


def _heston_recursion(params: HestonParams, z_price: np.ndarray, z_var: np.ndarray,
                      first_index: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    n_paths, T = z_price.shape
    prices = np.empty((n_paths, T + 1))
    variances = np.empty((n_paths, T + 1))
    prices[:, 0] = params.s0
    variances[:, 0] = params.nu0

    dt = params.dt
    sqrt_dt = np.sqrt(dt)
    for t in range(T):
        s = prices[:, t]
        nu = variances[:, t]
        # 截断只作用在平方根与漂移项中，方差路径本身保留原值
        nu_pos = np.maximum(nu, 0.0)
        vol = np.sqrt(nu_pos)
        dw = sqrt_dt * z_price[:, t]
        prices[:, t + 1] = s + params.r * s * dt + vol * s * dw
        variances[:, t + 1] = (nu + params.kappa * (params.theta - nu_pos) * dt
                               + params.xi * vol * sqrt_dt * z_var[:, t])
        _check_positive(prices[:, t + 1], t + 1, first_index)
    return prices, variances


def _heston_draws(params: HestonParams, T: int, noise: NoiseSource,
                  index: int) -> Tuple[np.ndarray, np.ndarray]:
    rng = noise.generator(index)
    # 价格冲击先抽取，保证 kappa=xi=0 时与 GBM 消耗相同的噪声
    z1 = noise.sample(T, rng)
    z2 = noise.sample(T, rng)
    z_var = params.rho * z1 + np.sqrt(1.0 - params.rho ** 2) * z2
    return z1, z_var


def simulate_heston(params: HestonParams, T: int, noise: NoiseSource,
                    index: int = 0) -> Tuple[PriceSeries, np.ndarray]:
    """
    全截断 Euler 离散的 Heston 模拟

    Args:
        params: Heston 参数
        T: 步数
        noise: 噪声源
        index: 轨迹编号

    Returns:
        Tuple[PriceSeries, np.ndarray]: 价格序列与方差路径（均为 T+1 长）
    """
    _check_steps(T)
    z1, z_var = _heston_draws(params, int(T), noise, index)
    prices, variances = _heston_recursion(params, z1[np.newaxis, :], z_var[np.newaxis, :], index)
    return PriceSeries(prices[0], label=f"heston-{noise.seed}-{index}"), variances[0]


def simulate_heston_batch(params: HestonParams, T: int, n_paths: int, noise: NoiseSource,
                          start: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    批量 Heston 模拟，返回 (n_paths, T+1) 的价格与方差
    """
    _check_steps(T)
    draws = [_heston_draws(params, int(T), noise, start + i) for i in range(n_paths)]
    z1 = np.stack([d[0] for d in draws])
    z_var = np.stack([d[1] for d in draws])
    return _heston_recursion(params, z1, z_var, start)


def simulate_regime_switching(params: RegimeParams, T: int, noise: NoiseSource,
                              index: int = 0) -> Tuple[PriceSeries, np.ndarray]:
    """
    两状态波动率切换的 GBM，产生带波动率聚集的合成序列

    Returns:
        Tuple[PriceSeries, np.ndarray]: 价格序列与每步所处状态（0 低波动，1 高波动）
    """
    _check_steps(T)
    T = int(T)
    rng = noise.generator(index)
    eta = noise.sample(T, rng)
    flips = rng.random(T) < params.switch_prob

    regimes = np.empty(T, dtype=int)
    state = int(rng.random() < 0.5)
    for t in range(T):
        if flips[t]:
            state = 1 - state
        regimes[t] = state

    sigmas = np.where(regimes == 1, params.sigma_high, params.sigma_low)
    path = np.empty(T + 1)
    path[0] = params.s0
    for t in range(T):
        s = path[t]
        path[t + 1] = s + params.r * s + sigmas[t] * s * eta[t]
        if not path[t + 1] > 0:
            raise NonPositivePriceGenerated(t + 1, index)

    logger.debug(f"切换模型轨迹 {index}: 高波动占比 {regimes.mean():.3f}")
    return PriceSeries(path, label=f"regime-{noise.seed}-{index}"), regimes
