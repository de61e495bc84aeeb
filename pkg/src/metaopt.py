# -*- coding: utf-8 -*-
"""
增强参数搜索模块

在网格上寻找使期望真实效用 V(pi_hat(theta)) 最大的增强强度 theta，
并提供贝叶斯先验平均与极小极大两种变体。所有 theta 点共用同一组训练集（共同随机数）。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from config.config import PARALLEL_CONFIG
from src.augment import SchemeKind
from src.errors import InvalidParameter
from src.portfolio import fitted_weights
from src.procgen import GbmParams, simulate_gbm_batch
from src.rng import NoiseSource

logger = logging.getLogger(__name__)

Evaluator = Callable[[float, GbmParams], Union[float, Tuple[float, float]]]


@dataclass(frozen=True)
class ThetaGrid:
    """
    候选增强强度网格
    """
    values: np.ndarray
    kind: SchemeKind = SchemeKind.ADDITIVE

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size == 0:
            raise InvalidParameter("theta 网格不能为空")
        if np.any(~np.isfinite(values)) or np.any(values < 0):
            raise InvalidParameter("theta 网格必须为非负有限值")
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'kind', SchemeKind.parse(self.kind))

    @classmethod
    def linspace(cls, low: float, high: float, num: int, kind=SchemeKind.ADDITIVE) -> 'ThetaGrid':
        return cls(np.linspace(low, high, num), kind)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class OmegaPrior:
    """
    模型参数 (r, sigma) 上的有限支撑先验
    """
    support: Tuple[GbmParams, ...]
    weights: np.ndarray

    def __post_init__(self):
        support = tuple(self.support)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if len(support) == 0 or weights.size != len(support):
            raise InvalidParameter("先验支撑与权重数量不一致或为空")
        if np.any(weights < 0):
            raise InvalidParameter("先验权重必须非负")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidParameter(f"先验权重之和必须为 1，实际为 {weights.sum()}")
        object.__setattr__(self, 'support', support)
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def uniform(cls, support: Sequence[GbmParams]) -> 'OmegaPrior':
        return cls(tuple(support), np.full(len(support), 1.0 / len(support)))


@dataclass(frozen=True)
class ThetaSearchResult:
    """
    搜索结果：最优 theta、对应的 V、完整曲线与标准误
    """
    theta: float
    value: float
    curve: np.ndarray
    se: np.ndarray
    grid: np.ndarray

    def rows(self):
        return [(float(t), float(v), float(s)) for t, v, s in zip(self.grid, self.curve, self.se)]


def _argmax_smallest(values: np.ndarray, thetas: np.ndarray) -> int:
    """
    最大值对应的下标；并列时取 theta 最小者
    """
    best = np.max(values)
    candidates = np.flatnonzero(values == best)
    return int(candidates[np.argmin(thetas[candidates])])


def _training_paths(model: GbmParams, T: int, n_train_sets: int, seed: int) -> np.ndarray:
    # 不同 Omega 共用同一组噪声，只改变 (r, sigma)
    return simulate_gbm_batch(model, T, n_train_sets, NoiseSource(seed).child('train'))


def _curve_on_paths(grid: ThetaGrid, paths: np.ndarray, model: GbmParams, lam: float,
                    max_workers: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    def evaluate(theta: float) -> Tuple[float, float]:
        weights = fitted_weights(grid.kind, theta, paths, lam, model)
        values = model.r * weights.mean(axis=-1) - 0.5 * lam * model.sigma ** 2 * np.mean(weights ** 2, axis=-1)
        se = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
        return float(values.mean()), se

    workers = max_workers or PARALLEL_CONFIG['max_workers']
    with ThreadPoolExecutor(max_workers=workers) as executor:
        results = list(executor.map(evaluate, grid.values))
    return np.array([r[0] for r in results]), np.array([r[1] for r in results])


def value_matrix(grid: ThetaGrid, omegas: Sequence[GbmParams], lam: float, T: int = 400,
                 n_train_sets: int = 500, seed: int = 0, evaluator: Optional[Evaluator] = None,
                 training_paths: Optional[np.ndarray] = None,
                 max_workers: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    计算 theta x Omega 的 V 矩阵

    Args:
        grid: theta 网格
        omegas: 模型参数集合
        lam: 风险厌恶系数
        T: 训练集步数
        n_train_sets: 训练集数量
        seed: 根种子（所有 theta 与 Omega 共用）
        evaluator: 自定义评估函数 f(theta, omega) -> value 或 (value, se)
        training_paths: 固定的训练价格 (n, T+1)，给出时不再模拟

    Returns:
        Tuple[np.ndarray, np.ndarray]: V 与标准误，形状均为 (len(grid), len(omegas))
    """
    if len(omegas) == 0:
        raise InvalidParameter("Omega 集合不能为空")
    if not lam > 0:
        raise InvalidParameter(f"风险厌恶系数必须为正: {lam}")

    values = np.empty((len(grid), len(omegas)))
    errors = np.zeros_like(values)

    for column, omega in enumerate(omegas):
        if evaluator is not None:
            for row, theta in enumerate(grid.values):
                result = evaluator(float(theta), omega)
                if isinstance(result, tuple):
                    values[row, column], errors[row, column] = result
                else:
                    values[row, column] = result
            continue

        if training_paths is not None:
            paths = np.atleast_2d(np.asarray(training_paths, dtype=float))
        else:
            paths = _training_paths(omega, T, n_train_sets, seed)
        values[:, column], errors[:, column] = _curve_on_paths(grid, paths, omega, lam, max_workers)
        logger.debug(f"Omega=(r={omega.r}, sigma={omega.sigma}) 的 V 曲线计算完成")

    return values, errors


def _result(grid: ThetaGrid, curve: np.ndarray, se: np.ndarray) -> ThetaSearchResult:
    index = _argmax_smallest(curve, grid.values)
    return ThetaSearchResult(theta=float(grid.values[index]), value=float(curve[index]),
                             curve=curve, se=se, grid=grid.values)


def best_theta(grid: ThetaGrid, model: GbmParams, lam: float, T: int = 400,
               n_train_sets: int = 500, seed: int = 0, evaluator: Optional[Evaluator] = None,
               training_paths: Optional[np.ndarray] = None,
               max_workers: Optional[int] = None) -> ThetaSearchResult:
    """
    theta* = argmax_theta V(pi_hat(theta))，并列时取较小的 theta
    """
    values, errors = value_matrix(grid, [model], lam, T, n_train_sets, seed, evaluator,
                                  training_paths, max_workers)
    result = _result(grid, values[:, 0], errors[:, 0])
    logger.info(f"最优 theta={result.theta:.4g}，V={result.value:.6e}")
    return result


def bayes_theta(grid: ThetaGrid, prior: OmegaPrior, lam: float, T: int = 400,
                n_train_sets: int = 500, seed: int = 0, evaluator: Optional[Evaluator] = None,
                max_workers: Optional[int] = None) -> ThetaSearchResult:
    """
    先验加权平均 V 的最大化；零权重的支撑点不参与计算
    """
    keep = prior.weights > 0
    support = [omega for omega, flag in zip(prior.support, keep) if flag]
    weights = prior.weights[keep]

    values, errors = value_matrix(grid, support, lam, T, n_train_sets, seed, evaluator,
                                  max_workers=max_workers)
    curve = values @ weights
    se = np.sqrt((errors ** 2) @ (weights ** 2))
    return _result(grid, curve, se)


def minimax_theta(grid: ThetaGrid, omegas: Sequence[GbmParams], lam: float, T: int = 400,
                  n_train_sets: int = 500, seed: int = 0, evaluator: Optional[Evaluator] = None,
                  max_workers: Optional[int] = None) -> ThetaSearchResult:
    """
    theta* = argmax_theta min_Omega V
    """
    values, errors = value_matrix(grid, omegas, lam, T, n_train_sets, seed, evaluator,
                                  max_workers=max_workers)
    worst = np.argmin(values, axis=1)
    rows = np.arange(len(grid))
    return _result(grid, values[rows, worst], errors[rows, worst])
