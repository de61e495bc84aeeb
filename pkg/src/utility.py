# -*- coding: utf-8 -*-
"""
效用评估模块

- 经验（训练）效用：在增强分布下估计每步财富收益的均值与方差
- 真实效用闭式解：无增强、additive、proposed 三种策略
- 蒙特卡洛真实效用：对训练集抽样，用 GBM 下精确的内层公式评估
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.special import ndtr
from tqdm import tqdm

from config.config import PARALLEL_CONFIG
from src.augment import AugmentationScheme, SchemeKind, VolEstimate, augment_prices, noisified_returns
from src.dataio import PriceSeries, compute_returns
from src.errors import InvalidParameter, LengthMismatch, ZeroVolatility
from src.portfolio import Portfolio
from src.procgen import GbmParams, simulate_gbm_batch
from src.rng import NoiseSource

logger = logging.getLogger(__name__)

StrategyBuilder = Callable[[PriceSeries], np.ndarray]

# 每个并行任务一次模拟的训练集数量
CHUNK_SIZE = 100


@dataclass(frozen=True)
class UtilityReport:
    """
    效用值及其分解：value = gain_term - risk_term；se 仅蒙特卡洛估计时非零
    """
    value: float
    gain_term: float
    risk_term: float
    se: float = 0.0

    @classmethod
    def from_terms(cls, gain_term: float, risk_term: float, se: float = 0.0) -> 'UtilityReport':
        gain_term = float(gain_term)
        risk_term = float(risk_term)
        return cls(value=gain_term - risk_term, gain_term=gain_term, risk_term=risk_term, se=float(se))

    def to_dict(self) -> Dict[str, float]:
        return {'value': self.value, 'gain_term': self.gain_term,
                'risk_term': self.risk_term, 'se': self.se}


def _standard_error(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / np.sqrt(values.size))


def augmented_return_draws(series: PriceSeries, scheme: AugmentationScheme, n_draws: int,
                           vol: Optional[VolEstimate] = None,
                           rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    抽取 n_draws 条增强价格并转换为加噪收益

    Returns:
        np.ndarray: 形状 (n_draws, T) 的加噪收益
    """
    rng = rng or scheme.noise.generator('utility')
    augmented = np.stack([augment_prices(series, scheme, vol, rng) for _ in range(n_draws)])
    return noisified_returns(augmented, series)


def empirical_utility(portfolio: Union[Portfolio, np.ndarray], series: PriceSeries,
                      scheme: AugmentationScheme, lam: float, n_draws: int = 100,
                      vol: Optional[VolEstimate] = None,
                      rng: Optional[np.random.Generator] = None) -> UtilityReport:
    """
    训练目标 (1/T) sum_t (E_t[G_t] - lambda Var_t[G_t])，期望与方差在增强分布上估计

    Args:
        portfolio: 逐步仓位
        series: 训练价格
        scheme: 增强方案；none 时方差为 0，直接使用原始收益
        lam: 风险厌恶系数
        n_draws: 每步的增强抽样数（方案非 none 时 >= 2）
        vol: 波动率估计
        rng: 指定生成器

    Returns:
        UtilityReport: 经验效用
    """
    weights = portfolio.weights if isinstance(portfolio, Portfolio) else np.asarray(portfolio, dtype=float)
    returns = compute_returns(series).returns
    if weights.size != returns.size:
        raise LengthMismatch(f"仓位长度 {weights.size} 与收益长度 {returns.size} 不一致")

    if scheme.kind == SchemeKind.NONE:
        return UtilityReport.from_terms(np.mean(weights * returns), 0.0)

    if n_draws < 2:
        raise InvalidParameter(f"增强抽样数必须 >= 2: {n_draws}")

    wealth = weights * augmented_return_draws(series, scheme, n_draws, vol, rng)
    gain = wealth.mean(axis=0).mean()
    risk = lam * wealth.var(axis=0, ddof=1).mean()
    return UtilityReport.from_terms(gain, risk, _standard_error(wealth.mean(axis=1)))


def inner_utility(weights, model: GbmParams, lam: float) -> UtilityReport:
    """
    GBM 下仓位序列的精确内层效用 (r/T) sum(pi) - (lambda sigma^2 / 2T) sum(pi^2)
    """
    weights = np.asarray(weights, dtype=float)
    gain = model.r * weights.mean(axis=-1)
    risk = 0.5 * lam * model.sigma ** 2 * np.mean(weights ** 2, axis=-1)
    if np.ndim(gain) == 0:
        return UtilityReport.from_terms(gain, risk)
    return UtilityReport.from_terms(np.mean(gain), np.mean(risk), _standard_error(gain - risk))


def evaluate_on_test_sets(weights, model: GbmParams, lam: float, n_test_sets: int,
                          rng: np.random.Generator) -> UtilityReport:
    """
    通过抽样测试收益估计内层效用，用于验证精确公式

    每一步独立抽取 n_test_sets 个未来收益 r + sigma * eta，对财富收益求均值和样本方差。
    """
    if n_test_sets < 2:
        raise InvalidParameter(f"测试集数量必须 >= 2: {n_test_sets}")
    weights = np.asarray(weights, dtype=float)
    future = model.r + model.sigma * rng.standard_normal((n_test_sets, weights.size))
    wealth = weights * future
    gain = wealth.mean()
    risk = 0.5 * lam * wealth.var(axis=0, ddof=1).mean()
    return UtilityReport.from_terms(gain, risk, _standard_error(wealth.mean(axis=1)))


def additive_bracket(series: PriceSeries) -> float:
    """
    additive 方案效用中的括号项 (sum r_t S_t^2)^2 / sum (r_t S_t^2)^2 * Theta(sum r_t S_t^2)
    """
    returns = compute_returns(series).returns
    weighted = returns * series.prices[:-1] ** 2
    total = weighted.sum()
    if total <= 0:
        return 0.0
    return float(total ** 2 / np.sum(weighted ** 2))


def _training_noise(seed: int) -> NoiseSource:
    return NoiseSource(seed).child('train')


def per_set_values(builders: Sequence[StrategyBuilder], model: GbmParams, lam: float, T: int,
                   n_train_sets: int, seed: int = 0, n_test_sets: int = 1,
                   exact_inner: bool = True, max_workers: Optional[int] = None,
                   progress: bool = False) -> np.ndarray:
    """
    在共同的训练集上评估多个策略，返回逐训练集的效用

    第 i 个训练集来自根种子的 ('train', i) 子流，结果与并行调度无关。

    Returns:
        np.ndarray: 形状 (n_train_sets, len(builders), 3)，最后一维为 (value, gain, risk)
    """
    if n_train_sets < 1 or n_test_sets < 1:
        raise InvalidParameter("训练集与测试集数量必须 >= 1")
    if not exact_inner and n_test_sets < 2:
        raise InvalidParameter("抽样测试集评估需要 n_test_sets >= 2")

    noise = _training_noise(seed)
    test_noise = NoiseSource(seed).child('test')

    def evaluate_chunk(start: int) -> np.ndarray:
        count = min(CHUNK_SIZE, n_train_sets - start)
        paths = simulate_gbm_batch(model, T, count, noise, start=start)
        out = np.empty((count, len(builders), 3))
        for row in range(count):
            series = PriceSeries(paths[row], label=f"train-{start + row}")
            for column, builder in enumerate(builders):
                weights = builder(series)
                if exact_inner:
                    report = inner_utility(weights, model, lam)
                else:
                    report = evaluate_on_test_sets(weights, model, lam, n_test_sets,
                                                   test_noise.generator(start + row, column))
                out[row, column] = (report.value, report.gain_term, report.risk_term)
        return out

    starts = list(range(0, n_train_sets, CHUNK_SIZE))
    workers = max_workers or PARALLEL_CONFIG['max_workers']
    with ThreadPoolExecutor(max_workers=workers) as executor:
        chunks = executor.map(evaluate_chunk, starts)
        if progress:
            chunks = tqdm(chunks, total=len(starts), desc='训练集', unit='批')
        results: List[np.ndarray] = list(chunks)

    return np.concatenate(results, axis=0)


def _report(values: np.ndarray) -> UtilityReport:
    return UtilityReport.from_terms(values[:, 1].mean(), values[:, 2].mean(), _standard_error(values[:, 0]))


def true_utility_mc(strategy_builder: StrategyBuilder, model: GbmParams, lam: float, T: int = 400,
                    n_train_sets: int = 2000, n_test_sets: int = 1, seed: int = 0,
                    exact_inner: bool = True, max_workers: Optional[int] = None,
                    progress: bool = False) -> UtilityReport:
    """
    蒙特卡洛真实效用：抽样训练集、构造策略、评估样本内反事实效用并平均

    Args:
        strategy_builder: 训练价格 -> 仓位 的规则
        model: GBM 参数
        lam: 风险厌恶系数
        T: 训练集步数
        n_train_sets: 训练集数量
        n_test_sets: exact_inner=False 时每步抽取的测试收益数
        seed: 根种子
        exact_inner: 是否使用精确内层公式

    Returns:
        UtilityReport: 均值与标准误
    """
    values = per_set_values([strategy_builder], model, lam, T, n_train_sets, seed,
                            n_test_sets, exact_inner, max_workers, progress)
    report = _report(values[:, 0])
    logger.info(f"MC 真实效用 {report.value:.6e} ± {report.se:.2e}（{n_train_sets} 个训练集）")
    return report


def true_utility_closed(kind: Union[str, SchemeKind], model: GbmParams, lam: float,
                        series: Optional[PriceSeries] = None, T: int = 400,
                        n_train_sets: int = 2000, seed: int = 0) -> UtilityReport:
    """
    三种策略的真实效用

    - none: [1 - 2 Phi(-r/sigma)] r - lambda sigma^2 / 2
    - proposed: r^2 / (2 lambda sigma^2) * Phi(r/sigma)
    - additive: r^2 / (2 lambda sigma^2 T) * E[括号项]；给出 series 时只在该训练集上精确计算，
      否则对训练集做蒙特卡洛平均（括号项期望没有闭式）

    Returns:
        UtilityReport: additive 的蒙特卡洛结果带标准误
    """
    kind = SchemeKind.parse(kind)
    if model.sigma == 0:
        raise ZeroVolatility()
    if not lam > 0:
        raise InvalidParameter(f"风险厌恶系数必须为正: {lam}")

    r, sigma = model.r, model.sigma
    ratio = r / sigma

    if kind == SchemeKind.NONE:
        return UtilityReport.from_terms((1.0 - 2.0 * ndtr(-ratio)) * r, 0.5 * lam * sigma ** 2)

    if kind == SchemeKind.PROPOSED:
        value = r ** 2 / (2.0 * lam * sigma ** 2) * ndtr(ratio)
        # 仓位 r/(lambda sigma^2) 以概率 Phi 出现：收益项是效用的两倍，风险项等于效用
        return UtilityReport.from_terms(2.0 * value, value)

    if kind == SchemeKind.ADDITIVE:
        prefactor = r ** 2 / (2.0 * lam * sigma ** 2)
        if series is not None:
            value = prefactor * additive_bracket(series) / (len(series) - 1)
            return UtilityReport.from_terms(2.0 * value, value)

        noise = _training_noise(seed)
        brackets = np.empty(n_train_sets)
        for start in range(0, n_train_sets, CHUNK_SIZE):
            count = min(CHUNK_SIZE, n_train_sets - start)
            paths = simulate_gbm_batch(model, T, count, noise, start=start)
            for row in range(count):
                brackets[start + row] = additive_bracket(PriceSeries(paths[row]))
        values = prefactor * brackets / T
        return UtilityReport.from_terms(2.0 * values.mean(), values.mean(), _standard_error(values))

    raise InvalidParameter(f"不支持的策略类型: {kind.value}")


def additive_bracket_samples(model: GbmParams, T: int, n_train_sets: int, seed: int = 0) -> np.ndarray:
    """
    与 true_utility_mc 共用训练集的括号项样本，用于检查 E[括号项] <= T Phi(r/sigma)
    """
    noise = _training_noise(seed)
    paths = simulate_gbm_batch(model, T, n_train_sets, noise)
    return np.array([additive_bracket(PriceSeries(row)) for row in paths])


def utility_ordering(builders: Dict[str, StrategyBuilder], model: GbmParams, lam: float,
                     T: int = 400, n_train_sets: int = 2000, seed: int = 0,
                     reference: str = 'proposed', z_threshold: float = 3.0,
                     max_workers: Optional[int] = None) -> Dict[str, Dict[str, float]]:
    """
    共同随机数下的效用排序检查：reference 策略是否以超过 z_threshold 个标准误的差距胜出

    Returns:
        Dict[str, Dict[str, float]]: 每个对手策略的差值、配对标准误与是否通过
    """
    names = list(builders)
    if reference not in builders:
        raise InvalidParameter(f"参考策略 {reference} 不在候选中")
    values = per_set_values([builders[name] for name in names], model, lam, T, n_train_sets,
                            seed, max_workers=max_workers)[:, :, 0]

    reference_values = values[:, names.index(reference)]
    result = {}
    for index, name in enumerate(names):
        if name == reference:
            continue
        difference = reference_values - values[:, index]
        se = _standard_error(difference)
        margin = float(difference.mean())
        result[name] = {
            'reference': reference,
            'difference': margin,
            'se': se,
            'passed': bool(margin > z_threshold * se),
        }
    return result
