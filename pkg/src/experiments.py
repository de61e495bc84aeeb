# -*- coding: utf-8 -*-
"""
实验编排模块

- run_verification：理论结果的蒙特卡洛验证套件（no-aug / additive / proposed 的真实效用、
  排序、Cauchy 上界、平稳组合的闭式值与训练结果、Merton 组合）
- run_pipeline：模拟或读取价格 -> 按方案构造训练集 -> 训练网络 -> 样本外回测 -> 报告
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.special import ndtr
from tqdm import tqdm

from config.config import PARALLEL_CONFIG, PIPELINE_CONFIG
from src.augment import (
    UNBOUNDED, SchemeKind, StrengthProfile, calibrate_strength, estimate_volatility, optimal_strength
)
from src.backtest import MclPoint, WealthTrajectory, mcl_slope, model_rule, run_backtest, sharpe, wealth_returns
from src.dataio import PriceSeries, compute_returns
from src.errors import InvalidParameter, NoExcessReturn, SeriesTooShort, ZeroDispersion, ZeroVolatility
from src.nntrain import MlpModel, TrainConfig, build_training_set, stationary_training_set, train
from src.portfolio import (
    Constraint, make_strategy_builder, merton_stationary, stationary_augmented_portfolio
)
from src.procgen import GbmParams, simulate_gbm
from src.rng import NoiseSource
from src.utility import (
    additive_bracket_samples, per_set_values, true_utility_closed, utility_ordering
)

logger = logging.getLogger(__name__)

# 常数仓位模型训练的步数与相对误差要求
STATIONARY_STEPS = 3000
STATIONARY_TOLERANCE = 0.02

WEIGHT_DECAY_SCHEME = 'weight-decay'


@dataclass(frozen=True)
class CheckRow:
    """
    验证表中的一行

    Args:
        check: 检查名
        strategy: 策略
        closed_form: 理论值（排序类检查为 None）
        mc: 蒙特卡洛或数值结果
        se: 标准误
        passed: 是否通过
    """
    check: str
    strategy: str
    closed_form: Optional[float]
    mc: float
    se: float
    passed: bool


@dataclass
class VerificationReport:
    rows: List[CheckRow]
    params: Dict[str, Any] = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'params': self.params,
            'rows': [asdict(row) for row in self.rows],
            'all_passed': self.all_passed,
        }

    def table(self) -> str:
        frame = pd.DataFrame([asdict(row) for row in self.rows])
        return frame.to_string(index=False, float_format=lambda x: f"{x:.6e}")


def _within(mc: float, closed: float, se: float, z: float) -> bool:
    return bool(abs(mc - closed) <= z * se + 1e-12 * max(1.0, abs(closed)))


def train_stationary(series: PriceSeries, profile: StrengthProfile, lam: float, steps: int = STATIONARY_STEPS) -> float:
    """
    在 proposed 强度下训练只有一个偏置参数的常数仓位模型，返回训练后的仓位

    学习率按样本矩估计的仓位 |mean(r)| / (lambda var(r)) 缩放。
    """
    dataset = stationary_training_set(series, profile)
    targets = dataset.targets
    variance = float(targets.var())
    scale = abs(float(targets.mean())) / (lam * variance) if variance > 0 else 1.0
    config = TrainConfig(lam=lam, objective='regularized', minibatch=len(dataset), steps=steps,
                         learning_rate=2e-3 * max(scale, 1e-3))
    trained, _ = train(dataset, config, model=MlpModel.stationary(0.0, 'identity'))
    return float(trained.forward(np.zeros(0)))


def run_verification(r: float = 0.005, sigma: float = 0.01, lam: float = 1.0, T: int = 400,
                     n_train_sets: int = 2000, seed: int = 0, z_threshold: float = 3.0,
                     max_workers: Optional[int] = None, progress: bool = False) -> VerificationReport:
    """
    运行理论验证套件

    Args:
        r: GBM 漂移
        sigma: GBM 波动率
        lam: 风险厌恶系数
        T: 训练集步数
        n_train_sets: 训练集数量
        seed: 根种子
        z_threshold: 允许的标准误倍数

    Returns:
        VerificationReport: 逐项结果
    """
    if sigma == 0:
        raise ZeroVolatility()
    if not lam > 0:
        raise InvalidParameter(f"风险厌恶系数必须为正: {lam}")
    if r <= 0:
        raise InvalidParameter(f"验证套件要求 r > 0: {r}")

    model = GbmParams(s0=1.0, r=r, sigma=sigma)
    names = ('sign', 'additive', 'proposed')
    builders = {name: make_strategy_builder(name, model, lam) for name in names}

    logger.info(f"开始验证: r={r}, sigma={sigma}, lambda={lam}, T={T}, 训练集 {n_train_sets} 个")
    values = per_set_values([builders[name] for name in names], model, lam, T, n_train_sets, seed,
                            max_workers=max_workers, progress=progress)[:, :, 0]
    mc = values.mean(axis=0)
    se = values.std(axis=0, ddof=1) / np.sqrt(n_train_sets)

    rows = []
    for index, (name, kind) in enumerate(zip(names, ('none', 'additive', 'proposed'))):
        closed = true_utility_closed(kind, model, lam, T=T, n_train_sets=n_train_sets, seed=seed)
        combined = float(np.hypot(se[index], closed.se))
        rows.append(CheckRow(f"{kind} utility", name, closed.value, float(mc[index]), combined,
                             _within(float(mc[index]), closed.value, combined, z_threshold)))

    ordering = utility_ordering(builders, model, lam, T, n_train_sets, seed, 'proposed',
                                z_threshold, max_workers)
    for name, result in ordering.items():
        rows.append(CheckRow(f"proposed > {name}", 'proposed', None, result['difference'],
                             result['se'], result['passed']))

    brackets = additive_bracket_samples(model, T, n_train_sets, seed)
    bound = T * float(ndtr(r / sigma))
    bracket_se = float(brackets.std(ddof=1) / np.sqrt(brackets.size))
    rows.append(CheckRow('additive bracket bound', 'additive', bound, float(brackets.mean()), bracket_se,
                         bool(brackets.mean() <= bound + z_threshold * bracket_se)))

    merton = merton_stationary(model, lam)
    series = simulate_gbm(model, T, NoiseSource(seed).child('stationary'))
    profile = optimal_strength(SchemeKind.PROPOSED, series, model)
    stationary = stationary_augmented_portfolio(compute_returns(series), series, lam, profile)
    rows.append(CheckRow('stationary portfolio', 'proposed', merton, stationary, 0.0,
                         bool(abs(stationary - merton) <= 1e-9 * abs(merton))))

    trained = train_stationary(series, profile, lam)
    rows.append(CheckRow('stationary training', 'constant', merton, trained, 0.0,
                         bool(abs(trained - merton) <= STATIONARY_TOLERANCE * abs(merton))))

    merton_values = per_set_values([make_strategy_builder('merton', model, lam)], model, lam, T,
                                   min(n_train_sets, 100), seed, max_workers=max_workers)[:, 0, 0]
    merton_utility = r ** 2 / (2.0 * lam * sigma ** 2)
    rows.append(CheckRow('merton utility', 'merton', merton_utility, float(merton_values.mean()), 0.0,
                         bool(np.allclose(merton_values, merton_utility, rtol=1e-9))))

    report = VerificationReport(rows, {'r': r, 'sigma': sigma, 'lambda': lam, 'T': T,
                                       'n_train_sets': n_train_sets, 'seed': seed,
                                       'z_threshold': z_threshold})
    failed = [row.check for row in rows if not row.passed]
    if failed:
        logger.warning(f"验证未通过: {failed}")
    else:
        logger.info(f"验证全部通过（{len(rows)} 项）")
    return report


# ---------- 端到端实验 ----------

@dataclass
class PipelineResult:
    """
    pipeline 结果：JSON 报告与逐 (方案, 种子) 的财富轨迹
    """
    report: Dict[str, Any]
    trajectories: Dict[Tuple[str, int], WealthTrajectory]

    def positions_frame(self) -> pd.DataFrame:
        frames = []
        for (scheme, seed), trajectory in sorted(self.trajectories.items()):
            frames.append(pd.DataFrame({
                'scheme': scheme,
                'seed': seed,
                'step': np.arange(trajectory.positions.size),
                'position': trajectory.positions,
                'wealth': trajectory.wealth[1:],
            }))
        return pd.concat(frames, ignore_index=True)


def split_series(series: PriceSeries, train_steps: int) -> Tuple[PriceSeries, PriceSeries]:
    """
    按步数切分训练/测试价格，两段共用切分点上的价格
    """
    if train_steps < 1:
        raise InvalidParameter(f"训练步数必须 >= 1: {train_steps}")
    if len(series) < train_steps + 2:
        raise SeriesTooShort(len(series), train_steps + 2)
    prices = series.prices
    return (PriceSeries(prices[:train_steps + 1], label=f"{series.label}-train"),
            PriceSeries(prices[train_steps:], label=f"{series.label}-test"))


def _estimated_model(series: PriceSeries) -> GbmParams:
    returns = compute_returns(series).returns
    return GbmParams(s0=float(series.prices[0]), r=float(returns.mean()), sigma=float(returns.std(ddof=1)))


def scheme_strength(series: PriceSeries, scheme: str, params: Mapping[str, Any]) -> float:
    """
    方案在训练序列上使用的强度

    additive / naive 以估计的 (r_hat, sigma_hat) 代入闭式最优强度；r_hat <= 0 或强度无界时，
    把收益噪声平均方差校准到 sigma_hat^2。proposed 使用配置中的 c。
    """
    kind = SchemeKind.parse(scheme)
    if kind == SchemeKind.NONE:
        return 0.0
    if kind == SchemeKind.PROPOSED:
        return float(params['c'])

    estimate = _estimated_model(series)
    if estimate.r > 0:
        best = optimal_strength(kind, series, estimate)
        if best is not UNBOUNDED:
            return float(best)
    logger.info(f"{kind.value} 最优强度不可用（r_hat={estimate.r:.3e}），按 sigma_hat^2 校准")
    vol = estimate_volatility(compute_returns(series), int(params.get('vol_window', 20)))
    return calibrate_strength(series, kind, estimate.sigma ** 2, vol)


def _train_seed(root: int, index: int) -> int:
    return int(NoiseSource(root).generator('pipeline-train', index).integers(2 ** 31 - 1))


def _run_one(series: PriceSeries, scheme: str, index: int, params: Mapping[str, Any]) -> WealthTrajectory:
    window = int(params['window'])
    train_series, test_series = split_series(series, int(params['train_steps']))

    weight_decay = float(params['weight_decay']) if scheme == WEIGHT_DECAY_SCHEME else 0.0
    kind = SchemeKind.NONE if scheme == WEIGHT_DECAY_SCHEME else SchemeKind.parse(scheme)
    strength = scheme_strength(train_series, kind.value, params)
    dataset = build_training_set(train_series, window, kind, strength,
                                 vol_window=int(params['vol_window']), tau=int(params['tau']))

    no_short = bool(params.get('no_short', False))
    config = TrainConfig(
        lam=float(params['lambda']),
        c=float(params['c']),
        objective=str(params['objective']),
        minibatch=int(params['minibatch']),
        steps=int(params['train_iterations']),
        learning_rate=float(params['learning_rate']),
        weight_decay=weight_decay,
        n_draws=int(params['n_draws']),
        seed=_train_seed(int(params['seed']), index),
        head='long-only' if no_short else 'box',
    )
    model, _ = train(dataset, config)
    constraint = Constraint.LONG_ONLY if no_short else Constraint.BOX
    return run_backtest(model_rule(model, constraint), test_series, window, label=f"{scheme}-{index}")


def _safe_sharpe(trajectory: WealthTrajectory) -> Optional[float]:
    try:
        return sharpe(trajectory)
    except (ZeroDispersion, SeriesTooShort):
        logger.warning(f"{trajectory.label} 的 Sharpe 无定义（财富收益无离散度）")
        return None


def run_pipeline(params: Optional[Mapping[str, Any]] = None, prices: Optional[PriceSeries] = None,
                 max_workers: Optional[int] = None, progress: bool = False) -> PipelineResult:
    """
    端到端实验：多种子 x 多方案的训练与样本外回测

    Args:
        params: 参数，缺省项取 PIPELINE_CONFIG
        prices: 给出时所有种子共用这条价格（种子只影响训练随机性），否则每个种子模拟一条 GBM
        max_workers: 并行线程数
        progress: 是否显示进度条

    Returns:
        PipelineResult: 报告与财富轨迹
    """
    params = {**PIPELINE_CONFIG, **dict(params or {})}
    schemes = [WEIGHT_DECAY_SCHEME if name == WEIGHT_DECAY_SCHEME else SchemeKind.parse(name).value
               for name in params['schemes']]
    n_seeds = int(params['seeds'])
    if n_seeds < 1:
        raise InvalidParameter(f"种子数必须 >= 1: {n_seeds}")

    if prices is not None:
        series_list = [prices] * n_seeds
    else:
        model = GbmParams(s0=float(params['s0']), r=float(params['r']), sigma=float(params['sigma']))
        steps = int(params['train_steps']) + int(params['test_steps'])
        data_noise = NoiseSource(int(params['seed'])).child('pipeline-data')
        series_list = [simulate_gbm(model, steps, data_noise, index=i) for i in range(n_seeds)]
    # 切分失败应在训练前暴露
    split_series(series_list[0], int(params['train_steps']))

    tasks = [(scheme, i) for i in range(n_seeds) for scheme in schemes]
    workers = max_workers or PARALLEL_CONFIG['max_workers']
    logger.info(f"pipeline: {n_seeds} 个种子 x {len(schemes)} 种方案，并行 {workers}")

    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = executor.map(lambda task: _run_one(series_list[task[1]], task[0], task[1], params), tasks)
        if progress:
            futures = tqdm(futures, total=len(tasks), desc='pipeline', unit='次')
        trajectories = dict(zip(tasks, futures))

    summary = {}
    points = []
    for scheme in schemes:
        runs = [trajectories[(scheme, i)] for i in range(n_seeds)]
        ratios = [_safe_sharpe(run) for run in runs]
        defined = [value for value in ratios if value is not None]
        pooled = np.concatenate([wealth_returns(run) for run in runs if run.wealth.size > 1])
        point = MclPoint(float(pooled.mean()), float(np.sqrt(np.var(pooled))), scheme)
        points.append(point)
        positions = np.concatenate([run.positions for run in runs])
        summary[scheme] = {
            'sharpe': ratios,
            'mean_sharpe': float(np.mean(defined)) if defined else None,
            'std_sharpe': float(np.std(defined)) if defined else None,
            'final_wealth': [run.final_wealth for run in runs],
            'bankruptcies': int(sum(run.bankrupt for run in runs)),
            'mcl_point': {'mean_return': point.mean_return, 'risk': point.risk},
            'min_position': float(positions.min()) if positions.size else None,
            'max_position': float(positions.max()) if positions.size else None,
        }

    ranked = sorted((name for name in schemes if summary[name]['mean_sharpe'] is not None),
                    key=lambda name: summary[name]['mean_sharpe'], reverse=True)

    r0 = float(params['risk_free'])
    try:
        best_point, slope = mcl_slope(points, r0)
        mcl = {'best': best_point.label, 'slope': slope, 'risk_free': r0}
    except NoExcessReturn:
        logger.warning(f"没有方案的平均收益超过无风险收益 {r0}")
        mcl = {'best': None, 'slope': None, 'risk_free': r0}

    report = {
        'schemes': summary,
        'ranking': ranked,
        'mcl': mcl,
        'seeds': n_seeds,
        'objective': str(params['objective']),
        'no_short': bool(params.get('no_short', False)),
    }
    if report['no_short']:
        report['positions_in_unit_interval'] = bool(all(
            np.all((run.positions >= 0) & (run.positions <= 1)) for run in trajectories.values()))

    if ranked:
        logger.info(f"Sharpe 排名: {ranked}")
    return PipelineResult(report, trajectories)
