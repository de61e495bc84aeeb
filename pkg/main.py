#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
AugPort 主程序入口：金融时间序列数据增强与组合构建
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np
import pandas as pd

# 添加项目根目录到Python路径
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from config.config import (
    AUGMENT_CONFIG, BACKTEST_CONFIG, METAOPT_CONFIG, PIPELINE_CONFIG, SIMULATION_CONFIG,
    TRAIN_CONFIG, VERIFY_CONFIG
)
from src.augment import AugmentationScheme, SchemeKind, audit_perturbation, augment_prices, estimate_volatility
from src.backtest import (
    constant_rule, mcl_point, mcl_slope, model_rule, run_backtest, sharpe, write_wealth_csv
)
from src.dataio import CSV_FLOAT_FORMAT, compute_returns, load_price_csv, write_price_csv
from src.errors import AugPortError, ConfigError, NoExcessReturn, ZeroDispersion
from src.experiments import run_pipeline, run_verification, scheme_strength
from src.logger import get_logger, setup_augport_logging
from src.metaopt import OmegaPrior, ThetaGrid, best_theta, bayes_theta, minimax_theta
from src.nntrain import TrainConfig, build_training_set, load_model, save_model, train
from src.procgen import (
    GbmParams, HestonParams, RegimeParams, simulate_gbm, simulate_heston, simulate_regime_switching
)
from src.rng import NoiseSource
from src.runconfig import RunConfig, load_config_file, output_path, resolve, write_json, write_meta

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def setup_environment(log_level: Optional[str] = None):
    """
    设置环境
    """
    # 加载环境变量
    from dotenv import load_dotenv
    env_path = project_root / '.env'
    if env_path.exists():
        load_dotenv(env_path)

    # 设置日志
    setup_augport_logging(log_level)


def _resolve(command: str, defaults: Mapping[str, Any], args) -> RunConfig:
    """
    默认值 < 配置文件 < 命令行；argparse 的 dest 与配置键同名
    """
    file_values = load_config_file(args.config) if args.config else None
    overrides = {key: value for key, value in vars(args).items() if key in defaults}
    return resolve(command, defaults, file_values, overrides)


def _output_dir(args) -> Path:
    directory = output_path('', args.output_dir)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def simulate_command(args) -> int:
    """
    模拟价格序列并写出 CSV

    Args:
        args: 命令行参数
    """
    logger = get_logger(__name__)
    run = _resolve('simulate', {**SIMULATION_CONFIG, 'model': args.model}, args)
    noise = NoiseSource(run['seed'], run['distribution'])
    directory = _output_dir(args)

    written = []
    for index in range(int(run['n_paths'])):
        if run['model'] == 'gbm':
            series = simulate_gbm(GbmParams(run['s0'], run['r'], run['sigma']), run['steps'], noise, index)
        elif run['model'] == 'heston':
            params = HestonParams(run['s0'], run['r'], run['nu0'], run['kappa'], run['theta'],
                                  run['xi'], run['rho'], run['dt'])
            series, _ = simulate_heston(params, run['steps'], noise, index)
        else:
            params = RegimeParams(run['s0'], run['r'], run['sigma_low'], run['sigma_high'], run['switch_prob'])
            series, _ = simulate_regime_switching(params, run['steps'], noise, index)

        suffix = f"_{index}" if run['n_paths'] > 1 else ''
        path = Path(args.output) if args.output and run['n_paths'] == 1 \
            else directory / f"simulate_{run['model']}_{run.config_hash}{suffix}.csv"
        write_price_csv(path, series)
        write_meta(path, run, {'path_index': index})
        written.append(path)

    for path in written:
        print(path)
    logger.info(f"已写出 {len(written)} 条 {run['model']} 价格序列")
    return EXIT_OK


def augment_command(args) -> int:
    """
    对价格 CSV 做一次增强，写出增强后的 CSV 与噪声审计旁注
    """
    logger = get_logger(__name__)
    run = _resolve('augment', AUGMENT_CONFIG, args)
    series = load_price_csv(args.input, run['column'])
    noise = NoiseSource(run['seed'], run['distribution'])
    scheme = AugmentationScheme(kind=run['scheme'], strength=run['strength'], noise=noise,
                                tau=run['tau'], fold_volatility=run['fold_volatility'])
    vol = estimate_volatility(compute_returns(series), run['vol_window']) \
        if scheme.kind == SchemeKind.PROPOSED else None

    augmented = augment_prices(series, scheme, vol, noise.generator('augment'))
    audit = audit_perturbation(series, scheme, vol, run['audit_draws'])

    path = Path(args.output) if args.output else _output_dir(args) / f"augment_{run.config_hash}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({'step': np.arange(augmented.size), 'original': series.prices, run['column']: augmented}) \
        .to_csv(path, index=False, lineterminator='\n', float_format=CSV_FLOAT_FORMAT)
    write_meta(path, run, {'scheme': scheme.describe(), 'audit': audit})

    if np.any(augmented <= 0):
        logger.warning("增强后的价格中出现非正值")
    print(path)
    return EXIT_OK


def train_command(args) -> int:
    """
    在价格 CSV 上训练组合网络并保存检查点
    """
    logger = get_logger(__name__)
    run = _resolve('train', TRAIN_CONFIG, args)
    series = load_price_csv(args.input, run['column'])

    kind = SchemeKind.parse(run['scheme'])
    strength = run['strength'] or scheme_strength(series, kind.value, run.params)
    dataset = build_training_set(series, run['window'], kind, strength,
                                 vol_window=run['vol_window'], tau=run['tau'])
    config = TrainConfig(
        lam=run['lambda'], c=run['c'], objective=run['objective'], minibatch=run['minibatch'],
        steps=run['steps'], learning_rate=run['learning_rate'], beta1=run['beta1'], beta2=run['beta2'],
        epsilon=run['epsilon'], weight_decay=run['weight_decay'], n_draws=run['n_draws'],
        tau=run['tau'], seed=run['seed'], hidden=tuple(run['hidden']), head=run['head'],
    )
    model, trace = train(dataset, config, progress=args.progress)

    path = Path(args.output) if args.output else _output_dir(args) / f"model_{run.config_hash}.json"
    save_model(model, path, {'run': run.to_dict(), 'strength': strength, 'final_loss': float(trace[-1])})
    logger.info(f"模型已保存: {path}")
    print(path)
    return EXIT_OK


def backtest_command(args) -> int:
    """
    样本外回测，写出 JSON 报告与财富 CSV
    """
    logger = get_logger(__name__)
    run = _resolve('backtest', BACKTEST_CONFIG, args)
    test = load_price_csv(args.input, run['column'])

    strategy = run['strategy']
    if strategy == 'buy-hold':
        rule = constant_rule(1.0)
    elif strategy == 'constant':
        rule = constant_rule(run['position'])
    elif strategy == 'model':
        if not args.model:
            raise ConfigError("model 策略需要 --model 指定检查点")
        model = load_model(args.model)
        if model.sizes[0] not in (0, run['window']):
            raise ConfigError(f"模型输入尺寸 {model.sizes[0]} 与窗口 {run['window']} 不一致")
        rule = model_rule(model, run['constraint'])
    else:
        raise ConfigError(f"未知回测策略: {strategy}")

    trajectory = run_backtest(rule, test, run['window'], label=strategy)
    directory = _output_dir(args)
    wealth_path = write_wealth_csv(directory / f"backtest_{run.config_hash}_wealth.csv", trajectory)
    write_meta(wealth_path, run)

    try:
        ratio = sharpe(trajectory)
    except ZeroDispersion:
        logger.warning("财富收益无离散度，Sharpe 无定义")
        ratio = None

    point = mcl_point(trajectory, strategy) if trajectory.wealth.size > 1 else None
    try:
        slope = mcl_slope([point], run['risk_free'])[1] if point else None
    except NoExcessReturn:
        slope = None

    report = {
        'strategy': strategy,
        'T': int(trajectory.positions.size),
        'sharpe': ratio,
        'final_wealth': trajectory.final_wealth,
        'bankruptcies': int(trajectory.bankrupt),
        'positions_csv_path': str(wealth_path),
        'mcl_point': {'mean_return': point.mean_return, 'risk': point.risk} if point else None,
        'mcl_slope': slope,
        'run': run.to_dict(),
    }
    report_path = write_json(directory / f"backtest_{run.config_hash}.json", report)
    print(report_path)
    return EXIT_OK


def verify_command(args) -> int:
    """
    运行理论验证套件；全部通过返回 0，否则返回 1
    """
    run = _resolve('verify', VERIFY_CONFIG, args)
    report = run_verification(run['r'], run['sigma'], run['lambda'], run['T'], run['n_train_sets'],
                              run['seed'], run['z_threshold'], progress=args.progress)
    print(report.table())

    path = write_json(_output_dir(args) / f"verify_{run.config_hash}.json",
                      {**report.to_dict(), 'run': run.to_dict()})
    print(f"\n报告: {path}")
    print("全部通过" if report.all_passed else "存在未通过的检查")
    return EXIT_OK if report.all_passed else EXIT_FAILURE


def _parse_omega(text: str, s0: float = 1.0) -> GbmParams:
    try:
        r, sigma = (float(part) for part in text.split(':'))
    except ValueError:
        raise ConfigError(f"模型参数格式应为 r:sigma，实际为 {text!r}")
    return GbmParams(s0=s0, r=r, sigma=sigma)


def metaopt_command(args) -> int:
    """
    增强强度网格搜索，写出 (theta, V, SE) 曲线 CSV
    """
    logger = get_logger(__name__)
    run = _resolve('metaopt', METAOPT_CONFIG, args)
    grid = ThetaGrid.linspace(run['grid_min'], run['grid_max'], run['grid_num'], run['kind'])
    model = GbmParams(r=run['r'], sigma=run['sigma'])
    omegas = [_parse_omega(item) for item in run['omegas']] or [model]

    common = dict(lam=run['lambda'], T=run['T'], n_train_sets=run['n_train_sets'], seed=run['seed'])
    if run['mode'] == 'single':
        result = best_theta(grid, model, **common)
    elif run['mode'] == 'bayes':
        result = bayes_theta(grid, OmegaPrior.uniform(omegas), **common)
    elif run['mode'] == 'minimax':
        result = minimax_theta(grid, omegas, **common)
    else:
        raise ConfigError(f"未知搜索模式: {run['mode']}")

    path = _output_dir(args) / f"metaopt_{run.config_hash}.csv"
    pd.DataFrame(result.rows(), columns=['theta', 'value', 'se']) \
        .to_csv(path, index=False, lineterminator='\n', float_format=CSV_FLOAT_FORMAT)
    write_meta(path, run, {'theta_star': result.theta, 'value': result.value})
    logger.info(f"theta*={result.theta:.6g}")
    print(f"theta* = {result.theta:.6g}, V = {result.value:.6e}")
    print(path)
    return EXIT_OK


def pipeline_command(args) -> int:
    """
    端到端实验：训练各增强方案并在样本外比较 Sharpe
    """
    run = _resolve('pipeline', PIPELINE_CONFIG, args)
    prices = load_price_csv(args.input, args.column) if args.input else None
    result = run_pipeline(run.params, prices, progress=args.progress)

    directory = _output_dir(args)
    positions_path = directory / f"pipeline_{run.config_hash}_positions.csv"
    result.positions_frame().to_csv(positions_path, index=False, lineterminator='\n',
                                    float_format=CSV_FLOAT_FORMAT)
    write_meta(positions_path, run)

    report = {**result.report, 'positions_csv_path': str(positions_path), 'run': run.to_dict()}
    path = write_json(directory / f"pipeline_{run.config_hash}.json", report)

    print("=== 样本外 Sharpe（按均值排名） ===")
    for rank, name in enumerate(result.report['ranking'], 1):
        print(f"{rank}. {name}: {result.report['schemes'][name]['mean_sharpe']:.4f}")
    print(path)
    return EXIT_OK


def _csv_list(text: str):
    return tuple(item.strip() for item in text.split(',') if item.strip())


def build_parser() -> argparse.ArgumentParser:
    """
    创建命令行参数解析器
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, help='扁平 key=value 配置文件')
    common.add_argument('--seed', type=int, help='根种子')
    common.add_argument('--output-dir', type=str, help='产物目录（默认: data/）')
    common.add_argument('--log-level', type=str, choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='日志级别')
    common.add_argument('--progress', action='store_true', help='显示进度条')

    parser = argparse.ArgumentParser(
        description='AugPort：金融时间序列数据增强与组合构建',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
示例用法:
  python main.py simulate gbm --s0 1 --r 0.005 --sigma 0.01 --steps 400 --seed 7
  python main.py augment --input data/prices.csv --scheme proposed --strength 1.0
  python main.py train --input data/prices.csv --scheme proposed --lambda 50 --steps 600
  python main.py backtest --input data/test.csv --strategy model --model data/model.json
  python main.py verify --lambda 2
  python main.py metaopt --kind additive --grid-min 0.01 --grid-max 0.5 --grid-num 50
  python main.py pipeline --seeds 5 --no-short

退出码: 0 成功，1 验证未通过，2 参数或配置错误
        """
    )

    subparsers = parser.add_subparsers(dest='command', help='可用命令')

    # 模拟
    simulate_parser = subparsers.add_parser('simulate', parents=[common], help='模拟价格序列')
    simulate_parser.add_argument('model', choices=['gbm', 'heston', 'regime'], help='价格过程')
    simulate_parser.add_argument('--r', type=float, required=True, help='每步漂移')
    simulate_parser.add_argument('--s0', type=float, help='初始价格 (默认: 1)')
    simulate_parser.add_argument('--sigma', type=float, help='GBM 波动率')
    simulate_parser.add_argument('--steps', type=int, help='步数 T (默认: 400)')
    simulate_parser.add_argument('--n-paths', dest='n_paths', type=int, help='轨迹条数')
    simulate_parser.add_argument('--distribution', type=str, help='噪声分布')
    for name in ('nu0', 'kappa', 'theta', 'xi', 'rho', 'dt'):
        simulate_parser.add_argument(f'--{name}', type=float, help=f'Heston 参数 {name}')
    simulate_parser.add_argument('--sigma-low', dest='sigma_low', type=float, help='切换模型低波动')
    simulate_parser.add_argument('--sigma-high', dest='sigma_high', type=float, help='切换模型高波动')
    simulate_parser.add_argument('--switch-prob', dest='switch_prob', type=float, help='每步切换概率')
    simulate_parser.add_argument('--output', type=str, help='输出 CSV 路径')

    # 增强
    augment_parser = subparsers.add_parser('augment', parents=[common], help='增强价格序列')
    augment_parser.add_argument('--input', type=str, required=True, help='价格 CSV')
    augment_parser.add_argument('--column', type=str, help='价格列 (默认: close)')
    augment_parser.add_argument('--scheme', type=str, help='none / additive / naive / proposed')
    augment_parser.add_argument('--strength', type=float, help='rho、rho0 或 c')
    augment_parser.add_argument('--vol-window', dest='vol_window', type=int, help='波动率窗口')
    augment_parser.add_argument('--tau', type=int, help='|r| 平滑窗口')
    augment_parser.add_argument('--fold-volatility', dest='fold_volatility', action='store_true', default=None,
                                help='把 sigma_hat 并入 c')
    augment_parser.add_argument('--audit-draws', dest='audit_draws', type=int, help='审计抽样次数')
    augment_parser.add_argument('--distribution', type=str, help='噪声分布')
    augment_parser.add_argument('--output', type=str, help='输出 CSV 路径')

    # 训练
    train_parser = subparsers.add_parser('train', parents=[common], help='训练组合网络')
    train_parser.add_argument('--input', type=str, required=True, help='训练价格 CSV')
    train_parser.add_argument('--column', type=str, help='价格列')
    train_parser.add_argument('--scheme', type=str, help='增强方案')
    train_parser.add_argument('--strength', type=float, help='增强强度（0 为自动）')
    train_parser.add_argument('--window', type=int, help='输入窗口 L')
    train_parser.add_argument('--objective', type=str, help='sampled-aug / regularized / full')
    train_parser.add_argument('--lambda', dest='lambda', type=float, help='风险厌恶系数')
    train_parser.add_argument('--c', type=float, help='proposed 方案强度 c')
    train_parser.add_argument('--minibatch', type=int, help='批大小')
    train_parser.add_argument('--steps', type=int, help='训练步数')
    train_parser.add_argument('--lr', dest='learning_rate', type=float, help='学习率')
    train_parser.add_argument('--weight-decay', dest='weight_decay', type=float, help='权重衰减')
    train_parser.add_argument('--n-draws', dest='n_draws', type=int, help='每批噪声抽样数')
    train_parser.add_argument('--head', type=str, choices=['identity', 'box', 'long-only'], help='输出头')
    train_parser.add_argument('--output', type=str, help='模型输出路径')

    # 回测
    backtest_parser = subparsers.add_parser('backtest', parents=[common], help='样本外回测')
    backtest_parser.add_argument('--input', type=str, required=True, help='测试价格 CSV')
    backtest_parser.add_argument('--column', type=str, help='价格列')
    backtest_parser.add_argument('--strategy', type=str, choices=['buy-hold', 'constant', 'model'], help='策略')
    backtest_parser.add_argument('--position', type=float, help='constant 策略的仓位')
    backtest_parser.add_argument('--model', type=str, help='模型检查点')
    backtest_parser.add_argument('--window', type=int, help='输入窗口 L')
    backtest_parser.add_argument('--constraint', type=str, choices=['unbounded', 'box', 'long-only'], help='仓位约束')
    backtest_parser.add_argument('--risk-free', dest='risk_free', type=float, help='每步无风险收益')

    # 验证
    verify_parser = subparsers.add_parser('verify', parents=[common], help='理论验证套件')
    verify_parser.add_argument('--r', type=float, help='漂移')
    verify_parser.add_argument('--sigma', type=float, help='波动率')
    verify_parser.add_argument('--lambda', dest='lambda', type=float, help='风险厌恶系数')
    verify_parser.add_argument('--T', dest='T', type=int, help='训练集步数')
    verify_parser.add_argument('--n-train-sets', dest='n_train_sets', type=int, help='训练集数量')
    verify_parser.add_argument('--z-threshold', dest='z_threshold', type=float, help='标准误倍数')

    # 参数搜索
    metaopt_parser = subparsers.add_parser('metaopt', parents=[common], help='增强强度搜索')
    metaopt_parser.add_argument('--kind', type=str, help='additive / naive / proposed')
    metaopt_parser.add_argument('--grid-min', dest='grid_min', type=float, help='网格下界')
    metaopt_parser.add_argument('--grid-max', dest='grid_max', type=float, help='网格上界')
    metaopt_parser.add_argument('--grid-num', dest='grid_num', type=int, help='网格点数')
    metaopt_parser.add_argument('--n-train-sets', dest='n_train_sets', type=int, help='训练集数量')
    metaopt_parser.add_argument('--T', dest='T', type=int, help='训练集步数')
    metaopt_parser.add_argument('--lambda', dest='lambda', type=float, help='风险厌恶系数')
    metaopt_parser.add_argument('--r', type=float, help='漂移')
    metaopt_parser.add_argument('--sigma', type=float, help='波动率')
    metaopt_parser.add_argument('--mode', type=str, choices=['single', 'bayes', 'minimax'], help='搜索模式')
    metaopt_parser.add_argument('--omegas', type=_csv_list, help='逗号分隔的 r:sigma 列表')

    # 端到端
    pipeline_parser = subparsers.add_parser('pipeline', parents=[common], help='端到端实验')
    pipeline_parser.add_argument('--input', type=str, help='价格 CSV（不给出则模拟 GBM）')
    pipeline_parser.add_argument('--column', type=str, default='close', help='价格列')
    pipeline_parser.add_argument('--seeds', type=int, help='种子数 (默认: 5)')
    pipeline_parser.add_argument('--train-steps', dest='train_steps', type=int, help='训练段步数')
    pipeline_parser.add_argument('--test-steps', dest='test_steps', type=int, help='测试段步数')
    pipeline_parser.add_argument('--schemes', type=_csv_list, help='逗号分隔的方案列表')
    pipeline_parser.add_argument('--lambda', dest='lambda', type=float, help='风险厌恶系数')
    pipeline_parser.add_argument('--objective', type=str, help='训练目标 (默认: full)')
    pipeline_parser.add_argument('--c', type=float, help='proposed 方案强度 c (默认: 20)')
    pipeline_parser.add_argument('--train-iterations', dest='train_iterations', type=int, help='训练步数')
    pipeline_parser.add_argument('--no-short', dest='no_short', action='store_true', default=None,
                                 help='禁止做空，仓位限制在 [0, 1]')

    return parser


COMMANDS = {
    'simulate': simulate_command,
    'augment': augment_command,
    'train': train_command,
    'backtest': backtest_command,
    'verify': verify_command,
    'metaopt': metaopt_command,
    'pipeline': pipeline_command,
}


def run(argv=None) -> int:
    """
    解析参数并执行子命令，返回退出码
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_USAGE

    setup_environment(args.log_level)
    logger = get_logger(__name__)

    try:
        return COMMANDS[args.command](args)
    except AugPortError as e:
        logger.error(f"{args.command} 失败: {e}")
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        logger.exception(f"{args.command} 出现未预期的异常: {e}")
        return EXIT_FAILURE


def main():
    """
    主函数
    """
    sys.exit(run())


if __name__ == '__main__':
    main()
