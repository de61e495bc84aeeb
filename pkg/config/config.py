# -*- coding: utf-8 -*-
"""
项目配置文件
"""

import os
from pathlib import Path

# 项目根目录
BASE_DIR = Path(__file__).parent.parent

# 价格过程模拟配置（默认值取自 GBM 合成实验：S0=1, r=0.005, sigma=0.01）
SIMULATION_CONFIG = {
    'model': 'gbm',
    's0': 1.0,
    'r': 0.005,
    'sigma': 0.01,
    'steps': 400,
    'seed': 0,
    # Heston 参数；xi 未给出时取 0.1，dt 取 1 与离散时间设定一致
    'nu0': 1e-4,
    'kappa': 0.25,
    'theta': 1e-4,
    'xi': 0.1,
    'rho': 0.0,
    'dt': 1.0,
    # 两状态波动率切换 GBM
    'sigma_low': 0.005,
    'sigma_high': 0.03,
    'switch_prob': 0.02,
    'n_paths': 1,
    'distribution': 'normal'
}

# 数据增强配置
AUGMENT_CONFIG = {
    'scheme': 'proposed-multiplicative',
    'strength': 1.0,
    'vol_window': 20,   # 滚动波动率窗口
    'tau': 20,          # |r| 平滑窗口
    'fold_volatility': False,
    'audit_draws': 2000,
    'column': 'close',
    'distribution': 'normal',
    'seed': 0
}

# 神经网络训练配置
TRAIN_CONFIG = {
    'scheme': 'proposed-multiplicative',
    'strength': 0.0,    # 0 表示自动选择：proposed 用 c，其余用估计参数下的最优强度
    'column': 'close',
    'window': 10,
    'hidden': (64, 64),
    'head': 'box',
    'objective': 'regularized',
    'lambda': 1.0,
    'c': 10.0,
    'minibatch': 64,
    'steps': 1000,
    'learning_rate': 1e-3,
    'beta1': 0.9,
    'beta2': 0.999,
    'epsilon': 1e-8,
    'weight_decay': 0.0,
    'n_draws': 8,
    'tau': 20,
    'vol_window': 20,
    'seed': 0
}

# 理论验证配置
VERIFY_CONFIG = {
    'r': 0.005,
    'sigma': 0.01,
    'lambda': 1.0,
    'T': 400,
    'n_train_sets': 2000,
    'n_test_sets': 1,
    'seed': 0,
    'z_threshold': 3.0
}

# 增强参数搜索配置
METAOPT_CONFIG = {
    'kind': 'additive',
    'grid_min': 0.01,
    'grid_max': 0.5,
    'grid_num': 50,
    'n_train_sets': 500,
    'T': 400,
    'lambda': 1.0,
    'r': 0.005,
    'sigma': 0.01,
    'mode': 'single',   # single / bayes / minimax
    'omegas': (),       # 形如 r:sigma 的模型参数列表
    'seed': 0
}

# 回测配置
BACKTEST_CONFIG = {
    'window': 10,
    'risk_free': 0.01,
    'strategy': 'buy-hold',
    'position': 1.0,
    'constraint': 'box',
    'column': 'close'
}

# 端到端实验配置
PIPELINE_CONFIG = {
    'seeds': 5,
    'train_steps': 400,
    'test_steps': 400,
    'schemes': ('none', 'weight-decay', 'additive', 'naive-multiplicative', 'proposed-multiplicative'),
    'lambda': 10.0,
    'objective': 'full',   # 含输入噪声项的完整目标
    'weight_decay': 1e-3,
    'train_iterations': 600,
    'learning_rate': 3e-3,
    'no_short': False,
    'window': 10,
    'c': 20.0,
    'tau': 20,
    'vol_window': 20,
    'n_draws': 8,
    'minibatch': 64,
    'risk_free': 0.0,   # 每步无风险收益，用于 MCL 斜率
    'r': 0.005,
    'sigma': 0.01,
    's0': 1.0,
    'seed': 0
}

# 并行配置
PARALLEL_CONFIG = {
    'max_workers': int(os.getenv('AUGPORT_MAX_WORKERS', '4'))
}

# 日志配置
LOG_CONFIG = {
    'level': os.getenv('LOG_LEVEL', 'INFO'),
    'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    'file_path': BASE_DIR / 'logs' / 'augport.log',
    'max_bytes': 10 * 1024 * 1024,  # 10MB
    'backup_count': 5
}

# 产物输出配置
OUTPUT_CONFIG = {
    'dir': Path(os.getenv('AUGPORT_OUTPUT_DIR', str(BASE_DIR / 'data'))),
    'hash_length': 16
}
