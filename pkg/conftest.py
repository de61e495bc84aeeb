# -*- coding: utf-8 -*-
"""
测试公共夹具
"""

import numpy as np
import pytest

from src.procgen import GbmParams, simulate_gbm
from src.rng import NoiseSource

# 合成实验参数：S0=1, r=0.005, sigma=0.01
R = 0.005
SIGMA = 0.01


@pytest.fixture
def gbm_model():
    return GbmParams(s0=1.0, r=R, sigma=SIGMA)


@pytest.fixture
def gbm_series(gbm_model):
    return simulate_gbm(gbm_model, 400, NoiseSource(7))


@pytest.fixture
def write_csv(tmp_path):
    """
    把文本写成临时 CSV 并返回路径
    """
    def _write(text: str, name: str = 'prices.csv'):
        path = tmp_path / name
        path.write_text(text, encoding='utf-8')
        return path
    return _write


def standard_error(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(values.std(ddof=1) / np.sqrt(values.size))
