# -*- coding: utf-8 -*-
"""
价格数据读写与数据集构建模块
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from src.errors import (
    DataError, InvalidParameter, MissingColumn, NonPositivePrice,
    ParseError, SeriesTooShort
)

logger = logging.getLogger(__name__)

PRICE_SPACE = 'price-space'
RETURN_SPACE = 'return-space'
# 17 位有效数字，写出再读回时浮点数逐位一致
CSV_FLOAT_FORMAT = '%.17g'


@dataclass(frozen=True)
class PriceSeries:
    """
    严格为正的价格序列 S_1..S_T（等时间步长）

    Args:
        prices: 价格数组
        label: 标识（股票代码、模拟种子等）
        dates: 可选的日期标签，与价格等长
    """
    prices: np.ndarray
    label: str = ''
    dates: Optional[Tuple[str, ...]] = field(default=None, compare=False)

    def __post_init__(self):
        prices = np.array(self.prices, dtype=float).reshape(-1)
        if prices.size < 2:
            raise SeriesTooShort(prices.size, 2)
        bad = np.flatnonzero(~(prices > 0))
        if bad.size:
            raise NonPositivePrice(int(bad[0]) + 1, float(prices[bad[0]]))
        if self.dates is not None and len(self.dates) != prices.size:
            raise DataError(f"日期标签数量 {len(self.dates)} 与价格数量 {prices.size} 不一致")
        prices.setflags(write=False)
        object.__setattr__(self, 'prices', prices)

    def __len__(self) -> int:
        return self.prices.size


@dataclass(frozen=True)
class ReturnSeries:
    """
    价格收益序列 r_t = (S_{t+1} - S_t) / S_t
    """
    returns: np.ndarray
    label: str = ''

    def __post_init__(self):
        returns = np.array(self.returns, dtype=float).reshape(-1)
        returns.setflags(write=False)
        object.__setattr__(self, 'returns', returns)

    def __len__(self) -> int:
        return self.returns.size


@dataclass(frozen=True)
class WindowDataset:
    """
    滑动窗口数据集：inputs[k] 为连续 L 个元素，targets[k] 为紧随其后的元素

    Args:
        inputs: 形状 (n, L)
        targets: 形状 (n,)
        window: 窗口长度 L
        mode: price-space 或 return-space
    """
    inputs: np.ndarray
    targets: np.ndarray
    window: int
    mode: str

    def __len__(self) -> int:
        return self.targets.size


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return np.nan


def load_price_csv(path: Union[str, Path], column: str = 'close',
                   label: Optional[str] = None) -> PriceSeries:
    """
    从 CSV 读取价格序列

    CSV 需带表头，一行一个时间步，按时间升序；日期列只作为标签保存。

    Args:
        path: CSV 路径
        column: 价格列名
        label: 序列标识，默认取文件名

    Returns:
        PriceSeries: 价格序列（保持文件中的顺序）
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"价格文件不存在: {path}")

    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.EmptyDataError:
        raise DataError(f"价格文件为空: {path}")

    df.columns = [str(c).strip() for c in df.columns]
    if column not in df.columns:
        raise MissingColumn(column, df.columns)

    raw = df[column].str.strip()
    # 逐个用 float 解析，保证与写出时的 17 位表示互逆
    values = np.array([_parse_float(text) for text in raw], dtype=float)

    # 行号从 1 开始，按数据行（不含表头）计数；报告最先出错的一行
    for index, value in enumerate(values):
        if not np.isfinite(value):
            raise ParseError(index + 1, raw.iloc[index])
        if value <= 0:
            raise NonPositivePrice(index + 1, float(value))

    if values.size < 2:
        raise SeriesTooShort(values.size, 2)

    dates = None
    for date_column in ('date', 'Date', 'timestamp', 'datetime'):
        if date_column in df.columns:
            dates = tuple(df[date_column].tolist())
            break

    logger.info(f"读取价格文件 {path}，共 {values.size} 行")
    return PriceSeries(values, label=label or path.stem, dates=dates)


def write_price_csv(path: Union[str, Path], series: PriceSeries, column: str = 'close') -> Path:
    """
    写出价格 CSV（日期标签缺失时以步号代替）

    Returns:
        Path: 写出的文件路径
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    index = list(series.dates) if series.dates is not None else list(range(len(series)))
    frame = pd.DataFrame({'date' if series.dates is not None else 'step': index,
                          column: series.prices})
    frame.to_csv(path, index=False, lineterminator='\n', float_format=CSV_FLOAT_FORMAT)
    return path


def compute_returns(series: PriceSeries) -> ReturnSeries:
    """
    计算价格收益 r_t = (S_{t+1} - S_t) / S_t
    """
    prices = series.prices
    return ReturnSeries((prices[1:] - prices[:-1]) / prices[:-1], label=series.label)


def reconstruct_prices(s0: float, returns: ReturnSeries, label: str = '') -> PriceSeries:
    """
    由初始价格与收益序列还原价格序列
    """
    path = s0 * np.cumprod(np.concatenate(([1.0], 1.0 + returns.returns)))
    return PriceSeries(path, label=label or returns.label)


def make_windows(series: Union[PriceSeries, ReturnSeries], window: int,
                 mode: Optional[str] = None) -> WindowDataset:
    """
    构建滑动窗口数据集

    Args:
        series: 价格序列或收益序列
        window: 窗口长度 L
        mode: price-space / return-space；None 时按序列类型推断。
              对价格序列指定 return-space 时先计算收益

    Returns:
        WindowDataset: 窗口数量为 len(series) - L
    """
    if window < 1:
        raise InvalidParameter(f"窗口长度必须 >= 1: {window}")

    if mode is None:
        mode = PRICE_SPACE if isinstance(series, PriceSeries) else RETURN_SPACE

    if mode == PRICE_SPACE:
        if not isinstance(series, PriceSeries):
            raise InvalidParameter("price-space 窗口需要价格序列")
        values = series.prices
    elif mode == RETURN_SPACE:
        values = compute_returns(series).returns if isinstance(series, PriceSeries) else series.returns
    else:
        raise InvalidParameter(f"未知窗口模式: {mode}")

    if values.size <= window:
        raise SeriesTooShort(values.size, window + 1)

    blocks = sliding_window_view(values, window + 1)
    return WindowDataset(
        inputs=np.ascontiguousarray(blocks[:, :window]),
        targets=blocks[:, window].copy(),
        window=window,
        mode=mode
    )
