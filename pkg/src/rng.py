# -*- coding: utf-8 -*-
"""
随机数子流模块

所有随机性都从一个根种子出发，经 numpy SeedSequence 的 spawn_key 派生出命名子流，
不使用任何全局随机状态。
"""

import logging
import zlib
from typing import Callable, Optional, Tuple, Union

import numpy as np

from src.errors import InvalidParameter

Key = Union[int, str]
Sampler = Callable[[np.random.Generator, Tuple[int, ...]], np.ndarray]

STUDENT_T_DF = 5.0


def _key_to_int(key: Key) -> int:
    """
    把子流键映射为非负整数，字符串键用 crc32 保证跨进程稳定
    """
    if isinstance(key, str):
        return zlib.crc32(key.encode('utf-8'))
    key = int(key)
    if key < 0:
        raise InvalidParameter(f"子流键必须非负: {key}")
    return key


def _normal(rng: np.random.Generator, size) -> np.ndarray:
    return rng.standard_normal(size)


def _student_t(rng: np.random.Generator, size) -> np.ndarray:
    # 缩放到单位方差
    scale = np.sqrt((STUDENT_T_DF - 2.0) / STUDENT_T_DF)
    return rng.standard_t(STUDENT_T_DF, size) * scale


def _uniform(rng: np.random.Generator, size) -> np.ndarray:
    bound = np.sqrt(3.0)
    return rng.uniform(-bound, bound, size)


def _rademacher(rng: np.random.Generator, size) -> np.ndarray:
    return rng.integers(0, 2, size=size).astype(float) * 2.0 - 1.0


DISTRIBUTIONS = {
    'normal': _normal,
    'student_t': _student_t,
    'uniform': _uniform,
    'rademacher': _rademacher,
}


class NoiseSource:
    """
    零均值、单位方差的噪声源

    Args:
        seed: 根种子
        distribution: 分布名称（normal / student_t / uniform / rademacher）或可调用对象 f(rng, size)
        keys: 子流路径，由 child() 逐级追加
    """

    def __init__(self, seed: int = 0, distribution: Union[str, Sampler] = 'normal',
                 keys: Tuple[int, ...] = ()):
        if int(seed) < 0:
            raise InvalidParameter(f"种子必须非负: {seed}")
        if callable(distribution):
            self._sampler = distribution
            self.distribution = getattr(distribution, '__name__', 'custom')
        elif distribution in DISTRIBUTIONS:
            self._sampler = DISTRIBUTIONS[distribution]
            self.distribution = distribution
        else:
            raise InvalidParameter(
                f"未知噪声分布: {distribution}，可选: {sorted(DISTRIBUTIONS)}"
            )

        self._distribution_arg = distribution
        self.seed = int(seed)
        self.keys = tuple(keys)
        self._stream: Optional[np.random.Generator] = None
        self.logger = logging.getLogger(__name__)

    def __repr__(self) -> str:
        return f"NoiseSource(seed={self.seed}, distribution={self.distribution!r}, keys={self.keys})"

    def child(self, *keys: Key) -> 'NoiseSource':
        """
        派生子噪声源（相同分布，子流路径追加 keys）
        """
        child_keys = self.keys + tuple(_key_to_int(k) for k in keys)
        return NoiseSource(self.seed, self._distribution_arg, child_keys)

    def generator(self, *keys: Key) -> np.random.Generator:
        """
        返回指定子流的独立生成器；相同 (seed, keys) 总是得到相同序列

        Args:
            *keys: 子流键（整数或字符串）

        Returns:
            np.random.Generator: 新建的生成器
        """
        spawn_key = self.keys + tuple(_key_to_int(k) for k in keys)
        return np.random.default_rng(np.random.SeedSequence(entropy=self.seed, spawn_key=spawn_key))

    def sample(self, size, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """
        采样噪声

        Args:
            size: 输出形状
            rng: 指定生成器；为 None 时使用本噪声源的顺序流（每次调用得到新的噪声）

        Returns:
            np.ndarray: 噪声样本
        """
        if rng is None:
            if self._stream is None:
                self._stream = self.generator()
            rng = self._stream
        return np.asarray(self._sampler(rng, size), dtype=float)

    def reset(self):
        """
        重置顺序流
        """
        self._stream = None
