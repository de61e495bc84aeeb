# -*- coding: utf-8 -*-
"""
异常定义模块
"""

from typing import Any, Dict, Optional


class AugPortError(Exception):
    """
    项目内所有可预期错误的基类，命令行层据此返回退出码 2
    """


# ---------- 数据类错误 ----------

class DataError(AugPortError):
    """输入数据不满足要求"""


class MissingColumn(DataError):
    def __init__(self, column: str, available=None):
        self.column = column
        super().__init__(f"CSV 中缺少价格列: {column}，可用列: {list(available) if available is not None else []}")


class RowError(DataError):
    """带行号的数据错误，row 为 1 起始的数据行号（不含表头）"""

    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"第 {row} 行: {message}")


class NonPositivePrice(RowError):
    def __init__(self, row: int, value: float):
        self.value = value
        super().__init__(row, f"价格必须为正，实际为 {value}")


class ParseError(RowError):
    def __init__(self, row: int, raw: Any):
        self.raw = raw
        super().__init__(row, f"无法解析为有限数值: {raw!r}")


class SeriesTooShort(DataError):
    def __init__(self, length: int, required: int):
        self.length = length
        self.required = required
        super().__init__(f"序列长度 {length} 不足，至少需要 {required}")


class WindowTooLarge(DataError):
    def __init__(self, window: int, length: int):
        self.window = window
        self.length = length
        super().__init__(f"窗口 {window} 超过序列长度 {length}")


class LengthMismatch(DataError):
    pass


class DimensionMismatch(DataError):
    pass


# ---------- 模型与参数错误 ----------

class ModelError(AugPortError):
    """模型参数或数值条件不满足"""


class InvalidParameter(ModelError):
    pass


class NonPositivePriceGenerated(ModelError):
    def __init__(self, step: int, trajectory: int = 0):
        self.step = step
        self.trajectory = trajectory
        super().__init__(f"第 {trajectory} 条轨迹在第 {step} 步生成了非正价格")


class ZeroVolatility(ModelError):
    def __init__(self, message: str = "波动率 sigma 必须大于 0"):
        super().__init__(message)


class ZeroDrift(ModelError):
    def __init__(self, message: str = "漂移 r 必须大于 0"):
        super().__init__(message)


class NotPSD(ModelError):
    pass


class SingularCovariance(ModelError):
    pass


# ---------- 训练错误 ----------

class TrainingError(AugPortError):
    """神经网络训练相关错误"""


class SizeMismatch(TrainingError):
    pass


class EmptyBatch(TrainingError):
    pass


class NonFiniteLoss(TrainingError):
    def __init__(self, step: int, diagnostics: Optional[Dict[str, Any]] = None):
        self.step = step
        self.diagnostics = diagnostics or {}
        super().__init__(f"第 {step} 步损失非有限值，诊断信息: {self.diagnostics}")


# ---------- 回测错误 ----------

class BacktestError(AugPortError):
    """回测统计相关错误"""


class ZeroDispersion(BacktestError):
    def __init__(self):
        super().__init__("财富收益全部相同，Sharpe 比率无定义")


class NoExcessReturn(BacktestError):
    def __init__(self, r0: float):
        self.r0 = r0
        super().__init__(f"没有任何组合的平均收益超过无风险利率 {r0}")


class ConfigError(AugPortError):
    """配置文件或命令行参数错误"""
