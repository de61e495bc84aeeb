# -*- coding: utf-8 -*-
"""
运行配置解析与产物写出模块

优先级：命令行显式参数 > 配置文件（扁平 key=value）> config/config.py 默认值。
每个产物都内嵌解析后的配置与配置哈希。
"""

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import orjson
from dotenv import dotenv_values

from config.config import OUTPUT_CONFIG
from src import __version__
from src.errors import ConfigError

logger = logging.getLogger(__name__)

JSON_OPTIONS = orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"无法序列化: {type(value).__name__}")


def dumps(payload: Any) -> bytes:
    """
    键排序、缩进 2 的稳定 JSON
    """
    return orjson.dumps(payload, default=_to_jsonable, option=JSON_OPTIONS)


def config_hash(params: Mapping[str, Any]) -> str:
    """
    对按键排序的 JSON 做 sha256，取前 OUTPUT_CONFIG['hash_length'] 位
    """
    canonical = orjson.dumps(dict(params), default=_to_jsonable,
                             option=orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY)
    return hashlib.sha256(canonical).hexdigest()[:OUTPUT_CONFIG['hash_length']]


@dataclass(frozen=True)
class RunConfig:
    """
    一次运行的完整配置

    Args:
        command: 子命令名
        params: 解析后的参数
        seed: 根种子
    """
    command: str
    params: Dict[str, Any]
    seed: int = 0
    config_hash: str = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, 'config_hash', config_hash({'command': self.command, **self.params}))

    def __getitem__(self, key: str) -> Any:
        return self.params[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.params.get(key, default)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'command': self.command,
            'params': self.params,
            'seed': self.seed,
            'config_hash': self.config_hash,
            'version': __version__,
        }


def load_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """
    读取扁平 key=value 配置文件（# 开头为注释）
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"配置文件不存在: {path}")
    values = dotenv_values(path)
    return {key.strip().lower().replace('-', '_'): value
            for key, value in values.items() if value is not None}


def _coerce(key: str, raw: str, default: Any) -> Any:
    """
    把配置文件中的字符串按默认值的类型转换
    """
    text = str(raw).strip()
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in ('1', 'true', 'yes', 'on'):
                return True
            if lowered in ('0', 'false', 'no', 'off'):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, (tuple, list)):
            items = [item.strip() for item in text.split(',') if item.strip()]
            if default and isinstance(default[0], (int, float)) and not isinstance(default[0], bool):
                kind = type(default[0])
                return tuple(kind(item) for item in items)
            return tuple(items)
    except ValueError:
        raise ConfigError(f"配置项 {key} 的值无法解析: {raw!r}")
    return text


def resolve(command: str, defaults: Mapping[str, Any], file_values: Optional[Mapping[str, str]] = None,
            overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    合并默认值、配置文件与命令行参数

    Args:
        command: 子命令名
        defaults: 默认参数
        file_values: 配置文件读取的字符串值
        overrides: 命令行显式给出的参数（值为 None 的项视为未给出）

    Returns:
        RunConfig: 解析后的配置
    """
    params = dict(defaults)

    for key, raw in (file_values or {}).items():
        if key not in params:
            logger.warning(f"配置文件中的未知项 {key} 被忽略（子命令 {command}）")
            continue
        params[key] = _coerce(key, raw, params[key])

    for key, value in (overrides or {}).items():
        if value is not None:
            params[key] = value

    params = {key: (list(value) if isinstance(value, tuple) else value) for key, value in params.items()}
    seed = int(params.get('seed', 0))
    return RunConfig(command=command, params=params, seed=seed)


def write_json(path: Union[str, Path], payload: Any) -> Path:
    """
    写出稳定键序的 JSON 报告
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(payload))
    return path


def write_meta(artifact: Union[str, Path], run: RunConfig, extra: Optional[Dict[str, Any]] = None) -> Path:
    """
    在产物旁写出 <文件名>.meta.json，内含配置与配置哈希
    """
    artifact = Path(artifact)
    payload = {'artifact': artifact.name, 'run': run.to_dict()}
    if extra:
        payload.update(extra)
    return write_json(artifact.with_name(artifact.name + '.meta.json'), payload)


def output_path(name: str, directory: Optional[Union[str, Path]] = None) -> Path:
    """
    产物路径，默认放在 OUTPUT_CONFIG['dir'] 下
    """
    return Path(directory or OUTPUT_CONFIG['dir']) / name
