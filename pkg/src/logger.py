# -*- coding: utf-8 -*-
"""
日志配置模块
"""

import inspect
import logging
import logging.handlers
from pathlib import Path
from typing import Dict, Optional

from config.config import LOG_CONFIG


class LoggerManager:
    """
    日志管理器

    导入时只挂载控制台处理器；文件处理器由 setup_augport_logging() 按需挂载，
    这样库被测试或其他程序导入时不会在磁盘上产生日志文件。
    """

    def __init__(self):
        """
        初始化日志管理器
        """
        self._loggers: Dict[str, logging.Logger] = {}
        self._file_handlers_ready = False
        self._setup_root_logger()

    def _formatter(self) -> logging.Formatter:
        return logging.Formatter(
            fmt=LOG_CONFIG['format'],
            datefmt='%Y-%m-%d %H:%M:%S'
        )

    def _setup_root_logger(self):
        """
        设置根日志记录器（控制台）
        """
        root_logger = logging.getLogger()
        root_logger.setLevel(getattr(logging, LOG_CONFIG['level'].upper(), logging.INFO))

        # 已有控制台处理器时不重复添加
        if any(isinstance(h, logging.StreamHandler) and not isinstance(h, logging.FileHandler)
               for h in root_logger.handlers):
            return

        console_handler = logging.StreamHandler()
        console_handler.setLevel(logging.WARNING)
        console_handler.setFormatter(self._formatter())
        root_logger.addHandler(console_handler)

    def attach_file_handlers(self, log_file_path: Optional[Path] = None):
        """
        挂载主日志与错误日志文件处理器（带轮转）

        Args:
            log_file_path: 主日志路径，默认取 LOG_CONFIG['file_path']
        """
        if self._file_handlers_ready:
            return

        log_file_path = Path(log_file_path or LOG_CONFIG['file_path'])
        log_file_path.parent.mkdir(parents=True, exist_ok=True)
        root_logger = logging.getLogger()

        file_handler = logging.handlers.RotatingFileHandler(
            filename=log_file_path,
            maxBytes=LOG_CONFIG['max_bytes'],
            backupCount=LOG_CONFIG['backup_count'],
            encoding='utf-8'
        )
        file_handler.setLevel(getattr(logging, LOG_CONFIG['level'].upper(), logging.INFO))
        file_handler.setFormatter(self._formatter())
        root_logger.addHandler(file_handler)

        error_handler = logging.handlers.RotatingFileHandler(
            filename=log_file_path.parent / 'error.log',
            maxBytes=LOG_CONFIG['max_bytes'],
            backupCount=LOG_CONFIG['backup_count'],
            encoding='utf-8'
        )
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(self._formatter())
        root_logger.addHandler(error_handler)

        self._file_handlers_ready = True

    def get_logger(self, name: str) -> logging.Logger:
        """
        获取指定名称的日志记录器

        Args:
            name: 日志记录器名称

        Returns:
            logging.Logger: 日志记录器实例
        """
        if name not in self._loggers:
            self._loggers[name] = logging.getLogger(name)
        return self._loggers[name]

    def set_level(self, level: str, logger_name: Optional[str] = None):
        """
        设置日志级别

        Args:
            level: 日志级别（DEBUG, INFO, WARNING, ERROR, CRITICAL）
            logger_name: 日志记录器名称，None表示根记录器
        """
        log_level = getattr(logging, level.upper())

        if logger_name:
            self.get_logger(logger_name).setLevel(log_level)
            return

        root_logger = logging.getLogger()
        root_logger.setLevel(log_level)
        for handler in root_logger.handlers:
            if not isinstance(handler, logging.FileHandler):
                handler.setLevel(log_level)

    def create_module_logger(self, module_name: str) -> logging.Logger:
        """
        为模块创建专用的日志记录器和日志文件

        Args:
            module_name: 模块名称

        Returns:
            logging.Logger: 模块日志记录器
        """
        logger_name = f"src.{module_name}"
        logger = self.get_logger(logger_name)

        module_log_path = Path(LOG_CONFIG['file_path']).parent / f"{module_name}.log"
        if any(getattr(h, 'baseFilename', None) == str(module_log_path.resolve())
               for h in logger.handlers):
            return logger

        module_log_path.parent.mkdir(parents=True, exist_ok=True)
        handler = logging.handlers.RotatingFileHandler(
            filename=module_log_path,
            maxBytes=LOG_CONFIG['max_bytes'],
            backupCount=LOG_CONFIG['backup_count'],
            encoding='utf-8'
        )
        handler.setLevel(getattr(logging, LOG_CONFIG['level'].upper(), logging.INFO))
        handler.setFormatter(self._formatter())
        logger.addHandler(handler)

        return logger


# 创建全局日志管理器实例
logger_manager = LoggerManager()


def get_logger(name: str = None) -> logging.Logger:
    """
    获取日志记录器的便捷函数

    Args:
        name: 日志记录器名称，默认为调用模块名

    Returns:
        logging.Logger: 日志记录器实例
    """
    if name is None:
        frame = inspect.currentframe().f_back
        name = frame.f_globals.get('__name__', 'unknown')

    return logger_manager.get_logger(name)


def setup_augport_logging(level: Optional[str] = None):
    """
    设置命令行运行时的日志配置
    """
    logger_manager.attach_file_handlers()

    # 模拟、训练、验证三类长任务各有专用日志
    for module in ('procgen', 'nntrain', 'experiments'):
        logger_manager.create_module_logger(module)

    if level:
        logger_manager.set_level(level)

    # 设置第三方库的日志级别
    logging.getLogger('matplotlib').setLevel(logging.WARNING)
    logging.getLogger('numexpr').setLevel(logging.WARNING)
