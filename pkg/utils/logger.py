"""
日志模块

统一的 logging 配置。库内模块通过 get_logger(__name__) 获取 logger，
日志级别由环境变量 RBROM_LOG_LEVEL 或命令行 --verbose 控制
"""

import logging
import os
from typing import Optional

_ROOT_NAME = 'rbrom'
_configured = False


def setup_logging(level: Optional[str] = None) -> logging.Logger:
    """
    配置包级 logger（只添加一次 handler）

    Args:
        level: 日志级别名称（如 'INFO'、'DEBUG'），为 None 时读取 RBROM_LOG_LEVEL，默认 WARNING

    Returns:
        包级 logger
    """
    global _configured
    root = logging.getLogger(_ROOT_NAME)
    level_name = (level or os.environ.get('RBROM_LOG_LEVEL', 'WARNING')).upper()
    root.setLevel(getattr(logging, level_name, logging.WARNING))
    if not _configured:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter('%(asctime)s %(levelname)s [%(name)s] %(message)s'))
        root.addHandler(handler)
        root.propagate = False
        _configured = True
    return root


def get_logger(name: str) -> logging.Logger:
    """返回挂在包级 logger 下的子 logger"""
    if not _configured:
        setup_logging()
    return logging.getLogger(f'{_ROOT_NAME}.{name}')
