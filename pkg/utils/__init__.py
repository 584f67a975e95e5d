"""
工具模块
包含异常层级、日志配置、运行统计与分配计数、运行配置加载
（误差评估见 utils.evaluation，依赖降阶模块，不在此处导入）
"""

from .config import RunConfig, load_config
from .errors import ConfigurationError, ROMError
from .logger import get_logger, setup_logging
from .stats import AllocCounter, RunStats, measure

__all__ = [
    'AllocCounter',
    'ConfigurationError',
    'ROMError',
    'RunConfig',
    'RunStats',
    'get_logger',
    'load_config',
    'measure',
    'setup_logging',
]
