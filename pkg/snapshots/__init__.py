"""
快照模块
包含带轴标签的快照张量、mode 展开与 RBSN 文件读写
（快照采集见 snapshots.collect，依赖全阶求解器，不在此处导入）
"""

from .io import load_snapshots, save_snapshots
from .tensor import RealizationEcho, SnapshotTensor, contract_space, inverse_mode_reshape, mode_reshape

__all__ = [
    'RealizationEcho',
    'SnapshotTensor',
    'contract_space',
    'inverse_mode_reshape',
    'load_snapshots',
    'mode_reshape',
    'save_snapshots',
]
