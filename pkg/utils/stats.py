"""
运行统计模块

RunStats 记录墙钟时间、内存分配估计和 Newton 迭代次数；
内存分配由库自身的分配钩子（zeros/empty/track）计数，不依赖操作系统级剖析
"""

import time
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Iterator, List, Tuple

import numpy as np

_active: ContextVar[Tuple['AllocCounter', ...]] = ContextVar('rbrom_alloc_counters', default=())


class AllocCounter:
    """
    分配计数器

    进入上下文后，所有经由本模块钩子申请的字节数都会累加到当前激活的全部计数器上（支持嵌套）
    """

    def __init__(self) -> None:
        self.bytes = 0
        self._token = None

    def __enter__(self) -> 'AllocCounter':
        self._token = _active.set(_active.get() + (self,))
        return self

    def __exit__(self, *exc) -> None:
        _active.reset(self._token)


def record(nbytes: int) -> None:
    """向所有激活的计数器登记 nbytes 字节"""
    for counter in _active.get():
        counter.bytes += int(nbytes)


def track(array: np.ndarray) -> np.ndarray:
    """登记一个已创建数组的字节数并原样返回"""
    record(array.nbytes)
    return array


def zeros(shape, dtype=float, order: str = 'C') -> np.ndarray:
    return track(np.zeros(shape, dtype=dtype, order=order))


def empty(shape, dtype=float, order: str = 'C') -> np.ndarray:
    return track(np.empty(shape, dtype=dtype, order=order))


@dataclass
class RunStats:
    """
    一次求解调用的代价统计

    Attributes:
        wall_ns: 墙钟时间（纳秒）
        alloc_bytes: 库内分配字节数
        iterations: 每个参数的 Newton 迭代次数
        nparams: 参数个数（用于求平均代价）
    """

    wall_ns: int = 0
    alloc_bytes: int = 0
    iterations: List[int] = field(default_factory=list)
    nparams: int = 0

    def __post_init__(self) -> None:
        if self.wall_ns < 0 or self.alloc_bytes < 0:
            raise ValueError('RunStats 字段必须非负')

    @property
    def mean_wall_ns(self) -> float:
        return self.wall_ns / max(self.nparams, 1)

    @property
    def mean_alloc_bytes(self) -> float:
        return self.alloc_bytes / max(self.nparams, 1)

    def to_dict(self) -> dict:
        return {
            'wall_ns': int(self.wall_ns),
            'alloc_bytes': int(self.alloc_bytes),
            'iterations': [int(i) for i in self.iterations],
            'nparams': int(self.nparams),
        }


@dataclass
class Measurement:
    wall_ns: int = 0
    alloc_bytes: int = 0


@contextmanager
def measure() -> Iterator[Measurement]:
    """
    同时测量墙钟时间与库内分配

    Example:
        >>> with measure() as m:
        ...     x = zeros(10)
        >>> m.alloc_bytes
        80
    """
    result = Measurement()
    start = time.perf_counter_ns()
    with AllocCounter() as counter:
        try:
            yield result
        finally:
            result.wall_ns = time.perf_counter_ns() - start
            result.alloc_bytes = counter.bytes
