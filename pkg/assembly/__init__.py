"""
批量装配模块
包含共享稀疏模式的参数化数组、批量/朴素装配与装配基准测试
"""

from fem.kernels import ParamBlock

from .assembler import assemble_batched, assemble_naive_reference, check_same_pattern
from .bench import BENCH_COLUMNS, bench_assembly
from .param_arrays import (
    PATTERN_BUILDS,
    BatchedSparseCSC,
    BatchedVector,
    SparsityPattern,
    nonzeros,
    scatter_nnz,
)

__all__ = [
    'BENCH_COLUMNS',
    'PATTERN_BUILDS',
    'BatchedSparseCSC',
    'BatchedVector',
    'ParamBlock',
    'SparsityPattern',
    'assemble_batched',
    'assemble_naive_reference',
    'bench_assembly',
    'check_same_pattern',
    'nonzeros',
    'scatter_nnz',
]
