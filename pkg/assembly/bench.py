"""
装配基准测试模块

对网格规模 x 参数个数的网格逐一比较批量装配与朴素装配的墙钟时间与内存分配，
输出 CSV 表头: size,P,path,wall_ns,alloc_bytes
"""

from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

from assembly.assembler import assemble_batched, assemble_naive_reference
from assembly.param_arrays import BatchedSparseCSC, BatchedVector, SparsityPattern
from fem.kernels import ParamFunction, WeakFormKernel
from fem.mesh import build_mesh_and_space
from params.sampling import ParamSpace, sample_realization
from utils.errors import ArgumentError
from utils.logger import get_logger
from utils.stats import measure

logger = get_logger(__name__)

BENCH_COLUMNS = ['size', 'P', 'path', 'wall_ns', 'alloc_bytes']
PATHS = ('batched', 'naive', 'batched_excl', 'naive_excl')


def bench_coefficient() -> ParamFunction:
    """基准使用的参数化系数 nu(mu, x) = mu_1 * x_1 + mu_2 * x_2"""
    return ParamFunction(lambda mu: (lambda x: mu[0] * x[:, 0] + mu[1] * x[:, 1]), name='nu')


def _assemble_pair(path: str, kernels: Dict[str, WeakFormKernel], realization, space, outs) -> None:
    """装配一次残差 + Jacobian"""
    assemble = assemble_batched if path.startswith('batched') else assemble_naive_reference
    if path.endswith('_excl'):
        assemble(kernels['jacobian'], realization, space, out=outs[0])
        assemble(kernels['residual'], realization, space, out=outs[1])
    else:
        assemble(kernels['jacobian'], realization, space)
        assemble(kernels['residual'], realization, space)


def bench_assembly(
    sizes: Sequence[int],
    param_counts: Sequence[int],
    repetitions: int = 3,
    seed: int = 0
) -> pd.DataFrame:
    """
    运行装配基准

    Args:
        sizes: 2D 网格每轴单元数列表
        param_counts: 参数个数 P 列表
        repetitions: 每个组合重复次数（墙钟取最小值，分配取平均值）
        seed: 参数采样种子

    Returns:
        列为 size,P,path,wall_ns,alloc_bytes 的 DataFrame；_excl 路径不计全局结构的分配
    """
    if not sizes or not param_counts:
        raise ArgumentError('sizes 与 param_counts 不能为空')
    repetitions = max(1, int(repetitions))

    nu = bench_coefficient()
    kernels = {
        'jacobian': WeakFormKernel('stiffness', nu),
        'residual': WeakFormKernel('load', nu),
    }
    box = ParamSpace.from_flat((1, 5, 1, 5))

    rows: List[dict] = []
    for size in sizes:
        _, space = build_mesh_and_space((0, 2, 0, 2), (size, size))
        # 预热：稀疏模式与积分器缓存不计入测量
        pattern = SparsityPattern.for_space(space)
        for P in param_counts:
            realization = sample_realization(box, P, 'uniform', seed)
            _assemble_pair('batched', kernels, realization, space, None)
            for path in PATHS:
                walls, allocs = [], []
                for _ in range(repetitions):
                    outs = (BatchedSparseCSC(pattern, np.zeros((P, pattern.nnz))),
                            BatchedVector(np.zeros((space.n_free, P), order='F')))
                    with measure() as m:
                        _assemble_pair(path, kernels, realization, space, outs)
                    walls.append(m.wall_ns)
                    allocs.append(m.alloc_bytes)
                rows.append({
                    'size': int(size),
                    'P': int(P),
                    'path': path,
                    'wall_ns': int(min(walls)),
                    'alloc_bytes': int(np.mean(allocs)),
                })
                logger.info('size=%d P=%d %s: %.3f ms, %d bytes', size, P, path,
                            min(walls) / 1e6, int(np.mean(allocs)))
    return pd.DataFrame(rows, columns=BENCH_COLUMNS)
