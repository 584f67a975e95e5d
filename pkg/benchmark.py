"""
装配基准脚本 - 批量装配 vs 朴素装配

对网格规模 x 参数个数 P 的网格运行基准，打印墙钟时间与内存分配对比，
检查批量装配的分配字节数随 P 仿射增长且不超过朴素装配
"""

import argparse
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from assembly.bench import bench_assembly
from utils.logger import setup_logging


def affine_fit(df: pd.DataFrame, size: int, path: str) -> Tuple[float, float, float]:
    """
    用首尾两点拟合 alloc_bytes = a + b * P，返回 (a, b, 其余点的最大相对偏差)
    """
    rows = df[(df['size'] == size) & (df['path'] == path)].sort_values('P')
    P = rows['P'].to_numpy(dtype=float)
    alloc = rows['alloc_bytes'].to_numpy(dtype=float)
    if P.size < 2:
        return float(alloc[0]) if alloc.size else 0.0, 0.0, 0.0
    slope = (alloc[-1] - alloc[0]) / (P[-1] - P[0])
    intercept = alloc[0] - slope * P[0]
    predicted = intercept + slope * P
    deviation = np.abs(alloc - predicted) / np.maximum(np.abs(alloc), 1.0)
    return float(intercept), float(slope), float(deviation.max())


def run_benchmark(sizes: List[int], param_counts: List[int], repetitions: int,
                  out: Optional[Path]) -> pd.DataFrame:
    """
    运行装配基准并输出对比表
    """
    # 1. 运行基准
    print('=' * 80)
    print('批量装配基准')
    print('=' * 80)
    print(f'网格规模: {sizes}')
    print(f'参数个数: {param_counts}')
    print(f'重复次数: {repetitions}')
    df = bench_assembly(sizes, param_counts, repetitions)

    # 2. 对比表
    wide = df.pivot_table(index=['size', 'P'], columns='path', values=['wall_ns', 'alloc_bytes'])
    print('\n' + '=' * 80)
    print('结果对比（墙钟 ms / 分配 KiB）')
    print('=' * 80)
    print(f'{"网格":<8} {"P":<6} {"批量(ms)":<12} {"朴素(ms)":<12} {"批量(KiB)":<14} {"朴素(KiB)":<14} {"状态":<6}')
    print('-' * 80)
    failures = 0
    for (size, P), row in wide.iterrows():
        batched_alloc = row[('alloc_bytes', 'batched')]
        naive_alloc = row[('alloc_bytes', 'naive')]
        ok = P < 2 or batched_alloc <= naive_alloc
        failures += not ok
        print(f'{size:<8} {P:<6} '
              f'{row[("wall_ns", "batched")] / 1e6:<12.3f} '
              f'{row[("wall_ns", "naive")] / 1e6:<12.3f} '
              f'{batched_alloc / 1024:<14.1f} '
              f'{naive_alloc / 1024:<14.1f} '
              f'{"✓" if ok else "❌":<6}')
    print('=' * 80)

    # 3. 分配字节数的仿射拟合
    print('\n【分配字节数仿射拟合】 alloc = a + b * P')
    for size in sizes:
        for path in ('batched', 'naive'):
            a, b, dev = affine_fit(df, size, path)
            print(f'  size={size:<4} {path:<8} a = {a:>12.0f}  b = {b:>12.0f}  最大偏差 = {dev:.2e}')

    if failures:
        print(f'\n⚠️ {failures} 个组合中批量装配分配多于朴素装配')
    else:
        print('\n✓ P >= 2 时批量装配的分配均不超过朴素装配')

    # 4. 保存
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(out, index=False)
        print(f'\n结果已保存到: {out}')
    print('=' * 80)
    return df


def main() -> None:
    parser = argparse.ArgumentParser(description='批量装配 vs 朴素装配基准')
    parser.add_argument('--sizes', type=int, nargs='+', default=[8, 16, 32], help='每轴单元数列表')
    parser.add_argument('--params', type=int, nargs='+', default=[1, 2, 4, 8], help='参数个数列表')
    parser.add_argument('--reps', type=int, default=3, help='重复次数')
    parser.add_argument('--out', type=str, default='results/bench_assembly.csv', help='CSV 输出路径')
    parser.add_argument('--verbose', action='store_true', help='输出 INFO 日志')
    args = parser.parse_args()

    setup_logging('INFO' if args.verbose else None)
    run_benchmark(args.sizes, args.params, args.reps, Path(args.out) if args.out else None)


if __name__ == '__main__':
    main()
