"""
主程序入口 - 参数化 PDE 的约化基模型

子命令:
    offline  采集快照，构造并保存约化算子（已存在时直接加载）
    online   在新参数上执行超降阶在线求解并保存坐标与重构场
    eval     在同一组在线参数上运行全阶基准，输出 PerfReport（JSON + CSV）
    bench    批量装配基准（CSV: size,P,path,wall_ns,alloc_bytes）

退出码: 0 成功，2 配置/参数错误，3 计算错误
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from assembly.bench import bench_assembly
from fem.problems import ProblemDef, problem_from_config
from params.sampling import Realization, sample_realization
from rom.operator import ReducedOperator, build_reduced_operator
from rom.operator_io import load_operator, save_operator
from rom.solver import online_solve, reconstruct
from snapshots.collect import collect_snapshots
from snapshots.io import load_snapshots, save_snapshots
from snapshots.tensor import RealizationEcho, SnapshotTensor
from utils.config import RunConfig, load_config
from utils.errors import ConfigurationError, OperatorNotFoundError, ROMError
from utils.evaluation import eval_performance
from utils.logger import setup_logging
from utils.stats import RunStats

CONFIG_FILE = 'config.json'
SNAPSHOT_FILE = 'snapshots.rbsn'
COORDS_FILE = 'coords.rbsn'
SOLUTION_FILE = 'solution.rbsn'
ONLINE_FILE = 'online.json'
ONLINE_KEYS = ('nparams', 'sampling', 'seed', 'rom_stats')


def _banner(title: str) -> None:
    print('=' * 80)
    print(title)
    print('=' * 80)


def _operator_context(op_dir: Path) -> Tuple[RunConfig, ProblemDef]:
    config_path = op_dir / CONFIG_FILE
    if not config_path.exists():
        raise OperatorNotFoundError(f'算子目录缺少 {CONFIG_FILE}: {op_dir}')
    config = load_config(config_path)
    return config, problem_from_config(config)


def _print_operator(rbop: ReducedOperator) -> None:
    info = rbop.summary()
    print(f'  约化维数: n = {info["n"]} (n1 = {info["n1"]}, n2 = {info["n2"]})')
    print(f'  残差仿射项: {info["residual_terms"]} | 约化单元: {info["residual_cells"]}')
    print(f'  Jacobian 仿射项: {info["jacobian_terms"]} | 约化单元: {info["jacobian_cells"]}')
    print(f'  离线耗时: {info["offline_wall_ns"] / 1e9:.3f} s')


def cmd_offline(args: argparse.Namespace) -> int:
    """离线阶段：加载已有算子，或采集快照并构造、保存算子"""
    config = load_config(args.config)
    problem = problem_from_config(config)
    out = Path(args.out or Path(config.output_dir) / config.problem)

    _banner(f'离线阶段 - {config.problem}')
    print(f'自由自由度: {problem.space.n_free} | 单元: {problem.space.mesh.n_cells}')

    # 1. 优先加载已保存的算子
    if not args.force:
        try:
            rbop = load_operator(out, problem, tol=config.tol)
            print(f'\n✓ loaded: {out}')
            _print_operator(rbop)
            return 0
        except OperatorNotFoundError:
            print('\n未找到已保存的算子，开始离线计算')

    # 2. 采集解快照
    realization = sample_realization(problem.param_space, config.nparams, config.sampling, config.seed)
    snaps, fom_stats = collect_snapshots(problem, realization, config.theta, config.newton_tol, config.max_iter)
    print(f'  ✓ 快照 {snaps.dims}，全阶耗时 {fom_stats.wall_ns / 1e9:.3f} s')

    # 3. 构造约化算子
    rbop = build_reduced_operator(problem, config, snapshots=snaps)
    print('  ✓ 约化算子构造完成')
    _print_operator(rbop)

    # 4. 保存
    out.mkdir(parents=True, exist_ok=True)
    save_snapshots(snaps, out / SNAPSHOT_FILE)
    path = save_operator(rbop, out)
    with open(out / CONFIG_FILE, 'w', encoding='utf-8') as f:
        json.dump(config.to_dict(), f, indent=2, ensure_ascii=False)
    print(f'\n✓ saved: {path}')
    return 0


def _online_realization(problem: ProblemDef, nparams: int, sampling: str, seed: int) -> Realization:
    return sample_realization(problem.param_space, nparams, sampling, seed)


def cmd_online(args: argparse.Namespace) -> int:
    """在线阶段：超降阶求解并保存坐标与重构场"""
    op_dir = Path(args.op)
    config, problem = _operator_context(op_dir)
    rbop = load_operator(op_dir, problem, tol=config.tol)
    nparams = args.nparams or config.online_nparams
    sampling = args.sampling or config.online_sampling
    seed = config.online_seed if args.seed is None else args.seed
    if seed == config.seed and sampling == config.sampling:
        raise ConfigurationError('在线参数必须使用与离线不同的种子或采样策略')

    _banner(f'在线阶段 - {config.problem}')
    realization = _online_realization(problem, nparams, sampling, seed)
    coords, rom_stats = online_solve(rbop, realization, config.newton_tol, config.max_iter)
    free, _ = reconstruct(rbop, coords, realization)
    print(f'  ✓ {nparams} 个参数求解完成，在线耗时 {rom_stats.wall_ns / 1e6:.3f} ms')

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    echo = RealizationEcho.of(realization)
    save_snapshots(SnapshotTensor(coords, ('reduced', 'param'), echo), out / COORDS_FILE)
    save_snapshots(free, out / SOLUTION_FILE)
    with open(out / ONLINE_FILE, 'w', encoding='utf-8') as f:
        json.dump({'nparams': nparams, 'sampling': sampling, 'seed': seed, 'rom_stats': rom_stats.to_dict()},
                  f, indent=2)
    print(f'\n✓ saved: {out}')
    return 0


def _read_online(online_dir: Path) -> Tuple[dict, RunStats]:
    """读取在线阶段记录，缺文件、缺键或字段非法都按配置错误处理"""
    online_path = online_dir / ONLINE_FILE
    if not online_path.exists():
        raise ConfigurationError(f'在线结果目录缺少 {ONLINE_FILE}: {online_dir}')
    try:
        with open(online_path, 'r', encoding='utf-8') as f:
            online = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f'{online_path} 不是合法 JSON: {exc}') from exc
    if not isinstance(online, dict):
        raise ConfigurationError(f'{online_path} 顶层必须是对象')
    missing = [key for key in ONLINE_KEYS if key not in online]
    if missing:
        raise ConfigurationError(f'{online_path} 缺少字段: {missing}')
    try:
        rom_stats = RunStats(**online['rom_stats'])
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f'{online_path} 中 rom_stats 非法: {exc}') from exc
    return online, rom_stats


def cmd_eval(args: argparse.Namespace) -> int:
    """评估阶段：全阶基准 + PerfReport"""
    op_dir, online_dir = Path(args.op), Path(args.online)
    config, problem = _operator_context(op_dir)
    rbop = load_operator(op_dir, problem, tol=config.tol)
    online, rom_stats = _read_online(online_dir)

    _banner(f'评估 - {config.problem}')
    realization = _online_realization(problem, online['nparams'], online['sampling'], online['seed'])
    coords = load_snapshots(online_dir / COORDS_FILE).data

    # 1. 全阶基准（与在线阶段相同的参数）
    fom_snaps, fom_stats = collect_snapshots(problem, realization, config.theta, config.newton_tol,
                                             config.max_iter)
    print(f'  ✓ 全阶基准完成，耗时 {fom_stats.wall_ns / 1e9:.3f} s')

    # 2. 报告
    report = eval_performance(rbop, realization, fom_snaps, fom_stats, coords, rom_stats)
    out = Path(args.out) if args.out else online_dir
    path = report.save(out)

    print(f'\n{"指标":<20} {"数值":>20}')
    print('-' * 80)
    print(f'{"error":<20} {report.error:>20.6e}')
    print(f'{"speedup_time":<20} {report.speedup_time:>20.4f}')
    print(f'{"speedup_memory":<20} {report.speedup_memory:>20.4f}')
    print(f'\n✓ saved: {path}')
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    """装配基准"""
    _banner('批量装配基准')
    df = bench_assembly(args.sizes, args.params, args.reps, args.seed)
    print(df.to_string(index=False))
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(out, index=False)
        print(f'\n✓ saved: {out}')
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='rbrom', description='参数化 PDE 的约化基模型（离线/在线/评估/基准）')
    parser.add_argument('--verbose', '-v', action='count', default=0, help='日志详细程度（-v INFO，-vv DEBUG）')
    sub = parser.add_subparsers(dest='command', metavar='{offline,online,eval,bench}')
    sub.required = True

    p = sub.add_parser('offline', help='采集快照并构造约化算子')
    p.add_argument('--config', required=True, help='JSON 配置文件')
    p.add_argument('--out', help='算子输出目录（默认 <output_dir>/<problem>）')
    p.add_argument('--force', action='store_true', help='忽略已保存的算子，重新计算')
    p.set_defaults(func=cmd_offline)

    p = sub.add_parser('online', help='超降阶在线求解')
    p.add_argument('--op', required=True, help='算子目录')
    p.add_argument('--nparams', type=int, help='在线参数个数（默认取配置）')
    p.add_argument('--sampling', help='在线采样策略（默认取配置）')
    p.add_argument('--seed', type=int, help='在线采样种子（默认取配置）')
    p.add_argument('--out', required=True, help='在线结果目录')
    p.set_defaults(func=cmd_online)

    p = sub.add_parser('eval', help='全阶基准与性能报告')
    p.add_argument('--op', required=True, help='算子目录')
    p.add_argument('--online', required=True, help='在线结果目录')
    p.add_argument('--out', help='报告输出目录（默认写入在线结果目录）')
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('bench', help='批量装配基准')
    p.add_argument('--sizes', type=int, nargs='+', required=True, help='每轴单元数列表')
    p.add_argument('--params', type=int, nargs='+', required=True, help='参数个数 P 列表')
    p.add_argument('--reps', type=int, default=3, help='重复次数')
    p.add_argument('--seed', type=int, default=0, help='参数采样种子')
    p.add_argument('--out', help='CSV 输出路径')
    p.set_defaults(func=cmd_bench)
    return parser


def _error_record(exc: BaseException, code: int) -> str:
    message = str(exc).replace('\\', '\\\\').replace('"', '\\"').replace('\n', ' ')
    return f'error kind={type(exc).__name__} exit={code} message="{message}"'


def cli_main(argv: Optional[List[str]] = None) -> int:
    """
    命令行入口

    Args:
        argv: 参数列表（默认 sys.argv[1:]）

    Returns:
        退出码：0 成功，2 配置/参数错误，3 计算错误
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse 对未知子命令/缺失参数已打印 usage
        return int(exc.code or 0)

    setup_logging({0: None, 1: 'INFO'}.get(args.verbose, 'DEBUG'))
    try:
        return args.func(args)
    except ROMError as exc:
        print(_error_record(exc, exc.exit_code), file=sys.stderr)
        return exc.exit_code
    except (OSError, MemoryError, np.linalg.LinAlgError) as exc:
        print(_error_record(exc, 3), file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(cli_main())


if __name__ == '__main__':
    main()
