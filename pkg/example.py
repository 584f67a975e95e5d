"""
示例脚本：热方程的约化基模型快速开始

演示完整流程：加载或构造约化算子 → 在线求解 → 全阶基准 → 性能报告
"""

from pathlib import Path

from fem.problems import problem_from_config
from params.sampling import sample_realization
from rom.operator import build_reduced_operator
from rom.operator_io import load_operator, save_operator
from rom.solver import online_solve
from snapshots.collect import collect_snapshots
from utils.config import load_config
from utils.errors import OperatorNotFoundError
from utils.evaluation import eval_performance


def example_heat():
    """
    示例：二维热方程（10x10 网格，dt = 0.01，10 个时间步）
    """
    # 1. 加载配置与问题
    config = load_config('configs/heat2d.json')
    problem = problem_from_config(config)
    out_dir = Path(config.output_dir) / config.problem
    print(f'问题: {problem.name}，自由自由度 {problem.space.n_free}，时间步 {problem.param_space.nsteps}')

    # 2. 加载已保存的约化算子，不存在时离线构造
    try:
        rbop = load_operator(out_dir, problem, tol=config.tol)
        print('已加载约化算子')
    except OperatorNotFoundError:
        print('离线构造约化算子...')
        rbop = build_reduced_operator(problem, config)
        save_operator(rbop, out_dir)
    print(f'约化维数: n = {rbop.n} (空间 {rbop.n1} x 时间 {rbop.n2})')

    # 3. 在线求解（与离线不同的种子）
    realization = sample_realization(problem.param_space, config.online_nparams, config.online_sampling,
                                     config.online_seed)
    coords, rom_stats = online_solve(rbop, realization)

    # 4. 全阶基准
    fom_snaps, fom_stats = collect_snapshots(problem, realization, config.theta)

    # 5. 性能报告
    report = eval_performance(rbop, realization, fom_snaps, fom_stats, coords, rom_stats)

    print('\n' + '=' * 60)
    print('性能报告')
    print('=' * 60)
    print(f'平均相对误差: {report.error:.3e}')
    print(f'在线时间加速比: {report.speedup_time:.2f}')
    print(f'在线内存加速比: {report.speedup_memory:.2f}')
    print(f'离线耗时: {report.offline_wall_ns / 1e9:.2f} s')
    print('=' * 60)

    path = report.save(out_dir)
    print(f'\n报告已保存到: {path}')


if __name__ == '__main__':
    example_heat()
