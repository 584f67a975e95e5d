"""
有限元模块
包含笛卡尔网格、一阶 Lagrange 空间、参数化弱形式核、内置问题与全阶求解器
"""

from .mesh import CartesianMesh, FESpaceDef, build_mesh_and_space
from .kernels import CellIntegrator, ParamFunction, WeakFormKernel, elemental_eval
from .problems import PROBLEMS, ProblemDef, build_problem, problem_from_config
from .solver import fom_solve_steady, fom_solve_transient, interpolate_dirichlet

__all__ = [
    'PROBLEMS',
    'CartesianMesh',
    'CellIntegrator',
    'FESpaceDef',
    'ParamFunction',
    'ProblemDef',
    'WeakFormKernel',
    'build_mesh_and_space',
    'build_problem',
    'elemental_eval',
    'fom_solve_steady',
    'fom_solve_transient',
    'interpolate_dirichlet',
    'problem_from_config',
]
