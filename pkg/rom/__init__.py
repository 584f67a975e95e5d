"""
降阶模块
包含 POD / 空间-时间约化基、DEIM/MDEIM 超降阶、约化算子的离线构造、在线求解与算子文件读写
"""

from .reduction import Projection, TransientProjection, galerkin_coords, pod, randomized_range, randomized_svd, strb
from .hyper_reduction import (
    HyperReduction,
    ReducedIntegrationDomain,
    deim_indices,
    hyperreduce_matrix,
    hyperreduce_vector,
    online_coefficients,
    online_reduced_term,
    reduced_domain,
    sample_entries,
)
from .operator import RBSpace, ReducedOperator, build_reduced_operator, inner_product_matrix
from .solver import online_solve, reconstruct
from .operator_io import load_operator, save_operator

__all__ = [
    'HyperReduction',
    'Projection',
    'RBSpace',
    'ReducedIntegrationDomain',
    'ReducedOperator',
    'TransientProjection',
    'build_reduced_operator',
    'deim_indices',
    'galerkin_coords',
    'hyperreduce_matrix',
    'hyperreduce_vector',
    'inner_product_matrix',
    'load_operator',
    'online_coefficients',
    'online_reduced_term',
    'online_solve',
    'pod',
    'randomized_range',
    'randomized_svd',
    'reconstruct',
    'reduced_domain',
    'sample_entries',
    'save_operator',
    'strb',
]
