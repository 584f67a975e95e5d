"""
参数空间模块
包含参数盒、瞬态参数空间与采样策略
"""

from .sampling import (
    STRATEGIES,
    ParamBatch,
    ParamSpace,
    Realization,
    TransientParamSpace,
    halton_point,
    sample_realization,
)

__all__ = [
    'STRATEGIES',
    'ParamBatch',
    'ParamSpace',
    'Realization',
    'TransientParamSpace',
    'halton_point',
    'sample_realization',
]
