"""
异常模块

整个库共用的异常层级，根类为 ROMError
每个异常携带 exit_code，命令行入口据此返回退出码（2: 配置/参数错误，3: 计算错误）
"""

from typing import List, Optional


class ROMError(Exception):
    """库内所有异常的基类"""

    exit_code = 3

    def __init__(self, message: str = '', param_index: Optional[int] = None) -> None:
        super().__init__(message)
        self.message = message
        # 采集快照时由上层补充的参数序号
        self.param_index = param_index

    def tag_param(self, index: int) -> 'ROMError':
        """标记出错的参数序号并返回自身，便于 raise err.tag_param(j)"""
        self.param_index = index
        return self

    def __str__(self) -> str:
        if self.param_index is None:
            return self.message
        return f'{self.message} (param_index={self.param_index})'


class ConfigurationError(ROMError):
    """配置错误：未知采样策略、未知配置键、缺失字段等"""

    exit_code = 2


class ArgumentError(ROMError, ValueError):
    """参数错误：调用参数不满足前置条件"""

    exit_code = 2


class UnsupportedDimensionError(ArgumentError):
    """Halton 序列维度超出支持范围"""


class ShapeError(ArgumentError):
    """数组形状或轴标签不匹配"""


class EvaluationError(ROMError):
    """参数化系数在单元/参数上求值失败"""

    def __init__(self, message: str, cell: int, param: int) -> None:
        super().__init__(f'{message} (cell={cell}, param={param})')
        self.cell = cell
        self.param = param


class AssemblyError(ROMError):
    """装配错误：自由度编号越界等"""


class LinearSolveError(ROMError):
    """线性求解失败（矩阵奇异）"""


class ConvergenceError(ROMError):
    """Newton 迭代在 max_iter 内未收敛"""

    def __init__(self, message: str, last_norm: float, history: Optional[List[float]] = None) -> None:
        super().__init__(f'{message} (last_norm={last_norm:.3e})')
        self.last_norm = last_norm
        self.history = list(history or [])


class DegenerateInputError(ROMError):
    """退化输入：全零快照矩阵"""


class CholeskyError(ROMError):
    """范数矩阵非对称正定，Cholesky 分解失败"""


class RankDeficiencyError(ROMError):
    """DEIM 贪心过程中插值子系统奇异"""

    def __init__(self, message: str, column: int) -> None:
        super().__init__(f'{message} (column={column})')
        self.column = column


class SparsityConsistencyError(ROMError):
    """Jacobian 快照的稀疏模式不一致"""


class FormatError(ROMError):
    """文件魔数或版本不匹配"""


class CorruptionError(ROMError):
    """文件数据被截断或损坏"""


class CompatibilityError(ROMError):
    """加载的降阶算子与当前问题不兼容"""


class OperatorNotFoundError(ROMError, FileNotFoundError):
    """降阶算子文件不存在（驱动程序据此回退到离线构建）"""
