"""
运行配置模块

RunConfig 从 JSON 文件加载，严格校验：未知键、缺失必填键、类型或取值范围错误
都在任何计算开始之前抛出 ConfigurationError
"""

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from utils.errors import ConfigurationError

REQUIRED_KEYS = ('problem', 'domain', 'cells', 'pdomain')
TDOMAIN_KEYS = ('t0', 'dt', 'nsteps')
INNER_PRODUCTS = ('h1_0', 'h1', 'l2', 'euclidean')
SAMPLING_NAMES = ('uniform', 'halton', 'latin_hypercube', 'normal', 'tensorial_uniform')


@dataclass(frozen=True)
class RunConfig:
    """
    一次离线/在线运行的全部配置

    Attributes:
        problem: 内置问题名称
        domain: 空间区域 (x0, x1[, y0, y1])
        cells: 每轴单元数
        pdomain: 参数盒 (lo1, hi1, lo2, hi2, ...)
        tdomain: 瞬态问题的 {t0, dt, nsteps}
        theta: 时间推进的 theta 参数
        tol: 降阶容差
        inner_product: 范数矩阵 X 的内积类型（None 表示按 Dirichlet 条件自动选择）
        nparams / nparams_res / nparams_jac: 解、残差、Jacobian 快照的参数个数
        sampling / seed: 离线采样策略与种子
        online_nparams / online_sampling / online_seed: 在线采样
        newton_tol / max_iter: Newton 停止准则
        output_dir: 输出目录
    """

    problem: str
    domain: Tuple[float, ...]
    cells: Tuple[int, ...]
    pdomain: Tuple[float, ...]
    tdomain: Optional[Dict[str, float]] = None
    theta: float = 1.0
    tol: float = 1e-4
    inner_product: Optional[str] = None
    nparams: int = 20
    nparams_res: int = 20
    nparams_jac: int = 20
    sampling: str = 'halton'
    seed: int = 0
    online_nparams: int = 10
    online_sampling: str = 'uniform'
    online_seed: int = 1234
    newton_tol: float = 1e-10
    max_iter: int = 20
    output_dir: str = 'results'

    def __post_init__(self) -> None:
        _check_numbers('domain', self.domain)
        _check_numbers('pdomain', self.pdomain)
        if len(self.domain) not in (2, 4):
            raise ConfigurationError(f'domain 需要 2 或 4 个数: {self.domain}')
        if len(self.cells) != len(self.domain) // 2 or not all(isinstance(c, int) and c >= 1 for c in self.cells):
            raise ConfigurationError(f'cells 必须是与 domain 维度一致的正整数列表: {self.cells}')
        if len(self.pdomain) == 0 or len(self.pdomain) % 2:
            raise ConfigurationError(f'pdomain 长度必须为正偶数: {self.pdomain}')
        if self.tdomain is not None:
            missing = [k for k in TDOMAIN_KEYS if k not in self.tdomain]
            unknown = [k for k in self.tdomain if k not in TDOMAIN_KEYS]
            if missing or unknown:
                raise ConfigurationError(f'tdomain 键错误: 缺失 {missing}，未知 {unknown}')
            if not self.tdomain['dt'] > 0 or int(self.tdomain['nsteps']) < 1:
                raise ConfigurationError(f'tdomain 需要 dt > 0 且 nsteps >= 1: {self.tdomain}')
        if not 0.0 < self.theta <= 1.0:
            raise ConfigurationError(f'theta 必须在 (0, 1] 内: {self.theta}')
        if not 0.0 < self.tol < 1.0:
            raise ConfigurationError(f'tol 必须在 (0, 1) 内: {self.tol}')
        for name in ('nparams', 'online_nparams', 'max_iter'):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigurationError(f'{name} 必须是正整数: {value}')
        # 超降阶快照数为 0 时在构造算子时报参数错误
        for name in ('nparams_res', 'nparams_jac', 'seed', 'online_seed'):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise ConfigurationError(f'{name} 必须是非负整数: {value}')
        for name in ('sampling', 'online_sampling'):
            if getattr(self, name) not in SAMPLING_NAMES:
                raise ConfigurationError(f'未知采样策略 {name}={getattr(self, name)}，可选: {SAMPLING_NAMES}')
        if self.inner_product is not None and self.inner_product not in INNER_PRODUCTS:
            raise ConfigurationError(f'未知内积: {self.inner_product}，可选: {INNER_PRODUCTS}')
        if not self.newton_tol > 0:
            raise ConfigurationError(f'newton_tol 必须为正: {self.newton_tol}')

    @property
    def tdomain_tuple(self) -> Optional[Tuple[float, float, int]]:
        if self.tdomain is None:
            return None
        return float(self.tdomain['t0']), float(self.tdomain['dt']), int(self.tdomain['nsteps'])

    def to_dict(self) -> Dict[str, Any]:
        """配置回显（写入算子清单与性能报告）"""
        data = asdict(self)
        data['domain'] = list(self.domain)
        data['cells'] = list(self.cells)
        data['pdomain'] = list(self.pdomain)
        return data

    def replace(self, **changes) -> 'RunConfig':
        data = self.to_dict()
        data.update(changes)
        return RunConfig.from_dict(data)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunConfig':
        """
        由字典构造并校验

        Raises:
            ConfigurationError: 未知键、缺失必填键或取值非法
        """
        if not isinstance(data, dict):
            raise ConfigurationError('配置必须是 JSON 对象')
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f'未知配置键: {unknown}')
        missing = [k for k in REQUIRED_KEYS if k not in data]
        if missing:
            raise ConfigurationError(f'缺失必填配置键: {missing}')
        values = dict(data)
        try:
            values['domain'] = tuple(float(v) for v in data['domain'])
            values['pdomain'] = tuple(float(v) for v in data['pdomain'])
            values['cells'] = tuple(_as_int('cells', c) for c in data['cells'])
            for name in ('nparams', 'nparams_res', 'nparams_jac', 'online_nparams', 'max_iter', 'seed',
                         'online_seed'):
                if name in data:
                    values[name] = _as_int(name, data[name])
            for name in ('theta', 'tol', 'newton_tol'):
                if name in data:
                    values[name] = float(data[name])
            if data.get('tdomain') is not None:
                values['tdomain'] = {k: float(v) for k, v in dict(data['tdomain']).items()}
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f'配置类型错误: {exc}') from exc
        return cls(**values)


def _as_int(name: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigurationError(f'{name} 必须是整数: {value!r}')
    return int(value)


def _check_numbers(name: str, values: Tuple[float, ...]) -> None:
    if not all(isinstance(v, (int, float)) for v in values):
        raise ConfigurationError(f'{name} 必须全部为数值: {values}')


def load_config(path: Union[str, Path]) -> RunConfig:
    """
    从 JSON 文件加载 RunConfig

    Args:
        path: 配置文件路径

    Returns:
        校验后的 RunConfig

    Raises:
        ConfigurationError: 文件不存在、JSON 语法错误或配置非法
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f'配置文件不存在: {path}')
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f'配置文件不是合法 JSON: {path}: {exc}') from exc
    return RunConfig.from_dict(data)
