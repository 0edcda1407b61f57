"""
路径集与解曲面的数据类型
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np

from core.grid import PartitionPlan, TimeGrid
from core.problem import SolveMode
from utils.error_handler import OrderingError


class EnsembleKind(str, Enum):
    GAUSSIAN = "gaussian"
    BERNOULLI = "bernoulli-enumerated"


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """
    布朗路径集

    values: W 在网格节点上的取值，形状 (M, N+1, d)，W[:, 0] = 0
    increments: ΔW_j = W_{j+1} - W_j，形状 (M, N, d)
    """
    grid: TimeGrid
    values: np.ndarray
    increments: np.ndarray
    kind: EnsembleKind
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))
        object.__setattr__(self, "increments", _readonly(self.increments))
        M, n_nodes, d = self.values.shape
        if n_nodes != self.grid.steps + 1 or self.increments.shape != (M, self.grid.steps, d):
            raise ValueError("路径数组形状与网格不一致")

    @property
    def paths(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    @property
    def terminal(self) -> np.ndarray:
        """W(T)，形状 (M, d)"""
        return self.values[:, -1, :]


@dataclass(frozen=True, eq=False)
class AdaptedProcess:
    """适应过程 Y，形状 (M, N+1, m)"""
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))

    def at(self, index: int) -> np.ndarray:
        return self.values[:, index, :]

    def mean(self) -> np.ndarray:
        """每个节点的路径均值，形状 (N+1, m)"""
        return self.values.mean(axis=0)


class TwoParamField:
    """
    二参数场 Z(t_i, t_j)

    values 形状 (M, N+1, N, m, d)：外层指标 i ∈ [0, N]，内层指标 j ∈ [0, N)。
    j ≥ i 为上块，j < i 为 M 块；没有 M 块时读写 M 块都会报错。
    读取尚未填充的位置抛出 OrderingError。
    """

    def __init__(self, values: np.ndarray, has_m_block: bool, filled: Optional[np.ndarray] = None):
        self._values = values
        self.has_m_block = bool(has_m_block)
        n_outer, n_inner = values.shape[1], values.shape[2]
        self._filled = np.zeros((n_outer, n_inner), dtype=bool) if filled is None else filled.astype(bool)
        self._frozen = False

    @classmethod
    def zeros(cls, paths: int, steps: int, m: int, d: int, has_m_block: bool) -> "TwoParamField":
        return cls(np.zeros((paths, steps + 1, steps, m, d)), has_m_block)

    @classmethod
    def from_array(cls, values: np.ndarray, has_m_block: bool) -> "TwoParamField":
        """由完整数组构造，填满模式允许的全部区域"""
        values = np.array(values, dtype=float)
        field_ = cls(values, has_m_block)
        field_._filled = field_.region_mask()
        if not has_m_block:
            field_._values[:, ~field_._filled] = 0.0
        return field_

    @staticmethod
    def nbytes_for(paths: int, steps: int, m: int, d: int) -> int:
        return paths * (steps + 1) * steps * m * d * 8

    # ------------------------------------------------------------ 形状

    @property
    def paths(self) -> int:
        return self._values.shape[0]

    @property
    def steps(self) -> int:
        return self._values.shape[2]

    @property
    def frozen(self) -> bool:
        return self._frozen

    @property
    def values(self) -> np.ndarray:
        """只读视图"""
        view = self._values.view()
        view.setflags(write=False)
        return view

    @property
    def filled(self) -> np.ndarray:
        return self._filled.copy()

    def region_mask(self) -> np.ndarray:
        """模式允许的区域：有 M 块时为整个方格，否则为 j ≥ i"""
        n_outer, n_inner = self._values.shape[1], self._values.shape[2]
        i = np.arange(n_outer)[:, None]
        j = np.arange(n_inner)[None, :]
        if self.has_m_block:
            return np.ones((n_outer, n_inner), dtype=bool)
        return j >= i

    # ------------------------------------------------------------ 读写

    def _check_index(self, i: int, j: int):
        if j < i and not self.has_m_block:
            raise OrderingError(f"adapted 模式下不存在 M 块 Z(t_{i}, t_{j})")

    def is_filled(self, i: int, j: int) -> bool:
        return bool(self._filled[i, j])

    def entry(self, i: int, j: int) -> np.ndarray:
        """Z(t_i, t_j)，形状 (M, m, d)"""
        self._check_index(i, j)
        if not self._filled[i, j]:
            raise OrderingError(f"Z(t_{i}, t_{j}) 尚未计算")
        return self._values[:, i, j]

    def row(self, i: int, j_start: int, j_stop: int) -> np.ndarray:
        """Z(t_i, t_j)，j ∈ [j_start, j_stop)，形状 (M, j_stop-j_start, m, d)"""
        for j in range(j_start, j_stop):
            self._check_index(i, j)
        if not np.all(self._filled[i, j_start:j_stop]):
            raise OrderingError(f"Z(t_{i}, ·) 在 [{j_start}, {j_stop}) 上尚未全部计算")
        return self._values[:, i, j_start:j_stop]

    def set_entry(self, i: int, j: int, value: np.ndarray):
        if self._frozen:
            raise OrderingError("Z 场已冻结，不能再写入")
        self._check_index(i, j)
        self._values[:, i, j] = value
        self._filled[i, j] = True

    def set_row(self, i: int, j_start: int, block: np.ndarray):
        """写入 Z(t_i, t_j)，j 从 j_start 开始，block 形状 (M, k, m, d)"""
        j_stop = j_start + block.shape[1]
        if self._frozen:
            raise OrderingError("Z 场已冻结，不能再写入")
        for j in range(j_start, j_stop):
            self._check_index(i, j)
        self._values[:, i, j_start:j_stop] = block
        self._filled[i, j_start:j_stop] = True

    def copy(self) -> "TwoParamField":
        return TwoParamField(self._values.copy(), self.has_m_block, self._filled.copy())

    def freeze(self) -> "TwoParamField":
        self._frozen = True
        self._values.setflags(write=False)
        return self

    def is_complete(self) -> bool:
        return bool(np.all(self._filled[self.region_mask()]))


@dataclass
class SubintervalReport:
    """单个子区间的 Picard 诊断"""
    lower: int
    upper: int
    iterations: int
    distances: List[float]
    ratios: List[float]
    converged: bool
    halvings: int = 0


@dataclass
class SolveDiagnostics:
    subintervals: List[SubintervalReport] = field(default_factory=list)
    equation_residual: Optional[float] = None
    m_identity_residual: Optional[float] = None
    m_identity_relative_l2: Optional[float] = None
    norms: List[Any] = field(default_factory=list)
    estimator_fallbacks: Dict[int, int] = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.subintervals)

    @property
    def max_ratio(self) -> float:
        ratios = [r for report in self.subintervals for r in report.ratios]
        return max(ratios) if ratios else 0.0


@dataclass
class SolutionSurface:
    """离散解 (Y, Z) 及其诊断"""
    grid: TimeGrid
    mode: SolveMode
    y: AdaptedProcess
    z: TwoParamField
    plan: Optional[PartitionPlan] = None
    diagnostics: SolveDiagnostics = field(default_factory=SolveDiagnostics)

    @property
    def converged(self) -> bool:
        return self.diagnostics.converged
