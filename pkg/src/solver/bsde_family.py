"""
以外层时间 t_i 为参数的 BSDE 族

对固定的 i，从终端值出发向后递推:
    Z_ij = (1/h)·E_j[λ_{j+1} ΔW_j]
    λ_ij = E_j[λ_{j+1}] + h·g(t_i, t_j, y_j, Z_ij, ζ = z(t_j, t_i))
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.problem import ProblemSpec
from core.surfaces import PathEnsemble, TwoParamField
from stochastics.estimators import CondExpEstimator


@dataclass
class FamilyRow:
    """
    单个外层指标的递推结果

    lam[:, k] 对应 λ(t_i, t_{stop+k})，k ∈ [0, start-stop]；
    z[:, k] 对应 Z(t_i, t_{stop+k})，k ∈ [0, start-stop)。
    """
    outer: int
    stop: int
    start: int
    lam: np.ndarray
    z: np.ndarray

    @property
    def value_at_stop(self) -> np.ndarray:
        """λ(t_i, t_stop)，形状 (M, m)"""
        return self.lam[:, 0]


def bsde_family_step(spec: ProblemSpec, ensemble: PathEnsemble, estimator: CondExpEstimator,
                     outer: int, stop: int, terminal: np.ndarray, frozen_y: np.ndarray,
                     zeta_field: Optional[TwoParamField] = None, start: Optional[int] = None) -> FamilyRow:
    """
    对外层指标 outer 求解 BSDE 族的一行

    Args:
        outer: 外层指标 i
        stop: 递推终止指标 r（含）
        terminal: 在 t_start 处的终端值，形状 (M, m)
        frozen_y: 冻结的 y 迭代，形状 (M, N+1, m)
        zeta_field: 提供 ζ = z(t_j, t_i) 的场；生成元不含 ζ 时可为 None
        start: 终端所在指标，默认 N

    Returns:
        FamilyRow

    Raises:
        OrderingError: 生成元需要 ζ 但对应位置尚未计算
    """
    grid = ensemble.grid
    start = grid.steps if start is None else start
    if not 0 <= stop <= start <= grid.steps:
        raise ValueError(f"指标越界: stop={stop}, start={start}, N={grid.steps}")

    M = ensemble.paths
    lam = np.empty((M, start - stop + 1, spec.m))
    z_row = np.empty((M, start - stop, spec.m, spec.d))
    lam[:, -1] = terminal
    t_outer = grid.t(outer)
    uses_zeta = spec.uses_zeta

    for j in range(start - 1, stop - 1, -1):
        k = j - stop
        nxt = lam[:, k + 1]
        z_ij = estimator.martingale_coeffs(nxt, ensemble, j)
        zeta = zeta_field.entry(j, outer) if uses_zeta else None
        drift = spec.generator_values(t_outer, grid.t(j), frozen_y[:, j], z_ij, zeta, ensemble.values[:, j])
        lam[:, k] = estimator.cond_exp(nxt, ensemble, j) + grid.h * drift
        z_row[:, k] = z_ij

    return FamilyRow(outer=outer, stop=stop, start=start, lam=lam, z=z_row)
