"""
M 块补全与 Fredholm 延拓

extend_m_part: 由鞅表示 Y(t_i) = E[Y(t_i)|F_{t_lo}] + Σ_j Z(t_i, t_j) ΔW_j 求 j < i 的系数。
fredholm_extend: 已解出 [S, T] 上的 Y 与 M 块后，对 t_i < S 在 [S, T] 上求解 BSDE 族，
得到下一子区间的终端值 ψ^S(t_i) 及 Z(t_i, t_j)，j ∈ [S, T)。
"""

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from core.problem import ProblemSpec
from core.surfaces import PathEnsemble, TwoParamField
from solver.bsde_family import bsde_family_step
from stochastics.estimators import CondExpEstimator, check_adapted
from utils.error_handler import AdaptednessError
from utils.logger import get_logger
from utils.worker_pool import WorkerPool, get_worker_pool


logger = get_logger("fredholm")


def extend_m_part(y_row: np.ndarray, ensemble: PathEnsemble, estimator: CondExpEstimator,
                  outer: int, j_range: Iterable[int]) -> np.ndarray:
    """
    Z(t_i, t_j) = (1/h)·E_j[Y(t_i) ΔW_j]，j 取自 j_range（均 < outer）

    Returns:
        形状 (M, len(j_range), m, d)
    """
    steps = list(j_range)
    if any(j >= outer for j in steps):
        raise ValueError(f"M 块只包含 j < i = {outer}")
    if not steps:
        return np.empty((y_row.shape[0], 0) + y_row.shape[1:] + (ensemble.dim,))
    return np.stack([estimator.martingale_coeffs(y_row, ensemble, j) for j in steps], axis=1)


@dataclass
class FredholmBlock:
    """
    Fredholm 延拓结果

    psi[:, k] 为 ψ^S(t_{outer[k]})，z[:, k, j-lower] 为 Z(t_{outer[k]}, t_j)，j ∈ [lower, upper)
    """
    lower: int
    upper: int
    outer: Sequence[int]
    psi: np.ndarray
    z: np.ndarray


def fredholm_extend(spec: ProblemSpec, ensemble: PathEnsemble, estimator: CondExpEstimator,
                    y: np.ndarray, field: Optional[TwoParamField], terminal: np.ndarray,
                    lower: int, upper: int, outer: Optional[Sequence[int]] = None,
                    pool: Optional[WorkerPool] = None) -> FredholmBlock:
    """
    对外层 t_i < t_lower 在 [t_lower, t_upper] 上求解 g^S(t, s, z) = g(t, s, Y(s), z, Z(s, t))

    Args:
        y: 已解出的 Y，[lower, upper] 上的行有效，形状 (M, N+1, m)
        field: 提供 ζ 的 Z 场（M-解模式需已含 Z(t_j, t_i)，j ∈ [lower, upper)）
        terminal: 各外层指标在 t_upper 处的终端值，形状 (M, N+1, m)
        outer: 外层指标，默认 [0, lower)

    Raises:
        OrderingError: 所需的 M 块尚未计算
        AdaptednessError: ψ^S 在 Bernoulli 路径集上不是 F_S 可测的
    """
    outer = list(range(0, lower)) if outer is None else list(outer)
    pool = pool or get_worker_pool()
    rows = pool.map_ordered(
        lambda i: bsde_family_step(spec, ensemble, estimator, i, lower, terminal[:, i], y,
                                   zeta_field=field, start=upper),
        outer,
    )
    M = ensemble.paths
    psi = np.stack([row.value_at_stop for row in rows], axis=1) if rows else np.empty((M, 0, spec.m))
    z = (np.stack([row.z for row in rows], axis=1) if rows
         else np.empty((M, 0, upper - lower, spec.m, spec.d)))

    atol = 1e-12 * (1.0 + float(np.max(np.abs(psi)))) if psi.size else 0.0
    if check_adapted(psi, ensemble, lower, atol=atol) is False:
        raise AdaptednessError(f"ψ^S 在 t_{lower} 处不可测")
    logger.debug(f"Fredholm 延拓: [{lower}, {upper}]，外层 {len(outer)} 个")
    return FredholmBlock(lower=lower, upper=upper, outer=outer, psi=psi, z=z)
