"""
子区间上的 Picard 迭代

每次迭代以上一迭代 (y, z) 为冻结参数，对子区间内每个外层指标 i 求解
BSDE 族 λ(t_i, ·)，取 Y(t_i) = λ(t_i, t_i)；M-解模式再由鞅表示补全子区间内的 M 块。
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from core.problem import ProblemSpec, SolveMode
from core.surfaces import PathEnsemble, SubintervalReport, TwoParamField
from norms.norms import mp_distance_arrays
from solver.bsde_family import bsde_family_step
from solver.fredholm import extend_m_part
from stochastics.estimators import CondExpEstimator
from utils.logger import get_logger
from utils.worker_pool import WorkerPool, get_worker_pool


logger = get_logger("picard")

INITIAL_ITERATES = ("zero", "terminal")


@dataclass
class PicardState:
    """
    迭代状态

    distances[k] = ‖Θ^{k+1} − Θ^k‖_{M^p}，iteration 为最后一个距离的下标；
    ratios[k-1] = distances[k] / distances[k-1]。
    """
    lower: int
    upper: int
    y: np.ndarray
    z: TwoParamField
    iteration: int = -1
    distances: List[float] = field(default_factory=list)
    ratios: List[float] = field(default_factory=list)
    converged: bool = False
    needs_halving: bool = False

    def to_report(self, halvings: int = 0) -> SubintervalReport:
        return SubintervalReport(
            lower=self.lower, upper=self.upper, iterations=len(self.distances),
            distances=list(self.distances), ratios=list(self.ratios),
            converged=self.converged, halvings=halvings,
        )


def contraction_ratio(current: float, previous: float) -> float:
    if previous == 0.0:
        return 0.0 if current == 0.0 else float("inf")
    return current / previous


def _outer_indices(lower: int, upper: int, include_top: bool) -> List[int]:
    return list(range(lower, upper + 1 if include_top else upper))


def _initial_iterate(spec: ProblemSpec, ensemble: PathEnsemble, estimator: CondExpEstimator,
                     lower: int, upper: int, outer: List[int], terminal: np.ndarray,
                     initial: str) -> Tuple[np.ndarray, TwoParamField]:
    grid = ensemble.grid
    has_m_block = spec.mode is SolveMode.MSOLUTION
    y = np.zeros((ensemble.paths, grid.steps + 1, spec.m))
    z = TwoParamField.zeros(ensemble.paths, grid.steps, spec.m, spec.d, has_m_block)
    zero_entry = np.zeros((ensemble.paths, spec.m, spec.d))

    for i in outer:
        if initial == "terminal":
            y[:, i] = estimator.cond_exp(terminal[:, i], ensemble, i)
        for j in range(lower, upper):
            if j >= i:
                z.set_entry(i, j, zero_entry)
        if has_m_block and i > lower:
            if initial == "terminal":
                z.set_row(i, lower, extend_m_part(y[:, i], ensemble, estimator, i, range(lower, i)))
            else:
                z.set_row(i, lower, np.zeros((ensemble.paths, i - lower, spec.m, spec.d)))
    return y, z


def picard_solve_subinterval(spec: ProblemSpec, ensemble: PathEnsemble, estimator: CondExpEstimator,
                             lower: int, upper: int, terminal: np.ndarray, tol: float, max_iter: int,
                             include_top: Optional[bool] = None, initial: str = "zero",
                             pool: Optional[WorkerPool] = None) -> PicardState:
    """
    在 [t_lower, t_upper] 上做 Picard 迭代

    Args:
        terminal: 各外层指标在 t_upper 处的终端值（ψ 行或 ψ^S 行），形状 (M, N+1, m)
        tol: M^p 距离阈值
        max_iter: 最多迭代次数
        include_top: 外层指标是否包含 upper，默认仅当 upper = N
        initial: 初始迭代 zero | terminal

    Returns:
        PicardState；未收敛时 converged 为 False，不抛异常。
        连续两次 ρ ≥ 1 且子区间长于一步时置 needs_halving 并提前返回。
    """
    if initial not in INITIAL_ITERATES:
        raise ValueError(f"未知的初始迭代: {initial}")
    grid = ensemble.grid
    include_top = upper == grid.steps if include_top is None else include_top
    outer = _outer_indices(lower, upper, include_top)
    pool = pool or get_worker_pool()
    m_solution = spec.mode is SolveMode.MSOLUTION

    y, z = _initial_iterate(spec, ensemble, estimator, lower, upper, outer, terminal, initial)
    state = PicardState(lower=lower, upper=upper, y=y, z=z)

    for k in range(max_iter):
        frozen_y, frozen_z = state.y, state.z
        rows = pool.map_ordered(
            lambda i: bsde_family_step(spec, ensemble, estimator, i, i, terminal[:, i], frozen_y,
                                       zeta_field=frozen_z, start=upper),
            outer,
        )

        new_y = np.zeros_like(frozen_y)
        new_z = TwoParamField.zeros(ensemble.paths, grid.steps, spec.m, spec.d, frozen_z.has_m_block)
        for row in rows:
            i = row.outer
            new_y[:, i] = row.value_at_stop
            if upper > i:
                new_z.set_row(i, i, row.z)
        if m_solution:
            blocks = pool.map_ordered(
                lambda i: extend_m_part(new_y[:, i], ensemble, estimator, i, range(lower, i)),
                outer,
            )
            for i, block in zip(outer, blocks):
                if i > lower:
                    new_z.set_row(i, lower, block)

        distance = mp_distance_arrays(new_y - frozen_y, new_z.values - frozen_z.values,
                                      grid.h, spec.p, lower, upper)
        state.y, state.z = new_y, new_z
        state.iteration = k
        state.distances.append(distance)
        if k > 0:
            state.ratios.append(contraction_ratio(distance, state.distances[-2]))
        logger.debug(f"[{lower}, {upper}] 第 {k} 次迭代: 距离 {distance:.3e}")

        if distance < tol or distance == 0.0:
            state.converged = True
            break
        if (upper - lower > 1 and len(state.ratios) >= 2
                and state.ratios[-1] >= 1.0 and state.ratios[-2] >= 1.0):
            state.needs_halving = True
            logger.warning(f"[{lower}, {upper}] 连续两次 ρ ≥ 1，需要缩短子区间")
            break

    if not state.converged and not state.needs_halving:
        logger.warning(f"[{lower}, {upper}] 迭代 {len(state.distances)} 次未收敛，"
                       f"最后距离 {state.distances[-1] if state.distances else float('nan'):.3e}")
    return state
