"""
求解驱动
从右向左逐个子区间求解：Picard 迭代、M 块补全、Fredholm 延拓，再进入下一个子区间
"""

import time
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from core.grid import PartitionPlan
from core.problem import ProblemSpec, SolveMode
from core.surfaces import AdaptedProcess, PathEnsemble, SolutionSurface, SolveDiagnostics, TwoParamField
from norms.norms import hp_norm, mp_norm
from solver.fredholm import extend_m_part, fredholm_extend
from solver.partition import choose_partition
from solver.picard import picard_solve_subinterval
from solver.residuals import residual_summary
from stochastics.estimators import CondExpEstimator
from utils.error_handler import ErrorCode, ValidationError
from utils.logger import LoggerMixin
from utils.memory_monitor import get_memory_monitor
from utils.worker_pool import get_worker_pool


@dataclass
class SolveOptions:
    """驱动的可选参数"""
    kappa_target: float = 0.5
    c_cal: float = 8.0
    strict_partition: bool = False
    initial: str = "zero"
    halving_limit: int = 8
    plan: Optional[PartitionPlan] = None
    estimated_constants: Optional[Sequence[float]] = None
    workers: Optional[int] = None
    memory_check: bool = True


class BSVIESolver(LoggerMixin):
    """M-解与 adapted 解的求解器"""

    def __init__(self, options: Optional[SolveOptions] = None):
        super().__init__()
        self.options = options or SolveOptions()

    def solve(self, spec: ProblemSpec, ensemble: PathEnsemble, estimator: CondExpEstimator,
              tol: float, max_iter: int) -> SolutionSurface:
        """
        求解离散方程

        Args:
            spec: 问题定义
            ensemble: 路径集
            estimator: 条件期望估计器
            tol: Picard 停止阈值（M^p 距离）
            max_iter: 每个子区间的最多迭代次数

        Returns:
            SolutionSurface；未收敛的子区间记录在 diagnostics 中
        """
        opts = self.options
        grid = ensemble.grid
        N = grid.steps
        M = ensemble.paths
        m_solution = spec.mode is SolveMode.MSOLUTION
        if ensemble.dim != spec.d:
            raise ValidationError(f"路径集维数 {ensemble.dim} 与问题的 d = {spec.d} 不一致",
                                  ErrorCode.PROBLEM_INVALID)
        started = time.perf_counter()

        plan = opts.plan or choose_partition(spec, grid, opts.estimated_constants,
                                             opts.kappa_target, opts.c_cal, opts.strict_partition)
        if not plan.covers(grid):
            raise ValidationError(f"分区方案 {plan.boundaries} 与网格 N = {N} 不一致")

        monitor = get_memory_monitor()
        if opts.memory_check:
            # 全局场加上 Picard 中新旧两份迭代
            monitor.ensure_allocation(3 * TwoParamField.nbytes_for(M, N, spec.m, spec.d), "Z 场")
        monitor.log_memory_status("求解前")

        pool = get_worker_pool(opts.workers)
        estimator.reset()
        y = np.zeros((M, N + 1, spec.m))
        field = TwoParamField.zeros(M, N, spec.m, spec.d, has_m_block=m_solution)
        terminal = np.stack([spec.terminal_values(grid.t(i), ensemble.terminal) for i in range(N + 1)], axis=1)

        reports = []
        halvings = {}
        queue = deque(plan.subintervals())
        while queue:
            lower, upper = queue.popleft()
            state = picard_solve_subinterval(spec, ensemble, estimator, lower, upper, terminal,
                                             tol, max_iter, include_top=(upper == N),
                                             initial=opts.initial, pool=pool)
            used = halvings.get((lower, upper), 0)
            if state.needs_halving and upper - lower >= 2 and used < opts.halving_limit:
                plan = plan.split(upper)
                mid = plan.boundaries[plan.boundaries.index(upper) + 1]
                for piece in ((mid, upper), (lower, mid)):
                    halvings[piece] = used + 1
                queue.appendleft((lower, mid))
                queue.appendleft((mid, upper))
                self.logger.warning(f"子区间 [{lower}, {upper}] 对半分为 [{lower}, {mid}] 与 [{mid}, {upper}]")
                continue

            reports.append(state.to_report(halvings=used))
            if state.converged:
                self.logger.info(f"子区间 [{lower}, {upper}] 收敛，迭代 {len(state.distances)} 次")
            outer = list(range(lower, upper + 1 if upper == N else upper))
            for i in outer:
                y[:, i] = state.y[:, i]
                if upper > i:
                    field.set_row(i, i, state.z.row(i, i, upper))
                if m_solution and i > lower:
                    field.set_row(i, lower, state.z.row(i, lower, i))

            if lower == 0:
                continue

            # 第二步：M 块延伸到 [0, lower)
            if m_solution:
                blocks = pool.map_ordered(
                    lambda i: extend_m_part(y[:, i], ensemble, estimator, i, range(0, lower)), outer
                )
                for i, block in zip(outer, blocks):
                    field.set_row(i, 0, block)

            # 第三步：Fredholm 延拓给出下一子区间的终端值
            block = fredholm_extend(spec, ensemble, estimator, y, field, terminal, lower, upper,
                                    outer=range(0, lower), pool=pool)
            for k, i in enumerate(block.outer):
                terminal[:, i] = block.psi[:, k]
                field.set_row(i, lower, block.z[:, k])

        field.freeze()
        diagnostics = SolveDiagnostics(subintervals=reports)
        eq, m_worst, m_relative = residual_summary(spec, ensemble, y, field)
        diagnostics.equation_residual = eq
        diagnostics.m_identity_residual = m_worst
        diagnostics.m_identity_relative_l2 = m_relative
        diagnostics.norms = [hp_norm(y, field, spec.p, grid), mp_norm(y, field, spec.p, grid)]
        diagnostics.estimator_fallbacks = estimator.fallback_counts

        monitor.log_memory_status("求解后")
        self.logger.info(
            f"求解完成: {spec.mode.value}, {len(reports)} 个子区间, "
            f"{'已收敛' if diagnostics.converged else '未收敛'}, 方程残差 {eq:.3e}, "
            f"耗时 {time.perf_counter() - started:.2f}s"
        )
        return SolutionSurface(grid=grid, mode=spec.mode, y=AdaptedProcess(y), z=field,
                               plan=plan, diagnostics=diagnostics)


def _check_mode(spec: ProblemSpec, expected: SolveMode):
    if spec.mode is not expected:
        raise ValidationError(f"问题模式为 {spec.mode.value}，此处需要 {expected.value}",
                              ErrorCode.PROBLEM_INVALID)


def solve_msolution(spec: ProblemSpec, ensemble: PathEnsemble, estimator: CondExpEstimator,
                    tol: float = 1e-8, max_iter: int = 50,
                    options: Optional[SolveOptions] = None) -> SolutionSurface:
    """求 M-解，Z 在整个方格上有定义"""
    _check_mode(spec, SolveMode.MSOLUTION)
    return BSVIESolver(options).solve(spec, ensemble, estimator, tol, max_iter)


def solve_adapted(spec: ProblemSpec, ensemble: PathEnsemble, estimator: CondExpEstimator,
                  tol: float = 1e-8, max_iter: int = 50,
                  options: Optional[SolveOptions] = None) -> SolutionSurface:
    """求 adapted 解，不含 M 块，生成元不得依赖 zeta"""
    _check_mode(spec, SolveMode.ADAPTED)
    if spec.uses_zeta:
        raise ValidationError("adapted 模式下生成元不能依赖 zeta", ErrorCode.ZETA_IN_ADAPTED_MODE)
    return BSVIESolver(options).solve(spec, ensemble, estimator, tol, max_iter)


def solve(spec: ProblemSpec, ensemble: PathEnsemble, estimator: CondExpEstimator,
          tol: float = 1e-8, max_iter: int = 50, options: Optional[SolveOptions] = None) -> SolutionSurface:
    """按问题模式分派"""
    if spec.mode is SolveMode.MSOLUTION:
        return solve_msolution(spec, ensemble, estimator, tol, max_iter, options)
    return solve_adapted(spec, ensemble, estimator, tol, max_iter, options)
