"""
分区规划
由 Lipschitz 常数给出子区间长度 η，使 Picard 映射在每个子区间上压缩
"""

import math
from typing import Optional, Sequence

from core.grid import PartitionPlan, TimeGrid
from core.problem import LipschitzBound, ProblemSpec, SolveMode, lipschitz_grid_value
from dsl.expression import Expr
from dsl.lipschitz import LipschitzBox, LipschitzEstimate, estimate_lipschitz
from utils.error_handler import ErrorCode, PartitionError
from utils.logger import get_logger


logger = get_logger("partition")

# 浮点误差容限，避免 η 恰为 h 的整数倍时向下多截一步
_SNAP_SLACK = 1e-9


def _bound_value(bound: LipschitzBound, grid: TimeGrid) -> Optional[float]:
    if bound is None:
        return None
    if isinstance(bound, Expr):
        nodes = grid.nodes
        return max(lipschitz_grid_value(bound, float(t), float(s)) for t in nodes for s in nodes)
    return float(bound)


def resolve_constants(spec: ProblemSpec, grid: TimeGrid,
                      estimated: Optional[Sequence[float]] = None) -> LipschitzEstimate:
    """
    确定 (L1, L2, L3)：声明的常数优先；表达式取网格上的最大值；
    未声明的由 estimated 或抽样估计补上
    """
    declared = [_bound_value(b, grid) for b in spec.lipschitz]
    if any(v is None for v in declared) and estimated is None:
        box = LipschitzBox(horizon=spec.horizon)
        per_component = [
            estimate_lipschitz(g, box, samples=2000, rng_seed=0, dims=(spec.m, spec.d)).as_tuple()
            for g in spec.generator
        ]
        estimated = tuple(max(c[k] for c in per_component) for k in range(3))
        logger.info(f"Lipschitz 常数抽样估计: {tuple(round(x, 6) for x in estimated)}")
    values = [v if v is not None else float(estimated[k]) for k, v in enumerate(declared)]
    if spec.mode is SolveMode.ADAPTED:
        values[2] = 0.0
    return LipschitzEstimate(*values)


def eta_from_rule(spec: ProblemSpec, constants: LipschitzEstimate, kappa_target: float, c_cal: float) -> float:
    """
    解 Ĉ·max(η^{p/q}, η) = κ，Ĉ = c_cal·(1 + L1 + L2 + L3)^p

    max(η^a, η) 单调递增，其反函数为 r ↦ min(r, r^{1/a})，a = p/q。
    三个常数全为 0 时映射为常值，η = T。
    """
    if kappa_target <= 0 or c_cal <= 0:
        raise PartitionError(f"kappa_target={kappa_target}, c_cal={c_cal} 必须为正")
    if all(v == 0.0 for v in constants.as_tuple()):
        return spec.horizon
    p = spec.p
    q = spec.norm_config.q
    c_hat = c_cal * (1.0 + sum(constants.as_tuple())) ** p
    r = kappa_target / c_hat
    return min(spec.horizon, r, r ** (q / p))


def choose_partition(spec: ProblemSpec, grid: TimeGrid, estimated: Optional[Sequence[float]] = None,
                     kappa_target: float = 0.5, c_cal: float = 8.0, strict: bool = False) -> PartitionPlan:
    """
    选择分区方案

    η 向下对齐到网格步数；η < h 时，严格模式抛出 PartitionError，
    否则把子区间长度定为一步并记录警告。

    Args:
        estimated: 未声明常数的估计值 (L1, L2, L3)
        kappa_target: 目标压缩因子
        c_cal: 校准常数
        strict: η < h 时是否报错
    """
    constants = resolve_constants(spec, grid, estimated)
    eta_rule = eta_from_rule(spec, constants, kappa_target, c_cal)
    n_steps = int(math.floor(eta_rule / grid.h + _SNAP_SLACK))
    clamped = False
    if n_steps < 1:
        if strict:
            raise PartitionError(
                f"η = {eta_rule:.3e} < h = {grid.h:.3e}", ErrorCode.PARTITION_TOO_FINE
            )
        logger.warning(f"分区规则给出 η = {eta_rule:.3e} < h = {grid.h:.3e}，子区间长度取一步")
        n_steps = 1
        clamped = True
    n_steps = min(n_steps, grid.steps)

    boundaries = list(range(grid.steps, 0, -n_steps)) + [0]
    plan = PartitionPlan(
        boundaries=tuple(boundaries),
        eta=n_steps * grid.h,
        kappa_target=kappa_target,
        c_cal=c_cal,
        eta_rule=eta_rule,
        clamped=clamped,
    )
    logger.info(f"分区: η = {plan.eta:.6g}（规则值 {eta_rule:.6g}），{len(boundaries) - 1} 个子区间")
    return plan
