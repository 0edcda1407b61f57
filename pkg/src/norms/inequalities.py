"""
鞅矩不等式的经验检验
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import integrate, special

from core.surfaces import PathEnsemble, TwoParamField
from utils.error_handler import OrderingError


@dataclass
class MomentCheck:
    """
    direction 为 "upper" 时 ratio = lhs/rhs，为 "lower" 时 ratio = rhs/lhs；
    两边都为 0 时 ratio 为 None
    """
    direction: str
    lhs: float
    rhs: float
    ratio: Optional[float]


def kappa_p(p: float) -> float:
    """E|N(0,1)|^p = 2^{p/2} Γ((p+1)/2) / √π"""
    return 2.0 ** (p / 2.0) * special.gamma((p + 1.0) / 2.0) / math.sqrt(math.pi)


def kappa_p_quadrature(p: float) -> float:
    """同一常数的数值积分：2∫_0^∞ x^p φ(x) dx"""
    value, _ = integrate.quad(lambda x: x ** p * math.exp(-x * x / 2.0), 0.0, np.inf)
    return 2.0 * value / math.sqrt(2.0 * math.pi)


def _ratio(numerator: float, denominator: float) -> Optional[float]:
    if denominator == 0.0:
        return None if numerator == 0.0 else float("inf")
    return numerator / denominator


def check_moment_inequalities(z: TwoParamField, p: float,
                              ensemble: PathEnsemble) -> Tuple[MomentCheck, MomentCheck]:
    """
    比较随机积分的 p 阶矩与二次变差的 p/2 阶矩

    lhs = Σ_{i<N} h·Ê|Σ_{j<i} z_ij ΔW_j|^p，rhs = Σ_{i<N} h·Ê(Σ_{j<i} |z_ij|² h)^{p/2}

    Returns:
        (upper, lower) 两个方向的检验结果
    """
    if not p > 0:
        raise ValueError(f"p 必须为正: {p}")
    if not z.has_m_block:
        raise OrderingError("矩不等式检验需要 j < i 的 M 块")

    grid = ensemble.grid
    h = grid.h
    dw = ensemble.increments
    lhs = 0.0
    rhs = 0.0
    for i in range(1, grid.steps):
        block = z.row(i, 0, i)
        integral = np.einsum("mjkl,mjl->mk", block, dw[:, :i])
        lhs += h * float(np.mean(np.sqrt(np.sum(integral ** 2, axis=-1)) ** p))
        quad = h * np.sum(block ** 2, axis=(1, 2, 3))
        rhs += h * float(np.mean(quad ** (p / 2.0)))

    upper = MomentCheck("upper", lhs, rhs, _ratio(lhs, rhs))
    lower = MomentCheck("lower", lhs, rhs, _ratio(rhs, lhs) if p > 1 else None)
    return upper, lower
