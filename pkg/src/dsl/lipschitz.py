"""
生成元 Lipschitz 常数的抽样估计

对 y、z、zeta 三组自变量分别取差商的最大值。结果是真实常数的下界，
只作为分区规划的参考。
"""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from dsl.evaluator import eval_expr
from dsl.expression import Expr, free_variables


@dataclass(frozen=True)
class LipschitzBox:
    """抽样区域：y、z、zeta、w 各分量取值于 [lower, upper]，t、s 取值于 [0, horizon]"""
    lower: float = -1.0
    upper: float = 1.0
    horizon: float = 1.0

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class LipschitzEstimate:
    l1: float
    l2: float
    l3: float

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.l1, self.l2, self.l3)


_GROUPS = ("y", "z", "zeta")


def _group_labels(m: int, d: int) -> Dict[str, Tuple[str, ...]]:
    return {
        "y": tuple(f"y_{k}" for k in range(m)),
        "z": tuple(f"z_{k}_{l}" for k in range(m) for l in range(d)),
        "zeta": tuple(f"zeta_{k}_{l}" for k in range(m) for l in range(d)),
        "w": tuple(f"w_{l}" for l in range(d)),
    }


def estimate_lipschitz(g: Expr, box: LipschitzBox = LipschitzBox(), samples: int = 10000,
                       rng_seed: int = 0, dims: Tuple[int, int] = (1, 1)) -> LipschitzEstimate:
    """
    抽样估计 g 关于 (y, z, zeta) 的 Lipschitz 常数

    一半样本对取两个独立点，另一半取间距为区域宽度千分之一的邻近点；
    每组只改变该组自变量，其余自变量保持不变。

    Args:
        g: 生成元表达式（单个分量）
        box: 抽样区域
        samples: 样本对数
        rng_seed: 随机种子
        dims: (m, d)

    Returns:
        (L1, L2, L3) 的估计
    """
    if samples < 1:
        raise ValueError("samples 必须 ≥ 1")

    m, d = dims
    labels = _group_labels(m, d)
    used = free_variables(g)
    rng = np.random.default_rng(rng_seed)

    base = {
        "t": rng.uniform(0.0, box.horizon, samples),
        "s": rng.uniform(0.0, box.horizon, samples),
    }
    for group in ("y", "z", "zeta", "w"):
        for label in labels[group]:
            base[label] = rng.uniform(box.lower, box.upper, samples)

    n_far = samples // 2
    step = 1e-3 * box.width
    estimates = []
    for group in _GROUPS:
        group_labels = labels[group]
        if not used.intersection(group_labels) or box.width <= 0:
            estimates.append(0.0)
            continue

        moved = dict(base)
        diff_sq = np.zeros(samples)
        for label in group_labels:
            far = rng.uniform(box.lower, box.upper, samples)
            near = np.clip(base[label] + rng.uniform(-step, step, samples), box.lower, box.upper)
            moved[label] = np.concatenate([far[:n_far], near[n_far:]])
            diff_sq += (moved[label] - base[label]) ** 2

        distance = np.sqrt(diff_sq)
        values = np.broadcast_to(eval_expr(g, base), (samples,))
        moved_values = np.broadcast_to(eval_expr(g, moved), (samples,))
        valid = distance > 0
        if not np.any(valid):
            estimates.append(0.0)
            continue
        quotients = np.abs(moved_values[valid] - values[valid]) / distance[valid]
        estimates.append(float(np.max(quotients)))

    return LipschitzEstimate(*estimates)
