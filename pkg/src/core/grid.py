"""
时间网格与分区方案
"""

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import List, Tuple

import numpy as np

from utils.error_handler import GridError, PartitionError


@dataclass(frozen=True)
class TimeGrid:
    """[0, T] 上的均匀网格，节点 t_i = i·h，h = T/N"""
    horizon: float
    steps: int

    def __post_init__(self):
        if not (isinstance(self.steps, (int, np.integer)) and self.steps >= 1):
            raise GridError(f"步数必须为正整数: {self.steps}")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise GridError(f"区间长度必须为正: {self.horizon}")

    @property
    def h(self) -> float:
        return self.horizon / self.steps

    @cached_property
    def nodes(self) -> np.ndarray:
        nodes = np.arange(self.steps + 1) * self.h
        nodes[-1] = self.horizon
        nodes.setflags(write=False)
        return nodes

    def t(self, index: int) -> float:
        return float(self.nodes[index])


def build_grid(horizon: float, steps: int) -> TimeGrid:
    """构造均匀网格，T ≤ 0 或 N < 1 时抛出 GridError"""
    if isinstance(steps, float):
        if not steps.is_integer():
            raise GridError(f"步数必须为整数: {steps}")
        steps = int(steps)
    return TimeGrid(float(horizon), steps)


@dataclass(frozen=True)
class PartitionPlan:
    """
    从右向左的分区方案

    boundaries 为降序的网格指标 N = b_0 > b_1 > ... > b_K = 0，
    每个子区间 [b_{k+1}, b_k] 的长度不超过 eta。
    """
    boundaries: Tuple[int, ...]
    eta: float
    kappa_target: float = 0.5
    c_cal: float = 8.0
    eta_rule: float = field(default=0.0, compare=False)
    clamped: bool = False

    def __post_init__(self):
        b = self.boundaries
        if len(b) < 2 or b[-1] != 0 or any(x <= y for x, y in zip(b, b[1:])):
            raise PartitionError(f"分区边界必须严格降序并以 0 结尾: {b}")
        if not self.eta > 0:
            raise PartitionError(f"eta 必须为正: {self.eta}")

    @property
    def steps(self) -> int:
        return self.boundaries[0]

    def subintervals(self) -> List[Tuple[int, int]]:
        """按求解顺序（从右到左）返回 (lower, upper)"""
        return [(low, up) for up, low in zip(self.boundaries, self.boundaries[1:])]

    def covers(self, grid: TimeGrid) -> bool:
        """子区间的并是否恰为全部网格节点"""
        covered = set()
        for low, up in self.subintervals():
            covered.update(range(low, up + 1))
        return self.steps == grid.steps and covered == set(range(grid.steps + 1))

    def split(self, upper: int) -> "PartitionPlan":
        """把上端为 upper 的子区间对半分开"""
        for low, up in self.subintervals():
            if up == upper:
                if up - low < 2:
                    raise PartitionError(f"子区间 [{low}, {up}] 只有一步，无法再分")
                mid = up - max(1, (up - low) // 2)
                bounds = tuple(sorted(set(self.boundaries) | {mid}, reverse=True))
                return replace(self, boundaries=bounds)
        raise PartitionError(f"不存在上端为 {upper} 的子区间")

    def times(self, grid: TimeGrid) -> List[float]:
        return [grid.t(i) for i in self.boundaries]
