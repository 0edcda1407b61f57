"""
布朗路径集生成
高斯路径按固定大小的块生成，每块使用独立的 Philox 计数器流，
结果与工作线程数无关；Bernoulli 路径集枚举全部符号序列。
"""

import math
from typing import Optional

import numpy as np

from core.grid import TimeGrid
from core.surfaces import EnsembleKind, PathEnsemble
from utils.error_handler import EnumerationBoundError
from utils.logger import get_logger
from utils.worker_pool import get_worker_pool


logger = get_logger("ensemble")

BLOCK_SIZE = 1024
ENUMERATION_BOUND = 20


def _block_increments(seed: int, block: int, size: int, steps: int, dim: int, h: float) -> np.ndarray:
    # 第 block 块从 Philox 流跳过 block·2^128 个随机数处开始
    bit_generator = np.random.Philox(key=seed).jumped(block)
    rng = np.random.Generator(bit_generator)
    return rng.standard_normal((size, steps, dim)) * math.sqrt(h)


def _assemble(grid: TimeGrid, increments: np.ndarray, kind: EnsembleKind, seed: Optional[int]) -> PathEnsemble:
    M, _, d = increments.shape
    values = np.zeros((M, grid.steps + 1, d))
    values[:, 1:, :] = np.cumsum(increments, axis=1)
    return PathEnsemble(grid=grid, values=values, increments=increments, kind=kind, seed=seed)


def generate_gaussian_ensemble(seed: int, paths: int, grid: TimeGrid, dim: int = 1,
                               workers: Optional[int] = None) -> PathEnsemble:
    """
    生成高斯路径集

    Args:
        seed: 非负整数种子
        paths: 路径数 M
        grid: 时间网格
        dim: 布朗运动维数 d
        workers: 并行线程数（不影响结果）

    Returns:
        PathEnsemble，增量为方差 h 的独立正态变量
    """
    if paths < 1:
        raise ValueError(f"路径数必须 ≥ 1: {paths}")
    if seed < 0:
        raise ValueError(f"种子必须非负: {seed}")

    n_blocks = (paths + BLOCK_SIZE - 1) // BLOCK_SIZE
    sizes = [min(BLOCK_SIZE, paths - b * BLOCK_SIZE) for b in range(n_blocks)]
    pool = get_worker_pool(workers)
    blocks = pool.map_ordered(
        lambda b: _block_increments(seed, b, sizes[b], grid.steps, dim, grid.h),
        range(n_blocks),
    )
    increments = np.concatenate(blocks, axis=0)
    logger.debug(f"高斯路径集: M={paths}, N={grid.steps}, d={dim}, seed={seed}")
    return _assemble(grid, increments, EnsembleKind.GAUSSIAN, seed)


def enumerate_bernoulli_ensemble(grid: TimeGrid, dim: int = 1, bound: int = ENUMERATION_BOUND) -> PathEnsemble:
    """
    枚举全部 2^(N·d) 条 ±√h 随机游走

    路径编号的第 (N·d − 1 − (j·d + l)) 位决定第 j 步第 l 个分量的符号
    （1 为 +√h），因此前 j 步相同的路径在编号上连续成块。

    Raises:
        EnumerationBoundError: N·d 超过 bound
    """
    bits = grid.steps * dim
    if bits > bound:
        raise EnumerationBoundError(f"N·d = {bits} > {bound}")

    index = np.arange(2 ** bits, dtype=np.int32)[:, None]
    shifts = np.arange(bits - 1, -1, -1, dtype=np.int32)[None, :]
    signs = ((index >> shifts) & 1).astype(bool).reshape(-1, grid.steps, dim)
    root_h = math.sqrt(grid.h)
    increments = np.where(signs, root_h, -root_h)
    return _assemble(grid, increments, EnsembleKind.BERNOULLI, None)


def build_ensemble(kind: str, grid: TimeGrid, dim: int = 1, paths: int = 1, seed: int = 0,
                   workers: Optional[int] = None) -> PathEnsemble:
    """按名称构造路径集（gaussian / bernoulli）"""
    if kind in ("bernoulli", EnsembleKind.BERNOULLI.value):
        return enumerate_bernoulli_ensemble(grid, dim)
    if kind == EnsembleKind.GAUSSIAN.value:
        return generate_gaussian_ensemble(seed, paths, grid, dim, workers)
    raise ValueError(f"未知的路径集类型: {kind}")
