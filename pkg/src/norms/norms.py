"""
离散范数估计

左端点求积：∫_0^T f(t) dt ≈ Σ_{i<N} h·f(t_i)，内层 s 积分同样处理。
期望用路径平均代替。
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np

from core.grid import TimeGrid
from core.surfaces import AdaptedProcess, TwoParamField
from utils.error_handler import GridError, OrderingError


class NormKind(str, Enum):
    HP = "H^p"
    H0P = "H_0^p"
    MP = "M^p"
    FAMILY = "family"


@dataclass
class NormReport:
    kind: NormKind
    value: float
    p: float
    y_part: float
    z_part: float
    samples: int


YLike = Union[AdaptedProcess, np.ndarray]
ZLike = Union[TwoParamField, np.ndarray]


def _y_array(y: YLike) -> np.ndarray:
    return y.values if isinstance(y, AdaptedProcess) else np.asarray(y)


def _y_part(y: np.ndarray, h: float, p: float, rows: range) -> float:
    if len(rows) == 0:
        return 0.0
    block = y[:, rows.start:rows.stop, :]
    magnitude = np.sqrt(np.sum(block ** 2, axis=-1))
    return float(h * np.sum(np.mean(magnitude ** p, axis=0)))


def _z_part(z: np.ndarray, h: float, p: float, rows: range, mask: np.ndarray) -> float:
    if len(rows) == 0:
        return 0.0
    block = z[:, rows.start:rows.stop]
    squared = np.sum(block ** 2, axis=(-2, -1)) * mask[rows.start:rows.stop][None, :, :]
    inner = h * np.sum(squared, axis=2)
    return float(h * np.sum(np.mean(inner ** (p / 2.0), axis=0)))


def upper_mask(steps: int, upper: Optional[int] = None) -> np.ndarray:
    """j ≥ i（且 j < upper）的区域"""
    upper = steps if upper is None else upper
    i = np.arange(steps + 1)[:, None]
    j = np.arange(steps)[None, :]
    return (j >= i) & (j < upper)


def _field_values(z: ZLike, mask: np.ndarray) -> np.ndarray:
    if isinstance(z, TwoParamField):
        if not np.all(z.filled[mask]):
            raise OrderingError("范数所需的 Z 区域尚未全部计算")
        return z.values
    return np.asarray(z)


def hp_norm(y: YLike, z: TwoParamField, p: float, grid: TimeGrid,
            full_square: Optional[bool] = None) -> NormReport:
    """
    H^p 范数 [E∫|Y|^p dt + E∫(∫|Z(t,s)|² ds)^{p/2} dt]^{1/p}

    内层积分区域：有 M 块时为整个 [0, T]（H^p），否则为 [t, T]（H_0^p）。

    Raises:
        OrderingError: 要求整个方格但 Z 没有 M 块
    """
    if full_square is None:
        full_square = z.has_m_block
    if full_square and not z.has_m_block:
        raise OrderingError("adapted 解没有 M 块，无法计算整个方格上的 H^p 范数")

    N = grid.steps
    mask = np.ones((N + 1, N), dtype=bool) if full_square else upper_mask(N)
    y_values = _y_array(y)
    rows = range(0, N)
    y_part = _y_part(y_values, grid.h, p, rows)
    z_part = _z_part(_field_values(z, mask), grid.h, p, rows, mask)
    return NormReport(
        kind=NormKind.HP if full_square else NormKind.H0P,
        value=(y_part + z_part) ** (1.0 / p),
        p=p, y_part=y_part, z_part=z_part, samples=y_values.shape[0],
    )


def mp_norm(y: YLike, z: ZLike, p: float, grid: TimeGrid) -> NormReport:
    """M^p 范数 [E∫|y|^p dt + E∫(∫_t^T |z(t,s)|² ds)^{p/2} dt]^{1/p}"""
    N = grid.steps
    mask = upper_mask(N)
    y_values = _y_array(y)
    y_part = _y_part(y_values, grid.h, p, range(0, N))
    z_part = _z_part(_field_values(z, mask), grid.h, p, range(0, N), mask)
    return NormReport(NormKind.MP, (y_part + z_part) ** (1.0 / p), p, y_part, z_part, y_values.shape[0])


def mp_distance_arrays(dy: np.ndarray, dz: np.ndarray, h: float, p: float,
                       lower: int, upper: int) -> float:
    """
    子区间 [lower, upper] 上差值的 M^p 范数

    dy 形状 (M, N+1, m)，dz 形状 (M, N+1, N, m, d)；外层 i ∈ [lower, upper)，内层 j ∈ [i, upper)。
    """
    mask = upper_mask(dz.shape[2], upper)
    rows = range(lower, upper)
    total = _y_part(dy, h, p, rows) + _z_part(dz, h, p, rows, mask)
    return total ** (1.0 / p)


def mp_norm_distance(a: Tuple[YLike, ZLike], b: Tuple[YLike, ZLike], p: float, grid: TimeGrid) -> float:
    """两个曲面之差的 M^p 范数（Picard 停止准则所用的度量）"""
    ya, yb = _y_array(a[0]), _y_array(b[0])
    mask = upper_mask(grid.steps)
    za, zb = _field_values(a[1], mask), _field_values(b[1], mask)
    if ya.shape != yb.shape or za.shape != zb.shape or ya.shape[1] != grid.steps + 1:
        raise GridError(f"曲面形状不一致: {ya.shape}/{yb.shape}, {za.shape}/{zb.shape}")
    return mp_distance_arrays(ya - yb, za - zb, grid.h, p, 0, grid.steps)


def family_row_norm(lam: np.ndarray, mu: np.ndarray, p: float, h: float) -> float:
    """
    BSDE 族单行的范数 [E max_j |λ_j|^p + E(Σ_j |μ_j|² h)^{p/2}]^{1/p}

    上确界取网格上的最大值。lam 形状 (M, n+1, m)，mu 形状 (M, n, m, d)。
    """
    sup = np.max(np.sqrt(np.sum(lam ** 2, axis=-1)), axis=1)
    quad = h * np.sum(mu ** 2, axis=(1, 2, 3))
    return float((np.mean(sup ** p) + np.mean(quad ** (p / 2.0))) ** (1.0 / p))
