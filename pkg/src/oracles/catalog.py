"""
参考用例目录

每个用例给出问题定义、可用时的解析解 Y(t)、Z(t, s)，以及各估计器下的容差
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from core.problem import ProblemSpec, SolveMode, problem_from_mapping
from core.surfaces import AdaptedProcess, PathEnsemble, SolutionSurface, TwoParamField
from solver.residuals import equation_residual
from utils.error_handler import CatalogError, ErrorCode

# Y(t, W(t)) -> (M, m)
YClosedForm = Callable[[float, np.ndarray], np.ndarray]
# Z(t, s, W(t), W(s)) -> (M, m, d)
ZClosedForm = Callable[[float, float, np.ndarray, np.ndarray], np.ndarray]

HORIZON = 1.0
LINEAR_RATE = 0.5
ZETA_WEIGHT = 0.3


@dataclass(frozen=True)
class ToleranceProfile:
    """
    exact: exact 估计器下与参考解的最大绝对差上界（相对 tol 的倍数）
    regress: 回归估计器下的相对 L² 误差上界
    closed_form: 解析解自检残差上界；None 表示按 5h 计
    """
    exact: float = 10.0
    regress: float = 0.1
    closed_form: Optional[float] = 1e-10


@dataclass(frozen=True)
class OracleCase:
    name: str
    spec: ProblemSpec
    description: str = ""
    y_closed: Optional[YClosedForm] = field(default=None, compare=False)
    z_closed: Optional[ZClosedForm] = field(default=None, compare=False)
    tolerance: ToleranceProfile = ToleranceProfile()

    @property
    def has_closed_form(self) -> bool:
        return self.y_closed is not None and self.z_closed is not None

    @property
    def discrete_exact(self) -> bool:
        """解析解在枚举路径集上满足离散方程（而不只是 O(h) 近似）"""
        return self.has_closed_form and self.tolerance.closed_form is not None


def _problem(name: str, terminal: str, generator: str, p: float = 1.5,
             mode: SolveMode = SolveMode.MSOLUTION, lipschitz=(0.0, 0.0, 0.0)) -> ProblemSpec:
    mapping = {
        "name": name, "T": HORIZON, "m": 1, "d": 1, "p": p, "mode": mode.value,
        "terminal": terminal, "generator": generator,
        "lipschitz_l1": lipschitz[0], "lipschitz_l2": lipschitz[1], "lipschitz_l3": lipschitz[2],
    }
    return problem_from_mapping(mapping)


def _column(values: np.ndarray) -> np.ndarray:
    return values.reshape(-1, 1)


def _constant_z(value: float) -> ZClosedForm:
    return lambda t, s, wt, ws: np.full((ws.shape[0], 1, 1), value)


def _linear_factor(t: float) -> float:
    return math.exp(LINEAR_RATE * (HORIZON - t))


def _adapted_factor(t: float) -> float:
    a = LINEAR_RATE
    return 1.0 / a + (HORIZON - 1.0 / a) * math.exp(a * (HORIZON - t))


def _linear_z(t: float, s: float, wt: np.ndarray, ws: np.ndarray) -> np.ndarray:
    value = _linear_factor(s) if s >= t else _linear_factor(t)
    return np.full((ws.shape[0], 1, 1), value)


def _adapted_z(t: float, s: float, wt: np.ndarray, ws: np.ndarray) -> np.ndarray:
    return np.full((ws.shape[0], 1, 1), t + _adapted_factor(s) - s)


def _build_catalog() -> Dict[str, OracleCase]:
    cases = [
        OracleCase(
            "det", _problem("det", "1 + t", "0"),
            "确定性终端，Y = 1 + t，Z = 0",
            y_closed=lambda t, w: np.full((w.shape[0], 1), 1.0 + t),
            z_closed=_constant_z(0.0),
        ),
        OracleCase(
            "mart", _problem("mart", "x_0", "0"),
            "Y = W(t)，Z ≡ 1",
            y_closed=lambda t, w: _column(w[:, 0]),
            z_closed=_constant_z(1.0),
        ),
        OracleCase(
            "quad", _problem("quad", "t*x_0^2", "0"),
            "Y = t(W(t)² + T − t)，Z(t, s) = 2tW(s)",
            y_closed=lambda t, w: _column(t * (w[:, 0] ** 2 + HORIZON - t)),
            z_closed=lambda t, s, wt, ws: (2.0 * t * ws[:, 0]).reshape(-1, 1, 1),
        ),
        OracleCase(
            "linear-bsde", _problem("linear-bsde", "x_0", f"{LINEAR_RATE}*y_0", lipschitz=(LINEAR_RATE, 0.0, 0.0)),
            "g = a·y，Y = e^{a(T−t)}W(t)；离散解与之相差 O(h)",
            y_closed=lambda t, w: _column(_linear_factor(t) * w[:, 0]),
            z_closed=_linear_z,
            tolerance=ToleranceProfile(closed_form=None),
        ),
        OracleCase(
            "zeta-coupled",
            _problem("zeta-coupled", "x_0", f"{ZETA_WEIGHT}*zeta_0_0 + {LINEAR_RATE}*y_0",
                     lipschitz=(LINEAR_RATE, 0.0, ZETA_WEIGHT)),
            "g = b·ζ + a·y，没有解析解，以树求解为参考",
        ),
        OracleCase(
            "adapted-only",
            _problem("adapted-only", "t*x_0", f"{LINEAR_RATE}*y_0", p=2.0, mode=SolveMode.ADAPTED,
                     lipschitz=(LINEAR_RATE, 0.0, 0.0)),
            "adapted 模式，Y = f(t)W(t)，f(t) = 1/a + (T − 1/a)e^{a(T−t)}",
            y_closed=lambda t, w: _column(_adapted_factor(t) * w[:, 0]),
            z_closed=_adapted_z,
            tolerance=ToleranceProfile(closed_form=None),
        ),
        OracleCase(
            "sin-clipped",
            _problem("sin-clipped", "max(min(x_0, 1), -1)", "sin(y_0)", lipschitz=(1.0, 0.0, 0.0)),
            "非线性生成元，没有解析解，用于稳定性监测",
            tolerance=ToleranceProfile(regress=0.2),
        ),
    ]
    return {case.name: case for case in cases}


_CATALOG = _build_catalog()


def oracle_catalog() -> List[OracleCase]:
    """全部参考用例，按登记顺序"""
    return list(_CATALOG.values())


def get_case(name: str) -> OracleCase:
    try:
        return _CATALOG[name]
    except KeyError:
        raise CatalogError(f"未知用例 '{name}'，可用: {', '.join(_CATALOG)}")


def analytic_eval(case: OracleCase, ensemble: PathEnsemble) -> SolutionSurface:
    """
    在路径集上逐路径计算解析解

    Raises:
        CatalogError: 用例没有解析解
    """
    if not case.has_closed_form:
        raise CatalogError(f"用例 '{case.name}' 没有解析解", ErrorCode.NO_CLOSED_FORM)
    grid = ensemble.grid
    N = grid.steps
    spec = case.spec
    w = ensemble.values
    y = np.stack([case.y_closed(grid.t(i), w[:, i]) for i in range(N + 1)], axis=1)
    z = np.zeros((ensemble.paths, N + 1, N, spec.m, spec.d))
    m_solution = spec.mode is SolveMode.MSOLUTION
    for i in range(N + 1):
        for j in range(N):
            if j >= i or m_solution:
                z[:, i, j] = case.z_closed(grid.t(i), grid.t(j), w[:, i], w[:, j])
    field_ = TwoParamField.from_array(z, has_m_block=m_solution).freeze()
    return SolutionSurface(grid=grid, mode=spec.mode, y=AdaptedProcess(y), z=field_)


def closed_form_residual(case: OracleCase, ensemble: PathEnsemble) -> float:
    """解析解代入离散方程的残差"""
    surface = analytic_eval(case, ensemble)
    return equation_residual(case.spec, ensemble, surface.y.values, surface.z)


def closed_form_threshold(case: OracleCase, ensemble: PathEnsemble) -> float:
    """自检残差的上界：离散精确的用例为固定值，其余为 5h"""
    if case.tolerance.closed_form is not None:
        return case.tolerance.closed_form
    return 5.0 * ensemble.grid.h
