"""
问题定义
ProblemSpec 及其校验、扁平文件序列化
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Mapping, Optional, Tuple, Union

import numpy as np
from scipy import integrate

from dsl.evaluator import eval_expr
from dsl.expression import Expr, ExprContext, free_variables, parse_expr, print_expr
from dsl.flatfile import read_flat, write_flat
from utils.error_handler import ErrorCode, ExpressionError, OrderingError, ValidationError
from utils.logger import get_logger


logger = get_logger("problem")

LipschitzBound = Union[None, float, Expr]


class SolveMode(str, Enum):
    MSOLUTION = "m-solution"
    ADAPTED = "adapted"


@dataclass(frozen=True)
class PNormConfig:
    """指数 p 与共轭指数 q（1/p + 1/q = 1）"""
    p: float

    def __post_init__(self):
        if not self.p > 1:
            raise ValidationError(f"p = {self.p}", ErrorCode.EXPONENT_INVALID)

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)


@dataclass(frozen=True)
class ProblemSpec:
    """
    BSVIE 问题定义

    terminal 与 generator 各含 m 个分量表达式；lipschitz 三个常数可以是实数、
    (t, s) 的表达式，或 None（由抽样估计补上）。
    """
    horizon: float
    m: int
    d: int
    p: float
    terminal: Tuple[Expr, ...]
    generator: Tuple[Expr, ...]
    lipschitz: Tuple[LipschitzBound, LipschitzBound, LipschitzBound] = (None, None, None)
    mode: SolveMode = SolveMode.MSOLUTION
    epsilon: float = 0.1
    name: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ValidationError(f"T 必须为正: {self.horizon}")
        if self.m < 1 or self.d < 1:
            raise ValidationError(f"维数必须为正: m={self.m}, d={self.d}")
        if len(self.terminal) != self.m or len(self.generator) != self.m:
            raise ValidationError(
                f"terminal/generator 分量个数应为 m={self.m}，"
                f"实际为 {len(self.terminal)}/{len(self.generator)}"
            )
        if len(self.lipschitz) != 3:
            raise ValidationError("lipschitz 需要三个分量")
        object.__setattr__(self, "mode", SolveMode(self.mode))

    @property
    def norm_config(self) -> PNormConfig:
        return PNormConfig(self.p)

    @cached_property
    def generator_variables(self) -> FrozenSet[str]:
        return frozenset().union(*(free_variables(g) for g in self.generator))

    @property
    def uses_zeta(self) -> bool:
        return any(v.startswith("zeta_") for v in self.generator_variables)

    def terminal_values(self, t: float, x: np.ndarray) -> np.ndarray:
        """
        计算 ψ(t, x)

        Args:
            t: 外层时间
            x: W(T)，形状 (M, d)

        Returns:
            形状 (M, m)
        """
        bindings = {"t": t}
        for l in range(self.d):
            bindings[f"x_{l}"] = x[:, l]
        return self._stack(self.terminal, bindings, x.shape[0])

    def generator_values(self, t: float, s: float, y: Optional[np.ndarray], z: Optional[np.ndarray],
                         zeta: Optional[np.ndarray], w: np.ndarray) -> np.ndarray:
        """
        计算 g(t, s, y, z, ζ, w)，只绑定表达式真正用到的变量

        Args:
            y: (M, m)；z、zeta: (M, m, d)；w: W(s)，(M, d)

        Returns:
            形状 (M, m)
        """
        used = self.generator_variables
        bindings: Dict[str, Any] = {"t": t, "s": s}
        for k in range(self.m):
            if f"y_{k}" in used:
                bindings[f"y_{k}"] = y[:, k]
            for l in range(self.d):
                if f"z_{k}_{l}" in used:
                    bindings[f"z_{k}_{l}"] = z[:, k, l]
                if f"zeta_{k}_{l}" in used:
                    if zeta is None:
                        raise OrderingError("生成元依赖 zeta，但 Z 的 M 块尚未给出")
                    bindings[f"zeta_{k}_{l}"] = zeta[:, k, l]
        for l in range(self.d):
            if f"w_{l}" in used:
                bindings[f"w_{l}"] = w[:, l]
        return self._stack(self.generator, bindings, w.shape[0])

    @staticmethod
    def _stack(exprs: Tuple[Expr, ...], bindings: Mapping[str, Any], paths: int) -> np.ndarray:
        out = np.empty((paths, len(exprs)))
        for k, expr in enumerate(exprs):
            out[:, k] = eval_expr(expr, bindings)
        return out


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    detail: str = ""
    error_code: Optional[str] = None


@dataclass
class ValidationReport:
    checks: List[HypothesisCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[HypothesisCheck]:
        return [c for c in self.checks if not c.passed]

    def check(self, name: str) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def raise_if_failed(self):
        """存在未通过的检查时抛出第一个失败对应的 ValidationError"""
        failures = self.failures
        if failures:
            first = failures[0]
            detail = "; ".join(f"{c.name}: {c.detail}" for c in failures)
            raise ValidationError(detail, first.error_code or ErrorCode.PROBLEM_INVALID)


def lipschitz_grid_value(bound: LipschitzBound, t: float, s: float) -> float:
    if isinstance(bound, Expr):
        return abs(eval_expr(bound, {"t": t, "s": s}))
    return float(bound or 0.0)


def _sup_integral(bound: Expr, power: float, horizon: float, below: bool, points: int) -> float:
    """
    sup_t ∫ |L|^power ds：below=True 时积分 ∫_0^t |L(s,t)|^power ds，
    否则 ∫_t^T |L(t,s)|^power ds
    """
    best = 0.0
    for t in np.linspace(0.0, horizon, points):
        if below:
            value, _ = integrate.quad(lambda s: abs(eval_expr(bound, {"t": s, "s": t})) ** power, 0.0, t, limit=200)
        else:
            value, _ = integrate.quad(lambda s: abs(eval_expr(bound, {"t": t, "s": s})) ** power, t, horizon, limit=200)
        best = max(best, value)
    return best


def _check_bound(name: str, bound: LipschitzBound, power: Optional[float], below: bool,
                 spec: ProblemSpec, points: int) -> HypothesisCheck:
    if bound is None:
        return HypothesisCheck(name, True, "未声明，使用抽样估计")
    if not isinstance(bound, Expr):
        ok = math.isfinite(bound) and bound >= 0
        return HypothesisCheck(name, ok, f"常数 {bound!r}", None if ok else ErrorCode.HYPOTHESIS_FAILED)
    try:
        if power is None:
            grid = np.linspace(0.0, spec.horizon, points)
            sup = max(lipschitz_grid_value(bound, t, s) for t in grid for s in grid)
            ok = math.isfinite(sup) and sup < 1e12
            return HypothesisCheck(name, ok, f"sup|L| ≈ {sup:.6g}", None if ok else ErrorCode.HYPOTHESIS_FAILED)
        value = _sup_integral(bound, power, spec.horizon, below, points)
    except ExpressionError as e:
        return HypothesisCheck(name, False, e.get_short_message(), ErrorCode.HYPOTHESIS_FAILED)
    ok = math.isfinite(value) and value < 1e12
    return HypothesisCheck(name, ok, f"sup 积分 ≈ {value:.6g}（幂 {power:.6g}）",
                           None if ok else ErrorCode.HYPOTHESIS_FAILED)


def _g0_probe(spec: ProblemSpec, points: int, seed: int = 0) -> HypothesisCheck:
    """g(t, s, 0, 0, 0, w) 在 s ≥ t 的三角形网格上、对抽样的 w 是否有限"""
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, math.sqrt(spec.horizon), size=(16, spec.d))
    zeros_y = np.zeros((16, spec.m))
    zeros_z = np.zeros((16, spec.m, spec.d))
    grid = np.linspace(0.0, spec.horizon, points)
    worst = 0.0
    for a, t in enumerate(grid):
        for s in grid[a:]:
            try:
                values = spec.generator_values(float(t), float(s), zeros_y, zeros_z, zeros_z, w)
            except ExpressionError as e:
                return HypothesisCheck("generator_g0", False, e.get_short_message(), ErrorCode.HYPOTHESIS_FAILED)
            if not np.all(np.isfinite(values)):
                return HypothesisCheck("generator_g0", False, f"g(t={t:.4g}, s={s:.4g}, 0, 0, 0, w) 非有限",
                                       ErrorCode.HYPOTHESIS_FAILED)
            worst = max(worst, float(np.max(np.abs(values))))
    return HypothesisCheck("generator_g0", True, f"max|g_0| ≈ {worst:.6g}")


def validate_problem(spec: ProblemSpec, quadrature_points: int = 17) -> ValidationReport:
    """
    逐条检查问题假设

    检查项: exponent（p > 1）、mode_exponent（M-解模式要求 p ≤ 2）、
    zeta_free（adapted 模式的生成元不含 zeta）、lipschitz_l1/l2/l3 的可积性、
    generator_g0（g(t,s,0,0,0,w) 有限）。
    """
    report = ValidationReport()
    p = spec.p

    if p > 1:
        report.checks.append(HypothesisCheck("exponent", True, f"p = {p!r}"))
    else:
        report.checks.append(HypothesisCheck("exponent", False, f"p = {p!r}，要求 p > 1", ErrorCode.EXPONENT_INVALID))

    if spec.mode is SolveMode.MSOLUTION and p > 2:
        report.checks.append(HypothesisCheck("mode_exponent", False, f"M-解模式要求 1 < p ≤ 2，实际 p = {p!r}",
                                             ErrorCode.MODE_EXPONENT_MISMATCH))
    else:
        report.checks.append(HypothesisCheck("mode_exponent", True, f"{spec.mode.value}, p = {p!r}"))

    if spec.mode is SolveMode.ADAPTED and spec.uses_zeta:
        report.checks.append(HypothesisCheck("zeta_free", False, "adapted 模式下生成元含 zeta",
                                             ErrorCode.ZETA_IN_ADAPTED_MODE))
    else:
        report.checks.append(HypothesisCheck("zeta_free", True))

    if p > 1:
        l1, l2, l3 = spec.lipschitz
        q = p / (p - 1.0)
        if spec.mode is SolveMode.MSOLUTION:
            report.checks.append(_check_bound("lipschitz_l1", l1, p, True, spec, quadrature_points))
            report.checks.append(_check_bound("lipschitz_l2", l2, 2.0 + spec.epsilon, False, spec, quadrature_points))
            l3_power = None if p >= 2 else 2.0 * p / (2.0 - p)
            report.checks.append(_check_bound("lipschitz_l3", l3, l3_power, True, spec, quadrature_points))
        else:
            # p > 2 与 p ≤ 2 两种条件
            if p > 2:
                report.checks.append(_check_bound("lipschitz_l1", l1, q, False, spec, quadrature_points))
            else:
                report.checks.append(_check_bound("lipschitz_l1", l1, p, True, spec, quadrature_points))
            report.checks.append(_check_bound("lipschitz_l2", l2, 2.0 + spec.epsilon, False, spec, quadrature_points))
        if not spec.epsilon > 0:
            report.checks.append(HypothesisCheck("epsilon", False, f"epsilon = {spec.epsilon!r}",
                                                 ErrorCode.HYPOTHESIS_FAILED))

    if report.check("zeta_free").passed:
        report.checks.append(_g0_probe(spec, quadrature_points))

    for failure in report.failures:
        logger.warning(f"假设检查未通过 [{failure.name}]: {failure.detail}")
    return report


# ---------------------------------------------------------------- 序列化

def _format_bound(bound: LipschitzBound) -> Optional[Any]:
    if bound is None:
        return None
    if isinstance(bound, Expr):
        return print_expr(bound)
    return float(bound)


def _parse_bound(value: Any, dims: Tuple[int, int]) -> LipschitzBound:
    if value is None or value == "":
        return None
    if isinstance(value, (int, float)):
        return float(value)
    try:
        return float(value)
    except ValueError:
        return parse_expr(str(value), ExprContext.LIPSCHITZ, dims)


def _parse_components(value: Any, context: ExprContext, dims: Tuple[int, int]) -> Tuple[Expr, ...]:
    text = repr(value) if isinstance(value, float) else str(value)
    return tuple(parse_expr(part.strip(), context, dims) for part in text.split(";"))


def problem_to_mapping(spec: ProblemSpec) -> Dict[str, Any]:
    """ProblemSpec -> 扁平键值"""
    mapping: Dict[str, Any] = {
        "name": spec.name,
        "mode": spec.mode.value,
        "horizon": float(spec.horizon),
        "m": spec.m,
        "d": spec.d,
        "p": float(spec.p),
        "epsilon": float(spec.epsilon),
        "terminal": "; ".join(print_expr(e) for e in spec.terminal),
        "generator": "; ".join(print_expr(e) for e in spec.generator),
    }
    for i, bound in enumerate(spec.lipschitz, 1):
        formatted = _format_bound(bound)
        if formatted is not None:
            mapping[f"lipschitz_l{i}"] = formatted
    return mapping


def problem_from_mapping(mapping: Mapping[str, Any]) -> ProblemSpec:
    """扁平键值 -> ProblemSpec；terminal 与 generator 必填"""
    for key in ("terminal", "generator"):
        if key not in mapping or mapping[key] in (None, ""):
            raise ValidationError(f"缺少字段 '{key}'")
    try:
        horizon = float(mapping.get("horizon", mapping.get("T", 1.0)))
        m = int(mapping.get("m", 1))
        d = int(mapping.get("d", 1))
        p = float(mapping.get("p", 2.0))
        epsilon = float(mapping.get("epsilon", 0.1))
    except (TypeError, ValueError) as e:
        raise ValidationError(f"数值字段无法解析: {e}", original_error=e)

    dims = (m, d)
    try:
        mode = SolveMode(mapping.get("mode") or SolveMode.MSOLUTION.value)
    except ValueError as e:
        raise ValidationError(f"未知的 mode '{mapping.get('mode')}'", original_error=e)
    return ProblemSpec(
        horizon=horizon, m=m, d=d, p=p,
        terminal=_parse_components(mapping["terminal"], ExprContext.TERMINAL, dims),
        generator=_parse_components(mapping["generator"], ExprContext.GENERATOR, dims),
        lipschitz=tuple(_parse_bound(mapping.get(f"lipschitz_l{i}"), dims) for i in (1, 2, 3)),
        mode=mode,
        epsilon=epsilon,
        name=str(mapping.get("name", "") or ""),
    )


def load_problem(path: Union[str, Path]) -> ProblemSpec:
    """读取扁平格式的问题文件"""
    path = Path(path)
    if not path.exists():
        raise ValidationError(str(path), ErrorCode.FILE_NOT_FOUND)
    spec = problem_from_mapping(read_flat(path.read_text(encoding="utf-8")))
    logger.info(f"问题已加载: {path} ({spec.mode.value}, p={spec.p})")
    return spec


def dump_problem(spec: ProblemSpec, path: Union[str, Path]):
    """写出扁平格式的问题文件"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(write_flat(problem_to_mapping(spec)), encoding="utf-8")
