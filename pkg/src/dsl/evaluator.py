"""
表达式求值
对绑定的标量或 numpy 数组逐元素求值
"""

from typing import Callable, Dict, Mapping, Union

import numpy as np

from dsl.expression import Add, BinOp, Call, Div, Expr, Mul, Neg, Num, Pow, Sub, Var
from utils.error_handler import ErrorCode, ExpressionError


Value = Union[float, np.ndarray]

_UNARY_FUNCTIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
    "sqrt_abs": lambda v: np.sqrt(np.abs(v)),
}

_REDUCING_FUNCTIONS = {
    "max": np.maximum,
    "min": np.minimum,
}


def _evaluate(expr: Expr, bindings: Mapping[str, Value]) -> Value:
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        label = expr.label
        if label not in bindings:
            raise ExpressionError(f"变量 '{label}' 未绑定", ErrorCode.EXPR_UNBOUND)
        return bindings[label]
    if isinstance(expr, Neg):
        return np.negative(_evaluate(expr.operand, bindings))
    if isinstance(expr, BinOp):
        left = _evaluate(expr.left, bindings)
        right = _evaluate(expr.right, bindings)
        if isinstance(expr, Add):
            return np.add(left, right)
        if isinstance(expr, Sub):
            return np.subtract(left, right)
        if isinstance(expr, Mul):
            return np.multiply(left, right)
        if isinstance(expr, Div):
            if np.any(np.asarray(right) == 0):
                raise ExpressionError("求值时分母为零", ErrorCode.EXPR_DIVISION)
            return np.divide(left, right)
    if isinstance(expr, Pow):
        return np.power(_evaluate(expr.base, bindings), expr.exponent)
    if isinstance(expr, Call):
        args = [_evaluate(arg, bindings) for arg in expr.args]
        if expr.func in _UNARY_FUNCTIONS:
            return _UNARY_FUNCTIONS[expr.func](args[0])
        result = args[0]
        for arg in args[1:]:
            result = _REDUCING_FUNCTIONS[expr.func](result, arg)
        return result
    raise TypeError(f"未知节点类型: {type(expr).__name__}")


def eval_expr(expr: Expr, bindings: Mapping[str, Value]) -> Value:
    """
    求值表达式

    Args:
        expr: 语法树
        bindings: 变量标签 -> 标量或数组（数组按 numpy 规则广播）

    Returns:
        标量输入时返回 float，否则返回数组

    Raises:
        ExpressionError: 变量未绑定（E303）或分母为零（E304）
    """
    result = _evaluate(expr, bindings)
    if np.ndim(result) == 0:
        return float(result)
    return result
