"""
表达式语法树与解析器

文法（优先级从高到低）:
    一元负号 > 乘方 ^（指数为非负整数字面量）> * / > + -
    函数调用 f(a, b)，函数集合: exp sin cos abs sqrt_abs max min
    变量: t s y_k z_k_l zeta_k_l w_l x_l（下标从 0 开始）
"""

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import ClassVar, Dict, FrozenSet, Iterator, List, Optional, Tuple, Union

from utils.error_handler import ErrorCode, ExpressionError


class ExprContext(str, Enum):
    """表达式所在的上下文，决定允许的变量集合"""
    TERMINAL = "terminal"
    GENERATOR = "generator"
    LIPSCHITZ = "lipschitz"


# 上下文 -> 变量前缀 -> 下标个数（None 表示不带下标）
CONTEXT_VARIABLES: Dict[ExprContext, Dict[str, Optional[str]]] = {
    ExprContext.TERMINAL: {"t": None, "x": "d"},
    ExprContext.GENERATOR: {
        "t": None, "s": None,
        "y": "m", "z": "md", "zeta": "md", "w": "d",
    },
    ExprContext.LIPSCHITZ: {"t": None, "s": None},
}

FUNCTION_ARITY: Dict[str, Tuple[int, Optional[int]]] = {
    "exp": (1, 1),
    "sin": (1, 1),
    "cos": (1, 1),
    "abs": (1, 1),
    "sqrt_abs": (1, 1),
    "max": (2, None),
    "min": (2, None),
}


class Expr:
    """语法树节点基类"""


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str
    indices: Tuple[int, ...] = ()

    @property
    def label(self) -> str:
        return "_".join([self.name, *map(str, self.indices)])


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    left: Expr
    right: Expr

    symbol: ClassVar[str] = "?"


class Add(BinOp):
    symbol = "+"


class Sub(BinOp):
    symbol = "-"


class Mul(BinOp):
    symbol = "*"


class Div(BinOp):
    symbol = "/"


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Call(Expr):
    func: str
    args: Tuple[Expr, ...]


BINARY_OPERATORS = {"+": (1, Add), "-": (1, Sub), "*": (2, Mul), "/": (2, Div)}


@dataclass(frozen=True)
class Token:
    kind: str  # num, name, op, end
    text: str
    position: int


_TOKEN_PATTERN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)


def tokenize(source: str) -> List[Token]:
    """把源文本切分为记号，记录每个记号的起始位置"""
    tokens: List[Token] = []
    pos = 0
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        match = _TOKEN_PATTERN.match(source, pos)
        if not match or match.end() == pos:
            start = pos + len(source[pos:]) - len(source[pos:].lstrip())
            raise ExpressionError(f"无法识别的字符 '{source[start]}'", position=start)
        kind = match.lastgroup
        tokens.append(Token(kind, match.group(kind), match.start(kind)))
        pos = match.end()
    tokens.append(Token("end", "", len(source)))
    return tokens


class _Parser:
    """优先级爬升解析器"""

    def __init__(self, source: str, context: ExprContext, dims: Tuple[int, int]):
        self.source = source
        self.context = context
        self.m, self.d = dims
        self.tokens = tokenize(source)
        self.index = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def advance(self) -> Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect(self, text: str) -> Token:
        if self.current.text != text:
            found = self.current.text or "输入结束"
            raise ExpressionError(f"期望 '{text}'，实际为 '{found}'", position=self.current.position)
        return self.advance()

    def parse(self) -> Expr:
        expr = self.parse_binary(1)
        if self.current.kind != "end":
            raise ExpressionError(f"多余的记号 '{self.current.text}'", position=self.current.position)
        return expr

    def parse_binary(self, min_prec: int) -> Expr:
        left = self.parse_power()
        while self.current.kind == "op" and self.current.text in BINARY_OPERATORS:
            prec, node_cls = BINARY_OPERATORS[self.current.text]
            if prec < min_prec:
                break
            op_token = self.advance()
            right = self.parse_binary(prec + 1)
            if node_cls is Div and _is_literal_zero(right):
                raise ExpressionError("分母为字面量 0", ErrorCode.EXPR_DIVISION, position=op_token.position)
            left = node_cls(left, right)
        return left

    def parse_power(self) -> Expr:
        base = self.parse_unary()
        while self.current.text == "^":
            self.advance()
            token = self.current
            if token.kind != "num" or not token.text.isdigit():
                raise ExpressionError("乘方指数必须是非负整数字面量", position=token.position)
            self.advance()
            base = Pow(base, int(token.text))
        return base

    def parse_unary(self) -> Expr:
        if self.current.text == "-":
            self.advance()
            return Neg(self.parse_unary())
        return self.parse_primary()

    def parse_primary(self) -> Expr:
        token = self.current
        if token.kind == "num":
            self.advance()
            value = float(token.text)
            if not math.isfinite(value):
                raise ExpressionError(f"数值超出浮点范围 '{token.text}'", position=token.position)
            return Num(value)
        if token.kind == "name":
            self.advance()
            if self.current.text == "(":
                return self.parse_call(token)
            return self.make_variable(token)
        if token.text == "(":
            self.advance()
            expr = self.parse_binary(1)
            self.expect(")")
            return expr
        found = token.text or "输入结束"
        raise ExpressionError(f"意外的记号 '{found}'", position=token.position)

    def parse_call(self, name: Token) -> Expr:
        if name.text not in FUNCTION_ARITY:
            raise ExpressionError(f"未知函数 '{name.text}'", position=name.position)
        self.expect("(")
        args = [self.parse_binary(1)]
        while self.current.text == ",":
            self.advance()
            args.append(self.parse_binary(1))
        self.expect(")")

        low, high = FUNCTION_ARITY[name.text]
        if len(args) < low or (high is not None and len(args) > high):
            raise ExpressionError(f"函数 {name.text} 的参数个数不正确: {len(args)}", position=name.position)
        return Call(name.text, tuple(args))

    def make_variable(self, token: Token) -> Var:
        allowed = CONTEXT_VARIABLES[self.context]
        parts = token.text.split("_")
        # 前缀与各个下标以下划线分隔
        head, raw_indices = parts[0], parts[1:]
        if head not in allowed:
            raise ExpressionError(
                f"变量 '{token.text}' 不允许出现在 {self.context.value} 上下文中",
                ErrorCode.EXPR_VARIABLE, position=token.position,
            )

        shape = allowed[head]
        bounds = [] if shape is None else [self.m if c == "m" else self.d for c in shape]
        if len(raw_indices) != len(bounds) or not all(i.isdigit() for i in raw_indices):
            raise ExpressionError(
                f"变量 '{token.text}' 的下标个数应为 {len(bounds)}",
                ErrorCode.EXPR_VARIABLE, position=token.position,
            )

        indices = tuple(int(i) for i in raw_indices)
        for index, bound in zip(indices, bounds):
            if index >= bound:
                raise ExpressionError(
                    f"变量 '{token.text}' 的下标 {index} 越界（上界 {bound}）",
                    ErrorCode.EXPR_VARIABLE, position=token.position,
                )
        return Var(head, indices)


def _is_literal_zero(expr: Expr) -> bool:
    while isinstance(expr, Neg):
        expr = expr.operand
    return isinstance(expr, Num) and expr.value == 0.0


def parse_expr(source: str, context: Union[ExprContext, str] = ExprContext.GENERATOR,
               dims: Tuple[int, int] = (1, 1)) -> Expr:
    """
    解析表达式

    Args:
        source: 表达式文本
        context: terminal / generator / lipschitz
        dims: (m, d)，用于下标越界检查

    Returns:
        语法树

    Raises:
        ExpressionError: 语法错误（带位置）、变量越出上下文或下标越界
    """
    return _Parser(source, ExprContext(context), dims).parse()


def print_expr(expr: Expr) -> str:
    """规范打印：二元运算全部加括号，实数用 repr，保证可逐位还原"""
    if isinstance(expr, Num):
        text = repr(float(expr.value))
        return f"({text})" if text.startswith("-") else text
    if isinstance(expr, Var):
        return expr.label
    if isinstance(expr, Neg):
        return f"(-{print_expr(expr.operand)})"
    if isinstance(expr, BinOp):
        return f"({print_expr(expr.left)} {expr.symbol} {print_expr(expr.right)})"
    if isinstance(expr, Pow):
        return f"({print_expr(expr.base)} ^ {expr.exponent})"
    if isinstance(expr, Call):
        return f"{expr.func}({', '.join(print_expr(a) for a in expr.args)})"
    raise TypeError(f"未知节点类型: {type(expr).__name__}")


def iter_nodes(expr: Expr) -> Iterator[Expr]:
    """先序遍历全部节点"""
    yield expr
    if isinstance(expr, Neg):
        yield from iter_nodes(expr.operand)
    elif isinstance(expr, BinOp):
        yield from iter_nodes(expr.left)
        yield from iter_nodes(expr.right)
    elif isinstance(expr, Pow):
        yield from iter_nodes(expr.base)
    elif isinstance(expr, Call):
        for arg in expr.args:
            yield from iter_nodes(arg)


def free_variables(expr: Expr) -> FrozenSet[str]:
    """表达式中出现的变量标签集合，如 {'t', 'y_0', 'zeta_0_0'}"""
    return frozenset(node.label for node in iter_nodes(expr) if isinstance(node, Var))
