"""Scalar coefficient expressions: parsing, evaluation, differentiation.

Expressions are small immutable trees.  Evaluation accepts floats or numpy
arrays (evaluated elementwise), so whole sample grids can be pushed through
a single tree walk.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Mapping, Union

import numpy as np

Number = Union[float, np.ndarray]


class ExprError(Exception):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, source: str, offset: int, expected: str):
        self.source = source
        self.offset = offset
        self.expected = expected
        super().__init__(f"syntax error at offset {offset}: expected {expected} in {source!r}")


class UnboundVariable(ExprError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unbound variable {name!r}")


class DomainError(ExprError):
    def __init__(self, what: str, node: "Expression"):
        self.node = node
        super().__init__(f"{what} in {to_string(node)}")


# ---------------------------------------------------------------------------
# tree


class Expression:
    """Base class of all expression nodes."""

    @cached_property
    def free_vars(self) -> frozenset[str]:
        return frozenset().union(*(c.free_vars for c in self.children()))

    def children(self) -> tuple["Expression", ...]:
        return ()

    @cached_property
    def _scalar_fn(self):
        return _compile(self, False)

    @cached_property
    def _array_fn(self):
        return _compile(self, True)

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True, eq=True, repr=True)
class Num(Expression):
    value: float

    @cached_property
    def free_vars(self) -> frozenset[str]:
        return frozenset()


@dataclass(frozen=True, eq=True, repr=True)
class Var(Expression):
    name: str

    @cached_property
    def free_vars(self) -> frozenset[str]:
        return frozenset((self.name,))


@dataclass(frozen=True, eq=True, repr=True)
class Neg(Expression):
    arg: Expression

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, eq=True, repr=True)
class BinOp(Expression):
    op: str  # one of + - * / ^
    left: Expression
    right: Expression

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True, repr=True)
class Call(Expression):
    func: str
    args: tuple[Expression, ...]

    def children(self):
        return self.args


# Name -> arity.  pow(a, b) is normalised to a ^ b by the parser.
FUNCTIONS = {
    "sin": 1, "cos": 1, "tan": 1, "exp": 1, "ln": 1, "sqrt": 1,
    "tanh": 1, "sech": 1, "abs": 1, "sinh": 1, "cosh": 1, "atan": 1,
    "pow": 2,
}
CONSTANTS = {"pi": math.pi}


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(source):
            if source[pos:].strip() == "":
                break
            m = _TOKEN.match(source, pos)
            if m is None or m.end() == pos:
                start = pos + (len(source[pos:]) - len(source[pos:].lstrip()))
                raise ExprSyntaxError(source, start, "a number, name, operator or parenthesis")
            kind = m.lastgroup
            text = m.group(kind)
            start = m.start(kind)
            if text == "**":
                text = "^"
            self.tokens.append((kind, text, start))
            pos = m.end()
        self.tokens.append(("end", "", len(source)))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str):
        kind, t, off = self.peek()
        if t != text or kind == "end":
            raise ExprSyntaxError(self.source, off, repr(text))
        self.i += 1

    def parse(self) -> Expression:
        e = self.expr()
        kind, _, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(self.source, off, "an operator or end of input")
        return e

    def expr(self) -> Expression:
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> Expression:
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expression:
        kind, t, _ = self.peek()
        if kind == "op" and t == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and t == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expression:
        kind, t, off = self.take()
        if kind == "num":
            return Num(float(t))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if t not in FUNCTIONS:
                    raise ExprSyntaxError(self.source, off, f"a known function (got {t!r})")
                self.take()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[t]:
                    raise ExprSyntaxError(self.source, off, f"{FUNCTIONS[t]} argument(s) for {t}")
                if t == "pow":
                    return BinOp("^", args[0], args[1])
                return Call(t, tuple(args))
            if t in CONSTANTS:
                return Num(CONSTANTS[t])
            return Var(t)
        if kind == "op" and t == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise ExprSyntaxError(self.source, off, "a number, name or '('")


def parse(source: str) -> Expression:
    if not isinstance(source, str) or not source.strip():
        raise ExprSyntaxError(str(source), 0, "a non-empty expression")
    return _Parser(source).parse()


def as_expr(e: Union[str, float, int, Expression]) -> Expression:
    if isinstance(e, Expression):
        return e
    if isinstance(e, (int, float)):
        return Num(float(e))
    return parse(e)


# ---------------------------------------------------------------------------
# evaluation


def _err(what, node):
    raise DomainError(what, node)


def _apow(b, e, node):
    b, e = np.broadcast_arrays(np.asarray(b, dtype=float), np.asarray(e, dtype=float))
    if np.any((b < 0) & (e != np.round(e))):
        raise DomainError("negative base with non-integer exponent", node)
    if np.any((b == 0) & (e < 0)):
        raise DomainError("zero to a negative power", node)
    return np.power(b, e)


def _spow(b, e, node):
    if b < 0 and e != math.floor(e):
        raise DomainError("negative base with non-integer exponent", node)
    if b == 0 and e < 0:
        raise DomainError("zero to a negative power", node)
    return b ** e


_SCALAR_NS = {"sin": math.sin, "cos": math.cos, "tan": math.tan, "exp": math.exp, "tanh": math.tanh,
              "sinh": math.sinh, "cosh": math.cosh, "atan": math.atan, "abs": abs, "sqrt": math.sqrt,
              "log": math.log, "_pow": _spow, "_err": _err}
_ARRAY_NS = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "tanh": np.tanh,
             "sinh": np.sinh, "cosh": np.cosh, "atan": np.arctan, "abs": np.abs, "sqrt": np.sqrt,
             "log": np.log, "_pow": _apow, "_err": _err, "_any": np.any}


def _compile(root: Expression, array: bool) -> Callable[[Mapping[str, Number]], Number]:
    """Generate one straight-line Python function for the tree.

    Shared subtrees (same object) are evaluated once.  Domain checks mirror
    the real-valued semantics: division by zero, zero to a negative power,
    negative base with a non-integer exponent, ln and sqrt of invalid input.
    """
    lines: list[str] = []
    consts: dict[str, object] = {}
    memo: dict[int, str] = {}
    names: dict[str, str] = {}
    keep: list = []
    counter = iter(range(10 ** 9))

    def fresh() -> str:
        return f"v{next(counter)}"

    def cond(c: str) -> str:
        return f"_any({c})" if array else c

    def node_ref(node) -> str:
        key = f"N{len(consts)}"
        consts[key] = node
        return key

    def emit(node) -> str:
        hit = memo.get(id(node))
        if hit is not None:
            return hit
        keep.append(node)
        if isinstance(node, Num):
            out = f"({float(node.value)!r})"
            if not math.isfinite(node.value):
                ref = node_ref(node.value)
                out = ref
            memo[id(node)] = out
            return out
        if isinstance(node, Var):
            if node.name not in names:
                v = fresh()
                lines.append(f"{v} = env[{node.name!r}]")
                names[node.name] = v
            memo[id(node)] = names[node.name]
            return names[node.name]
        if isinstance(node, Neg):
            a = emit(node.arg)
            v = fresh()
            lines.append(f"{v} = -{a}")
        elif isinstance(node, BinOp):
            a, b = emit(node.left), emit(node.right)
            v = fresh()
            op = node.op
            if op in "+-*":
                lines.append(f"{v} = {a} {op} {b}")
            elif op == "/":
                lines.append(f"if {cond(f'{b} == 0')}: _err('division by zero', {node_ref(node)})")
                lines.append(f"{v} = {a} / {b}")
            elif isinstance(node.right, Num) and node.right.value == int(node.right.value):
                k = node.right.value
                if k == 2:
                    lines.append(f"{v} = {a} * {a}")
                elif k >= 0:
                    lines.append(f"{v} = {a} ** {k!r}")
                else:
                    lines.append(f"if {cond(f'{a} == 0')}: _err('zero to a negative power', {node_ref(node)})")
                    lines.append(f"{v} = {a} ** {k!r}")
            else:
                lines.append(f"{v} = _pow({a}, {b}, {node_ref(node)})")
        elif isinstance(node, Call):
            a = emit(node.args[0])
            v = fresh()
            name = node.func
            if name == "ln":
                lines.append(f"if {cond(f'{a} <= 0')}: _err('logarithm of a non-positive number', {node_ref(node)})")
                lines.append(f"{v} = log({a})")
            elif name == "sqrt":
                lines.append(f"if {cond(f'{a} < 0')}: _err('square root of a negative number', {node_ref(node)})")
                lines.append(f"{v} = sqrt({a})")
            elif name == "sech":
                lines.append(f"{v} = 1.0 / cosh({a})")
            else:
                lines.append(f"{v} = {name}({a})")
        else:
            raise TypeError(f"not an expression node: {node!r}")
        memo[id(node)] = v
        return v

    result = emit(root)
    body = "\n".join("        " + ln for ln in lines) or "        pass"
    src = (f"def _f(env):\n    try:\n{body}\n    except KeyError as exc:\n"
           f"        raise _Unbound(exc.args[0]) from None\n    return {result}\n")
    ns = dict(_ARRAY_NS if array else _SCALAR_NS)
    ns.update(consts)
    ns["_Unbound"] = UnboundVariable
    exec(compile(src, "<expression>", "exec"), ns)
    return ns["_f"]


def evaluate(e: Expression, bindings: Mapping[str, Number]) -> Number:
    """Evaluate ``e``; arrays in ``bindings`` are broadcast elementwise."""
    if any(isinstance(v, np.ndarray) for v in bindings.values()):
        return e._array_fn(bindings)
    try:
        return float(e._scalar_fn(bindings))
    except OverflowError:
        return math.inf
    except ValueError as exc:  # math library domain failures not caught above (tan poles etc.)
        raise DomainError(str(exc), e) from None


def compile_expr(e: Expression) -> Callable[[Mapping[str, Number]], Number]:
    """Return a fast evaluator picking the scalar or array path per call."""
    sf, af = e._scalar_fn, e._array_fn

    def fn(env):
        for v in env.values():
            if isinstance(v, np.ndarray):
                return af(env)
        return sf(env)
    return fn


# ---------------------------------------------------------------------------
# construction helpers with constant folding


def _is(e: Expression, v: float) -> bool:
    return isinstance(e, Num) and e.value == v


def add(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(b, Neg):
        return BinOp("-", a, b.arg)
    return BinOp("+", a, b)


def sub(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if _is(b, 0):
        return a
    if _is(a, 0):
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if _is(a, 0) or _is(b, 0):
        return Num(0.0)
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if _is(a, -1):
        return neg(b)
    if _is(b, -1):
        return neg(a)
    return BinOp("*", a, b)


def div(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0:
        return Num(a.value / b.value)
    if _is(a, 0):
        return Num(0.0)
    if _is(b, 1):
        return a
    return BinOp("/", a, b)


def neg(a: Expression) -> Expression:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a: Expression, b: Expression) -> Expression:
    if _is(b, 0):
        return Num(1.0)
    if _is(b, 1):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        try:
            v = a.value ** b.value
            if isinstance(v, float) and math.isfinite(v):
                return Num(v)
        except (ZeroDivisionError, OverflowError):
            pass
    return BinOp("^", a, b)


def call(name: str, a: Expression) -> Expression:
    return Call(name, (a,))


# ---------------------------------------------------------------------------
# differentiation


def differentiate(e: Expression, var: str) -> Expression:
    """Exact partial derivative of ``e`` with respect to ``var``."""
    if var not in e.free_vars:
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0)
    if isinstance(e, Neg):
        return neg(differentiate(e.arg, var))
    if isinstance(e, BinOp):
        u, v = e.left, e.right
        du, dv = differentiate(u, var), differentiate(v, var)
        if e.op == "+":
            return add(du, dv)
        if e.op == "-":
            return sub(du, dv)
        if e.op == "*":
            return add(mul(du, v), mul(u, dv))
        if e.op == "/":
            return div(sub(mul(du, v), mul(u, dv)), power(v, Num(2.0)))
        # power
        if _is(dv, 0):
            return mul(mul(v, power(u, sub(v, Num(1.0)))), du)
        # d(u^v) = u^v * (v' ln u + v u'/u)
        return mul(e, add(mul(dv, call("ln", u)), div(mul(v, du), u)))
    if isinstance(e, Call):
        u = e.args[0]
        du = differentiate(u, var)
        name = e.func
        if name == "sin":
            d = call("cos", u)
        elif name == "cos":
            d = neg(call("sin", u))
        elif name == "tan":
            d = power(call("cos", u), Num(-2.0))
        elif name == "exp":
            d = e
        elif name == "ln":
            return div(du, u)
        elif name == "sqrt":
            return div(du, mul(Num(2.0), e))
        elif name == "tanh":
            d = power(call("sech", u), Num(2.0))
        elif name == "sech":
            d = neg(mul(e, call("tanh", u)))
        elif name == "abs":
            d = div(u, e)
        elif name == "sinh":
            d = call("cosh", u)
        elif name == "cosh":
            d = call("sinh", u)
        elif name == "atan":
            return div(du, add(Num(1.0), power(u, Num(2.0))))
        else:  # pragma: no cover - parser rejects unknown names
            raise ExprError(f"no derivative rule for {name}")
        return mul(d, du)
    raise TypeError(f"not an expression node: {e!r}")


def substitute(e: Expression, mapping: Mapping[str, Expression]) -> Expression:
    """Replace variables by expressions (simultaneously)."""
    if not (e.free_vars & mapping.keys()):
        return e
    if isinstance(e, Var):
        return mapping[e.name]
    if isinstance(e, Neg):
        return neg(substitute(e.arg, mapping))
    if isinstance(e, BinOp):
        l, r = substitute(e.left, mapping), substitute(e.right, mapping)
        return {"+": add, "-": sub, "*": mul, "/": div, "^": power}[e.op](l, r)
    if isinstance(e, Call):
        return Call(e.func, tuple(substitute(a, mapping) for a in e.args))
    return e


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def to_string(e: Expression) -> str:
    return _fmt(e, 0)


def _fmt(e: Expression, outer: int) -> str:
    if isinstance(e, Num):
        s = repr(e.value)
        if e.value < 0 or s.startswith("-"):
            return f"({s})"
        if s in ("inf", "nan"):
            raise ExprError(f"cannot print non-finite literal {s}")
        return s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}(" + ", ".join(_fmt(a, 0) for a in e.args) + ")"
    if isinstance(e, Neg):
        s = "-" + _fmt(e.arg, _PREC["neg"])
        return f"({s})" if outer > _PREC["neg"] else s
    p = _PREC[e.op]
    if e.op == "^":
        # right-associative: base needs strictly higher, exponent may be a unary
        s = f"{_fmt(e.left, p + 1)}^{_fmt(e.right, _PREC['neg'])}"
    else:
        # right operand one level tighter so the printed tree re-parses to the same shape
        s = f"{_fmt(e.left, p)} {e.op} {_fmt(e.right, p + 1)}"
    return f"({s})" if outer > p else s
