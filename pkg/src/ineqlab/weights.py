"""Radial weight expressions: parsing, evaluation, symbolic differentiation.

Grammar (EBNF)::

    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := number | "r" | "e" | "pi"
            | "pow(" expr "," number ")" | "log(" expr ")" | "exp(" expr ")"
            | "(" expr ")" | "-" factor

``e`` and ``pi`` are keywords evaluated at full double precision.  Pretty
printing round-trips: ``parse_weight(str(expr))`` rebuilds an equal AST.

Expressions are radial (single variable ``r``), immutable after
construction, and therefore safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

__all__ = [
    "WeightExpr",
    "WeightError",
    "ParseError",
    "parse_weight",
    "differentiate",
    "builtin",
    "BUILTIN_NAMES",
    "const",
    "var_r",
    "Z0",
]

# First zero of the order-zero Bessel function J0, to double precision.
Z0 = 2.40482555769577276862


class WeightError(ValueError):
    """Invalid weight expression or parameters."""


class ParseError(WeightError):
    """Syntax error; carries the offending position."""

    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


# ---------------------------------------------------------------------------
# AST


class Node:
    __slots__ = ()

    def __add__(self, other):
        return Add(self, _as_node(other))

    def __sub__(self, other):
        return Sub(self, _as_node(other))

    def __mul__(self, other):
        return Mul(self, _as_node(other))

    def __truediv__(self, other):
        return Div(self, _as_node(other))

    def __rmul__(self, other):
        return Mul(_as_node(other), self)

    def __radd__(self, other):
        return Add(_as_node(other), self)

    def __rsub__(self, other):
        return Sub(_as_node(other), self)

    def __rtruediv__(self, other):
        return Div(_as_node(other), self)


def _as_node(x) -> "Node":
    if isinstance(x, Node):
        return x
    return Const(float(x))


@dataclass(frozen=True)
class Const(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    pass


@dataclass(frozen=True)
class Add(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Sub(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Mul(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Div(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: float


@dataclass(frozen=True)
class Log(Node):
    arg: Node


@dataclass(frozen=True)
class Exp(Node):
    arg: Node


# precedence levels for printing: additive 1, multiplicative 2, atoms 3
_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2}


def _print(node: Node) -> str:
    t = type(node)
    if t is Const:
        v = node.value
        if v < 0:
            return repr(v)
        return repr(v)
    if t is Var:
        return "r"
    if t is Pow:
        return f"pow({_print(node.base)},{repr(node.exponent)})"
    if t is Log:
        return f"log({_print(node.arg)})"
    if t is Exp:
        return f"exp({_print(node.arg)})"
    prec = _PREC[t]
    left, right = node.left, node.right
    ls = _print(left)
    rs = _print(right)
    if _PREC.get(type(left), 3) < prec:
        ls = f"({ls})"
    # left-associative grammar: right operand needs parens at equal precedence
    if _PREC.get(type(right), 3) <= prec:
        rs = f"({rs})"
    op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[t]
    return f"{ls}{op}{rs}"


def _eval(node: Node, r):
    t = type(node)
    if t is Const:
        return node.value if np.isscalar(r) else np.full_like(np.asarray(r, float), node.value)
    if t is Var:
        return r if np.isscalar(r) else np.asarray(r, float)
    if t is Add:
        return _eval(node.left, r) + _eval(node.right, r)
    if t is Sub:
        return _eval(node.left, r) - _eval(node.right, r)
    if t is Mul:
        return _eval(node.left, r) * _eval(node.right, r)
    if t is Div:
        return _eval(node.left, r) / _eval(node.right, r)
    if t is Pow:
        return _eval(node.base, r) ** node.exponent
    if t is Log:
        return np.log(_eval(node.arg, r))
    if t is Exp:
        return np.exp(_eval(node.arg, r))
    raise TypeError(f"unknown node {t!r}")


def _diff(node: Node) -> Node:
    t = type(node)
    if t is Const:
        return Const(0.0)
    if t is Var:
        return Const(1.0)
    if t is Add:
        return Add(_diff(node.left), _diff(node.right))
    if t is Sub:
        return Sub(_diff(node.left), _diff(node.right))
    if t is Mul:
        return Add(Mul(_diff(node.left), node.right), Mul(node.left, _diff(node.right)))
    if t is Div:
        num = Sub(Mul(_diff(node.left), node.right), Mul(node.left, _diff(node.right)))
        return Div(num, Pow(node.right, 2.0))
    if t is Pow:
        return Mul(Mul(Const(node.exponent), Pow(node.base, node.exponent - 1.0)), _diff(node.base))
    if t is Log:
        return Div(_diff(node.arg), node.arg)
    if t is Exp:
        return Mul(Exp(node.arg), _diff(node.arg))
    raise TypeError(f"unknown node {t!r}")


# ---------------------------------------------------------------------------
# Bytecode compilation (consumed by the ODE kernels)

OP_CONST = 0
OP_R = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_POW = 6
OP_LOG = 7
OP_EXP = 8


def _compile(node: Node, ops: list, args: list, consts: list) -> int:
    """Postorder flatten; returns stack depth needed."""
    t = type(node)
    if t is Const:
        ops.append(OP_CONST)
        args.append(len(consts))
        consts.append(node.value)
        return 1
    if t is Var:
        ops.append(OP_R)
        args.append(0)
        return 1
    if t is Pow:
        d = _compile(node.base, ops, args, consts)
        ops.append(OP_POW)
        args.append(len(consts))
        consts.append(node.exponent)
        return d
    if t in (Log, Exp):
        d = _compile(node.arg, ops, args, consts)
        ops.append(OP_LOG if t is Log else OP_EXP)
        args.append(0)
        return d
    dl = _compile(node.left, ops, args, consts)
    dr = _compile(node.right, ops, args, consts)
    ops.append({Add: OP_ADD, Sub: OP_SUB, Mul: OP_MUL, Div: OP_DIV}[t])
    args.append(0)
    return max(dl, dr + 1)


# ---------------------------------------------------------------------------
# Singular order at r -> 0+

_UNKNOWN = object()


def _symbolic_order(node: Node):
    """Polynomial growth order a with node ~ C r^{-a}; logs count as order 0.

    Returns _UNKNOWN when the AST is not a monomial-times-log-powers shape
    (exp of unbounded argument, differences that may cancel, ...).
    """
    t = type(node)
    if t is Const:
        return 0.0
    if t is Var:
        return -1.0
    if t is Pow:
        a = _symbolic_order(node.base)
        return _UNKNOWN if a is _UNKNOWN else a * node.exponent
    if t is Mul:
        a, b = _symbolic_order(node.left), _symbolic_order(node.right)
        return _UNKNOWN if _UNKNOWN in (a, b) else a + b
    if t is Div:
        a, b = _symbolic_order(node.left), _symbolic_order(node.right)
        return _UNKNOWN if _UNKNOWN in (a, b) else a - b
    if t is Add:
        a, b = _symbolic_order(node.left), _symbolic_order(node.right)
        return _UNKNOWN if _UNKNOWN in (a, b) else max(a, b)
    if t is Sub:
        a, b = _symbolic_order(node.left), _symbolic_order(node.right)
        if _UNKNOWN in (a, b) or a == b:
            return _UNKNOWN  # leading terms may cancel
        return max(a, b)
    if t is Log:
        a = _symbolic_order(node.arg)
        if a is _UNKNOWN:
            return _UNKNOWN
        return 0.0  # log factors are sub-polynomial
    if t is Exp:
        a = _symbolic_order(node.arg)
        if a is _UNKNOWN or a > 0:
            return _UNKNOWN  # exp of a blowing-up argument
        return 0.0
    raise TypeError


def _numeric_order(node: Node) -> float:
    """Log-log slope fit of the growth rate on r in [1e-8, 1e-4].

    The regression includes a log-log basis term so that weights with
    logarithmic corrections (1/(r^2 log^2(rho/r)) and friends) still yield
    the polynomial order.
    """
    r = np.geomspace(1e-8, 1e-4, 48)
    with np.errstate(all="ignore"):
        v = np.abs(_eval(node, r))
    mask = np.isfinite(v) & (v > 0)
    if mask.sum() < 8:
        return 0.0
    r, v = r[mask], v[mask]
    L = np.log(1.0 / r)
    basis = np.column_stack([L, np.log(L), np.ones_like(L)])
    coef, *_ = np.linalg.lstsq(basis, np.log(v), rcond=None)
    return float(coef[0])


# ---------------------------------------------------------------------------
# Public wrapper


@dataclass(frozen=True)
class WeightExpr:
    """A parsed radial weight with cached derivative metadata.

    Attributes
    ----------
    ast : Node
        Expression tree.
    singular_order : float
        Exponent a with expr ~ C r^{-a} as r -> 0+.
    r_max : float
        Upper end of the validity interval (0, r_max]; ``inf`` when no
        finite bound is known.
    """

    ast: Node
    singular_order: float = field(default=0.0)
    r_max: float = field(default=math.inf)

    def __call__(self, r):
        with np.errstate(all="ignore"):
            return _eval(self.ast, r)

    def __str__(self) -> str:
        return _print(self.ast)

    def diff(self, order: int = 1) -> "WeightExpr":
        return differentiate(self, order)

    def compile(self):
        """Flatten to (ops, args, consts, stack_size) int64/float64 arrays."""
        ops: list = []
        args: list = []
        consts: list = []
        depth = _compile(self.ast, ops, args, consts)
        return (
            np.asarray(ops, dtype=np.int64),
            np.asarray(args, dtype=np.int64),
            np.asarray(consts, dtype=np.float64),
            int(depth),
        )

    def nonnegative_on(self, r_lo: float, r_hi: float, samples: int = 1000) -> bool:
        r = np.geomspace(max(r_lo, 1e-300), r_hi, samples)
        v = self(r)
        v = v[np.isfinite(v)]
        return bool(v.size == 0 or np.min(v) >= -1e-12 * max(1.0, np.max(np.abs(v))))

    # algebra helpers used when assembling ODE coefficients
    def __add__(self, other):
        return wrap(Add(self.ast, _coerce_ast(other)))

    def __sub__(self, other):
        return wrap(Sub(self.ast, _coerce_ast(other)))

    def __mul__(self, other):
        return wrap(Mul(self.ast, _coerce_ast(other)))

    def __truediv__(self, other):
        return wrap(Div(self.ast, _coerce_ast(other)))

    def __rmul__(self, other):
        return wrap(Mul(_coerce_ast(other), self.ast))


def _coerce_ast(x) -> Node:
    if isinstance(x, WeightExpr):
        return x.ast
    if isinstance(x, Node):
        return x
    return Const(float(x))


def wrap(node: Node, r_max: float = math.inf) -> WeightExpr:
    order = _symbolic_order(node)
    if order is _UNKNOWN:
        order = _numeric_order(node)
    return WeightExpr(ast=node, singular_order=float(order), r_max=r_max)


def const(c: float) -> WeightExpr:
    return wrap(Const(float(c)))


def var_r() -> WeightExpr:
    return wrap(Var())


def power_of_r(exponent: float) -> WeightExpr:
    if exponent == 0:
        return const(1.0)
    if exponent == 1:
        return var_r()
    return wrap(Pow(Var(), float(exponent)))


def differentiate(expr: WeightExpr, order: int = 1) -> WeightExpr:
    """Exact symbolic derivative of a weight expression (order 1 or 2)."""
    if order not in (1, 2):
        raise WeightError("differentiate supports order 1 or 2 only")
    node = _diff(expr.ast)
    if order == 2:
        node = _diff(node)
    return wrap(node, r_max=expr.r_max)


# ---------------------------------------------------------------------------
# Parser

_KEYWORD_CONSTANTS = {"e": math.e, "pi": math.pi}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg: str):
        raise ParseError(msg, self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            self.error(f"expected '{ch}'")
        self.pos += 1

    def parse(self) -> Node:
        node = self.expr()
        self.skip_ws()
        if self.pos != len(self.text):
            self.error("trailing input")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek() in ("+", "-"):
            op = self.peek()
            self.pos += 1
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek() in ("*", "/"):
            op = self.peek()
            self.pos += 1
            rhs = self.factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def factor(self) -> Node:
        ch = self.peek()
        if ch == "-":
            self.pos += 1
            return Mul(Const(-1.0), self.factor())
        if ch == "+":
            self.pos += 1
            return self.factor()
        if ch == "(":
            self.pos += 1
            node = self.expr()
            self.expect(")")
            return node
        if ch.isdigit() or ch == ".":
            return Const(self.number())
        if ch.isalpha():
            name = self.identifier()
            if name == "r":
                return Var()
            if name in _KEYWORD_CONSTANTS:
                return Const(_KEYWORD_CONSTANTS[name])
            if name == "pow":
                self.expect("(")
                base = self.expr()
                self.expect(",")
                self.skip_ws()
                expo = self.signed_number()
                self.expect(")")
                return Pow(base, expo)
            if name in ("log", "exp"):
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Log(arg) if name == "log" else Exp(arg)
            self.error(f"unknown identifier '{name}'")
        self.error("expected a factor")

    def identifier(self) -> str:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos].isalnum() or self.text[self.pos] == "_"):
            self.pos += 1
        return self.text[start : self.pos]

    def signed_number(self) -> float:
        sign = 1.0
        if self.peek() == "-":
            self.pos += 1
            sign = -1.0
        elif self.peek() == "+":
            self.pos += 1
        return sign * self.number()

    def number(self) -> float:
        self.skip_ws()
        start = self.pos
        seen_digit = False
        while self.pos < len(self.text) and (self.text[self.pos].isdigit() or self.text[self.pos] == "."):
            seen_digit = seen_digit or self.text[self.pos].isdigit()
            self.pos += 1
        if self.pos < len(self.text) and self.text[self.pos] in "eE":
            # scientific notation requires a digit or sign right after
            nxt = self.text[self.pos + 1 : self.pos + 2]
            if nxt.isdigit() or nxt in "+-":
                self.pos += 2
                while self.pos < len(self.text) and self.text[self.pos].isdigit():
                    self.pos += 1
        if not seen_digit:
            self.error("expected a number")
        try:
            return float(self.text[start : self.pos])
        except ValueError:
            self.error(f"bad number '{self.text[start:self.pos]}'")


def parse_weight(text: str) -> WeightExpr:
    """Parse a DSL string into a WeightExpr.

    The returned expression carries ``singular_order`` and, for shapes the
    catalog recognizes (constants, pure powers, the inverse-square log
    weight), the matching validity radius ``r_max``.
    """
    node = _Parser(text).parse()
    expr = wrap(node)
    r_max = _recognized_r_max(expr)
    if r_max is not None:
        expr = WeightExpr(ast=node, singular_order=expr.singular_order, r_max=r_max)
    return expr


def _recognized_r_max(expr: WeightExpr) -> Optional[float]:
    """Validity radius for recognized catalog shapes, else None."""
    probe = np.array([0.05, 0.11, 0.23, 0.47])
    with np.errstate(all="ignore"):
        v = expr(probe)
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        return None
    # constant c -> first-zero radius z0/sqrt(c)
    if np.allclose(v, v[0], rtol=1e-12, atol=0):
        c = float(v[0])
        if c == 0.0:
            return math.inf
        return Z0 / math.sqrt(c)
    # pure power c*r^(-a) with 0 <= a < 2
    with np.errstate(all="ignore"):
        slopes = np.diff(np.log(v)) / np.diff(np.log(probe))
    if np.allclose(slopes, slopes[0], rtol=0, atol=1e-10):
        a = -float(slopes[0])
        c = float(v[0] * probe[0] ** a)
        if abs(a) < 1e-12 or not (0 <= a < 2 - 1e-9):
            return None
        try:
            z_a = ((2.0 - a) / 2.0 * Z0) ** (2.0 / (2.0 - a))
            return z_a * c ** (-1.0 / (2.0 - a))
        except OverflowError:
            return None
    # inverse-square log weight 1/(4 r^2 log^2(rho/r))
    r0 = probe[0]
    val = float(v[0])
    if val > 0:
        rho = r0 * math.exp(1.0 / math.sqrt(4.0 * r0 * r0 * val))
        cand = _inv_sq_log_node(rho)
        with np.errstate(all="ignore"):
            w = _eval(cand, probe)
        if np.allclose(w, v, rtol=1e-9, atol=0):
            return rho / math.e
    return None


# ---------------------------------------------------------------------------
# Builtin catalog

BUILTIN_NAMES = ("zero", "one", "power", "inv_sq_log", "iterlog", "pair_shift")


def _inv_sq_log_node(rho: float) -> Node:
    return Div(Const(1.0), Mul(Mul(Const(4.0), Pow(Var(), 2.0)), Pow(Log(Div(Const(rho), Var())), 2.0)))


def _iterlog_node(k: int, rho: float) -> Node:
    # sum_{j=1..k} (prod_{i=1..j} log^(i)(rho/r))^-2, all over r^2
    terms = None
    iter_logs = []
    inner: Node = Div(Const(rho), Var())
    for _ in range(k):
        inner = Log(inner)
        iter_logs.append(inner)
    for j in range(1, k + 1):
        prod: Node = iter_logs[0]
        for i in range(1, j):
            prod = Mul(prod, iter_logs[i])
        term = Pow(prod, -2.0)
        terms = term if terms is None else Add(terms, term)
    return Div(terms, Pow(Var(), 2.0))


def _exp_tower(k: int) -> float:
    v = 1.0
    for _ in range(k):
        v = math.exp(v)
        if v > 1e300:
            raise WeightError(f"iterlog tower overflows double precision at k={k}")
    return v


def builtin(name: str, **params) -> Union[WeightExpr, tuple]:
    """Construct a catalog weight by name.

    zero / one
        The constant weights, with validity radius inf resp. the first
        Bessel zero z0 = 2.4048...
    power(a)
        r^(-a) for 0 <= a < 2, valid up to the first zero of the associated
        oscillation problem, z_a = ((2-a)/2 * z0)^(2/(2-a)).
    inv_sq_log(rho)
        1/(4 r^2 log^2(rho/r)) on (0, rho/e).
    iterlog(k, rho)
        The k-fold iterated-log refinement on (0, rho/e^e^...(k times)).
    pair_shift(lam, n, P)
        The derived weight pair (r^-lam, ((n-lam-2)/2)^2 r^(-lam-2) + r^-lam P)
        returned as a (V, W) tuple.
    """
    if name == "zero":
        return WeightExpr(ast=Const(0.0), singular_order=0.0, r_max=math.inf)
    if name == "one":
        return WeightExpr(ast=Const(1.0), singular_order=0.0, r_max=Z0)
    if name == "power":
        a = float(params["a"])
        if not (0.0 <= a < 2.0):
            raise WeightError(f"power weight needs 0 <= a < 2, got a={a}")
        if a == 0.0:
            return builtin("one")
        z_a = ((2.0 - a) / 2.0 * Z0) ** (2.0 / (2.0 - a))
        return WeightExpr(ast=Pow(Var(), -a), singular_order=a, r_max=z_a)
    if name == "inv_sq_log":
        rho = float(params["rho"])
        if rho <= 0:
            raise WeightError("inv_sq_log needs rho > 0")
        return WeightExpr(ast=_inv_sq_log_node(rho), singular_order=2.0, r_max=rho / math.e)
    if name == "iterlog":
        k = int(params["k"])
        rho = float(params["rho"])
        if k < 1:
            raise WeightError("iterlog needs k >= 1")
        if rho <= 0:
            raise WeightError("iterlog needs rho > 0")
        tower = _exp_tower(k)
        return WeightExpr(ast=_iterlog_node(k, rho), singular_order=2.0, r_max=rho / tower)
    if name == "pair_shift":
        lam = float(params["lam"])
        n = int(params["n"])
        P: WeightExpr = params["P"]
        if not (0.0 <= lam <= n - 2):
            raise WeightError(f"pair_shift needs 0 <= lam <= n-2, got lam={lam}, n={n}")
        V = power_of_r(-lam)
        shift = Mul(Const(((n - lam - 2.0) / 2.0) ** 2), Pow(Var(), -lam - 2.0))
        W_node = Add(shift, Mul(_coerce_ast(V), P.ast)) if lam != 0 else Add(shift, P.ast)
        W = wrap(W_node, r_max=P.r_max)
        return (WeightExpr(ast=V.ast, singular_order=lam, r_max=P.r_max), W)
    raise WeightError(f"unknown builtin '{name}'")
