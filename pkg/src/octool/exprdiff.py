"""
Expression language for problem data with forward-mode differentiation

Grammar (EBNF):

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = ("-" | "+") unary | power ;
    power   = atom [ "^" unary ] ;
    atom    = number | variable | func "(" expr ")" | "(" expr ")" ;
    variable = "t" | "x" digits | "u" digits | "p" digits ;
    func    = "sin" | "cos" | "exp" | "log" | "tanh" | "sqrt" | "abs" ;

Running terms (f0, f) may use t, x<i>, u<i>, p<i>; terminal terms (g, h)
only x<i> and p<i>. Indices are 1-based.
"""

import difflib
import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, EvaluationError, ExprSyntaxError, UnknownIdentifierError
from .problem import BolzaProblem, ControlBox, Derivatives, DerivMode

Span = Tuple[int, int]

FUNCTIONS = ("sin", "cos", "exp", "log", "tanh", "sqrt", "abs")
GROUPS = ("t", "x", "u", "p")


# ----------------------------------------------------------------------
# Syntax tree
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Neg:
    operand: "Expr"
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"
    span: Span = field(default=(0, 0), compare=False)


Expr = Union[Num, Var, Neg, BinOp, Call]


@dataclass(frozen=True)
class Dims:
    """Declared dimensions an expression may refer to"""
    n: int
    mu: int = 0
    n_params: int = 0

    def __post_init__(self):
        if self.n < 0 or self.mu < 0 or self.n_params < 0:
            raise ConfigurationError(f"Invalid expression dimensions {self}")

    def variables(self, terminal: bool = False) -> List[str]:
        """Variable names in slot order t, x.., u.., p.."""
        names = [] if terminal else ["t"]
        names += [f"x{i}" for i in range(1, self.n + 1)]
        if not terminal:
            names += [f"u{i}" for i in range(1, self.mu + 1)]
        names += [f"p{i}" for i in range(1, self.n_params + 1)]
        return names


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
""", re.VERBOSE)

_BINDING = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 30}
_UNARY_BINDING = 25


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int

    @property
    def end(self) -> int:
        return self.offset + len(self.text)


def tokenize(src: str) -> List[_Token]:
    tokens = []
    pos = 0
    while True:
        while pos < len(src) and src[pos].isspace():
            pos += 1
        if pos >= len(src):
            break
        match = _TOKEN.match(src, pos)
        if match is None:
            raise ExprSyntaxError(f"Unexpected character '{src[pos]}'", pos)
        tokens.append(_Token(match.lastgroup, match.group(), pos))
        pos = match.end()
    tokens.append(_Token("end", "", len(src)))
    return tokens


class _Parser:
    """Pratt parser over the token list"""

    def __init__(self, src: str, allowed: Sequence[str]):
        self.tokens = tokenize(src)
        self.pos = 0
        self.allowed = set(allowed)

    @property
    def token(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        token = self.token
        self.pos += 1
        return token

    def expect(self, text: str) -> _Token:
        if self.token.text != text:
            found = self.token.text or "end of input"
            raise ExprSyntaxError(f"Expected '{text}', found '{found}'", self.token.offset)
        return self.advance()

    def parse(self) -> Expr:
        expr = self.expression(0)
        if self.token.kind != "end":
            raise ExprSyntaxError(f"Unexpected '{self.token.text}'", self.token.offset)
        return expr

    def expression(self, rbp: int) -> Expr:
        left = self.nud(self.advance())
        while self.token.kind == "op" and rbp < _BINDING.get(self.token.text, 0):
            left = self.led(self.advance(), left)
        return left

    def nud(self, token: _Token) -> Expr:
        if token.kind == "num":
            return Num(float(token.text), (token.offset, token.end))
        if token.kind == "name":
            return self.name(token)
        if token.text in ("-", "+"):
            operand = self.expression(_UNARY_BINDING)
            if token.text == "+":
                return operand
            return Neg(operand, (token.offset, operand.span[1]))
        if token.text == "(":
            inner = self.expression(0)
            close = self.expect(")")
            return _respan(inner, (token.offset, close.end))
        found = token.text or "end of input"
        raise ExprSyntaxError(f"Unexpected '{found}'", token.offset)

    def name(self, token: _Token) -> Expr:
        if token.text in FUNCTIONS:
            self.expect("(")
            arg = self.expression(0)
            close = self.expect(")")
            return Call(token.text, arg, (token.offset, close.end))
        if token.text not in self.allowed:
            candidates = difflib.get_close_matches(token.text, sorted(self.allowed) + list(FUNCTIONS), n=1)
            raise UnknownIdentifierError(token.text, token.offset, candidates[0] if candidates else None)
        return Var(token.text, (token.offset, token.end))

    def led(self, token: _Token, left: Expr) -> Expr:
        # ^ is right-associative
        rbp = _BINDING[token.text] - (1 if token.text == "^" else 0)
        right = self.expression(rbp)
        return BinOp(token.text, left, right, (left.span[0], right.span[1]))


def _respan(expr: Expr, span: Span) -> Expr:
    return type(expr)(*[getattr(expr, f) for f in expr.__dataclass_fields__ if f != "span"], span=span)


def parse(src: str, dims: Dims, terminal: bool = False) -> Expr:
    """
    Parse an expression over the variables of dims

    Args:
        src: Expression source
        dims: Declared dimensions
        terminal: Restrict the variables to x<i> and p<i>

    Returns:
        Syntax tree with source spans

    Raises:
        ExprSyntaxError: Malformed source, with the offending offset
        UnknownIdentifierError: Name outside the declared variables
    """
    if not isinstance(src, str):
        src = str(src)
    return _Parser(src, dims.variables(terminal)).parse()


def to_source(expr: Expr) -> str:
    """Printer whose output parses back to an equal tree"""
    if isinstance(expr, Num):
        return repr(float(expr.value))
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Neg):
        return f"(-{to_source(expr.operand)})"
    if isinstance(expr, BinOp):
        return f"({to_source(expr.left)} {expr.op} {to_source(expr.right)})"
    return f"{expr.func}({to_source(expr.arg)})"


def free_variables(expr: Expr) -> List[str]:
    if isinstance(expr, Var):
        return [expr.name]
    if isinstance(expr, Num):
        return []
    if isinstance(expr, Neg):
        return free_variables(expr.operand)
    if isinstance(expr, Call):
        return free_variables(expr.arg)
    return sorted(set(free_variables(expr.left)) | set(free_variables(expr.right)))


def fold_constants(expr: Expr) -> Expr:
    """Replace variable-free subtrees by their value where it is finite"""
    if isinstance(expr, (Num, Var)):
        return expr
    if isinstance(expr, Neg):
        operand = fold_constants(expr.operand)
        if isinstance(operand, Num):
            return Num(-operand.value, expr.span)
        return Neg(operand, expr.span)
    if isinstance(expr, Call):
        folded = Call(expr.func, fold_constants(expr.arg), expr.span)
    else:
        folded = BinOp(expr.op, fold_constants(expr.left), fold_constants(expr.right), expr.span)
    if free_variables(folded):
        return folded
    try:
        result = eval_dual(folded, {}, ())
    except EvaluationError:
        return folded
    return Num(result.value, expr.span)


# ----------------------------------------------------------------------
# Dual numbers
# ----------------------------------------------------------------------


class _Fault(Exception):
    """Domain fault raised by Dual arithmetic, given a span by the evaluator"""


class Dual:
    """Value with a tangent vector over the seeded variables"""

    __slots__ = ("val", "grad")

    def __init__(self, val: float, grad: np.ndarray):
        self.val = float(val)
        self.grad = grad

    @classmethod
    def constant(cls, val: float, size: int) -> "Dual":
        return cls(val, np.zeros(size))

    def __add__(self, other: "Dual") -> "Dual":
        return Dual(self.val + other.val, self.grad + other.grad)

    def __sub__(self, other: "Dual") -> "Dual":
        return Dual(self.val - other.val, self.grad - other.grad)

    def __mul__(self, other: "Dual") -> "Dual":
        return Dual(self.val * other.val, self.val * other.grad + other.val * self.grad)

    def __truediv__(self, other: "Dual") -> "Dual":
        if other.val == 0.0:
            raise _Fault("Division by zero")
        return Dual(self.val / other.val, (self.grad * other.val - self.val * other.grad) / other.val ** 2)

    def __neg__(self) -> "Dual":
        return Dual(-self.val, -self.grad)

    def __pow__(self, other: "Dual") -> "Dual":
        a, b = self.val, other.val
        exponent_varies = bool(np.any(other.grad))
        if a == 0.0 and b < 0:
            raise _Fault("Zero raised to a negative power")
        if a < 0 and (exponent_varies or not float(b).is_integer()):
            raise _Fault("Negative base with a non-integer exponent")
        try:
            value = a ** b
        except OverflowError:
            raise _Fault("Power overflow") from None
        if b == 0.0:
            base_slope = 0.0
        elif a == 0.0 and b < 1.0:
            if np.any(self.grad):
                raise _Fault("Power is not differentiable at a zero base")
            base_slope = 0.0
        else:
            base_slope = b * a ** (b - 1.0)
        grad = base_slope * self.grad
        if exponent_varies:
            if a <= 0:
                raise _Fault("Variable exponent needs a positive base")
            grad = grad + value * math.log(a) * other.grad
        return Dual(value, grad)

    def __repr__(self) -> str:
        return f"Dual({self.val!r}, {self.grad!r})"


def _sqrt(d: Dual) -> Dual:
    if d.val < 0:
        raise _Fault("sqrt of a negative number")
    root = math.sqrt(d.val)
    if root == 0.0:
        if np.any(d.grad):
            raise _Fault("sqrt is not differentiable at 0")
        return Dual(0.0, d.grad.copy())
    return Dual(root, d.grad / (2.0 * root))


def _log(d: Dual) -> Dual:
    if d.val <= 0:
        raise _Fault("log of a nonpositive number")
    return Dual(math.log(d.val), d.grad / d.val)


def _exp(d: Dual) -> Dual:
    try:
        value = math.exp(d.val)
    except OverflowError:
        raise _Fault("exp overflow") from None
    return Dual(value, value * d.grad)


def _tanh(d: Dual) -> Dual:
    value = math.tanh(d.val)
    return Dual(value, (1.0 - value * value) * d.grad)


def _abs(d: Dual) -> Dual:
    # right derivative at 0
    sign = 1.0 if d.val >= 0 else -1.0
    return Dual(abs(d.val), sign * d.grad)


_UNARY: Dict[str, Callable[[Dual], Dual]] = {
    "sin": lambda d: Dual(math.sin(d.val), math.cos(d.val) * d.grad),
    "cos": lambda d: Dual(math.cos(d.val), -math.sin(d.val) * d.grad),
    "exp": _exp,
    "log": _log,
    "tanh": _tanh,
    "sqrt": _sqrt,
    "abs": _abs,
}

_BINARY: Dict[str, Callable[[Dual, Dual], Dual]] = {
    "+": Dual.__add__,
    "-": Dual.__sub__,
    "*": Dual.__mul__,
    "/": Dual.__truediv__,
    "^": Dual.__pow__,
}


@dataclass
class DualResult:
    """Value, partials over the seeded variables, and whether abs hit its kink"""
    value: float
    gradient: np.ndarray
    nonsmooth: bool = False


def _evaluate(expr: Expr, point: Mapping[str, Dual], size: int, kinks: List[Span]) -> Dual:
    if isinstance(expr, Num):
        return Dual.constant(expr.value, size)
    if isinstance(expr, Var):
        try:
            return point[expr.name]
        except KeyError:
            raise EvaluationError(f"No value for variable '{expr.name}'", expr.span) from None
    try:
        if isinstance(expr, Neg):
            return -_evaluate(expr.operand, point, size, kinks)
        if isinstance(expr, Call):
            arg = _evaluate(expr.arg, point, size, kinks)
            if expr.func == "abs" and arg.val == 0.0:
                kinks.append(expr.span)
            result = _UNARY[expr.func](arg)
        else:
            left = _evaluate(expr.left, point, size, kinks)
            right = _evaluate(expr.right, point, size, kinks)
            result = _BINARY[expr.op](left, right)
    except _Fault as fault:
        raise EvaluationError(str(fault), expr.span) from None
    if not math.isfinite(result.val) or not np.all(np.isfinite(result.grad)):
        raise EvaluationError("Non-finite result", expr.span)
    return result


def eval_dual(expr: Expr, point: Mapping[str, float], seeds: Sequence[str]) -> DualResult:
    """
    Value and exact partials of expr at point

    Args:
        expr: Parsed expression
        point: Value of every variable the expression uses
        seeds: Variables to differentiate with respect to, in output order

    Returns:
        DualResult with gradient[k] = partial along seeds[k]
    """
    size = len(seeds)
    index = {name: k for k, name in enumerate(seeds)}
    duals = {}
    for name, val in point.items():
        grad = np.zeros(size)
        if name in index:
            grad[index[name]] = 1.0
        duals[name] = Dual(float(val), grad)
    kinks: List[Span] = []
    result = _evaluate(expr, duals, size, kinks)
    return DualResult(result.val, result.grad, bool(kinks))


class CompiledExpr:
    """
    Expression bound to the slot layout (t, x, u, pi) of a problem

    Terminal expressions take (x, pi) and expose the groups x and p only.
    """

    def __init__(self, src: str, dims: Dims, terminal: bool = False):
        self.source = src
        self.dims = dims
        self.terminal = terminal
        self.expr = fold_constants(parse(src, dims, terminal))
        self._groups = {
            "t": ["t"],
            "x": [f"x{i}" for i in range(1, dims.n + 1)],
            "u": [f"u{i}" for i in range(1, dims.mu + 1)],
            "p": [f"p{i}" for i in range(1, dims.n_params + 1)],
        }

    def _point(self, args: Sequence[Any]) -> Dict[str, float]:
        if self.terminal:
            x, pi = args
            slots = (("x", x), ("p", pi))
        else:
            t, x, u, pi = args
            slots = (("t", [t]), ("x", x), ("u", u), ("p", pi))
        point = {}
        for group, values in slots:
            values = np.asarray(values, dtype=float).reshape(-1)
            names = self._groups[group]
            if values.size != len(names):
                raise ConfigurationError(f"Slot {group} has {values.size} entries, expression expects {len(names)}")
            point.update(zip(names, values.tolist()))
        return point

    def __call__(self, *args) -> float:
        return eval_dual(self.expr, self._point(args), ()).value

    def partial(self, group: str, *args) -> np.ndarray:
        """Partials with respect to one variable group (t, x, u or p)"""
        return eval_dual(self.expr, self._point(args), self._groups[group]).gradient

    def jacobian(self, *args) -> DualResult:
        """Value and the full row over every slot of the layout"""
        groups = ("x", "p") if self.terminal else GROUPS
        seeds = [name for g in groups for name in self._groups[g]]
        return eval_dual(self.expr, self._point(args), seeds)


# ----------------------------------------------------------------------
# Problem binding
# ----------------------------------------------------------------------

_EXPR_KEYS = {"f0", "f", "g", "h"}


def _expr_list(exprs: Mapping[str, Any], key: str) -> List[str]:
    raw = exprs.get(key) or []
    if isinstance(raw, str):
        raw = [raw]
    if not isinstance(raw, (list, tuple)):
        raise ConfigurationError(f"'{key}' must be a list of expressions")
    return [str(s) for s in raw]


def bind_problem(exprs: Mapping[str, Any], dims: Dims, T: float, xi0: Any,
                 control_box: Optional[ControlBox] = None, pi0: Optional[Any] = None,
                 name: str = "expr", omega_guard: Optional[Tuple[Any, Any]] = None,
                 deriv_mode: DerivMode = DerivMode.DUAL_AD) -> BolzaProblem:
    """
    Build a problem from expression sources

    Args:
        exprs: Mapping with f0 (string), f, g and h (lists of strings)
        dims: State, control and parameter dimensions
        T: Horizon
        xi0: Initial state
        deriv_mode: dual-AD, or central-FD to differentiate the compiled
            callbacks by central differences instead

    Returns:
        BolzaProblem with every derivative callback synthesized

    Raises:
        ConfigurationError: Unknown keys, arity mismatch or expression errors
    """
    unknown = set(exprs) - _EXPR_KEYS
    if unknown:
        raise ConfigurationError(f"Unknown expression keys: {', '.join(sorted(unknown))}")
    f0_src = exprs.get("f0", "0")
    if not isinstance(f0_src, (str, int, float)):
        raise ConfigurationError("'f0' must be a single expression")
    f_src, g_src, h_src = _expr_list(exprs, "f"), _expr_list(exprs, "g"), _expr_list(exprs, "h")
    if len(f_src) != dims.n:
        raise ConfigurationError(f"'f' has {len(f_src)} components, state_dim is {dims.n}")

    f0 = CompiledExpr(str(f0_src), dims)
    f = [CompiledExpr(s, dims) for s in f_src]
    g = [CompiledExpr(s, dims, terminal=True) for s in g_src]
    h = [CompiledExpr(s, dims, terminal=True) for s in h_src]

    widths = {"x": dims.n, "u": dims.mu, "p": dims.n_params}

    def rows(group):
        width = widths[group]
        return lambda t, x, u, pi: np.array([fi.partial(group, t, x, u, pi) for fi in f]).reshape(dims.n, width)

    derivs = Derivatives(
        f0_x=lambda t, x, u, pi: f0.partial("x", t, x, u, pi),
        f_x=rows("x"),
        f0_u=lambda t, x, u, pi: f0.partial("u", t, x, u, pi),
        f_u=rows("u"),
        f0_p=lambda t, x, u, pi: f0.partial("p", t, x, u, pi),
        f_p=rows("p"),
        f0_t=lambda t, x, u, pi: float(f0.partial("t", t, x, u, pi)[0]),
        f_t=lambda t, x, u, pi: np.array([fi.partial("t", t, x, u, pi)[0] for fi in f]),
        g_x=tuple((lambda x, pi, gi=gi: gi.partial("x", x, pi)) for gi in g),
        g_p=tuple((lambda x, pi, gi=gi: gi.partial("p", x, pi)) for gi in g),
        h_x=tuple((lambda x, pi, hj=hj: hj.partial("x", x, pi)) for hj in h),
        h_p=tuple((lambda x, pi, hj=hj: hj.partial("p", x, pi)) for hj in h),
    )
    return BolzaProblem(
        n=dims.n, mu=dims.mu, n_params=dims.n_params, T=T, xi0=xi0,
        f0=f0,
        f=lambda t, x, u, pi: np.array([fi(t, x, u, pi) for fi in f]),
        g=tuple(g), h=tuple(h),
        derivs=None if deriv_mode == DerivMode.CENTRAL_FD else derivs,
        control_box=control_box,
        deriv_mode=deriv_mode,
        pi0=pi0,
        omega_guard=omega_guard,
        name=name,
        expressions={"f0": str(f0_src), "f": f_src, "g": g_src, "h": h_src},
    )
