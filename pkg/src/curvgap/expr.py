"""
Arithmetic expressions for metric components and test functions.

Grammar (whitespace-insensitive)::

    expr  := term (('+'|'-') term)*
    term  := unary (('*'|'/') unary)*
    unary := '-'? power
    power := atom ('^' ['-'] INT)?
    atom  := NUMBER | 'pi' | 'x'k | FUNC '(' expr ')' | '(' expr ')'

``^`` binds tighter than unary minus, so ``-x1^2`` is ``-(x1^2)``.  Exponents
are integer literals only; fractional powers go through ``sqrt``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

import numpy as np

from .jets import FUNCTIONS, Jet, jet_variable

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "ExprDomainError",
    "Num",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Pow",
    "Call",
    "Expression",
    "parse",
    "to_text",
    "evaluate",
    "eval_jet",
    "eval_jets",
    "variables",
    "shift_variables",
    "diff",
    "separable_terms",
    "JetProgram",
    "add",
    "mul",
]

MAX_VARIABLES = 8


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class ExprDomainError(ExprError):
    pass


Span = tuple[int, int]


@dataclass(frozen=True)
class Num:
    value: float
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Const:
    name: str
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    index: int  # 1-based, x1 ... x8
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Neg:
    operand: "Expression"
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expression"
    right: "Expression"
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Pow:
    base: "Expression"
    exponent: int
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expression"
    span: Span | None = field(default=None, compare=False, repr=False)


Expression = Union[Num, Const, Var, Neg, BinOp, Pow, Call]

CONSTANTS = {"pi": math.pi}

# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r"|(?P<ws>\s+)"
)


@dataclass
class _Tok:
    kind: str  # num, name, op, end
    text: str
    pos: int  # 0-based


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    i = 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[i]!r}", i + 1)
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, m.group(), i))
        i = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.toks = _tokenize(text)
        self.k = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.k]

    def advance(self) -> _Tok:
        t = self.toks[self.k]
        self.k += 1
        return t

    def error(self, message: str, tok: _Tok | None = None):
        tok = tok or self.tok
        what = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ExprSyntaxError(f"{message} (found {what})", tok.pos + 1)

    def expect(self, text: str) -> _Tok:
        if self.tok.kind != "op" or self.tok.text != text:
            self.error(f"expected {text!r}")
        return self.advance()

    def parse(self) -> Expression:
        node = self.expr()
        if self.tok.kind != "end":
            self.error("unexpected token")
        return node

    def expr(self) -> Expression:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            right = self.term()
            node = BinOp(op, node, right, (node.span[0], right.span[1]))
        return node

    def term(self) -> Expression:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            right = self.unary()
            node = BinOp(op, node, right, (node.span[0], right.span[1]))
        return node

    def unary(self) -> Expression:
        if self.tok.kind == "op" and self.tok.text == "-":
            start = self.advance().pos
            operand = self.power()
            return Neg(operand, (start, operand.span[1]))
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            sign = 1
            if self.tok.kind == "op" and self.tok.text == "-":
                self.advance()
                sign = -1
            tok = self.tok
            if tok.kind != "num":
                self.error("expected integer exponent")
            if not tok.text.isdigit():
                raise ExprSyntaxError(f"non-integer exponent {tok.text!r}", tok.pos + 1)
            self.advance()
            end = tok.pos + len(tok.text)
            return Pow(base, sign * int(tok.text), (base.span[0], end))
        return base

    def atom(self) -> Expression:
        tok = self.tok
        span = (tok.pos, tok.pos + len(tok.text))
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text), span)
        if tok.kind == "name":
            self.advance()
            name = tok.text
            if name in CONSTANTS:
                return Const(name, span)
            m = re.fullmatch(r"x([1-9][0-9]*)", name)
            if m:
                idx = int(m.group(1))
                if idx > self.dim or idx > MAX_VARIABLES:
                    raise ExprSyntaxError(
                        f"variable index exceeds dim: {name} with dim {self.dim}", tok.pos + 1
                    )
                return Var(idx, span)
            if name in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                close = self.expect(")")
                return Call(name, arg, (tok.pos, close.pos + 1))
            raise ExprSyntaxError(f"unknown identifier {name!r}", tok.pos + 1)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        self.error("expected a number, variable, function or '('")


def parse(text: str, dim: int = MAX_VARIABLES) -> Expression:
    """Parse ``text`` into an expression over variables x1..x<dim>."""
    if not 1 <= dim <= MAX_VARIABLES:
        raise ExprError(f"dim must be in 1..{MAX_VARIABLES}, got {dim}")
    return _Parser(text, dim).parse()


# ---------------------------------------------------------------------------
# traversal helpers (iterative: generated expressions can be long sums)
# ---------------------------------------------------------------------------


def _children(node: Expression) -> tuple:
    if isinstance(node, BinOp):
        return (node.left, node.right)
    if isinstance(node, (Neg,)):
        return (node.operand,)
    if isinstance(node, Pow):
        return (node.base,)
    if isinstance(node, Call):
        return (node.arg,)
    return ()


def _postorder(root: Expression) -> Iterator[Expression]:
    stack = [(root, False)]
    seen: set[int] = set()
    while stack:
        node, expanded = stack.pop()
        if expanded:
            if id(node) not in seen:
                seen.add(id(node))
                yield node
            continue
        if id(node) in seen:
            continue
        stack.append((node, True))
        for child in reversed(_children(node)):
            stack.append((child, False))


def variables(e: Expression) -> frozenset[int]:
    """1-based indices of the variables referenced by ``e``."""
    return frozenset(n.index for n in _postorder(e) if isinstance(n, Var))


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_text(e: Expression) -> str:
    """Unparse to text that parses back to an equal AST."""
    out: dict[int, str] = {}
    for node in _postorder(e):
        if isinstance(node, Num):
            if node.value < 0 or not math.isfinite(node.value):
                raise ExprError(f"cannot print number literal {node.value!r}")
            out[id(node)] = repr(float(node.value))
        elif isinstance(node, Const):
            out[id(node)] = node.name
        elif isinstance(node, Var):
            out[id(node)] = f"x{node.index}"
        elif isinstance(node, Call):
            out[id(node)] = f"{node.func}({out[id(node.arg)]})"
        elif isinstance(node, Pow):
            base = out[id(node.base)]
            if not _is_atom(node.base):
                base = f"({base})"
            out[id(node)] = f"{base}^{node.exponent}"
        elif isinstance(node, Neg):
            inner = out[id(node.operand)]
            if not (_is_atom(node.operand) or isinstance(node.operand, Pow)):
                inner = f"({inner})"
            out[id(node)] = f"-{inner}"
        else:
            left, right = out[id(node.left)], out[id(node.right)]
            p = _PREC[node.op]
            if isinstance(node.left, BinOp) and _PREC[node.left.op] < p:
                left = f"({left})"
            if isinstance(node.right, BinOp) and _PREC[node.right.op] <= p:
                right = f"({right})"
            elif isinstance(node.right, Neg):
                right = f"({right})"
            if isinstance(node.left, Neg) and p == 2:
                left = f"({left})"
            out[id(node)] = f"{left} {node.op} {right}"
    return out[id(e)]


def _is_atom(node: Expression) -> bool:
    return isinstance(node, (Num, Const, Var, Call))


def shift_variables(e: Expression, offset: int) -> Expression:
    """Rename x_k to x_(k+offset); used to place a factor's chart in a product."""
    new: dict[int, Expression] = {}
    for node in _postorder(e):
        if isinstance(node, Var):
            new[id(node)] = Var(node.index + offset)
        elif isinstance(node, (Num, Const)):
            new[id(node)] = node
        elif isinstance(node, Neg):
            new[id(node)] = Neg(new[id(node.operand)])
        elif isinstance(node, Pow):
            new[id(node)] = Pow(new[id(node.base)], node.exponent)
        elif isinstance(node, Call):
            new[id(node)] = Call(node.func, new[id(node.arg)])
        else:
            new[id(node)] = BinOp(node.op, new[id(node.left)], new[id(node.right)])
    return new[id(e)]


# ---------------------------------------------------------------------------
# construction and symbolic differentiation
# ---------------------------------------------------------------------------

ZERO, ONE = Num(0.0), Num(1.0)


def _num(node) -> float | None:
    return node.value if isinstance(node, Num) else None


def neg(a: Expression) -> Expression:
    if _num(a) is not None:
        return Num(-a.value) if a.value <= 0 else Neg(a)
    return a.operand if isinstance(a, Neg) else Neg(a)


def add(*terms: Expression) -> Expression:
    """Sum with zero terms dropped; a negated term becomes a subtraction."""
    out = None
    for t in terms:
        if _num(t) == 0:
            continue
        if out is None:
            out = t
        elif isinstance(t, Neg):
            out = BinOp("-", out, t.operand)
        else:
            out = BinOp("+", out, t)
    return ZERO if out is None else out


def mul(*factors: Expression) -> Expression:
    """Product with unit factors dropped and zero absorbing."""
    sign, out = 1, None
    for f in factors:
        if isinstance(f, Neg):
            sign, f = -sign, f.operand
        v = _num(f)
        if v == 0:
            return ZERO
        if v is not None and v < 0:
            sign, f, v = -sign, Num(-v), -v
        if v == 1:
            continue
        out = f if out is None else BinOp("*", out, f)
    out = ONE if out is None else out
    return neg(out) if sign < 0 else out


def _div(a: Expression, b: Expression) -> Expression:
    if _num(a) == 0:
        return ZERO
    return a if _num(b) == 1 else BinOp("/", a, b)


_DERIV = {
    "sin": lambda u: Call("cos", u),
    "cos": lambda u: neg(Call("sin", u)),
    "tan": lambda u: Pow(Call("cos", u), -2),
    "exp": lambda u: Call("exp", u),
    "log": lambda u: Pow(u, -1),
    "sqrt": lambda u: _div(Num(0.5), Call("sqrt", u)),
    "sinh": lambda u: Call("cosh", u),
    "cosh": lambda u: Call("sinh", u),
}


def diff(e: Expression, k: int) -> Expression:
    """Symbolic partial derivative with respect to x_k (1-based)."""
    d: dict[int, Expression] = {}
    for node in _postorder(e):
        if isinstance(node, (Num, Const)):
            r = ZERO
        elif isinstance(node, Var):
            r = ONE if node.index == k else ZERO
        elif isinstance(node, Neg):
            r = neg(d[id(node.operand)]) if _num(d[id(node.operand)]) != 0 else ZERO
        elif isinstance(node, Pow):
            db = d[id(node.base)]
            if _num(db) == 0 or node.exponent == 0:
                r = ZERO
            else:
                m = node.exponent
                lower = node.base if m == 2 else Pow(node.base, m - 1)
                r = mul(Num(float(abs(m))), lower, db)
                r = neg(r) if m < 0 else r
        elif isinstance(node, Call):
            da = d[id(node.arg)]
            r = ZERO if _num(da) == 0 else mul(_DERIV[node.func](node.arg), da)
        else:
            dl, dr = d[id(node.left)], d[id(node.right)]
            if node.op == "+":
                r = add(dl, dr)
            elif node.op == "-":
                r = add(dl, neg(dr) if _num(dr) != 0 else ZERO)
            elif node.op == "*":
                r = add(mul(dl, node.right), mul(node.left, dr))
            else:
                # (l/r)' = l'/r - l r'/r^2
                r = add(
                    _div(dl, node.right),
                    neg(_div(mul(node.left, dr), Pow(node.right, 2))) if _num(dr) != 0 else ZERO,
                )
        d[id(node)] = r
    return d[id(e)]


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

_REAL_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sinh": np.sinh,
    "cosh": np.cosh,
}


def evaluate(e: Expression, point) -> np.ndarray | float:
    """Plain real evaluation; ``point`` has shape (..., n)."""
    point = np.asarray(point, dtype=float)
    vals: dict[int, np.ndarray] = {}
    for node in _postorder(e):
        if isinstance(node, Num):
            v = np.asarray(node.value)
        elif isinstance(node, Const):
            v = np.asarray(CONSTANTS[node.name])
        elif isinstance(node, Var):
            if node.index > point.shape[-1]:
                raise ExprError(f"x{node.index} not available in a {point.shape[-1]}-point")
            v = point[..., node.index - 1]
        elif isinstance(node, Neg):
            v = -vals[id(node.operand)]
        elif isinstance(node, Pow):
            b = vals[id(node.base)]
            if node.exponent < 0 and np.any(b == 0):
                raise ExprDomainError("negative power of zero")
            v = b ** float(node.exponent)
        elif isinstance(node, Call):
            a = vals[id(node.arg)]
            if node.func == "log" and np.any(a <= 0):
                raise ExprDomainError("log of a non-positive value")
            if node.func == "sqrt" and np.any(a < 0):
                raise ExprDomainError("sqrt of a negative value")
            v = _REAL_FUNCS[node.func](a)
        else:
            l, r = vals[id(node.left)], vals[id(node.right)]
            if node.op == "+":
                v = l + r
            elif node.op == "-":
                v = l - r
            elif node.op == "*":
                v = l * r
            else:
                if np.any(r == 0):
                    raise ExprDomainError("division by zero")
                v = l / r
        vals[id(node)] = v
    out = vals[id(e)]
    return float(out) if np.ndim(out) == 0 else np.broadcast_to(out, point.shape[:-1]).copy()


def eval_jets(exprs: Sequence[Expression], point, order: int, method: str = "auto") -> list[Jet]:
    """Evaluate several expressions in jet arithmetic at ``point``.

    ``method`` is ``"tree"`` (node-by-node jet arithmetic), ``"separable"``
    (see :func:`separable_terms`) or ``"auto"``: separable when every
    expression expands into few enough univariate products, else tree.

    ``point`` has shape (n,) or (..., n); jets get value shape ``point.shape[:-1]``.
    Structurally identical subexpressions (within and across ``exprs``) are
    evaluated once, and constant subexpressions stay plain floats so they
    never pay for a jet product.
    """
    point = np.asarray(point, dtype=float)
    if method not in ("auto", "tree", "separable"):
        raise ExprError(f"unknown jet evaluation method {method!r}")
    if method != "tree":
        expanded = [separable_terms(e) for e in exprs]
        if all(t is not None for t in expanded):
            return _eval_separable(expanded, point, order)
        if method == "separable":
            raise ExprError("expression is not a sum of products of univariate factors")
    dim = point.shape[-1]
    batch = point.shape[:-1]
    intern: dict[tuple, int] = {}
    values: list = []
    node_id: dict[int, int] = {}

    results = []
    for e in exprs:
        for node in _postorder(e):
            if id(node) in node_id:
                continue
            if isinstance(node, Num):
                key = ("n", node.value)
            elif isinstance(node, Const):
                key = ("c", node.name)
            elif isinstance(node, Var):
                key = ("v", node.index)
            elif isinstance(node, Neg):
                key = ("neg", node_id[id(node.operand)])
            elif isinstance(node, Pow):
                key = ("pow", node.exponent, node_id[id(node.base)])
            elif isinstance(node, Call):
                key = ("call", node.func, node_id[id(node.arg)])
            else:
                key = ("bin", node.op, node_id[id(node.left)], node_id[id(node.right)])
            if key in intern:
                node_id[id(node)] = intern[key]
                continue
            try:
                v = _jet_node(node, key, values, point, dim, order)
            except ExprDomainError:
                raise
            except (ValueError, ZeroDivisionError, OverflowError) as exc:
                raise ExprDomainError(f"{exc} in {to_text(node)!r}") from exc
            intern[key] = len(values)
            node_id[id(node)] = len(values)
            values.append(v)
        v = values[node_id[id(e)]]
        if not isinstance(v, Jet):
            v = Jet.constant(np.full(batch, v), dim, order)
        results.append(v)
    return results


# -- separable fast path ------------------------------------------------------
#
# A product of univariate factors f_1(x_1)...f_n(x_n) has Taylor coefficients
# c_alpha = prod_k f_k^(alpha_k) / alpha_k!, an outer product of 1-D jets, so a
# sum of such products needs no multivariate convolution at all.

Term = tuple[float, tuple[tuple[int, tuple[Expression, ...]], ...]]

MAX_TERMS = 4096


class _NotSeparable(Exception):
    pass


def separable_terms(e: Expression, limit: int = MAX_TERMS) -> list[Term] | None:
    """Expand ``e`` into ``sum c * prod_k (product of atoms in x_k)``.

    Atoms are univariate subexpressions (``sin(x2)``, ``x1``, ``cos(2*x3)``).
    Returns None when ``e`` does not factor that way (for instance
    ``sin(x1*x2)`` or division by a sum) or expands past ``limit`` terms.
    """
    try:
        return _separable(e, limit)
    except _NotSeparable:
        return None


def _merge(terms: dict, key, c: float) -> None:
    terms[key] = terms.get(key, 0.0) + c


def _product(a: dict, b: dict, limit: int) -> dict:
    if len(a) * len(b) > limit:
        raise _NotSeparable
    out: dict = {}
    for ka, ca in a.items():
        for kb, cb in b.items():
            f = dict(ka)
            for var, atoms in kb:
                f[var] = tuple(sorted(f.get(var, ()) + atoms, key=repr))
            _merge(out, tuple(sorted(f.items())), ca * cb)
    return out


def _separable(root: Expression, limit: int) -> list[Term]:
    res: dict[int, dict] = {}
    var_sets: dict[int, frozenset] = {}
    for node in _postorder(root):
        if isinstance(node, Var):
            vs = frozenset((node.index,))
        else:
            vs = frozenset().union(*(var_sets[id(c)] for c in _children(node)))
        var_sets[id(node)] = vs
        if not vs:
            res[id(node)] = {(): float(evaluate(node, np.zeros(MAX_VARIABLES)))}
            continue
        if isinstance(node, (Var, Call)) or (
            isinstance(node, Pow) and len(vs) == 1 and not isinstance(node.base, BinOp)
        ):
            if len(vs) != 1:
                raise _NotSeparable
            (k,) = vs
            res[id(node)] = {((k, (node,)),): 1.0}
        elif isinstance(node, Neg):
            res[id(node)] = {k: -c for k, c in res[id(node.operand)].items()}
        elif isinstance(node, Pow):
            m = node.exponent
            base = res[id(node.base)]
            if m < 0:
                if len(vs) != 1:
                    raise _NotSeparable
                (k,) = vs
                res[id(node)] = {((k, (node,)),): 1.0}
                continue
            acc = {(): 1.0}
            for _ in range(m):
                acc = _product(acc, base, limit)
            res[id(node)] = acc
        else:
            l, r = res[id(node.left)], res[id(node.right)]
            if node.op in "+-":
                out = dict(l)
                sign = 1.0 if node.op == "+" else -1.0
                for k, c in r.items():
                    _merge(out, k, sign * c)
            elif node.op == "*":
                out = _product(l, r, limit)
            else:
                if len(r) != 1:
                    raise _NotSeparable
                ((kr, cr),) = r.items()
                if cr == 0:
                    raise _NotSeparable
                inv = tuple((var, tuple(Pow(a, -1) for a in atoms)) for var, atoms in kr)
                out = _product(l, {inv: 1.0 / cr}, limit)
            if len(out) > limit:
                raise _NotSeparable
            res[id(node)] = out
    return [(c, key) for key, c in res[id(root)].items() if c != 0.0]


class JetProgram:
    """Expressions prepared once for repeated jet evaluation over many batches."""

    def __init__(self, exprs: Sequence[Expression]):
        self.exprs = tuple(exprs)
        expanded = [separable_terms(e) for e in self.exprs]
        self.terms = expanded if all(t is not None for t in expanded) else None

    def jets(self, point, order: int) -> list[Jet]:
        point = np.asarray(point, dtype=float)
        if self.terms is not None:
            return _eval_separable(self.terms, point, order)
        return eval_jets(self.exprs, point, order, method="tree")


def _eval_separable(expanded: list[list[Term]], point: np.ndarray, order: int) -> list[Jet]:
    from .jets import multi_indices

    dim = point.shape[-1]
    batch = point.shape[:-1]
    flat = point.reshape(-1, dim)
    alpha = np.array(multi_indices(dim, order))  # (ncoef, dim)
    ncoef = len(alpha)
    # 1-D jets of every distinct atom product, coefficient axis first
    cache: dict[tuple, np.ndarray] = {}
    atom_cache: dict[tuple, Jet] = {}

    def factor(var: int, atoms: tuple) -> np.ndarray:
        key = (var, atoms)
        if key not in cache:
            x = flat[:, var - 1 : var]
            acc = None
            for a in atoms:
                akey = (var, a)
                if akey not in atom_cache:
                    (atom_cache[akey],) = eval_jets([shift_variables(a, 1 - var)], x, order, method="tree")
                j = atom_cache[akey]
                acc = j if acc is None else acc * j
            cache[key] = acc.coeffs[:, :]  # (order+1, B)
        return cache[key]

    out = []
    for terms in expanded:
        c = np.zeros((ncoef, flat.shape[0]))
        for coef, key in terms:
            present = {var for var, _ in key}
            mask = np.all(alpha[:, [k - 1 for k in range(1, dim + 1) if k not in present]] == 0, axis=1)
            rows = np.flatnonzero(mask)
            prod = np.full((len(rows), flat.shape[0]), coef)
            for var, atoms in key:
                prod *= factor(var, atoms)[alpha[rows, var - 1]]
            c[rows] += prod
        out.append(Jet(dim, order, c.reshape((ncoef,) + batch)))
    return out


def _jet_node(node, key, values, point, dim, order):
    if isinstance(node, Num):
        return float(node.value)
    if isinstance(node, Const):
        return CONSTANTS[node.name]
    if isinstance(node, Var):
        if node.index > dim:
            raise ExprError(f"x{node.index} not available in a {dim}-point")
        return jet_variable(node.index, point[..., node.index - 1], dim, order)
    if isinstance(node, Neg):
        return -values[key[1]]
    if isinstance(node, Pow):
        b = values[key[2]]
        if not isinstance(b, Jet):
            if b == 0 and node.exponent < 0:
                raise ExprDomainError("negative power of zero")
            return float(b) ** node.exponent
        return b ** node.exponent
    if isinstance(node, Call):
        a = values[key[2]]
        if not isinstance(a, Jet):
            return _real_call(node.func, a)
        return a.apply(node.func)
    l, r = values[key[2]], values[key[3]]
    if node.op == "+":
        return l + r
    if node.op == "-":
        return l - r
    if node.op == "*":
        return l * r
    if not isinstance(r, Jet) and r == 0:
        raise ExprDomainError("division by zero")
    return l / r


def _real_call(func: str, a: float) -> float:
    if func == "log" and a <= 0:
        raise ExprDomainError("log of a non-positive value")
    if func == "sqrt" and a < 0:
        raise ExprDomainError("sqrt of a negative value")
    return float(_REAL_FUNCS[func](a))


def eval_jet(e: Expression, point, order: int) -> Jet:
    return eval_jets([e], point, order)[0]
