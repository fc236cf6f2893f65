"""
Truncated multivariate Taylor arithmetic ("jets").

A :class:`Jet` of order ``K`` in ``dim`` variables stores the Taylor
coefficients ``d^a f(p) / a!`` for every multi-index ``a`` with ``|a| <= K``.
Coefficients live on the leading axis of a numpy array; any trailing axes
form the *value shape*, so a single jet can carry a whole batch of points,
a tensor, or both.  Arithmetic broadcasts over the value shape exactly like
numpy does.

Multi-indices are stored in graded lexicographic order: by total degree, then
lexicographically descending within a degree, e.g. for two variables::

    (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...

so truncating to a lower order is a prefix slice.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Sequence

import numba
import numpy as np
from numpy.polynomial import polynomial as P

__all__ = [
    "Jet",
    "JetError",
    "JetDomainError",
    "OrderExhaustedError",
    "multi_indices",
    "n_coeffs",
    "jet_variable",
    "jet_constant",
    "jet_arith",
    "jet_func",
    "extract_partial",
    "jeinsum",
    "jet_inv",
]

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh")


class JetError(ValueError):
    """Shape, dimension or order mismatch between jets."""


class JetDomainError(JetError):
    """An elementary function or division left its real domain."""


class OrderExhaustedError(JetError):
    """A derivative was requested beyond the order carried by the jet."""


# ---------------------------------------------------------------------------
# index tables
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def multi_indices(dim: int, order: int) -> tuple[tuple[int, ...], ...]:
    """All exponent tuples with total degree <= order, graded-lex."""
    out = []
    for d in range(order + 1):
        for axes in itertools.combinations_with_replacement(range(dim), d):
            alpha = [0] * dim
            for a in axes:
                alpha[a] += 1
            out.append(tuple(alpha))
    return tuple(out)


def n_coeffs(dim: int, order: int) -> int:
    return math.comb(dim + order, order)


@lru_cache(maxsize=None)
def _index_map(dim: int, order: int) -> dict[tuple[int, ...], int]:
    return {a: i for i, a in enumerate(multi_indices(dim, order))}


@lru_cache(maxsize=None)
def _degrees(dim: int, order: int) -> np.ndarray:
    return np.array([sum(a) for a in multi_indices(dim, order)])


@lru_cache(maxsize=None)
def _factorials(dim: int, order: int) -> np.ndarray:
    return np.array(
        [math.prod(math.factorial(k) for k in a) for a in multi_indices(dim, order)],
        dtype=float,
    )


@lru_cache(maxsize=None)
def _mul_table(dim: int, order: int):
    """Pairs (a, b) with a + b = c, grouped by c in storage order.

    Returns ``(ia, ib, starts, deg_a)``; ``starts`` are the segment offsets
    for ``np.add.reduceat`` and ``deg_a`` the degree of the left factor.
    """
    mi = multi_indices(dim, order)
    imap = _index_map(dim, order)
    ia, ib, starts = [], [], []
    for gamma in mi:
        starts.append(len(ia))
        ranges = [range(g + 1) for g in gamma]
        for alpha in itertools.product(*ranges):
            beta = tuple(g - a for g, a in zip(gamma, alpha))
            ia.append(imap[alpha])
            ib.append(imap[beta])
    ia = np.array(ia)
    ib = np.array(ib)
    deg = _degrees(dim, order)
    return ia, ib, np.array(starts), deg[ia]


@lru_cache(maxsize=None)
def _pair_segments(dim: int, order: int) -> np.ndarray:
    ia, ib, starts, _ = _mul_table(dim, order)
    return np.repeat(np.arange(len(starts)), np.diff(np.append(starts, len(ia))))


@lru_cache(maxsize=None)
def _solve_table(dim: int, order: int):
    """Per output degree d >= 1: pairs (a, b) with a + b = c, |c| = d, a != 0.

    Used by the recursive solves (division, matrix inverse) where the unknown
    coefficients of degree d only depend on lower-degree ones.  Each entry is
    ``(out, (ia, ib, ic))`` with ``ic`` the coefficient index of ``c``.
    """
    ia, ib, _, deg_a = _mul_table(dim, order)
    ic = _pair_segments(dim, order)
    deg = _degrees(dim, order)
    table = []
    for d in range(1, order + 1):
        keep = (deg[ic] == d) & (deg_a > 0)
        out = np.flatnonzero(deg == d)
        table.append((out, (ia[keep], ib[keep], ic[keep])))
    return table


@lru_cache(maxsize=None)
def _deriv_table(dim: int, order: int, axis: int):
    """Source indices and factors for d/dx_axis, order -> order - 1."""
    src_map = _index_map(dim, order)
    src, fac = [], []
    for beta in multi_indices(dim, order - 1):
        alpha = list(beta)
        alpha[axis] += 1
        src.append(src_map[tuple(alpha)])
        fac.append(beta[axis] + 1)
    return np.array(src), np.array(fac, dtype=float)


@lru_cache(maxsize=None)
def _gradient_table(dim: int, order: int):
    """Stacked ``_deriv_table`` over all axes, shape (n_coeffs(order-1), dim)."""
    parts = [_deriv_table(dim, order, axis) for axis in range(dim)]
    return np.stack([p[0] for p in parts], axis=1), np.stack([p[1] for p in parts], axis=1)


@numba.njit(cache=True, fastmath=True)
def _bilinear_kernel(a, b, ia, ib, ic, xa, yb, zc, out):
    # out[ic[p], zc[t], :] += a[ia[p], xa[t], :] * b[ib[p], yb[t], :]
    nb = out.shape[2]
    for p in range(ia.shape[0]):
        pa = ia[p]
        pb = ib[p]
        pc = ic[p]
        for t in range(xa.shape[0]):
            x = xa[t]
            y = yb[t]
            z = zc[t]
            for k in range(nb):
                out[pc, z, k] += a[pa, x, k] * b[pb, y, k]


def _bilinear(a, b, pairs, triples, n_out, z_size):
    """Run the kernel on coefficient arrays shaped (N, X, batch)."""
    ia, ib, ic = pairs
    xa, yb, zc = triples
    out = np.zeros((n_out, z_size, a.shape[2]))
    _bilinear_kernel(
        np.ascontiguousarray(a), np.ascontiguousarray(b), ia, ib, ic, xa, yb, zc, out
    )
    return out


_UNIT_TRIPLE = (np.zeros(1, dtype=np.int64),) * 3


# ---------------------------------------------------------------------------
# the value type
# ---------------------------------------------------------------------------


class Jet:
    """Truncated Taylor expansion with array-valued coefficients.

    ``coeffs[k]`` is the coefficient of ``multi_indices(dim, order)[k]``.
    Instances are treated as immutable.
    """

    __slots__ = ("dim", "order", "coeffs")
    __array_priority__ = 1000

    def __init__(self, dim: int, order: int, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if dim < 1 or order < 0:
            raise JetError(f"invalid jet dim={dim}, order={order}")
        if coeffs.shape[:1] != (n_coeffs(dim, order),):
            raise JetError(
                f"expected {n_coeffs(dim, order)} coefficients, got shape {coeffs.shape}"
            )
        self.dim = dim
        self.order = order
        self.coeffs = coeffs

    # -- construction -----------------------------------------------------

    @classmethod
    def constant(cls, value, dim: int, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros((n_coeffs(dim, order),) + value.shape)
        c[0] = value
        return cls(dim, order, c)

    def _like(self, coeffs, order=None) -> "Jet":
        return Jet(self.dim, self.order if order is None else order, coeffs)

    # -- shape ------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[1:]

    @property
    def value(self) -> np.ndarray:
        """The constant term, i.e. the plain value at the expansion point."""
        return self.coeffs[0]

    def __getitem__(self, key) -> "Jet":
        if not isinstance(key, tuple):
            key = (key,)
        return self._like(self.coeffs[(slice(None),) + key])

    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return self._like(self.coeffs.reshape((self.coeffs.shape[0],) + tuple(shape)))

    def moveaxis(self, source, destination) -> "Jet":
        shift = lambda a: tuple(x + 1 if x >= 0 else x for x in np.atleast_1d(a))
        return self._like(np.moveaxis(self.coeffs, shift(source), shift(destination)))

    def swapaxes(self, a: int, b: int) -> "Jet":
        a = a + 1 if a >= 0 else a
        b = b + 1 if b >= 0 else b
        return self._like(np.swapaxes(self.coeffs, a, b))

    def sum(self, axis) -> "Jet":
        axis = tuple(x + 1 if x >= 0 else x for x in np.atleast_1d(axis))
        return self._like(self.coeffs.sum(axis=axis))

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise OrderExhaustedError(
                f"cannot raise jet order from {self.order} to {order}"
            )
        if order == self.order:
            return self
        return self._like(self.coeffs[: n_coeffs(self.dim, order)], order)

    # -- derivatives --------------------------------------------------------

    def partial(self, axis: int) -> "Jet":
        """Jet of d/dx_axis (0-based axis); consumes one order."""
        if not 0 <= axis < self.dim:
            raise JetError(f"axis {axis} out of range for dim {self.dim}")
        if self.order == 0:
            raise OrderExhaustedError("order exhausted: cannot differentiate an order-0 jet")
        src, fac = _deriv_table(self.dim, self.order, axis)
        fac = fac.reshape((-1,) + (1,) * len(self.shape))
        return self._like(self.coeffs[src] * fac, self.order - 1)

    def gradient(self) -> "Jet":
        """All first partials, stacked on a new leading value axis."""
        if self.order == 0:
            raise OrderExhaustedError("order exhausted: cannot differentiate an order-0 jet")
        src, fac = _gradient_table(self.dim, self.order)
        fac = fac.reshape(fac.shape + (1,) * len(self.shape))
        return Jet(self.dim, self.order - 1, self.coeffs[src] * fac)

    def partial_value(self, alpha: Sequence[int]) -> np.ndarray:
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.dim or min(alpha, default=0) < 0:
            raise JetError(f"multi-index {alpha} invalid for dim {self.dim}")
        if sum(alpha) > self.order:
            raise OrderExhaustedError(
                f"order exhausted: |alpha|={sum(alpha)} exceeds jet order {self.order}"
            )
        k = _index_map(self.dim, self.order)[alpha]
        return self.coeffs[k] * _factorials(self.dim, self.order)[k]

    # -- arithmetic ---------------------------------------------------------

    def _check(self, other: "Jet") -> None:
        if other.dim != self.dim or other.order != self.order:
            raise JetError(
                f"jet mismatch: (dim {self.dim}, order {self.order}) vs "
                f"(dim {other.dim}, order {other.order})"
            )

    def __neg__(self) -> "Jet":
        return self._like(-self.coeffs)

    def __pos__(self) -> "Jet":
        return self

    def __add__(self, other) -> "Jet":
        if isinstance(other, Jet):
            self._check(other)
            return self._like(self.coeffs + other.coeffs)
        other = np.asarray(other, dtype=float)
        shape = np.broadcast_shapes(self.shape, other.shape)
        c = np.broadcast_to(self.coeffs, self.coeffs.shape[:1] + shape).copy()
        c[0] += other
        return self._like(c)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet":
        if isinstance(other, Jet):
            self._check(other)
            return self._like(self.coeffs - other.coeffs)
        return self + (-np.asarray(other, dtype=float))

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        if isinstance(other, Jet):
            self._check(other)
            shape = np.broadcast_shapes(self.shape, other.shape)
            n = self.coeffs.shape[0]
            a = np.broadcast_to(self.coeffs, (n,) + shape).reshape(n, 1, -1)
            b = np.broadcast_to(other.coeffs, (n,) + shape).reshape(n, 1, -1)
            ia, ib, _, _ = _mul_table(self.dim, self.order)
            pairs = (ia, ib, _pair_segments(self.dim, self.order))
            out = _bilinear(a, b, pairs, _UNIT_TRIPLE, n, 1)
            return self._like(out.reshape((n,) + shape))
        return self._like(self.coeffs * np.asarray(other, dtype=float))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet":
        if isinstance(other, Jet):
            self._check(other)
            return self * other.reciprocal()
        other = np.asarray(other, dtype=float)
        if np.any(other == 0):
            raise JetDomainError("division by zero")
        return self._like(self.coeffs / other)

    def __rtruediv__(self, other) -> "Jet":
        return self.reciprocal() * np.asarray(other, dtype=float)

    def reciprocal(self) -> "Jet":
        """1/self by degree-by-degree recursive solve of self * r = 1."""
        b0 = self.coeffs[0]
        if np.any(b0 == 0):
            raise JetDomainError("division by a jet with zero constant term")
        n = self.coeffs.shape[0]
        b = self.coeffs.reshape(n, 1, -1)
        r = np.zeros_like(b)
        r[0] = 1.0 / b[0]
        for out, pairs in _solve_table(self.dim, self.order):
            acc = _bilinear(b, r, pairs, _UNIT_TRIPLE, n, 1)
            r[out] = -acc[out] * r[0]
        return self._like(r.reshape(self.coeffs.shape))

    def __pow__(self, k) -> "Jet":
        if isinstance(k, (bool, float)) or int(k) != k:
            if isinstance(k, float) and k.is_integer():
                k = int(k)
            else:
                raise JetError("jet powers must be integers")
        k = int(k)
        if k < 0:
            return self.reciprocal() ** (-k)
        result = None
        base = self
        while k:
            if k & 1:
                result = base if result is None else result * base
            k >>= 1
            if k:
                base = base * base
        if result is None:
            return Jet.constant(np.ones(self.shape), self.dim, self.order)
        return result

    # -- elementary functions --------------------------------------------

    def apply(self, name: str) -> "Jet":
        """Compose an elementary function with this jet.

        Uses f(a0 + t) = sum_k f^(k)(a0)/k! t^k with t nilpotent of degree
        order+1, so the sum is exact at truncation order (Horner form).
        """
        if name not in FUNCTIONS:
            raise JetError(f"unknown function {name!r}")
        a0 = self.coeffs[0]
        derivs = _function_derivatives(name, a0, self.order)
        t = self - a0
        acc = Jet.constant(derivs[self.order] / math.factorial(self.order), self.dim, self.order)
        for k in range(self.order - 1, -1, -1):
            acc = acc * t + derivs[k] / math.factorial(k)
        return acc

    def __repr__(self) -> str:
        return f"Jet(dim={self.dim}, order={self.order}, shape={self.shape})"


def _function_derivatives(name: str, x: np.ndarray, order: int) -> list[np.ndarray]:
    """[f(x), f'(x), ..., f^(order)(x)] with real-domain checks."""
    if name == "exp":
        e = np.exp(x)
        return [e] * (order + 1)
    if name in ("sin", "cos"):
        s, c = np.sin(x), np.cos(x)
        cycle = [s, c, -s, -c] if name == "sin" else [c, -s, -c, s]
        return [cycle[k % 4] for k in range(order + 1)]
    if name in ("sinh", "cosh"):
        s, c = np.sinh(x), np.cosh(x)
        cycle = [s, c] if name == "sinh" else [c, s]
        return [cycle[k % 2] for k in range(order + 1)]
    if name == "log":
        if np.any(x <= 0):
            raise JetDomainError("log of a non-positive value")
        out = [np.log(x)]
        for k in range(1, order + 1):
            out.append((-1) ** (k - 1) * math.factorial(k - 1) / x**k)
        return out
    if name == "sqrt":
        if np.any(x <= 0):
            raise JetDomainError("sqrt of a non-positive value")
        out = []
        coef = 1.0
        for k in range(order + 1):
            out.append(coef * x ** (0.5 - k))
            coef *= 0.5 - k
        return out
    if name == "tan":
        if np.any(np.cos(x) == 0) or np.any(np.abs(np.cos(x)) < 1e-300):
            raise JetDomainError("tan at a pole")
        t = np.tan(x)
        poly = np.array([0.0, 1.0])  # d^k tan / dx^k as a polynomial in tan
        out = []
        for _ in range(order + 1):
            out.append(P.polyval(t, poly))
            poly = P.polymul(P.polyder(poly), [1.0, 0.0, 1.0])
        return out
    raise JetError(f"unknown function {name!r}")


# ---------------------------------------------------------------------------
# functional interface
# ---------------------------------------------------------------------------


def jet_variable(i: int, value, dim: int, order: int) -> Jet:
    """Jet of the coordinate function x_i (1-based) at ``value``."""
    if not 1 <= i <= dim:
        raise JetError(f"axis out of range: x{i} in dimension {dim}")
    value = np.asarray(value, dtype=float)
    c = np.zeros((n_coeffs(dim, order),) + value.shape)
    c[0] = value
    if order >= 1:
        c[i] = 1.0  # degree-1 block is (1,0,..), (0,1,..), ... in order
    return Jet(dim, order, c)


def jet_constant(value, dim: int, order: int) -> Jet:
    return Jet.constant(value, dim, order)


def jet_arith(a: Jet, b: Jet, op: str) -> Jet:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise JetError(f"unknown op {op!r}")


def jet_func(a: Jet, f: str) -> Jet:
    return a.apply(f)


def extract_partial(a: Jet, alpha: Sequence[int]):
    """d^alpha f(p) = alpha! * coeffs[alpha]."""
    v = a.partial_value(alpha)
    return float(v) if np.ndim(v) == 0 else v


@lru_cache(maxsize=None)
def _einsum_triples(subscripts: str, shape_a: tuple, shape_b: tuple):
    inputs, out_letters = subscripts.split("->")
    ta, tb = inputs.split(",")
    sizes: dict[str, int] = {}
    for term, shape in ((ta, shape_a), (tb, shape_b)):
        if len(term) != len(shape):
            raise JetError(f"subscript {term!r} does not match tensor shape {shape}")
        for ch, n in zip(term, shape):
            if sizes.setdefault(ch, n) != n:
                raise JetError(f"inconsistent size for index {ch!r}")
    for ch in out_letters:
        if ch not in sizes:
            raise JetError(f"output index {ch!r} not in inputs")
    letters = sorted(sizes)
    grids = np.indices([sizes[ch] for ch in letters]).reshape(len(letters), -1)
    pos = {ch: grids[k] for k, ch in enumerate(letters)}

    def flat(term, shape):
        if not term:
            return np.zeros(grids.shape[1], dtype=np.int64)
        return np.ravel_multi_index([pos[ch] for ch in term], shape).astype(np.int64)

    out_shape = tuple(sizes[ch] for ch in out_letters)
    return (
        (flat(ta, shape_a), flat(tb, shape_b), flat(out_letters, out_shape)),
        out_shape,
    )


def jeinsum(subscripts: str, *operands) -> Jet:
    """Einstein summation over the leading (tensor) value axes of jets.

    Subscripts name tensor axes only.  Any value axes beyond the named ones
    are a shared batch and must agree across operands.  With two jets the
    product is the truncated Leibniz convolution; otherwise one jet may be
    combined linearly with constant arrays (numpy einsum semantics, batch
    appended as ``...``).
    """
    subscripts = subscripts.replace(" ", "")
    inputs, output = subscripts.split("->")
    terms = inputs.split(",")
    if len(terms) != len(operands):
        raise JetError("subscript/operand count mismatch")
    jets = [op for op in operands if isinstance(op, Jet)]
    if not jets:
        raise JetError("jeinsum needs at least one jet operand")
    if len(jets) == 2 and len(operands) == 2:
        a, b = operands
        a._check(b)
        ka, kb = len(terms[0]), len(terms[1])
        batch_a, batch_b = a.shape[ka:], b.shape[kb:]
        if batch_a != batch_b:
            raise JetError(f"batch shapes differ: {batch_a} vs {batch_b}")
        (xa, yb, zc), out_shape = _einsum_triples(subscripts, a.shape[:ka], b.shape[:kb])
        n = a.coeffs.shape[0]
        nbatch = int(np.prod(batch_a, dtype=np.int64))
        ca = a.coeffs.reshape(n, -1, nbatch)
        cb = b.coeffs.reshape(n, -1, nbatch)
        ia, ib, _, _ = _mul_table(a.dim, a.order)
        pairs = (ia, ib, _pair_segments(a.dim, a.order))
        size = int(np.prod(out_shape, dtype=np.int64))
        res = _bilinear(ca, cb, pairs, (xa, yb, zc), n, size)
        return Jet(a.dim, a.order, res.reshape((n,) + out_shape + batch_a))
    if len(jets) != 1:
        raise JetError("jeinsum supports one jet with constants, or exactly two jets")
    jet = jets[0]
    new_terms, arrays = [], []
    for term, op in zip(terms, operands):
        if isinstance(op, Jet):
            arrays.append(op.coeffs)
            new_terms.append("Z" + term + "...")
        else:
            op = np.asarray(op, dtype=float)
            arrays.append(op)
            new_terms.append(term + ("..." if op.ndim > len(term) else ""))
    spec = ",".join(new_terms) + "->Z" + output + "..."
    return Jet(jet.dim, jet.order, np.einsum(spec, *arrays))


def jet_inv(a: Jet) -> Jet:
    """Inverse of a matrix-valued jet (first two value axes; rest is batch).

    The constant term is inverted by LU with partial pivoting; higher
    coefficients follow from the recursive solve A * H = I degree by degree.
    Raises :class:`JetDomainError` naming the first singular batch entries.
    """
    m = a.shape[0]
    if len(a.shape) < 2 or a.shape[1] != m:
        raise JetError(f"expected a square matrix jet, got value shape {a.shape}")
    batch = a.shape[2:]
    n = a.coeffs.shape[0]
    c = a.coeffs.reshape(n, m, m, -1)
    a0 = np.moveaxis(c[0], -1, 0)
    try:
        h0 = np.linalg.inv(a0)
    except np.linalg.LinAlgError:
        h0 = None
    if h0 is None or not np.all(np.isfinite(h0)):
        bad = [np.unravel_index(k, batch) if batch else () for k in _singular_entries(a0)]
        raise JetDomainError(f"singular matrix at batch entries {bad[:5]}")
    h0 = np.moveaxis(h0, 0, -1)
    h = np.zeros_like(c)
    h[0] = h0
    triples, _ = _einsum_triples("kl,lm->km", (m, m), (m, m))
    ca = c.reshape(n, m * m, -1)
    hf = h.reshape(n, m * m, -1)
    for out, pairs in _solve_table(a.dim, a.order):
        acc = _bilinear(ca, hf, pairs, triples, n, m * m)[out].reshape(len(out), m, m, -1)
        h[out] = -np.einsum("klb,zlmb->zkmb", h0, acc)
    return Jet(a.dim, a.order, h.reshape(a.coeffs.shape))


def _singular_entries(m: np.ndarray) -> list[int]:
    flat = m.reshape((-1,) + m.shape[-2:])
    bad = [k for k, block in enumerate(flat) if np.linalg.matrix_rank(block) < block.shape[-1]]
    return bad or [0]
