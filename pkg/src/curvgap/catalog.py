"""
Built-in chart manifolds, constructors and seeded random test fields.

Every built-in carries an isometric-ish embedding (features ``y^A`` as chart
expressions plus a coframe per feature).  Random symmetric fields are built
as sparse sums ``c * phi(y) * sym(w^A (x) w^B)`` with ``phi`` a monomial in
the features; being pullbacks of smooth ambient tensors they stay smooth
across the excluded pole sets of polar charts, so ``|nabla h|^2`` is
integrable.  Manifests have no embedding and fall back to chart-local trig
polynomials damped by ``sin^2`` bumps on open axes.
"""

from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .expr import (
    BinOp,
    Call,
    ExprError,
    Expression,
    Num,
    Pow,
    Var,
    add,
    diff,
    evaluate,
    mul,
    parse,
    shift_variables,
    to_text,
    variables,
)
from .geometry import MetricField, _positive_definite_mask

__all__ = [
    "CatalogError",
    "ManifestError",
    "Axis",
    "Embedding",
    "ChartManifold",
    "SymmetricField",
    "ScalarField",
    "round_sphere",
    "flat_torus",
    "product",
    "scaled",
    "perturbed",
    "CATALOG",
    "catalog_ids",
    "build_catalog_entry",
    "resolve",
    "load_manifest",
    "parse_manifest",
    "random_symmetric_field",
    "random_scalar_field",
    "sphere_volume",
    "Block",
    "FieldRecipe",
    "ChartVariant",
    "chart_variant",
    "chart_variants",
    "rechartable",
]

MAX_DIM = 8
FLAGS = ("einstein", "conformally_flat", "bach_flat", "constant_scalar")


class CatalogError(ValueError):
    pass


class ManifestError(CatalogError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    periodic: bool

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class Block:
    """A round-sphere factor: its chart axes and the indices of its n+1 features and coframes."""

    axes: tuple[int, ...]
    features: tuple[int, ...]
    coframes: tuple[int, ...]

    def shifted(self, axes: int, features: int, coframes: int) -> "Block":
        return Block(
            tuple(a + axes for a in self.axes),
            tuple(f + features for f in self.features),
            tuple(c + coframes for c in self.coframes),
        )


@dataclass(frozen=True)
class Embedding:
    """Ambient features ``y^A`` and coframes ``w^A`` (``coframes[A][i]``).

    ``blocks`` lists the polar-chart sphere factors, which is what lets a
    point near a pole be re-charted (see :func:`chart_variants`).
    """

    features: tuple[Expression, ...]
    coframes: tuple[tuple[Expression, ...], ...]
    blocks: tuple[Block, ...] = ()


@dataclass(frozen=True)
class FieldRecipe:
    """A field as an ambient formula, instantiable in any chart of the embedding.

    Terms are ``(c, picks, a, b)``: ``c * prod y^picks * sym(w^a (x) w^b)``
    for a symmetric 2-tensor, or ``c * prod y^picks`` when ``a = b = -1``.
    """

    terms: tuple[tuple[float, tuple[int, ...], int, int], ...]

    def shifted(self, features: int, coframes: int) -> "FieldRecipe":
        k = coframes
        return FieldRecipe(tuple(
            (c, tuple(p + features for p in picks), a + k if a >= 0 else a, b + k if b >= 0 else b)
            for c, picks, a, b in self.terms
        ))

    def scaled(self, factor: float) -> "FieldRecipe":
        return FieldRecipe(tuple((c * factor, picks, a, b) for c, picks, a, b in self.terms))

    def rescaled_features(self, s: float, metric_factor: float) -> "FieldRecipe":
        """Same tensor times ``metric_factor`` after every feature is multiplied by ``s``."""
        out = []
        for c, picks, a, b in self.terms:
            deg = len(picks) + (2 if a >= 0 else 0)
            out.append((c * metric_factor / s**deg, picks, a, b))
        return FieldRecipe(tuple(out))

    def symmetric(self, emb: Embedding, n: int) -> tuple[tuple[Expression, ...], ...]:
        feats, cof = emb.features, emb.coframes
        acc: dict[tuple[int, int], list[Expression]] = {}
        for c, picks, a, b in self.terms:
            phi = mul(*[feats[k] for k in picks]) if picks else Num(1.0)
            for i in range(n):
                for j in range(i + 1):
                    part = add(mul(cof[a][i], cof[b][j]), mul(cof[b][i], cof[a][j]))
                    if part == Num(0.0):
                        continue
                    acc.setdefault((i, j), []).append(_scaled_term(c / 2, mul(phi, part)))
        return tuple(tuple(add(*acc.get((i, j), [])) for j in range(i + 1)) for i in range(n))

    def scalar(self, emb: Embedding) -> Expression:
        parts = []
        for c, picks, _, _ in self.terms:
            phi = mul(*[emb.features[k] for k in picks]) if picks else Num(1.0)
            parts.append(phi if c == 1.0 else _scaled_term(c, phi))
        return add(*parts)


@dataclass(frozen=True, eq=False)
class ChartManifold:
    name: str
    dim: int
    axes: tuple[Axis, ...]
    metric: MetricField
    chi: int | None = None
    known: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    embedding: Embedding | None = None
    # metric = base_metric + sum of ambient recipes; base_metric is None when
    # there are no recipes.  The base is invariant under the re-chartings.
    base_metric: MetricField | None = None
    ambient: tuple[FieldRecipe, ...] = ()

    def __post_init__(self):
        if len(self.axes) != self.dim or self.metric.dim != self.dim:
            raise CatalogError(f"{self.name}: axes/metric do not match dim {self.dim}")
        for k, ax in enumerate(self.axes):
            if not ax.hi > ax.lo:
                raise CatalogError(f"{self.name}: degenerate interval on axis x{k + 1}")

    def contains(self, point) -> bool:
        """Strictly inside every open axis, inside [lo, hi] on periodic ones."""
        p = np.asarray(point, dtype=float)
        if p.shape != (self.dim,):
            return False
        for x, ax in zip(p, self.axes):
            if ax.periodic:
                if not ax.lo <= x <= ax.hi:
                    return False
            elif not ax.lo < x < ax.hi:
                return False
        return True


@dataclass(frozen=True)
class SymmetricField:
    """Symmetric 2-tensor field ``h`` given by a lower triangle of expressions."""

    dim: int
    components: tuple[tuple[Expression, ...], ...]
    seed: int | None = None
    recipe: FieldRecipe | None = field(default=None, compare=False)

    def entry(self, i: int, j: int) -> Expression:
        return self.components[max(i, j)][min(i, j)]

    @property
    def depends_on(self) -> frozenset[int]:
        return frozenset(k - 1 for row in self.components for e in row for k in variables(e))

    def text(self) -> list[list[str]]:
        return [[to_text(e) for e in row] for row in self.components]


@dataclass(frozen=True)
class ScalarField:
    dim: int
    expression: Expression
    seed: int | None = None
    recipe: FieldRecipe | None = field(default=None, compare=False)

    @property
    def depends_on(self) -> frozenset[int]:
        return frozenset(k - 1 for k in variables(self.expression))


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _metric(dim: int, diag, off: dict | None = None) -> MetricField:
    off = off or {}
    rows = tuple(
        tuple(diag[i] if i == j else off.get((i, j), Num(0.0)) for j in range(i + 1))
        for i in range(dim)
    )
    return MetricField(dim, rows)


def sphere_volume(n: int, r: float = 1.0) -> float:
    """Volume of the round n-sphere of radius r."""
    return 2 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2) * r**n


def _sin(k: int) -> Expression:
    return Call("sin", Var(k))


def _cos(k: int) -> Expression:
    return Call("cos", Var(k))


def _fmt(x: float) -> str:
    return repr(float(x)) if not float(x).is_integer() else str(int(x))


# ---------------------------------------------------------------------------
# built-in constructors
# ---------------------------------------------------------------------------


def round_sphere(n: int, r: float = 1.0) -> ChartManifold:
    """Polar chart: x1..x(n-1) on (0, pi), x_n periodic on [0, 2 pi)."""
    if not 1 <= n <= MAX_DIM:
        raise CatalogError(f"sphere dimension must be in 1..{MAX_DIM}, got {n}")
    if not r > 0:
        raise CatalogError("radius must be positive")
    r2 = Num(float(r * r))
    diag = []
    for k in range(1, n + 1):
        diag.append(mul(r2, *[Pow(_sin(m), 2) for m in range(1, k)]))
    axes = tuple(Axis(0.0, math.pi, False) for _ in range(n - 1)) + (Axis(0.0, 2 * math.pi, True),)
    # y^1 = r cos x1, y^2 = r sin x1 cos x2, ..., y^(n+1) = r sin x1 ... sin x_n
    rr = Num(float(r))
    feats = [mul(rr, *[_sin(m) for m in range(1, k)], _cos(k)) for k in range(1, n + 1)]
    feats.append(mul(rr, *[_sin(m) for m in range(1, n + 1)]))
    cof = tuple(tuple(diff(y, i) for i in range(1, n + 1)) for y in feats)
    einstein_const = (n - 1) / r**2
    known = {
        "scalar": n * (n - 1) / r**2,
        "einstein_constant": einstein_const,
        "volume": sphere_volume(n, r),
    }
    if n >= 3:
        # Y(S^n) = n(n-1) Vol(S^n(1))^(2/n), a conformal invariant
        known["yamabe"] = n * (n - 1) * sphere_volume(n) ** (2 / n)
    return ChartManifold(
        name=f"round_sphere({n},{_fmt(r)})",
        dim=n,
        axes=axes,
        metric=_metric(n, diag),
        chi=2 if n % 2 == 0 else 0,
        known=known,
        flags=dict.fromkeys(FLAGS, True),
        embedding=Embedding(
            tuple(feats), cof, (Block(tuple(range(n)), tuple(range(n + 1)), tuple(range(n + 1))),) if n >= 2 else ()
        ),
    )


def flat_torus(n: int, periods=2 * math.pi) -> ChartManifold:
    if not 1 <= n <= MAX_DIM:
        raise CatalogError(f"torus dimension must be in 1..{MAX_DIM}, got {n}")
    periods = tuple(np.broadcast_to(np.asarray(periods, dtype=float), (n,)))
    if any(not p > 0 for p in periods):
        raise CatalogError("torus periods must be positive")
    axes = tuple(Axis(0.0, float(p), True) for p in periods)
    feats, cof = [], []
    for k, p in enumerate(periods, start=1):
        arg = Var(k) if p == 2 * math.pi else mul(Num(2 * math.pi / p), Var(k))
        feats += [Call("cos", arg), Call("sin", arg)]
    # constant coframes dx_k keep random fields at trig degree <= bandwidth
    for k in range(1, n + 1):
        cof.append(tuple(Num(1.0) if i == k else Num(0.0) for i in range(1, n + 1)))
    name = f"flat_torus({n})" if all(p == 2 * math.pi for p in periods) else (
        f"flat_torus({n},{','.join(_fmt(p) for p in periods)})"
    )
    return ChartManifold(
        name=name,
        dim=n,
        axes=axes,
        metric=_metric(n, [Num(1.0)] * n),
        chi=0,
        known={"scalar": 0.0, "einstein_constant": 0.0, "volume": float(np.prod(periods))},
        flags=dict.fromkeys(FLAGS, True),
        embedding=Embedding(tuple(feats), tuple(cof)),
    )


def product(a: ChartManifold, b: ChartManifold, name: str | None = None, flags=None) -> ChartManifold:
    n = a.dim + b.dim
    if n > MAX_DIM:
        raise CatalogError(f"product dimension {n} exceeds {MAX_DIM}")
    chi = a.chi * b.chi if a.chi is not None and b.chi is not None else None
    known = {}
    for key in ("scalar", "volume"):
        if key in a.known and key in b.known:
            known[key] = a.known[key] + b.known[key] if key == "scalar" else a.known[key] * b.known[key]
    ka, kb = a.known.get("einstein_constant"), b.known.get("einstein_constant")
    einstein = None
    if ka is not None and kb is not None:
        einstein = math.isclose(ka, kb)
        if einstein:
            known["einstein_constant"] = ka
    inferred = {
        "constant_scalar": (a.flags.get("constant_scalar") and b.flags.get("constant_scalar")) or None,
        "einstein": einstein,
    }
    if einstein:
        inferred["bach_flat"] = True
    inferred.update(flags or {})
    emb = None
    if a.embedding and b.embedding:
        pad_a = tuple(tuple(w) + (Num(0.0),) * b.dim for w in a.embedding.coframes)
        pad_b = tuple(
            (Num(0.0),) * a.dim + tuple(shift_variables(e, a.dim) for e in w) for w in b.embedding.coframes
        )
        feats = a.embedding.features + tuple(shift_variables(y, a.dim) for y in b.embedding.features)
        nf, nc = len(a.embedding.features), len(a.embedding.coframes)
        blocks = a.embedding.blocks + tuple(bl.shifted(a.dim, nf, nc) for bl in b.embedding.blocks)
        emb = Embedding(feats, pad_a + pad_b, blocks)
    base, ambient = None, ()
    if a.ambient or b.ambient:
        if emb is None:
            raise CatalogError("cannot combine ambient perturbations without embeddings")
        base = _block_metric(a.base_metric or a.metric, b.base_metric or b.metric)
        ambient = a.ambient + tuple(r.shifted(nf, nc) for r in b.ambient)
    return ChartManifold(
        name=name or f"product({a.name},{b.name})",
        dim=n,
        axes=a.axes + b.axes,
        metric=_block_metric(a.metric, b.metric),
        chi=chi,
        known=known,
        flags={k: v for k, v in inferred.items() if v is not None},
        embedding=emb,
        base_metric=base,
        ambient=ambient,
    )


def _block_metric(ga: MetricField, gb: MetricField) -> MetricField:
    rows = [tuple(ga.components[i]) for i in range(ga.dim)]
    for i in range(gb.dim):
        rows.append(
            tuple(Num(0.0) for _ in range(ga.dim))
            + tuple(shift_variables(e, ga.dim) for e in gb.components[i])
        )
    return MetricField(ga.dim + gb.dim, tuple(rows))


def scaled(m: ChartManifold, c: float, name: str | None = None) -> ChartManifold:
    """Metric c*g; chi and the Yamabe constant are unchanged."""
    if not c > 0:
        raise CatalogError("scale factor must be positive")
    cn = Num(float(c))

    def scale_metric(g: MetricField) -> MetricField:
        return MetricField(g.dim, tuple(tuple(mul(cn, e) for e in row) for row in g.components))

    known = dict(m.known)
    if "scalar" in known:
        known["scalar"] = known["scalar"] / c
    if "einstein_constant" in known:
        known["einstein_constant"] = known["einstein_constant"] / c
    if "volume" in known:
        known["volume"] = known["volume"] * c ** (m.dim / 2)
    emb = None
    if m.embedding:
        s = Num(math.sqrt(c))
        emb = Embedding(
            tuple(mul(s, y) for y in m.embedding.features),
            tuple(tuple(mul(s, e) for e in w) for w in m.embedding.coframes),
            m.embedding.blocks,
        )
    return ChartManifold(
        name=name or f"scaled({m.name},{_fmt(c)})",
        dim=m.dim,
        axes=m.axes,
        metric=scale_metric(m.metric),
        chi=m.chi,
        known=known,
        flags=dict(m.flags),
        embedding=emb,
        base_metric=scale_metric(m.base_metric) if m.base_metric else None,
        ambient=tuple(r.rescaled_features(math.sqrt(c), c) for r in m.ambient),
    )


def perturbed(m: ChartManifold, seed: int, eps: float, check_nodes: int = 24) -> ChartManifold:
    """g + eps*h with h = random_symmetric_field(m, seed); positivity checked on a grid."""
    h = random_symmetric_field(m, seed, bandwidth=2, amplitude=1.0)
    ambient = m.ambient
    if h.recipe is not None:
        ambient = ambient + (h.recipe.scaled(float(eps)),)
    e = Num(abs(float(eps)))
    rows = []
    for i in range(m.dim):
        row = []
        for j in range(i + 1):
            dh = mul(e, h.entry(i, j))
            g = m.metric.entry(i, j)
            row.append(g if dh == Num(0.0) else (BinOp("-", g, dh) if eps < 0 else add(g, dh)))
        rows.append(tuple(row))
    metric = MetricField(m.dim, tuple(rows))
    out = ChartManifold(
        name=f"perturbed({m.name},{seed},{_fmt(eps)})",
        dim=m.dim,
        axes=m.axes,
        metric=metric,
        chi=m.chi,
        known={},
        flags={},
        embedding=m.embedding,
        base_metric=(m.base_metric or m.metric) if h.recipe is not None else None,
        ambient=ambient if h.recipe is not None else (),
    )
    _check_positive(out, check_nodes)
    return out


def _check_positive(m: ChartManifold, nodes: int) -> None:
    from .quadrature import GridSpec

    grid = GridSpec.for_manifold(m, nodes)
    pts, _ = grid.nodes(sorted(m.metric.depends_on))
    for start in range(0, len(pts), 1 << 15):
        chunk = pts[start : start + (1 << 15)]
        g = np.moveaxis(m.metric.values(chunk), -1, 0)
        ok = _positive_definite_mask(g)
        if not ok.all():
            k = int(np.flatnonzero(~ok)[0])
            raise CatalogError(
                f"{m.name}: metric not positive definite at {tuple(np.round(chunk[k], 6))}"
            )


# ---------------------------------------------------------------------------
# the named catalog and selector strings
# ---------------------------------------------------------------------------


def _s2xs2() -> ChartManifold:
    s2 = round_sphere(2)
    return product(s2, s2, name="s2xs2", flags={"conformally_flat": False, "bach_flat": True})


def _s1xs3() -> ChartManifold:
    return product(
        round_sphere(1),
        round_sphere(3),
        name="s1xs3",
        flags={"conformally_flat": True, "bach_flat": True, "einstein": False},
    )


CATALOG = {
    "s3": lambda: replace(round_sphere(3), name="s3"),
    "s4": lambda: replace(round_sphere(4), name="s4"),
    "s5": lambda: replace(round_sphere(5), name="s5"),
    "t4": lambda: replace(flat_torus(4), name="t4"),
    "s2xs2": _s2xs2,
    "s1xs3": _s1xs3,
}

_CONSTRUCTORS = {
    "round_sphere": round_sphere,
    "flat_torus": flat_torus,
    "product": product,
    "scaled": scaled,
    "perturbed": perturbed,
}


def catalog_ids() -> list[str]:
    return list(CATALOG)


def build_catalog_entry(selector: str) -> ChartManifold:
    """Build from a selector such as ``scaled(s2xs2,1/3)``.

    The selector is parsed with :mod:`ast` and interpreted over a whitelist
    of constructors, named entries and numeric literals; nothing is evaluated.
    """
    try:
        tree = ast.parse(selector.strip(), mode="eval")
    except SyntaxError as exc:
        raise CatalogError(f"bad manifold selector {selector!r}: {exc.msg}") from None
    return _interpret(tree.body, selector)


def _interpret(node, src: str):
    if isinstance(node, ast.Name):
        if node.id in CATALOG:
            return CATALOG[node.id]()
        if node.id == "pi":
            return math.pi
        raise CatalogError(f"unknown manifold {node.id!r} in {src!r}")
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return node.value
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _interpret(node.operand, src)
        if not isinstance(v, (int, float)):
            raise CatalogError(f"sign applied to a manifold in {src!r}")
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Div, ast.Mult)):
        a, b = _interpret(node.left, src), _interpret(node.right, src)
        if not all(isinstance(v, (int, float)) for v in (a, b)):
            raise CatalogError(f"arithmetic on a manifold in {src!r}")
        if isinstance(node.op, ast.Mult):
            return a * b
        if b == 0:
            raise CatalogError(f"division by zero in {src!r}")
        return a / b
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        name = node.func.id
        if name not in _CONSTRUCTORS:
            raise CatalogError(f"unknown constructor {name!r} in {src!r}")
        args = [_interpret(a, src) for a in node.args]
        try:
            if name == "round_sphere" and args:
                args[0] = _as_int(args[0], "sphere dimension")
            if name == "flat_torus" and args:
                args = [_as_int(args[0], "torus dimension")] + ([args[1:]] if len(args) > 2 else args[1:])
            if name == "perturbed" and len(args) >= 2:
                args[1] = _as_int(args[1], "seed")
            return _CONSTRUCTORS[name](*args)
        except TypeError as exc:
            raise CatalogError(f"bad arguments for {name} in {src!r}: {exc}") from None
    raise CatalogError(f"unsupported syntax in manifold selector {src!r}")


def _as_int(v, what: str) -> int:
    if isinstance(v, float) and v.is_integer():
        v = int(v)
    if not isinstance(v, int):
        raise CatalogError(f"{what} must be an integer")
    return v


def resolve(selector: str | None = None, manifest: str | Path | None = None) -> ChartManifold:
    if (selector is None) == (manifest is None):
        raise CatalogError("give exactly one of a manifold selector or a manifest path")
    return load_manifest(manifest) if manifest is not None else build_catalog_entry(selector)


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

_PARAM = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def load_manifest(path) -> ChartManifold:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CatalogError(f"cannot read manifest {path}: {exc.strerror}") from None
    return parse_manifest(text, default_name=path.stem)


def parse_manifest(text: str, default_name: str = "manifest") -> ChartManifold:
    name, dim, chi = None, None, None
    domain: dict[int, tuple[Axis, int]] = {}
    metric_lines: dict[tuple[int, int], tuple[str, int, int]] = {}
    params: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        col = len(line) - len(line.lstrip()) + 1
        head, _, rest = line.strip().partition(" ")
        rest = rest.strip()
        if head == "manifold":
            m = re.fullmatch(r'"([^"]*)"', rest)
            if not m:
                raise ManifestError('expected manifold "<name>"', lineno, col)
            name = m.group(1)
        elif head == "dim":
            if not re.fullmatch(r"\d+", rest) or not 1 <= int(rest) <= MAX_DIM:
                raise ManifestError(f"dim must be an integer in 1..{MAX_DIM}", lineno, col + 4)
            dim = int(rest)
        elif head == "chi":
            if not re.fullmatch(r"[+-]?\d+", rest):
                raise ManifestError("chi must be an integer", lineno, col + 4)
            chi = int(rest)
        elif head == "domain":
            m = re.fullmatch(r"x(\d+)\s+(\S+)\s+(\S+)\s+(periodic|open)", rest)
            if not m:
                raise ManifestError("expected domain x<i> <min> <max> <periodic|open>", lineno, col + 7)
            k = int(m.group(1))
            lo, hi = (_number(m.group(g), params, lineno, raw) for g in (2, 3))
            if not hi > lo:
                raise ManifestError(f"empty interval for x{k}", lineno, col + 7)
            domain[k] = (Axis(lo, hi, m.group(4) == "periodic"), lineno)
        elif head == "metric":
            m = re.fullmatch(r'(\d+)\s+(\d+)\s*=\s*"([^"]*)"', rest)
            if not m:
                raise ManifestError('expected metric <i> <j> = "<expression>"', lineno, col + 7)
            i, j = int(m.group(1)), int(m.group(2))
            i, j = max(i, j), min(i, j)
            expr_col = raw.index('"') + 2
            metric_lines[(i, j)] = (m.group(3), lineno, expr_col)
        elif head == "param":
            m = re.fullmatch(r"([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(\S+)", rest)
            if not m:
                raise ManifestError("expected param <name> = <number>", lineno, col + 6)
            _number(m.group(2), {}, lineno, raw)
            if m.group(1) in ("pi",) or re.fullmatch(r"x\d+", m.group(1)) or m.group(1) in _FUNC_NAMES:
                raise ManifestError(f"param name {m.group(1)!r} is reserved", lineno, col + 6)
            params[m.group(1)] = m.group(2)
        else:
            raise ManifestError(f"unknown directive {head!r}", lineno, col)
    if dim is None:
        raise ManifestError("missing required field 'dim'", 1)
    missing = [k for k in range(1, dim + 1) if k not in domain]
    if missing:
        raise ManifestError(f"missing domain line for x{missing[0]}", 1)
    extra = [k for k in domain if k > dim]
    if extra:
        raise ManifestError(f"domain axis x{extra[0]} exceeds dim {dim}", domain[extra[0]][1])
    for k in range(1, dim + 1):
        if (k, k) not in metric_lines:
            raise ManifestError(f"missing diagonal metric entry {k} {k}", 1)
    rows = [[Num(0.0)] * (i + 1) for i in range(dim)]
    for (i, j), (src, lineno, c) in metric_lines.items():
        if i > dim:
            raise ManifestError(f"metric index {i} exceeds dim {dim}", lineno, c)
        try:
            rows[i - 1][j - 1] = parse(_substitute(src, params), dim)
        except ExprError as exc:
            pos = getattr(exc, "position", None)
            where = c + pos - 1 if pos and not params else c
            raise ManifestError(str(exc), lineno, where) from None
    return ChartManifold(
        name=name or default_name,
        dim=dim,
        axes=tuple(domain[k][0] for k in range(1, dim + 1)),
        metric=MetricField(dim, tuple(tuple(r) for r in rows)),
        chi=chi,
    )


_FUNC_NAMES = ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh")


def _strip_comment(line: str) -> str:
    out, quoted = [], False
    for ch in line:
        if ch == '"':
            quoted = not quoted
        if ch == "#" and not quoted:
            break
        out.append(ch)
    return "".join(out)


def _substitute(src: str, params: dict[str, str]) -> str:
    if not params:
        return src
    return _PARAM.sub(lambda m: f"({params[m.group(0)]})" if m.group(0) in params else m.group(0), src)


def _number(tok: str, params: dict[str, str], lineno: int, raw: str) -> float:
    try:
        e = parse(_substitute(tok, params), 1)
        if variables(e):
            raise ExprError("bounds must be constant")
        from .expr import evaluate

        return float(evaluate(e, np.zeros(1)))
    except ExprError as exc:
        raise ManifestError(f"bad number {tok!r}: {exc}", lineno, raw.find(tok) + 1) from None


# ---------------------------------------------------------------------------
# random fields
# ---------------------------------------------------------------------------


def _monomial(feats, rng, bandwidth: int) -> tuple[int, ...]:
    """Feature indices of a random monomial of degree <= bandwidth."""
    deg = int(rng.integers(0, bandwidth + 1))
    return tuple(sorted(int(k) for k in rng.integers(0, len(feats), size=deg)))


def _coef(rng, amplitude: float) -> float:
    # rounded so expressions print and reparse exactly
    return float(np.round(amplitude * rng.uniform(-1.0, 1.0), 12))


def _scaled_term(c: float, expr: Expression) -> Expression:
    return mul(Num(c), expr)


def random_symmetric_field(
    m: ChartManifold, seed: int, bandwidth: int = 2, amplitude: float = 0.1, terms: int | None = None
) -> SymmetricField:
    """Seeded random smooth symmetric 2-tensor field on ``m``."""
    if not amplitude > 0:
        raise CatalogError("amplitude must be positive")
    if bandwidth < 0:
        raise CatalogError("bandwidth must be non-negative")
    rng = np.random.default_rng(seed)
    n = m.dim
    terms = terms or 2 * n
    if m.embedding is not None:
        feats = m.embedding.features
        out = []
        for _ in range(terms):
            a, b = sorted(int(k) for k in rng.integers(0, len(m.embedding.coframes), size=2))
            c = _coef(rng, amplitude)
            out.append((c, _monomial(feats, rng, bandwidth), a, b))
        recipe = FieldRecipe(tuple(out))
        return SymmetricField(n, recipe.symmetric(m.embedding, n), seed, recipe)
    acc: dict[tuple[int, int], list[Expression]] = {}
    for _ in range(terms):
        i, j = sorted(int(k) for k in rng.integers(0, n, size=2))[::-1]
        c = _coef(rng, amplitude)
        acc.setdefault((i, j), []).append(_scaled_term(c, _bump_trig(m, rng, bandwidth)))
    rows = tuple(
        tuple(add(*acc.get((i, j), [])) for j in range(i + 1)) for i in range(n)
    )
    return SymmetricField(n, rows, seed)


def random_scalar_field(
    m: ChartManifold, seed: int, bandwidth: int = 2, amplitude: float = 0.1, terms: int | None = None
) -> ScalarField:
    """``1 + (small smooth random function)``, a Sobolev trial function."""
    rng = np.random.default_rng(seed)
    terms = terms or m.dim
    if m.embedding is not None:
        out = [(1.0, (), -1, -1)]
        for _ in range(terms):
            c = _coef(rng, amplitude)
            out.append((c, _monomial(m.embedding.features, rng, max(bandwidth, 1)), -1, -1))
        recipe = FieldRecipe(tuple(out))
        return ScalarField(m.dim, recipe.scalar(m.embedding), seed, recipe)
    parts = [Num(1.0)]
    for _ in range(terms):
        parts.append(_scaled_term(_coef(rng, amplitude), _bump_trig(m, rng, max(bandwidth, 1))))
    return ScalarField(m.dim, add(*parts), seed)


def _bump_trig(m: ChartManifold, rng, bandwidth: int) -> Expression:
    """Chart-local fallback: trig monomial on periodic axes, sin^2 bump on open axes."""
    factors = []
    for k, ax in enumerate(m.axes, start=1):
        scale = 2 * math.pi / ax.length if ax.periodic else math.pi / ax.length
        arg = Var(k)
        if ax.lo:
            arg = BinOp("-" if ax.lo > 0 else "+", arg, Num(abs(ax.lo)))
        arg = mul(Num(scale), arg) if scale != 1 else arg
        if ax.periodic:
            f = int(rng.integers(0, bandwidth + 1))
            if f:
                factors.append(Call("cos" if rng.integers(0, 2) else "sin", mul(Num(float(f)), arg)))
        else:
            factors.append(Pow(Call("sin", arg), 2))
    return mul(*factors) if factors else Num(1.0)


# ---------------------------------------------------------------------------
# re-charting near the poles of polar charts
# ---------------------------------------------------------------------------

# a node is re-charted when some sin(x_k) of a sphere factor falls below this
POLE_MARGIN = 0.5


@dataclass(frozen=True, eq=False)
class ChartVariant:
    """The manifold in a polar chart of permuted ambient coordinates.

    ``perms[b][j]`` is the ambient index that polar feature ``j`` of sphere
    block ``b`` represents in this chart (``None`` keeps the block as is).
    Permuting ambient coordinates is an isometry of a round sphere, so the
    base metric keeps its expressions and only ambient recipes change.
    """

    perms: tuple[tuple[int, ...] | None, ...]
    metric: MetricField
    embedding: Embedding

    def symmetric(self, h: SymmetricField) -> SymmetricField:
        if h.recipe is None:
            raise CatalogError("field has no ambient form and cannot be re-charted")
        return SymmetricField(h.dim, h.recipe.symmetric(self.embedding, h.dim), h.seed, h.recipe)

    def scalar(self, u: ScalarField) -> ScalarField:
        if u.recipe is None:
            raise CatalogError("field has no ambient form and cannot be re-charted")
        return ScalarField(u.dim, u.recipe.scalar(self.embedding), u.seed, u.recipe)


def rechartable(m: ChartManifold) -> bool:
    return m.embedding is not None and bool(m.embedding.blocks)


def chart_variant(m: ChartManifold, perms) -> ChartVariant:
    emb = m.embedding
    feats, cof = list(emb.features), list(emb.coframes)
    for block, perm in zip(emb.blocks, perms):
        if perm is None:
            continue
        for j, target in enumerate(perm):
            feats[block.features[target]] = emb.features[block.features[j]]
            cof[block.coframes[target]] = emb.coframes[block.coframes[j]]
    alt = Embedding(tuple(feats), tuple(cof), emb.blocks)
    metric = m.metric
    if m.ambient:
        base = m.base_metric
        rows = [list(r) for r in base.components]
        for recipe in m.ambient:
            for i, row in enumerate(recipe.symmetric(alt, m.dim)):
                for j, e in enumerate(row):
                    if e != Num(0.0):
                        rows[i][j] = add(rows[i][j], e)
        metric = MetricField(m.dim, tuple(tuple(r) for r in rows))
    return ChartVariant(tuple(perms), metric, alt)


def _polar_angles(Y: np.ndarray) -> np.ndarray:
    """Inverse of the polar parametrization for ambient rows Y (B, n+1)."""
    n = Y.shape[1] - 1
    tails = np.sqrt(np.cumsum((Y[:, ::-1] ** 2), axis=1))[:, ::-1]  # |Y[k:]|
    ang = np.empty((len(Y), n))
    for k in range(n - 1):
        ang[:, k] = np.arctan2(tails[:, k + 1], Y[:, k])
    ang[:, n - 1] = np.mod(np.arctan2(Y[:, n], Y[:, n - 1]), 2 * math.pi)
    return ang


def _min_sine(Y: np.ndarray) -> np.ndarray:
    """Smallest sin(x_k), k < n, of the polar chart at ambient rows Y."""
    tails = np.sqrt(np.cumsum((Y[:, ::-1] ** 2), axis=1))[:, ::-1]
    ratios = tails[:, 1:-1] / np.where(tails[:, :-2] > 0, tails[:, :-2], 1.0)
    return ratios.min(axis=1) if ratios.shape[1] else np.ones(len(Y))


def chart_variants(m: ChartManifold, points: np.ndarray, margin: float = POLE_MARGIN):
    """Partition ``points`` by the chart each should be evaluated in.

    Returns ``[(indices, chart_points, perms)]`` where ``perms`` is ``None``
    for the original chart.  A sphere factor is re-charted at a node when
    its polar chart there has some sin(x_k) < ``margin``; the new chart puts
    the two largest ambient coordinates last, which keeps every sin(x_k)
    of that factor at least sqrt(2/(n+1)).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if not rechartable(m):
        return [(np.arange(len(points)), points, None)]
    emb = m.embedding
    alt_pts = points.copy()
    keys = []
    for block in emb.blocks:
        y = np.stack([
            np.broadcast_to(np.asarray(evaluate(emb.features[f], points), dtype=float), (len(points),))
            for f in block.features
        ], axis=1)
        n1 = y.shape[1]
        top = np.argsort(np.abs(y), axis=1, kind="stable")[:, -2:]
        top.sort(axis=1)
        col = np.full(len(points), -1)
        bad = _min_sine(y) < margin
        ident = (top[:, 0] == n1 - 2) & (top[:, 1] == n1 - 1)
        use = bad & ~ident
        for k in np.flatnonzero(use):
            a, b = int(top[k, 0]), int(top[k, 1])
            col[k] = a * n1 + b
        # apply the permutation per distinct choice
        for code in np.unique(col[col >= 0]):
            a, b = divmod(int(code), n1)
            perm = tuple(j for j in range(n1) if j not in (a, b)) + (a, b)
            rows = np.flatnonzero(col == code)
            Y = y[rows][:, perm]
            alt_pts[np.ix_(rows, block.axes)] = _polar_angles(Y)
        keys.append(col)
    keys = np.stack(keys, axis=1)
    out = []
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    for u, code_row in enumerate(uniq):
        idx = np.flatnonzero(inverse.reshape(-1) == u)
        perms = []
        for block, code in zip(emb.blocks, code_row):
            if code < 0:
                perms.append(None)
            else:
                n1 = len(block.features)
                a, b = divmod(int(code), n1)
                perms.append(tuple(j for j in range(n1) if j not in (a, b)) + (a, b))
        perms = tuple(perms)
        out.append((idx, alt_pts[idx], None if all(p is None for p in perms) else perms))
    return out
