"""
Tensor-product quadrature over chart manifolds.

Periodic axes use the equispaced rectangle rule (exact for trig polynomials
of degree below the node count); open axes use Gauss-Legendre, whose nodes
never touch the chart-degenerate endpoints.  Integrands are evaluated only
on the axes they actually depend on, with the weights of the remaining axes
summed into a constant factor; this is exact for such integrands and is what
keeps a 24^4 grid affordable when the metric has a symmetry.

Sums use a fixed pairwise tree, so results are bit-identical regardless of
chunking or worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

__all__ = [
    "QuadratureError",
    "GridSpec",
    "pairwise_sum",
    "evaluate_on_grid",
    "integrate",
    "volume",
    "lp_norm",
    "linf_norm",
    "refinement_change",
    "CHUNK",
    "default_nodes",
]

CHUNK = 512
MIN_NODES = 4


class QuadratureError(ValueError):
    pass


def default_nodes(dim: int) -> int:
    """24 per axis up to n = 4; 12 beyond, where the pipeline is ~n^2 costlier per node."""
    return 24 if dim <= 4 else 12


def _axis_rule(lo: float, hi: float, periodic: bool, count: int) -> tuple[np.ndarray, np.ndarray]:
    if periodic:
        h = (hi - lo) / count
        return lo + h * np.arange(count), np.full(count, h)
    t, w = np.polynomial.legendre.leggauss(count)
    half = 0.5 * (hi - lo)
    return lo + half * (t + 1.0), half * w


@dataclass(frozen=True)
class GridSpec:
    """Per-axis node counts and rules over a chart box."""

    counts: tuple[int, ...]
    bounds: tuple[tuple[float, float], ...]
    periodic: tuple[bool, ...]

    def __post_init__(self):
        if not (len(self.counts) == len(self.bounds) == len(self.periodic)):
            raise QuadratureError("grid counts do not match the chart dimension")
        if any(c < MIN_NODES for c in self.counts):
            raise QuadratureError(f"grid counts must be >= {MIN_NODES}, got {list(self.counts)}")

    @classmethod
    def for_manifold(cls, m, counts=None) -> "GridSpec":
        if counts is None:
            counts = default_nodes(m.dim)
        counts = tuple(int(c) for c in np.broadcast_to(np.asarray(counts), (m.dim,)))
        return cls(counts, tuple((a.lo, a.hi) for a in m.axes), tuple(a.periodic for a in m.axes))

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    def refined(self) -> "GridSpec":
        return GridSpec(tuple(2 * c for c in self.counts), self.bounds, self.periodic)

    def axis(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        return _axis_rule(*self.bounds[k], self.periodic[k], self.counts[k])

    def nodes(self, axes: Iterable[int] | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Nodes (N, n) and weights (N,) of the sub-grid spanned by ``axes``.

        Omitted axes are pinned at their first node and their weight sums
        multiply every returned weight.
        """
        axes = sorted(set(range(self.dim) if axes is None else axes))
        rules = [self.axis(k) for k in range(self.dim)]
        fixed = 1.0
        for k in range(self.dim):
            if k not in axes:
                fixed *= float(rules[k][1].sum())
        if not axes:
            pt = np.array([[r[0][0] for r in rules]])
            return pt, np.array([fixed])
        mesh = np.meshgrid(*[rules[k][0] for k in axes], indexing="ij")
        wmesh = np.meshgrid(*[rules[k][1] for k in axes], indexing="ij")
        pts = np.empty((mesh[0].size, self.dim))
        for k in range(self.dim):
            pts[:, k] = rules[k][0][0]
        for slot, k in enumerate(axes):
            pts[:, k] = mesh[slot].ravel()
        w = np.prod([m.ravel() for m in wmesh], axis=0) * fixed
        return pts, w


def pairwise_sum(x: np.ndarray) -> float:
    """Sum along axis 0 by a fixed balanced tree (deterministic for a given length)."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] == 0:
        return 0.0 if x.ndim == 1 else np.zeros(x.shape[1:])
    while x.shape[0] > 1:
        if x.shape[0] % 2:
            x = np.concatenate([x, np.zeros((1,) + x.shape[1:])])
        x = x[0::2] + x[1::2]
    return x[0] if x.ndim > 1 else float(x[0])


def evaluate_on_grid(
    evaluator: Callable[[np.ndarray], dict],
    points: np.ndarray,
    chunk: int = CHUNK,
    workers: int = 1,
) -> dict[str, np.ndarray]:
    """Run ``evaluator(points_chunk) -> {name: (B,) array}`` over fixed chunks.

    Chunk boundaries do not depend on ``workers``; results are stitched by
    chunk index, so the output is identical for any worker count.
    """
    starts = range(0, len(points), chunk)

    def run(s):
        return evaluator(points[s : s + chunk])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    if not parts:
        return {}
    return {k: np.concatenate([np.asarray(p[k], dtype=float).reshape(-1) for p in parts]) for k in parts[0]}


def _metric_density(metric, points: np.ndarray) -> np.ndarray:
    g = np.moveaxis(metric.values(points), -1, 0)
    det = np.linalg.det(g)
    if np.any(~(det > 0)):
        k = int(np.flatnonzero(~(det > 0))[0])
        raise QuadratureError(f"metric degenerate at node {tuple(points[k])}")
    return np.sqrt(det)


def integrate(
    field: Callable[[np.ndarray], np.ndarray],
    manifold,
    grid: GridSpec,
    depends_on: Iterable[int] | None = None,
    workers: int = 1,
) -> float:
    """sum_nodes w * f * sqrt(det g).

    ``field`` maps points (B, n) to values (B,).  ``depends_on`` lists the
    0-based axes ``field`` varies along; the metric's own are always added.
    Omit it to integrate over the full grid.
    """
    axes = None
    if depends_on is not None:
        axes = set(depends_on) | set(manifold.metric.depends_on)
    pts, w = grid.nodes(axes)

    def ev(p):
        try:
            f = np.asarray(field(p), dtype=float)
        except (ValueError, ArithmeticError) as exc:
            raise QuadratureError(f"integrand failed near node {tuple(p[0])}: {exc}") from exc
        bad = ~np.isfinite(f)
        if bad.any():
            raise QuadratureError(f"integrand not finite at node {tuple(p[np.flatnonzero(bad)[0]])}")
        return {"f": np.broadcast_to(f, (len(p),)), "dv": _metric_density(manifold.metric, p)}

    vals = evaluate_on_grid(ev, pts, workers=workers)
    return pairwise_sum(w * vals["f"] * vals["dv"])


def volume(manifold, grid: GridSpec) -> float:
    return integrate(lambda p: np.ones(len(p)), manifold, grid, depends_on=())


def lp_norm(
    norm_field: Callable[[np.ndarray], np.ndarray],
    p: float,
    manifold,
    grid: GridSpec,
    depends_on: Iterable[int] | None = None,
    workers: int = 1,
) -> float:
    """(integral |T|^p)^(1/p) where ``norm_field`` returns the pointwise |T|."""
    if not p >= 1:
        raise QuadratureError(f"L^p needs p >= 1, got {p}")
    val = integrate(
        lambda x: np.abs(norm_field(x)) ** p, manifold, grid, depends_on=depends_on, workers=workers
    )
    return max(val, 0.0) ** (1.0 / p)


def linf_norm(
    norm_field: Callable[[np.ndarray], np.ndarray],
    manifold,
    grid: GridSpec,
    depends_on: Iterable[int] | None = None,
    workers: int = 1,
) -> float:
    """max over grid nodes of |T|; a lower approximation of the true sup."""
    axes = None if depends_on is None else set(depends_on) | set(manifold.metric.depends_on)
    pts, _ = grid.nodes(axes)
    vals = evaluate_on_grid(lambda x: {"f": np.abs(norm_field(x))}, pts, workers=workers)
    return float(vals["f"].max(initial=0.0))


def refinement_change(compute: Callable[[GridSpec], float], grid: GridSpec) -> float:
    """Relative change of ``compute`` when every axis count doubles."""
    a, b = compute(grid), compute(grid.refined())
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0
