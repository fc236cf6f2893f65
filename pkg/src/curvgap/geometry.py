"""
Pointwise curvature pipeline.

The metric components are evaluated as jets of order ``K`` at a batch of
chart points; every curvature object is then built in jet arithmetic, each
differentiation consuming one order.  With the default ``K = 4``:

    g (4) -> Christoffel (3) -> Riemann, Ricci, E, S, W (2)
          -> Cotton, grad W (1) -> Bach, Laplacians, Q (0)

Sign conventions
----------------
``R^m_ijk = d_i G^m_jk - d_j G^m_ik + G^m_ip G^p_jk - G^m_jp G^p_ik`` and
``Rm_ijkl = g_lm R^m_ijk``, so a metric of constant curvature ``lam`` has
``Rm_ijkl = lam (g_il g_jk - g_ik g_jl)`` and ``Ric_jk = g^il Rm_ijkl =
(n-1) lam g_jk``.  The Weyl tensor is what remains of
``Rm - E o g / (n-2) - R g o g / (2n(n-1))``.

The quadratic Weyl term is ``Q(W) = B_ijkl - B_jikl + B_ikjl - B_jkil`` with
``B_ijkl = g^pq g^rs W_pijr W_qkls``.  Under the convention above the Einstein
identity reads ``Lap W - 2(n-1) lam W - 2 Q(W) = 0`` with no extra sign; this
is asserted on symmetric product spaces in the test-suite.

Arrays are laid out slots-first, batch-last: a 2-tensor over ``B`` points has
shape ``(n, n, B)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import tensor as T
from .expr import Expression, JetProgram, evaluate, variables
from .jets import Jet, JetDomainError, jet_inv
from .tensor import einsum, expand

__all__ = [
    "GeometryError",
    "MetricError",
    "MetricField",
    "CurvatureJets",
    "CurvatureFrame",
    "christoffel",
    "riemann",
    "curvature_frame",
    "field_jets",
    "weyl_quadratic",
    "q_curvature_from",
]


class GeometryError(ValueError):
    pass


class MetricError(GeometryError):
    """Metric singular or not positive definite at a point."""


# ---------------------------------------------------------------------------
# metric field
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricField:
    """Symmetric metric given by component expressions (lower triangle).

    ``components[i][j]`` for ``j <= i`` is the expression of ``g_ij``.
    """

    dim: int
    components: tuple[tuple[Expression, ...], ...]

    def __post_init__(self):
        if len(self.components) != self.dim or any(
            len(row) != i + 1 for i, row in enumerate(self.components)
        ):
            raise GeometryError("metric needs a full lower triangle")
        for row in self.components:
            for e in row:
                bad = [k for k in variables(e) if k > self.dim]
                if bad:
                    raise GeometryError(f"metric references x{bad[0]} beyond dim {self.dim}")

    def entry(self, i: int, j: int) -> Expression:
        return self.components[max(i, j)][min(i, j)]

    @cached_property
    def depends_on(self) -> frozenset[int]:
        """0-based chart axes the metric actually varies along."""
        out: set[int] = set()
        for row in self.components:
            for e in row:
                out |= {k - 1 for k in variables(e)}
        return frozenset(out)

    def values(self, points) -> np.ndarray:
        """g at ``points`` (shape (B, n)) as an array (n, n, B)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.dim
        out = np.empty((n, n, len(points)))
        for i in range(n):
            for j in range(i + 1):
                out[i, j] = out[j, i] = evaluate(self.entry(i, j), points)
        return out

    @cached_property
    def program(self) -> JetProgram:
        return JetProgram([e for row in self.components for e in row])

    def jets(self, points, order: int) -> Jet:
        """Jets of g at ``points`` (B, n), value shape (n, n, B)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return field_jets(self.components, points, order, symmetric=True, program=self.program)

    def check_positive_definite(self, points) -> None:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        g = np.moveaxis(self.values(points), -1, 0)
        ok = _positive_definite_mask(g)
        if not ok.all():
            k = int(np.flatnonzero(~ok)[0])
            raise MetricError(f"metric not positive definite at point {tuple(points[k])}")


def _positive_definite_mask(mats: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvalsh(mats)
    return np.isfinite(w).all(axis=-1) & (w[..., 0] > 0)


def field_jets(components, points, order: int, symmetric: bool = False, program=None) -> Jet:
    """Jets of a 2-tensor (or scalar) field given by expressions.

    ``components`` is a lower triangle when ``symmetric`` (for metrics and
    symmetric fields), or a single expression for a scalar field.  A
    prepared ``program`` over the same flattened components may be passed
    to skip re-analysing the expressions.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dim = points.shape[-1]
    if not symmetric:
        (j,) = (program or JetProgram([components])).jets(points, order)
        return j
    n = len(components)
    flat = [components[i][j] for i in range(n) for j in range(i + 1)]
    jets = (program or JetProgram(flat)).jets(points, order)
    ncoef = jets[0].coeffs.shape[0]
    c = np.empty((ncoef, n, n, len(points)))
    k = 0
    for i in range(n):
        for j in range(i + 1):
            c[:, i, j] = c[:, j, i] = np.broadcast_to(jets[k].coeffs, (ncoef, len(points)))
            k += 1
    return Jet(dim, order, c)


# ---------------------------------------------------------------------------
# the jet pipeline
# ---------------------------------------------------------------------------

_L = "abcdefghijklmnopqrstuvwxy"


class CurvatureJets:
    """All curvature objects of a metric at a batch of points, as jets.

    Attributes are computed lazily; each carries the highest order the
    input order allows.  ``order`` must be at least 2 for Riemann and at
    least 4 for Bach, Cotton derivatives, Laplacians and Q.
    """

    def __init__(self, metric: MetricField, points, order: int = 4):
        self.metric = metric
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.n = metric.dim
        self.order = order
        if order < 1:
            raise GeometryError("jet order must be >= 1 for the connection")
        self.g = metric.jets(self.points, order)

    def _need(self, k: int, what: str) -> int:
        if self.order < k:
            raise GeometryError(f"order exhausted: {what} needs jet order >= {k}, got {self.order}")
        return self.order - k

    def _need_dim(self, what: str) -> None:
        if self.n < 3:
            raise GeometryError(f"{what} is defined for n >= 3 only")

    # -- metric ----------------------------------------------------------

    @cached_property
    def g_inv(self) -> Jet:
        try:
            return jet_inv(self.g.truncate(self.order - 1))
        except JetDomainError:
            g0 = np.moveaxis(self.g.value, -1, 0)
            bad = np.flatnonzero(~_positive_definite_mask(g0))
            k = int(bad[0]) if len(bad) else 0
            raise MetricError(f"singular metric at point {tuple(self.points[k])}") from None

    def ginv_at(self, order: int) -> Jet:
        return self.g_inv.truncate(order)

    def g_at(self, order: int) -> Jet:
        return self.g.truncate(order)

    # -- connection and curvature ------------------------------------------

    @cached_property
    def christoffel_first(self) -> Jet:
        """G_lij = (d_i g_jl + d_j g_il - d_l g_ij) / 2."""
        dg = self.g.gradient()  # dg[a, b, c] = d_a g_bc
        return 0.5 * (einsum("ijl->lij", dg) + einsum("jil->lij", dg) - einsum("lij->lij", dg))

    @cached_property
    def christoffel(self) -> Jet:
        """G^k_ij, symmetric in (i, j); order K-1."""
        return einsum("kl,lij->kij", self.ginv_at(self.order - 1), self.christoffel_first)

    @cached_property
    def riemann(self) -> Jet:
        """Rm_ijkl, order K-2."""
        return self.riemann_at(self._need(2, "Riemann"))

    def riemann_at(self, k: int) -> Jet:
        """Rm_ijkl carried only to order ``k`` (cheaper when few orders are needed)."""
        if k > self._need(2, "Riemann"):
            raise GeometryError(f"order exhausted: Riemann available to order {self.order - 2}")
        cache = self.__dict__.setdefault("_riemann_by_order", {})
        if k not in cache:
            gf = self.christoffel_first
            d_gf = gf.truncate(k + 1).gradient()  # d_gf[a, l, i, j] = d_a G_lij
            quad = einsum("mil,mjk->ijkl", gf.truncate(k), self.christoffel.truncate(k))
            half = einsum("iljk->ijkl", d_gf) - quad  # d_i G_ljk - G_mil G^m_jk
            cache[k] = half - half.swapaxes(0, 1)
        return cache[k]

    @cached_property
    def ricci(self) -> Jet:
        """Ric_jk = g^il Rm_ijkl, formed directly from the connection; order K-2.

        Equal to ``d_i G^i_jk - d_j G^i_ik + G^i_ip G^p_jk - G^i_jp G^p_ik``,
        which avoids building Riemann to full order.
        """
        k = self._need(2, "Ricci")
        gam = self.christoffel
        d_gam = gam.gradient()  # d_gam[a, m, j, k] = d_a G^m_jk
        g0 = gam.truncate(k)
        trace_g = einsum("iip->p", g0)
        lin = einsum("iijk->jk", d_gam) - einsum("jiik->jk", d_gam)
        quad = einsum("p,pjk->jk", trace_g, g0) - einsum("ijp,pik->jk", g0, g0)
        return lin + quad

    @cached_property
    def scalar(self) -> Jet:
        return T.trace(self.ricci, self.ginv_at(self.order - 2))

    @cached_property
    def lam(self) -> Jet:
        n = self.n
        return self.scalar * (1.0 / (n * (n - 1)))

    @cached_property
    def traceless_ricci(self) -> Jet:
        n = self.n
        return self.ricci - expand(self.scalar, 2) * self.g_at(self.order - 2) * (1.0 / n)

    @cached_property
    def schouten(self) -> Jet:
        self._need_dim("Schouten")
        n = self.n
        g = self.g_at(self.order - 2)
        return (self.ricci - expand(self.scalar, 2) * g * (1.0 / (2 * (n - 1)))) * (1.0 / (n - 2))

    @cached_property
    def weyl(self) -> Jet:
        return self.weyl_at(self.order - 2)

    def weyl_at(self, k: int) -> Jet:
        """W_ijkl carried to order ``k``."""
        self._need_dim("Weyl")
        cache = self.__dict__.setdefault("_weyl_by_order", {})
        if k not in cache:
            # E o g / (n-2) + R g o g / (2n(n-1)) collapses to S o g by bilinearity
            S = self.schouten.truncate(k)
            cache[k] = self.riemann_at(k) - T.kulkarni_nomizu(S, self.g_at(k))
        return cache[k]

    # -- covariant calculus -----------------------------------------------

    def nabla(self, tensor: Jet, rank: int) -> Jet:
        """Covariant derivative of a covariant tensor; new slot goes first.

        ``(nabla T)_a i1..ir = d_a T_i1..ir - sum_s G^p_(a i_s) T_i1..p..ir``.
        """
        m = tensor.order
        if m < 1:
            raise GeometryError("order exhausted: cannot differentiate an order-0 jet")
        out = tensor.gradient()
        gam = self.christoffel.truncate(m - 1)
        t = tensor.truncate(m - 1)
        src = _L[1 : rank + 1]
        for s in range(rank):
            moved = src[:s] + "z" + src[s + 1 :]
            out = out - einsum(f"za{src[s]},{moved}->a{src}", gam, t)
        return out

    def laplacian(self, tensor: Jet, rank: int) -> Jet:
        """Rough Laplacian g^ab nabla_a nabla_b T."""
        dd = self.nabla(self.nabla(tensor, rank), rank + 1)
        src = _L[2 : rank + 2]
        return einsum(f"ab,ab{src}->{src}", self.ginv_at(dd.order), dd)

    def divergence_delta(self, h: Jet) -> Jet:
        """(delta h)_k = -g^ij nabla_i h_jk."""
        dh = self.nabla(h, 2)
        return -einsum("ij,ijk->k", self.ginv_at(dh.order), dh)

    def theta_codazzi(self, h: Jet, theta: float) -> Jet:
        """C_theta(h)_ijk = nabla_i h_jk - theta nabla_j h_ik."""
        dh = self.nabla(h, 2)
        return dh - theta * dh.swapaxes(0, 1)

    # -- derived objects -------------------------------------------------

    @cached_property
    def cotton(self) -> Jet:
        """C_ijk = nabla_i S_jk - nabla_j S_ik; order K-3."""
        self._need(3, "Cotton")
        dS = self.nabla(self.schouten, 2)
        return dS - dS.swapaxes(0, 1)

    @cached_property
    def grad_weyl(self) -> Jet:
        self._need(3, "grad W")
        return self.nabla(self.weyl, 4)

    @cached_property
    def weyl_divergence(self) -> Jet:
        """nabla^l W_ijkl; order K-3.

        Contracted before expansion: g^la (d_a W_ijkl - sum of G corrections)
        with the connection pre-raised, G^pl_i = g^la G^p_ai.
        """
        k = self._need(3, "grad W")
        W = self.weyl_at(k + 1)
        gi = self.ginv_at(k)
        dW = einsum("la,aijkl->ijk", gi, W.gradient())
        gam_up = einsum("la,pai->pli", gi, self.christoffel.truncate(k))
        w = W.truncate(k)
        return (
            dW
            - einsum("pli,pjkl->ijk", gam_up, w)
            - einsum("plj,ipkl->ijk", gam_up, w)
            - einsum("plk,ijpl->ijk", gam_up, w)
            - einsum("pll,ijkp->ijk", gam_up, w)
        )

    @cached_property
    def grad_traceless_ricci(self) -> Jet:
        self._need(3, "grad E")
        return self.nabla(self.traceless_ricci, 2)

    @cached_property
    def hessian_scalar(self) -> Jet:
        """(nabla^2 R)_jk = nabla_j nabla_k R; order K-4."""
        self._need(4, "Hessian of R")
        return self.nabla(self.scalar.gradient(), 1)

    @cached_property
    def laplacian_scalar(self) -> Jet:
        h = self.hessian_scalar
        return T.trace(h, self.ginv_at(h.order))

    @cached_property
    def bach(self) -> Jet:
        """B_jk = nabla^i C_ijk + W_ijkl S^il; order K-4."""
        k = self._need(4, "Bach")
        dC = self.nabla(self.cotton, 3)
        gi = self.ginv_at(k)
        S_up = T.raise_all(self.schouten.truncate(k), gi, 2)
        return einsum("ia,aijk->jk", gi, dC) + einsum("ijkl,il->jk", self.weyl_at(k), S_up)

    @cached_property
    def bach_from_traceless_ricci(self) -> Jet:
        """Bach tensor rebuilt from E, R and W only; order K-4."""
        k = self._need(4, "Bach")
        n = self.n
        gi = self.ginv_at(k)
        g = self.g_at(k)
        E = self.traceless_ricci.truncate(k)
        R = self.scalar.truncate(k)
        W = self.weyl_at(k)
        lap_E = einsum("ab,abjk->jk", gi, self.nabla(self.grad_traceless_ricci, 3))
        E_up = T.raise_all(E, gi, 2)
        WE = einsum("ijkl,il->jk", W, E_up)
        ExE = T.times(E, E, gi)
        E2 = T.dot(E, E, gi)
        hess = self.hessian_scalar - expand(self.laplacian_scalar, 2) * g * (1.0 / n)
        return (
            lap_E * (1.0 / (n - 2))
            - hess * (1.0 / (2 * (n - 1)))
            + WE * (2.0 / (n - 2))
            - (ExE - expand(E2, 2) * g * (1.0 / n)) * (n / (n - 2) ** 2)
            - expand(R, 2) * E * (1.0 / ((n - 1) * (n - 2)))
        )

    @cached_property
    def laplacian_weyl(self) -> Jet:
        self._need(4, "Laplacian of W")
        d = self.nabla(self.grad_weyl, 5)
        return einsum("ab,abijkl->ijkl", self.ginv_at(d.order), d)

    @cached_property
    def q_curvature(self) -> Jet:
        """Q = -Lap R / 6 - |E|^2 / 2 + R^2 / 24 (dimension four only)."""
        if self.n != 4:
            raise GeometryError("Q-curvature is implemented for n = 4 only")
        k = self._need(4, "Q-curvature")
        gi = self.ginv_at(k)
        E = self.traceless_ricci.truncate(k)
        R = self.scalar.truncate(k)
        return q_curvature_from(self.laplacian_scalar, T.dot(E, E, gi), R)


def q_curvature_from(lap_R, E_sq, R):
    return -lap_R * (1.0 / 6) - E_sq * 0.5 + R * R * (1.0 / 24)


def weyl_quadratic(W, g_inv):
    """Q(W)_ijkl = B_ijkl - B_jikl + B_ikjl - B_jkil, B_ijkl = g^pq g^rs W_pijr W_qkls."""
    W_up = einsum("pa,rb,aijb->pijr", g_inv, g_inv, W)  # W^p_ij^r
    B = einsum("pijr,pklr->ijkl", W_up, W)
    return (
        B
        - einsum("jikl->ijkl", B)
        + einsum("ikjl->ijkl", B)
        - einsum("jkil->ijkl", B)
    )


# ---------------------------------------------------------------------------
# point-value interface
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvatureFrame:
    """Curvature quantities at one point (or batch, batch axis last)."""

    point: np.ndarray
    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    lam: np.ndarray
    traceless_ricci: np.ndarray
    schouten: np.ndarray
    cotton: np.ndarray
    weyl: np.ndarray
    bach: np.ndarray
    bach_lemma: np.ndarray
    weyl_quadratic: np.ndarray
    q: np.ndarray | None = None
    g: np.ndarray = field(default=None, repr=False)
    g_inv: np.ndarray = field(default=None, repr=False)

    def norm(self, name: str) -> np.ndarray:
        rank = {"traceless_ricci": 2, "schouten": 2, "bach": 2, "bach_lemma": 2, "ricci": 2,
                "cotton": 3, "weyl": 4, "riemann": 4, "weyl_quadratic": 4}[name]
        return np.sqrt(np.maximum(T.norm_sq(getattr(self, name), self.g_inv, rank), 0.0))


def christoffel(metric: MetricField, p, order: int = 1) -> np.ndarray:
    """Christoffel symbols G^k_ij at a point (array (n, n, n))."""
    cj = CurvatureJets(metric, np.atleast_2d(p), max(order, 1))
    return cj.christoffel.value[..., 0]


def riemann(metric: MetricField, p, order: int = 2) -> np.ndarray:
    cj = CurvatureJets(metric, np.atleast_2d(p), max(order, 2))
    return cj.riemann.value[..., 0]


def curvature_frame(metric: MetricField, p, order: int = 4) -> CurvatureFrame:
    """Every pointwise curvature object at ``p`` (shape (n,) or (B, n))."""
    if metric.dim < 3:
        raise GeometryError("curvature frames need n >= 3 (Bach is defined for n >= 3)")
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    cj = CurvatureJets(metric, np.atleast_2d(p), order)
    gi = cj.ginv_at(0).value
    W = cj.weyl.value
    q = cj.q_curvature.value if metric.dim == 4 else None
    vals = dict(
        point=np.atleast_2d(p).T,
        christoffel=cj.christoffel.value,
        riemann=cj.riemann.value,
        ricci=cj.ricci.value,
        scalar=cj.scalar.value,
        lam=cj.lam.value,
        traceless_ricci=cj.traceless_ricci.value,
        schouten=cj.schouten.value,
        cotton=cj.cotton.value,
        weyl=W,
        bach=cj.bach.value,
        bach_lemma=cj.bach_from_traceless_ricci.value,
        weyl_quadratic=weyl_quadratic(W, gi),
        q=q,
        g=cj.g.value,
        g_inv=gi,
    )
    if single:
        vals = {k: (v[..., 0] if isinstance(v, np.ndarray) else v) for k, v in vals.items()}
    return CurvatureFrame(**vals)
