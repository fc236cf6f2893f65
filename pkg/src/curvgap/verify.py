"""
Identity, inequality and theorem-consistency checks producing Verdicts.

Every check runs over a :class:`Survey`, which evaluates pointwise
quantities on the quadrature nodes and caches them, so ``verify all`` pays
for each curvature pass once.  Each quantity is evaluated at the lowest jet
order that determines it exactly; ``jet_order`` only caps that order (a
check whose quantities need more reports "order exhausted").

Theorem checkers separate hypotheses from consistency: a theorem is an
implication, so a run fails only when the hypotheses hold and the stated
conclusion is numerically violated.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tensor as T
from .catalog import (
    CatalogError,
    ChartManifold,
    ScalarField,
    SymmetricField,
    chart_variant,
    chart_variants,
    random_scalar_field,
    random_symmetric_field,
)
from .expr import JetProgram, Num
from .geometry import CurvatureJets, GeometryError, field_jets, weyl_quadratic
from .quadrature import GridSpec, evaluate_on_grid, pairwise_sum

__all__ = [
    "VerifyError",
    "Verdict",
    "GapConstants",
    "gap_constants",
    "Survey",
    "CHECK_IDS",
    "check_lemma22",
    "check_prop_codazzi_inequality",
    "check_eq31",
    "check_weyl_equation",
    "check_div_weyl",
    "check_bach_consistency",
    "check_gbc",
    "check_sobolev",
    "check_kato",
    "check_theorem_A",
    "check_theorem_B",
    "check_theorem_C",
    "run_checks",
    "lemma22_integrands",
]

TOL_INTEGRAL = 1e-6
TOL_POINTWISE = 1e-8
# thresholds deciding the flags einstein / bach_flat / constant_scalar etc.
GATE = 1e-9
KATO_FLOOR = 1e-6

CHECK_IDS = (
    "lemma22",
    "codazzi-ineq",
    "eq31",
    "weyl-eq",
    "div-weyl",
    "bach-consistency",
    "gbc",
    "sobolev",
    "kato",
    "thmA",
    "thmB",
    "thmC",
)


class VerifyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# results and constants
# ---------------------------------------------------------------------------


@dataclass
class Verdict:
    check: str
    manifold: str
    grid: list[int]
    jet_order: int
    values: dict[str, float]
    tol: float
    status: str  # "pass", "fail" or "skipped: <reason>"
    seconds: float | None = None

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @property
    def failed(self) -> bool:
        return self.status == "fail"

    @property
    def skipped(self) -> bool:
        return self.status.startswith("skipped")

    def to_json(self) -> dict:
        return {
            "check": self.check,
            "manifold": self.manifold,
            "grid": list(self.grid),
            "jet_order": self.jet_order,
            "values": {k: _jsonable(v) for k, v in self.values.items()},
            "tol": self.tol,
            "status": self.status,
            "seconds": self.seconds,
        }


def _jsonable(v):
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass(frozen=True)
class GapConstants:
    n: int
    alpha0: float
    eps0: float
    Lambda_n: float
    tau0: float
    delta0: float
    C_S: float
    chi: int | None = None
    theoremC_threshold: float | None = None


def gap_constants(n: int, alpha0: float, chi: int | None = None) -> GapConstants:
    if not isinstance(n, (int, np.integer)) or n < 3:
        raise VerifyError(f"gap constants need an integer n >= 3, got {n!r}")
    if not alpha0 > 0:
        raise VerifyError(f"alpha0 must be positive, got {alpha0!r}")
    lam = n / 3
    eps0 = min(lam, (n - 1) / 4)
    thr = None
    if n == 4 and chi is not None:
        thr = 32 / 3 * math.pi**2 * (chi - 2) + alpha0 / 192
    return GapConstants(
        n=int(n),
        alpha0=float(alpha0),
        eps0=eps0,
        Lambda_n=lam,
        tau0=3 * alpha0 / (32 * n * (n - 1)),
        delta0=alpha0 / (4 * n * (n - 1)),
        C_S=4 * n * (n - 1) / (3 * alpha0),
        chi=chi,
        theoremC_threshold=thr,
    )


# ---------------------------------------------------------------------------
# pointwise quantities
# ---------------------------------------------------------------------------


def _norm(x):
    return np.sqrt(np.maximum(x, 0.0))


def _gi(cj):
    return cj.ginv_at(0).value


def _E0(cj):
    return cj.traceless_ricci.truncate(0).value


def _W0(cj):
    return cj.weyl_at(0).value


def _weyl_residual(cj):
    n = cj.n
    gi = _gi(cj)
    W = _W0(cj)
    lam = cj.lam.truncate(0).value
    QW = weyl_quadratic(W, gi)
    lap = cj.laplacian_weyl.value
    resid = lap - 2 * (n - 1) * lam * W - 2 * QW
    scale = (
        _norm(T.norm_sq(lap, gi, 4))
        + 2 * (n - 1) * np.abs(lam) * _norm(T.norm_sq(W, gi, 4))
        + 2 * _norm(T.norm_sq(QW, gi, 4))
    )
    return {"weyl_resid": _norm(T.norm_sq(resid, gi, 4)), "weyl_scale": scale}


def _div_weyl(cj):
    # pointwise norms; |T|_g bounds every orthonormal-frame component
    n = cj.n
    gi = _gi(cj)
    d = cj.weyl_divergence.value
    rhs = (n - 3) * cj.cotton.truncate(0).value
    return {
        "divW_resid": _norm(T.norm_sq(d - rhs, gi, 3)),
        "divW_scale": np.maximum(_norm(T.norm_sq(d, gi, 3)), _norm(T.norm_sq(rhs, gi, 3))),
    }


def _bach(cj):
    gi = _gi(cj)
    B, B2 = cj.bach.value, cj.bach_from_traceless_ricci.value
    return {
        "B_norm": _norm(T.norm_sq(B, gi, 2)),
        "bach_defect": _norm(T.norm_sq(B - B2, gi, 2)),
    }


def _kato(cj):
    gi = _gi(cj)
    E = _E0(cj)
    dE = cj.grad_traceless_ricci.truncate(0).value
    E_norm = _norm(T.norm_sq(E, gi, 2))
    E_up = T.raise_all(E, gi, 2)
    safe = np.where(E_norm > 0, E_norm, 1.0)
    d_abs = T.einsum("jk,ajk->a", E_up, dE) / safe
    return {
        "kato_lhs": _norm(T.einsum("ab,a,b->", gi, d_abs, d_abs)),
        "gradE_norm": _norm(T.norm_sq(dE, gi, 3)),
    }


def _eq31(cj):
    n = cj.n
    gi = _gi(cj)
    E = _E0(cj)
    W = _W0(cj)
    E_up = T.raise_all(E, gi, 2)
    WEE = T.einsum("ijkl,il,jk->", W, E_up, E_up)
    return {
        "eq31_rhs": 2 * WEE - n / (n - 2) * T.cube_trace(E, gi) - n * T.norm_sq(E, gi, 2),
    }


# name -> (required jet order, function producing a dict of arrays)
QUANTITIES: dict[str, tuple[int, Callable]] = {}


def _register(order: int, names: tuple[str, ...], fn: Callable) -> None:
    for name in names:
        QUANTITIES[name] = (order, fn)


_register(2, ("R",), lambda cj: {"R": cj.scalar.truncate(0).value})
_register(2, ("E_norm",), lambda cj: {"E_norm": _norm(T.norm_sq(_E0(cj), _gi(cj), 2))})
_register(2, ("W_norm",), lambda cj: {"W_norm": _norm(T.norm_sq(_W0(cj), _gi(cj), 4))})
_register(2, ("eq31_rhs",), _eq31)
_register(3, ("C_norm",), lambda cj: {"C_norm": _norm(T.norm_sq(cj.cotton.truncate(0).value, _gi(cj), 3))})
_register(3, ("gradE_sq",), lambda cj: {"gradE_sq": T.norm_sq(cj.grad_traceless_ricci.truncate(0).value, _gi(cj), 3)})
_register(3, ("gradW_norm",), lambda cj: {"gradW_norm": _norm(T.norm_sq(cj.grad_weyl.truncate(0).value, _gi(cj), 5))})
_register(3, ("divW_resid", "divW_scale"), _div_weyl)
_register(3, ("kato_lhs", "gradE_norm"), _kato)
_register(4, ("B_norm", "bach_defect"), _bach)
_register(4, ("Q",), lambda cj: {"Q": cj.q_curvature.value})
_register(4, ("weyl_resid", "weyl_scale"), _weyl_residual)


# ---------------------------------------------------------------------------
# the survey: cached evaluation on quadrature nodes
# ---------------------------------------------------------------------------


class Survey:
    """Pointwise quantities of one manifold on one grid, computed once each.

    Nodes close to a pole of a polar sphere factor are evaluated in a
    permuted polar chart through the same point (all quantities here are
    invariants); near the poles the original chart loses roughly
    ``eps / sin(x)^k`` to cancellation.  Weights and the volume density
    stay in the original chart.
    """

    def __init__(self, manifold: ChartManifold, grid: GridSpec | None = None, jet_order: int = 4, workers: int = 1):
        self.manifold = manifold
        self.grid = grid or GridSpec.for_manifold(manifold)
        if self.grid.dim != manifold.dim:
            raise VerifyError(f"grid has {self.grid.dim} axes but {manifold.name} has dim {manifold.dim}")
        self.jet_order = jet_order
        self.workers = workers
        self._nodes: dict[frozenset, tuple] = {}
        self._values: dict[tuple, np.ndarray] = {}
        self._groups: dict[frozenset, list] = {}
        self._variants: dict[tuple, object] = {}
        self._pinned: list = []
        # theta values evaluated together by the Lemma 2.2 checks
        self.thetas: tuple[float, ...] = ()

    def pin(self, obj) -> object:
        """A cache key for ``obj``; the survey keeps it alive so ids stay unique."""
        if isinstance(obj, str):
            return obj
        self._pinned.append(obj)
        return id(obj)

    def need_order(self, order: int, what: str) -> None:
        if self.jet_order < order:
            raise GeometryError(f"order exhausted: {what} needs jet order >= {order}, got {self.jet_order}")

    def node_set(self, extra_axes=()) -> tuple[frozenset, np.ndarray, np.ndarray, np.ndarray]:
        axes = frozenset(self.manifold.metric.depends_on) | frozenset(extra_axes)
        if axes not in self._nodes:
            pts, w = self.grid.nodes(axes)
            g = np.moveaxis(self.manifold.metric.values(pts), -1, 0)
            det = np.linalg.det(g)
            if np.any(~(det > 0)):
                k = int(np.flatnonzero(~(det > 0))[0])
                raise GeometryError(f"metric degenerate at node {tuple(pts[k])}")
            self._nodes[axes] = (pts, w, np.sqrt(det))
        return (axes,) + self._nodes[axes]

    def groups(self, axes: frozenset) -> list:
        """[(indices, chart points, variant or None)] covering the node set."""
        if axes not in self._groups:
            pts = self._nodes[axes][0]
            out = []
            for idx, alt, perms in chart_variants(self.manifold, pts):
                var = None
                if perms is not None:
                    if perms not in self._variants:
                        self._variants[perms] = chart_variant(self.manifold, perms)
                    var = self._variants[perms]
                out.append((idx, alt, var))
            self._groups[axes] = out
        return self._groups[axes]

    def _evaluate(self, axes: frozenset, ev) -> dict[str, np.ndarray]:
        """Run ``ev(points, variant)`` group by group and scatter into node order."""
        size = len(self._nodes[axes][0])
        out: dict[str, np.ndarray] = {}
        for idx, alt, var in self.groups(axes):
            part = evaluate_on_grid(lambda p, var=var: ev(p, var), alt, workers=self.workers)
            for k, v in part.items():
                out.setdefault(k, np.empty(size))[idx] = v
        return out

    def metric(self, *names: str) -> dict[str, np.ndarray]:
        """Metric-only quantities on the metric's node set."""
        axes, pts, _, _ = self.node_set()
        missing = [n for n in names if (axes, n) not in self._values]
        by_order: dict[int, list[Callable]] = {}
        for name in missing:
            if name not in QUANTITIES:
                raise VerifyError(f"unknown quantity {name!r}")
            order, fn = QUANTITIES[name]
            self.need_order(order, name)
            if fn not in by_order.setdefault(order, []):
                by_order[order].append(fn)
        for order in sorted(by_order):
            fns = by_order[order]

            def ev(p, var, fns=fns, order=order):
                g = var.metric if var is not None else self.manifold.metric
                cj = CurvatureJets(g, p, order)
                out = {}
                for fn in fns:
                    out.update(fn(cj))
                return out

            for k, v in self._evaluate(axes, ev).items():
                self._values.setdefault((axes, k), v)
        return {n: self._values[(axes, n)] for n in names}

    def custom(self, key: tuple, order: int, fn: Callable, extra_axes=()) -> dict[str, np.ndarray]:
        """Quantities that also depend on a test field; cached under ``key``.

        ``fn(cj, points, variant)`` must pull its field back into
        ``variant`` (raising CatalogError if it cannot, in which case the
        whole node set is evaluated in the original chart).
        """
        axes, pts, _, _ = self.node_set(extra_axes)
        ck = (axes, key)
        if ck not in self._values:
            self.need_order(order, key[0])

            def ev(p, var):
                g = var.metric if var is not None else self.manifold.metric
                return fn(CurvatureJets(g, p, order), p, var)

            try:
                self._values[ck] = self._evaluate(axes, ev)
            except CatalogError:
                self._values[ck] = evaluate_on_grid(lambda p: ev(p, None), pts, workers=self.workers)
        return self._values[ck]

    def integral(self, values: np.ndarray, extra_axes=()) -> float:
        _, _, w, dv = self.node_set(extra_axes)
        return pairwise_sum(w * values * dv)

    def volume(self) -> float:
        return self.integral(np.ones(len(self.node_set()[1])))

    def sup(self, name: str) -> float:
        return float(np.max(self.metric(name)[name], initial=0.0))

    # -- derived facts used as gates ---------------------------------------

    def scalar_stats(self) -> tuple[float, float]:
        """(mean R, max |R - mean R|) over the nodes."""
        R = self.metric("R")["R"]
        mean = self.integral(R) / self.volume()
        return mean, float(np.abs(R - mean).max(initial=0.0))

    def gate(self, scale: float = 1.0) -> float:
        return GATE * max(1.0, abs(scale))

    def constant_scalar(self) -> bool:
        mean, dev = self.scalar_stats()
        return dev <= self.gate(mean)

    def normalized(self) -> bool:
        n = self.manifold.dim
        R = self.metric("R")["R"]
        return float(np.abs(R - n * (n - 1)).max(initial=0.0)) <= self.gate(n * (n - 1))


# ---------------------------------------------------------------------------
# verdict helpers
# ---------------------------------------------------------------------------


class _Run:
    """Bookkeeping shared by every check: timing and the Verdict envelope."""

    def __init__(self, check: str, survey: Survey, tol: float, timing: bool):
        self.check = check
        self.survey = survey
        self.tol = tol
        self.timing = timing
        self.t0 = time.perf_counter()

    def verdict(self, values: dict, status: str) -> Verdict:
        return Verdict(
            check=self.check,
            manifold=self.survey.manifold.name,
            grid=list(self.survey.grid.counts),
            jet_order=self.survey.jet_order,
            values={k: float(v) for k, v in values.items()},
            tol=self.tol,
            status=status,
            seconds=round(time.perf_counter() - self.t0, 3) if self.timing else None,
        )

    def skip(self, reason: str, values: dict | None = None) -> Verdict:
        return self.verdict(values or {}, f"skipped: {reason}")


def _survey(m_or_survey, grid, jet_order, workers=1) -> Survey:
    if isinstance(m_or_survey, Survey):
        return m_or_survey
    return Survey(m_or_survey, grid, jet_order, workers)


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


# ---------------------------------------------------------------------------
# Lemma 2.2, Proposition 2.2
# ---------------------------------------------------------------------------

HField = SymmetricField | str


def _h_jets(h: HField, cj: CurvatureJets, pts: np.ndarray, var, cache: dict):
    if isinstance(h, str):
        if h not in ("E", "traceless_ricci"):
            raise VerifyError(f"unknown named field {h!r}; use 'E' or a SymmetricField")
        return cj.traceless_ricci.truncate(1)
    if h.dim != cj.n:
        raise VerifyError(f"field has dim {h.dim}, manifold has dim {cj.n}")
    key = None if var is None else var.perms
    if key not in cache:
        hv = h if var is None else var.symmetric(h)
        cache[key] = (hv, JetProgram([e for row in hv.components for e in row]))
    hv, program = cache[key]
    return field_jets(hv.components, pts, 1, symmetric=True, program=program)


def lemma22_integrands(cj: CurvatureJets, h_jet, theta: float) -> dict[str, np.ndarray]:
    """Pointwise pieces of Lemma 2.2 for a jet-valued h of order >= 1."""
    out = _lemma_multi(cj, h_jet, (theta,))
    return {k.split("@")[0]: v for k, v in out.items()}


def _lemma_multi(cj: CurvatureJets, h_jet, thetas) -> dict[str, np.ndarray]:
    """Lemma 2.2 integrands for several theta; keys carry an ``@theta`` suffix."""
    n = cj.n
    gi = _gi(cj)
    g = cj.g_at(0).value
    dh = cj.nabla(h_jet, 2).truncate(0).value  # dh[i, j, k] = nabla_i h_jk
    h = h_jet.truncate(0).value
    E = _E0(cj)
    W = _W0(cj)
    lam = cj.lam.truncate(0).value
    grad_sq = T.norm_sq(dh, gi, 3)
    delta = -T.einsum("ij,ijk->k", gi, dh)
    delta_sq = T.norm_sq(delta, gi, 1)
    tr_h = T.trace(h, gi)
    h0 = h - tr_h * g / n
    h0_up = T.raise_all(h0, gi, 2)
    W_hh = T.einsum("jikl,jl,ik->", W, h0_up, h0_up)
    E_dot_h = T.dot(E, h, gi)
    h_up = T.raise_all(h, gi, 2)
    h_mixed = T.einsum("lm,mk->lk", gi, h)  # h^l_k
    E_h2 = T.einsum("il,lk,ik->", E, h_mixed, h_up)  # E_il h^l_k h^ik
    bracket = (
        delta_sq
        + W_hh
        + 2 / (n - 2) * tr_h * E_dot_h
        - n / (n - 2) * E_h2
        - n * lam * T.norm_sq(h0, gi, 2)
    )
    out = {}
    for theta in thetas:
        C_sq = T.norm_sq(dh - theta * np.swapaxes(dh, 0, 1), gi, 3)
        out[f"lhs@{theta!r}"] = grad_sq - C_sq / (1 + theta**2)
        out[f"rhs@{theta!r}"] = 2 * theta / (1 + theta**2) * bracket
        out[f"grad_sq@{theta!r}"] = grad_sq
        out[f"codazzi_sq@{theta!r}"] = C_sq
    return out


def _h_axes(h: HField) -> frozenset:
    return frozenset() if isinstance(h, str) else h.depends_on


def _lemma_values(s: Survey, h: HField, theta: float) -> dict[str, float]:
    """Integrals for one theta; every theta in ``s.thetas`` shares one pass."""
    theta = float(theta)
    thetas = tuple(dict.fromkeys(s.thetas + (theta,)))
    order = 3 if isinstance(h, str) else 2
    cache: dict = {}
    vals = s.custom(
        ("lemma22", s.pin(h), thetas),
        order,
        lambda cj, p, var: _lemma_multi(cj, _h_jets(h, cj, p, var, cache), thetas),
        extra_axes=_h_axes(h),
    )
    ax = _h_axes(h)
    suffix = f"@{theta!r}"
    return {k[: -len(suffix)]: s.integral(v, ax) for k, v in vals.items() if k.endswith(suffix)}


def _scalar_gate(s: Survey, run: _Run, require: bool, values: dict) -> Verdict | None:
    mean, dev = s.scalar_stats()
    values.update(R_mean=mean, scalar_deviation=dev)
    if require and dev > s.gate(mean):
        return run.skip("scalar curvature not constant", values)
    return None


def check_lemma22(
    m, h: HField, theta: float, grid: GridSpec | None = None, tol: float = TOL_INTEGRAL,
    jet_order: int = 4, require_constant_scalar: bool = True, timing: bool = False,
) -> Verdict:
    """Integral identity of Lemma 2.2 for one field h and one theta.

    The lemma assumes constant scalar curvature and the check is gated on
    it.  Passing ``require_constant_scalar=False`` evaluates it anyway with
    the pointwise lambda = R / (n(n-1)); the integration by parts behind the
    lemma never differentiates lambda, so the identity still holds then.
    """
    s = _survey(m, grid, jet_order)
    run = _Run("lemma22", s, tol, timing)
    values: dict = {"theta": theta}
    if s.manifold.dim < 3:
        return run.skip("needs n >= 3", values)
    gated = _scalar_gate(s, run, require_constant_scalar, values)
    if gated:
        return gated
    v = _lemma_values(s, h, theta)
    gap = abs(v["lhs"] - v["rhs"])
    rel = gap / (1 + abs(v["lhs"]) + abs(v["rhs"]))
    values.update(lhs=v["lhs"], rhs=v["rhs"], gap=gap, relative_gap=rel)
    return run.verdict(values, _status(rel <= tol))


def check_prop_codazzi_inequality(
    m, h: HField, theta: float, grid: GridSpec | None = None, tol: float = TOL_INTEGRAL,
    jet_order: int = 4, require_constant_scalar: bool = True, timing: bool = False,
) -> Verdict:
    """Proposition 2.2: int |nabla h|^2 >= (2 theta/(1+theta^2)) int [...]; slack = int |C_theta h|^2/(1+theta^2)."""
    s = _survey(m, grid, jet_order)
    run = _Run("codazzi-ineq", s, tol, timing)
    values: dict = {"theta": theta}
    if s.manifold.dim < 3:
        return run.skip("needs n >= 3", values)
    gated = _scalar_gate(s, run, require_constant_scalar, values)
    if gated:
        return gated
    v = _lemma_values(s, h, theta)
    slack = v["grad_sq"] - v["rhs"]
    codazzi = v["codazzi_sq"] / (1 + theta**2)
    scale = 1 + abs(v["grad_sq"]) + abs(v["rhs"])
    ok = slack >= -tol * scale and abs(slack - codazzi) <= tol * scale
    values.update(grad_sq=v["grad_sq"], rhs=v["rhs"], slack=slack, codazzi_term=codazzi)
    return run.verdict(values, _status(ok))


# ---------------------------------------------------------------------------
# Eq. 3.1, the Weyl equation, Eq. 1.4, Bach consistency, Kato
# ---------------------------------------------------------------------------


def check_eq31(m, grid=None, tol: float = TOL_INTEGRAL, jet_order: int = 4, timing: bool = False) -> Verdict:
    """int |nabla E|^2 = int (2 W(E,E) - n/(n-2) tr E^3 - n |E|^2) on Bach-flat, R = n(n-1)."""
    s = _survey(m, grid, jet_order)
    run = _Run("eq31", s, tol, timing)
    n = s.manifold.dim
    if n < 3:
        return run.skip("needs n >= 3")
    bach_inf = s.sup("B_norm")
    values = {"bach_inf": bach_inf}
    if not s.normalized():
        return run.skip("R != n(n-1)", values)
    if bach_inf > s.gate():
        return run.skip("not Bach-flat", values)
    q = s.metric("gradE_sq", "eq31_rhs")
    lhs = s.integral(q["gradE_sq"])
    rhs = s.integral(q["eq31_rhs"])
    values.update(
        lhs=lhs, rhs=rhs, rhs_integrand_max=float(np.abs(q["eq31_rhs"]).max()), volume=s.volume()
    )
    ok = abs(lhs - rhs) <= tol * (1 + abs(lhs) + abs(rhs))
    return run.verdict(values, _status(ok))


def check_weyl_equation(m, grid=None, tol: float = TOL_POINTWISE, jet_order: int = 4, timing: bool = False) -> Verdict:
    """Lemma 3.4 on Einstein metrics: |Lap W - 2(n-1) lam W - 2 Q(W)| pointwise."""
    s = _survey(m, grid, jet_order)
    run = _Run("weyl-eq", s, tol, timing)
    if s.manifold.dim < 4:
        return run.skip("needs n >= 4")
    mean, _ = s.scalar_stats()
    E_inf = s.sup("E_norm")
    values = {"E_inf": E_inf}
    if E_inf > s.gate(mean):
        return run.skip("not Einstein", values)
    q = s.metric("weyl_resid", "weyl_scale", "gradW_norm")
    resid = float(q["weyl_resid"].max(initial=0.0))
    scale = float(q["weyl_scale"].max(initial=0.0))
    values.update(residual_max=resid, term_scale=scale, grad_W_inf=float(q["gradW_norm"].max(initial=0.0)))
    return run.verdict(values, _status(resid <= tol * max(1.0, scale)))


def check_div_weyl(m, grid=None, tol: float = TOL_POINTWISE, jet_order: int = 4, timing: bool = False) -> Verdict:
    """Eq. 1.4: nabla^l W_ijkl = (n-3) C_ijk, as a pointwise norm maxed over nodes."""
    s = _survey(m, grid, jet_order)
    run = _Run("div-weyl", s, tol, timing)
    if s.manifold.dim < 4:
        return run.skip("needs n >= 4")
    q = s.metric("divW_resid", "divW_scale")
    resid = float(q["divW_resid"].max(initial=0.0))
    scale = float(q["divW_scale"].max(initial=0.0))
    values = {"residual_max": resid, "term_scale": scale}
    return run.verdict(values, _status(resid <= tol * max(1.0, scale)))


def check_bach_consistency(m, grid=None, tol: float = TOL_POINTWISE, jet_order: int = 4, timing: bool = False) -> Verdict:
    """|B - B'|_inf <= tol (1 + |B|_inf), B by definition and B' via Lemma 3.1."""
    s = _survey(m, grid, jet_order)
    run = _Run("bach-consistency", s, tol, timing)
    if s.manifold.dim < 3:
        return run.skip("needs n >= 3")
    q = s.metric("B_norm", "bach_defect")
    B_inf = float(q["B_norm"].max(initial=0.0))
    defect = float(q["bach_defect"].max(initial=0.0))
    values = {"bach_inf": B_inf, "defect_inf": defect}
    return run.verdict(values, _status(defect <= tol * (1 + B_inf)))


def check_kato(m, grid=None, tol: float = TOL_POINTWISE, jet_order: int = 4, timing: bool = False) -> Verdict:
    """|nabla |E|| <= |nabla E| + tol wherever |E| > 1e-6."""
    s = _survey(m, grid, jet_order)
    run = _Run("kato", s, tol, timing)
    if s.manifold.dim < 2:
        return run.skip("needs n >= 2")
    q = s.metric("E_norm", "kato_lhs", "gradE_norm")
    mask = q["E_norm"] > KATO_FLOOR
    excess = q["kato_lhs"][mask] - q["gradE_norm"][mask]
    worst = float(excess.max()) if mask.any() else 0.0
    values = {"points": float(mask.sum()), "max_excess": worst}
    return run.verdict(values, _status(worst <= tol))


# ---------------------------------------------------------------------------
# Gauss-Bonnet-Chern and Sobolev
# ---------------------------------------------------------------------------


def check_gbc(m, grid=None, tol: float = TOL_INTEGRAL, jet_order: int = 4, timing: bool = False) -> Verdict:
    """int (Q + |W|^2 / 4) = 8 pi^2 chi."""
    s = _survey(m, grid, jet_order)
    run = _Run("gbc", s, tol, timing)
    man = s.manifold
    if man.dim != 4:
        return run.skip("Gauss-Bonnet-Chern check is for n = 4")
    if man.chi is None:
        return run.skip("χ unknown")
    q = s.metric("Q", "W_norm")
    int_Q = s.integral(q["Q"])
    int_W = s.integral(q["W_norm"] ** 2)
    total = int_Q + int_W / 4
    target = 8 * math.pi**2 * man.chi
    err = abs(total - target)
    values = {"integral_Q": int_Q, "integral_W_sq": int_W, "total": total, "target": target, "error": err}
    return run.verdict(values, _status(err <= tol * (1 + abs(target))))


def _sobolev_integrands(cj: CurvatureJets, u_jet) -> dict[str, np.ndarray]:
    n = cj.n
    gi = _gi(cj)
    du = u_jet.gradient().value
    return {
        "u": u_jet.value,
        "grad_sq": T.einsum("ab,a,b->", gi, du, du),
        "R": cj.scalar.truncate(0).value,
    }


def check_sobolev(
    m, alpha0: float | None, u: ScalarField | None = None, grid=None, tol: float = TOL_INTEGRAL,
    jet_order: int = 4, timing: bool = False,
) -> Verdict:
    """Inequality (4.1) for one trial u, plus the Yamabe quotient of u."""
    s = _survey(m, grid, jet_order)
    run = _Run("sobolev", s, tol, timing)
    man = s.manifold
    n = man.dim
    if alpha0 is None:
        return run.skip("alpha0 not given")
    if n < 3:
        return run.skip("needs n >= 3")
    if not s.normalized():
        return run.skip("R != n(n-1)")
    if u is None:
        u = ScalarField(n, Num(1.0), None)
    programs: dict = {}

    def integrands(cj, p, var):
        key = None if var is None else var.perms
        if key not in programs:
            uv = u if var is None or not u.depends_on else var.scalar(u)
            programs[key] = JetProgram([uv.expression])
        return _sobolev_integrands(cj, programs[key].jets(p, 1)[0])

    vals = s.custom(("sobolev", s.pin(u)), 2, integrands, extra_axes=u.depends_on)
    ax = u.depends_on
    if not np.any(vals["u"] != 0):
        raise VerifyError("trial function u vanishes identically")
    p = 2 * n / (n - 2)
    norm_p = s.integral(np.abs(vals["u"]) ** p, ax) ** (2 / p)
    energy = s.integral(vals["grad_sq"] + vals["u"] ** 2, ax)
    k = gap_constants(n, alpha0)
    lhs, rhs = norm_p, k.C_S * energy
    a = 4 * (n - 1) / (n - 2)
    quotient = s.integral(a * vals["grad_sq"] + vals["R"] * vals["u"] ** 2, ax) / norm_p
    values = {"lhs": lhs, "rhs": rhs, "C_S": k.C_S, "yamabe_quotient": quotient}
    yam = man.known.get("yamabe")
    if yam is not None:
        values["alpha0_exceeds_yamabe"] = float(alpha0 > yam * (1 + 1e-12))
    return run.verdict(values, _status(lhs <= rhs + tol))


# ---------------------------------------------------------------------------
# theorem consistency
# ---------------------------------------------------------------------------


def _theorem_common(s: Survey, values: dict) -> tuple[bool, bool]:
    """Record the shared hypotheses; returns (normalized, bach_flat)."""
    n = s.manifold.dim
    mean, dev = s.scalar_stats()
    bach_inf = s.sup("B_norm")
    normalized = s.normalized()
    bach_flat = bach_inf <= s.gate()
    values.update(
        R_mean=mean,
        scalar_deviation=dev,
        normalization_residual=abs(mean - n * (n - 1)),
        bach_inf=bach_inf,
        normalized=float(normalized),
        bach_flat=float(bach_flat),
    )
    return normalized, bach_flat


def check_theorem_A(m, grid=None, tol: float = TOL_POINTWISE, jet_order: int = 4, timing: bool = False) -> Verdict:
    s = _survey(m, grid, jet_order)
    run = _Run("thmA", s, tol, timing)
    n = s.manifold.dim
    if n < 3:
        return run.skip("needs n >= 3")
    values: dict = {}
    normalized, bach_flat = _theorem_common(s, values)
    W_inf, E_inf = s.sup("W_norm"), s.sup("E_norm")
    eps0 = (n - 1) / 4
    gap = W_inf + E_inf
    met = normalized and bach_flat and gap < eps0
    spherical = gap <= tol
    consistent = (not met) or spherical
    values.update(
        W_inf=W_inf, E_inf=E_inf, s=gap, eps0=eps0,
        hypotheses_met=float(met), spherical=float(spherical), consistent=float(consistent),
    )
    return run.verdict(values, _status(consistent))


def check_theorem_B(m, alpha0: float | None, grid=None, tol: float = TOL_POINTWISE, jet_order: int = 4, timing: bool = False) -> Verdict:
    s = _survey(m, grid, jet_order)
    run = _Run("thmB", s, tol, timing)
    man = s.manifold
    n = man.dim
    if alpha0 is None:
        return run.skip("alpha0 not given")
    if not alpha0 > 0:
        raise VerifyError("alpha0 must be positive")
    if n < 3:
        return run.skip("needs n >= 3")
    k = gap_constants(n, alpha0)
    values: dict = {"alpha0": alpha0}
    normalized, bach_flat = _theorem_common(s, values)
    q = s.metric("W_norm", "E_norm")
    p = n / 2
    W_p = max(s.integral(q["W_norm"] ** p), 0.0) ** (1 / p)
    E_p = max(s.integral(q["E_norm"] ** p), 0.0) ** (1 / p)
    gap = W_p + E_p
    yam = man.known.get("yamabe")
    admissible = yam is None or alpha0 <= yam * (1 + 1e-12)
    met = normalized and bach_flat and admissible and gap < k.tau0
    W_inf, E_inf = s.sup("W_norm"), s.sup("E_norm")
    spherical = W_inf + E_inf <= tol
    # Lemma 4.1: same hypotheses with s < delta0 force Einstein
    lemma41_met = normalized and bach_flat and admissible and gap < k.delta0
    lemma41_ok = (not lemma41_met) or E_inf <= tol
    consistent = ((not met) or spherical) and lemma41_ok
    values.update(
        W_Lp=W_p, E_Lp=E_p, s=gap, tau0=k.tau0, delta0=k.delta0,
        alpha0_admissible=float(admissible), hypotheses_met=float(met),
        lemma41_hypotheses_met=float(lemma41_met), spherical=float(spherical), consistent=float(consistent),
    )
    return run.verdict(values, _status(consistent))


def check_theorem_C(m, alpha0: float | None, grid=None, tol: float = TOL_POINTWISE, jet_order: int = 4, timing: bool = False) -> Verdict:
    s = _survey(m, grid, jet_order)
    run = _Run("thmC", s, tol, timing)
    man = s.manifold
    if man.dim != 4:
        return run.skip("Theorem C is for n = 4")
    if alpha0 is None:
        return run.skip("alpha0 not given")
    if not alpha0 > 0:
        raise VerifyError("alpha0 must be positive")
    if man.chi is None:
        return run.skip("χ unknown")
    k = gap_constants(4, alpha0, man.chi)
    bach_inf = s.sup("B_norm")
    bach_flat = bach_inf <= s.gate()
    q = s.metric("W_norm", "E_norm")
    W_sq = s.integral(q["W_norm"] ** 2)
    E_sq = s.integral(q["E_norm"] ** 2)
    yam = man.known.get("yamabe")
    admissible = yam is None or alpha0 <= yam * (1 + 1e-12)
    met = bach_flat and admissible and W_sq < k.theoremC_threshold
    # the conformal conclusion is checkable only on an already normalized entry
    checkable = s.normalized() and s.constant_scalar()
    W_inf = s.sup("W_norm")
    conformally_spherical = W_inf <= tol
    consistent = (not met) or (not checkable) or conformally_spherical
    values = {
        "alpha0": alpha0,
        "bach_inf": bach_inf,
        "bach_flat": float(bach_flat),
        "integral_W_sq": W_sq,
        "integral_E_sq": E_sq,
        "threshold": k.theoremC_threshold,
        # the proof bounds the squared sum by alpha0/128; Theorem B takes the unsquared sum
        "W_sq_plus_E_sq": W_sq + E_sq,
        "alpha0_over_128": alpha0 / 128,
        "alpha0_admissible": float(admissible),
        "hypotheses_met": float(met),
        "conclusion_checkable": float(checkable),
        "consistent": float(consistent),
    }
    return run.verdict(values, _status(consistent))


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------


@dataclass
class CheckOptions:
    thetas: tuple[float, ...] = (-1.0, 1.0, 2.0)
    alpha0: float | None = None
    seed: int = 0
    tol_integral: float = TOL_INTEGRAL
    tol_pointwise: float = TOL_POINTWISE
    timing: bool = False
    extra: dict = field(default_factory=dict)


def run_checks(m: ChartManifold, ids, grid: GridSpec | None = None, jet_order: int = 4,
               options: CheckOptions | None = None, workers: int = 1) -> list[Verdict]:
    """Run the named checks (``"all"`` expands to every id) on one manifold."""
    opt = options or CheckOptions()
    ids = list(CHECK_IDS) if "all" in ids else list(ids)
    bad = [c for c in ids if c not in CHECK_IDS]
    if bad:
        raise VerifyError(f"unknown check id {bad[0]!r}; valid: {', '.join(CHECK_IDS + ('all',))}")
    s = Survey(m, grid, jet_order, workers)
    s.thetas = tuple(float(t) for t in opt.thetas)
    ti, tp, tm = opt.tol_integral, opt.tol_pointwise, opt.timing
    out: list[Verdict] = []
    h = None
    for cid in ids:
        if cid in ("lemma22", "codazzi-ineq"):
            if h is None and m.dim >= 3:
                h = random_symmetric_field(m, opt.seed)
            fn = check_lemma22 if cid == "lemma22" else check_prop_codazzi_inequality
            for th in opt.thetas:
                out.append(_guard(cid, s, ti, tm, lambda: fn(s, h, th, tol=ti, timing=tm)))
        elif cid == "sobolev":
            trials = [None, random_scalar_field(m, opt.seed)]
            for u in trials:
                out.append(_guard(cid, s, ti, tm, lambda: check_sobolev(s, opt.alpha0, u, tol=ti, timing=tm)))
        else:
            fn, tol = {
                "eq31": (check_eq31, ti),
                "weyl-eq": (check_weyl_equation, tp),
                "div-weyl": (check_div_weyl, tp),
                "bach-consistency": (check_bach_consistency, tp),
                "gbc": (check_gbc, ti),
                "kato": (check_kato, tp),
                "thmA": (check_theorem_A, tp),
                "thmB": (lambda s_, **kw: check_theorem_B(s_, opt.alpha0, **kw), tp),
                "thmC": (lambda s_, **kw: check_theorem_C(s_, opt.alpha0, **kw), tp),
            }[cid]
            out.append(_guard(cid, s, tol, tm, lambda: fn(s, tol=tol, timing=tm)))
    return out


def _guard(cid: str, s: Survey, tol: float, timing: bool, thunk) -> Verdict:
    """Order exhaustion becomes a skipped verdict instead of aborting the suite."""
    try:
        return thunk()
    except GeometryError as exc:
        if "order exhausted" in str(exc) or "defined for n" in str(exc):
            return _Run(cid, s, tol, timing).skip(str(exc))
        raise
