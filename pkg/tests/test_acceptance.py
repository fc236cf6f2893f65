"""
Acceptance criteria, one test per criterion.

Each test records a single PASS/FAIL line; the lines are printed together
in the pytest terminal summary (see conftest.py).  Tolerances are pinned
below exactly as the criteria state them.  These run on the full default
grids and take several minutes in total.
"""

import contextlib
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from curvgap import tensor as T
from curvgap.catalog import (
    CATALOG,
    build_catalog_entry,
    product,
    random_scalar_field,
    random_symmetric_field,
    round_sphere,
)
from curvgap.geometry import CurvatureJets
from curvgap.jets import multi_indices
from curvgap.verify import (
    Survey,
    check_bach_consistency,
    check_eq31,
    check_gbc,
    check_kato,
    check_lemma22,
    check_prop_codazzi_inequality,
    check_sobolev,
    check_theorem_A,
    check_theorem_B,
    check_theorem_C,
    check_weyl_equation,
    gap_constants,
)
from test_verify import torus_h

pytestmark = pytest.mark.slow

YAMABE_S4 = 8 * math.sqrt(6) * math.pi

TOL_BACH = 1e-8           # 1: |B_def - B_lemma|_inf <= 1e-8 (1 + |B|_inf)
TOL_DIVW = 1e-8           # 2: componentwise
TOL_VANISH = 1e-9         # 3
TOL_LEMMA_CLOSED = 1e-9   # 4: absolute
TOL_LEMMA_REL = 1e-6      # 5: relative gap
TOL_SLACK = 1e-9          # 5
TOL_WEYL_EQ = 1e-6        # 6: pointwise residual
TOL_GRAD_W = 1e-8         # 6
TOL_EQ31 = 1e-8           # 7: times Vol for the integral, pointwise for the integrand
TOL_GBC_REL = 1e-6        # 8
TOL_GBC_ABS = 1e-8        # 8: zero targets
TOL_ARITH = 1e-12         # 9
TOL_NORM_INF = 1e-6       # 10
TOL_SOBOLEV_PRINT = 5e-5  # 11: the stated lhs/rhs are rounded to 4 decimals
TOL_KATO = 1e-8           # 12
KATO_FLOOR = 1e-6         # 12
TOL_FD_REL = 1e-6         # 12

RESULTS: list[str] = []
DETAILS: dict[int, list[str]] = {}


class Criterion:
    def __init__(self, number, title):
        self.number, self.title = number, title
        self.failures: list[str] = []
        self.notes: list[str] = []

    def check(self, label, ok, detail=""):
        text = f"{label}: {detail}" if detail else label
        (self.notes if ok else self.failures).append(text)
        return ok


@contextlib.contextmanager
def criterion(number, title):
    c = Criterion(number, title)
    try:
        yield c
    except Exception as exc:  # recorded, then re-raised
        c.failures.append(f"error {type(exc).__name__}: {exc}")
        raise
    finally:
        status = "PASS" if not c.failures else "FAIL"
        detail = "; ".join(c.failures) if c.failures else f"{len(c.notes)} sub-checks"
        RESULTS.append(f"criterion {number:>2} {status}  {title}  [{detail}]")
        DETAILS[number] = c.notes + [f"FAILED {f}" for f in c.failures]
    assert not c.failures, "; ".join(c.failures)


_SURVEYS: dict = {}


def survey(selector, jet_order=4):
    key = (selector, jet_order)
    if key not in _SURVEYS:
        _SURVEYS[key] = Survey(build_catalog_entry(selector), None, jet_order)
    return _SURVEYS[key]


IDENTITY_ENTRIES = ["s4", "s5", "t4", "s2xs2", "s1xs3", "perturbed(s4,7,0.1)"]


def test_criterion_01_bach_cross_formula():
    with criterion(1, "Bach definition vs Lemma 3.1 form") as c:
        for sel in IDENTITY_ENTRIES:
            v = check_bach_consistency(survey(sel), tol=TOL_BACH)
            B, d = v.values["bach_inf"], v.values["defect_inf"]
            c.check(sel, d <= TOL_BACH * (1 + B), f"defect {d:.2e}, |B|inf {B:.2e}")


def _div_weyl_components(cj, p, var):
    d = cj.weyl_divergence.value
    rhs = (cj.n - 3) * cj.cotton.truncate(0).value
    return {"c": np.abs(d - rhs).reshape(-1, d.shape[-1]).max(axis=0)}


def test_criterion_02_divergence_of_weyl():
    with criterion(2, "div W = (n-3) C componentwise") as c:
        for sel in IDENTITY_ENTRIES:
            s = survey(sel)
            if s.manifold.dim < 4:
                continue
            r = float(s.custom(("divW-components",), 3, _div_weyl_components)["c"].max())
            c.check(sel, r <= TOL_DIVW, f"max |component| {r:.2e}")


def test_criterion_03_vanishing():
    with criterion(3, "B, W, C vanish where they must") as c:
        for sel in ["s3", "s4", "s5", "s2xs2"]:
            b = survey(sel).sup("B_norm")
            c.check(f"{sel} B", b <= TOL_VANISH, f"{b:.2e}")
        for sel in ["t4", "s1xs3"]:
            s = survey(sel)
            for q in ("W_norm", "C_norm", "B_norm"):
                v = s.sup(q)
                c.check(f"{sel} {q}", v <= TOL_VANISH, f"{v:.2e}")


def test_criterion_04_lemma_closed_form():
    with criterion(4, "Lemma 2.2 on T^4 with h_12 = sin x1") as c:
        s = survey("t4")
        h = torus_h()
        for th in (-1.0, 1.0, 2.0):
            v = check_lemma22(s, h, th)
            expect = th / (1 + th**2) * (2 * math.pi) ** 4
            for side in ("lhs", "rhs"):
                err = abs(v.values[side] - expect)
                c.check(f"theta={th} {side}", err <= TOL_LEMMA_CLOSED, f"err {err:.2e}")
        c.check("theta=1 value", abs(0.5 * (2 * math.pi) ** 4 - 779.2727) < 1e-4)


def test_criterion_05_lemma_generic():
    thetas = (-1.0, 0.5, 1.0, 2.0)
    with criterion(5, "Lemma 2.2 / Prop 2.2 with seeded random h") as c:
        for sel in ["perturbed(s4,7,0.1)", "perturbed(t4,7,0.1)"]:
            s = survey(sel)
            s.thetas = thetas
            for seed in (0, 1, 2):
                h = random_symmetric_field(s.manifold, seed)
                for th in thetas:
                    v = check_lemma22(s, h, th, require_constant_scalar=False, tol=TOL_LEMMA_REL)
                    rel = v.values["relative_gap"]
                    c.check(f"{sel} seed {seed} theta {th}", rel <= TOL_LEMMA_REL, f"rel gap {rel:.2e}")
                    w = check_prop_codazzi_inequality(s, h, th, require_constant_scalar=False, tol=TOL_LEMMA_REL)
                    c.check(f"{sel} seed {seed} theta {th} slack", w.values["slack"] >= -TOL_SLACK,
                            f"slack {w.values['slack']:.3e}")
        s = survey("scaled(s1xs3,1/2)")
        w = check_prop_codazzi_inequality(s, "E", 1.0)
        c.check("scaled s1xs3 h=E slack", abs(w.values["slack"]) <= TOL_SLACK, f"slack {w.values['slack']:.2e}")


def test_criterion_06_weyl_equation():
    with criterion(6, "Weyl equation on Einstein products") as c:
        s = survey("scaled(s2xs2,1/3)", jet_order=6)
        v = check_weyl_equation(s, tol=TOL_WEYL_EQ, jet_order=6)
        c.check("scaled s2xs2 residual", v.passed and v.values["residual_max"] <= TOL_WEYL_EQ,
                f"{v.values.get('residual_max', float('nan')):.2e}")
        c.check("scaled s2xs2 |grad W|inf", v.values["grad_W_inf"] <= TOL_GRAD_W, f"{v.values['grad_W_inf']:.2e}")
        # the same sign choice on an Einstein S^3 x S^2 (radius sqrt 2 on S^3 gives Ric = g)
        m = product(round_sphere(3, math.sqrt(2)), round_sphere(2), name="s3xs2")
        v = check_weyl_equation(Survey(m, None, 6), tol=TOL_WEYL_EQ, jet_order=6)
        c.check("s3xs2 residual", v.passed, f"{v.values.get('residual_max', float('nan')):.2e} ({v.status})")


def test_criterion_07_eq31():
    with criterion(7, "Eq. 3.1 on scaled S^1 x S^3") as c:
        v = check_eq31(survey("scaled(s1xs3,1/2)"))
        vol = v.values["volume"]
        c.check("integral", abs(v.values["lhs"]) <= TOL_EQ31 * vol, f"{v.values['lhs']:.2e}")
        c.check("rhs integrand", v.values["rhs_integrand_max"] <= TOL_EQ31, f"{v.values['rhs_integrand_max']:.2e}")


def test_criterion_08_gauss_bonnet_chern():
    with criterion(8, "Gauss-Bonnet-Chern") as c:
        for sel, target in [("s4", 16 * math.pi**2), ("t4", 0.0), ("s1xs3", 0.0), ("s2xs2", 32 * math.pi**2)]:
            v = check_gbc(survey(sel))
            total = v.values["total"]
            ok = abs(total) <= TOL_GBC_ABS if target == 0 else abs(total - target) <= TOL_GBC_REL * target
            c.check(sel, ok, f"{total:.12g} vs {target:.12g}")


def test_criterion_09_threshold_arithmetic():
    with criterion(9, "gap constants") as c:
        for a in (1.0, YAMABE_S4, 61.0):
            k = gap_constants(4, a, 2)
            for name, got, want in [("eps0", k.eps0, 0.75), ("Lambda_4", k.Lambda_n, 4 / 3), ("tau0", k.tau0, a / 128),
                                    ("delta0", k.delta0, a / 48), ("C_S", k.C_S, 16 / a),
                                    ("thmC threshold", k.theoremC_threshold, a / 192)]:
                c.check(f"{name}({a:.4g})", abs(got - want) <= TOL_ARITH * max(1.0, abs(want)))


def _theorems(s, alpha0):
    return [check_theorem_A(s), check_theorem_B(s, alpha0), check_theorem_C(s, alpha0)]


def test_criterion_10_theorem_consistency():
    with criterion(10, "theorem consistency") as c:
        for v in _theorems(survey("s4"), YAMABE_S4):
            c.check(f"s4 {v.check}", v.values["hypotheses_met"] == 1.0 and v.values["consistent"] == 1.0)
        s = survey("scaled(s2xs2,1/3)")
        W = s.sup("W_norm")
        c.check("scaled s2xs2 |W|inf", abs(W - 4 * math.sqrt(3)) <= TOL_NORM_INF, f"{W:.10f}")
        for v in _theorems(s, YAMABE_S4):
            c.check(f"scaled s2xs2 {v.check}", v.values["hypotheses_met"] == 0.0 and v.values["consistent"] == 1.0)
        s = survey("scaled(s1xs3,1/2)")
        E = s.sup("E_norm")
        c.check("scaled s1xs3 |E|inf", abs(E - 2 * math.sqrt(3)) <= TOL_NORM_INF, f"{E:.10f}")
        for v in _theorems(s, YAMABE_S4):
            c.check(f"scaled s1xs3 {v.check}", v.values["hypotheses_met"] == 0.0 and v.values["consistent"] == 1.0)
        for key in CATALOG:
            for alpha0 in (YAMABE_S4, 61.0):
                for v in _theorems(survey(key), alpha0):
                    if not v.skipped:
                        c.check(f"{key} {v.check} alpha0={alpha0:.4g}", v.values["consistent"] == 1.0)


def test_criterion_11_sobolev():
    with criterion(11, "Sobolev inequality on unit S^4") as c:
        s = survey("s4")
        v = check_sobolev(s, YAMABE_S4)
        c.check("u=1 lhs", abs(v.values["lhs"] - 5.1302) <= TOL_SOBOLEV_PRINT, f"{v.values['lhs']:.6f}")
        exact_rhs = 16 / YAMABE_S4 * 8 * math.pi**2 / 3
        c.check("u=1 rhs vs C_S*Vol", abs(v.values["rhs"] - exact_rhs) <= TOL_SOBOLEV_PRINT, f"{v.values['rhs']:.6f} vs {exact_rhs:.6f}")
        # the stated 6.8410 disagrees with C_S*Vol = 6.840266; kept as stated, see the ledger
        c.check("u=1 rhs", abs(v.values["rhs"] - 6.8410) <= TOL_SOBOLEV_PRINT, f"{v.values['rhs']:.6f}")
        c.check("u=1 pass", v.passed)
        for seed in range(10):
            v = check_sobolev(s, YAMABE_S4, random_scalar_field(s.manifold, seed))
            c.check(f"trial u seed {seed}", v.passed, f"lhs {v.values['lhs']:.4f} rhs {v.values['rhs']:.4f}")


def _stencil(order, half=4, h=0.05):
    offsets = np.arange(-half, half + 1)
    V = np.vander(offsets.astype(float), increasing=True).T
    rhs = np.zeros(len(offsets))
    rhs[order] = math.factorial(order)
    return offsets * h, np.linalg.solve(V, rhs) / h**order


def _fd_partial(metric, p, alpha):
    axes = [(k, a) for k, a in enumerate(alpha) if a]
    rules = [_stencil(a) for _, a in axes]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wts = np.ones(grids[0].shape)
    for slot, r in enumerate(rules):
        shape = [1] * len(rules)
        shape[slot] = -1
        wts = wts * r[1].reshape(shape)
    pts = np.tile(p, (grids[0].size, 1))
    for slot, (k, _) in enumerate(axes):
        pts[:, k] += grids[slot].ravel()
    vals = metric.values(pts)
    return np.tensordot(vals, wts.ravel(), axes=([2], [0]))


def test_criterion_12_property_suites():
    rng = np.random.default_rng(12)
    with criterion(12, "cube-trace bound, Kato, jets vs finite differences") as c:
        for n in (3, 4, 5):
            A = rng.standard_normal((n, n, 100_000))
            A = A + A.swapaxes(0, 1)
            tr = np.einsum("iib->b", A) / n
            A = A - np.eye(n)[..., None] * tr
            I = np.broadcast_to(np.eye(n)[..., None], A.shape)
            cube = T.cube_trace(A, I)
            norm = np.sqrt(T.norm_sq(A, I, 2))
            worst = float(np.min(cube + norm**3))
            c.check(f"tr E^3 >= -|E|^3 n={n}", worst >= 0, f"min margin {worst:.3e}")
        v = check_kato(survey("perturbed(s1xs3,3,0.1)"), tol=TOL_KATO)
        c.check("Kato on perturbed s1xs3", v.passed and v.values["points"] > 0,
                f"{int(v.values['points'])} nodes, max excess {v.values['max_excess']:.2e}")
        worst = 0.0
        for key in CATALOG:
            m = CATALOG[key]()
            pts = [np.array([ax.lo + f * ax.length for ax in m.axes]) for f in (0.31, 0.47, 0.73)]
            for p in pts:
                jet = m.metric.jets(p[None, :], 4)
                for alpha in multi_indices(m.dim, 4)[1:]:
                    fd = _fd_partial(m.metric, p, alpha)
                    exact = jet.partial_value(alpha)[..., 0]
                    err = np.abs(exact - fd) / np.maximum(np.abs(exact), 1.0)
                    worst = max(worst, float(err.max()))
        c.check("jets vs finite differences, orders 1-4", worst <= TOL_FD_REL, f"worst relative {worst:.2e}")


def test_criterion_13_determinism():
    with criterion(13, "byte-identical JSON across runs and worker counts") as c:
        base = [sys.executable, "-m", "curvgap", "verify", "all", "--manifold", "s4",
                "--alpha0", "8*sqrt(6)*pi", "--format", "json"]
        runs = [subprocess.run(base + ["--workers", str(w)], capture_output=True, text=True, timeout=900)
                for w in (1, 2)]
        c.check("exit codes 0", all(r.returncode == 0 for r in runs), str([r.returncode for r in runs]))
        c.check("identical bytes", runs[0].stdout == runs[1].stdout and len(runs[0].stdout) > 0)
        data = json.loads(runs[0].stdout)
        c.check("round-trip", json.dumps(data, indent=2) + "\n" == runs[0].stdout)
        c.check("no failures", not any(d["status"] == "fail" for d in data))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
