import math

import numpy as np
import pytest
import sympy as sp

from curvgap import tensor as T
from curvgap.catalog import flat_torus, perturbed, round_sphere, scaled
from curvgap.expr import Num, mul, parse
from curvgap.geometry import (
    CurvatureJets,
    GeometryError,
    MetricField,
    christoffel,
    curvature_frame,
    field_jets,
    riemann,
    weyl_quadratic,
)

INTERIOR = {
    "s3": [1.0, 2.0, 0.7],
    "s4": [1.0, 1.2, 2.0, 0.4],
    "s5": [1.1, 0.9, 1.9, 1.3, 5.0],
    "t4": [0.3, 1.0, 4.0, 6.0],
    "s2xs2": [0.9, 1.0, 2.1, 3.3],
    "s1xs3": [0.3, 1.0, 2.1, 3.3],
}


def at(m, key_or_point, order=4):
    p = INTERIOR[key_or_point] if isinstance(key_or_point, str) else key_or_point
    return CurvatureJets(m.metric, np.array(p, dtype=float), order)


def inv0(cj):
    return np.linalg.inv(cj.g.value[..., 0])


def norm0(cj, jet, rank):
    return math.sqrt(max(float(T.norm_sq(jet.value[..., 0], inv0(cj), rank)), 0.0))


# an asymmetric 3-metric with every component varying, for the symbolic oracle
OFFDIAG_METRIC = [["2 + sin(x1)*cos(x2)"], ["0.3*sin(x3)", "1.5 + 0.2*cos(x1 + x3)"],
                  ["0.1*x1*x2", "0.2*cos(x2)", "1 + 0.5*x3^2"]]


def symbolic_curvature(rows, point):
    n = len(rows)
    xs = sp.symbols(f"x1:{n + 1}")
    names = {f"x{k + 1}": xs[k] for k in range(n)}
    g = sp.zeros(n, n)
    for i, row in enumerate(rows):
        for j, txt in enumerate(row):
            g[i, j] = g[j, i] = sp.sympify(txt.replace("^", "**"), locals=names)
    gi = g.inv()
    first = [[[sp.Rational(1, 2) * (sp.diff(g[l, j], xs[k]) + sp.diff(g[l, k], xs[j]) - sp.diff(g[j, k], xs[l]))
               for k in range(n)] for j in range(n)] for l in range(n)]
    second = [[[sum(gi[m, l] * first[l][j][k] for l in range(n)) for k in range(n)] for j in range(n)] for m in range(n)]
    subs = dict(zip(xs, point))
    G = np.array([[[float(second[m][j][k].subs(subs)) for k in range(n)] for j in range(n)] for m in range(n)])
    Rm = np.zeros((n,) * 4)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    e = sp.diff(first[l][j][k], xs[i]) - sp.diff(first[l][i][k], xs[j])
                    e -= sum(first[m][i][l] * second[m][j][k] - first[m][j][l] * second[m][i][k] for m in range(n))
                    Rm[i, j, k, l] = float(e.subs(subs))
    return G, Rm


def metric_from_rows(rows):
    n = len(rows)
    return MetricField(n, tuple(tuple(parse(t, n) for t in row) for row in rows))


class TestConnection:
    def test_flat_torus(self):
        assert np.abs(christoffel(flat_torus(4).metric, np.array([0.1, 0.2, 0.3, 0.4]))).max() == 0.0

    def test_sphere_component(self):
        G = christoffel(round_sphere(2).metric, np.array([math.pi / 3, 1.0]))
        assert G[0, 1, 1] == pytest.approx(-math.sqrt(3) / 4, abs=1e-15)

    def test_scale_invariance(self):
        p = np.array([0.8, 1.7, 2.9])
        assert np.allclose(christoffel(scaled(round_sphere(3), 7.0).metric, p),
                           christoffel(round_sphere(3).metric, p), atol=1e-14)

    def test_symbolic_oracle(self):
        p = (0.4, -0.7, 0.9)
        G, Rm = symbolic_curvature(OFFDIAG_METRIC, p)
        g = metric_from_rows(OFFDIAG_METRIC)
        assert np.allclose(christoffel(g, np.array(p)), G, atol=1e-13)
        assert np.allclose(riemann(g, np.array(p)), Rm, atol=1e-12)


class TestRicciScalar:
    def test_flat(self):
        cj = at(flat_torus(4), "t4")
        assert np.abs(cj.riemann.value).max() == 0.0

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_unit_sphere(self, n):
        p = np.linspace(0.8, 1.6, n)
        cj = CurvatureJets(round_sphere(n).metric, p, 2)
        assert np.allclose(cj.ricci.value[..., 0], (n - 1) * cj.g.value[..., 0], atol=1e-11)
        assert float(cj.scalar.value[0]) == pytest.approx(n * (n - 1), abs=1e-11)

    def test_s2xs2(self, entry):
        cj = at(entry("s2xs2"), "s2xs2", 2)
        assert np.allclose(cj.ricci.value[..., 0], cj.g.value[..., 0], atol=1e-12)
        assert float(cj.scalar.value[0]) == pytest.approx(4.0)


class TestConformalPieces:
    def test_unit_s4(self, entry):
        m = entry("s4")
        cj = at(m, "s4")
        for name, rank in (("traceless_ricci", 2), ("weyl", 4), ("cotton", 3), ("bach", 2)):
            assert norm0(cj, getattr(cj, name), rank) < 1e-10
        assert float(cj.q_curvature.value[0]) == pytest.approx(6.0, abs=1e-10)

    def test_unit_s1xs3(self, entry):
        cj = at(entry("s1xs3"), "s1xs3")
        assert norm0(cj, cj.weyl, 4) < 1e-11
        assert norm0(cj, cj.cotton, 3) < 1e-11
        assert norm0(cj, cj.bach, 2) < 1e-10
        assert float(T.norm_sq(cj.traceless_ricci.value[..., 0], inv0(cj), 2)) == pytest.approx(3.0)
        assert float(cj.q_curvature.value[0]) == pytest.approx(0.0, abs=1e-10)

    def test_unit_s2xs2(self, entry):
        cj = at(entry("s2xs2"), "s2xs2")
        assert norm0(cj, cj.bach, 2) < 1e-10
        assert float(cj.q_curvature.value[0]) == pytest.approx(2 / 3, abs=1e-10)

    def test_weyl_is_totally_traceless(self, entry):
        cj = at(perturbed(entry("s4"), 7, 0.1), "s4", 2)
        W = cj.weyl.value[..., 0]
        gi = inv0(cj)
        assert np.abs(np.einsum("il,ijkl->jk", gi, W)).max() < 1e-12
        assert np.abs(W + W.swapaxes(0, 1)).max() < 1e-12

    def test_frame_needs_n3(self):
        with pytest.raises(GeometryError):
            curvature_frame(round_sphere(2).metric, np.array([1.0, 1.0]))

    def test_order_exhausted(self, entry):
        with pytest.raises(GeometryError, match="order exhausted"):
            at(entry("s4"), "s4", 3).bach

    def test_q_needs_dim4(self):
        with pytest.raises(GeometryError):
            at(round_sphere(5), "s5").q_curvature

    def test_frame_batch(self, entry):
        pts = np.array([INTERIOR["s4"], [1.3, 0.6, 1.1, 5.0]])
        fr = curvature_frame(entry("s4").metric, pts)
        assert fr.scalar.shape == (2,)
        assert np.allclose(fr.q, 6.0)


class TestCovariant:
    @pytest.mark.parametrize("key", ["s4", "s2xs2", "s1xs3", "t4"])
    def test_metric_compatibility(self, entry, key):
        cj = at(entry(key), key, 3)
        assert np.abs(cj.nabla(cj.g.truncate(2), 2).value).max() < 1e-11

    def test_parallel_ricci_s1xs3(self, entry):
        cj = at(entry("s1xs3"), "s1xs3", 3)
        assert np.abs(cj.grad_traceless_ricci.value).max() < 1e-11

    def torus_h(self, p, order=2):
        h = ((Num(0.0),), (parse("sin(x1)"), Num(0.0)), (Num(0.0),) * 3, (Num(0.0),) * 4)
        return field_jets(h, np.atleast_2d(p), order, symmetric=True)

    def test_torus_nabla_is_partial(self):
        p = np.array([0.3, 1.0, 4.0, 6.0])
        cj = CurvatureJets(flat_torus(4).metric, p[None, :], 2)
        h = self.torus_h(p)
        assert np.allclose(cj.nabla(h, 2).value, h.gradient().value, atol=0)

    def test_torus_divergence(self):
        p = np.array([0.3, 1.0, 4.0, 6.0])
        cj = CurvatureJets(flat_torus(4).metric, p[None, :], 2)
        d = cj.divergence_delta(self.torus_h(p)).value[:, 0]
        assert d[1] == pytest.approx(-math.cos(0.3))
        assert abs(d[0]) + abs(d[2]) + abs(d[3]) == 0.0

    def test_torus_theta_codazzi(self):
        p = np.array([0.3, 1.0, 4.0, 6.0])
        cj = CurvatureJets(flat_torus(4).metric, p[None, :], 2)
        C = cj.theta_codazzi(self.torus_h(p), 2.0).value[..., 0]
        assert float(np.sum(C**2)) == pytest.approx(6 * math.cos(0.3) ** 2, rel=1e-14)

    @pytest.mark.parametrize("key", ["s4", "s2xs2", "s1xs3"])
    def test_divergence_of_metric_and_E(self, entry, key):
        cj = at(entry(key), key, 3)
        assert np.abs(cj.divergence_delta(cj.g.truncate(2)).value).max() < 1e-11
        assert np.abs(cj.divergence_delta(cj.traceless_ricci).value).max() < 1e-9

    def test_codazzi_of_metric(self, entry):
        cj = at(entry("s4"), "s4", 3)
        for th in (-1.0, 0.5, 2.0):
            assert np.abs(cj.theta_codazzi(cj.g.truncate(2), th).value).max() < 1e-11

    def test_codazzi_E_s1xs3(self, entry):
        cj = at(entry("s1xs3"), "s1xs3", 3)
        assert np.abs(cj.theta_codazzi(cj.traceless_ricci, 1.0).value).max() < 1e-11

    def test_laplacians_on_torus(self):
        m = flat_torus(4)
        p = np.array([[0.3, 1.0, 4.0, 6.0]])
        cj = CurvatureJets(m.metric, p, 2)
        u = field_jets(parse("sin(x1)"), p, 2)
        assert float(cj.laplacian(u, 0).value[0]) == pytest.approx(-math.sin(0.3))
        c = field_jets(parse("3"), p, 2)
        assert float(cj.laplacian(c, 0).value[0]) == 0.0

    def test_symmetric_space_weyl(self, entry):
        cj = at(entry("s2xs2"), "s2xs2")
        assert np.abs(cj.grad_weyl.value).max() < 1e-10
        assert np.abs(cj.laplacian_weyl.value).max() < 1e-8


class TestDivergenceIdentity:
    def test_perturbed_s4_componentwise(self, entry):
        m = perturbed(entry("s4"), 7, 0.1)
        cj = at(m, "s4", 3)
        d = cj.weyl_divergence.value
        assert np.abs(d - cj.cotton.value).max() < 1e-8
        assert np.abs(cj.cotton.value).max() > 1e-3  # the check is not vacuous

    def test_s5_both_sides_vanish(self):
        cj = at(round_sphere(5), "s5", 3)
        assert np.abs(cj.weyl_divergence.value).max() < 1e-10
        assert np.abs(cj.cotton.value).max() < 1e-10

    def test_non_symmetric_metric(self):
        rows = [["1 + 0.2*sin(x1)*cos(x2)"], ["0.1*sin(x3)", "1 + 0.1*cos(x4)"],
                ["0", "0.05*sin(x1 + x2)", "1.2"], ["0.1*cos(x2)", "0", "0", "1 + 0.3*sin(x3)^2"]]
        cj = CurvatureJets(metric_from_rows(rows), np.array([0.3, 0.5, 0.7, 0.2]), 3)
        assert np.abs(cj.weyl_divergence.value - cj.cotton.value).max() < 1e-11


class TestWeylQuadratic:
    def test_vanishes_on_flat_weyl(self):
        assert np.abs(weyl_quadratic(np.zeros((4, 4, 4, 4)), np.eye(4))).max() == 0.0

    def test_scaled_s2xs2(self, entry):
        m = entry("scaled(s2xs2, 1/3)")
        cj = at(m, "s2xs2", 2)
        W = cj.weyl.value[..., 0]
        QW = weyl_quadratic(W, inv0(cj))
        assert np.allclose(QW, -3 * W, atol=1e-10)

    def test_quadratic_scaling(self, entry):
        cj = at(entry("s2xs2"), "s2xs2", 2)
        W = cj.weyl.value[..., 0]
        gi = inv0(cj)
        assert np.allclose(weyl_quadratic(2 * W, gi), 4 * weyl_quadratic(W, gi), atol=1e-13)


class TestBachCrossFormula:
    @pytest.mark.parametrize("key", ["s4", "s2xs2", "s1xs3", "t4"])
    def test_agrees(self, entry, key):
        cj = at(entry(key), key)
        assert np.abs(cj.bach.value - cj.bach_from_traceless_ricci.value).max() < 1e-9

    def test_perturbed(self, entry):
        cj = at(perturbed(entry("s4"), 7, 0.1), "s4")
        B = cj.bach.value
        assert np.abs(B).max() > 1e-3
        assert np.abs(B - cj.bach_from_traceless_ricci.value).max() < 1e-8 * (1 + np.abs(B).max())


class TestMetricField:
    def test_lower_triangle_required(self):
        with pytest.raises(GeometryError):
            MetricField(2, ((Num(1.0),), (Num(0.0),)))

    def test_variable_beyond_dim(self):
        with pytest.raises(GeometryError):
            MetricField(2, ((Num(1.0),), (Num(0.0), parse("x3"))))

    def test_depends_on(self):
        assert round_sphere(3).metric.depends_on == frozenset({0, 1})

    def test_positive_definite(self):
        g = MetricField(2, ((Num(1.0),), (Num(0.0), mul(Num(-1.0), parse("x1^2 + 1")))))
        with pytest.raises(GeometryError):
            g.check_positive_definite(np.array([[0.5, 0.5]]))
