import math

import numpy as np
import pytest

from curvgap.catalog import (
    CATALOG,
    CatalogError,
    ManifestError,
    build_catalog_entry,
    catalog_ids,
    chart_variant,
    chart_variants,
    flat_torus,
    load_manifest,
    parse_manifest,
    perturbed,
    product,
    random_scalar_field,
    random_symmetric_field,
    resolve,
    round_sphere,
    scaled,
)
from curvgap.expr import Call, Var, evaluate, to_text, variables
from curvgap.geometry import CurvatureJets
from curvgap import tensor as T
from curvgap.verify import QUANTITIES

TORUS_MANIFEST = """\
manifold "torus-by-hand"   # comment
dim 4
chi 0
domain x1 0 2*pi periodic
domain x2 0 2*pi periodic
domain x3 0 2*pi periodic
domain x4 0 2*pi periodic
metric 1 1 = "1"
metric 2 2 = "1"
metric 3 3 = "1"
metric 4 4 = "1"
"""


class TestNamedEntries:
    def test_ids(self):
        assert catalog_ids() == ["s3", "s4", "s5", "t4", "s2xs2", "s1xs3"]

    @pytest.mark.parametrize("key,chi", [("s4", 2), ("t4", 0), ("s2xs2", 4), ("s1xs3", 0), ("s3", 0), ("s5", 0)])
    def test_euler_characteristics(self, key, chi):
        assert CATALOG[key]().chi == chi

    def test_s4_metadata(self):
        m = round_sphere(4, 1)
        assert m.known["scalar"] == 12
        assert m.known["yamabe"] == pytest.approx(8 * math.sqrt(6) * math.pi, rel=1e-14)
        assert m.known["volume"] == pytest.approx(8 * math.pi**2 / 3, rel=1e-14)

    def test_s2xs2(self, entry):
        m = entry("s2xs2")
        assert m.dim == 4 and m.chi == 4
        assert m.known["scalar"] == pytest.approx(4.0)
        assert m.flags["einstein"] and not m.flags["conformally_flat"]

    def test_scaled_s1xs3(self, entry):
        m = entry("scaled(s1xs3, 1/2)")
        assert m.known["scalar"] == pytest.approx(12.0)
        assert m.flags["bach_flat"] and not m.flags["einstein"]

    def test_product_scalar(self):
        m = product(round_sphere(2), round_sphere(3))
        assert m.known["scalar"] == pytest.approx(8.0)
        assert m.chi == 0

    def test_scaled_keeps_chi_and_scales_volume(self):
        m = scaled(round_sphere(4), 4.0)
        assert m.chi == 2
        assert m.known["volume"] == pytest.approx(16 * 8 * math.pi**2 / 3)
        assert m.known["yamabe"] == round_sphere(4).known["yamabe"]


class TestSelectors:
    def test_nested(self):
        m = build_catalog_entry("scaled(product(round_sphere(2), round_sphere(2)), 1/3)")
        assert m.known["scalar"] == pytest.approx(12.0)

    def test_perturbed_selector(self):
        m = build_catalog_entry("perturbed(s4, 7, 0.1)")
        assert m.dim == 4 and m.flags == {}

    @pytest.mark.parametrize("sel", ["s7", "__import__('os')", "scaled(s4)", "round_sphere(2.5)", "s4 + s4",
                                      "scaled(s4, 1/0)", "perturbed(s4, 0.5, 0.1)", "open('x')"])
    def test_rejected(self, sel):
        with pytest.raises(CatalogError):
            build_catalog_entry(sel)

    def test_resolve_exactly_one(self, tmp_path):
        with pytest.raises(CatalogError):
            resolve()
        p = tmp_path / "t.mf"
        p.write_text(TORUS_MANIFEST)
        with pytest.raises(CatalogError):
            resolve("t4", p)

    @pytest.mark.parametrize("sel", ["round_sphere(0)", "flat_torus(2, -1)", "round_sphere(3, 0)"])
    def test_bad_parameters(self, sel):
        with pytest.raises(CatalogError):
            build_catalog_entry(sel)


class TestManifest:
    def test_loads(self, tmp_path):
        p = tmp_path / "torus.mf"
        p.write_text(TORUS_MANIFEST)
        m = load_manifest(p)
        assert m.name == "torus-by-hand" and m.dim == 4 and m.chi == 0
        assert all(a.periodic and a.hi == pytest.approx(2 * math.pi) for a in m.axes)

    def test_same_metric_as_builtin(self):
        m = parse_manifest(TORUS_MANIFEST)
        p = np.array([[0.1, 0.2, 0.3, 0.4]])
        assert np.array_equal(m.metric.values(p), flat_torus(4).metric.values(p))

    def test_variable_beyond_dim(self):
        text = TORUS_MANIFEST + 'metric 1 2 = "x9"\n'
        with pytest.raises(ManifestError) as info:
            parse_manifest(text)
        assert info.value.line == 12
        assert "x9" in str(info.value) or "exceeds" in str(info.value)

    def test_missing_chi_loads(self):
        m = parse_manifest(TORUS_MANIFEST.replace("chi 0\n", ""))
        assert m.chi is None

    def test_syntax_error_position(self):
        text = TORUS_MANIFEST.replace('metric 1 1 = "1"', 'metric 1 1 = "1 +* x1"')
        with pytest.raises(ManifestError) as info:
            parse_manifest(text)
        assert info.value.line == 8
        assert info.value.column == 18

    @pytest.mark.parametrize("bad,line", [
        ("dim four\n", 1), ("domain x1 1 0 open\n", 1), ("wibble 3\n", 1), ("param pi = 3\n", 1),
    ])
    def test_malformed_lines(self, bad, line):
        with pytest.raises(ManifestError) as info:
            parse_manifest(bad + TORUS_MANIFEST)
        assert info.value.line == line

    def test_missing_dim(self):
        with pytest.raises(ManifestError, match="dim"):
            parse_manifest('manifold "x"\n')

    def test_missing_domain(self):
        with pytest.raises(ManifestError, match="x4"):
            parse_manifest(TORUS_MANIFEST.replace("domain x4 0 2*pi periodic\n", ""))

    def test_params(self):
        text = 'dim 2\nparam r = 2\ndomain x1 0 pi open\ndomain x2 0 2*pi periodic\n' \
               'metric 1 1 = "r^2"\nmetric 2 2 = "r^2*sin(x1)^2"\n'
        m = parse_manifest(text)
        assert m.metric.values(np.array([[1.0, 0.0]]))[0, 0, 0] == pytest.approx(4.0)

    def test_unreadable(self, tmp_path):
        with pytest.raises(CatalogError):
            load_manifest(tmp_path / "missing.mf")


class TestRandomFields:
    def test_seed_reproducible(self, entry):
        a = random_symmetric_field(entry("s4"), 3)
        b = random_symmetric_field(entry("s4"), 3)
        assert a.text() == b.text()
        assert random_symmetric_field(entry("s4"), 4).text() != a.text()

    def test_torus_trig_degree(self):
        h = random_symmetric_field(flat_torus(4), 11, bandwidth=2, amplitude=0.1)
        # every component is a polynomial of degree <= 2 in cos/sin of single variables
        allowed = {Call(f, Var(k)) for f in ("cos", "sin") for k in range(1, 5)}
        p = np.random.default_rng(0).uniform(0, 2 * math.pi, size=(64, 4))
        for i in range(4):
            for j in range(i + 1):
                text = to_text(h.entry(i, j))
                assert "cos(" in text or "sin(" in text or text in ("0", "0.0") or variables(h.entry(i, j)) == frozenset()
        # degree check via an exact trigonometric rule: frequencies above 2 integrate to zero against cos(3x)
        for i in range(4):
            for j in range(i + 1):
                for k in range(4):
                    x = np.linspace(0, 2 * math.pi, 16, endpoint=False)
                    pts = np.tile(p[0], (16, 1))
                    pts[:, k] = x
                    v = evaluate(h.entry(i, j), pts)
                    coef = np.fft.rfft(np.broadcast_to(v, (16,)))
                    assert np.abs(coef[3:]).max() < 1e-12

    def test_scalar_field(self, entry):
        u = random_scalar_field(entry("s4"), 2)
        v = evaluate(u.expression, np.array([[1.0, 1.0, 1.0, 1.0]]))
        assert 0.5 < float(v[0]) < 1.5

    def test_validation(self, entry):
        with pytest.raises(CatalogError):
            random_symmetric_field(entry("s4"), 0, amplitude=0.0)

    def test_perturbed_positive(self, entry):
        m = perturbed(entry("s4"), 7, 0.1)
        assert m.chi == 2 and m.known == {}

    def test_perturbed_too_large(self):
        with pytest.raises(CatalogError, match="positive definite"):
            perturbed(flat_torus(2), 1, 50.0)


def invariants(metric, p):
    cj = CurvatureJets(metric, p, 4)
    out = {}
    for name in ("R", "E_norm", "W_norm", "B_norm", "Q"):
        out[name] = np.asarray(QUANTITIES[name][1](cj)[name], dtype=float)
    return out


class TestRecharting:
    @pytest.mark.parametrize("sel", ["s4", "perturbed(s4, 7, 0.1)", "perturbed(s1xs3, 2, 0.1)"])
    def test_invariants_agree_in_interior(self, entry, sel):
        m = entry(sel)
        pts = np.array([[1.2, 1.4, 1.7, 0.5], [1.9, 1.1, 1.3, 4.0]])
        if m.dim == 4 and sel.startswith("perturbed(s1"):
            pts = np.array([[0.5, 1.2, 1.4, 0.5], [3.0, 1.9, 1.3, 4.0]])
        ref = invariants(m.metric, pts)
        block = len(m.embedding.blocks) - 1
        n1 = len(m.embedding.blocks[block].features)
        perms = [None] * len(m.embedding.blocks)
        perms[block] = (2, 0, 3, 4, 1)[:n1] if n1 == 5 else (2, 0, 3, 1)
        var = chart_variant(m, tuple(perms))
        alt = []
        for p in pts:
            # move the point into the permuted chart through the ambient coordinates
            b = m.embedding.blocks[block]
            y = np.array([evaluate(m.embedding.features[f], p[None, :])[0] for f in b.features])
            from curvgap.catalog import _polar_angles
            q = p.copy()
            q[list(b.axes)] = _polar_angles(y[list(perms[block])][None, :])[0]
            alt.append(q)
        got = invariants(var.metric, np.array(alt))
        for k in ref:
            assert np.allclose(got[k], ref[k], atol=1e-9, rtol=1e-9), k

    def test_poles_are_recharted(self, entry):
        m = entry("s4")
        pts = np.array([[0.01, 1.5, 1.5, 1.0], [1.5, 1.5, 1.5, 1.0]])
        parts = chart_variants(m, pts)
        charts = {tuple(idx): perms for idx, _, perms in parts}
        assert charts[(1,)] is None
        assert charts[(0,)] is not None

    def test_recharted_pole_is_accurate(self, entry):
        m = entry("s4")
        pts = np.array([[1e-3, 0.02, 3.1, 1.0]])
        [(_, alt, perms)] = chart_variants(m, pts)
        inv = invariants(chart_variant(m, perms).metric, alt)
        assert inv["B_norm"][0] < 1e-10
        assert inv["R"][0] == pytest.approx(12.0, abs=1e-10)

    def test_torus_never_recharted(self):
        m = flat_torus(4)
        [(idx, _, perms)] = chart_variants(m, np.zeros((3, 4)))
        assert perms is None and len(idx) == 3

    def test_field_without_recipe(self, entry):
        from curvgap.catalog import SymmetricField
        from curvgap.expr import Num
        m = entry("s4")
        var = chart_variant(m, ((2, 0, 3, 4, 1),))
        h = SymmetricField(4, tuple((Num(0.0),) * (i + 1) for i in range(4)))
        with pytest.raises(CatalogError):
            var.symmetric(h)
