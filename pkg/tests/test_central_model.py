import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singflow.central_model import (CentralModel, FiberMap, build_from_linear_model,
                                    center_slope, chain_classes, detect_segment, detect_trapping,
                                    dichotomy, direction_image, load_model, main_theorem_scenario,
                                    model_from_dict, model_to_dict, orbit_slope_products,
                                    segment_height)
from singflow.closed_forms import psi_star_center_formula
from singflow.errors import ModelSchemaError, ResolutionTooCoarse
from singflow.fields import center_plane_field

M = 16


def ring(slope, n=6, transitive=True):
    nodes = tuple(range(n))
    return CentralModel(nodes, {k: (k + 1) % n for k in nodes},
                        {k: FiberMap.linear(slope) for k in nodes}, base_chain_transitive=transitive)


class TestSchema:
    def test_fiber_must_fix_zero(self):
        with pytest.raises(ModelSchemaError, match="'a'"):
            CentralModel(("a",), {"a": "a"}, {"a": [[0, 0.1], [1, 1]]})

    def test_non_monotone_names_node(self):
        with pytest.raises(ModelSchemaError, match="'b'.*non-monotone"):
            CentralModel(("a", "b"), {"a": "b", "b": "a"},
                         {"a": [[0, 0], [1, 1]], "b": [[0, 0], [0.5, 0.6], [1, 0.4]]})

    def test_collapsed_fiber_allowed(self):
        m = CentralModel(("a",), {"a": "a"}, {"a": [[0, 0], [1, 0]]})
        assert m.fibers["a"].collapsed

    def test_unknown_image(self):
        with pytest.raises(ModelSchemaError, match="base_map"):
            CentralModel(("a",), {"a": "z"}, {"a": [[0, 0], [1, 1]]})

    def test_too_many_breakpoints(self):
        pts = [[k / 70, k / 70] for k in range(71)]
        with pytest.raises(ModelSchemaError, match="breakpoints"):
            CentralModel(("a",), {"a": "a"}, {"a": pts})

    def test_json_line_number(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "nodes": ["a"],\n  "base_map": {"a": "a"\n}')
        with pytest.raises(ModelSchemaError, match="line 4"):
            load_model(p)

    def test_roundtrip(self, tmp_path):
        m = ring(0.5, 4)
        p = tmp_path / "m.json"
        p.write_text(json.dumps(model_to_dict(m)))
        back = load_model(p)
        assert back.nodes == ("0", "1", "2", "3")
        assert back.base_map["3"] == "0"
        assert back.base_chain_transitive
        assert model_from_dict(model_to_dict(back)).nodes == back.nodes


class TestChainClasses:
    def test_contraction_keeps_base_alone(self):
        dec = chain_classes(ring(0.5), 0.25 / M, M)
        assert dec.base_class_cells() == {(x, 0) for x in range(6)}
        assert not any(detect_segment(dec, x, a) for x in range(6) for a in (0.1, 0.5, 1.0))

    def test_identity_joins_everything(self):
        dec = chain_classes(ring(1.0), 1.0 / M, M)
        assert len(dec.base_class_cells()) == 6 * M
        assert all(detect_segment(dec, x, a) for x in range(6) for a in (0.05, 0.5, 1.0))

    def test_expansion_is_not_recurrent_above_base(self):
        dec = chain_classes(ring(2.0), 0.25 / M, M)
        assert all(segment_height(dec, x) == 1 for x in range(6))

    def test_deterministic(self):
        m = build_from_linear_model(center_plane_field(), 16)
        a = chain_classes(m, 0.05, M, base_epsilon=0.3)
        b = chain_classes(m, 0.05, M, base_epsilon=0.3)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            chain_classes(ring(1.0), 0.0, M)
        with pytest.raises(ValueError):
            chain_classes(ring(1.0), 0.1, 3)
        with pytest.raises(ValueError):
            detect_segment(chain_classes(ring(1.0), 0.1, M), 0, 0.0)

    def test_classes_are_mutually_reachable(self):
        m = ring(1.0, 4, transitive=False)
        dec = chain_classes(m, 0.5 / M, M)
        for cls in dec.classes:
            assert len({c[1] for c in cls}) >= 1
        assert dec.n_classes >= 1

    @settings(max_examples=30, deadline=None)
    @given(slopes=st.lists(st.floats(0.2, 3.0), min_size=4, max_size=8),
           e1=st.floats(0.01, 0.2), e2=st.floats(0.01, 0.2))
    def test_monotone_in_epsilon(self, slopes, e1, e2):
        lo, hi = sorted((e1, e2))
        n = len(slopes)
        m = CentralModel(tuple(range(n)), {k: (k + 1) % n for k in range(n)},
                         {k: FiberMap.linear(s) for k, s in enumerate(slopes)},
                         base_chain_transitive=True)
        small = chain_classes(m, lo, M).base_class_cells()
        big = chain_classes(m, hi, M).base_class_cells()
        assert small <= big

    @settings(max_examples=30, deadline=None)
    @given(slopes=st.lists(st.floats(0.1, 4.0), min_size=4, max_size=8),
           eps=st.floats(0.005, 0.1), delta=st.floats(0.1, 0.9))
    def test_dichotomy_consistency(self, slopes, eps, delta):
        n = len(slopes)
        m = CentralModel(tuple(range(n)), {k: (k + 1) % n for k in range(n)},
                         {k: FiberMap.linear(s) for k, s in enumerate(slopes)},
                         base_chain_transitive=True)
        dec = chain_classes(m, eps, M)
        margin = eps + 1.0 / M
        if detect_trapping(m, margin, delta) == "attracting":
            assert all(segment_height(dec, x) <= math.floor(M * delta) for x in m.nodes)
        if detect_trapping(m, margin, delta) == "repelling":
            assert all(segment_height(dec, x) <= math.ceil(M * delta) for x in m.nodes)


class TestTrapping:
    @pytest.mark.parametrize("delta", [0.05, 0.3, 0.9])
    def test_verdicts(self, delta):
        assert detect_trapping(ring(0.5), 0.0, delta) == "attracting"
        assert detect_trapping(ring(2.0), 0.0, delta) == "repelling"
        assert detect_trapping(ring(1.0), 0.0, delta) == "neither"

    def test_mixed(self):
        m = CentralModel((0, 1), {0: 1, 1: 0}, {0: FiberMap.linear(0.5), 1: FiberMap.linear(2)})
        assert detect_trapping(m, 0.0, 0.4) == "neither"
        with pytest.raises(ValueError):
            detect_trapping(m, 0.0, 0.0)

    def test_dichotomy_report(self):
        m = ring(0.5)
        rep = dichotomy(m, chain_classes(m, 0.25 / M, M), 0.5)
        assert rep["trapping"] == "attracting" and not rep["any_segment"]


class TestLinearModel:
    def test_eigendirections_fixed(self):
        m = build_from_linear_model(center_plane_field(), 8)
        assert m.base_map[0] == 0 and m.base_map[4] == 4

    def test_quarter_slope_zero(self):
        m = build_from_linear_model(center_plane_field(), 8)
        assert m.meta["slopes"][2] <= 1e-14
        assert m.fibers[2].collapsed or m.fibers[2](1.0) <= 1e-14

    def test_slopes_match_closed_form(self):
        fld = center_plane_field()
        m = build_from_linear_model(fld, 32)
        for k in m.nodes:
            th = m.positions[k]
            ref = np.linalg.norm(psi_star_center_formula(-1, 1, th, 1.0))
            assert abs(m.meta["slopes"][k] - ref) <= 1e-9

    def test_pi6_slope(self):
        fld = center_plane_field()
        th = math.pi / 6
        ref = np.linalg.norm(psi_star_center_formula(-1, 1, th, 1.0))
        assert center_slope(fld, th) == pytest.approx(ref, rel=1e-12)
        c, s = math.cos(th), math.sin(th)
        assert ref == pytest.approx(0.5 / (math.exp(-2) * c * c + math.exp(2) * s * s), rel=1e-12)

    def test_normal_center_convention(self):
        fld = center_plane_field()
        assert center_slope(fld, 0.5, "normal") > 0
        with pytest.raises(ValueError):
            center_slope(fld, 0.5, "other")

    def test_too_coarse(self):
        with pytest.raises(ResolutionTooCoarse):
            build_from_linear_model(center_plane_field(), 3)

    def test_direction_image_inverse(self):
        fld = center_plane_field()
        th = direction_image(fld, 0.7, 1.0)
        assert direction_image(fld, th, -1.0) == pytest.approx(0.7, abs=1e-13)

    def test_orbit_products(self):
        f, b = orbit_slope_products(center_plane_field(), math.pi / 6, 10)
        assert f[-1] < 1e-3 and b[-1] < 1e-3
        assert np.all(np.diff(f) < 0) and np.all(np.diff(b) < 0)


class TestScenario:
    def test_main(self):
        rep = main_theorem_scenario()
        assert rep.segment_detected
        assert rep.segment_height_cells >= 4
        assert rep.trapping == "neither"
        assert rep.base_transitive_at_scale
        assert rep.chain_glue == pytest.approx(1.1 * rep.max_gap)

    def test_quarter(self):
        rep = main_theorem_scenario(theta0=math.pi / 4)
        assert rep.segment_detected

    def test_control(self):
        rep = main_theorem_scenario(control_slope=0.5)
        assert not rep.segment_detected and rep.trapping == "attracting"

    def test_preconditions(self):
        with pytest.raises(ValueError):
            main_theorem_scenario(theta0=math.pi / 2)
        with pytest.raises(ValueError):
            main_theorem_scenario(lam_cs=1.0, lam_cu=2.0)

    def test_report_serializable(self):
        d = main_theorem_scenario(theta_samples=16, fiber_cells=8).to_dict()
        json.dumps(d)
        assert d["fiber_cells"] == 8
