import json
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from singflow.errors import RepeatedDiagonalizableError, SingularMatrixError
from singflow.fields import (Diagonal, Focus, Jordan, LinearField, PolynomialRemainder, PolyTerm,
                             SmoothField, center_plane_field, classify_2d, eval_field, expm,
                             expm_matrix, field_from_dict, field_to_dict, load_field,
                             real_jordan_basis, remainder_ratios)

rates = st.floats(min_value=-3, max_value=3).filter(lambda x: abs(x) > 0.1)


class TestClassify:
    def test_diagonal(self):
        assert classify_2d(np.diag([-1.0, 1.0])) == Diagonal(-1.0, 1.0)

    def test_focus(self):
        assert classify_2d([[0, -1], [1, 0]]) == Focus(0.0, 1.0)

    def test_jordan(self):
        assert classify_2d([[1, 0], [1, 1]]) == Jordan(1.0)

    def test_singular(self):
        with pytest.raises(SingularMatrixError):
            classify_2d([[1.0, 2.0], [2.0, 4.0]])

    def test_scalar_rejected(self):
        with pytest.raises(RepeatedDiagonalizableError):
            classify_2d(3.0 * np.eye(2))

    def test_variant_invariants(self):
        with pytest.raises(ValueError):
            Diagonal(1.0, 1.0)
        with pytest.raises(ValueError):
            Jordan(0.0)
        with pytest.raises(ValueError):
            Focus(0.0, 0.0)

    @settings(max_examples=60, deadline=None)
    @given(kind=st.sampled_from(["diag", "jordan", "focus"]), a=rates, b=rates,
           seed=st.integers(0, 2**16))
    def test_similarity_invariance(self, kind, a, b, seed):
        if kind == "diag":
            if abs(a - b) < 0.1:
                return
            ref = Diagonal(min(a, b), max(a, b))
        elif kind == "jordan":
            ref = Jordan(a)
        else:
            ref = Focus(a, abs(b))
        P = np.random.default_rng(seed).normal(size=(2, 2))
        if abs(np.linalg.det(P)) < 0.2:
            P += np.eye(2)
        if abs(np.linalg.det(P)) < 0.2 or np.linalg.cond(P) > 50:
            return
        got = classify_2d(P @ ref.matrix() @ np.linalg.inv(P))
        assert type(got) is type(ref)
        want = np.array([getattr(ref, f) for f in ref.__dataclass_fields__])
        have = np.array([getattr(got, f) for f in got.__dataclass_fields__])
        np.testing.assert_allclose(have, want, atol=1e-9 * max(1, np.abs(want).max()) * 100)

    def test_real_jordan_basis_reconstructs(self, rng):
        for M in ([[2.0, 1.0], [0.5, -1.0]], [[1.0, 0.0], [1.0, 1.0]], [[0.3, -2.0], [1.0, 0.1]]):
            kind, P = real_jordan_basis(M)
            np.testing.assert_allclose(P @ kind.matrix() @ np.linalg.inv(P), M, atol=1e-12)


class TestExpm:
    def test_diagonal_ln2(self):
        np.testing.assert_allclose(expm_matrix(np.diag([-1.0, 1.0]), math.log(2)),
                                   np.diag([0.5, 2.0]), rtol=1e-15)

    def test_rotation_quarter(self):
        np.testing.assert_allclose(expm_matrix([[0, -1], [1, 0]], math.pi / 2),
                                   [[0, -1], [1, 0]], atol=1e-15)

    def test_jordan_vs_dense(self):
        M = np.array([[1.0, 0.0], [1.0, 1.0]])
        E = expm_matrix(M, 1.0)
        np.testing.assert_allclose(E, math.e * M, rtol=1e-15)
        np.testing.assert_allclose(E, scipy.linalg.expm(M), rtol=1e-12)

    def test_zero_time_exact(self, smooth4):
        for M in ([[2.0]], np.diag([1.0, 3.0]), [[1.0, 0], [1, 1.0]], [[0.5, -2], [2, 0.5]],
                  [[1.0, 2.0], [3.0, -1.0]]):
            assert np.array_equal(expm_matrix(M, 0.0), np.eye(len(M)))
        assert np.array_equal(expm(smooth4, 0.0), np.eye(4))

    @settings(max_examples=40, deadline=None)
    @given(s=st.floats(-5, 5), t=st.floats(-5, 5),
           M=st.sampled_from([Diagonal(-1.0, 0.5).matrix(), Jordan(-0.7).matrix(),
                              Focus(0.2, 1.3).matrix(), np.array([[0.3, 1.0], [-0.4, -0.2]])]))
    def test_group_property(self, s, t, M):
        lhs = expm_matrix(M, s + t)
        rhs = expm_matrix(M, s) @ expm_matrix(M, t)
        assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(lhs).max())

    def test_block_assembly(self):
        fld = LinearField([([[-2.0]], "ss"), ([[0.0, -1.0], [1.0, 0.0]], "center2d"),
                           ([[1.0, 0.5], [0.0, 2.0]], "uu")])
        np.testing.assert_allclose(expm(fld, 0.7), scipy.linalg.expm(0.7 * fld.matrix), rtol=1e-12)


class TestFields:
    def test_eval_linear(self, saddle):
        np.testing.assert_array_equal(eval_field(saddle, [1.0, 1.0]), [-1.0, 1.0])

    def test_eval_smooth(self, saddle_xy):
        np.testing.assert_array_equal(eval_field(saddle_xy, [1.0, 1.0]), [0.0, 1.0])

    def test_origin_is_singular(self, saddle, saddle_xy, smooth4):
        for f in (saddle, saddle_xy, smooth4):
            assert not np.any(eval_field(f, np.zeros(f.dim)))

    def test_jacobian_is_exact(self, smooth4, rng):
        x = rng.normal(size=4) * 0.3
        J = smooth4.jacobian(x)
        h = 1e-6
        fd = np.column_stack([(smooth4(x + h * e) - smooth4(x - h * e)) / (2 * h)
                              for e in np.eye(4)])
        np.testing.assert_allclose(J, fd, atol=1e-8)

    def test_remainder_order(self, smooth4):
        q, d = remainder_ratios(smooth4, [1e-1, 1e-2, 1e-3, 1e-4])
        assert np.all(q < 2.0) and np.ptp(q) < 1e-6 * q.max() + 1e-12
        assert np.all(np.diff(d) < 0) and d[-1] < 1e-3

    def test_remainder_needs_degree_two(self):
        with pytest.raises(ValueError):
            PolynomialRemainder(2, [PolyTerm(1.0, (1, 0), 0)])

    def test_saddle_value_and_configuration(self):
        fld = center_plane_field(-1.0, 1.5, ss=(-2.0,), uu=(3.0,))
        assert fld.saddle_value == 0.5
        with pytest.raises(ValueError):
            center_plane_field(-1.0, 1.0, ss=(-0.5,), uu=(2.0,))
        with pytest.raises(ValueError):
            center_plane_field(1.0, 2.0)

    def test_json_roundtrip(self, smooth4, tmp_path):
        p = tmp_path / "field.json"
        p.write_text(json.dumps(field_to_dict(smooth4)))
        back = load_field(p)
        assert isinstance(back, SmoothField)
        x = np.array([0.1, -0.2, 0.3, 0.05])
        np.testing.assert_array_equal(back(x), smooth4(x))
        lin = field_from_dict({"dim": 2, "blocks": [{"role": "center2d", "matrix": [[1, 0], [1, 1]]}]})
        assert isinstance(lin, LinearField)
