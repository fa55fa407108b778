import io
import itertools
from functools import reduce

import numpy as np
import pytest
from conftest import rel_err
from hypothesis import given
from hypothesis import strategies as st

from rgntensor.measurement import GeneralDense
from rgntensor.tensor import (
    as_tensor,
    format_tensor,
    hs_norm,
    inner,
    kron_except,
    matricize,
    mode_product,
    multi_mode_product,
    normalize_signs,
    orthonormal_complement,
    parse_tensor,
    qr_q,
    read_tensor,
    svd_leading,
    tensorize,
    unvec,
    vec,
    write_tensor,
)

shapes = st.lists(st.integers(1, 4), min_size=1, max_size=5).map(tuple)


def unfold_by_index_map(t, k):
    """Independent oracle: column j = sum_{l != k} i_l prod_{m < l, m != k} p_m (0-based)."""
    p = t.shape
    out = np.zeros((p[k], t.size // p[k]))
    for idx in itertools.product(*[range(q) for q in p]):
        j, stride = 0, 1
        for l in range(len(p)):
            if l == k:
                continue
            j += idx[l] * stride
            stride *= p[l]
        out[idx[k], j] = t[idx]
    return out


def mode_product_by_sum(t, k, b):
    shape = list(t.shape)
    shape[k] = b.shape[0]
    out = np.zeros(shape)
    for idx in itertools.product(*[range(q) for q in shape]):
        src = list(idx)
        total = 0.0
        for i in range(t.shape[k]):
            src[k] = i
            total += t[tuple(src)] * b[idx[k], i]
        out[idx] = total
    return out


def example_222():
    # t[i1, i2, i3] = i1 + 2 (i2 - 1) + 4 (i3 - 1) with 1-based indices
    t = np.zeros((2, 2, 2))
    for i1, i2, i3 in itertools.product(range(2), repeat=3):
        t[i1, i2, i3] = (i1 + 1) + 2 * i2 + 4 * i3
    return t


class TestMatricize:
    def test_hand_example(self):
        m = matricize(example_222(), 0)
        np.testing.assert_array_equal(m, [[1, 3, 5, 7], [2, 4, 6, 8]])

    def test_order_one(self):
        v = np.arange(5.0)
        m = matricize(v, 0)
        assert m.shape == (5, 1)
        np.testing.assert_array_equal(m[:, 0], v)

    def test_matches_index_map(self, rng):
        t = rng.standard_normal((3, 4, 2, 3))
        for k in range(4):
            np.testing.assert_array_equal(matricize(t, k), unfold_by_index_map(t, k))

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            matricize(np.zeros((2, 2)), 2)
        with pytest.raises(ValueError):
            matricize(np.zeros((2, 2)), -1)

    @given(shapes, st.data())
    def test_inverse_pair_bit_exact(self, shape, data):
        rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
        t = rng.standard_normal(shape)
        for k in range(len(shape)):
            back = tensorize(matricize(t, k), k, shape)
            assert np.array_equal(back, t)

    @given(shapes, st.data())
    def test_frobenius_invariance(self, shape, data):
        rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
        t = rng.standard_normal(shape)
        for k in range(len(shape)):
            assert np.isclose(np.linalg.norm(matricize(t, k)), hs_norm(t), rtol=1e-14)


class TestTensorize:
    def test_recovers_example(self):
        t = example_222()
        np.testing.assert_array_equal(tensorize(matricize(t, 0), 0, t.shape), t)

    def test_zero(self):
        assert not tensorize(np.zeros((3, 20)), 1, (4, 3, 5)).any()

    def test_rejects_mismatch(self, rng):
        m = rng.standard_normal((3, 4))
        with pytest.raises(ValueError):
            tensorize(m, 2, (4, 3))  # no mode 2 in an order-2 shape
        with pytest.raises(ValueError):
            tensorize(m, 0, (4, 3))  # mode-0 unfolding of (4, 3) is 4 x 3
        with pytest.raises(ValueError):
            tensorize(m.ravel(), 0, (3, 4))


class TestVec:
    def test_colex_order(self):
        t = example_222()
        np.testing.assert_array_equal(vec(t), np.arange(1, 9))

    def test_unvec_roundtrip(self, rng):
        t = rng.standard_normal((2, 3, 4))
        assert np.array_equal(unvec(vec(t), t.shape), t)
        with pytest.raises(ValueError):
            unvec(np.zeros(5), (2, 3))


class TestModeProduct:
    def test_identity(self, rng):
        t = rng.standard_normal((3, 4, 5))
        for k in range(3):
            np.testing.assert_array_equal(mode_product(t, k, np.eye(t.shape[k])), t)

    def test_hand_example(self):
        out = mode_product(example_222(), 0, np.array([[1.0, 1.0]]))
        assert out.shape == (1, 2, 2)
        # column sums of the unfolding [[1,3,5,7],[2,4,6,8]]
        np.testing.assert_array_equal(matricize(out, 0), [[3, 7, 11, 15]])

    def test_matches_summation(self, rng):
        t = rng.standard_normal((3, 2, 4))
        for k in range(3):
            b = rng.standard_normal((2, t.shape[k]))
            np.testing.assert_allclose(mode_product(t, k, b), mode_product_by_sum(t, k, b),
                                       rtol=0, atol=1e-13)

    def test_unfolding_form(self, rng):
        t = rng.standard_normal((3, 4, 5))
        b = rng.standard_normal((2, 4))
        np.testing.assert_allclose(matricize(mode_product(t, 1, b), 1), b @ matricize(t, 1),
                                   atol=1e-13)

    def test_rejects_mismatch(self, rng):
        with pytest.raises(ValueError):
            mode_product(np.zeros((2, 3)), 1, np.zeros((2, 2)))

    @given(st.lists(st.integers(1, 4), min_size=2, max_size=4), st.data())
    def test_distinct_modes_commute(self, shape, data):
        rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
        t = rng.standard_normal(shape)
        j, k = data.draw(st.lists(st.integers(0, len(shape) - 1), min_size=2, max_size=2,
                                  unique=True))
        a = rng.standard_normal((3, shape[j]))
        b = rng.standard_normal((2, shape[k]))
        lhs = mode_product(mode_product(t, j, a), k, b)
        rhs = mode_product(mode_product(t, k, b), j, a)
        assert rel_err(lhs, rhs) <= 1e-12


class TestMultiModeProduct:
    def test_all_identity(self, rng):
        t = rng.standard_normal((2, 3, 4))
        np.testing.assert_array_equal(multi_mode_product(t, [np.eye(p) for p in t.shape]), t)

    def test_single_mode(self, rng):
        t = rng.standard_normal((2, 3, 4))
        b = rng.standard_normal((5, 3))
        np.testing.assert_array_equal(multi_mode_product(t, [None, b, None]), mode_product(t, 1, b))

    def test_transpose_and_skip(self, rng):
        t = rng.standard_normal((4, 5, 6))
        u = [rng.standard_normal((p, 2)) for p in t.shape]
        got = multi_mode_product(t, u, transpose=True, skip=1)
        want = mode_product(mode_product(t, 0, u[0].T), 2, u[2].T)
        np.testing.assert_allclose(got, want, atol=1e-13)

    def test_wrong_count(self):
        with pytest.raises(ValueError):
            multi_mode_product(np.zeros((2, 2)), [np.eye(2)])

    @given(st.lists(st.integers(1, 3), min_size=1, max_size=4), st.data())
    def test_kronecker_matricization_identity(self, rank, data):
        # unfold(S x U, k) = U_k unfold(S, k) (U_d kron .. U_{k+1} kron U_{k-1} .. U_1)^T
        rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
        s = rng.standard_normal(rank)
        u = [rng.standard_normal((r + data.draw(st.integers(0, 2)), r)) for r in rank]
        x = multi_mode_product(s, u)
        for k in range(len(rank)):
            others = [u[j] for j in range(len(rank)) if j != k]
            chain = reduce(np.kron, others[::-1]) if others else np.ones((1, 1))
            rhs = u[k] @ matricize(s, k) @ chain.T
            assert rel_err(matricize(x, k), rhs) <= 1e-12
            np.testing.assert_array_equal(kron_except(u, k), chain)

    def test_kronecker_identity_on_2x3x2_cores(self, rng):
        s = rng.standard_normal((2, 3, 2))
        u = [np.linalg.qr(rng.standard_normal((p, r)))[0] for p, r in zip((4, 5, 3), s.shape)]
        x = multi_mode_product(s, u)
        for k in range(3):
            assert rel_err(matricize(x, k), u[k] @ matricize(s, k) @ kron_except(u, k).T) <= 1e-12


class TestInner:
    def test_norm(self, rng):
        t = rng.standard_normal((3, 4))
        assert np.isclose(inner(t, t), hs_norm(t) ** 2, rtol=1e-14)
        assert inner(t, np.zeros_like(t)) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            inner(np.zeros((2, 3)), np.zeros((3, 2)))

    def test_matches_measurement(self, rng):
        a = rng.standard_normal((4, 3, 4, 5))
        x = rng.standard_normal((3, 4, 5))
        y = GeneralDense(a).apply(x)
        for i in range(4):
            assert np.isclose(inner(a[i], x), y[i], rtol=1e-13)


class TestSigns:
    def test_largest_entry_positive(self):
        u, s = normalize_signs(np.array([[0.1, 0.6], [-0.9, -0.2]]))
        np.testing.assert_array_equal(u, [[-0.1, 0.6], [0.9, -0.2]])
        np.testing.assert_array_equal(s, [-1.0, 1.0])

    def test_tie_goes_to_lowest_row(self):
        u, _ = normalize_signs(np.array([[-0.5], [0.5]]))
        np.testing.assert_array_equal(u[:, 0], [0.5, -0.5])


class TestSvdLeading:
    def test_diagonal(self):
        u = svd_leading(np.diag([3.0, 2.0, 1.0]), 2)
        np.testing.assert_allclose(u, np.eye(3)[:, :2], atol=1e-15)

    def test_rank_one(self, rng):
        a, b = rng.standard_normal(5), rng.standard_normal(4)
        u = svd_leading(np.outer(a, b), 1)
        want = normalize_signs((a / np.linalg.norm(a))[:, None])[0]
        np.testing.assert_allclose(u, want, atol=1e-14)

    def test_projection_residual(self, rng):
        m = rng.standard_normal((6, 4))
        for r in range(1, 5):
            u = svd_leading(m, r)
            assert np.abs(u.T @ u - np.eye(r)).max() <= 1e-12
            tail = np.linalg.svd(m, compute_uv=False)[r:]
            resid = np.linalg.norm(m - u @ (u.T @ m))
            assert abs(resid - np.linalg.norm(tail)) <= 1e-10

    def test_rerun_stable(self, rng):
        m = rng.standard_normal((7, 5))
        np.testing.assert_array_equal(svd_leading(m, 3), svd_leading(m.copy(), 3))

    def test_bad_rank(self):
        with pytest.raises(ValueError):
            svd_leading(np.eye(3), 4)
        with pytest.raises(ValueError):
            svd_leading(np.eye(3), 0)


class TestQr:
    def test_orthonormal_input(self, rng):
        q0 = qr_q(rng.standard_normal((6, 3)))
        np.testing.assert_allclose(qr_q(q0), q0, atol=1e-14)

    def test_hand(self):
        np.testing.assert_array_equal(qr_q(np.array([[2.0], [0.0]])), [[1.0], [0.0]])
        np.testing.assert_array_equal(qr_q(np.array([[-2.0], [0.0]])), [[-1.0], [0.0]])

    def test_projection_identity(self, rng):
        m = rng.standard_normal((5, 3))
        q = qr_q(m)
        assert np.abs(q.T @ q - np.eye(3)).max() <= 1e-12
        assert np.linalg.norm(q @ (q.T @ m) - m) < 1e-12 * np.linalg.norm(m)
        r = q.T @ m
        assert np.all(np.diag(r) > 0)

    def test_rank_deficient(self):
        with pytest.raises(ValueError):
            qr_q(np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]))
        with pytest.raises(ValueError):
            qr_q(np.zeros((2, 3)))


class TestComplement:
    def test_completes_basis(self, rng):
        u = qr_q(rng.standard_normal((7, 3)))
        c = orthonormal_complement(u)
        full = np.hstack([u, c])
        assert np.abs(full.T @ full - np.eye(7)).max() <= 1e-13
        np.testing.assert_array_equal(c, orthonormal_complement(u.copy()))

    def test_square(self):
        assert orthonormal_complement(np.eye(3)).shape == (3, 0)


class TestTextFormat:
    def test_roundtrip_exact(self, rng):
        t = rng.standard_normal((2, 3, 4))
        assert np.array_equal(parse_tensor(format_tensor(t)), t)
        buf = io.StringIO()
        write_tensor(buf, t)
        buf.seek(0)
        assert np.array_equal(read_tensor(buf), t)

    def test_file_roundtrip(self, rng, tmp_path):
        t = rng.standard_normal((3, 2))
        write_tensor(tmp_path / "t.txt", t)
        assert np.array_equal(read_tensor(tmp_path / "t.txt"), t)

    def test_layout(self):
        assert format_tensor(np.array([[1.0, 3.0], [2.0, 4.0]])) == "dims: 2 2\n1.0\n2.0\n3.0\n4.0\n"

    @pytest.mark.parametrize("text", ["", "1 2 3", "dims: 2 2\n1 2 3", "dims: 0\n", "dims: a\n1"])
    def test_malformed(self, text):
        with pytest.raises(ValueError):
            parse_tensor(text)


def test_as_tensor_rejects_scalars_and_empty():
    with pytest.raises(ValueError):
        as_tensor(3.0)
    with pytest.raises(ValueError):
        as_tensor(np.zeros((2, 0)))
