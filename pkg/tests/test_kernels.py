"""Numeric kernel tests: oracles, invariants, backend parity, gradients."""

import math
from array import array
from random import Random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memescan.errors import DimensionError
from memescan.kernels import _core, available_backends, pure
from memescan.kernels import ops
from memescan.matrix import Matrix


def rand_matrix(rows, cols, rng, bound=1.0):
    return Matrix.uniform(rows, cols, bound, rng)


# -- independent oracles -------------------------------------------------------


def naive_matmul(a: Matrix, b: Matrix) -> Matrix:
    out = Matrix.zeros(a.rows, b.cols)
    for i in range(a.rows):
        for j in range(b.cols):
            out.put(i, j, math.fsum(a.at(i, k) * b.at(k, j)
                                    for k in range(a.cols)))
    return out


def naive_softmax_row(row):
    mx = max(row)
    exps = [math.exp(v - mx) for v in row]
    s = math.fsum(exps)
    return [e / s for e in exps]


class TestMatmul:
    def test_matches_fsum_oracle(self):
        rng = Random(1)
        a = rand_matrix(5, 7, rng)
        b = rand_matrix(7, 3, rng)
        got = ops.matmul(a, b)
        assert got.allclose(naive_matmul(a, b), tol=1e-12)

    def test_identity(self):
        rng = Random(2)
        a = rand_matrix(4, 4, rng)
        assert ops.matmul(a, Matrix.identity(4)) == a

    def test_tn_nt_match_explicit_transpose(self):
        rng = Random(3)
        a = rand_matrix(6, 4, rng)
        b = rand_matrix(6, 5, rng)
        assert ops.matmul_tn(a, b).allclose(
            naive_matmul(a.transpose(), b), tol=1e-12)
        c = rand_matrix(3, 4, rng)
        assert ops.matmul_nt(a, c).allclose(
            naive_matmul(a, c.transpose()), tol=1e-12)

    def test_shape_mismatch_raises(self):
        with pytest.raises(DimensionError):
            ops.matmul(Matrix.zeros(2, 3), Matrix.zeros(4, 2))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_associativity_within_tolerance(self, seed):
        rng = Random(seed)
        a, b, c = (rand_matrix(3, 3, rng) for _ in range(3))
        left = ops.matmul(ops.matmul(a, b), c)
        right = ops.matmul(a, ops.matmul(b, c))
        assert left.allclose(right, tol=1e-10)


class TestSoftmax:
    def test_matches_oracle(self):
        rng = Random(4)
        m = rand_matrix(3, 5, rng, bound=4.0)
        got = ops.softmax_rows(m)
        for i in range(3):
            want = naive_softmax_row(m.row(i))
            assert all(abs(a - b) < 1e-12 for a, b in zip(got.row(i), want))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.floats(-50, 50))
    def test_shift_invariance_and_row_sums(self, seed, shift):
        rng = Random(seed)
        m = rand_matrix(2, 4, rng, bound=5.0)
        shifted = Matrix(2, 4, [v + shift for v in m.data])
        y1 = ops.softmax_rows(m)
        y2 = ops.softmax_rows(shifted)
        assert y1.allclose(y2, tol=1e-12)
        for i in range(2):
            assert abs(sum(y1.row(i)) - 1.0) < 1e-9
            assert all(v > 0.0 for v in y1.row(i))

    def test_extreme_logits_stay_finite(self):
        y = ops.softmax_rows(Matrix(1, 3, [1e4, -1e4, 0.0]))
        assert y.all_finite()
        assert abs(sum(y.row(0)) - 1.0) < 1e-9


class TestAttention:
    def test_weights_row_stochastic_and_convex_hull(self):
        rng = Random(5)
        for _ in range(50):
            q = rand_matrix(3, 4, rng, 2.0)
            k = rand_matrix(6, 4, rng, 2.0)
            v = rand_matrix(6, 4, rng, 2.0)
            out, w = ops.attention(q, k, v)
            for i in range(w.rows):
                assert abs(sum(w.row(i)) - 1.0) < 1e-9
            for j in range(v.cols):
                col = [v.at(r, j) for r in range(v.rows)]
                lo, hi = min(col), max(col)
                for i in range(out.rows):
                    assert lo - 1e-12 <= out.at(i, j) <= hi + 1e-12

    def test_uniform_keys_average_values(self):
        # identical keys -> uniform weights -> output is the value mean
        rng = Random(6)
        q = rand_matrix(2, 3, rng)
        k = Matrix.from_rows([[1.0, 2.0, 3.0]] * 4)
        v = rand_matrix(4, 3, rng)
        out, w = ops.attention(q, k, v)
        mean = v.mean_rows()
        for i in range(2):
            assert all(abs(a - b) < 1e-12
                       for a, b in zip(out.row(i), mean.row(0)))

    def test_scaling_matches_formula(self):
        rng = Random(7)
        q = rand_matrix(2, 4, rng)
        k = rand_matrix(3, 4, rng)
        v = rand_matrix(3, 4, rng)
        _, w = ops.attention(q, k, v)
        scores = naive_matmul(q, k.transpose()).scale(1.0 / math.sqrt(4))
        want = ops.softmax_rows(scores)
        assert w.allclose(want, tol=1e-12)


class TestConv1d:
    def test_hand_case(self):
        # length 3, d_in 1, width 2, kernel rows [w0, w1]
        seq = Matrix.from_rows([[1.0], [2.0], [3.0]])
        ker = Matrix.from_rows([[10.0], [100.0]])
        out = ops.conv1d_forward(seq, ker, width=2)
        assert out.tolist() == [[1 * 10 + 2 * 100], [2 * 10 + 3 * 100]]

    def test_output_length(self):
        rng = Random(8)
        seq = rand_matrix(7, 2, rng)
        for width in (1, 2, 3):
            ker = rand_matrix(width * 2, 3, rng)
            out = ops.conv1d_forward(seq, ker, width=width)
            assert out.shape == (7 - width + 1, 3)

    def test_width_larger_than_sequence_raises(self):
        with pytest.raises(DimensionError):
            ops.conv1d_forward(Matrix.zeros(2, 2), Matrix.zeros(6, 2), width=3)


class TestCrossEntropy:
    def test_hand_value(self):
        logits = Matrix(1, 3, [1.0, 2.0, 3.0])
        loss, grad = ops.cross_entropy(logits, 2)
        probs = naive_softmax_row([1.0, 2.0, 3.0])
        assert abs(loss - (-math.log(probs[2]))) < 1e-12
        want = [probs[0], probs[1], probs[2] - 1.0]
        assert all(abs(a - b) < 1e-12 for a, b in zip(grad.row(0), want))

    def test_grad_sums_to_zero(self):
        rng = Random(9)
        logits = rand_matrix(1, 5, rng, 3.0)
        _, grad = ops.cross_entropy(logits, 1)
        assert abs(sum(grad.row(0))) < 1e-12


# -- gradient checks on individual ops ------------------------------------------


def test_linear_backward_gradcheck():
    rng = Random(10)
    x = rand_matrix(3, 4, rng)
    w = rand_matrix(4, 2, rng)
    b = rand_matrix(1, 2, rng)

    def f_w(point):
        out = ops.linear_forward(x, point, b)
        loss = sum(v * v for v in out.data)
        dout = out.scale(2.0)
        _, dw, _ = ops.linear_backward(x, point, dout)
        return loss, dw

    assert ops.finite_diff_check(f_w, w, eps=1e-5) < 1e-6


def test_attention_backward_gradcheck():
    rng = Random(11)
    q = rand_matrix(2, 3, rng)
    k = rand_matrix(4, 3, rng)
    v = rand_matrix(4, 3, rng)

    def make(which):
        def f(point):
            args = {"q": q, "k": k, "v": v}
            args[which] = point
            out, w = ops.attention(args["q"], args["k"], args["v"])
            loss = sum(x * x for x in out.data)
            dq, dk, dv = ops.attention_backward(
                args["q"], args["k"], args["v"], w, out.scale(2.0))
            return loss, {"q": dq, "k": dk, "v": dv}[which]
        return f

    for which, point in (("q", q), ("k", k), ("v", v)):
        assert ops.finite_diff_check(make(which), point, eps=1e-5) < 1e-5


def test_conv1d_backward_gradcheck():
    rng = Random(12)
    seq = rand_matrix(5, 2, rng)
    ker = rand_matrix(4, 3, rng)

    def f_ker(point):
        out = ops.conv1d_forward(seq, point, width=2)
        loss = sum(v * v for v in out.data)
        _, dker = ops.conv1d_backward(seq, point, 2, 1, out.scale(2.0))
        return loss, dker

    def f_seq(point):
        out = ops.conv1d_forward(point, ker, width=2)
        loss = sum(v * v for v in out.data)
        dseq, _ = ops.conv1d_backward(point, ker, 2, 1, out.scale(2.0))
        return loss, dseq

    assert ops.finite_diff_check(f_ker, ker, eps=1e-5) < 1e-6
    assert ops.finite_diff_check(f_seq, seq, eps=1e-5) < 1e-6


def test_softmax_tanh_backward_gradcheck():
    rng = Random(13)
    x = rand_matrix(2, 4, rng, 2.0)

    def f_soft(point):
        y = ops.softmax_rows(point)
        loss = sum(v * v for v in y.data)
        return loss, ops.softmax_rows_backward(y, y.scale(2.0))

    def f_tanh(point):
        y = ops.tanh_m(point)
        loss = sum(v * v for v in y.data)
        return loss, ops.tanh_backward(y, y.scale(2.0))

    assert ops.finite_diff_check(f_soft, x, eps=1e-5) < 1e-5
    assert ops.finite_diff_check(f_tanh, x, eps=1e-5) < 1e-6


# -- backend parity -------------------------------------------------------------


def _buf(n, rng):
    return array("d", [rng.uniform(-2.0, 2.0) for _ in range(n)])


class TestBackendParity:
    """The compiled backend must be bit-identical to the pure one."""

    def test_both_backends_available(self):
        names = available_backends()
        assert "pure" in names and "compiled" in names

    def test_all_kernels_bit_identical(self):
        rng = Random(14)
        n, m, k = 6, 5, 4
        a = _buf(n * m, rng)
        b = _buf(m * k, rng)
        b2 = _buf(n * k, rng)

        assert list(pure.matmul(a, n, m, b, m, k)) == \
            list(_core.matmul(a, n, m, b, m, k))
        assert list(pure.matmul_tn(a, n, m, b2, n, k)) == \
            list(_core.matmul_tn(a, n, m, b2, n, k))
        c = _buf(k * m, rng)
        assert list(pure.matmul_nt(a, n, m, c, k, m)) == \
            list(_core.matmul_nt(a, n, m, c, k, m))

        assert list(pure.softmax_rows(a, n, m)) == \
            list(_core.softmax_rows(a, n, m))
        y = pure.softmax_rows(a, n, m)
        dy = _buf(n * m, rng)
        assert list(pure.softmax_rows_bwd(y, dy, n, m)) == \
            list(_core.softmax_rows_bwd(y, dy, n, m))

        seq = _buf(6 * 3, rng)
        ker = _buf(2 * 3 * 4, rng)
        fwd_p = pure.conv1d_fwd(seq, 6, 3, ker, 2, 4, 1)
        fwd_c = _core.conv1d_fwd(seq, 6, 3, ker, 2, 4, 1)
        assert list(fwd_p) == list(fwd_c)
        gout = _buf(len(fwd_p), rng)
        bp = pure.conv1d_bwd(seq, 6, 3, ker, 2, 4, 1, gout, 5)
        bc = _core.conv1d_bwd(seq, 6, 3, ker, 2, 4, 1, gout, 5)
        assert list(bp[0]) == list(bc[0]) and list(bp[1]) == list(bc[1])

        assert list(pure.tanh_fwd(a, len(a))) == \
            list(_core.tanh_fwd(a, len(a)))
        assert list(pure.transpose(a, n, m)) == \
            list(_core.transpose(a, n, m))

        ap, ac = array("d", a), array("d", a)
        extra = _buf(len(a), rng)
        pure.axpy_inplace(ap, 0.37, extra, len(a))
        _core.axpy_inplace(ac, 0.37, extra, len(a))
        assert list(ap) == list(ac)

    def test_pure_env_var_selects_pure(self):
        import os
        import subprocess
        import sys
        out = subprocess.run(
            [sys.executable, "-c",
             "from memescan.kernels import BACKEND_NAME; print(BACKEND_NAME)"],
            env=dict(os.environ, MEMESCAN_PURE="1"),
            capture_output=True, text=True)
        assert out.stdout.strip() == "pure"
