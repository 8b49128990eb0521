"""Forward and backward numeric operations on :class:`Matrix`.

Every op here is a pure function with a hand-written backward pass; there is
no autodiff tape. The fused model in ``memescan.model`` composes these and
chains the backwards manually. Heavy loops dispatch to the selected kernel
backend (compiled or pure).
"""

from __future__ import annotations

import math

from ..errors import DimensionError
from ..matrix import Matrix
from . import backend


# -- basic linear algebra --------------------------------------------------

def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.cols != b.rows:
        raise DimensionError(f"matmul {a.shape} x {b.shape}")
    out = backend.matmul(a.data, a.rows, a.cols, b.data, b.rows, b.cols)
    return Matrix(a.rows, b.cols, out)


def matmul_tn(a: Matrix, b: Matrix) -> Matrix:
    """a.T @ b without materializing the transpose."""
    if a.rows != b.rows:
        raise DimensionError(f"matmul_tn {a.shape} x {b.shape}")
    out = backend.matmul_tn(a.data, a.rows, a.cols, b.data, b.rows, b.cols)
    return Matrix(a.cols, b.cols, out)


def matmul_nt(a: Matrix, b: Matrix) -> Matrix:
    """a @ b.T without materializing the transpose."""
    if a.cols != b.cols:
        raise DimensionError(f"matmul_nt {a.shape} x {b.shape}")
    out = backend.matmul_nt(a.data, a.rows, a.cols, b.data, b.rows, b.cols)
    return Matrix(a.rows, b.rows, out)


def linear_forward(x: Matrix, w: Matrix, b: Matrix) -> Matrix:
    """out = x @ w + b, with b a 1 x w.cols row vector broadcast per row."""
    if x.cols != w.rows:
        raise DimensionError(f"linear {x.shape} x {w.shape}")
    return matmul(x, w).add_row_vector(b)


def linear_backward(x: Matrix, w: Matrix, dout: Matrix):
    """Returns (dx, dw, db) for out = x @ w + b."""
    dx = matmul_nt(dout, w)
    dw = matmul_tn(x, dout)
    db = dout.col_sums()
    return dx, dw, db


# -- softmax & attention ---------------------------------------------------

def softmax_rows(m: Matrix) -> Matrix:
    if m.rows == 0 or m.cols == 0:
        raise DimensionError("softmax of empty matrix")
    out = backend.softmax_rows(m.data, m.rows, m.cols)
    return Matrix(m.rows, m.cols, out)


def softmax_rows_backward(y: Matrix, dy: Matrix) -> Matrix:
    y._check_same_shape(dy)
    out = backend.softmax_rows_bwd(y.data, dy.data, y.rows, y.cols)
    return Matrix(y.rows, y.cols, out)


def attention(q: Matrix, k: Matrix, v: Matrix):
    """Scaled dot-product attention.

    weights = softmax(q @ k.T / sqrt(d_k)); out = weights @ v.
    Returns (out, weights).
    """
    if q.cols != k.cols:
        raise DimensionError(f"attention d_k mismatch {q.shape} vs {k.shape}")
    if v.rows != k.rows:
        raise DimensionError(f"attention k/v row mismatch {k.shape} vs {v.shape}")
    scale = 1.0 / math.sqrt(k.cols)
    scores = matmul_nt(q, k).scale(scale)
    weights = softmax_rows(scores)
    out = matmul(weights, v)
    return out, weights


def attention_backward(q: Matrix, k: Matrix, v: Matrix, weights: Matrix,
                       dout: Matrix, dweights: Matrix | None = None):
    """Gradients of attention() given upstream dout (and optional dweights)."""
    dv = matmul_tn(weights, dout)
    dw = matmul_nt(dout, v)
    if dweights is not None:
        dw = dw.add(dweights)
    dscores = softmax_rows_backward(weights, dw).scale(1.0 / math.sqrt(k.cols))
    dq = matmul(dscores, k)
    dk = matmul_tn(dscores, q)
    return dq, dk, dv


# -- 1-D convolution ---------------------------------------------------------

def conv1d_forward(seq: Matrix, kernel: Matrix, width: int, stride: int = 1) -> Matrix:
    """Valid (unpadded) 1-D convolution over the rows of seq.

    kernel is (width * d_in) x d_out; offset w occupies kernel rows
    [w*d_in, (w+1)*d_in).
    """
    if width < 1 or stride < 1:
        raise DimensionError("width and stride must be >= 1")
    if width > seq.rows:
        raise DimensionError(f"conv width {width} > sequence length {seq.rows}")
    if kernel.rows != width * seq.cols:
        raise DimensionError(
            f"kernel rows {kernel.rows} != width*d_in {width * seq.cols}"
        )
    d_out = kernel.cols
    out_len = (seq.rows - width) // stride + 1
    out = backend.conv1d_fwd(seq.data, seq.rows, seq.cols, kernel.data,
                             width, d_out, stride)
    return Matrix(out_len, d_out, out)


def conv1d_backward(seq: Matrix, kernel: Matrix, width: int, stride: int,
                    dout: Matrix):
    """Returns (dseq, dkernel) for conv1d_forward."""
    dseq, dker = backend.conv1d_bwd(seq.data, seq.rows, seq.cols, kernel.data,
                                    width, kernel.cols, stride, dout.data,
                                    dout.rows)
    return (Matrix(seq.rows, seq.cols, dseq),
            Matrix(kernel.rows, kernel.cols, dker))


# -- nonlinearity ------------------------------------------------------------

def tanh_m(m: Matrix) -> Matrix:
    return Matrix(m.rows, m.cols, backend.tanh_fwd(m.data, len(m.data)))


def tanh_backward(y: Matrix, dy: Matrix) -> Matrix:
    y._check_same_shape(dy)
    return Matrix(y.rows, y.cols, backend.tanh_bwd(y.data, dy.data, len(y.data)))


# -- loss ---------------------------------------------------------------------

def cross_entropy(logits: Matrix, gold: int):
    """Negative log softmax likelihood of class `gold`.

    logits is a 1 x n row vector. Returns (loss, grad) with
    grad = softmax(logits) - one_hot(gold).
    """
    if logits.rows != 1:
        raise DimensionError("logits must be a single row")
    n = logits.cols
    if not 0 <= gold < n:
        raise IndexError(f"gold class {gold} out of range [0, {n})")
    probs = softmax_rows(logits)
    p = probs.at(0, gold)
    loss = -math.log(p) if p > 0.0 else float("inf")
    grad = probs.copy()
    grad.data[gold] -= 1.0
    return loss, grad


# -- gradient verification ----------------------------------------------------

def finite_diff_check(f, point: Matrix, eps: float) -> float:
    """Max relative error between analytic and central-difference gradients.

    `f(point)` must return (scalar_value, grad_matrix). The relative error of
    entry e is |analytic_e - fd_e| / max(|analytic_e|, 1e-8).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    _, grad = f(point)
    if grad.shape != point.shape:
        raise DimensionError("analytic gradient shape mismatch")
    worst = 0.0
    work = point.copy()
    for idx in range(len(point.data)):
        orig = work.data[idx]
        work.data[idx] = orig + eps
        plus, _ = f(work)
        work.data[idx] = orig - eps
        minus, _ = f(work)
        work.data[idx] = orig
        fd = (plus - minus) / (2.0 * eps)
        analytic = grad.data[idx]
        err = abs(analytic - fd) / max(abs(analytic), 1e-8)
        if err > worst:
            worst = err
    return worst
