"""Pure-Python kernel backend.

Reference implementation of the hot numeric loops. The compiled backend in
``_core.pyx`` mirrors these loops statement for statement; both accumulate
strictly left-to-right so outputs are bit-identical between backends.

All functions take flat row-major float buffers plus explicit dimensions and
return a new ``array('d')``.
"""

import math
from array import array

NAME = "pure"


def matmul(a, ar, ac, b, br, bc):
    """C[i,j] = sum_k A[i,k] * B[k,j], k accumulated left-to-right."""
    out = array("d", bytes(8 * ar * bc))
    for i in range(ar):
        abase = i * ac
        obase = i * bc
        for j in range(bc):
            acc = 0.0
            for k in range(ac):
                acc += a[abase + k] * b[k * bc + j]
            out[obase + j] = acc
    return out


def softmax_rows(a, r, c):
    """Row softmax, stabilized by per-row max subtraction."""
    out = array("d", bytes(8 * r * c))
    for i in range(r):
        base = i * c
        mx = a[base]
        for j in range(1, c):
            if a[base + j] > mx:
                mx = a[base + j]
        s = 0.0
        for j in range(c):
            e = math.exp(a[base + j] - mx)
            out[base + j] = e
            s += e
        inv = 1.0 / s
        for j in range(c):
            out[base + j] *= inv
    return out


def softmax_rows_bwd(y, dy, r, c):
    """dx[i,j] = y[i,j] * (dy[i,j] - sum_k dy[i,k] * y[i,k])."""
    out = array("d", bytes(8 * r * c))
    for i in range(r):
        base = i * c
        dot = 0.0
        for j in range(c):
            dot += dy[base + j] * y[base + j]
        for j in range(c):
            out[base + j] = y[base + j] * (dy[base + j] - dot)
    return out


def conv1d_fwd(seq, length, d_in, ker, width, d_out, stride):
    """Valid 1-D convolution over rows of seq.

    ker is (width * d_in) x d_out; offset w occupies rows
    [w*d_in, (w+1)*d_in). Output has floor((length-width)/stride)+1 rows.
    """
    out_len = (length - width) // stride + 1
    out = array("d", bytes(8 * out_len * d_out))
    for t in range(out_len):
        sbase = t * stride
        obase = t * d_out
        for o in range(d_out):
            acc = 0.0
            for w in range(width):
                srow = (sbase + w) * d_in
                krow = w * d_in
                for i in range(d_in):
                    acc += seq[srow + i] * ker[(krow + i) * d_out + o]
            out[obase + o] = acc
    return out


def conv1d_bwd(seq, length, d_in, ker, width, d_out, stride, gout, out_len):
    """Gradients of conv1d_fwd w.r.t. seq and ker given upstream gout."""
    dseq = array("d", bytes(8 * length * d_in))
    dker = array("d", bytes(8 * width * d_in * d_out))
    for t in range(out_len):
        sbase = t * stride
        obase = t * d_out
        for o in range(d_out):
            g = gout[obase + o]
            for w in range(width):
                srow = (sbase + w) * d_in
                krow = w * d_in
                for i in range(d_in):
                    dseq[srow + i] += g * ker[(krow + i) * d_out + o]
                    dker[(krow + i) * d_out + o] += g * seq[srow + i]
    return dseq, dker


def tanh_fwd(a, n):
    out = array("d", bytes(8 * n))
    for i in range(n):
        out[i] = math.tanh(a[i])
    return out


def tanh_bwd(y, dy, n):
    """dx = dy * (1 - y^2) where y = tanh(x)."""
    out = array("d", bytes(8 * n))
    for i in range(n):
        out[i] = dy[i] * (1.0 - y[i] * y[i])
    return out


def matmul_tn(a, ar, ac, b, br, bc):
    """C = A.T @ B for A stored ar x ac: C[i,j] = sum_k A[k,i] * B[k,j]."""
    out = array("d", bytes(8 * ac * bc))
    for i in range(ac):
        obase = i * bc
        for j in range(bc):
            acc = 0.0
            for k in range(ar):
                acc += a[k * ac + i] * b[k * bc + j]
            out[obase + j] = acc
    return out


def matmul_nt(a, ar, ac, b, br, bc):
    """C = A @ B.T for B stored br x bc: C[i,j] = sum_k A[i,k] * B[j,k]."""
    out = array("d", bytes(8 * ar * br))
    for i in range(ar):
        abase = i * ac
        obase = i * br
        for j in range(br):
            acc = 0.0
            bbase = j * bc
            for k in range(ac):
                acc += a[abase + k] * b[bbase + k]
            out[obase + j] = acc
    return out


def transpose(a, r, c):
    out = array("d", bytes(8 * r * c))
    for i in range(r):
        base = i * c
        for j in range(c):
            out[j * r + i] = a[base + j]
    return out


def add_inplace(a, b, n):
    for i in range(n):
        a[i] += b[i]


def axpy_inplace(a, s, b, n):
    """a += s * b, in place."""
    for i in range(n):
        a[i] += s * b[i]


def scale_copy(a, s, n):
    out = array("d", bytes(8 * n))
    for i in range(n):
        out[i] = a[i] * s
    return out
