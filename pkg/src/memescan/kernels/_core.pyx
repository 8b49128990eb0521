# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend.

Mirrors ``memescan.kernels.pure`` loop for loop; accumulation order is
identical so both backends produce bit-identical float64 results.
"""

from array import array

from libc.math cimport exp, tanh

NAME = "compiled"


def matmul(double[:] a, int ar, int ac, double[:] b, int br, int bc):
    out = array("d", bytes(8 * ar * bc))
    cdef double[:] o = out
    cdef int i, j, k, abase, obase
    cdef double acc
    for i in range(ar):
        abase = i * ac
        obase = i * bc
        for j in range(bc):
            acc = 0.0
            for k in range(ac):
                acc += a[abase + k] * b[k * bc + j]
            o[obase + j] = acc
    return out


def softmax_rows(double[:] a, int r, int c):
    out = array("d", bytes(8 * r * c))
    cdef double[:] o = out
    cdef int i, j, base
    cdef double mx, s, e, inv
    for i in range(r):
        base = i * c
        mx = a[base]
        for j in range(1, c):
            if a[base + j] > mx:
                mx = a[base + j]
        s = 0.0
        for j in range(c):
            e = exp(a[base + j] - mx)
            o[base + j] = e
            s += e
        inv = 1.0 / s
        for j in range(c):
            o[base + j] *= inv
    return out


def softmax_rows_bwd(double[:] y, double[:] dy, int r, int c):
    out = array("d", bytes(8 * r * c))
    cdef double[:] o = out
    cdef int i, j, base
    cdef double dot
    for i in range(r):
        base = i * c
        dot = 0.0
        for j in range(c):
            dot += dy[base + j] * y[base + j]
        for j in range(c):
            o[base + j] = y[base + j] * (dy[base + j] - dot)
    return out


def conv1d_fwd(double[:] seq, int length, int d_in, double[:] ker,
               int width, int d_out, int stride):
    cdef int out_len = (length - width) // stride + 1
    out = array("d", bytes(8 * out_len * d_out))
    cdef double[:] o = out
    cdef int t, oo, w, i, sbase, obase, srow, krow
    cdef double acc
    for t in range(out_len):
        sbase = t * stride
        obase = t * d_out
        for oo in range(d_out):
            acc = 0.0
            for w in range(width):
                srow = (sbase + w) * d_in
                krow = w * d_in
                for i in range(d_in):
                    acc += seq[srow + i] * ker[(krow + i) * d_out + oo]
            o[obase + oo] = acc
    return out


def conv1d_bwd(double[:] seq, int length, int d_in, double[:] ker,
               int width, int d_out, int stride, double[:] gout, int out_len):
    dseq = array("d", bytes(8 * length * d_in))
    dker = array("d", bytes(8 * width * d_in * d_out))
    cdef double[:] ds = dseq
    cdef double[:] dk = dker
    cdef int t, oo, w, i, sbase, obase, srow, krow
    cdef double g
    for t in range(out_len):
        sbase = t * stride
        obase = t * d_out
        for oo in range(d_out):
            g = gout[obase + oo]
            for w in range(width):
                srow = (sbase + w) * d_in
                krow = w * d_in
                for i in range(d_in):
                    ds[srow + i] += g * ker[(krow + i) * d_out + oo]
                    dk[(krow + i) * d_out + oo] += g * seq[srow + i]
    return dseq, dker


def tanh_fwd(double[:] a, int n):
    out = array("d", bytes(8 * n))
    cdef double[:] o = out
    cdef int i
    for i in range(n):
        o[i] = tanh(a[i])
    return out


def tanh_bwd(double[:] y, double[:] dy, int n):
    out = array("d", bytes(8 * n))
    cdef double[:] o = out
    cdef int i
    for i in range(n):
        o[i] = dy[i] * (1.0 - y[i] * y[i])
    return out


def matmul_tn(double[:] a, int ar, int ac, double[:] b, int br, int bc):
    out = array("d", bytes(8 * ac * bc))
    cdef double[:] o = out
    cdef int i, j, k, obase
    cdef double acc
    for i in range(ac):
        obase = i * bc
        for j in range(bc):
            acc = 0.0
            for k in range(ar):
                acc += a[k * ac + i] * b[k * bc + j]
            o[obase + j] = acc
    return out


def matmul_nt(double[:] a, int ar, int ac, double[:] b, int br, int bc):
    out = array("d", bytes(8 * ar * br))
    cdef double[:] o = out
    cdef int i, j, k, abase, obase, bbase
    cdef double acc
    for i in range(ar):
        abase = i * ac
        obase = i * br
        for j in range(br):
            acc = 0.0
            bbase = j * bc
            for k in range(ac):
                acc += a[abase + k] * b[bbase + k]
            o[obase + j] = acc
    return out


def transpose(double[:] a, int r, int c):
    out = array("d", bytes(8 * r * c))
    cdef double[:] o = out
    cdef int i, j, base
    for i in range(r):
        base = i * c
        for j in range(c):
            o[j * r + i] = a[base + j]
    return out


def add_inplace(double[:] a, double[:] b, int n):
    cdef int i
    for i in range(n):
        a[i] += b[i]


def axpy_inplace(double[:] a, double s, double[:] b, int n):
    cdef int i
    for i in range(n):
        a[i] += s * b[i]


def scale_copy(double[:] a, double s, int n):
    out = array("d", bytes(8 * n))
    cdef double[:] o = out
    cdef int i
    for i in range(n):
        o[i] = a[i] * s
    return out
