# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled dense-MLP kernels.

Same contract and parameter layout as ``_pymlp``; matrix products go
straight to BLAS through scipy's Cython bindings, and the bias/activation
passes run as C loops, so a training step makes no per-layer Python calls.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline void _gemm(char ta, char tb, int m, int n, int k,
                       double *a, int lda, double *b, int ldb,
                       double *c, int ldc) noexcept nogil:
    cdef double one = 1.0
    cdef double zero = 0.0
    dgemm(&ta, &tb, &m, &n, &k, &one, a, &lda, b, &ldb, &zero, c, &ldc)


def forward_cache(double[::1] theta, sizes, bint sigmoid_all, X):
    cdef int n_layers = len(sizes) - 1
    cdef int batch = X.shape[0]
    cdef Py_ssize_t w_off = 0
    cdef Py_ssize_t b_off = 0
    cdef int i, r, c, n_in, n_out
    cdef double v
    cdef double[:, ::1] h
    cdef double[:, ::1] out
    for i in range(n_layers):
        b_off += sizes[i] * sizes[i + 1]
    h = np.ascontiguousarray(X, dtype=np.float64)
    acts = [np.asarray(h)]
    for i in range(n_layers):
        n_in = sizes[i]
        n_out = sizes[i + 1]
        arr = np.empty((batch, n_out), dtype=np.float64)
        out = arr
        with nogil:
            _gemm(b'N', b'N', n_out, batch, n_in,
                  &theta[w_off], n_out, &h[0, 0], n_in, &out[0, 0], n_out)
            for r in range(batch):
                for c in range(n_out):
                    v = out[r, c] + theta[b_off + c]
                    if sigmoid_all:
                        v = 1.0 / (1.0 + exp(-v))
                    elif i < n_layers - 1 and v < 0.0:
                        v = 0.0
                    out[r, c] = v
        acts.append(arr)
        h = out
        w_off += n_in * n_out
        b_off += n_out
    return acts


def backward_cache(double[::1] theta, sizes, bint sigmoid_all, acts, G):
    cdef int n_layers = len(sizes) - 1
    cdef int batch = G.shape[0]
    cdef int i, r, c, n_in, n_out
    cdef double a
    cdef double[:, ::1] delta = np.array(G, dtype=np.float64, order="C")
    cdef double[:, ::1] prev
    cdef double[:, ::1] out
    cdef double[:, ::1] inp
    cdef double[::1] grad
    grad_arr = np.zeros(theta.shape[0], dtype=np.float64)
    grad = grad_arr

    w_offs = []
    b_offs = []
    cdef Py_ssize_t w_total = 0
    for i in range(n_layers):
        w_offs.append(w_total)
        w_total += sizes[i] * sizes[i + 1]
    cdef Py_ssize_t b_acc = w_total
    for i in range(n_layers):
        b_offs.append(b_acc)
        b_acc += sizes[i + 1]

    cdef Py_ssize_t wo, bo
    for i in range(n_layers - 1, -1, -1):
        n_in = sizes[i]
        n_out = sizes[i + 1]
        wo = w_offs[i]
        bo = b_offs[i]
        out = acts[i + 1]
        inp = acts[i]
        with nogil:
            for r in range(batch):
                for c in range(n_out):
                    if sigmoid_all:
                        a = out[r, c]
                        delta[r, c] = delta[r, c] * a * (1.0 - a)
                    elif i < n_layers - 1 and out[r, c] <= 0.0:
                        delta[r, c] = 0.0
            _gemm(b'N', b'T', n_out, n_in, batch,
                  &delta[0, 0], n_out, &inp[0, 0], n_in, &grad[wo], n_out)
            for r in range(batch):
                for c in range(n_out):
                    grad[bo + c] += delta[r, c]
        if i > 0:
            prev = np.empty((batch, n_in), dtype=np.float64)
            with nogil:
                _gemm(b'T', b'N', n_in, batch, n_out,
                      &theta[wo], n_out, &delta[0, 0], n_out, &prev[0, 0], n_in)
            delta = prev
    return grad_arr
