# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled single-input MLP forward (tanh hidden layers, linear output).

Episode rollouts call the policy once per simulation step, so the per-call
numpy dispatch overhead dominates; this kernel runs the whole layer chain
in one call over a packed parameter buffer.  Layout produced by
``fleetptc.nn.backend.pack_mlp``: per layer, W (out*in doubles, row-major)
followed by the bias (out doubles).
"""

from libc.math cimport tanh
from libc.string cimport memcpy

from scipy.linalg.cython_blas cimport dgemv


def mlp_forward_one(long[::1] dims, double[::1] buf, double[::1] x,
                    double[::1] work, double[::1] out):
    """work must hold >= 2*max(dims) doubles; out holds dims[-1]."""
    cdef int n_layers = dims.shape[0] - 1
    cdef Py_ssize_t max_dim = 0, k
    for k in range(dims.shape[0]):
        if dims[k] > max_dim:
            max_dim = dims[k]

    cdef double* cur = &work[0]
    cdef double* nxt = &work[max_dim]
    cdef double* tmp
    cdef double* wp = &buf[0]
    cdef Py_ssize_t off = 0
    cdef char trans = b'T'
    cdef int m, n, inc = 1, l, i
    cdef double alpha = 1.0, beta = 1.0

    memcpy(cur, &x[0], dims[0] * sizeof(double))
    for l in range(n_layers):
        m = <int> dims[l]
        n = <int> dims[l + 1]
        # y starts as the bias, then y += W @ x via A^T x with A = W^T
        memcpy(nxt, wp + off + <Py_ssize_t> m * n, n * sizeof(double))
        dgemv(&trans, &m, &n, &alpha, wp + off, &m, cur, &inc, &beta, nxt, &inc)
        if l < n_layers - 1:
            for i in range(n):
                nxt[i] = tanh(nxt[i])
        off += <Py_ssize_t> m * n + n
        tmp = cur
        cur = nxt
        nxt = tmp

    memcpy(&out[0], cur, dims[n_layers] * sizeof(double))
