# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the reference kernels in ``pure``.

Same contracts, same pre-generated randomness, same 64-bit inner math with
32-bit storage; see ``pure`` for the documented semantics.
"""

from libc.math cimport exp, log1p

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "compiled"


cdef inline double _log_sigmoid(double y) noexcept nogil:
    if y >= 0.0:
        return -log1p(exp(-y))
    return y - log1p(exp(y))


cdef inline double _sigmoid(double x) noexcept nogil:
    if x > 60.0:
        return 1.0
    if x < -60.0:
        return 0.0
    return 1.0 / (1.0 + exp(-x))


def sgns_epoch(
    cnp.float32_t[:, ::1] w_in,
    cnp.float32_t[:, ::1] w_out,
    cnp.int32_t[::1] center_ids,
    cnp.int32_t[::1] bag_offsets,
    cnp.int32_t[::1] bag_rows,
    cnp.float32_t[::1] bag_coefs,
    cnp.int32_t[::1] contexts,
    cnp.int32_t[:, ::1] negatives,
    double lr,
):
    cdef Py_ssize_t n_pairs = contexts.shape[0]
    cdef Py_ssize_t n_neg = negatives.shape[1]
    cdef Py_ssize_t dim = w_in.shape[1]
    cdef double total = 0.0
    cdef double[::1] v = np.zeros(dim, dtype=np.float64)
    cdef double[::1] grad_v = np.zeros(dim, dtype=np.float64)
    cdef double[::1] u = np.zeros(dim, dtype=np.float64)
    cdef Py_ssize_t p, i, k, d, lo, hi, r
    cdef int cid, ctx, neg
    cdef double coef, x, g, xn, gn

    with nogil:
        for p in range(n_pairs):
            cid = center_ids[p]
            lo = bag_offsets[cid]
            hi = bag_offsets[cid + 1]
            for d in range(dim):
                v[d] = 0.0
                grad_v[d] = 0.0
            for i in range(lo, hi):
                r = bag_rows[i]
                coef = bag_coefs[i]
                for d in range(dim):
                    v[d] = v[d] + coef * <double>w_in[r, d]

            ctx = contexts[p]
            for d in range(dim):
                u[d] = <double>w_out[ctx, d]
            x = 0.0
            for d in range(dim):
                x = x + v[d] * u[d]
            g = _sigmoid(x) - 1.0
            total = total - _log_sigmoid(x)
            for d in range(dim):
                grad_v[d] = grad_v[d] + g * u[d]
                w_out[ctx, d] = <cnp.float32_t>(u[d] - lr * g * v[d])

            for k in range(n_neg):
                neg = negatives[p, k]
                if neg == ctx:
                    continue
                for d in range(dim):
                    u[d] = <double>w_out[neg, d]
                xn = 0.0
                for d in range(dim):
                    xn = xn + v[d] * u[d]
                gn = _sigmoid(xn)
                total = total - _log_sigmoid(-xn)
                for d in range(dim):
                    grad_v[d] = grad_v[d] + gn * u[d]
                    w_out[neg, d] = <cnp.float32_t>(u[d] - lr * gn * v[d])

            for i in range(lo, hi):
                r = bag_rows[i]
                coef = bag_coefs[i]
                for d in range(dim):
                    w_in[r, d] = <cnp.float32_t>(
                        <double>w_in[r, d] - lr * coef * grad_v[d]
                    )
    return total


def walk_fill(
    cnp.int32_t[::1] indptr,
    cnp.int32_t[::1] indices,
    cnp.int32_t[::1] starts,
    double[:, ::1] uniforms,
    cnp.int32_t[:, ::1] out,
    cnp.int32_t[::1] lengths,
):
    cdef Py_ssize_t n_walks = out.shape[0]
    cdef Py_ssize_t t = out.shape[1]
    cdef Py_ssize_t w, s
    cdef int cur, lo, hi, deg, j, steps
    with nogil:
        for w in range(n_walks):
            cur = starts[w]
            out[w, 0] = cur
            steps = 1
            for s in range(t - 1):
                lo = indptr[cur]
                hi = indptr[cur + 1]
                deg = hi - lo
                if deg == 0:
                    break
                j = <int>(uniforms[w, s] * deg)
                if j >= deg:
                    j = deg - 1
                cur = indices[lo + j]
                out[w, steps] = cur
                steps = steps + 1
            lengths[w] = steps
    return None
