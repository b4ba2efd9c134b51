# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels.

Same contract as ``labeling_numpy``; see that module for the semantics.
The inner loops here avoid the gather/broadcast temporaries of the numpy
path, which is what makes per-epoch label generation cheap.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport acos

cnp.import_array()

cdef double PI = 3.141592653589793
cdef double DEGENERATE_EPS = 1e-12

name = "cython"


cdef inline double _angular(const double[:, ::1] a, Py_ssize_t i,
                            const double[:, ::1] b, Py_ssize_t j,
                            double norm_i, double norm_j,
                            Py_ssize_t q) noexcept nogil:
    cdef double dot = 0.0
    cdef Py_ssize_t t
    for t in range(q):
        dot += a[i, t] * b[j, t]
    cdef double cos = dot / (norm_i * norm_j)
    if cos > 1.0:
        cos = 1.0
    elif cos < -1.0:
        cos = -1.0
    return acos(cos) / PI


def pairwise_angular(const double[:, ::1] a, const double[:, ::1] b,
                     const double[::1] a_norm, const double[::1] b_norm):
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0], q = a.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((na, nb), dtype=np.float64)
    cdef double[:, ::1] d = out
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(na):
            for j in range(nb):
                d[i, j] = _angular(a, i, b, j, a_norm[i], b_norm[j], q)
    return out


def on_the_fly_labels(const double[:, ::1] z,
                      const double[:, ::1] pos, const double[:, ::1] neg,
                      const double[::1] z_norm,
                      const double[::1] pos_norm, const double[::1] neg_norm,
                      const cnp.int64_t[:, ::1] pos_idx,
                      const cnp.int64_t[:, ::1] neg_idx):
    cdef Py_ssize_t u = z.shape[0], k = pos_idx.shape[1], q = z.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] out = np.empty(u, dtype=np.uint8)
    cdef cnp.uint8_t[::1] labels = out
    cdef Py_ssize_t i, j, pj, nj
    cdef double dist_p, dist_n, total, vote_p, vote_n
    with nogil:
        for i in range(u):
            vote_p = 0.0
            vote_n = 0.0
            for j in range(k):
                pj = pos_idx[i, j]
                nj = neg_idx[i, j]
                dist_p = _angular(z, i, pos, pj, z_norm[i], pos_norm[pj], q)
                dist_n = _angular(z, i, neg, nj, z_norm[i], neg_norm[nj], q)
                if dist_p < DEGENERATE_EPS and dist_n < DEGENERATE_EPS:
                    vote_p += 0.5
                    vote_n += 0.5
                else:
                    total = dist_p + dist_n
                    vote_p += dist_p / total
                    vote_n += dist_n / total
            labels[i] = 1 if vote_p > vote_n else 0
    return out
