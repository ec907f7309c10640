# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled ranking and label kernels. See geea.kernels for the public API."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def true_ranks(const double[:, ::1] scores, const cnp.int64_t[::1] truth):
    """1-based rank of ``truth[i]`` in row ``i`` (descending, ties -> lower column first)."""
    cdef Py_ssize_t n_rows = scores.shape[0]
    cdef Py_ssize_t n_cols = scores.shape[1]
    cdef Py_ssize_t i, j
    cdef cnp.int64_t t, rank
    cdef double s
    out = np.empty(n_rows, dtype=np.int64)
    cdef cnp.int64_t[::1] ranks = out
    if truth.shape[0] != n_rows:
        raise ValueError("truth must have one entry per row")
    for i in range(n_rows):
        t = truth[i]
        if t < 0 or t >= n_cols:
            raise IndexError(f"truth column {t} out of range for {n_cols} columns")
        s = scores[i, t]
        rank = 1
        for j in range(t):
            if scores[i, j] >= s:
                rank += 1
        for j in range(t + 1, n_cols):
            if scores[i, j] > s:
                rank += 1
        ranks[i] = rank
    return out


def multi_hot(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
              const cnp.int64_t[::1] rows, Py_ssize_t width):
    """Dense float32 ``[len(rows), width]`` label matrix from CSR sets."""
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t n_sets = indptr.shape[0] - 1
    cdef Py_ssize_t i, k
    cdef cnp.int64_t r, col
    out = np.zeros((n, width), dtype=np.float32)
    cdef float[:, ::1] labels = out
    for i in range(n):
        r = rows[i]
        if r < 0 or r >= n_sets:
            raise IndexError(f"row {r} out of range for {n_sets} sets")
        for k in range(indptr[r], indptr[r + 1]):
            col = indices[k]
            if col < 0 or col >= width:
                raise IndexError(f"column {col} out of range for width {width}")
            labels[i, col] = 1.0
    return out
