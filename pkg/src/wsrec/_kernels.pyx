# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the ALS and BPR learners.

Both functions update their first argument in place. Arrays must be
C-contiguous float64 (factors) and int64 (index structure).
"""

from libc.math cimport exp
from libc.stdint cimport int64_t
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dsyrk
from scipy.linalg.cython_lapack cimport dposv


def bpr_epoch(double[:, ::1] P, double[:, ::1] Q,
              const int64_t[::1] users, const int64_t[::1] pos, const int64_t[::1] neg,
              double lr, double reg):
    """Sequential SGD over the given (user, positive, negative) triplets."""
    cdef Py_ssize_t n = users.shape[0]
    cdef Py_ssize_t d = P.shape[1]
    cdef Py_ssize_t t, f
    cdef int64_t u, i, j
    cdef double x, g, pu, qi, qj
    with nogil:
        for t in range(n):
            u = users[t]
            i = pos[t]
            j = neg[t]
            x = 0.0
            for f in range(d):
                x = x + P[u, f] * (Q[i, f] - Q[j, f])
            # sigmoid(-x)
            g = 1.0 / (1.0 + exp(x))
            for f in range(d):
                pu = P[u, f]
                qi = Q[i, f]
                qj = Q[j, f]
                P[u, f] = pu + lr * (g * (qi - qj) - reg * pu)
                Q[i, f] = qi + lr * (g * pu - reg * qi)
                Q[j, f] = qj + lr * (-g * pu - reg * qj)


def als_half_pass(double[:, ::1] X, const double[:, ::1] Y,
                  const int64_t[::1] indptr, const int64_t[::1] indices,
                  double alpha, double reg):
    """Solve every row of X against fixed Y under confidence weights 1 + alpha.

    Row u solves (Y'Y + alpha * Yu'Yu + reg*I) x = (1 + alpha) * sum(Yu).
    Returns the number of rows solved.
    """
    cdef int d = <int>Y.shape[1]
    cdef int n_other = <int>Y.shape[0]
    cdef Py_ssize_t n_rows = X.shape[0]
    cdef Py_ssize_t r, k, f, start, stop
    cdef int nu, one = 1, info = 0
    cdef double one_d = 1.0, zero_d = 0.0
    cdef double scale = alpha
    cdef char uplo = b'L'
    cdef char trans = b'N'
    cdef double *G
    cdef double *A
    cdef double *b
    cdef double *buf
    cdef int64_t max_row = 0

    if X.shape[1] != d:
        raise ValueError("factor dimensions differ")
    for r in range(n_rows):
        if indptr[r + 1] - indptr[r] > max_row:
            max_row = indptr[r + 1] - indptr[r]

    G = <double *>malloc(d * d * sizeof(double))
    A = <double *>malloc(d * d * sizeof(double))
    b = <double *>malloc(d * sizeof(double))
    buf = <double *>malloc((max_row + 1) * d * sizeof(double))
    if G == NULL or A == NULL or b == NULL or buf == NULL:
        free(G); free(A); free(b); free(buf)
        raise MemoryError()

    try:
        with nogil:
            # Row-major Y (n x d) is column-major Y' (d x n); lower triangle of Y'Y.
            if n_other > 0:
                dsyrk(&uplo, &trans, &d, &n_other, &one_d, <double *>&Y[0, 0], &d, &zero_d, G, &d)
            else:
                for f in range(d * d):
                    G[f] = 0.0
            for r in range(n_rows):
                start = indptr[r]
                stop = indptr[r + 1]
                nu = <int>(stop - start)
                memcpy(A, G, d * d * sizeof(double))
                for f in range(d):
                    b[f] = 0.0
                for k in range(start, stop):
                    memcpy(&buf[(k - start) * d], &Y[indices[k], 0], d * sizeof(double))
                    for f in range(d):
                        b[f] = b[f] + Y[indices[k], f]
                if nu > 0:
                    dsyrk(&uplo, &trans, &d, &nu, &scale, buf, &d, &one_d, A, &d)
                for f in range(d):
                    A[f * d + f] = A[f * d + f] + reg
                    b[f] = b[f] * (1.0 + alpha)
                dposv(&uplo, &d, &one, A, &d, b, &d, &info)
                if info != 0:
                    break
                for f in range(d):
                    X[r, f] = b[f]
        if info != 0:
            raise ArithmeticError(f"ridge system not positive definite (LAPACK info={info})")
    finally:
        free(G)
        free(A)
        free(b)
        free(buf)
    return n_rows
