"""Pure-Python versions of the compiled learner kernels.

Same signatures and update rules as ``_kernels.pyx``; results agree with the
compiled path to rounding, not bit for bit (numpy reductions sum in a
different order).
"""

import math

import numpy as np
import scipy.linalg


def bpr_epoch(P, Q, users, pos, neg, lr, reg):
    for u, i, j in zip(users.tolist(), pos.tolist(), neg.tolist()):
        pu = P[u].copy()
        qi = Q[i].copy()
        qj = Q[j].copy()
        diff = qi - qj
        x = float(pu @ diff)
        try:
            g = 1.0 / (1.0 + math.exp(x))
        except OverflowError:
            g = 0.0
        P[u] = pu + lr * (g * diff - reg * pu)
        Q[i] = qi + lr * (g * pu - reg * qi)
        Q[j] = qj + lr * (-g * pu - reg * qj)


def als_half_pass(X, Y, indptr, indices, alpha, reg):
    d = Y.shape[1]
    if X.shape[1] != d:
        raise ValueError("factor dimensions differ")
    G = Y.T @ Y
    ridge = reg * np.eye(d)
    for r in range(X.shape[0]):
        Yu = Y[indices[indptr[r] : indptr[r + 1]]]
        A = G + alpha * (Yu.T @ Yu) + ridge
        b = (1.0 + alpha) * Yu.sum(axis=0)
        try:
            X[r] = scipy.linalg.solve(A, b, assume_a="pos", check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise ArithmeticError(f"ridge system not positive definite: {exc}") from None
    return X.shape[0]
