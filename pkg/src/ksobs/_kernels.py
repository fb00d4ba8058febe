"""Compiled inner loop for the joint state/tangent ETDRK4 step.

The matmuls go to BLAS either way; fusing the elementwise glue between them
roughly halves the cost of a step at n = 64 with ~30 tangent columns.
"""
import numba
import numpy as np


@numba.njit(cache=True)
def _square_nodes(Z, s):
    # state column squared, tangent columns linearized: 2 z0 dz
    n, c = Z.shape
    for i in range(n):
        z0 = Z[i, 0]
        s[i, 0] = z0 * z0
        for j in range(1, c):
            s[i, j] = 2.0 * z0 * Z[i, j]


@numba.njit(cache=True)
def joint_step(EE2, QF1, QF2, E2, F3G, X, buf):
    n, c = X.shape
    s = np.empty((n, c))
    A = np.empty((n, c))
    B = np.empty((n, c))
    C = np.empty((n, c))
    t = np.dot(EE2, X)
    _square_nodes(X, s)
    r0 = np.dot(QF1, s)
    for i in range(n):
        for j in range(c):
            A[i, j] = t[n + i, j] + r0[i, j]
    _square_nodes(A, s)
    r1 = np.dot(QF2, s)
    for i in range(n):
        for j in range(c):
            B[i, j] = t[n + i, j] + r1[i, j]
    _square_nodes(B, s)
    r2 = np.dot(QF2, s)
    Ct = np.dot(E2, A)
    for i in range(n):
        for j in range(c):
            C[i, j] = Ct[i, j] + 2.0 * r2[i, j] - r0[i, j]
    _square_nodes(C, s)
    out = np.dot(F3G, s)
    for i in range(n):
        for j in range(c):
            out[i, j] += t[i, j] + r0[n + i, j] + r1[n + i, j] + r2[n + i, j]
            buf[i, j] = X[i, j]
            buf[n + i, j] = A[i, j]
            buf[2 * n + i, j] = B[i, j]
            buf[3 * n + i, j] = C[i, j]
    return out
