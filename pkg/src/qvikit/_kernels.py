"""Compiled inner loops (CSR projected Gauss-Seidel / SOR)."""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _operator_apply(indptr, indices, data, plus_max, y, out):
    n = y.shape[0]
    for i in range(n):
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            s += data[p] * y[indices[p]]
        if plus_max and y[i] > 0.0:
            s += y[i]
        out[i] = s


@njit(cache=True, nogil=True)
def complementarity_residual(indptr, indices, data, plus_max, f, psi, y):
    """max_i |min(f_i - A(y)_i, psi_i - y_i)|; psi_i = +inf means unconstrained."""
    n = y.shape[0]
    worst = 0.0
    for i in range(n):
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            s += data[p] * y[indices[p]]
        if plus_max and y[i] > 0.0:
            s += y[i]
        r = f[i] - s
        g = psi[i] - y[i]
        m = r if r < g else g
        if m < 0.0:
            m = -m
        if m > worst:
            worst = m
    return worst


@njit(cache=True, nogil=True)
def projected_sor(indptr, indices, data, diag, plus_max, f, psi, y, omega,
                  abs_tol, max_sweeps):
    """In-place projected SOR sweeps on y <= psi, A(y) - f <= 0, complementarity.

    Each node solves its scalar equation exactly (the plus_max nonlinearity is
    diagonal and piecewise linear), relaxes by omega and projects onto
    y_i <= psi_i. Returns (sweeps, residual); sweeps == max_sweeps + 1 flags
    non-convergence.
    """
    n = y.shape[0]
    res = complementarity_residual(indptr, indices, data, plus_max, f, psi, y)
    if res <= abs_tol:
        return 0, res
    for sweep in range(1, max_sweeps + 1):
        for i in range(n):
            r = f[i]
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j != i:
                    r -= data[p] * y[j]
            a = diag[i]
            if plus_max and r > 0.0:
                target = r / (a + 1.0)
            else:
                target = r / a
            v = y[i] + omega * (target - y[i])
            if v > psi[i]:
                v = psi[i]
            y[i] = v
        res = complementarity_residual(indptr, indices, data, plus_max, f, psi, y)
        if res <= abs_tol:
            return sweep, res
    return max_sweeps + 1, res


def operator_apply(matrix, plus_max, y):
    out = np.empty_like(y)
    _operator_apply(matrix.indptr, matrix.indices, matrix.data, plus_max, y, out)
    return out
