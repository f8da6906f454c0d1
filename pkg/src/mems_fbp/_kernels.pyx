# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: stencil assembly, tridiagonal solve, column interpolation.

Signatures and results match ``_kernels_py`` exactly; see that module for the
reference semantics.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def stencil_coo(double a11, const double[:, ::1] mixed, const double[:, ::1] a22,
                const double[:, ::1] adv, double hx, double heta):
    """COO triplets of the 9-point matrix for -L on interior nodes.

    ``mixed``, ``a22`` and ``adv`` are the nodal coefficients of d_x d_eta,
    d_eta^2 and d_eta in L; ``a11`` multiplies d_x^2.  Boundary neighbours
    are dropped (homogeneous Dirichlet).
    """
    cdef Py_ssize_t nx = a22.shape[0], ne = a22.shape[1]
    cdef Py_ssize_t mi = nx - 2, mj = ne - 2
    cdef Py_ssize_t cap = 9 * mi * mj
    rows_a = np.empty(cap, dtype=np.int64)
    cols_a = np.empty(cap, dtype=np.int64)
    vals_a = np.empty(cap, dtype=np.float64)
    cdef cnp.int64_t[::1] rows = rows_a
    cdef cnp.int64_t[::1] cols = cols_a
    cdef double[::1] vals = vals_a
    cdef double cx = a11 / (hx * hx)
    cdef double ce = 1.0 / (heta * heta)
    cdef double cm = 1.0 / (4.0 * hx * heta)
    cdef double ca = 1.0 / (2.0 * heta)
    cdef Py_ssize_t i, j, di, dj, ii, jj, k, nnz = 0
    cdef double w, m, c, b
    for i in range(1, nx - 1):
        for j in range(1, ne - 1):
            k = (i - 1) * mj + (j - 1)
            m = mixed[i, j] * cm
            c = a22[i, j] * ce
            b = adv[i, j] * ca
            for di in range(-1, 2):
                for dj in range(-1, 2):
                    ii = i + di
                    jj = j + dj
                    if ii < 1 or ii > nx - 2 or jj < 1 or jj > ne - 2:
                        continue
                    w = 0.0
                    if di == 0 and dj == 0:
                        w = 2.0 * cx + 2.0 * c
                    elif dj == 0:
                        w = -cx
                    elif di == 0:
                        w = -c - dj * b
                    else:
                        w = -di * dj * m
                    if w == 0.0 and not (di == 0 and dj == 0):
                        continue
                    rows[nnz] = k
                    cols[nnz] = (ii - 1) * mj + (jj - 1)
                    vals[nnz] = w
                    nnz += 1
    return rows_a[:nnz], cols_a[:nnz], vals_a[:nnz]


def thomas(const double[::1] lower, const double[::1] diag, const double[::1] upper, const double[::1] rhs):
    """Solve a tridiagonal system; ``lower[0]`` and ``upper[-1]`` are ignored."""
    cdef Py_ssize_t n = diag.shape[0], i
    out_a = np.empty(n, dtype=np.float64)
    cp_a = np.empty(n, dtype=np.float64)
    cdef double[::1] x = out_a
    cdef double[::1] cp = cp_a
    cdef double denom
    cp[0] = upper[0] / diag[0] if n > 1 else 0.0
    x[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower[i] * cp[i - 1]
        if i < n - 1:
            cp[i] = upper[i] / denom
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / denom
    for i in range(n - 2, -1, -1):
        x[i] = x[i] - cp[i] * x[i + 1]
    return out_a


def interp_columns(const double[:, ::1] values, double heta, const double[:, ::1] query):
    """Linear interpolation of each row of ``values`` (uniform eta grid on [0, 1]).

    ``query[i, k]`` is an eta location for row i; locations outside [0, 1]
    (beyond a 1e-12 slack) give NaN.
    """
    cdef Py_ssize_t nx = values.shape[0], ne = values.shape[1], nq = query.shape[1]
    out_a = np.empty((nx, nq), dtype=np.float64)
    cdef double[:, ::1] out = out_a
    cdef Py_ssize_t i, k, j
    cdef double q, s, t
    cdef double nan = float("nan")
    for i in range(nx):
        for k in range(nq):
            q = query[i, k]
            if q != q or q < -1e-12 or q > 1.0 + 1e-12:
                out[i, k] = nan
                continue
            s = q / heta
            j = <Py_ssize_t>s
            if j < 0:
                j = 0
            if j > ne - 2:
                j = ne - 2
            t = s - j
            out[i, k] = (1.0 - t) * values[i, j] + t * values[i, j + 1]
    return out_a
