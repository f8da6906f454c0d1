"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def stencil_coo(a11, mixed, a22, adv, hx, heta):
    """COO triplets of the 9-point matrix for -L on interior nodes.

    L w = a11 w_xx + mixed w_xeta + a22 w_etaeta + adv w_eta, discretised with
    central differences (4-corner stencil for the mixed term).  Unknowns are
    the interior nodes numbered k = (i-1)*(neta-2) + (j-1); neighbours on the
    boundary are dropped, i.e. homogeneous Dirichlet data.
    """
    mixed = np.asarray(mixed, dtype=float)
    a22 = np.asarray(a22, dtype=float)
    adv = np.asarray(adv, dtype=float)
    nx, ne = a22.shape
    mj = ne - 2
    I, J = np.meshgrid(np.arange(1, nx - 1), np.arange(1, ne - 1), indexing="ij")
    k = ((I - 1) * mj + (J - 1)).ravel()
    cx = a11 / hx**2
    c = (a22[1:-1, 1:-1] / heta**2).ravel()
    m = (mixed[1:-1, 1:-1] / (4.0 * hx * heta)).ravel()
    b = (adv[1:-1, 1:-1] / (2.0 * heta)).ravel()
    Ir, Jr = I.ravel(), J.ravel()

    rows, cols, vals = [], [], []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                w = 2.0 * cx + 2.0 * c
            elif dj == 0:
                w = np.full(k.shape, -cx)
            elif di == 0:
                w = -c - dj * b
            else:
                w = -di * dj * m
            ii, jj = Ir + di, Jr + dj
            keep = (ii >= 1) & (ii <= nx - 2) & (jj >= 1) & (jj <= ne - 2)
            if not (di == 0 and dj == 0):
                keep &= w != 0.0
            rows.append(k[keep])
            cols.append(((ii - 1) * mj + (jj - 1))[keep])
            vals.append(w[keep])
    return (
        np.concatenate(rows).astype(np.int64),
        np.concatenate(cols).astype(np.int64),
        np.concatenate(vals),
    )


def thomas(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``lower[0]`` and ``upper[-1]`` are ignored."""
    n = len(diag)
    cp = [0.0] * n
    x = [0.0] * n
    cp[0] = upper[0] / diag[0] if n > 1 else 0.0
    x[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower[i] * cp[i - 1]
        if i < n - 1:
            cp[i] = upper[i] / denom
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / denom
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return np.array(x)


def interp_columns(values, heta, query):
    """Row-wise linear interpolation on a uniform eta grid over [0, 1]; NaN outside."""
    values = np.asarray(values, dtype=float)
    query = np.asarray(query, dtype=float)
    ne = values.shape[1]
    s = query / heta
    j = np.clip(np.floor(np.nan_to_num(s)).astype(np.int64), 0, ne - 2)
    t = s - j
    rows = np.arange(values.shape[0])[:, None]
    out = (1.0 - t) * values[rows, j] + t * values[rows, j + 1]
    out[(query < -1e-12) | (query > 1.0 + 1e-12) | np.isnan(query)] = np.nan
    return out
