"""Transformed potential problem on the fixed rectangle.

For a membrane profile v the region {-1 < z < v(x)} is flattened to
Omega = I x (0, 1) by eta = (1 + z) / (1 + v(x)).  Laplace's equation
eps^2 psi_xx + psi_zz = 0 turns into L_v phi = 0 with

    L_v w = eps^2 w_xx - 2 eps^2 eta s w_xeta + a22 w_etaeta + f_v w_eta,
    s = v' / (1 + v),  a22 = (1 + eps^2 eta^2 v'^2) / (1 + v)^2,
    f_v = eps^2 eta (2 s^2 - v'' / (1 + v))  (= L_v eta),

and phi = eta on the boundary.  Writing phi = Phi + eta gives the homogeneous
problem -L_v Phi = f_v, Phi = 0 on the boundary, which is what gets assembled.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from . import kernels
from .errors import DegenerateDomainError, InvalidGridError, SolverFailure
from .grid import Field1D, Field2D, Grid1D, Grid2D, d1, d2, write_field_csv

__all__ = [
    "MembraneProfile",
    "CoefficientSet",
    "LinearSystem",
    "PotentialSolve",
    "PsiField",
    "membrane",
    "coefficients",
    "rhs_fv",
    "assemble",
    "solve_dirichlet",
    "solve_potential",
    "trace_deta",
    "g_eps",
    "g_small_aspect",
    "reconstruct_psi",
    "ellipticity_symbol",
]

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class MembraneProfile:
    v: Field1D
    dv: Field1D
    d2v: Field1D
    min_gap: float

    @property
    def grid(self) -> Grid1D:
        return self.v.grid


def membrane(v, grid: Grid1D | None = None, clamp: bool = True) -> MembraneProfile:
    """Build a :class:`MembraneProfile` from a Field1D or a plain array.

    With ``clamp`` the endpoint values are overwritten with 0 (the clamped
    membrane).  ``clamp=False`` keeps them, which is only meaningful for the
    constant-profile validation cases.
    """
    if isinstance(v, Field1D):
        grid, values = v.grid, np.array(v.values, dtype=float)
    else:
        values = np.array(v, dtype=float)
        grid = grid or Grid1D(len(values))
    if clamp:
        values[0] = values[-1] = 0.0
    vf = Field1D(grid, values)
    return MembraneProfile(
        v=vf,
        dv=Field1D(grid, d1(values, grid.h)),
        d2v=Field1D(grid, d2(values, grid.h)),
        min_gap=float(np.min(1.0 + values)),
    )


def _check_gap(m: MembraneProfile):
    if not m.min_gap > 0.0:
        raise DegenerateDomainError(f"membrane touches the plate: min(1+v) = {m.min_gap:g}", m.min_gap)


def _check_grids(m: MembraneProfile, g: Grid2D):
    if m.grid.n != g.nx:
        raise InvalidGridError(f"profile has {m.grid.n} nodes but Grid2D has nx={g.nx}")


@dataclass(frozen=True)
class CoefficientSet:
    """Divergence-form coefficients of -L_v (a21 = a12)."""

    a11: Field2D
    a12: Field2D
    a22: Field2D
    b1: Field2D
    b2: Field2D


def _nodal(m: MembraneProfile, eps: float, g: Grid2D):
    gap = 1.0 + m.v.values
    s = (m.dv.values / gap)[:, None]
    eta = g.eta[None, :]
    a22 = (1.0 + eps**2 * eta**2 * m.dv.values[:, None] ** 2) / gap[:, None] ** 2
    mixed = -2.0 * eps**2 * eta * s
    fv = eps**2 * eta * (2.0 * s**2 - (m.d2v.values / gap)[:, None])
    shape = (g.nx, g.neta)
    return np.broadcast_to(mixed, shape).copy(), np.broadcast_to(a22, shape).copy(), np.broadcast_to(fv, shape).copy(), s


def coefficients(m: MembraneProfile, eps: float, g: Grid2D) -> CoefficientSet:
    _check_gap(m)
    _check_grids(m, g)
    mixed, a22, _, s = _nodal(m, eps, g)
    eta = g.eta[None, :]
    shape = (g.nx, g.neta)
    full = lambda a: Field2D(g, np.broadcast_to(a, shape))
    return CoefficientSet(
        a11=full(np.full(shape, eps**2)),
        a12=full(-(eps**2) * eta * s),
        a22=full(a22),
        b1=full(eps**2 * s + 0.0 * eta),
        b2=full(-(eps**2) * eta * s**2),
    )


def rhs_fv(m: MembraneProfile, eps: float, g: Grid2D) -> Field2D:
    _check_gap(m)
    _check_grids(m, g)
    return Field2D(g, _nodal(m, eps, g)[2])


@dataclass(frozen=True)
class LinearSystem:
    """Sparse matrix of -L_v on the interior nodes of ``grid``."""

    matrix: sp.csc_matrix
    grid: Grid2D

    def apply(self, w) -> np.ndarray:
        """Apply the matrix to a nodal field; returns the interior values, shape (nx-2, neta-2)."""
        w = w.values if isinstance(w, Field2D) else np.asarray(w, dtype=float)
        g = self.grid
        return (self.matrix @ w[1:-1, 1:-1].ravel()).reshape(g.nx - 2, g.neta - 2)


def assemble(m: MembraneProfile, eps: float, g: Grid2D) -> LinearSystem:
    _check_gap(m)
    _check_grids(m, g)
    mixed, a22, fv, _ = _nodal(m, eps, g)
    rows, cols, vals = kernels.stencil_coo(float(eps**2), mixed, a22, fv, g.hx, g.heta)
    n = (g.nx - 2) * (g.neta - 2)
    mat = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
    return LinearSystem(mat, g)


def ellipticity_symbol(m: MembraneProfile, eps: float, g: Grid2D, xi1, xi2) -> np.ndarray:
    """Principal symbol eps^2 xi1^2 - 2 eps^2 eta s xi1 xi2 + a22 xi2^2 at every node."""
    mixed, a22, _, _ = _nodal(m, eps, g)
    return eps**2 * xi1**2 + mixed * xi1 * xi2 + a22 * xi2**2


def _residual(mat, x, b):
    r = mat @ x - b
    scale = sla.norm(mat, np.inf) * np.max(np.abs(x), initial=0.0) + np.max(np.abs(b), initial=0.0)
    return float(np.max(np.abs(r), initial=0.0) / scale) if scale > 0 else 0.0


def _solve(system: LinearSystem, rhs_interior: np.ndarray):
    mat = system.matrix
    b = np.ascontiguousarray(rhs_interior, dtype=float).ravel()
    try:
        lu = sla.splu(mat)
    except RuntimeError as exc:  # exactly singular
        raise SolverFailure(f"sparse LU failed: {exc}") from exc
    x = lu.solve(b)
    res = _residual(mat, x, b)
    if res > RESIDUAL_TOL:
        x = x + lu.solve(b - mat @ x)  # one refinement sweep
        res = _residual(mat, x, b)
    if not np.all(np.isfinite(x)) or res > RESIDUAL_TOL:
        inv = sla.LinearOperator(mat.shape, matvec=lu.solve, rmatvec=lambda y: lu.solve(y, trans="T"))
        cond = sla.onenormest(mat) * sla.onenormest(inv)
        raise SolverFailure(f"elliptic solve residual {res:.3e} above {RESIDUAL_TOL:g}", cond)
    return x, res


def solve_dirichlet(m: MembraneProfile, eps: float, g: Grid2D, rhs) -> tuple[Field2D, float]:
    """Solve -L_v W = rhs with W = 0 on the boundary; returns (W, scaled residual)."""
    system = assemble(m, eps, g)
    rhs = rhs.values if isinstance(rhs, Field2D) else np.asarray(rhs, dtype=float)
    x, res = _solve(system, rhs[1:-1, 1:-1])
    W = np.zeros((g.nx, g.neta))
    W[1:-1, 1:-1] = x.reshape(g.nx - 2, g.neta - 2)
    return Field2D(g, W), res


@dataclass(frozen=True)
class PotentialSolve:
    Phi: Field2D
    phi: Field2D
    trace: Field1D
    residual_norm: float
    eps: float
    v: Field1D

    @property
    def grid(self) -> Grid2D:
        return self.Phi.grid

    def save(self, directory) -> list[Path]:
        """Write ``phi.csv``, ``trace.csv`` and ``meta.json`` into ``directory``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        meta = {
            "eps": self.eps,
            "nx": self.grid.nx,
            "neta": self.grid.neta,
            "residual_norm": self.residual_norm,
            "v_sha256": hashlib.sha256(np.ascontiguousarray(self.v.values).tobytes()).hexdigest(),
        }
        out = [write_field_csv(self.phi, d / "phi.csv"), write_field_csv(self.trace, d / "trace.csv")]
        (d / "meta.json").write_text(json.dumps(meta, indent=2))
        return out + [d / "meta.json"]


def _trace(phi: np.ndarray, heta: float) -> np.ndarray:
    return (3.0 * phi[:, -1] - 4.0 * phi[:, -2] + phi[:, -3]) / (2.0 * heta)


def solve_potential(m: MembraneProfile, eps: float, g: Grid2D) -> PotentialSolve:
    if g.neta < 4:
        raise InvalidGridError("trace extraction needs neta >= 4")
    fv = rhs_fv(m, eps, g)
    Phi, res = solve_dirichlet(m, eps, g, fv)
    phi = Phi.values + g.eta[None, :]
    return PotentialSolve(
        Phi=Phi,
        phi=Field2D(g, phi),
        trace=Field1D(m.grid, _trace(phi, g.heta)),
        residual_norm=res,
        eps=float(eps),
        v=m.v,
    )


def trace_deta(p: PotentialSolve) -> Field1D:
    """One-sided 3-point d_eta phi at eta = 1."""
    return Field1D(p.v.grid, _trace(p.phi.values, p.grid.heta))


def g_eps(m: MembraneProfile, eps: float, g: Grid2D, return_solve: bool = False):
    """Nonlocal force (1 + eps^2 v'^2)/(1 + v)^2 * (d_eta phi_v(., 1))^2."""
    p = solve_potential(m, eps, g)
    pref = (1.0 + eps**2 * m.dv.values**2) / (1.0 + m.v.values) ** 2
    out = Field1D(m.grid, pref * p.trace.values**2)
    return (out, p) if return_solve else out


def g_small_aspect(m: MembraneProfile) -> Field1D:
    """The eps = 0 force 1/(1 + v)^2."""
    _check_gap(m)
    return Field1D(m.grid, 1.0 / (1.0 + m.v.values) ** 2)


@dataclass(frozen=True)
class PsiField:
    """Potential and its gradient on the physical region; NaN where ``mask`` is False."""

    x: np.ndarray
    z: np.ndarray  # (nx, nz)
    psi: np.ndarray
    dpsi_dx: np.ndarray
    dpsi_dz: np.ndarray
    mask: np.ndarray = field(repr=False)


def reconstruct_psi(p: PotentialSolve, m: MembraneProfile, z) -> PsiField:
    """Evaluate psi = phi o T_v and its gradient at physical points (x_i, z).

    ``z`` is either a 1D array shared by every column or an (nx, nz) array of
    per-column heights.  Points above the membrane are masked.
    """
    g = p.grid
    z = np.asarray(getattr(z, "nodes", z), dtype=float)
    gap = 1.0 + m.v.values
    if z.ndim == 1:
        z = np.broadcast_to(z[None, :], (g.nx, z.size))
    z = np.ascontiguousarray(z)
    eta = (1.0 + z) / gap[:, None]
    mask = (eta >= -1e-12) & (eta <= 1.0 + 1e-12)
    query = np.ascontiguousarray(np.where(mask, np.clip(eta, 0.0, 1.0), np.nan))

    phi = p.phi.values
    dphi_dx = d1(phi, g.hx, axis=0)
    dphi_deta = d1(phi, g.heta, axis=1)
    at = lambda a: kernels.interp_columns(np.ascontiguousarray(a), g.heta, query)
    psi = at(phi)
    pe = at(dphi_deta)
    s = (m.dv.values / gap)[:, None]
    dpsi_dz = pe / gap[:, None]
    dpsi_dx = at(dphi_dx) - query * s * pe
    return PsiField(x=g.x, z=z, psi=psi, dpsi_dx=dpsi_dx, dpsi_dz=dpsi_dz, mask=mask)
