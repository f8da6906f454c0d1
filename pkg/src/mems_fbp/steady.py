"""Steady states  A U = -lambda g(U),  A = -d_xx with U(+-1) = 0.

The fixed-point map U <- A^{-1}(-lambda g(U)) is the steady form of the
evolution equation and produces the negative, convex minimal branch.  Newton
(forward-difference Jacobian of g) accelerates the same root problem near
the fold.  ``eps = 0`` selects the small-aspect force 1/(1+U)^2.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from . import kernels
from .elliptic import g_eps, g_small_aspect, membrane, solve_potential
from .errors import DegenerateDomainError, SolverFailure
from .evolution import EvolutionConfig, evolve_fbp, evolve_small_aspect
from .grid import Field1D, Grid1D, Grid2D, quad_weights

log = logging.getLogger(__name__)

__all__ = [
    "SteadyState",
    "ContinuationResult",
    "StabilityReport",
    "poisson_inverse",
    "apply_A",
    "steady_fixed_point",
    "steady_newton",
    "continuation",
    "decay_rate",
]


@dataclass(frozen=True)
class SteadyState:
    lam: float
    eps: float
    U: Field1D
    residual: float
    iterations: int
    trace: Field1D | None
    converged: bool = True
    method: str = "fixed-point"
    message: str = ""


def poisson_inverse(f: Field1D) -> Field1D:
    """Solve -w'' = f with w(+-1) = 0 on the grid of ``f`` (3-point Laplacian)."""
    n, h = f.grid.n, f.grid.h
    m = n - 2
    off = np.full(m, -1.0 / h**2)
    diag = np.full(m, 2.0 / h**2)
    w = np.zeros(n)
    w[1:-1] = kernels.thomas(off, diag, off, np.ascontiguousarray(f.values[1:-1], dtype=float))
    return Field1D(f.grid, w)


def apply_A(w: Field1D) -> np.ndarray:
    """Interior values of the discrete -w'' (length n - 2)."""
    v, h = w.values, w.grid.h
    return -(v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2


def _force(eps: float, grid2: Grid2D | None):
    if eps == 0:
        return lambda U: g_small_aspect(membrane(U)).values, None
    return (lambda U: g_eps(membrane(U), eps, grid2).values), grid2


def _resid(U: Field1D, lam, gU):
    return float(np.max(np.abs(apply_A(U) + lam * gU[1:-1]), initial=0.0))


def _trace(U: Field1D, eps, grid2):
    if eps == 0:
        return Field1D(U.grid, np.ones(U.grid.n))
    return solve_potential(membrane(U), eps, grid2).trace


def steady_fixed_point(
    lam: float,
    eps: float,
    U_init=None,
    tol: float = 1e-10,
    max_iter: int = 1000,
    nx: int = 201,
    neta: int = 101,
) -> SteadyState:
    """Picard iteration U_{k+1} = A^{-1}(-lambda g(U_k)).

    Returns ``converged=False`` after ``max_iter`` sweeps; raises
    :class:`DegenerateDomainError` if an iterate reaches the plate.
    """
    grid = Grid1D(nx)
    grid2 = Grid2D(nx, neta)
    force, _ = _force(eps, grid2)
    U = Field1D(grid, np.zeros(nx) if U_init is None else np.asarray(getattr(U_init, "values", U_init), float))
    U = membrane(U).v
    if lam == 0:
        U = Field1D(grid, np.zeros(nx))
        return SteadyState(0.0, eps, U, 0.0, 1, _trace(U, eps, grid2))
    gU = force(U.values)
    for k in range(1, max_iter + 1):
        U_new = poisson_inverse(Field1D(grid, -lam * gU))
        if np.min(1.0 + U_new.values) <= 0.0:
            raise DegenerateDomainError(f"fixed-point iterate touched down at sweep {k}", float(np.min(1.0 + U_new.values)))
        step = float(np.max(np.abs(U_new.values - U.values)))
        U = U_new
        gU = force(U.values)
        if not np.all(np.isfinite(U.values)):
            break
        if step <= tol:
            res = _resid(U, lam, gU)
            return SteadyState(lam, eps, U, res, k, _trace(U, eps, grid2), converged=res <= 10 * tol)
    res = _resid(U, lam, gU) if np.all(np.isfinite(U.values)) else math.inf
    return SteadyState(lam, eps, U, res, max_iter, None, converged=False, message="max_iter exceeded")


def _jacobian_g(force, U: np.ndarray, g0: np.ndarray, eps: float) -> np.ndarray:
    """d g_i / d U_j on interior nodes by forward differences (analytic for eps = 0)."""
    n = len(U)
    if eps == 0:
        return np.diag(-2.0 / (1.0 + U[1:-1]) ** 3)
    J = np.empty((n - 2, n - 2))
    for j in range(1, n - 1):
        d = math.sqrt(np.finfo(float).eps) * max(1.0, abs(U[j]))
        Up = U.copy()
        Up[j] += d
        J[:, j - 1] = (force(Up)[1:-1] - g0[1:-1]) / d
    return J


def steady_newton(
    lam: float,
    eps: float,
    U_init=None,
    tol: float = 1e-10,
    max_iter: int = 30,
    nx: int = 201,
    neta: int = 101,
) -> SteadyState:
    """Newton's method on A U + lambda g(U) = 0; falls back to the fixed point if the Jacobian fails."""
    grid = Grid1D(nx)
    grid2 = Grid2D(nx, neta)
    force, _ = _force(eps, grid2)
    U = membrane(np.zeros(nx) if U_init is None else np.asarray(getattr(U_init, "values", U_init), float)).v.values.copy()
    h = grid.h
    A = (np.diag(np.full(nx - 2, 2.0)) - np.diag(np.ones(nx - 3), 1) - np.diag(np.ones(nx - 3), -1)) / h**2
    for k in range(1, max_iter + 1):
        gU = force(U)
        R = A @ U[1:-1] + lam * gU[1:-1]
        try:
            J = A + lam * _jacobian_g(force, U, gU, eps)
            delta = sla.solve(J, -R)
        except (sla.LinAlgError, SolverFailure, DegenerateDomainError) as exc:
            log.info("Newton Jacobian failed (%s); falling back to fixed point", exc)
            out = steady_fixed_point(lam, eps, U, tol=tol, nx=nx, neta=neta)
            return replace(out, method="fixed-point (newton fallback)", message=str(exc))
        # damp so the iterate stays above the plate
        t = 1.0
        while np.min(1.0 + U[1:-1] + t * delta) <= 0.0 and t > 1e-4:
            t *= 0.5
        U[1:-1] += t * delta
        if not np.all(np.isfinite(U)):
            break
        if float(np.max(np.abs(t * delta))) <= tol:
            Uf = Field1D(grid, U)
            gU = force(U)
            res = _resid(Uf, lam, gU)
            return SteadyState(lam, eps, Uf, res, k, _trace(Uf, eps, grid2), converged=res <= 10 * tol, method="newton")
    Uf = Field1D(grid, np.where(np.isfinite(U), U, 0.0))
    return SteadyState(lam, eps, Uf, math.inf, max_iter, None, converged=False, method="newton", message="no convergence")


@dataclass
class ContinuationResult:
    eps: float
    points: list[tuple[float, SteadyState | None]]
    last_converged_lam: float

    @property
    def lams(self):
        return [lam for lam, _ in self.points]

    def save(self, path) -> Path:
        """Write ``branch.csv`` (lambda, min U, sup and L2 norms, iterations, residual)."""
        path = Path(path)
        lines = ["lambda,min_U,sup_U,l2_U,iterations,residual,converged"]
        for lam, st in self.points:
            if st is None or not st.converged:
                lines.append(f"{lam:.17g},nan,nan,nan,0,nan,0")
                continue
            U = st.U.values
            w, _ = quad_weights(len(U), st.U.grid.h)
            lines.append(
                f"{lam:.17g},{U.min():.17g},{np.abs(U).max():.17g},{math.sqrt(w @ U**2):.17g},"
                f"{st.iterations},{st.residual:.17g},1"
            )
        path.write_text("\n".join(lines) + "\n")
        return path


def _solve_at(lam, eps, U_init, nx, neta, use_newton, tol):
    try:
        st = steady_fixed_point(lam, eps, U_init, tol=tol, nx=nx, neta=neta)
    except DegenerateDomainError:
        st = None
    if (st is None or not st.converged) and use_newton:
        try:
            st = steady_newton(lam, eps, U_init, tol=tol, nx=nx, neta=neta)
        except DegenerateDomainError:
            st = None
    return st if st is not None and st.converged else None


def continuation(
    lam_max: float,
    steps: int,
    eps: float,
    nx: int = 201,
    neta: int = 101,
    use_newton: bool = True,
    halvings: int = 3,
    tol: float = 1e-10,
) -> ContinuationResult:
    """March lambda from 0 to ``lam_max`` on the minimal branch, warm-starting each solve.

    On failure the lambda step is halved up to ``halvings`` times; the march
    stops at the first lambda where every attempt fails.
    """
    if steps < 2:
        raise ValueError("steps must be >= 2")
    dlam = lam_max / steps
    U = np.zeros(nx)
    lam = 0.0
    first = steady_fixed_point(0.0, eps, None, nx=nx, neta=neta)
    points: list[tuple[float, SteadyState | None]] = [(0.0, first)]
    while lam < lam_max - 1e-15:
        step = min(dlam, lam_max - lam)
        st = None
        for _ in range(halvings + 1):
            st = _solve_at(lam + step, eps, U, nx, neta, use_newton, tol)
            if st is not None:
                break
            points.append((lam + step, None))
            step *= 0.5
        if st is None:
            break
        lam += step
        U = st.U.values
        points.append((lam, st))
        log.debug("continuation: lambda=%.6g min U=%.6g", lam, U.min())
    points.sort(key=lambda p: p[0])
    return ContinuationResult(eps=eps, points=points, last_converged_lam=lam)


@dataclass
class StabilityReport:
    lam: float
    eps: float
    omega: float
    r_squared: float
    fit_window: tuple[float, float]
    omega_phi: float
    r_squared_phi: float
    ok: bool
    message: str = ""

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(asdict(self), indent=2))
        return path


def _fit_rate(t, y):
    t, y = np.asarray(t), np.asarray(y)
    good = y > 0
    t, ly = t[good], np.log(y[good])
    if len(t) < 3:
        return math.nan, math.nan
    slope, icpt = np.polyfit(t, ly, 1)
    pred = slope * t + icpt
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    return -float(slope), (1.0 - ss_res / ss_tot) if ss_tot > 0 else 1.0


def decay_rate(
    lam: float,
    eps: float,
    r: float = 0.05,
    t_end: float = 4.0,
    config: EvolutionConfig | None = None,
    fit_window: tuple[float, float] | None = None,
) -> StabilityReport:
    """Perturb U_lambda by r (1 - x^2) cos(pi x / 2) and fit the exponential decay rate.

    The fit uses the sup-norm distance to U_lambda over ``fit_window``
    (default: the last half of the run); the potential distance
    ||phi_u(t) - phi_U||_L2 is fitted over the same window.
    """
    c = config or EvolutionConfig(lam=lam, eps=eps, dt0=0.01, t_end=t_end, sample_every=0.05)
    c = replace(c, lam=lam, eps=eps, t_end=t_end)
    if c.sample_every == 0:
        c = replace(c, sample_every=t_end / 80)
    window = fit_window or (0.5 * t_end, t_end)
    try:
        st = steady_fixed_point(lam, eps, None, nx=c.nx, neta=c.neta)
    except DegenerateDomainError as exc:
        return StabilityReport(lam, eps, math.nan, math.nan, window, math.nan, math.nan, False, f"stability-test-failed: {exc}")
    if not st.converged:
        return StabilityReport(lam, eps, math.nan, math.nan, window, math.nan, math.nan, False,
                               "stability-test-failed: no steady state found")
    x = c.grid1.nodes
    u0 = st.U.values + r * (1.0 - x**2) * np.cos(0.5 * math.pi * x)
    run = evolve_small_aspect if eps == 0 else evolve_fbp
    tr = run(u0, c)
    if tr.outcome.kind != "reached-horizon":
        return StabilityReport(lam, eps, math.nan, math.nan, window, math.nan, math.nan, False,
                               f"stability-test-failed: run ended with {tr.outcome.kind} at t={tr.outcome.t:.4g}")
    ts, du, dphi = [], [], []
    wx, _ = quad_weights(c.nx, c.grid2.hx)
    we, _ = quad_weights(c.neta, c.grid2.heta)
    phi_U = solve_potential(membrane(st.U), eps, c.grid2).phi.values if eps > 0 else None
    for s in tr.samples:
        if not window[0] - 1e-12 <= s.t <= window[1] + 1e-12:
            continue
        ts.append(s.t)
        du.append(float(np.max(np.abs(s.u.values - st.U.values))))
        if phi_U is not None:
            d = solve_potential(membrane(s.u), eps, c.grid2).phi.values - phi_U
            dphi.append(math.sqrt(max(wx @ d**2 @ we, 0.0)))
    omega, r2 = _fit_rate(ts, du)
    omega_phi, r2_phi = _fit_rate(ts, dphi) if dphi else (math.nan, math.nan)
    return StabilityReport(lam, eps, omega, r2, window, omega_phi, r2_phi, bool(omega > 0))
