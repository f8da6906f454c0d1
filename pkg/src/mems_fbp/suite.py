"""Invariant suite aggregated by ``mems-fbp check``.

Each check returns a :class:`~mems_fbp.diagnostics.CheckReport`.  ``fast``
selects coarse grids so the whole suite runs in well under a minute.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .diagnostics import (
    MU1,
    BlowupParams,
    CheckReport,
    certificate,
    check_energy_inequality,
    check_identity_n5,
    check_inequality_n4,
    is_admissible,
)
from .elliptic import g_eps, membrane, reconstruct_psi, solve_dirichlet, solve_potential
from .evolution import EvolutionConfig, evolve_fbp
from .grid import Grid2D
from .steady import steady_fixed_point

__all__ = ["random_profile", "mms_problem", "mms_error", "run_suite", "CHECKS"]


def random_profile(rng: np.random.Generator, x: np.ndarray, depth: float = 0.5, even: bool = False) -> np.ndarray:
    """Smooth clamped profile with min(1+v) >= 1 - depth and small W^2 norms.

    A few low modes times (1 - x^2); non-even unless ``even``.
    """
    k = np.arange(1, 4)
    a = rng.normal(size=3)
    b = np.zeros(3) if even else rng.normal(size=3)
    shape = (1.0 - x**2) * (a @ np.cos(0.5 * np.pi * np.outer(k - 1, x)) + b @ np.sin(0.5 * np.pi * np.outer(k, x)))
    amp = float(np.max(np.abs(shape)))
    scale = rng.uniform(0.2, 1.0) * depth / amp if amp > 0 else 0.0
    # keep most mass below zero, as for a membrane pulled toward the plate
    v = scale * shape
    if v.max() > 0.5 * depth:
        v = v - (v.max() - 0.5 * depth) * (1.0 - x**2)
    v[0] = v[-1] = 0.0
    return v


# --- manufactured solution: Phi* = sin(pi x) eta (1 - eta), v = -0.3 (1 - x^2)

def _mms_fields(g: Grid2D, eps: float):
    X, E = g.mesh()
    v = -0.3 * (1.0 - X**2)
    dv = 0.6 * X
    d2v = 0.6
    gap = 1.0 + v
    s = dv / gap
    sx, cx = np.sin(np.pi * X), np.cos(np.pi * X)
    P = sx * E * (1.0 - E)
    Pxx = -np.pi**2 * P
    Pxe = np.pi * cx * (1.0 - 2.0 * E)
    Pe = sx * (1.0 - 2.0 * E)
    Pee = -2.0 * sx
    a22 = (1.0 + eps**2 * E**2 * dv**2) / gap**2
    fv = eps**2 * E * (2.0 * s**2 - d2v / gap)
    L = eps**2 * Pxx - 2.0 * eps**2 * E * s * Pxe + a22 * Pee + fv * Pe
    return P, -L


def mms_problem(n: int, eps: float = 0.2):
    """Grid, membrane, exact Phi* and the right-hand side -L_v Phi* at nx = 2n-1, neta = n."""
    g = Grid2D(2 * n - 1, n)
    m = membrane(-0.3 * (1.0 - g.x**2), g.x_grid)
    P, F = _mms_fields(g, eps)
    return g, m, P, F


def mms_error(n: int, eps: float = 0.2) -> float:
    g, m, P, F = mms_problem(n, eps)
    W, _ = solve_dirichlet(m, eps, g, F)
    return float(np.max(np.abs(W.values - P)))


@dataclass
class _Res:
    nx: int
    neta: int
    dt: float


def _res(fast: bool) -> _Res:
    return _Res(41, 21, 1e-3) if fast else _Res(201, 101, 1e-4)


def check_flat(fast=False) -> CheckReport:
    r = _res(fast)
    g = Grid2D(r.nx, r.neta)
    errs = {}
    for eps in (0.05, 0.1, 0.5):
        errs[str(eps)] = float(np.max(np.abs(g_eps(membrane(np.zeros(r.nx)), eps, g).values - 1.0)))
    worst = max(errs.values())
    return CheckReport("g_flat", {"max_error": worst, **errs}, 1e-8, worst <= 1e-8)


def check_constant(fast=False) -> CheckReport:
    r = _res(fast)
    g = Grid2D(r.nx, r.neta)
    errs = {}
    for c in (-0.5, -0.25, 0.5):
        m = membrane(np.full(r.nx, c), clamp=False)
        errs[str(c)] = float(np.max(np.abs(g_eps(m, 0.1, g).values - 1.0 / (1.0 + c) ** 2)))
    worst = max(errs.values())
    return CheckReport("g_constant", {"max_error": worst, **errs}, 1e-8, worst <= 1e-8)


def check_mms(fast=False) -> CheckReport:
    ns = (11, 21, 41) if fast else (21, 41, 81)
    errs = [mms_error(n) for n in ns]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    ok = all(1.8 <= o <= 2.2 for o in orders)
    return CheckReport("mms_order", {"n_eta": list(ns), "errors": errs, "orders": orders}, 0.2, ok)


def check_symmetry(fast=False, seed=0, count=None) -> CheckReport:
    r = _res(fast)
    g = Grid2D(r.nx, r.neta)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count or (3 if fast else 10)):
        v = random_profile(rng, g.x)
        a = g_eps(membrane(v), 0.1, g).values
        b = g_eps(membrane(v[::-1].copy()), 0.1, g).values
        worst = max(worst, float(np.max(np.abs(b - a[::-1]))))
    return CheckReport("reflection", {"max_error": worst}, 1e-9, worst <= 1e-9)


def psi_invariants(v: np.ndarray, eps: float, g: Grid2D, nz: int = 101) -> dict:
    """Worst violations of the psi bounds, membrane sign and chain rule for one profile."""
    m = membrane(v, g.x_grid)
    p = solve_potential(m, eps, g)
    M = max(float(m.v.values.max()), 0.0)
    z = np.linspace(-1.0, M, nz)
    pf = reconstruct_psi(p, m, z)
    ok = pf.mask & np.isfinite(pf.psi)
    Z = pf.z
    upper = float(np.max(np.where(ok, pf.psi - 1.0, -np.inf)))
    lower = float(np.max(np.where(ok, (1.0 + Z - M) - pf.psi, -np.inf)))
    top = reconstruct_psi(p, m, m.v.values[:, None])
    sign = float(np.max(-top.dpsi_dz[:, 0]))
    chain = float(np.max(np.abs(top.dpsi_dx[:, 0] + m.dv.values * top.dpsi_dz[:, 0])))
    return {"upper_excess": upper, "lower_excess": lower, "neg_dz": sign, "chain": chain,
            "h": max(g.hx, g.heta)}


def check_psi(fast=False, seed=1, count=None) -> CheckReport:
    r = _res(fast)
    g = Grid2D(r.nx, r.neta)
    h = max(g.hx, g.heta)
    tol_b = 10.0 * h**2
    rng = np.random.default_rng(seed)
    worst = {"upper_excess": -np.inf, "lower_excess": -np.inf, "neg_dz": -np.inf, "chain": 0.0}
    for _ in range(count or (4 if fast else 20)):
        res = psi_invariants(random_profile(rng, g.x), 0.1, g)
        for k in worst:
            worst[k] = max(worst[k], res[k])
    ok = worst["upper_excess"] <= tol_b and worst["lower_excess"] <= tol_b and worst["neg_dz"] <= tol_b and worst["chain"] <= h
    return CheckReport("psi_invariants", worst, tol_b, bool(ok), notes="chain rule tolerance h")


def check_identities(fast=False) -> CheckReport:
    r = _res(fast)
    g = Grid2D(r.nx, r.neta)
    vals = {}
    m0 = membrane(np.zeros(r.nx))
    p0 = solve_potential(m0, 0.1, g)
    for pe in (1.0, 2.0):
        vals[f"flat_identity_p{pe:g}"] = check_identity_n5(p0, m0, 0.1, pe).values["residual"]
    vals["flat_ineq_margin"] = check_inequality_n4(p0, m0, 1.0).values["margin"]
    mh = membrane(np.full(r.nx, -0.5), clamp=False)
    ph = solve_potential(mh, 0.1, g)
    rep = check_inequality_n4(ph, mh, 1.0)
    vals["half_ineq_lhs"], vals["half_ineq_rhs"] = rep.values["lhs"], rep.values["rhs"]
    rng = np.random.default_rng(3)
    mg = membrane(random_profile(rng, g.x))
    vals["generic_ineq_margin"] = check_inequality_n4(solve_potential(mg, 0.1, g), mg, 2.0).values["margin"]
    h = max(g.hx, g.heta)
    ok = (
        max(abs(vals["flat_identity_p1"]), abs(vals["flat_identity_p2"]), abs(vals["flat_ineq_margin"])) <= 1e-6
        and abs(vals["half_ineq_lhs"] - 2.0) <= 1e-6
        and abs(vals["half_ineq_rhs"] - 2.0) <= 1e-6
        and vals["generic_ineq_margin"] >= -10 * h
    )
    return CheckReport("identities", vals, 1e-6, bool(ok))


def check_certificate(fast=False) -> CheckReport:
    c = certificate(400.0, 0.1)
    bp = c.params
    vals = {"beta": bp.beta, "p": bp.p, "alpha": bp.alpha, "F0": c.F0, "horizon": c.horizon}
    ok = (
        abs(bp.beta - 10.0) <= 1e-12
        and abs(bp.p - 1.049348) <= 1e-6
        and abs(bp.alpha - 4.0 / 404.0) <= 1e-9
        and abs(c.F0 + 33.40) <= 0.05
        and abs(c.horizon - 0.0299) <= 1e-4
    )
    return CheckReport("certificate", vals, 1e-6, bool(ok))


def check_heat(fast=False) -> CheckReport:
    r = _res(fast)
    c = EvolutionConfig(lam=0.0, eps=0.1, dt0=1e-3, t_end=1.5, sample_every=0.05, nx=r.nx, neta=r.neta)
    x = c.grid1.nodes
    tr = evolve_fbp(0.3 * (1.0 - x**2), c)
    t = tr.times
    amp = np.array([np.max(np.abs(s.u.values)) for s in tr.samples])
    sel = (t >= 0.5 - 1e-12) & (t <= 1.5 + 1e-12)
    rate = -float(np.polyfit(t[sel], np.log(amp[sel]), 1)[0])
    err = abs(rate - MU1) / MU1
    return CheckReport("heat_rate", {"rate": rate, "mu1": MU1, "rel_error": err}, 0.05, err <= 0.05)


def check_touchdown(fast=False) -> CheckReport:
    r = _res(fast)
    lam, eps = 120.0, 0.1
    c = EvolutionConfig(lam=lam, eps=eps, dt0=r.dt, t_end=1.0, nx=r.nx, neta=r.neta)
    tr = evolve_fbp(np.zeros(r.nx), c)
    cert = certificate(lam, eps)
    bp = BlowupParams.choose(lam, eps)
    E = [s.diagnostics["E_alpha"] for s in tr.samples]
    dec = bool(np.all(np.diff(E) < 0))
    ok = tr.outcome.kind == "touchdown" and tr.outcome.t <= cert.horizon + 2 * c.dt0 and dec
    vals = {"outcome": tr.outcome.kind, "t_td": tr.outcome.t, "horizon": cert.horizon,
            "E_decreasing": dec, "min_gap": tr.samples[-1].diagnostics["min_gap"]}
    if len(tr.samples) >= 3:
        vals["energy_max_excess"] = check_energy_inequality(tr, bp).values["max_excess"]
    return CheckReport("touchdown", vals, 2 * c.dt0, bool(ok))


def check_steady(fast=False) -> CheckReport:
    r = _res(fast)
    h = 2.0 / (r.nx - 1)
    st = steady_fixed_point(0.25, 0.1, None, nx=r.nx, neta=r.neta)
    U = st.U.values
    d2 = (U[2:] - 2 * U[1:-1] + U[:-2]) / h**2
    vals = {
        "converged": st.converged,
        "residual": st.residual,
        "max_interior": float(U[1:-1].max()),
        "min_d2": float(d2.min()),
        "asymmetry": float(np.max(np.abs(U - U[::-1]))),
        "admissible": is_admissible(st.U, 0.01),
    }
    ok = st.converged and vals["max_interior"] < 0 and vals["min_d2"] >= -10 * h and vals["asymmetry"] <= 1e-10
    return CheckReport("steady_shape", vals, 1e-10, bool(ok), notes="lambda = 0.25, eps = 0.1")


def check_evolution_steady(fast=False) -> CheckReport:
    r = _res(fast)
    lam, eps = 0.1, 0.1
    st = steady_fixed_point(lam, eps, None, nx=r.nx, neta=r.neta)
    c = EvolutionConfig(lam=lam, eps=eps, dt0=0.02, t_end=10.0, sample_every=1.0, nx=r.nx, neta=r.neta)
    tr = evolve_fbp(np.zeros(r.nx), c)
    err = float(np.max(np.abs(tr.samples[-1].u.values - st.U.values)))
    return CheckReport("evolution_vs_steady", {"sup_error": err, "outcome": tr.outcome.kind}, 1e-4,
                       bool(err <= 1e-4 and tr.outcome.kind == "reached-horizon"))


CHECKS = {
    "g_flat": check_flat,
    "g_constant": check_constant,
    "mms_order": check_mms,
    "reflection": check_symmetry,
    "psi_invariants": check_psi,
    "identities": check_identities,
    "certificate": check_certificate,
    "heat_rate": check_heat,
    "touchdown": check_touchdown,
    "steady_shape": check_steady,
    "evolution_vs_steady": check_evolution_steady,
}


def run_suite(fast: bool = False, only=None):
    """Run the registered checks; yields (report, seconds)."""
    for name, fn in CHECKS.items():
        if only and name not in only:
            continue
        t0 = time.perf_counter()
        rep = fn(fast=fast)
        yield rep, time.perf_counter() - t0
