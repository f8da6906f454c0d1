"""IMEX time stepping for the free-boundary model and its small-aspect limit.

Both models read  u_t - u_xx = -lambda g(u)  with u(+-1) = 0.  Diffusion is
implicit, the force explicit:

    backward-euler-imex:   (I + dt A) u+ = u - dt lambda g(u)
    crank-nicolson-imex:   (I + dt/2 A) u+ = (I - dt/2 A) u - dt lambda g*,
                           g* = (1 + r/2) g(u) - (r/2) g(u-),  r = dt/dt-

where A is the Dirichlet 3-point -d_xx.  The second variant extrapolates the
force (variable-step Adams-Bashforth 2) so that it is second order in time.
For the free-boundary model g = g_eps (one elliptic solve per step); for the
small-aspect model g = 1/(1+u)^2.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import kernels
from .diagnostics import discrete_norms, energy_Ealpha, energy_alpha_for
from .elliptic import g_eps, g_small_aspect, membrane, solve_potential
from .errors import DegenerateDomainError, SolverFailure
from .grid import Field1D, Grid1D, Grid2D, quad_weights, write_field_csv

log = logging.getLogger(__name__)

SCHEMES = ("backward-euler-imex", "crank-nicolson-imex")

__all__ = [
    "EvolutionConfig",
    "EvolutionState",
    "Sample",
    "Outcome",
    "Trajectory",
    "StepResult",
    "initial_state",
    "step_fbp",
    "step_small_aspect",
    "evolve_fbp",
    "evolve_small_aspect",
    "psi0_closed_form",
    "compare_limit",
    "phi_scaling_probe",
    "LimitReport",
    "ScalingReport",
]


@dataclass(frozen=True)
class EvolutionConfig:
    lam: float
    eps: float = 0.1
    dt0: float = 1e-3
    t_end: float = 1.0
    touchdown_tol: float = 1e-3
    kappa: float = 0.01
    scheme: str = "backward-euler-imex"
    sample_every: float = 0.0
    nx: int = 201
    neta: int = 101
    q: float = 4.0
    dt_min: float = 1e-14
    admissibility_exit: bool = False

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be >= 0")
        if not self.eps >= 0:
            raise ValueError("eps must be >= 0")
        if not (self.dt0 > 0 and self.t_end > 0):
            raise ValueError("dt0 and t_end must be positive")
        if not 0 < self.kappa < 1:
            raise ValueError("kappa must lie in (0, 1)")
        if not 0 < self.touchdown_tol < self.kappa:
            raise ValueError("touchdown_tol must lie in (0, kappa)")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.sample_every < 0:
            raise ValueError("sample_every must be >= 0")

    @property
    def grid1(self) -> Grid1D:
        return Grid1D(self.nx)

    @property
    def grid2(self) -> Grid2D:
        return Grid2D(self.nx, self.neta)


@dataclass(frozen=True)
class EvolutionState:
    t: float
    u: Field1D
    dt: float
    g_last: Field1D | None  # force evaluated at u
    min_gap: float
    g_prev: Field1D | None = None  # force at the previous accepted state
    dt_prev: float | None = None


@dataclass(frozen=True)
class Sample:
    t: float
    u: Field1D
    diagnostics: dict


@dataclass(frozen=True)
class Outcome:
    kind: str  # reached-horizon | touchdown | admissibility-exit | solver-failure
    t: float
    bracket: tuple[float, float] | None = None
    message: str = ""


@dataclass
class Trajectory:
    samples: list[Sample]
    outcome: Outcome
    config: EvolutionConfig
    model: str = "fbp"

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def u_at(self, k: int) -> np.ndarray:
        return self.samples[k].u.values

    def save(self, directory) -> list[Path]:
        """Write ``traj.csv``, ``u_<k>.csv`` per sample and ``outcome.json``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        cols = ["t", "min_gap", "u_mid", "E_alpha", "g_max", "dt"]
        lines = [",".join(cols)]
        files = []
        for k, s in enumerate(self.samples):
            row = [s.t] + [s.diagnostics[c] for c in cols[1:]]
            lines.append(",".join(f"{float(v):.17g}" for v in row))
            files.append(write_field_csv(s.u, d / f"u_{k}.csv"))
        (d / "traj.csv").write_text("\n".join(lines) + "\n")
        out = {
            "model": self.model,
            "outcome": self.outcome.kind,
            "t": self.outcome.t,
            "t_td_bracket": list(self.outcome.bracket) if self.outcome.bracket else None,
            "message": self.outcome.message,
            "config": asdict(self.config),
        }
        (d / "outcome.json").write_text(json.dumps(out, indent=2))
        return [d / "traj.csv", *files, d / "outcome.json"]


@dataclass(frozen=True)
class StepResult:
    state: EvolutionState
    touchdown: tuple[float, float] | None = None  # bracket on t_td


# --------------------------------------------------------------------------
# stepping


def _force_fbp(c: EvolutionConfig) -> Callable[[np.ndarray], np.ndarray]:
    g2 = c.grid2

    def force(u):
        return g_eps(membrane(u), c.eps, g2).values

    return force


def _force_small(u):
    return g_small_aspect(membrane(u)).values


def _heat_rhs(u, dt, c: EvolutionConfig, h):
    """Interior right-hand side of the implicit diffusion solve, before the force."""
    ui = u[1:-1]
    if c.scheme == "backward-euler-imex":
        return ui.copy()
    lap = np.empty_like(ui)
    lap[:] = u[2:] - 2.0 * ui + u[:-2]
    return ui + 0.5 * dt / h**2 * lap


def _advance(u, g_star, dt, c: EvolutionConfig, h):
    theta = 1.0 if c.scheme == "backward-euler-imex" else 0.5
    n = len(u) - 2
    off = np.full(n, -theta * dt / h**2)
    diag = np.full(n, 1.0 + 2.0 * theta * dt / h**2)
    rhs = _heat_rhs(u, dt, c, h) - dt * c.lam * g_star[1:-1]
    out = np.zeros_like(u)
    out[1:-1] = kernels.thomas(off, diag, off, np.ascontiguousarray(rhs))
    return out


def _g_star(s: EvolutionState, g_n, dt, c: EvolutionConfig):
    if c.scheme == "crank-nicolson-imex" and s.g_prev is not None and s.dt_prev:
        r = dt / s.dt_prev
        return (1.0 + 0.5 * r) * g_n - 0.5 * r * s.g_prev.values
    return g_n


def _step(s: EvolutionState, c: EvolutionConfig, force, dt=None) -> StepResult:
    dt = s.dt if dt is None else dt
    h = s.u.grid.h
    u = s.u.values
    if not s.min_gap > c.touchdown_tol:
        raise DegenerateDomainError("state already at touchdown", s.min_gap)
    if c.lam == 0.0:
        g_n = np.zeros_like(u)
    else:
        g_n = s.g_last.values if s.g_last is not None else force(u)
    g_star = _g_star(s, g_n, dt, c)

    u_new = _advance(u, g_star, dt, c, h)
    gap = float(np.min(1.0 + u_new))
    bracket = None
    if not gap > c.touchdown_tol:
        # locate min_gap = touchdown_tol by bisection in the step length
        lo, hi = 0.0, dt
        while hi - lo > dt / 100.0:
            mid = 0.5 * (lo + hi)
            trial = _advance(u, _g_star(s, g_n, mid, c), mid, c, h)
            if float(np.min(1.0 + trial)) > c.touchdown_tol:
                lo = mid
            else:
                hi = mid
        u_new = _advance(u, _g_star(s, g_n, hi, c), hi, c, h)
        gap = float(np.min(1.0 + u_new))
        bracket = (s.t + lo, s.t + hi)
        dt = hi

    g_field = Field1D(s.u.grid, g_n)
    new = EvolutionState(
        t=s.t + dt,
        u=Field1D(s.u.grid, u_new),
        dt=s.dt,
        g_last=None,
        min_gap=gap,
        g_prev=g_field,
        dt_prev=dt,
    )
    return StepResult(new, bracket)


def initial_state(u0, c: EvolutionConfig) -> EvolutionState:
    vals = np.array(u0.values if isinstance(u0, Field1D) else u0, dtype=float)
    vals[0] = vals[-1] = 0.0
    u = Field1D(c.grid1, vals)
    return EvolutionState(t=0.0, u=u, dt=c.dt0, g_last=None, min_gap=float(np.min(1.0 + vals)))


def step_fbp(s: EvolutionState, c: EvolutionConfig) -> StepResult:
    """One IMEX step of the free-boundary model (one elliptic solve)."""
    return _step(s, c, _force_fbp(c))


def step_small_aspect(s: EvolutionState, c: EvolutionConfig) -> StepResult:
    return _step(s, c, _force_small)


# --------------------------------------------------------------------------
# driver


def _diagnostics(s: EvolutionState, c: EvolutionConfig, alpha: float, g_vals, dt):
    u = s.u
    return {
        "min_gap": s.min_gap,
        "surrogate": discrete_norms(u, c.q).surrogate,
        "u_mid": float(u.values[len(u.values) // 2]),
        "E_alpha": energy_Ealpha(u, alpha),
        "g_max": float(np.max(g_vals)) if g_vals is not None else math.nan,
        "dt": dt,
    }


def _evolve(u0, c: EvolutionConfig, force, model: str) -> Trajectory:
    s = initial_state(u0, c)
    if not s.min_gap > c.touchdown_tol:
        raise DegenerateDomainError("initial gap below touchdown tolerance", s.min_gap)
    alpha = energy_alpha_for(c.eps)
    eval_force = (lambda u: np.zeros_like(u)) if c.lam == 0.0 else force

    def with_force(state):
        if state.g_last is not None:
            return state
        return replace(state, g_last=Field1D(state.u.grid, eval_force(state.u.values)))

    try:
        s = with_force(s)
    except (SolverFailure, DegenerateDomainError) as exc:
        return Trajectory([], Outcome("solver-failure", 0.0, message=str(exc)), c, model)

    samples = [Sample(0.0, s.u, _diagnostics(s, c, alpha, s.g_last.values, c.dt0))]
    next_sample = c.sample_every if c.sample_every > 0 else None
    dt = c.dt0
    outcome = None
    calm_steps = 0

    while outcome is None:
        target = c.t_end if next_sample is None else min(next_sample, c.t_end)
        step_dt = min(dt, target - s.t)
        landing = step_dt >= target - s.t - 1e-14 * max(1.0, target)
        res = _step(s, c, force, dt=step_dt)
        new = res.state
        if res.touchdown is None:
            drop = (s.min_gap - new.min_gap) / s.min_gap
            if drop > 0.1 and step_dt > c.dt_min:
                dt = 0.5 * step_dt
                calm_steps = 0
                continue
            calm_steps = calm_steps + 1 if drop < 0.025 else 0
            if calm_steps >= 3 and dt < c.dt0:
                dt = min(2.0 * dt, c.dt0)
                calm_steps = 0
        if landing and res.touchdown is None:
            new = replace(new, t=target)
        s = replace(new, dt=dt)

        if res.touchdown is not None:
            outcome = Outcome("touchdown", res.touchdown[1], res.touchdown)
            samples.append(Sample(s.t, s.u, _diagnostics(s, c, alpha, None, step_dt)))
            break
        try:
            s = with_force(s)
        except (SolverFailure, DegenerateDomainError) as exc:
            outcome = Outcome("solver-failure", s.t, message=str(exc))
            samples.append(Sample(s.t, s.u, _diagnostics(s, c, alpha, None, step_dt)))
            break
        nb = discrete_norms(s.u, c.q)
        at_end = landing and target == c.t_end
        if next_sample is None or (landing and target == next_sample) or at_end:
            samples.append(Sample(s.t, s.u, _diagnostics(s, c, alpha, s.g_last.values, step_dt)))
            if next_sample is not None and landing and target == next_sample:
                next_sample = next_sample + c.sample_every
        if c.admissibility_exit and nb.surrogate > 1.0 / c.kappa:
            outcome = Outcome("admissibility-exit", s.t, message=f"surrogate norm {nb.surrogate:.4g} > 1/kappa")
            if samples[-1].t != s.t:
                samples.append(Sample(s.t, s.u, _diagnostics(s, c, alpha, s.g_last.values, step_dt)))
        elif at_end:
            outcome = Outcome("reached-horizon", s.t)
    log.info("%s run finished: %s at t=%.6g", model, outcome.kind, outcome.t)
    return Trajectory(samples, outcome, c, model)


def evolve_fbp(u0, c: EvolutionConfig) -> Trajectory:
    """Integrate the free-boundary model until t_end, touchdown, admissibility exit or failure."""
    return _evolve(u0, c, _force_fbp(c), "fbp")


def evolve_small_aspect(u0, c: EvolutionConfig) -> Trajectory:
    return _evolve(u0, c, _force_small, "small-aspect")


# --------------------------------------------------------------------------
# small-aspect limit


def psi0_closed_form(u0: Field1D, z) -> tuple[np.ndarray, np.ndarray]:
    """psi_0 = (1+z)/(1+u0(x)) on {-1 <= z <= u0(x)}; returns (values with NaN outside, mask)."""
    gap = 1.0 + np.asarray(u0.values, dtype=float)
    if np.min(gap) <= 0:
        raise DegenerateDomainError("closed-form potential needs 1 + u0 > 0", float(np.min(gap)))
    z = np.asarray(getattr(z, "nodes", z), dtype=float)
    if z.ndim == 1:
        z = np.broadcast_to(z[None, :], (gap.size, z.size))
    mask = (z >= -1.0 - 1e-14) & (z <= gap[:, None] - 1.0 + 1e-14)
    psi = np.where(mask, (1.0 + z) / gap[:, None], np.nan)
    return psi, mask


def _psi_gap_l2(phi: np.ndarray, eta: np.ndarray, ue: float, u0: float) -> float:
    """Exact int_{-1}^{0} (psi_e 1_{z<ue} - psi_0 1_{z<u0})^2 dz for one column.

    psi_e is the piecewise-linear interpolant of phi in eta, psi_0 is linear
    in z, so the integrand is piecewise quadratic and integrated exactly.
    """
    ge, g0 = 1.0 + ue, 1.0 + u0
    top = min(ge, g0) / ge  # eta at min(ue, u0)

    def seg_sq(a, b, fa, fb):
        return (b - a) * (fa * fa + fa * fb + fb * fb) / 3.0

    total = 0.0
    # common part, in eta with dz = ge deta; psi_0 = ge*eta/g0
    knots = np.concatenate([eta[eta < top], [top]])
    vals = np.interp(knots, eta, phi)
    diff = vals - ge * knots / g0
    total += ge * float(np.sum(seg_sq(knots[:-1], knots[1:], diff[:-1], diff[1:])))
    if ge > g0:
        knots = np.concatenate([[top], eta[eta > top]])
        vals = np.interp(knots, eta, phi)
        total += ge * float(np.sum(seg_sq(knots[:-1], knots[1:], vals[:-1], vals[1:])))
    elif g0 > ge:
        total += (g0**3 - ge**3) / (3.0 * g0**2)
    return total


def psi_limit_error(p, u_eps: Field1D, u_0: Field1D) -> float:
    """L2(I x (-1, 0)) distance between psi_eps 1_{Omega(u_eps)} and psi_0 1_{Omega(u_0)}."""
    g = p.grid
    col = np.array(
        [_psi_gap_l2(p.phi.values[i], g.eta, u_eps.values[i], u_0.values[i]) for i in range(g.nx)]
    )
    w, _ = quad_weights(g.nx, g.hx)
    return float(math.sqrt(max(w @ col, 0.0)))


@dataclass
class LimitReport:
    lam: float
    tau: float
    eps: list[float]
    e_u: list[float]
    e_psi: list[float]
    outcomes: list[str]
    slope_u: float
    slope_psi: float

    def to_dict(self):
        return asdict(self)


def _slope(eps, err):
    eps, err = np.asarray(eps, float), np.asarray(err, float)
    ok = (eps > 0) & (err > 0) & np.isfinite(err)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(eps[ok]), np.log(err[ok]), 1)[0])


def compare_limit(u0, lam: float, eps_list, tau: float, c: EvolutionConfig | None = None) -> LimitReport:
    """Distance between eps-runs and the small-aspect run on [0, tau]."""
    base = c or EvolutionConfig(lam=lam, t_end=tau)
    base = replace(base, lam=lam, t_end=tau)
    if base.sample_every == 0:
        base = replace(base, sample_every=tau / 50)
    ref = evolve_small_aspect(u0, base)
    e_u, e_psi, outcomes = [], [], []
    for eps in eps_list:
        ce = replace(base, eps=float(eps))
        tr = evolve_small_aspect(u0, ce) if eps == 0 else evolve_fbp(u0, ce)
        outcomes.append(tr.outcome.kind)
        ok = tr.outcome.kind == "reached-horizon" and ref.outcome.kind == "reached-horizon"
        if not ok or len(tr.samples) != len(ref.samples):
            e_u.append(math.nan)
            e_psi.append(math.nan)
            continue
        e_u.append(max(float(np.max(np.abs(a.u.values - b.u.values))) for a, b in zip(tr.samples, ref.samples)))
        u_e, u_r = tr.samples[-1].u, ref.samples[-1].u
        p = solve_potential(membrane(u_e), float(eps), base.grid2)
        e_psi.append(psi_limit_error(p, u_e, u_r))
    return LimitReport(
        lam=lam,
        tau=tau,
        eps=[float(e) for e in eps_list],
        e_u=e_u,
        e_psi=e_psi,
        outcomes=outcomes,
        slope_u=_slope(eps_list, e_u),
        slope_psi=_slope(eps_list, e_psi),
    )


@dataclass
class ScalingReport:
    eps: list[float]
    norms: dict  # name -> list over eps
    ratios: dict  # name -> norm / eps^power
    powers: dict
    spread: dict  # name -> max(ratio)/min(ratio)

    def to_dict(self):
        return asdict(self)


SCALING_POWERS = {"Phi": 1, "dPhi_deta": 1, "dPhi_dxdeta": 1, "dPhi_deta2": 2, "trace": 1}


def phi_scaling_probe(profiles, eps_list, grid: Grid2D) -> ScalingReport:
    """L2 norms of Phi_eps and its derivatives divided by their predicted power of eps.

    ``profiles`` is one Field1D/array used for every eps, or a sequence with
    one profile per eps (e.g. snapshots u_eps(tau)).
    """
    from .grid import d1

    if isinstance(profiles, Field1D) or np.ndim(profiles) == 1:
        profiles = [profiles] * len(eps_list)
    wx, _ = quad_weights(grid.nx, grid.hx)
    we, _ = quad_weights(grid.neta, grid.heta)
    l2 = lambda F: float(math.sqrt(max(wx @ (F * F) @ we, 0.0)))
    norms = {k: [] for k in SCALING_POWERS}
    for v, eps in zip(profiles, eps_list):
        P = solve_potential(membrane(v), float(eps), grid).Phi.values
        Pe = d1(P, grid.heta, axis=1)
        norms["Phi"].append(l2(P))
        norms["dPhi_deta"].append(l2(Pe))
        norms["dPhi_dxdeta"].append(l2(d1(Pe, grid.hx, axis=0)))
        norms["dPhi_deta2"].append(l2(d1(Pe, grid.heta, axis=1)))
        norms["trace"].append(float(math.sqrt(max(wx @ Pe[:, -1] ** 2, 0.0))))
    ratios, spread = {}, {}
    for k, powr in SCALING_POWERS.items():
        r = [n / e**powr for n, e in zip(norms[k], eps_list)]
        ratios[k] = r
        spread[k] = (max(r) / min(r)) if min(r) > 0 else (1.0 if max(r) == 0 else math.inf)
    return ScalingReport([float(e) for e in eps_list], norms, ratios, dict(SCALING_POWERS), spread)
