"""Blow-up certificate, weighted energy and identity/inequality checkers.

The certificate follows the eigenfunction-weighted energy argument: with
zeta_1 = (pi/4) cos(pi x / 2) (unit mass) and mu_1 = pi^2/4, the quantity
E_alpha = int zeta_1 (u + alpha u^2 / 2) dx satisfies dE/dt <= F(E) for the
parameter choice beta = sqrt(lambda)/2, p = 1 + 2 mu_1 eps^2,
alpha = lambda eps^2 / (4 beta^2 + lambda eps^2).  F(0) < 0 then forces
touchdown before -1/F(0).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .elliptic import MembraneProfile, PotentialSolve
from .errors import InsufficientDataError
from .grid import Field1D, Grid1D, d1, d2, integrate1, quad_weights

MU1 = math.pi**2 / 4.0

__all__ = [
    "MU1",
    "EigenData",
    "BlowupParams",
    "BlowupCertificate",
    "NormBundle",
    "CheckReport",
    "eigen_data",
    "zeta1",
    "energy_Ealpha",
    "blowup_F",
    "lambda_star",
    "certificate",
    "check_energy_inequality",
    "check_identity_n5",
    "check_inequality_n4",
    "discrete_norms",
    "is_admissible",
]


@dataclass(frozen=True)
class EigenData:
    zeta1: Field1D
    mu1: float = MU1


def zeta1(x):
    return 0.25 * math.pi * np.cos(0.5 * math.pi * np.asarray(x, dtype=float))


def eigen_data(grid: Grid1D) -> EigenData:
    return EigenData(grid.sample(zeta1))


@dataclass(frozen=True)
class BlowupParams:
    lam: float
    eps: float
    beta: float
    p: float
    alpha: float

    @classmethod
    def choose(cls, lam: float, eps: float) -> "BlowupParams":
        if lam <= 0:
            raise ValueError("the blow-up parameters need lambda > 0")
        beta = math.sqrt(lam) / 2.0
        p = 1.0 + 2.0 * MU1 * eps**2
        alpha = lam * eps**2 / (4.0 * beta**2 + lam * eps**2)
        return cls(lam=float(lam), eps=float(eps), beta=beta, p=p, alpha=alpha)


def energy_alpha_for(eps: float) -> float:
    """alpha for the standard parameter choice; lambda drops out (= eps^2/(1+eps^2))."""
    return eps**2 / (1.0 + eps**2)


def energy_Ealpha(u: Field1D, alpha: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    w = zeta1(u.x) * (u.values + 0.5 * alpha * u.values**2)
    return integrate1(Field1D(u.grid, w))


def blowup_F(E: float, bp: BlowupParams) -> float:
    if E <= -1.0:
        raise ValueError(f"F is defined on (-1, inf); got E = {E}")
    lam, eps, beta, p = bp.lam, bp.eps, bp.beta, bp.p
    coef = 4.0 * lam * beta / ((4.0 * beta**2 + lam * eps**2) * p)
    return MU1 + coef * (MU1 * eps**2 / p + p / (4.0 * beta) - 1.0 / (1.0 + E))


def lambda_star(eps: float) -> float:
    """Voltage above which the certificate applies: sqrt(lambda) > 4 mu_1 (1 + eps^2)."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    return 16.0 * MU1**2 * (1.0 + eps**2) ** 2


@dataclass(frozen=True)
class BlowupCertificate:
    params: BlowupParams
    F0: float
    lambda_star: float
    horizon: float | None

    def to_dict(self):
        d = asdict(self)
        d["certified"] = self.horizon is not None
        return d


def certificate(lam: float, eps: float) -> BlowupCertificate:
    bp = BlowupParams.choose(lam, eps)
    F0 = blowup_F(0.0, bp)
    return BlowupCertificate(bp, F0, lambda_star(eps), -1.0 / F0 if F0 < 0 else None)


# --------------------------------------------------------------------------
# reports


def _hash_inputs(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a, dtype=float)).tobytes())
    return h.hexdigest()[:16]


@dataclass
class CheckReport:
    name: str
    values: dict
    tolerance: float
    passed: bool
    inputs_hash: str = ""
    notes: str = ""

    def to_json(self, directory) -> Path:
        path = Path(directory) / f"check_{self.name}.json"
        path.write_text(json.dumps(asdict(self), indent=2, default=float))
        return path


def check_energy_inequality(traj, bp: BlowupParams, tol_dyn: float | None = None) -> CheckReport:
    """Compare the sampled dE_alpha/dt with F(E_alpha) along a trajectory.

    The derivative uses centred differences on the (possibly non-uniform)
    sample times.  Default slack: 0.05 |F(0)| plus the largest jump of the
    discrete derivative between neighbouring samples (the O(dt) part).
    """
    t = np.array([s.t for s in traj.samples])
    if len(t) < 3:
        raise InsufficientDataError("need at least 3 samples")
    E = np.array([energy_Ealpha(s.u, bp.alpha) for s in traj.samples])
    dE = np.gradient(E, t)
    F = np.array([blowup_F(e, bp) for e in E])
    excess = dE - F
    F0 = blowup_F(0.0, bp)
    slack = float(np.max(np.abs(np.diff(dE)))) if len(dE) > 1 else 0.0
    tol = tol_dyn if tol_dyn is not None else 0.05 * abs(F0) + slack
    return CheckReport(
        name="energy_inequality",
        values={
            "max_excess": float(np.max(excess)),
            "F0": F0,
            "E_first": float(E[0]),
            "E_last": float(E[-1]),
            "strictly_decreasing": bool(np.all(np.diff(E) < 0)),
            "n_samples": int(len(t)),
        },
        tolerance=float(tol),
        passed=bool(np.max(excess) <= tol),
        inputs_hash=_hash_inputs(t, E),
    )


def _transformed_terms(p: PotentialSolve, m: MembraneProfile, eps: float):
    g = p.grid
    phi = p.phi.values
    gap = (1.0 + m.v.values)[:, None]
    s = (m.dv.values / (1.0 + m.v.values))[:, None]
    eta = g.eta[None, :]
    pe = d1(phi, g.heta, axis=1)
    px = d1(phi, g.hx, axis=0) - eta * s * pe
    pz = pe / gap
    z1 = zeta1(g.x)[:, None]
    wx, _ = quad_weights(g.nx, g.hx)
    we, _ = quad_weights(g.neta, g.heta)
    area = lambda F: float(wx @ (F * gap) @ we)  # d(x,z) = (1+v) d(x,eta)
    return np.clip(phi, 0.0, None), px, pz, z1, area


def check_identity_n5(p: PotentialSolve, m: MembraneProfile, eps: float, p_exp: float) -> CheckReport:
    """Weighted energy identity for the potential (test function zeta_1 psi^p).

    LHS = int zeta_1 (1 + eps^2 u'^2) psi_z(x, u) dx, RHS = the domain integral
    minus the two mu_1 eps^2 corrections.  Both are evaluated on the fixed
    rectangle with dz = (1 + u) d eta.  The identity presumes u(+-1) = 0.
    """
    if p_exp < 1:
        raise ValueError("p_exp must be >= 1")
    phi, px, pz, z1, area = _transformed_terms(p, m, eps)
    u = m.v
    pz_top = p.trace.values / (1.0 + u.values)
    lhs = integrate1(Field1D(u.grid, zeta1(u.x) * (1.0 + eps**2 * m.dv.values**2) * pz_top))
    bulk = area(
        z1
        * (
            p_exp * eps**2 * phi ** (p_exp - 1) * px**2
            + p_exp * phi ** (p_exp - 1) * pz**2
            + MU1 * eps**2 / (p_exp + 1) * phi ** (p_exp + 1)
        )
    )
    zu = integrate1(Field1D(u.grid, zeta1(u.x) * u.values))
    rhs = bulk - MU1 * eps**2 / ((p_exp + 1) * (p_exp + 2)) - MU1 * eps**2 / (p_exp + 1) * zu
    res = abs(lhs - rhs)
    h = max(p.grid.hx, p.grid.heta)
    return CheckReport(
        name="weighted_identity",
        values={"lhs": lhs, "rhs": rhs, "residual": res, "p": p_exp, "eps": eps, "h": h},
        tolerance=h,
        passed=bool(res <= h),
        inputs_hash=_hash_inputs(u.values, [eps, p_exp]),
        notes="tolerance C*h with C = 1",
    )


def check_inequality_n4(p: PotentialSolve, m: MembraneProfile, p_exp: float) -> CheckReport:
    """Cauchy-Schwarz lower bound on the weighted Dirichlet energy in z; margin = RHS - LHS."""
    phi, _, pz, z1, area = _transformed_terms(p, m, p.eps)
    u = m.v
    lhs = 4.0 * p_exp / (p_exp + 1) ** 2 * integrate1(Field1D(u.grid, zeta1(u.x) / (1.0 + u.values)))
    rhs = p_exp * area(z1 * phi ** (p_exp - 1) * pz**2)
    h = max(p.grid.hx, p.grid.heta)
    margin = rhs - lhs
    return CheckReport(
        name="trace_inequality",
        values={"lhs": lhs, "rhs": rhs, "margin": margin, "p": p_exp},
        tolerance=10.0 * h,
        passed=bool(margin >= -10.0 * h),
        inputs_hash=_hash_inputs(u.values, [p_exp]),
    )


@dataclass(frozen=True)
class NormBundle:
    sup: float
    lq: float
    lq_d1: float
    lq_d2: float
    sup_d2: float
    w2q: float
    surrogate: float
    q: float


def _lq(values, w, q):
    return float((w @ np.abs(values) ** q) ** (1.0 / q))


def discrete_norms(u: Field1D, q: float = 4.0) -> NormBundle:
    """Grid analogues of the W^2_q quantities used by the admissibility surrogate.

    ``surrogate = max(|u|_inf, |u'|_q, |u''|_q)``; ``w2q`` is the full
    (|u|_q^q + |u'|_q^q + |u''|_q^q)^(1/q).  Interior nodes only for u''.
    """
    if q < 2:
        raise ValueError("q must be >= 2")
    h = u.grid.h
    w, _ = quad_weights(u.grid.n, h)
    du = d1(u.values, h)
    dd = d2(u.values, h)
    # endpoint second differences are one-sided extrapolations; use the
    # nearest interior value there
    dd[0], dd[-1] = dd[1], dd[-2]
    lq, lq1, lq2 = _lq(u.values, w, q), _lq(du, w, q), _lq(dd, w, q)
    sup = float(np.max(np.abs(u.values)))
    return NormBundle(
        sup=sup,
        lq=lq,
        lq_d1=lq1,
        lq_d2=lq2,
        sup_d2=float(np.max(np.abs(dd))),
        w2q=(lq**q + lq1**q + lq2**q) ** (1.0 / q),
        surrogate=max(sup, lq1, lq2),
        q=q,
    )


def is_admissible(u: Field1D, kappa: float, q: float = 4.0, check_gap: bool = True) -> bool:
    """Discrete stand-in for membership in S_q(kappa)."""
    nb = discrete_norms(u, q)
    ok = nb.surrogate <= 1.0 / kappa
    if check_gap:
        ok = ok and float(np.min(1.0 + u.values)) >= kappa
    return bool(ok)
