"""Independent reference computations used by the tests.

Nothing here imports the package: the small-aspect steady problem is solved
by shooting from the centre with an adaptive ODE integrator, and the pull-in
voltage by bisection on existence.
"""
import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize_scalar

RTOL = 1e-12
ATOL = 1e-13


def _shoot(depth, lam, x_eval=None):
    # U'' = lam / (1 + U)^2 on (0, 1), U(0) = -depth, U'(0) = 0
    rhs = lambda x, y: [y[1], lam / (1.0 + y[0]) ** 2]
    hit = lambda x, y: 1.0 + y[0] - 1e-9
    hit.terminal = True
    sol = solve_ivp(rhs, (0.0, 1.0), [-depth, 0.0], method="DOP853", rtol=RTOL, atol=ATOL,
                    t_eval=x_eval, events=hit, dense_output=x_eval is None)
    return sol


def end_value(depth, lam):
    sol = _shoot(depth, lam)
    if sol.status == 1:  # reached the plate before x = 1
        return -1.0
    return float(sol.y[0, -1])


def min_end_value(lam):
    res = minimize_scalar(lambda a: end_value(a, lam), bounds=(1e-6, 0.999), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.fun), float(res.x)


def steady_small_aspect(lam, x):
    """Minimal-branch steady state U(x) of U'' = lam / (1+U)^2, U(+-1) = 0.

    Returns None when no steady state exists.
    """
    fmin, a_min = min_end_value(lam)
    if fmin > 0:
        return None
    # minimal branch: the smallest depth with U(1) = 0
    depth = brentq(lambda a: end_value(a, lam), 1e-12, a_min, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    xs, inv = np.unique(np.clip(np.abs(np.asarray(x, dtype=float)), 0.0, 1.0), return_inverse=True)
    sol = _shoot(depth, lam, x_eval=xs)
    return sol.y[0][inv]


def pull_in_lambda(lo=0.1, hi=1.0, tol=1e-6):
    """Largest lambda with a steady state, by bisection on existence."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if min_end_value(mid)[0] <= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def certificate_by_hand(lam, eps):
    """The blow-up parameter arithmetic written out term by term."""
    mu1 = math.pi**2 / 4
    beta = math.sqrt(lam) / 2
    p = 1 + 2 * mu1 * eps * eps
    alpha = lam * eps * eps / (4 * beta * beta + lam * eps * eps)
    pref = 4 * lam * beta / ((4 * beta * beta + lam * eps * eps) * p)
    F0 = mu1 + pref * (mu1 * eps * eps / p + p / (4 * beta) - 1.0)
    return {"beta": beta, "p": p, "alpha": alpha, "F0": F0, "horizon": -1.0 / F0}
