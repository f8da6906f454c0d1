import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mems_fbp.diagnostics import MU1
from mems_fbp.elliptic import g_eps, g_small_aspect, membrane
from mems_fbp.errors import DegenerateDomainError
from mems_fbp.evolution import (
    EvolutionConfig,
    compare_limit,
    evolve_fbp,
    evolve_small_aspect,
    initial_state,
    phi_scaling_probe,
    psi0_closed_form,
    step_fbp,
    step_small_aspect,
)
from mems_fbp.grid import Grid1D, Grid2D
from mems_fbp.suite import random_profile

COARSE = dict(nx=41, neta=21)


def test_config_validation():
    with pytest.raises(ValueError):
        EvolutionConfig(lam=-1)
    with pytest.raises(ValueError):
        EvolutionConfig(lam=1, touchdown_tol=0.02, kappa=0.01)
    with pytest.raises(ValueError):
        EvolutionConfig(lam=1, dt0=0)
    with pytest.raises(ValueError):
        EvolutionConfig(lam=1, scheme="rk4")


def test_heat_equation_exact():
    c = EvolutionConfig(lam=0.0, eps=0.1, dt0=1e-3, t_end=1.0, sample_every=0.5)
    x = c.grid1.nodes
    tr = evolve_fbp(np.cos(np.pi * x / 2), c)
    exact = math.exp(-MU1) * np.cos(np.pi * x / 2)
    assert tr.outcome.kind == "reached-horizon"
    assert tr.samples[-1].t == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(tr.samples[-1].u.values - exact)) <= 1e-3


def test_first_step_from_flat():
    c = EvolutionConfig(lam=2.0, eps=0.1, dt0=1e-2, **COARSE)
    s = initial_state(np.zeros(41), c)
    new = step_fbp(s, c).state.u.values
    h = c.grid1.h
    n = 39
    A = (2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)) / h**2
    want = -c.dt0 * c.lam * np.linalg.solve(np.eye(n) + c.dt0 * A, np.ones(n))
    assert np.allclose(new[1:-1], want, atol=1e-13)
    assert np.all(new <= 0)


@settings(max_examples=10)
@given(seed=st.integers(0, 10_000), lam=st.floats(0.0, 0.3))
def test_sign_and_evenness_preserved(seed, lam):
    rng = np.random.default_rng(seed)
    c = EvolutionConfig(lam=lam, eps=0.2, dt0=5e-3, t_end=0.05, **COARSE)
    x = c.grid1.nodes
    u0 = -np.abs(random_profile(rng, x, even=True))
    u0 = 0.5 * (u0 + u0[::-1])
    tr = evolve_fbp(u0, c)
    for s in tr.samples:
        u = s.u.values
        assert np.all(u <= 1e-15)
        assert np.max(np.abs(u - u[::-1])) <= 1e-10


@settings(max_examples=10)
@given(seed=st.integers(0, 10_000))
def test_comparison_bound(seed):
    rng = np.random.default_rng(seed)
    c = EvolutionConfig(lam=0.2, eps=0.2, dt0=5e-3, t_end=0.05, **COARSE)
    u0 = random_profile(rng, c.grid1.nodes)
    bound = max(u0.max(), 0.0)
    tr = evolve_fbp(u0, c)
    assert all(s.u.values.max() <= bound + 1e-12 for s in tr.samples)


def test_even_data_stay_even_default_grid():
    c = EvolutionConfig(lam=0.3, eps=0.1, dt0=1e-2, t_end=0.1)
    tr = evolve_fbp(np.zeros(201), c)
    assert max(np.max(np.abs(s.u.values - s.u.values[::-1])) for s in tr.samples) <= 1e-10


def _self_order(scheme):
    x = np.linspace(-1, 1, 101)
    u0 = -0.1 * np.cos(np.pi * x / 2) - 0.05 * np.sin(np.pi * x)
    run = lambda dt: evolve_small_aspect(
        u0, EvolutionConfig(lam=0.3, eps=0, dt0=dt, t_end=0.2, nx=101, scheme=scheme, sample_every=0.2)
    ).samples[-1].u.values
    ref = run(0.02 / 128)
    e = [np.max(np.abs(run(dt) - ref)) for dt in (0.01, 0.005, 0.0025)]
    return [math.log2(e[i] / e[i + 1]) for i in range(2)]


def test_temporal_order_backward_euler():
    assert all(0.85 <= o <= 1.2 for o in _self_order("backward-euler-imex"))


def test_temporal_order_crank_nicolson():
    assert all(1.8 <= o <= 2.2 for o in _self_order("crank-nicolson-imex"))


@pytest.mark.slow
def test_small_eps_matches_small_aspect_model():
    c = EvolutionConfig(lam=0.3, eps=1e-3, dt0=1e-2, t_end=1.0, sample_every=0.1)
    x = c.grid1.nodes
    u0 = -0.2 * (1 - x**2)
    a = evolve_fbp(u0, c)
    b = evolve_small_aspect(u0, c)
    assert len(a.samples) == len(b.samples)
    err = max(np.max(np.abs(p.u.values - q.u.values)) for p, q in zip(a.samples, b.samples))
    assert err <= 1e-3


def test_touchdown_outcome_consistent():
    c = EvolutionConfig(lam=10.0, eps=0.0, dt0=1e-3, t_end=1.0, nx=101)
    tr = evolve_small_aspect(np.zeros(101), c)
    assert tr.outcome.kind == "touchdown"
    lo, hi = tr.outcome.bracket
    assert lo <= hi and hi - lo <= c.dt0 / 100 + 1e-15
    assert tr.samples[-1].diagnostics["min_gap"] <= c.touchdown_tol
    t = tr.times
    assert np.all(np.diff(t) > 0)
    assert all(s.diagnostics["dt"] <= c.dt0 * (1 + 1e-12) for s in tr.samples)


def test_small_aspect_touchdown_time_converges():
    """Touchdown time for lambda = 10 is resolved: halving h and dt moves it by < 2%."""
    t = []
    for n, dt in ((101, 1e-3), (201, 5e-4)):
        c = EvolutionConfig(lam=10.0, eps=0.0, dt0=dt, t_end=1.0, nx=n)
        t.append(evolve_small_aspect(np.zeros(n), c).outcome.t)
    assert abs(t[0] - t[1]) / t[1] < 0.02


def test_step_at_touchdown_raises():
    c = EvolutionConfig(lam=1.0, eps=0.0, nx=11)
    s = initial_state(np.zeros(11), c)
    bad = s.__class__(t=0.0, u=s.u, dt=s.dt, g_last=None, min_gap=5e-4)
    with pytest.raises(DegenerateDomainError):
        step_small_aspect(bad, c)


def test_admissibility_exit_is_opt_in():
    base = dict(lam=5.0, eps=0.0, dt0=1e-3, t_end=1.0, nx=101, kappa=0.05, touchdown_tol=1e-3)
    a = evolve_small_aspect(np.zeros(101), EvolutionConfig(**base))
    b = evolve_small_aspect(np.zeros(101), EvolutionConfig(**base, admissibility_exit=True))
    assert a.outcome.kind == "touchdown"
    assert b.outcome.kind == "admissibility-exit"
    assert b.samples[-1].diagnostics["surrogate"] > 1 / 0.05


def test_constant_state_models_agree():
    g = Grid2D(21, 11)
    m = membrane(np.full(21, -0.4), clamp=False)
    assert np.allclose(g_small_aspect(m).values, g_eps(m, 0.3, g).values, atol=1e-12)


def test_psi0_closed_form():
    grid = Grid1D(11)
    z = np.linspace(-1, 0, 5)
    psi, mask = psi0_closed_form(grid.field(np.zeros(11)), z)
    assert np.all(mask) and np.allclose(psi, 1 + z[None, :])
    psi, mask = psi0_closed_form(grid.field(np.full(11, -0.5)), z)
    assert np.allclose(psi[mask], (2 * (1 + np.broadcast_to(z, psi.shape)))[mask])
    assert not mask[:, -1].any()
    u = -0.3 * (1 - grid.nodes**2)
    psi, _ = psi0_closed_form(grid.field(u), u[:, None])
    assert np.allclose(psi, 1.0, atol=1e-15)
    psi, _ = psi0_closed_form(grid.field(u), np.array([-1.0]))
    assert np.all(psi == 0.0)


def test_compare_limit_eps_zero_is_exact():
    c = EvolutionConfig(lam=0.5, dt0=1e-2, nx=41, neta=21)
    x = c.grid1.nodes
    rep = compare_limit(-0.2 * (1 - x**2), 0.5, [0.0], 0.1, c)
    assert rep.e_u == [0.0]


def test_phi_scaling_probe_flat_profile():
    g = Grid2D(21, 11)
    rep = phi_scaling_probe(np.zeros(21), [0.2, 0.1], g)
    for vals in rep.norms.values():
        assert all(v == 0.0 for v in vals)


def test_phi_scaling_second_derivative_ratio_bounded():
    g = Grid2D(81, 41)
    rep = phi_scaling_probe(-0.3 * (1 - g.x**2), [0.2, 0.1, 0.05, 0.025], g)
    assert rep.spread["dPhi_deta2"] < 2.0


def test_trajectory_save(tmp_path):
    c = EvolutionConfig(lam=0.3, eps=0.1, dt0=1e-2, t_end=0.03, **COARSE)
    tr = evolve_fbp(np.zeros(41), c)
    tr.save(tmp_path)
    head = (tmp_path / "traj.csv").read_text().splitlines()
    assert head[0] == "t,min_gap,u_mid,E_alpha,g_max,dt"
    assert len(head) == len(tr.samples) + 1
    assert (tmp_path / f"u_{len(tr.samples) - 1}.csv").exists()
    out = json.loads((tmp_path / "outcome.json").read_text())
    assert out["outcome"] == "reached-horizon" and out["config"]["lam"] == 0.3
