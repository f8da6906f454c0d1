import json
import math

import numpy as np
import pytest
import sympy as sym
from hypothesis import given
from hypothesis import strategies as st

from oracles import certificate_by_hand

from mems_fbp.diagnostics import (
    MU1,
    BlowupParams,
    certificate,
    blowup_F,
    check_energy_inequality,
    check_identity_n5,
    check_inequality_n4,
    discrete_norms,
    eigen_data,
    energy_Ealpha,
    is_admissible,
    lambda_star,
)
from mems_fbp.elliptic import membrane, solve_potential
from mems_fbp.errors import InsufficientDataError
from mems_fbp.evolution import EvolutionConfig, evolve_fbp
from mems_fbp.grid import Field1D, Grid1D, Grid2D, diff2, integrate1
from mems_fbp.suite import random_profile


def test_eigen_data():
    ed = eigen_data(Grid1D(201))
    assert integrate1(ed.zeta1) == pytest.approx(1.0, abs=1e-8)
    assert np.all(ed.zeta1.values >= 0)
    errs = []
    for n in (51, 101):
        z = eigen_data(Grid1D(n)).zeta1
        errs.append(np.max(np.abs(-diff2(z).values - MU1 * z.values)))
    assert 1.8 <= math.log2(errs[0] / errs[1]) <= 2.2


@given(lam=st.floats(0.01, 1e4), eps=st.floats(0.0, 2.0))
def test_blowup_params_invariants(lam, eps):
    bp = BlowupParams.choose(lam, eps)
    assert 0.0 <= bp.alpha < 1.0 and bp.p >= 1.0
    assert bp.alpha == pytest.approx(lam * (1 - bp.alpha) * eps**2 / (4 * bp.beta**2), rel=1e-14, abs=1e-300)


def test_certificate_400():
    ref = certificate_by_hand(400.0, 0.1)
    c = certificate(400.0, 0.1)
    assert c.params.beta == 10.0
    assert c.params.p == pytest.approx(ref["p"], abs=1e-15)
    assert c.params.alpha == pytest.approx(4 / 404, abs=1e-15)
    assert c.F0 == pytest.approx(ref["F0"], abs=1e-12)
    assert c.horizon == pytest.approx(ref["horizon"], abs=1e-14)
    assert c.to_dict()["certified"]


def test_no_certificate_for_weak_forcing():
    # the threshold is sufficient, not necessary: lambda = 50 already certifies
    assert certificate(50.0, 0.1).F0 < 0
    c = certificate(1.0, 0.1)
    assert c.F0 > 0 and c.horizon is None
    with pytest.raises(ValueError):
        certificate(0.0, 0.1)


@given(lam=st.floats(1.0, 1e4), eps=st.floats(0.0, 1.0))
def test_F_increasing(lam, eps):
    bp = BlowupParams.choose(lam, eps)
    E = np.linspace(-0.9, 0.0, 40)
    F = [blowup_F(e, bp) for e in E]
    assert np.all(np.diff(F) > 0)


def test_F_domain():
    with pytest.raises(ValueError):
        blowup_F(-1.0, BlowupParams.choose(1.0, 0.1))


@pytest.mark.parametrize("eps", [0.0, 0.1, 0.5])
def test_F0_bound_above_threshold(eps):
    for lam in np.linspace(lambda_star(eps) * 1.0001, 50 * lambda_star(eps), 40):
        F0 = blowup_F(0.0, BlowupParams.choose(lam, eps))
        assert F0 <= MU1 - math.sqrt(lam) / (2 * (1 + eps**2)) + 1e-12
        assert F0 < 0


def test_lambda_star():
    assert lambda_star(0.0) == pytest.approx(math.pi**4, rel=1e-14)
    assert lambda_star(0.1) == pytest.approx(99.37, abs=5e-3)
    eps = np.linspace(0, 2, 30)
    assert np.all(np.diff([lambda_star(e) for e in eps]) > 0)


def test_energy_examples():
    g = Grid1D(201)
    assert energy_Ealpha(g.field(np.zeros(201)), 0.3) == 0.0
    assert energy_Ealpha(g.field(np.full(201, -0.5)), 1.0) == pytest.approx(-3 / 8, abs=1e-8)
    with pytest.raises(ValueError):
        energy_Ealpha(g.field(np.zeros(201)), 1.5)


@given(seed=st.integers(0, 10_000), alpha=st.floats(0.0, 0.999))
def test_energy_range(seed, alpha):
    rng = np.random.default_rng(seed)
    x = np.linspace(-1, 1, 101)
    u = -rng.uniform(0, 0.999) * np.abs(random_profile(rng, x, depth=1.0)) / 1.0
    u = np.clip(u, -0.999, 0.0)
    E = energy_Ealpha(Field1D(Grid1D(101), u), alpha)
    assert (alpha - 2) / 2 - 1e-12 <= E <= 1e-15


def test_energy_inequality_touchdown_run():
    c = EvolutionConfig(lam=120.0, eps=0.1, dt0=1e-4, t_end=0.1, nx=41, neta=21)
    tr = evolve_fbp(np.zeros(41), c)
    rep = check_energy_inequality(tr, BlowupParams.choose(120.0, 0.1))
    assert rep.passed and rep.values["strictly_decreasing"]


def test_energy_inequality_needs_samples():
    class T:
        samples = []

    with pytest.raises(InsufficientDataError):
        check_energy_inequality(T(), BlowupParams.choose(1.0, 0.1))


def test_energy_inequality_heat_run():
    c = EvolutionConfig(lam=0.0, eps=0.1, dt0=1e-2, t_end=2.0, sample_every=0.1, nx=41, neta=21)
    tr = evolve_fbp(-0.3 * (1 - c.grid1.nodes**2), c)
    rep = check_energy_inequality(tr, BlowupParams.choose(1.0, 0.1))
    assert rep.passed
    assert abs(rep.values["E_last"]) < abs(rep.values["E_first"])


# --- weighted identity and Cauchy-Schwarz inequality


def _identity_closed_form(c, eps, p):
    """Both sides for u = c, psi = (1+z)/(1+c), evaluated symbolically."""
    z, x = sym.symbols("z x", real=True)
    mu1 = sym.pi**2 / 4
    zeta = sym.pi / 4 * sym.cos(sym.pi * x / 2)
    psi = (1 + z) / (1 + c)
    lhs = sym.integrate(zeta * sym.diff(psi, z).subs(z, c), (x, -1, 1))
    inner = sym.integrate(p * psi ** (p - 1) * sym.diff(psi, z) ** 2 + mu1 * eps**2 / (p + 1) * psi ** (p + 1), (z, -1, c))
    bulk = sym.integrate(zeta, (x, -1, 1)) * inner
    rhs = bulk - mu1 * eps**2 / ((p + 1) * (p + 2)) - mu1 * eps**2 / (p + 1) * c * sym.integrate(zeta, (x, -1, 1))
    return float(lhs), float(rhs)


@pytest.mark.parametrize("p_exp", [1, 2])
@pytest.mark.parametrize("eps", [0.1, 0.5])
def test_identity_flat(p_exp, eps):
    g = Grid2D(201, 101)
    m = membrane(np.zeros(201))
    rep = check_identity_n5(solve_potential(m, eps, g), m, eps, float(p_exp))
    assert rep.values["lhs"] == pytest.approx(1.0, abs=1e-8)
    assert rep.values["residual"] <= 1e-8 and rep.passed


@pytest.mark.parametrize("c", [-0.5, -0.25, 0.5])
@pytest.mark.parametrize("p_exp", [1, 2])
def test_identity_constant_profiles(c, p_exp):
    eps = 0.1
    g = Grid2D(201, 101)
    m = membrane(np.full(201, c), clamp=False)
    rep = check_identity_n5(solve_potential(m, eps, g), m, eps, float(p_exp))
    lhs, rhs = _identity_closed_form(sym.Rational(c).limit_denominator(100), sym.Rational(1, 10), p_exp)
    assert rep.values["lhs"] == pytest.approx(lhs, abs=1e-6)
    assert rep.values["rhs"] == pytest.approx(rhs, abs=1e-6)
    # unclamped profiles leave the boundary term mu1 eps^2 c / (p+2)
    assert rep.values["lhs"] - rep.values["rhs"] == pytest.approx(MU1 * eps**2 * c / (p_exp + 2), abs=1e-6)


@pytest.mark.parametrize("seed", [1, 2, 3])
@pytest.mark.parametrize("p_exp", [1.0, 2.0])
def test_identity_residual_refines(seed, p_exp):
    res = []
    for nx, ne in ((51, 26), (101, 51), (201, 101)):
        g = Grid2D(nx, ne)
        m = membrane(random_profile(np.random.default_rng(seed), g.x))
        rep = check_identity_n5(solve_potential(m, 0.2, g), m, 0.2, p_exp)
        res.append(rep.values["residual"])
        assert rep.passed
    assert res[0] / res[1] >= 1.7 and res[1] / res[2] >= 1.7


def test_inequality_equality_cases():
    g = Grid2D(201, 101)
    m = membrane(np.zeros(201))
    rep = check_inequality_n4(solve_potential(m, 0.1, g), m, 1.0)
    assert rep.values["lhs"] == pytest.approx(1.0, abs=1e-8)
    assert rep.values["margin"] == pytest.approx(0.0, abs=1e-8)
    mh = membrane(np.full(201, -0.5), clamp=False)
    rep = check_inequality_n4(solve_potential(mh, 0.1, g), mh, 1.0)
    assert rep.values["lhs"] == pytest.approx(2.0, abs=1e-6)
    assert rep.values["rhs"] == pytest.approx(2.0, abs=1e-6)


@given(seed=st.integers(0, 10_000), p_exp=st.sampled_from([1.0, 2.0, 3.0]))
def test_inequality_generic_margin(seed, p_exp):
    g = Grid2D(41, 21)
    m = membrane(random_profile(np.random.default_rng(seed), g.x))
    rep = check_inequality_n4(solve_potential(m, 0.2, g), m, p_exp)
    assert rep.values["margin"] >= -10 * max(g.hx, g.heta)
    assert rep.passed


def test_inequality_strict_for_curved_profile():
    g = Grid2D(101, 51)
    m = membrane(-0.4 * (1 - g.x**2), g.x_grid)
    assert check_inequality_n4(solve_potential(m, 0.3, g), m, 2.0).values["margin"] > 0


def test_report_json(tmp_path):
    g = Grid2D(21, 11)
    m = membrane(np.zeros(21))
    rep = check_inequality_n4(solve_potential(m, 0.1, g), m, 1.0)
    data = json.loads(rep.to_json(tmp_path).read_text())
    assert data["name"] == "trace_inequality" and "inputs_hash" in data and data["passed"]


# --- norms and admissibility


def test_norms_zero_and_parabola():
    g = Grid1D(201)
    nb = discrete_norms(g.field(np.zeros(201)))
    assert nb.sup == nb.lq == nb.lq_d1 == nb.lq_d2 == nb.surrogate == 0.0
    nb = discrete_norms(g.sample(lambda x: 1 - x**2))
    assert nb.sup == pytest.approx(1.0)
    assert nb.sup_d2 == pytest.approx(2.0, abs=1e-9)


def test_norms_q2_matches_sobolev_quadrature():
    g = Grid1D(201)
    a = 0.1
    nb = discrete_norms(g.sample(lambda x: a * np.sin(np.pi * x)), 2.0)
    exact = a * math.sqrt(1 + math.pi**2 + math.pi**4)
    assert nb.w2q == pytest.approx(exact, rel=0.05)
    with pytest.raises(ValueError):
        discrete_norms(g.field(np.zeros(201)), 1.5)


def test_is_admissible():
    g = Grid1D(101)
    assert is_admissible(g.sample(lambda x: -0.3 * (1 - x**2)), 0.1)
    assert not is_admissible(g.sample(lambda x: -0.95 * (1 - x**2)), 0.1)
    assert not is_admissible(g.sample(lambda x: 0.05 * np.sin(20 * np.pi * x)), 0.1)
    assert is_admissible(g.sample(lambda x: -0.95 * (1 - x**2)), 0.1, check_gap=False)
