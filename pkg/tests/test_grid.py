import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mems_fbp.errors import InvalidGridError
from mems_fbp.grid import (
    Field1D,
    Field2D,
    Grid1D,
    Grid2D,
    diff1,
    diff2,
    integrate1,
    integrate2,
    read_field_csv,
    write_field_csv,
)

floats = st.floats(-10, 10, allow_nan=False)


def test_grid1d_nodes():
    g = Grid1D(201)
    assert g.nodes[0] == -1.0 and g.nodes[-1] == 1.0
    assert g.h == pytest.approx(0.01)
    assert np.max(np.abs(np.diff(g.nodes) - g.h)) < 1e-14


def test_grid2d_nodes():
    g = Grid2D(21, 11)
    assert g.eta[0] == 0.0 and g.eta[-1] == 1.0
    assert g.hx == pytest.approx(0.1) and g.heta == pytest.approx(0.1)
    X, E = g.mesh()
    assert X.shape == (21, 11)


@pytest.mark.parametrize("n", [0, 1, 2])
def test_grid_too_small(n):
    with pytest.raises(InvalidGridError):
        Grid1D(n)


def test_field_rejects_bad_values():
    g = Grid1D(5)
    with pytest.raises(ValueError):
        Field1D(g, np.ones(4))
    with pytest.raises(ValueError):
        Field1D(g, [0, 1, np.nan, 1, 0])
    with pytest.raises(ValueError):
        Field2D(Grid2D(5, 5), np.ones((5, 4)))


def test_field_is_read_only():
    f = Grid1D(5).field(np.zeros(5))
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_diff1_constant_and_quadratic():
    g = Grid1D(101)
    assert np.max(np.abs(diff1(g.field(np.full(101, 3.0))).values)) == 0.0
    assert np.max(np.abs(diff1(g.sample(lambda x: x**2)).values - 2 * g.nodes)) <= 1e-10


def test_diff1_needs_three_nodes():
    # Grid1D itself refuses n < 3; diff2 needs n >= 4
    with pytest.raises(InvalidGridError):
        diff2(Grid1D(3).field(np.zeros(3)))


def test_diff2_affine_and_quadratic():
    g = Grid1D(101)
    assert np.max(np.abs(diff2(g.sample(lambda x: 2 - 3 * x)).values)) <= 1e-9
    assert np.max(np.abs(diff2(g.sample(lambda x: x**2)).values - 2.0)) <= 1e-10


def _order(op, f, exact, ns=(51, 101)):
    errs = []
    for n in ns:
        g = Grid1D(n)
        errs.append(np.max(np.abs(op(g.sample(f)).values - exact(g.nodes))))
    return math.log2(errs[0] / errs[1])


def test_diff1_order():
    o = _order(diff1, lambda x: np.sin(np.pi * x), lambda x: np.pi * np.cos(np.pi * x))
    assert 1.9 <= o <= 2.1


def test_diff2_order():
    o = _order(diff2, lambda x: np.cos(np.pi * x / 2), lambda x: -(np.pi / 2) ** 2 * np.cos(np.pi * x / 2))
    assert 1.9 <= o <= 2.1


def test_integrate1_examples():
    g = Grid1D(201)
    assert integrate1(g.field(np.ones(201))) == pytest.approx(2.0, abs=1e-14)
    assert integrate1(g.sample(lambda x: x**2)) == pytest.approx(2 / 3, abs=1e-12)
    assert integrate1(g.sample(lambda x: np.pi / 4 * np.cos(np.pi * x / 2))) == pytest.approx(1.0, abs=1e-8)


def test_integrate1_even_n_flags_fallback():
    g = Grid1D(100)
    val, info = integrate1(g.field(np.ones(100)), with_info=True)
    assert info["fallback"] and val == pytest.approx(2.0)
    assert not integrate1(Grid1D(101).field(np.ones(101)), with_info=True)[1]["fallback"]


def test_integrate1_order():
    f = lambda x: np.exp(x) * np.cos(3 * x)
    exact = (np.exp(1) * (np.cos(3) + 3 * np.sin(3)) - np.exp(-1) * (np.cos(3) - 3 * np.sin(3))) / 10
    e = [abs(integrate1(Grid1D(n).sample(f)) - exact) for n in (41, 81)]
    assert math.log2(e[0] / e[1]) >= 3.9


def test_integrate2_examples():
    g = Grid2D(101, 101)
    X, E = g.mesh()
    assert integrate2(g.field(np.ones_like(X))) == pytest.approx(2.0, abs=1e-13)
    assert integrate2(g.field(E)) == pytest.approx(1.0, abs=1e-13)
    # int sin(pi x)^2 dx over (-1,1) = 1, int eta^2 = 1/3
    assert integrate2(g.field(np.sin(np.pi * X) ** 2 * E**2)) == pytest.approx(1 / 3, abs=1e-6)


@given(a=floats, b=floats)
def test_linearity(a, b):
    g = Grid1D(41)
    f, h = np.sin(g.nodes), g.nodes**3
    for op in (diff1, diff2):
        lhs = op(g.field(a * f + b * h)).values
        rhs = a * op(g.field(f)).values + b * op(g.field(h)).values
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-9)
    assert integrate1(g.field(a * f + b * h)) == pytest.approx(a * integrate1(g.field(f)) + b * integrate1(g.field(h)), abs=1e-11)
    G = Grid2D(11, 9)
    X, E = G.mesh()
    assert integrate2(G.field(a * X + b * E**2)) == pytest.approx(a * integrate2(G.field(X)) + b * integrate2(G.field(E**2)), abs=1e-11)


@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=7, max_size=7), st.integers(3, 30))
def test_quadrature_positivity(vals, n):
    g = Grid1D(n)
    f = np.interp(np.linspace(0, 1, n), np.linspace(0, 1, 7), vals)
    assert integrate1(g.field(f)) >= 0.0


def test_csv_roundtrip(tmp_path):
    g = Grid1D(11)
    f = g.sample(lambda x: np.exp(x) / 3)
    write_field_csv(f, tmp_path / "f.csv")
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "x,value"
    back = read_field_csv(tmp_path / "f.csv")
    assert np.array_equal(back.values, f.values)
    G = Grid2D(5, 4)
    F = G.field(np.arange(20.0).reshape(5, 4) / 7)
    write_field_csv(F, tmp_path / "F.csv")
    assert (tmp_path / "F.csv").read_text().splitlines()[0] == "x,eta,value"
    assert np.array_equal(read_field_csv(tmp_path / "F.csv").values, F.values)
