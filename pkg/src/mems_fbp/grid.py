"""Uniform grids on I = (-1, 1) and Omega = I x (0, 1), finite differences, quadrature.

Everything here is second order in space except the Simpson rules, which are
fourth order on odd node counts.  Array-level helpers (``d1``, ``d2``,
``quad_weights``) are used by the solvers directly; the ``Field`` wrappers are
the public currency.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidGridError

__all__ = [
    "Grid1D",
    "Grid2D",
    "Field1D",
    "Field2D",
    "d1",
    "d2",
    "quad_weights",
    "diff1",
    "diff2",
    "integrate1",
    "integrate2",
    "write_field_csv",
    "read_field_csv",
]


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid x_i = -1 + i*h on [-1, 1] (or on [a, b] when given)."""

    n: int
    a: float = -1.0
    b: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise InvalidGridError(f"Grid1D needs n >= 3 nodes, got {self.n}")
        if not self.b > self.a:
            raise InvalidGridError("Grid1D needs b > a")

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        x = self.a + self.h * np.arange(self.n)
        x[-1] = self.b
        return x

    def field(self, values) -> "Field1D":
        return Field1D(self, np.asarray(values, dtype=float))

    def sample(self, func) -> "Field1D":
        return Field1D(self, np.asarray(func(self.nodes), dtype=float) + np.zeros(self.n))


@dataclass(frozen=True)
class Grid2D:
    """Tensor grid on [-1, 1] x [0, 1] with nx nodes in x and neta in eta."""

    nx: int
    neta: int

    def __post_init__(self):
        if self.nx < 3 or self.neta < 3:
            raise InvalidGridError(f"Grid2D needs at least 3x3 nodes, got {self.nx}x{self.neta}")

    @property
    def x_grid(self) -> Grid1D:
        return Grid1D(self.nx)

    @property
    def eta_grid(self) -> Grid1D:
        return Grid1D(self.neta, 0.0, 1.0)

    @property
    def hx(self) -> float:
        return 2.0 / (self.nx - 1)

    @property
    def heta(self) -> float:
        return 1.0 / (self.neta - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_grid.nodes

    @property
    def eta(self) -> np.ndarray:
        return self.eta_grid.nodes

    def mesh(self):
        """Return (X, ETA) arrays of shape (nx, neta)."""
        return np.meshgrid(self.x, self.eta, indexing="ij")

    def field(self, values) -> "Field2D":
        return Field2D(self, np.asarray(values, dtype=float).reshape(self.nx, self.neta))

    def sample(self, func) -> "Field2D":
        X, E = self.mesh()
        return Field2D(self, np.asarray(func(X, E), dtype=float) + np.zeros_like(X))


@dataclass(frozen=True)
class Field1D:
    grid: Grid1D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise InvalidGridError(f"Field1D length {v.shape} does not match grid n={self.grid.n}")
        if not np.all(np.isfinite(v)):
            raise ValueError("Field1D values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes

    def __add__(self, other):
        return Field1D(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return Field1D(self.grid, self.values - _vals(other))

    def __mul__(self, other):
        return Field1D(self.grid, self.values * _vals(other))

    __rmul__ = __mul__


@dataclass(frozen=True)
class Field2D:
    grid: Grid2D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.nx, self.grid.neta):
            raise InvalidGridError(
                f"Field2D shape {v.shape} does not match grid {self.grid.nx}x{self.grid.neta}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("Field2D values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __add__(self, other):
        return Field2D(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return Field2D(self.grid, self.values - _vals(other))

    def __mul__(self, other):
        return Field2D(self.grid, self.values * _vals(other))

    __rmul__ = __mul__


def _vals(obj):
    return obj.values if isinstance(obj, (Field1D, Field2D)) else obj


# --------------------------------------------------------------------------
# array-level stencils


def d1(f: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """First derivative: central inside, 3-point one-sided at both ends."""
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    if f.shape[0] < 3:
        raise InvalidGridError("d1 needs at least 3 nodes")
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
    out[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def d2(f: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Second derivative: 3-point inside, 4-point one-sided (2nd order) at ends."""
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    if f.shape[0] < 4:
        raise InvalidGridError("d2 needs at least 4 nodes")
    out = np.empty_like(f)
    h2 = h * h
    out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h2
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2
    out[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / h2
    return np.moveaxis(out, 0, axis)


def quad_weights(n: int, h: float) -> tuple[np.ndarray, bool]:
    """Composite Simpson weights for n nodes.

    For even n the last panel falls back to the trapezoid rule; the second
    return value is True in that case.
    """
    if n < 3:
        raise InvalidGridError("quadrature needs at least 3 nodes")
    w = np.zeros(n)
    m = n if n % 2 == 1 else n - 1
    w[0:m:2] += 2.0
    w[1:m:2] += 4.0
    w[0] = w[m - 1] = 1.0
    w[:m] *= h / 3.0
    fallback = m != n
    if fallback:
        w[-2] += 0.5 * h
        w[-1] += 0.5 * h
    return w, fallback


# --------------------------------------------------------------------------
# Field-level operations


def diff1(f: Field1D) -> Field1D:
    return Field1D(f.grid, d1(f.values, f.grid.h))


def diff2(f: Field1D) -> Field1D:
    if f.grid.n < 4:
        raise InvalidGridError("diff2 needs n >= 4")
    return Field1D(f.grid, d2(f.values, f.grid.h))


def integrate1(f: Field1D, with_info: bool = False):
    """Composite Simpson integral of ``f`` over its grid.

    With ``with_info=True`` returns ``(value, {"rule": ..., "fallback": bool})``.
    """
    w, fallback = quad_weights(f.grid.n, f.grid.h)
    value = float(w @ f.values)
    if with_info:
        return value, {"rule": "simpson+trapezoid" if fallback else "simpson", "fallback": fallback}
    return value


def integrate2(f: Field2D, with_info: bool = False):
    g = f.grid
    wx, fx = quad_weights(g.nx, g.hx)
    we, fe = quad_weights(g.neta, g.heta)
    value = float(wx @ f.values @ we)
    if with_info:
        return value, {"fallback_x": fx, "fallback_eta": fe}
    return value


# --------------------------------------------------------------------------
# CSV


def write_field_csv(f, path) -> Path:
    """Write a field as ``x,value`` or ``x,eta,value`` rows (17 significant digits)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        if isinstance(f, Field1D):
            w.writerow(["x", "value"])
            for xi, vi in zip(f.x, f.values):
                w.writerow([f"{xi:.17g}", f"{vi:.17g}"])
        else:
            w.writerow(["x", "eta", "value"])
            x, eta = f.grid.x, f.grid.eta
            for i in range(f.grid.nx):
                for j in range(f.grid.neta):
                    w.writerow([f"{x[i]:.17g}", f"{eta[j]:.17g}", f"{f.values[i, j]:.17g}"])
    return path


def read_field_csv(path):
    """Inverse of :func:`write_field_csv`."""
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    if header == ["x", "value"]:
        return Field1D(Grid1D(len(body)), body[:, 1])
    if header == ["x", "eta", "value"]:
        nx = len(np.unique(body[:, 0]))
        neta = len(body) // nx
        return Field2D(Grid2D(nx, neta), body[:, 2].reshape(nx, neta))
    raise ValueError(f"unrecognised field CSV header {header}")
