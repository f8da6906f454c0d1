"""Compare the compiled and pure-Python kernel backends.

Times each kernel on production-size inputs and checks that both backends
return the same numbers.  Usage:

    python3 benchmarks/bench_kernels.py [--nx 201 --neta 101 --repeat 5] [--json out.json]
"""
import argparse
import json
import time

import numpy as np
import scipy.sparse as sp

from mems_fbp import _kernels_py

try:
    from mems_fbp import _kernels
except ImportError:  # extension not built
    _kernels = None


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def _inputs(nx, neta, seed=0):
    rng = np.random.default_rng(seed)
    x = np.linspace(-1, 1, nx)[:, None]
    eta = np.linspace(0, 1, neta)[None, :]
    v = -0.3 * (1 - x**2)
    s = 0.6 * x / (1 + v)
    eps2 = 0.01
    mixed = np.ascontiguousarray(np.broadcast_to(-2 * eps2 * eta * s, (nx, neta)))
    a22 = np.ascontiguousarray(np.broadcast_to((1 + eps2 * eta**2 * (0.6 * x) ** 2) / (1 + v) ** 2, (nx, neta)))
    adv = np.ascontiguousarray(np.broadcast_to(eps2 * eta * (2 * s**2 - 0.6 / (1 + v)), (nx, neta)))
    n = nx - 2
    tri = (np.full(n, -1.0), np.full(n, 2.0 + 1e-3), np.full(n, -1.0), rng.normal(size=n))
    values = rng.normal(size=(nx, neta))
    query = np.ascontiguousarray(rng.uniform(0, 1, size=(nx, 101)))
    return dict(stencil=(eps2, mixed, a22, adv, 2 / (nx - 1), 1 / (neta - 1)), tri=tri,
                interp=(values, 1 / (neta - 1), query))


def _diff(a, b):
    if isinstance(a, tuple):  # COO triplets may come in different orders
        a, b = (sp.coo_matrix((t[2], (t[0], t[1]))).tocsr() for t in (a, b))
        return float(abs(a - b).max())
    return float(np.max(np.abs(a - b)))


def run(nx, neta, repeat):
    args = _inputs(nx, neta)
    cases = {
        "stencil_coo": lambda mod: mod.stencil_coo(*args["stencil"]),
        "thomas": lambda mod: mod.thomas(*args["tri"]),
        "interp_columns": lambda mod: mod.interp_columns(*args["interp"]),
    }
    rows = []
    for name, call in cases.items():
        t_py, out_py = _best(lambda: call(_kernels_py), repeat)
        row = {"kernel": name, "python_s": t_py}
        if _kernels is not None:
            t_c, out_c = _best(lambda: call(_kernels), repeat)
            row.update(cython_s=t_c, speedup=t_py / t_c, max_abs_diff=_diff(out_c, out_py))
        rows.append(row)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, default=201)
    ap.add_argument("--neta", type=int, default=101)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    a = ap.parse_args()
    rows = run(a.nx, a.neta, a.repeat)
    print(f"grid {a.nx} x {a.neta}, best of {a.repeat}")
    print(f"{'kernel':16s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s} {'max diff':>10s}")
    for r in rows:
        c = f"{1e3 * r['cython_s']:12.3f} {r['speedup']:8.1f} {r['max_abs_diff']:10.2e}" if "cython_s" in r else "   (not built)"
        print(f"{r['kernel']:16s} {1e3 * r['python_s']:12.3f} {c}")
    if a.json:
        with open(a.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
