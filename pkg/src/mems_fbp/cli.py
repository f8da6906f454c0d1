"""Command-line driver: ``mems-fbp <command> [options]``.

Commands: evolve, steady, branch, stability, limit, blowup, check.  Options
may also come from a plain ``key=value`` file given with ``--config``;
explicit flags win.  Every command writes its files plus ``manifest.json``
(written last) into ``--out``.

Exit codes: 0 success, 1 failed assertion, 2 configuration error,
3 solver failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .diagnostics import MU1, certificate, check_energy_inequality
from .errors import DegenerateDomainError, SolverFailure
from .evolution import SCHEMES, EvolutionConfig, _slope, compare_limit, evolve_fbp, evolve_small_aspect
from .grid import Grid1D, write_field_csv
from .steady import continuation, decay_rate, steady_fixed_point, steady_newton

log = logging.getLogger("mems_fbp")

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


class ConfigError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    version: str
    backend: str
    wall_clock_s: float = 0.0
    exit_code: int = 0
    files: list = field(default_factory=list)

    def write(self, out: Path) -> Path:
        self.files = []
        for f in sorted(out.rglob("*")):
            if f.is_file() and f.name != "manifest.json":
                self.files.append({"path": str(f.relative_to(out)), "sha256": hashlib.sha256(f.read_bytes()).hexdigest()})
        path = out / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, default=str))
        return path


# --------------------------------------------------------------------------
# helpers


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _initial_profile(kind: str, amp: float | None, grid: Grid1D) -> np.ndarray:
    x = grid.nodes
    if kind == "zero":
        return np.zeros(grid.n)
    if kind == "cos":
        return (1.0 if amp is None else amp) * np.cos(0.5 * math.pi * x)
    if kind == "parabola":
        return (-0.3 if amp is None else amp) * (1.0 - x**2)
    raise ConfigError(f"unknown --u0 {kind!r}")


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, default=_jsonable))
    return path


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _evo_config(a, **over) -> EvolutionConfig:
    kw = dict(
        lam=a.lam, eps=a.eps, dt0=a.dt, t_end=a.t_end, touchdown_tol=a.touchdown_tol, kappa=a.kappa,
        scheme=a.scheme, sample_every=a.sample_every, nx=a.nx, neta=a.neta,
        admissibility_exit=a.admissibility_exit,
    )
    kw.update(over)
    try:
        return EvolutionConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------
# commands; each returns an exit code


def cmd_evolve(a, out: Path) -> int:
    c = _evo_config(a)
    u0 = _initial_profile(a.u0, a.u0_amp, c.grid1)
    run = evolve_small_aspect if c.eps == 0 else evolve_fbp
    tr = run(u0, c)
    tr.save(out)
    o = tr.outcome
    print(f"outcome: {o.kind} at t = {o.t:.6g}")
    summary = {"outcome": o.kind, "t": o.t}
    if c.lam > 0:
        cert = certificate(c.lam, c.eps)
        summary["certificate"] = cert.to_dict()
        if cert.horizon is not None:
            within = o.kind == "touchdown" and o.t <= cert.horizon + 2 * c.dt0
            summary["touchdown_within_horizon"] = within
            print(f"certified horizon -1/F(0) = {cert.horizon:.6g}; touchdown within horizon: {within}")
            if len(tr.samples) >= 3:
                rep = check_energy_inequality(tr, cert.params)
                rep.to_json(out)
    else:
        t = tr.times
        amp = np.array([np.max(np.abs(s.u.values)) for s in tr.samples])
        sel = (t >= 0.5 * c.t_end) & (amp > 0)
        if sel.sum() >= 3:
            rate = -float(np.polyfit(t[sel], np.log(amp[sel]), 1)[0])
            _write_json(out / "decay.json", {"rate": rate, "mu1": MU1, "rel_error": abs(rate - MU1) / MU1,
                                             "fit_window": [0.5 * c.t_end, c.t_end]})
            print(f"decay rate {rate:.6g} (mu1 = {MU1:.6g})")
    _write_json(out / "summary.json", summary)
    return EXIT_SOLVER if o.kind == "solver-failure" else EXIT_OK


def cmd_steady(a, out: Path) -> int:
    solver = steady_newton if a.method == "newton" else steady_fixed_point
    kw = {"max_iter": a.max_iter} if a.max_iter and a.method != "newton" else {}
    st = solver(a.lam, a.eps, None, tol=a.tol, nx=a.nx, neta=a.neta, **kw)
    write_field_csv(st.U, out / "U.csv")
    if st.trace is not None:
        write_field_csv(st.trace, out / "trace.csv")
    U = st.U.values
    _write_json(out / "steady.json", {
        "lambda": st.lam, "eps": st.eps, "converged": st.converged, "method": st.method,
        "iterations": st.iterations, "residual": st.residual, "min_U": float(U.min()), "message": st.message,
    })
    print(f"{st.method}: converged={st.converged} iterations={st.iterations} residual={st.residual:.3g} min U={U.min():.8g}")
    return EXIT_OK if st.converged else EXIT_SOLVER


def _branch_job(args):
    lam_max, steps, eps, nx, neta, newton = args
    return continuation(lam_max, steps, eps, nx=nx, neta=neta, use_newton=newton)


def cmd_branch(a, out: Path) -> int:
    eps_list = a.eps
    jobs = [(a.lambda_max, a.steps, e, a.nx, a.neta, a.method == "newton") for e in eps_list]
    results = _map(_branch_job, jobs, a.jobs)
    summary = {}
    for e, res in zip(eps_list, results):
        name = "branch.csv" if len(eps_list) == 1 else f"branch_eps{e:g}.csv"
        res.save(out / name)
        summary[f"{e:g}"] = res.last_converged_lam
        print(f"eps = {e:g}: last converged lambda = {res.last_converged_lam:.6g}")
    _write_json(out / "branch.json", {"last_converged_lambda": summary})
    return EXIT_OK


def cmd_stability(a, out: Path) -> int:
    c = _evo_config(a, t_end=a.t_end, sample_every=a.sample_every or a.t_end / 80)
    rep = decay_rate(a.lam, a.eps, r=a.r, t_end=a.t_end, config=c)
    rep.save(out / "stability.json")
    print(f"omega = {rep.omega:.6g}, R^2 = {rep.r_squared:.6g}, potential rate = {rep.omega_phi:.6g} {rep.message}")
    return EXIT_OK if rep.ok else EXIT_ASSERT


def _limit_job(args):
    u0, lam, eps, tau, c = args
    return compare_limit(u0, lam, [eps], tau, c)


def cmd_limit(a, out: Path) -> int:
    eps_list = a.eps
    c = _evo_config(a, eps=eps_list[0], t_end=a.tau)
    u0 = _initial_profile(a.u0, a.u0_amp, c.grid1)
    parts = _map(_limit_job, [(u0, a.lam, e, a.tau, c) for e in eps_list], a.jobs)
    e_u = [p.e_u[0] for p in parts]
    e_psi = [p.e_psi[0] for p in parts]
    outcomes = [p.outcomes[0] for p in parts]
    lines = ["eps,e_u,e_psi,outcome"]
    for e, eu, ep, oc in zip(eps_list, e_u, e_psi, outcomes):
        lines.append(f"{e:.17g},{eu:.17g},{ep:.17g},{oc}")
    (out / "limit.csv").write_text("\n".join(lines) + "\n")
    order = np.argsort(eps_list)[::-1]
    mono = lambda e: bool(all(np.isfinite(e)) and all(e[order[i]] > e[order[i + 1]] for i in range(len(e) - 1)))
    summary = {
        "lambda": a.lam, "tau": a.tau, "eps": eps_list, "e_u": e_u, "e_psi": e_psi, "outcomes": outcomes,
        "slope_u": _slope(eps_list, e_u), "slope_psi": _slope(eps_list, e_psi),
        "e_u_monotone": mono(e_u), "e_psi_monotone": mono(e_psi),
    }
    _write_json(out / "limit.json", summary)
    print(f"{'eps':>8} {'e_u':>12} {'e_psi':>12}  outcome")
    for e, eu, ep, oc in zip(eps_list, e_u, e_psi, outcomes):
        print(f"{e:8.4g} {eu:12.5g} {ep:12.5g}  {oc}")
    print(f"slope_u = {summary['slope_u']:.3g}, slope_psi = {summary['slope_psi']:.3g}, monotone e_u: {summary['e_u_monotone']}")
    return EXIT_OK if summary["e_u_monotone"] else EXIT_ASSERT


def cmd_blowup(a, out: Path) -> int:
    try:
        cert = certificate(a.lam, a.eps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    bp = cert.params
    _write_json(out / "certificate.json", cert.to_dict())
    print(f"beta = {bp.beta:.6g}")
    print(f"p = {bp.p:.7g}")
    print(f"alpha = {bp.alpha:.9g}")
    print(f"F(0) = {cert.F0:.6g}")
    print(f"lambda_star = {cert.lambda_star:.6g}")
    print("horizon = " + (f"{cert.horizon:.6g}" if cert.horizon is not None else "none (F(0) >= 0, no certificate)"))
    return EXIT_OK


def cmd_check(a, out: Path) -> int:
    from .suite import run_suite

    only = set(a.only.split(",")) if a.only else None
    failed = 0
    print(f"{'check':24s} {'result':6s} {'time':>8s}")
    for rep, secs in run_suite(fast=a.fast, only=only):
        rep.to_json(out)
        failed += not rep.passed
        print(f"{rep.name:24s} {'PASS' if rep.passed else 'FAIL':6s} {secs:7.2f}s")
    print(f"{failed} failed")
    return EXIT_ASSERT if failed else EXIT_OK


COMMANDS = {
    "evolve": cmd_evolve,
    "steady": cmd_steady,
    "branch": cmd_branch,
    "stability": cmd_stability,
    "limit": cmd_limit,
    "blowup": cmd_blowup,
    "check": cmd_check,
}


def _map(fn, jobs, n_jobs):
    if n_jobs and n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


# --------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, lam=None, eps=0.1, eps_list=False):
    p.add_argument("--lambda", dest="lam", type=float, default=lam)
    if eps_list:
        p.add_argument("--eps", type=_float_list, default=eps, help="comma-separated list")
    else:
        p.add_argument("--eps", type=float, default=eps)
    p.add_argument("--nx", type=int, default=201)
    p.add_argument("--neta", type=int, default=101)


def _evo_opts(p, dt=1e-3, t_end=1.0):
    p.add_argument("--dt", type=float, default=dt, help="initial (and maximal) time step")
    p.add_argument("--t-end", type=float, default=t_end)
    p.add_argument("--touchdown-tol", type=float, default=1e-3)
    p.add_argument("--kappa", type=float, default=0.01)
    p.add_argument("--scheme", choices=SCHEMES, default=SCHEMES[0])
    p.add_argument("--sample-every", type=float, default=0.0, help="output cadence in time (0: every step)")
    p.add_argument("--admissibility-exit", action="store_true", help="stop when the norm surrogate exceeds 1/kappa")
    p.add_argument("--u0", choices=("zero", "cos", "parabola"), default="zero")
    p.add_argument("--u0-amp", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="mems-fbp", description="Free-boundary MEMS solver suite.")
    top.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = top.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, default=None, help="key=value file; flags override it")
        p.add_argument("--out", type=Path, default=None, help="output directory (default runs/<command>)")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("-v", "--verbose", action="count", default=0)
        return p

    p = add("evolve", "time-integrate the free-boundary (eps > 0) or small-aspect (eps = 0) model")
    _common(p, lam=0.5)
    _evo_opts(p)

    p = add("steady", "steady state at one lambda")
    _common(p, lam=0.5)
    p.add_argument("--method", choices=("fixed-point", "newton"), default="fixed-point")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=1000)

    p = add("branch", "continuation of the minimal steady branch in lambda")
    _common(p, eps="0.1", eps_list=True)
    p.add_argument("--lambda-max", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--method", choices=("fixed-point", "newton"), default="newton",
                   help="newton: fixed point first, newton when it stalls")

    p = add("stability", "decay rate of a perturbed steady state")
    _common(p, lam=0.5)
    _evo_opts(p, dt=0.01, t_end=4.0)
    p.add_argument("--r", type=float, default=0.05, help="perturbation amplitude")

    p = add("limit", "small-aspect-ratio limit: error table over eps")
    _common(p, lam=1.0, eps="0.2,0.1,0.05,0.025", eps_list=True)
    _evo_opts(p, dt=1e-3)
    p.set_defaults(u0="parabola")
    p.add_argument("--tau", type=float, default=0.5)

    p = add("blowup", "blow-up certificate arithmetic")
    _common(p, lam=400.0)

    p = add("check", "run the invariant suite")
    p.add_argument("--fast", action="store_true", help="coarse grids")
    p.add_argument("--only", default=None, help="comma-separated subset of checks")
    return top


def _read_config(path: Path) -> dict:
    vals = {}
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for k, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{k}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        vals[key.replace("-", "_")] = val
    return vals


def parse(argv=None):
    """Parse flags, merging an optional --config file underneath them."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return parser, args
    file_vals = _read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest: a for a in sub._actions}
    alias = {"lambda": "lam", "lambda_max": "lambda_max"}
    defaults = {}
    for key, val in file_vals.items():
        dest = alias.get(key, key)
        if dest not in dests or dest in ("config", "help"):
            raise ConfigError(f"unknown config key {key!r} for {args.command}")
        act = dests[dest]
        if isinstance(act, (argparse._StoreTrueAction,)):
            defaults[dest] = val.lower() in ("1", "true", "yes", "on")
        else:
            defaults[dest] = val  # string defaults go through the action's type
    sub.set_defaults(**defaults)
    return parser, parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        parser, args = parse(argv)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    np.random.seed(args.seed)
    out = args.out or Path("runs") / args.command
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"configuration error: cannot create {out}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    manifest = RunManifest(command=args.command, config=cfg, version=__version__, backend=kernels.BACKEND)
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](args, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    except (SolverFailure, DegenerateDomainError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        code = EXIT_SOLVER
    manifest.wall_clock_s = time.perf_counter() - t0
    manifest.exit_code = code
    manifest.config["platform"] = platform.platform()
    manifest.write(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
