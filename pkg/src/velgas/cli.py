"""Command-line interface.

Subcommands: simulate, pde, compare, scan-theta, check, benchmark.
Exit code 0 only when every requested check or pass rule holds.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, lattice, pde
from ._kernel import BACKEND, available_backends
from .dynamics import SimParams, build_tables, make_kernel, simulate
from .harness import (Experiment, check_suite, make_model, regime_for_theta,
                      regime_scan, run_convergence)
from .lattice import LatticeGeom
from .models import load_velocity_file
from .profiles import InitialProfile
from .rng import derive_stream
from .thermo import ReservoirProfile


def _parse_reservoir(spec: str, model):
    """'0.5' or 'v=1:0.8,v=-1:0.6' or a JSON file path."""
    if os.path.exists(spec):
        return ReservoirProfile.from_json(model, spec)
    if ":" not in spec:
        return ReservoirProfile.constant(model, float(spec))
    values = {}
    for part in spec.split(","):
        key, val = part.split(":")
        vec = [float(c) for c in key.replace("v=", "").split()]
        values[model.index_of(vec)] = float(val)
    return ReservoirProfile.constant(model, values)


def _reservoir_values(prof: ReservoirProfile):
    return {i: prof.value(i, ()) for i in range(prof.model.n_velocities)}


def _parse_initial(spec: str, dim: int) -> InitialProfile:
    if os.path.exists(spec):
        return InitialProfile.from_json(spec)
    vals = [float(x) for x in spec.split(",")]
    if len(vals) == dim + 1:
        return InitialProfile.constant(vals)
    if len(vals) == 2 * (dim + 1):
        return InitialProfile.linear(vals[:dim + 1], vals[dim + 1:])
    raise ValueError("initial profile: give d+1 constants, 2(d+1) values "
                     "for a linear ramp, or a JSON file")


def _model_from_args(args):
    if os.path.exists(args.model):
        return load_velocity_file(args.model)
    return make_model(args.model, args.dim)


def cmd_simulate(args) -> int:
    model = _model_from_args(args)
    geom = LatticeGeom(args.dim, args.N)
    alpha = _parse_reservoir(args.alpha, model)
    beta = _parse_reservoir(args.beta, model)
    initial = _parse_initial(args.init, args.dim)
    snapshots = tuple(float(s) for s in args.snapshots.split(","))
    params = SimParams(theta=args.theta, T=args.T, alpha=alpha, beta=beta,
                       seed=args.seed, snapshots=snapshots)
    os.makedirs(args.out, exist_ok=True)
    tables = build_tables(geom, model, params)
    sums = {t: np.zeros((geom.n_sites, model.dim + 1)) for t in snapshots}
    for r in range(args.replicas):
        cfg = lattice.sample_local_equilibrium(
            geom, model, initial, args.seed, stream=derive_stream(args.N, r, 0))
        snaps, kern = simulate(geom, model, params, cfg,
                               stream=derive_stream(args.N, r, 1),
                               tables=tables)
        for t, prof in snaps:
            if t in sums:
                sums[t] += prof
        if args.store_replicas:
            for t, prof in snaps:
                lattice.profile_to_csv(
                    prof, geom,
                    os.path.join(args.out, f"replica{r}_t{t:g}.csv"))
    for t, total in sums.items():
        lattice.profile_to_csv(total / args.replicas, geom,
                               os.path.join(args.out, f"mean_t{t:g}.csv"))
    manifest = {
        "command": "simulate", "version": __version__, "backend": BACKEND,
        "model": args.model, "dim": args.dim, "N": args.N,
        "theta": args.theta, "T": args.T, "snapshots": list(snapshots),
        "replicas": args.replicas, "seed": args.seed,
        "alpha": _reservoir_values(alpha), "beta": _reservoir_values(beta),
        "init": initial.spec,
    }
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    print(f"wrote {len(sums)} mean profiles to {args.out}")
    return 0


def cmd_pde(args) -> int:
    model = make_model("model1", 1)
    alpha = _parse_reservoir(args.alpha, model)
    beta = _parse_reservoir(args.beta, model)
    initial = _parse_initial(args.init, 1)
    snapshots = tuple(float(s) for s in args.snapshots.split(","))
    dt = "auto" if args.dt == "auto" else float(args.dt)
    f = pde.make_field(args.M, initial, args.bc, alpha.data(()), beta.data(()))
    traj = pde.solve(f, args.T, dt, snapshots=snapshots)
    os.makedirs(args.out, exist_ok=True)
    for t in snapshots:
        vals = traj.at(t)
        with open(os.path.join(args.out, f"pde_t{t:g}.csv"), "w") as fh:
            fh.write("u,rho,momentum\n")
            for u, row in zip(traj.grid, vals):
                fh.write(f"{u!r},{row[0]!r},{row[1]!r}\n")
    manifest = {
        "command": "pde", "version": __version__, "bc": args.bc, "M": args.M,
        "T": args.T, "dt": args.dt, "snapshots": list(snapshots),
        "alpha": _reservoir_values(alpha), "beta": _reservoir_values(beta),
        "init": initial.spec,
    }
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    print(f"wrote {len(snapshots)} PDE snapshots to {args.out}")
    return 0


def cmd_compare(args) -> int:
    model = make_model(args.model, args.dim)
    alpha = _parse_reservoir(args.alpha, model)
    beta = _parse_reservoir(args.beta, model)
    exp = Experiment(
        theta=args.theta,
        N_list=tuple(int(n) for n in args.N.split(",")),
        replicas=args.replicas,
        initial=_parse_initial(args.init, args.dim),
        alpha=_reservoir_values(alpha), beta=_reservoir_values(beta),
        times=tuple(float(t) for t in args.times.split(",")),
        eps=args.eps, pde_M=args.pde_M, seed=args.seed, workers=args.workers,
        store_replicas=args.store_replicas)
    report = run_convergence(exp, out_dir=args.out)
    ok = True
    t_last = exp.times[-1]
    for k, label in enumerate(("density", "momentum")):
        series = report.l1_series(t_last, k)
        decreasing = all(a > b for a, b in zip(series, series[1:]))
        ok &= decreasing
        print(f"{label}: L1 over N {list(exp.N_list)} = "
              f"{[round(x, 5) for x in series]} "
              f"{'decreasing' if decreasing else 'NOT decreasing'}")
    return 0 if ok else 1


def cmd_scan_theta(args) -> int:
    exp = Experiment(
        theta=0.0, N_list=(args.N,), replicas=args.replicas,
        initial=_parse_initial(args.init, 1),
        alpha=_reservoir_values(_parse_reservoir(args.alpha, make_model("model1", 1))),
        beta=_reservoir_values(_parse_reservoir(args.beta, make_model("model1", 1))),
        seed=args.seed)
    thetas = [float(t) for t in args.thetas.split(",")]
    result = regime_scan(thetas, args.N, exp, T=args.T, out_dir=args.out)
    for row in result["rows"]:
        print(f"theta={row['theta']:<4} [{row['regime']:<9}] "
              f"occ(site1)={row['boundary_occupation']:.3f}"
              f"+-{row['boundary_occupation_stderr']:.3f} "
              f"(reservoir {row['reservoir_mass']:.3f})  "
              f"net_left={row['net_left_current']:.2f}"
              f"+-{row['net_left_current_stderr']:.2f}  "
              f"bnd_events={row['boundary_events']}")
    return 0


def cmd_check(args) -> int:
    rows = check_suite(seed=args.seed, corrupt_rate=args.corrupt_rate,
                       quick=not args.full)
    width = max(len(r["name"]) for r in rows)
    ok = True
    for r in rows:
        status = "PASS" if r["passed"] else "FAIL"
        ok &= r["passed"]
        print(f"{r['name']:<{width}}  {status}  stat={r['statistic']:.3e} "
              f"thr={r['threshold']:.0e}  {r['seconds']}s")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "checks.json"), "w") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
    return 0 if ok else 1


def cmd_benchmark(args) -> int:
    from .benchmark import run_benchmark
    rows = run_benchmark(N=args.N, T=args.T, theta=args.theta, seed=args.seed)
    for r in rows:
        print(f"{r['backend']:<9} {r['events']:>9} events  "
              f"{r['seconds']:8.3f}s  {r['events_per_s'] / 1e6:7.3f} M ev/s")
    if len(rows) == 2:
        print(f"speedup (compiled / python): {rows[0]['events_per_s'] / rows[1]['events_per_s']:.1f}x")
        if not rows[0]["matches_reference"]:
            print("ERROR: backends disagree on the trajectory")
            return 1
    else:
        print(f"only backend(s) {[r['backend'] for r in rows]} available")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="velgas",
        description="Boundary-driven multi-velocity lattice gas toolkit "
                    f"(kernel backend: {BACKEND})")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="kinetic Monte Carlo trajectories")
    sim.add_argument("--model", default="model1")
    sim.add_argument("--dim", type=int, default=1)
    sim.add_argument("--N", type=int, required=True)
    sim.add_argument("--theta", type=float, required=True)
    sim.add_argument("--T", type=float, required=True)
    sim.add_argument("--snapshots", required=True,
                     help="comma-separated macroscopic times")
    sim.add_argument("--replicas", type=int, default=1)
    sim.add_argument("--seed", type=int, default=7)
    sim.add_argument("--alpha", required=True,
                     help="constant, 'v=..:val,..' pairs, or JSON file")
    sim.add_argument("--beta", required=True)
    sim.add_argument("--init", required=True,
                     help="constants, linear ramp endpoints, or JSON file")
    sim.add_argument("--out", required=True)
    sim.add_argument("--store-replicas", action="store_true")
    sim.set_defaults(fn=cmd_simulate)

    pd = sub.add_parser("pde", help="hydrodynamic PDE solver (d=1)")
    pd.add_argument("--bc", choices=pde.REGIMES, required=True)
    pd.add_argument("--M", type=int, default=256)
    pd.add_argument("--T", type=float, required=True)
    pd.add_argument("--dt", default="auto")
    pd.add_argument("--snapshots", required=True)
    pd.add_argument("--alpha", required=True)
    pd.add_argument("--beta", required=True)
    pd.add_argument("--init", required=True)
    pd.add_argument("--out", required=True)
    pd.set_defaults(fn=cmd_pde)

    cmp_ = sub.add_parser("compare", help="hydrodynamic-limit convergence run")
    cmp_.add_argument("--model", default="model1")
    cmp_.add_argument("--dim", type=int, default=1)
    cmp_.add_argument("--theta", type=float, required=True)
    cmp_.add_argument("--N", required=True, help="comma-separated N values")
    cmp_.add_argument("--replicas", type=int, default=50)
    cmp_.add_argument("--times", default="0.1")
    cmp_.add_argument("--eps", type=float, default=None,
                      help="smoothing width (default 5/N)")
    cmp_.add_argument("--pde-M", type=int, default=256)
    cmp_.add_argument("--seed", type=int, default=7)
    cmp_.add_argument("--workers", type=int, default=1)
    cmp_.add_argument("--alpha", required=True)
    cmp_.add_argument("--beta", required=True)
    cmp_.add_argument("--init", required=True)
    cmp_.add_argument("--out", required=True)
    cmp_.add_argument("--store-replicas", action="store_true")
    cmp_.set_defaults(fn=cmd_compare)

    scan = sub.add_parser("scan-theta", help="boundary regime diagnostics")
    scan.add_argument("--thetas", default="0,0.5,1,2,3")
    scan.add_argument("--N", type=int, default=128)
    scan.add_argument("--T", type=float, default=0.4)
    scan.add_argument("--replicas", type=int, default=16)
    scan.add_argument("--seed", type=int, default=7)
    scan.add_argument("--alpha", required=True)
    scan.add_argument("--beta", required=True)
    scan.add_argument("--init", required=True)
    scan.add_argument("--out", default=None)
    scan.set_defaults(fn=cmd_scan_theta)

    chk = sub.add_parser("check", help="exact generator and property checks")
    chk.add_argument("--seed", type=int, default=0)
    chk.add_argument("--full", action="store_true")
    chk.add_argument("--corrupt-rate", action="store_true",
                     help="negative control: corrupt one rate")
    chk.add_argument("--out", default=None)
    chk.set_defaults(fn=cmd_check)

    bench = sub.add_parser("benchmark", help="compare kernel backends")
    bench.add_argument("--N", type=int, default=128)
    bench.add_argument("--T", type=float, default=0.02)
    bench.add_argument("--theta", type=float, default=0.5)
    bench.add_argument("--seed", type=int, default=1)
    bench.set_defaults(fn=cmd_benchmark)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
