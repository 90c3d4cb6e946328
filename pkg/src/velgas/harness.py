"""Experiment orchestration: convergence runs, regime scans, check suite.

The central experiment replicates the law-of-large-numbers statement at
desk scale: sample M independent initial configurations from the local
equilibrium of a profile, run the kinetic Monte Carlo dynamics to the
comparison times for several N, average and smooth the empirical
density/momentum profiles, and compare against the hydrodynamic PDE
solved under the boundary regime that the parameter theta selects:

    theta in [0, 1)  ->  Dirichlet,
    theta = 1        ->  Robin,
    theta > 1        ->  Neumann.

Every random draw comes from a stream derived from (seed, N, replica,
role), and replica reductions run in fixed index order, so a manifest
reproduces every output byte for byte regardless of worker count.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, exact, lattice, pde, thermo
from ._kernel import BACKEND, available_backends
from .clocks import COUNTER_NAMES
from .dynamics import SimParams, build_tables, dynkin_martingale_check, make_kernel
from .jumps import default_jump_law
from .lattice import LatticeGeom
from .models import (VelocityModel, build_model_one, build_model_two,
                     collision_rate, apply_collision, site_observable)
from .profiles import InitialProfile
from .rng import derive_stream
from .thermo import ReservoirProfile


class RegimeMismatch(ValueError):
    pass


def regime_for_theta(theta: float) -> str:
    if theta < 0:
        raise ValueError("theta must be >= 0")
    if theta < 1.0:
        return pde.DIRICHLET
    if theta == 1.0:
        return pde.ROBIN
    return pde.NEUMANN


def make_model(name: str, dim: int) -> VelocityModel:
    if name == "model1":
        return build_model_one(dim)
    if name == "model2":
        return build_model_two()
    raise ValueError(f"unknown model {name!r} (use model1, model2, or a file)")


@dataclass
class Experiment:
    """Convergence-experiment description (d = 1)."""

    theta: float
    N_list: tuple[int, ...]
    replicas: int
    initial: InitialProfile
    alpha: dict | float
    beta: dict | float
    times: tuple[float, ...] = (0.1,)
    model_name: str = "model1"
    dim: int = 1
    regime: str | None = None
    eps: float | None = None        # smoothing width; None -> 5/N per N
    pde_M: int = 256
    seed: int = 7
    workers: int = 1
    store_replicas: bool = False
    # compare against the PDE smoothed with the same box kernel (pairs the
    # two sides like the theorem's <pi, G> vs int G rho with G = j_eps);
    # errors are then integrated on the lattice grid
    smooth_reference: bool = False

    def __post_init__(self):
        expected = regime_for_theta(self.theta)
        if self.regime is None:
            self.regime = expected
        elif self.regime != expected:
            raise RegimeMismatch(
                f"theta={self.theta} lies in the {expected} regime, "
                f"not {self.regime}")
        if self.dim != 1:
            raise ValueError("convergence experiments are d = 1")
        self.N_list = tuple(int(n) for n in self.N_list)
        self.times = tuple(sorted(float(t) for t in self.times))

    def manifest(self) -> dict:
        return {
            "version": __version__,
            "kernel_backend": BACKEND,
            "theta": self.theta,
            "regime": self.regime,
            "N_list": list(self.N_list),
            "replicas": self.replicas,
            "times": list(self.times),
            "model": self.model_name,
            "dim": self.dim,
            "eps": self.eps,
            "smooth_reference": self.smooth_reference,
            "pde_M": self.pde_M,
            "seed": self.seed,
            "initial": self.initial.spec,
            "alpha": _profile_values(self.alpha),
            "beta": _profile_values(self.beta),
        }


def _profile_values(values):
    if isinstance(values, dict):
        return {str(k): v for k, v in values.items()}
    return values


def _reservoirs(exp: Experiment, model: VelocityModel):
    alpha = ReservoirProfile.constant(model, exp.alpha)
    beta = ReservoirProfile.constant(model, exp.beta)
    return alpha, beta


def _g_basket(grid: np.ndarray) -> dict[str, np.ndarray]:
    """Continuous test functions for the theorem-form diagnostics."""
    return {
        "1": np.ones_like(grid),
        "sin(pi u)": np.sin(np.pi * grid),
        "cos(pi u)": np.cos(np.pi * grid),
        "u^2": grid ** 2,
        "exp(-u)": np.exp(-grid),
    }


# -- replica task (top level so process pools can pickle it) ---------------

def _replica_task(args):
    (model_name, dim, N, theta, alpha_vals, beta_vals, initial_spec,
     seed, replica, times) = args
    model = make_model(model_name, dim)
    geom = LatticeGeom(dim, N)
    initial = InitialProfile.from_dict(initial_spec)
    alpha = ReservoirProfile.constant(model, alpha_vals)
    beta = ReservoirProfile.constant(model, beta_vals)
    params = SimParams(theta=theta, T=times[-1], alpha=alpha, beta=beta,
                       seed=seed, snapshots=times)
    cfg = lattice.sample_local_equilibrium(
        geom, model, initial, seed, stream=derive_stream(N, replica, 0))
    tables = build_tables(geom, model, params)
    kern = make_kernel(tables, cfg, seed, stream=derive_stream(N, replica, 1))
    profiles = []
    for t in times:
        kern.advance(t)
        profiles.append(lattice.empirical_profile(cfg))
    return replica, np.array(profiles), np.array(kern.counters)


def _run_replicas(exp: Experiment, N: int):
    """All replica trajectories for one N, in replica order."""
    tasks = [(exp.model_name, exp.dim, N, exp.theta, exp.alpha, exp.beta,
              exp.initial.spec, exp.seed, r, exp.times)
             for r in range(exp.replicas)]
    if exp.workers > 1:
        with ProcessPoolExecutor(max_workers=exp.workers) as pool:
            results = list(pool.map(_replica_task, tasks, chunksize=1))
    else:
        results = [_replica_task(t) for t in tasks]
    results.sort(key=lambda item: item[0])
    profiles = np.array([p for _, p, _ in results])   # (M, nt, sites, 2)
    counters = np.array([c for _, _, c in results])   # (M, 6)
    return profiles, counters


# -- convergence experiment -------------------------------------------------

@dataclass
class ComparisonReport:
    experiment: dict
    pde_grid: np.ndarray
    pde_values: dict            # time -> (M+1, 2)
    entries: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)

    def entry(self, N: int, t: float) -> dict:
        for e in self.entries:
            if e["N"] == N and abs(e["t"] - t) < 1e-12:
                return e
        raise KeyError((N, t))

    def l1_series(self, t: float, component: int) -> list[float]:
        return [self.entry(N, t)["l1"][component]
                for N in self.experiment["N_list"]]

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "entries": self.entries,
            "slopes": self.slopes,
        }


def solve_pde_for(exp: Experiment, model: VelocityModel):
    alpha, beta = _reservoirs(exp, model)
    d0 = alpha.data(())
    d1 = beta.data(())
    f = pde.make_field(exp.pde_M, exp.initial, exp.regime, d0, d1)
    traj = pde.solve(f, exp.times[-1], "auto", snapshots=exp.times)
    return traj, d0, d1


def run_convergence(exp: Experiment, out_dir=None) -> ComparisonReport:
    """The hydrodynamic-limit comparison (see module docstring)."""
    model = make_model(exp.model_name, exp.dim)
    traj, d0, d1 = solve_pde_for(exp, model)
    grid = traj.grid
    basket = _g_basket(grid)
    report = ComparisonReport(
        experiment=exp.manifest(), pde_grid=grid,
        pde_values={t: traj.at(t) for t in exp.times})

    writer = _OutputWriter(out_dir, exp) if out_dir else None
    if writer:
        writer.write_pde(traj, exp.times)

    for N in exp.N_list:
        geom = LatticeGeom(exp.dim, N)
        sites = geom.axis_coordinates()
        eps = exp.eps if exp.eps is not None else 5.0 / N
        profiles, counters = _run_replicas(exp, N)
        for ti, t in enumerate(exp.times):
            reps = profiles[:, ti]                    # (M, sites, 2)
            mean_prof = reps.mean(axis=0)
            smooth_mean = lattice.smooth_profile(mean_prof, geom, eps)
            pde_vals = traj.at(t)

            if exp.smooth_reference:
                pde_sites = np.array([np.interp(sites, grid, pde_vals[:, k])
                                      for k in range(2)]).T
                ref = lattice.smooth_profile(pde_sites, geom, eps)

                def error_norms(mean_profile):
                    d = lattice.smooth_profile(mean_profile, geom, eps) - ref
                    return (np.trapezoid(np.abs(d), sites, axis=0),
                            np.sqrt(np.trapezoid(d ** 2, sites, axis=0)))
            else:
                def error_norms(mean_profile):
                    sm = lattice.smooth_profile(mean_profile, geom, eps)
                    d = np.array([np.interp(grid, sites, sm[:, k])
                                  for k in range(2)]).T - pde_vals
                    return (np.trapezoid(np.abs(d), grid, axis=0),
                            np.sqrt(np.trapezoid(d ** 2, grid, axis=0)))

            l1, l2 = error_norms(mean_prof)
            l1_err = _jackknife_l1(reps, error_norms)
            pair_stats = _pair_statistics(reps, basket, sites, grid,
                                          pde_vals, geom)
            entry = {
                "N": N, "t": t, "eps": eps,
                "l1": l1.tolist(), "l2": l2.tolist(),
                "l1_stderr": l1_err.tolist(),
                "profile_stderr": (reps.std(axis=0, ddof=1)
                                   / np.sqrt(len(reps))).mean(axis=0).tolist(),
                "pairings": pair_stats,
                "counters": counters.sum(axis=0).tolist(),
            }
            report.entries.append(entry)
            if writer:
                writer.write_profiles(N, t, sites, mean_prof, smooth_mean,
                                      profiles[:, ti] if exp.store_replicas else None)
    if len(exp.N_list) >= 2:
        for k in range(2):
            for t in exp.times:
                series = np.array([report.entry(N, t)["l1"][k]
                                   for N in exp.N_list])
                logn = np.log(np.asarray(exp.N_list, dtype=float))
                slope = np.polyfit(logn,
                                   np.log(np.maximum(series, 1e-300)), 1)[0]
                report.slopes[f"component{k}_t{t}"] = float(slope)
    if writer:
        writer.write_report(report)
    return report


def _jackknife_l1(reps, error_norms) -> np.ndarray:
    """Leave-one-out standard error of the L1 errors."""
    M = len(reps)
    if M < 3:
        return np.full(2, np.nan)
    total = reps.sum(axis=0)
    vals = np.empty((M, 2))
    for r in range(M):
        vals[r] = error_norms((total - reps[r]) / (M - 1))[0]
    return np.sqrt((M - 1) / M * ((vals - vals.mean(axis=0)) ** 2).sum(axis=0))


def _pair_statistics(reps, basket, sites, grid, pde_vals, geom) -> dict:
    """|<pi^k, G> - int G p_k| per test function, with replica stderr."""
    out = {}
    for name, gvals in basket.items():
        g_sites = np.interp(sites, grid, gvals)
        pair = np.einsum("s,rsk->rk", g_sites, reps) / geom.N ** geom.d
        target = np.trapezoid(gvals[:, None] * pde_vals, grid, axis=0)
        err = pair - target
        out[name] = {
            "mean_abs_error": np.abs(err.mean(axis=0)).tolist(),
            "stderr": (err.std(axis=0, ddof=1) / np.sqrt(len(reps))).tolist(),
        }
    return out


# -- regime scan -------------------------------------------------------------

def regime_scan(thetas, N: int, exp_template: Experiment,
                T: float = 0.4, n_probes: int = 8,
                burn_fraction: float = 0.25, out_dir=None) -> dict:
    """Boundary diagnostics across theta at fixed N.

    For each theta: (a) boundary occupation, the replica/time average of
    I_0 at a site with x_1 = 1, compared against the reservoir mass
    sum_v alpha_v; (b) the net boundary particle current per unit time
    from the exact insertion/removal counters; (c) the total boundary
    event count with its Poisson-bound expectation 2 |V| N^{d-1} N^{2-theta} T.
    """
    model = make_model(exp_template.model_name, exp_template.dim)
    alpha, beta = _reservoirs(exp_template, model)
    geom = LatticeGeom(exp_template.dim, N)
    probe_times = np.linspace(burn_fraction * T, T, n_probes)
    rows = []
    for theta in thetas:
        params = SimParams(theta=float(theta), T=T, alpha=alpha, beta=beta,
                           seed=exp_template.seed, snapshots=probe_times)
        tables = build_tables(geom, model, params)
        occ_site1 = []
        net_left = []
        bnd_events = []
        for r in range(exp_template.replicas):
            cfg = lattice.sample_local_equilibrium(
                geom, model, exp_template.initial, exp_template.seed,
                stream=derive_stream(int(theta * 1e6), r, 0))
            kern = make_kernel(tables, cfg, exp_template.seed,
                               stream=derive_stream(int(theta * 1e6), r, 1))
            vals = []
            for t in probe_times:
                kern.advance(t)
                prof = lattice.empirical_profile(cfg)
                vals.append(prof[0, 0])     # I_0 at the x_1 = 1 site
            occ_site1.append(np.mean(vals))
            c = np.array(kern.counters)
            net_left.append((c[2] - c[3]) / T)
            bnd_events.append(int(c[2] + c[3] + c[4] + c[5]))
        occ = np.array(occ_site1)
        net = np.array(net_left)
        reservoir_mass = float(sum(alpha.value(i, ())
                                   for i in range(model.n_velocities)))
        expected_bnd = (2 * model.n_velocities * N ** (exp_template.dim - 1)
                        * float(N) ** (2.0 - theta) * T)
        rows.append({
            "theta": float(theta),
            "regime": regime_for_theta(float(theta)),
            "boundary_occupation": float(occ.mean()),
            "boundary_occupation_stderr": float(occ.std(ddof=1)
                                                / np.sqrt(len(occ))),
            "reservoir_mass": reservoir_mass,
            "net_left_current": float(net.mean()),
            "net_left_current_stderr": float(net.std(ddof=1)
                                             / np.sqrt(len(net))),
            "boundary_events": int(np.sum(bnd_events)),
            "boundary_events_bound": float(expected_bnd
                                           * exp_template.replicas),
        })
    result = {"N": N, "T": T, "replicas": exp_template.replicas,
              "rows": rows}
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "regime_scan.json"), "w") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
    return result


# -- check suite -------------------------------------------------------------

def check_suite(seed: int = 0, corrupt_rate: bool = False,
                quick: bool = True) -> list[dict]:
    """Exact tiny-system checks and core property tests.

    Returns one row per check: {name, passed, statistic, threshold,
    seconds}.  Failures are data, not exceptions; corrupt_rate feeds a
    deliberately wrong rate into the torus generator as a negative
    control (the stationarity check must then fail).
    """
    rows = []

    def check(name, fn, threshold):
        t0 = time.perf_counter()
        stat = float(fn())
        rows.append({"name": name, "passed": bool(stat <= threshold),
                     "statistic": stat, "threshold": threshold,
                     "seconds": round(time.perf_counter() - t0, 3)})

    rng = np.random.default_rng(seed)
    model1 = build_model_one(1)

    def torus_stationarity():
        tables = exact.torus_tables(model1, 3)
        if corrupt_rate:
            live = np.nonzero(tables.ex_base)[0]
            tables.ex_base[live[0]] *= 1.001
        L = exact.build_generator_matrix(
            tables, parts=(exact.PART_EXCLUSION, exact.PART_COLLISION))
        worst = 0.0
        for _ in range(5):
            lam = rng.uniform(-1.5, 1.5, size=2)
            mu = exact.grand_canonical_measure(tables, lam)
            worst = max(worst, exact.stationarity_residual(L, mu))
        return worst

    check("torus_stationarity_mu_lambda", torus_stationarity, 1e-12)

    def collision_conservation():
        worst = 0.0
        for d in (2, 3):
            model = build_model_one(d)
            for occ_bits in range(1 << model.n_velocities):
                occ = [(occ_bits >> i) & 1 for i in range(model.n_velocities)]
                before = site_observable(occ, model)
                for rule in model.collisions:
                    if collision_rate(occ, rule):
                        after = site_observable(apply_collision(occ, rule),
                                                model)
                        worst = max(worst, float(np.max(np.abs(after - before))))
        return worst

    check("collision_conserves_site_observables", collision_conservation, 1e-12)

    def collision_annihilation():
        model = build_model_one(2)
        geom = LatticeGeom(2, 2)
        alpha = ReservoirProfile.constant(model, 0.5)
        params = SimParams(theta=1.0, T=1.0, alpha=alpha, beta=alpha, seed=0)
        tables = build_tables(geom, model, params)
        g = rng.uniform(-1, 1, size=geom.n_sites)
        return exact.collision_annihilation_residual(tables, g)

    check("collision_generator_annihilates_observables",
          collision_annihilation, 1e-12)

    def dirichlet_form():
        model = build_model_one(2)
        geom = LatticeGeom(2, 2)
        alpha = ReservoirProfile.constant(model, 0.5)
        params = SimParams(theta=1.0, T=1.0, alpha=alpha, beta=alpha, seed=0)
        tables = build_tables(geom, model, params)
        h = lambda u: np.array([2.0 + 0.3 * np.sin(2 * np.pi * u[1]),
                                0.1 * u[0], 0.05])
        nu = exact.reference_measure(tables, h)
        worst = 0.0
        for _ in range(20):
            f = exact.random_density(nu, rng)
            lhs, rhs = exact.collision_dirichlet_identity(tables, nu, f)
            worst = max(worst, abs(lhs - rhs))
        return worst

    check("collision_dirichlet_form_identity", dirichlet_form, 1e-10)

    def thermo_roundtrip():
        worst = 0.0
        for d in (1, 2, 3):
            model = build_model_one(d)
            for _ in range(100):
                lam = rng.uniform(-2, 2, size=d + 1)
                p = thermo.forward_map(lam, model)
                lam2 = thermo.inverse_map(p, model)
                worst = max(worst, float(np.max(np.abs(lam2 - lam))))
        return worst

    check("thermo_roundtrip", thermo_roundtrip, 1e-10)

    def d1_closed_form():
        model = build_model_one(1)
        worst = 0.0
        for _ in range(50):
            rho = rng.uniform(0.2, 1.8)
            mom = rng.uniform(-1, 1) * min(rho, 2 - rho) * 0.9
            lam = thermo.inverse_map(np.array([rho, mom]), model)
            ref = thermo.inverse_map_d1(rho, mom)
            worst = max(worst, float(np.max(np.abs(lam - ref))))
        return worst

    check("thermo_d1_closed_form", d1_closed_form, 1e-10)

    def kernel_agreement():
        backends = available_backends()
        if len(backends) < 2:
            return 0.0
        model = build_model_one(1)
        geom = LatticeGeom(1, 12)
        alpha = ReservoirProfile.constant(model, {0: 0.7, 1: 0.4})
        beta = ReservoirProfile.constant(model, 0.35)
        params = SimParams(theta=0.5, T=0.02, alpha=alpha, beta=beta, seed=9)
        tables = build_tables(geom, model, params)
        outs = []
        for cls in backends.values():
            cfg = lattice.sample_local_equilibrium(
                geom, model, lambda u: np.array([1.0, 0.1]), 9, 0)
            kern = cls(tables, cfg.bits, 9, 1)
            kern.advance(params.T)
            outs.append((cfg.bits.copy(), kern.events, kern.t))
        same = (np.array_equal(outs[0][0], outs[1][0])
                and outs[0][1] == outs[1][1] and outs[0][2] == outs[1][2])
        return 0.0 if same else 1.0

    check("kernel_backends_agree", kernel_agreement, 0.5)

    if not quick:
        def dynkin():
            model = build_model_one(1)
            geom = LatticeGeom(1, 16)
            alpha = ReservoirProfile.constant(model, {0: 0.7, 1: 0.5})
            beta = ReservoirProfile.constant(model, 0.4)
            params = SimParams(theta=0.5, T=0.02, alpha=alpha, beta=beta,
                               seed=seed + 1)
            stats = dynkin_martingale_check(
                geom, model, params,
                [lambda u: float(np.sin(np.pi * u[0]))],
                InitialProfile.constant([1.0, 0.0]), replicas=80,
                times=[0.02])
            s = stats[0]
            return float(np.max(np.abs(s.mean) / np.maximum(s.stderr, 1e-30)))

        check("dynkin_martingale_mean_zero", dynkin, 4.0)

    return rows


# -- output writing ----------------------------------------------------------

class _OutputWriter:
    def __init__(self, out_dir, exp: Experiment):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
            json.dump(exp.manifest(), fh, indent=2, sort_keys=True)

    def _path(self, name):
        return os.path.join(self.out_dir, name)

    def write_pde(self, traj, times):
        for t in times:
            vals = traj.at(t)
            with open(self._path(f"pde_t{t:g}.csv"), "w") as fh:
                fh.write("u,rho,momentum\n")
                for u, row in zip(traj.grid, vals):
                    fh.write(f"{u!r},{row[0]!r},{row[1]!r}\n")

    def write_profiles(self, N, t, sites, mean_prof, smooth_mean, replicas):
        with open(self._path(f"empirical_N{N}_t{t:g}.csv"), "w") as fh:
            fh.write("u,I0_mean,I1_mean,I0_smooth,I1_smooth\n")
            for i, u in enumerate(sites):
                fh.write(f"{u!r},{mean_prof[i, 0]!r},{mean_prof[i, 1]!r},"
                         f"{smooth_mean[i, 0]!r},{smooth_mean[i, 1]!r}\n")
        if replicas is not None:
            with open(self._path(f"replicas_N{N}_t{t:g}.csv"), "w") as fh:
                fh.write("replica,u,I0,I1\n")
                for r, prof in enumerate(replicas):
                    for i, u in enumerate(sites):
                        fh.write(f"{r},{u!r},{prof[i, 0]!r},{prof[i, 1]!r}\n")

    def write_report(self, report: ComparisonReport):
        with open(self._path("report.json"), "w") as fh:
            json.dump(report.to_json(), fh, indent=2, sort_keys=True)
