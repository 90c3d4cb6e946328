"""Kernel backend benchmark: compiled extension vs pure-Python fallback.

Runs the same seeded scenario on every available backend, checks that
the trajectories agree exactly, and reports events per second.  The
Python run is capped by event count and its rate extrapolated, so the
benchmark stays quick even though the fallback is orders of magnitude
slower.
"""

from __future__ import annotations

import time

import numpy as np

from . import lattice
from ._kernel import available_backends
from .dynamics import SimParams, build_tables
from .lattice import LatticeGeom
from .models import build_model_one
from .rng import derive_stream
from .thermo import ReservoirProfile

PY_EVENT_CAP = 30_000


def run_benchmark(N: int = 128, T: float = 0.02, theta: float = 0.5,
                  seed: int = 1) -> list[dict]:
    model = build_model_one(1)
    geom = LatticeGeom(1, N)
    alpha = ReservoirProfile.constant(model, {0: 0.8, 1: 0.6})
    beta = ReservoirProfile.constant(model, 0.3)
    params = SimParams(theta=theta, T=T, alpha=alpha, beta=beta, seed=seed)
    tables = build_tables(geom, model, params)
    profile = lambda u: np.array([1.0, 0.1])

    rows = []
    reference_bits = None
    for name, cls in sorted(available_backends().items()):
        cfg = lattice.sample_local_equilibrium(geom, model, profile, seed,
                                               stream=derive_stream(N, 0, 0))
        kern = cls(tables, cfg.bits, seed, derive_stream(N, 0, 1))
        cap = -1 if name == "compiled" else PY_EVENT_CAP
        t0 = time.perf_counter()
        kern.advance(T, max_events=cap)
        elapsed = time.perf_counter() - t0
        row = {
            "backend": name,
            "events": int(kern.events),
            "seconds": elapsed,
            "events_per_s": kern.events / elapsed if elapsed > 0 else float("inf"),
            "t_reached": float(kern.t),
        }
        # equality check on a common prefix run
        cfg2 = lattice.sample_local_equilibrium(geom, model, profile, seed,
                                                stream=derive_stream(N, 0, 0))
        kern2 = cls(tables, cfg2.bits, seed, derive_stream(N, 0, 1))
        kern2.advance(T, max_events=5_000)
        if reference_bits is None:
            reference_bits = cfg2.bits.copy()
            reference_state = (int(kern2.events), float(kern2.t))
            row["matches_reference"] = True
        else:
            row["matches_reference"] = (
                np.array_equal(cfg2.bits, reference_bits)
                and (int(kern2.events), float(kern2.t)) == reference_state)
        rows.append(row)
    return rows


if __name__ == "__main__":
    for r in run_benchmark():
        print(r)
