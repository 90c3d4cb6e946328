"""Single-particle jump laws for the weakly asymmetric part of the dynamics.

A jump law assigns to each velocity v a finite-range probability p(z, v)
on nonzero lattice displacements with mean exactly v.  The full jump
kernel of the process combines the symmetric nearest-neighbor part with
the law scaled by 1/N:

    P_N(z, v) = (1/2) sum_j (delta_{z, e_j} + delta_{z, -e_j}) + p(z, v)/N.

The default law is the deterministic displacement p(z, v) = delta_{z, v},
available whenever every velocity is a nonzero integer lattice vector.
The default alone is not irreducible, but the combined kernel P_N is;
the hydrodynamic behavior depends on p only through its mean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .models import VelocityModel

MEAN_TOL = 1e-12


class JumpLawError(ValueError):
    pass


class NonLatticeVelocity(JumpLawError):
    pass


@dataclass(frozen=True)
class JumpLaw:
    """steps[i]: list of (displacement tuple, probability) for velocity i."""

    steps: tuple[tuple[tuple[tuple[int, ...], float], ...], ...]
    range_bound: int

    def for_velocity(self, vidx: int):
        return self.steps[vidx]


def validate_jump_law(model: VelocityModel, steps) -> JumpLaw:
    """Check normalization, mean, and range; returns the frozen law."""
    if len(steps) != model.n_velocities:
        raise JumpLawError(
            f"law covers {len(steps)} velocities, model has {model.n_velocities}")
    frozen = []
    kmax = 0
    for vidx, entries in enumerate(steps):
        vname = model.velocities[vidx]
        v = np.asarray(vname, dtype=float)
        total = 0.0
        mean = np.zeros(model.dim)
        seen = set()
        row = []
        for z, p in entries:
            z = tuple(int(c) for c in z)
            if all(c == 0 for c in z):
                raise JumpLawError(f"velocity {vname}: zero displacement")
            if z in seen:
                raise JumpLawError(f"velocity {vname}: duplicate step {z}")
            seen.add(z)
            p = float(p)
            if not 0.0 <= p <= 1.0:
                raise JumpLawError(f"velocity {vname}: probability {p} "
                                   "outside [0, 1]")
            total += p
            mean += p * np.asarray(z, dtype=float)
            kmax = max(kmax, int(np.ceil(np.linalg.norm(z))))
            row.append((z, p))
        if abs(total - 1.0) > MEAN_TOL:
            raise JumpLawError(
                f"velocity {vname}: probabilities sum to {total}, not 1")
        if np.max(np.abs(mean - v)) > MEAN_TOL:
            raise JumpLawError(
                f"velocity {vname}: law mean {tuple(float(m) for m in mean)} differs from "
                "the velocity")
        frozen.append(tuple(row))
    return JumpLaw(steps=tuple(frozen), range_bound=kmax)


def default_jump_law(model: VelocityModel) -> JumpLaw:
    """Deterministic displacement by v itself (lattice velocities only)."""
    steps = []
    for v in model.velocities:
        z = []
        for c in v:
            if abs(c - round(c)) > 1e-9:
                raise NonLatticeVelocity(
                    f"velocity {v} is not a lattice vector; supply a jump law")
            z.append(int(round(c)))
        if all(c == 0 for c in z):
            raise NonLatticeVelocity(
                "zero velocity has no default law; supply a jump law")
        steps.append([(tuple(z), 1.0)])
    return validate_jump_law(model, steps)


def load_jump_law(model: VelocityModel, path) -> JumpLaw:
    """JSON: [{"v": [...], "steps": [[[dz...], p], ...]}, ...]."""
    with open(path) as fh:
        data = json.load(fh)
    by_index: dict[int, list] = {}
    for entry in data:
        idx = model.index_of(entry["v"])
        by_index[idx] = [(tuple(z), float(p)) for z, p in entry["steps"]]
    missing = set(range(model.n_velocities)) - set(by_index)
    if missing:
        vs = [model.velocities[i] for i in sorted(missing)]
        raise JumpLawError(f"no jump law for velocities {vs}")
    return validate_jump_law(model, [by_index[i] for i in range(model.n_velocities)])
