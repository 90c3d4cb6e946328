"""Velocity sets, momentum-conserving collision rules, and site observables.

A ``VelocityModel`` fixes an ordered finite set of velocities in R^d,
closed under coordinate sign flips and coordinate permutations, together
with the list of effective binary collisions.  A collision quadruple
q = (v, w, v', w') takes two particles with velocities v and w sitting on
one site and turns them into particles with velocities v' and w' on the
same site; only quadruples with v + w = v' + w' are admitted, so each
site's mass and momentum are invariant under collisions.

Quadruples that can never fire, or that fire as the identity, are removed
at build time: this requires v != w, v' != w' (a binary collision needs
two particles and produces two), and {v, w} disjoint from {v', w'}
(otherwise the occupancy factors make the rate identically zero).  The
process law is unchanged; see tests for the exhaustive conservation and
effectiveness checks.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

MOMENTUM_TOL = 1e-12


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class CollisionRule:
    """Velocity-index quadruple (v, w, v', w') with v + w = v' + w'."""

    q: tuple[int, int, int, int]

    def __iter__(self):
        return iter(self.q)


@dataclass(frozen=True)
class VelocityModel:
    dim: int
    velocities: tuple[tuple[float, ...], ...]
    collisions: tuple[CollisionRule, ...] = field(default=(), compare=False)
    label: str = ""

    def __post_init__(self):
        validate_velocities(self.dim, self.velocities)
        for rule in self.collisions:
            _check_rule(self.velocities, rule.q)

    @property
    def n_velocities(self) -> int:
        return len(self.velocities)

    @property
    def varray(self) -> np.ndarray:
        """Velocities as a (n_velocities, dim) float array."""
        return np.asarray(self.velocities, dtype=float)

    @property
    def vtilde(self) -> np.ndarray:
        """Extended velocities (1, v_1, ..., v_d), shape (n, d+1)."""
        v = self.varray
        return np.hstack([np.ones((len(v), 1)), v])

    def index_of(self, v) -> int:
        v = tuple(float(c) for c in v)
        for i, w in enumerate(self.velocities):
            if max(abs(a - b) for a, b in zip(v, w)) <= MOMENTUM_TOL:
                return i
        raise ModelError(f"velocity {v} not in model")


def validate_velocities(dim: int, velocities) -> None:
    """Check dimension, duplicates, and closure under signed permutations.

    Raises ModelError listing every missing image vector on closure
    failure (this is the validation applied to velocity-set files).
    """
    if dim < 1:
        raise ModelError("dimension must be >= 1")
    vs = [tuple(float(c) for c in v) for v in velocities]
    if not vs:
        raise ModelError("empty velocity set")
    for v in vs:
        if len(v) != dim:
            raise ModelError(f"velocity {v} has wrong dimension (expected {dim})")
    for i, v in enumerate(vs):
        for w in vs[i + 1:]:
            if max(abs(a - b) for a, b in zip(v, w)) <= MOMENTUM_TOL:
                raise ModelError(f"duplicate velocity {v}")
    missing = []
    for v in vs:
        for image in _signed_permutations(v):
            if not any(max(abs(a - b) for a, b in zip(image, w)) <= MOMENTUM_TOL
                       for w in vs):
                missing.append(image)
    if missing:
        uniq = sorted(set(missing))
        raise ModelError(
            "velocity set not closed under sign flips and coordinate "
            f"permutations; missing: {uniq}")


def _signed_permutations(v):
    d = len(v)
    out = set()
    for perm in itertools.permutations(range(d)):
        base = tuple(v[p] for p in perm)
        for signs in itertools.product((1.0, -1.0), repeat=d):
            out.add(tuple(s * c for s, c in zip(signs, base)))
    return out


def _check_rule(velocities, q) -> None:
    v, w, vp, wp = (np.asarray(velocities[i], dtype=float) for i in q)
    if np.max(np.abs(v + w - vp - wp)) > MOMENTUM_TOL:
        raise ModelError(f"collision {q} violates momentum conservation")


def _is_effective(q: tuple[int, int, int, int]) -> bool:
    i, j, k, l = q
    return i != j and k != l and not ({i, j} & {k, l})


def enumerate_collisions(velocities) -> list[CollisionRule]:
    """All effective momentum-conserving quadruples, in lexicographic
    index order (the order is part of the model contract: collision
    clocks are indexed by it)."""
    varr = np.asarray(velocities, dtype=float)
    n = len(varr)
    rules = []
    for q in itertools.product(range(n), repeat=4):
        if not _is_effective(q):
            continue
        i, j, k, l = q
        if np.max(np.abs(varr[i] + varr[j] - varr[k] - varr[l])) <= MOMENTUM_TOL:
            rules.append(CollisionRule(q))
    return rules


def count_momentum_conserving(velocities) -> int:
    """Raw (unfiltered) count of quadruples with v + w = v' + w'."""
    varr = np.asarray(velocities, dtype=float)
    n = len(varr)
    count = 0
    for q in itertools.product(range(n), repeat=4):
        i, j, k, l = q
        if np.max(np.abs(varr[i] + varr[j] - varr[k] - varr[l])) <= MOMENTUM_TOL:
            count += 1
    return count


def build_model_one(d: int) -> VelocityModel:
    """Unit-coordinate model: velocities {+-e_1, ..., +-e_d}."""
    if d < 1:
        raise ModelError("dimension must be >= 1")
    vs = []
    for i in range(d):
        e = [0.0] * d
        e[i] = 1.0
        vs.append(tuple(e))
        e = [0.0] * d
        e[i] = -1.0
        vs.append(tuple(e))
    vs = tuple(vs)
    return VelocityModel(dim=d, velocities=vs,
                         collisions=tuple(enumerate_collisions(vs)),
                         label=f"model1-d{d}")


def speed_root(tol: float = 1e-14) -> float:
    """Positive root of x^4 - 6 x^2 - 1 = 0 by Newton iteration."""
    x = 2.5
    for _ in range(100):
        f = x ** 4 - 6 * x ** 2 - 1
        df = 4 * x ** 3 - 12 * x
        step = f / df
        x -= step
        if abs(step) <= tol:
            break
    return x


def build_model_two(scale: float = 1.0) -> VelocityModel:
    """d=3 model whose velocity coordinates involve the positive root of
    x^4 - 6 x^2 - 1 = 0 (interpretation A: signed coordinate permutations
    of (r, r, r), optionally rescaled).

    The source definition of this velocity set is ambiguous, so the
    built-in set is one documented reading; arbitrary sets can be loaded
    from JSON files instead (load_velocity_file).
    """
    r = speed_root() * scale
    base = (r, r, r)
    vs = tuple(sorted(_signed_permutations(base), reverse=True))
    return VelocityModel(dim=3, velocities=vs,
                         collisions=tuple(enumerate_collisions(vs)),
                         label="model2-interpA")


def model_from_velocities(dim: int, velocities, label: str = "custom") -> VelocityModel:
    vs = tuple(tuple(float(c) for c in v) for v in velocities)
    return VelocityModel(dim=dim, velocities=vs,
                         collisions=tuple(enumerate_collisions(vs)),
                         label=label)


def load_velocity_file(path) -> VelocityModel:
    """Velocity-set file: JSON array of d-vectors (or {"dim":, "velocities":})."""
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        vs = data["velocities"]
        dim = int(data.get("dim", len(vs[0])))
        label = data.get("label", "file")
    else:
        vs = data
        dim = len(vs[0])
        label = "file"
    return model_from_velocities(dim, vs, label=label)


def site_observable(occupancy, model: VelocityModel) -> np.ndarray:
    """Mass and momentum (I_0, ..., I_d) of one site's occupancy bits."""
    occ = np.asarray(occupancy, dtype=float)
    if occ.shape != (model.n_velocities,):
        raise ModelError(f"occupancy length {occ.shape} != {model.n_velocities}")
    return model.vtilde.T @ occ


def apply_collision(occupancy, rule: CollisionRule):
    """Occupancy after firing the rule (caller checks the rate factor)."""
    out = list(occupancy)
    i, j, k, l = rule.q
    out[i] = 0
    out[j] = 0
    out[k] = 1
    out[l] = 1
    return out


def collision_rate(occupancy, rule: CollisionRule) -> int:
    i, j, k, l = rule.q
    return occupancy[i] * occupancy[j] * (1 - occupancy[k]) * (1 - occupancy[l])
