"""Lattice geometry, occupancy configurations, sampling, empirical profiles.

The bulk lattice is {1, ..., N-1} x (Z/NZ)^(d-1): coordinate 1 is an open
segment (the two reservoirs sit just outside, at 0 and N), coordinates
2..d are periodic.  Occupancy is a dense site-major bit array: bit
(site, velocity) with the velocity index taken from the model's fixed
order.

Sampling follows the product-measure recipe: site x is drawn from the
single-site measure with chemical potential Lambda(profile(x/N)), i.e.
each velocity occupied independently with probability theta_v.  All draws
come from a named Philox stream (see rng), one uniform per bit in
site-major order, so a (seed, stream) pair reproduces the configuration
bit for bit on any platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import thermo
from .models import VelocityModel
from .rng import PhiloxStream


@dataclass(frozen=True)
class LatticeGeom:
    """d-dimensional bulk lattice with N sites per unit length."""

    d: int
    N: int

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if self.d < 1:
            raise ValueError("d must be >= 1")

    @property
    def extents(self) -> tuple[int, ...]:
        return (self.N - 1,) + (self.N,) * (self.d - 1)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.extents))

    def site_index(self, coords) -> int:
        """Linear index of lattice coordinates (x_1 in 1..N-1, x_j in 0..N-1)."""
        coords = tuple(int(c) for c in coords)
        idx = coords[0] - 1
        if not 0 <= idx < self.N - 1:
            raise IndexError(f"x_1={coords[0]} outside 1..{self.N - 1}")
        for c in coords[1:]:
            idx = idx * self.N + (c % self.N)
        return idx

    def site_coords(self, index: int) -> tuple[int, ...]:
        rest = []
        for _ in range(self.d - 1):
            rest.append(index % self.N)
            index //= self.N
        return (index + 1,) + tuple(reversed(rest))

    def positions(self) -> np.ndarray:
        """Macroscopic positions x/N of all sites, shape (n_sites, d)."""
        coords = np.array([self.site_coords(i) for i in range(self.n_sites)],
                          dtype=float)
        return coords / self.N

    def axis_coordinates(self) -> np.ndarray:
        """d=1 helper: the positions x/N as a flat array."""
        if self.d != 1:
            raise ValueError("axis_coordinates is for d=1")
        return np.arange(1, self.N) / self.N


class Configuration:
    """Mutable occupancy state eta(x, v) in {0, 1}."""

    def __init__(self, geom: LatticeGeom, model: VelocityModel, bits=None):
        self.geom = geom
        self.model = model
        n = geom.n_sites * model.n_velocities
        if bits is None:
            self.bits = np.zeros(n, dtype=np.uint8)
        else:
            bits = np.asarray(bits, dtype=np.uint8).reshape(n)
            if not np.all(bits <= 1):
                raise ValueError("occupancy bits must be 0/1")
            self.bits = bits.copy()

    def copy(self) -> "Configuration":
        return Configuration(self.geom, self.model, self.bits)

    @property
    def site_matrix(self) -> np.ndarray:
        """View of shape (n_sites, n_velocities)."""
        return self.bits.reshape(self.geom.n_sites, self.model.n_velocities)

    def get(self, coords, vidx: int) -> int:
        return int(self.site_matrix[self.geom.site_index(coords), vidx])

    def set(self, coords, vidx: int, val: int) -> None:
        self.site_matrix[self.geom.site_index(coords), vidx] = val

    def total_observable(self) -> np.ndarray:
        """Global conserved-quantity vector sum_x I(eta_x)."""
        return self.model.vtilde.T @ self.site_matrix.sum(axis=0).astype(float)

    def __eq__(self, other):
        return (isinstance(other, Configuration)
                and self.geom == other.geom
                and np.array_equal(self.bits, other.bits))


def _theta_matrix(geom: LatticeGeom, model: VelocityModel, profile) -> np.ndarray:
    """Per-site occupation probabilities theta_v(Lambda(profile(x/N))).

    ``profile`` maps a macroscopic position (d-vector) to the (d+1)
    density/momentum vector; raises NotInU naming the failing grid point.
    """
    pos = geom.positions()
    thetas = np.empty((geom.n_sites, model.n_velocities))
    cache: dict[bytes, np.ndarray] = {}
    for i in range(geom.n_sites):
        p = np.asarray(profile(pos[i]), dtype=float)
        key = p.tobytes()
        th = cache.get(key)
        if th is None:
            try:
                lam = thermo.inverse_map(p, model)
            except thermo.NotInU as exc:
                raise thermo.NotInU(
                    f"profile value {p} at grid point {pos[i]} is outside U"
                ) from exc
            th = thermo.theta_all(lam, model)
            cache[key] = th
        thetas[i] = th
    return thetas


def sample_product(geom: LatticeGeom, model: VelocityModel, profile,
                   seed: int, stream: int = 0) -> Configuration:
    """Product-measure sample with site marginals m_{Lambda(profile(x/N))}."""
    thetas = _theta_matrix(geom, model, profile)
    rng = PhiloxStream(seed, stream)
    u = rng.uniforms(thetas.size).reshape(thetas.shape)
    cfg = Configuration(geom, model)
    cfg.site_matrix[:] = (u < thetas).astype(np.uint8)
    return cfg


def sample_local_equilibrium(geom: LatticeGeom, model: VelocityModel,
                             initial_profile, seed: int,
                             stream: int = 0) -> Configuration:
    """Local-equilibrium sample associated to an initial (rho, mom) profile."""
    return sample_product(geom, model, initial_profile, seed, stream)


def sample_reference(geom: LatticeGeom, model: VelocityModel, h,
                     seed: int, stream: int = 0) -> Configuration:
    """Reference-measure sample nu^N_h (h constant or smooth profile)."""
    if np.isscalar(h) or isinstance(h, (list, tuple, np.ndarray)):
        hvec = np.asarray(h, dtype=float)
        return sample_product(geom, model, lambda u: hvec, seed, stream)
    return sample_product(geom, model, h, seed, stream)


def empirical_profile(cfg: Configuration) -> np.ndarray:
    """Per-site conserved quantities I(eta_x), shape (n_sites, d+1)."""
    return cfg.site_matrix.astype(float) @ cfg.model.vtilde


def pair_with_test_function(profile: np.ndarray, g_values: np.ndarray,
                            geom: LatticeGeom) -> np.ndarray:
    """<pi^N, G> = N^-d sum_x G(x/N) I(eta_x), componentwise.

    ``profile`` is an empirical profile array (n_sites, d+1);
    ``g_values`` the test function sampled at the same sites.
    """
    g = np.asarray(g_values, dtype=float)
    if g.shape != (profile.shape[0],):
        raise ValueError(f"test function shape {g.shape} does not match "
                         f"{profile.shape[0]} sites")
    return (g @ profile) / geom.N ** geom.d


def block_average(cfg: Configuration, center, half_width: int) -> np.ndarray:
    """Average of I(eta_z) over the cube center + {-L..L}^d.

    The cube wraps in the periodic coordinates and is truncated to the
    lattice in coordinate 1; the average divides by the number of sites
    actually covered, so it stays a convex combination near the boundary.
    """
    if half_width < 0:
        raise ValueError("half-width must be >= 0")
    geom, model = cfg.geom, cfg.model
    center = tuple(int(c) for c in center)
    x1_lo = max(1, center[0] - half_width)
    x1_hi = min(geom.N - 1, center[0] + half_width)
    total = np.zeros(model.dim + 1)
    count = 0
    ranges = [range(x1_lo, x1_hi + 1)]
    for c in center[1:]:
        ranges.append(range(c - half_width, c + half_width + 1))
    import itertools
    prof = empirical_profile(cfg)
    for coords in itertools.product(*ranges):
        total += prof[geom.site_index(coords)]
        count += 1
    return total / count


def smooth_profile(profile: np.ndarray, geom: LatticeGeom,
                   eps: float) -> np.ndarray:
    """Box-kernel smoothing of an empirical profile.

    Averages over the sites within distance eps*N (per coordinate) of
    each site: periodic wrap in coordinates 2..d, truncation with
    renormalization by the covered count in coordinate 1.
    """
    if not 0 < eps < 0.5:
        raise ValueError("eps must be in (0, 1/2)")
    half = int(np.floor(eps * geom.N))
    if half == 0:
        return profile.copy()
    shape = geom.extents + (profile.shape[-1],)
    arr = profile.reshape(shape)
    # periodic axes first
    for axis in range(1, geom.d):
        acc = np.zeros_like(arr)
        for s in range(-half, half + 1):
            acc += np.roll(arr, s, axis=axis)
        arr = acc / (2 * half + 1)
    # truncated axis 1 via cumulative sums
    n1 = geom.extents[0]
    flat = arr.reshape(n1, -1)
    csum = np.vstack([np.zeros((1, flat.shape[1])), np.cumsum(flat, axis=0)])
    out = np.empty_like(flat)
    for i in range(n1):
        lo = max(0, i - half)
        hi = min(n1 - 1, i + half)
        out[i] = (csum[hi + 1] - csum[lo]) / (hi - lo + 1)
    return out.reshape(profile.shape)


SNAPSHOT_MAGIC = b"VGSNAP1\n"


def save_snapshot(cfg: Configuration, path) -> None:
    """Compact binary snapshot: magic, JSON header line, packed bit payload."""
    header = {
        "d": cfg.geom.d,
        "N": cfg.geom.N,
        "n_velocities": cfg.model.n_velocities,
        "velocities": [list(v) for v in cfg.model.velocities],
        "n_bits": int(cfg.bits.size),
    }
    payload = np.packbits(cfg.bits)
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(payload.tobytes())


def load_snapshot(path, model: VelocityModel | None = None) -> Configuration:
    from .models import model_from_velocities
    with open(path, "rb") as fh:
        magic = fh.read(len(SNAPSHOT_MAGIC))
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a configuration snapshot")
        header = json.loads(fh.readline().decode())
        payload = np.frombuffer(fh.read(), dtype=np.uint8)
    geom = LatticeGeom(header["d"], header["N"])
    if model is None:
        model = model_from_velocities(header["d"], header["velocities"])
    bits = np.unpackbits(payload)[:header["n_bits"]]
    return Configuration(geom, model, bits)


def profile_to_csv(profile: np.ndarray, geom: LatticeGeom, path) -> None:
    """CSV export: one row per site, columns x_1/N..x_d/N then I_0..I_d."""
    ncomp = profile.shape[-1]
    pos = geom.positions()
    header = ",".join([f"u{j + 1}" for j in range(geom.d)]
                      + [f"I{k}" for k in range(ncomp)])
    data = np.hstack([pos, profile.reshape(geom.n_sites, ncomp)])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in data:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
