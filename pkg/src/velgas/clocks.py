"""Static clock tables: the rate structure of the Markov dynamics.

Every elementary transition of the process owns one Poisson clock:

  * exclusion clocks, one per (site, velocity, displacement) with base
    rate N^2 P_N(z, v); the instantaneous rate multiplies the base by the
    occupancy factor eta(x, v)(1 - eta(x+z, v)),
  * collision clocks, one per (site, rule) with rate N^2 when the rule's
    occupancy pattern matches and 0 otherwise,
  * boundary clocks, one per (boundary site, velocity, side) flipping the
    bit at rate N^{2-theta} alpha_v (insertion) or N^{2-theta}(1-alpha_v)
    (removal), and likewise with beta on the right face.

The tables are plain arrays shared verbatim by the compiled kernel, the
pure-Python kernel, and the exact generator-matrix builder, so all three
realize the same generator by construction.  Jumps whose target leaves
the open coordinate-1 segment have no target site and are suppressed
(base rate zero); the transverse coordinates wrap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .jumps import JumpLaw
from .lattice import LatticeGeom
from .models import VelocityModel

EVENT_EXCLUSION = 0
EVENT_COLLISION = 1
EVENT_BOUNDARY = 2

# counter slots maintained by the kernels
COUNTER_NAMES = ("exclusion", "collision", "insert_left", "remove_left",
                 "insert_right", "remove_right")


@dataclass(frozen=True)
class TorusGeom:
    """Fully periodic lattice (Z/NZ)^d; used for torus-mode generators."""

    d: int
    N: int

    @property
    def extents(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def n_sites(self) -> int:
        return self.N ** self.d

    def site_index(self, coords) -> int:
        idx = 0
        for c in coords:
            idx = idx * self.N + (int(c) % self.N)
        return idx

    def site_coords(self, index: int) -> tuple[int, ...]:
        out = []
        for _ in range(self.d):
            out.append(index % self.N)
            index //= self.N
        return tuple(reversed(out))

    def positions(self) -> np.ndarray:
        coords = np.array([self.site_coords(i) for i in range(self.n_sites)],
                          dtype=float)
        return coords / self.N


class ClockTables:
    """Frozen rate structure; see module docstring for the clock layout."""

    def __init__(self, geom, model: VelocityModel, law: JumpLaw, theta: float,
                 alpha=None, beta=None, corrupt_rate: bool = False):
        self.geom = geom
        self.model = model
        self.law = law
        self.theta = float(theta)
        self.torus = isinstance(geom, TorusGeom)
        N = geom.N
        d = geom.d
        n_v = model.n_velocities
        n_sites = geom.n_sites
        self.N, self.d, self.n_v, self.n_sites = N, d, n_v, n_sites

        disp = _merged_displacements(model, law, N)

        # exclusion clocks, (site, velocity, displacement)-major order
        ex_src, ex_tgt, ex_v, ex_base = [], [], [], []
        for site in range(n_sites):
            coords = geom.site_coords(site)
            for vidx in range(n_v):
                for z, pn in disp[vidx]:
                    tgt = _target_site(geom, coords, z, self.torus)
                    if tgt < 0:
                        ex_src.append(site)
                        ex_tgt.append(site)  # occupancy factor forces rate 0
                        ex_v.append(vidx)
                        ex_base.append(0.0)
                    else:
                        ex_src.append(site)
                        ex_tgt.append(tgt)
                        ex_v.append(vidx)
                        ex_base.append(N * N * pn)
        self.ex_src = np.asarray(ex_src, dtype=np.int32)
        self.ex_tgt = np.asarray(ex_tgt, dtype=np.int32)
        self.ex_v = np.asarray(ex_v, dtype=np.int32)
        self.ex_base = np.asarray(ex_base, dtype=np.float64)
        self.n_ex = len(ex_src)

        # collision clocks, site-major
        rules = model.collisions
        self.n_rules = len(rules)
        self.rule_velocities = np.asarray(
            [list(r.q) for r in rules], dtype=np.int32).reshape(self.n_rules, 4)
        self.coll_site = np.repeat(np.arange(n_sites, dtype=np.int32), self.n_rules)
        self.coll_rule = np.tile(np.arange(self.n_rules, dtype=np.int32), n_sites)
        self.coll_base = float(N * N)
        self.n_coll = n_sites * self.n_rules

        # boundary clocks: left face (alpha) then right face (beta)
        bnd_site, bnd_v, bnd_ins, bnd_rem, bnd_side = [], [], [], [], []
        if not self.torus:
            if alpha is None or beta is None:
                raise ValueError("reservoir profiles required off the torus")
            damp = float(N) ** (2.0 - self.theta)
            for side, prof, x1 in ((0, alpha, 1), (1, beta, N - 1)):
                for site in range(n_sites):
                    coords = geom.site_coords(site)
                    if coords[0] != x1:
                        continue
                    u_tilde = tuple(c / N for c in coords[1:])
                    for vidx in range(n_v):
                        a = float(prof.value(vidx, u_tilde))
                        bnd_site.append(site)
                        bnd_v.append(vidx)
                        bnd_ins.append(damp * a)
                        bnd_rem.append(damp * (1.0 - a))
                        bnd_side.append(side)
        self.bnd_site = np.asarray(bnd_site, dtype=np.int32)
        self.bnd_v = np.asarray(bnd_v, dtype=np.int32)
        self.bnd_ins = np.asarray(bnd_ins, dtype=np.float64)
        self.bnd_rem = np.asarray(bnd_rem, dtype=np.float64)
        self.bnd_side = np.asarray(bnd_side, dtype=np.uint8)
        self.n_bnd = len(bnd_site)

        self.n_clocks = self.n_ex + self.n_coll + self.n_bnd

        if corrupt_rate and self.n_ex:
            live = np.nonzero(self.ex_base)[0]
            self.ex_base[live[0]] *= 1.001  # negative-control mutation

        self._build_adjacency()

    def _build_adjacency(self):
        """bit (site*n_v + v) -> clocks whose rate involves that bit."""
        n_bits = self.n_sites * self.n_v
        touch: list[list[int]] = [[] for _ in range(n_bits)]
        for c in range(self.n_ex):
            if self.ex_base[c] == 0.0:
                continue
            v = self.ex_v[c]
            touch[self.ex_src[c] * self.n_v + v].append(c)
            touch[self.ex_tgt[c] * self.n_v + v].append(c)
        rules_by_v: list[list[int]] = [[] for _ in range(self.n_v)]
        for r in range(self.n_rules):
            for vidx in self.rule_velocities[r]:
                rules_by_v[vidx].append(r)
        for j in range(self.n_coll):
            c = self.n_ex + j
            site = self.coll_site[j]
            rule = self.coll_rule[j]
            for vidx in set(int(x) for x in self.rule_velocities[rule]):
                touch[site * self.n_v + vidx].append(c)
        for j in range(self.n_bnd):
            c = self.n_ex + self.n_coll + j
            touch[self.bnd_site[j] * self.n_v + self.bnd_v[j]].append(c)
        off = np.zeros(n_bits + 1, dtype=np.int64)
        for b in range(n_bits):
            off[b + 1] = off[b] + len(touch[b])
        flat = np.empty(off[-1], dtype=np.int32)
        for b in range(n_bits):
            flat[off[b]:off[b + 1]] = touch[b]
        self.aff_off = off
        self.aff_clk = flat

    # -- reference rate evaluation (mirrors both kernels) ----------------

    def clock_rate(self, c: int, bits: np.ndarray) -> float:
        n_v = self.n_v
        if c < self.n_ex:
            s = self.ex_src[c] * n_v + self.ex_v[c]
            t = self.ex_tgt[c] * n_v + self.ex_v[c]
            return float(self.ex_base[c]) * bits[s] * (1 - bits[t])
        c -= self.n_ex
        if c < self.n_coll:
            y = self.coll_site[c] * n_v
            q = self.rule_velocities[self.coll_rule[c]]
            return (self.coll_base * bits[y + q[0]] * bits[y + q[1]]
                    * (1 - bits[y + q[2]]) * (1 - bits[y + q[3]]))
        c -= self.n_coll
        b = self.bnd_site[c] * n_v + self.bnd_v[c]
        return float(self.bnd_rem[c]) if bits[b] else float(self.bnd_ins[c])

    def all_rates(self, bits: np.ndarray) -> np.ndarray:
        return np.array([self.clock_rate(c, bits) for c in range(self.n_clocks)])

    def apply_event(self, c: int, bits: np.ndarray) -> list[int]:
        """Mutates bits; returns the flipped bit indices in kernel order."""
        n_v = self.n_v
        if c < self.n_ex:
            s = self.ex_src[c] * n_v + self.ex_v[c]
            t = self.ex_tgt[c] * n_v + self.ex_v[c]
            bits[s] = 0
            bits[t] = 1
            return [s, t]
        c -= self.n_ex
        if c < self.n_coll:
            y = self.coll_site[c] * n_v
            q = self.rule_velocities[self.coll_rule[c]]
            bits[y + q[0]] = 0
            bits[y + q[1]] = 0
            bits[y + q[2]] = 1
            bits[y + q[3]] = 1
            return [y + q[0], y + q[1], y + q[2], y + q[3]]
        c -= self.n_coll
        b = self.bnd_site[c] * n_v + self.bnd_v[c]
        bits[b] ^= 1
        return [b]

    def describe_clock(self, c: int) -> dict:
        if c < self.n_ex:
            return {"kind": "exclusion", "src": int(self.ex_src[c]),
                    "tgt": int(self.ex_tgt[c]), "v": int(self.ex_v[c]),
                    "base_rate": float(self.ex_base[c])}
        j = c - self.n_ex
        if j < self.n_coll:
            rule = self.model.collisions[int(self.coll_rule[j])]
            return {"kind": "collision", "site": int(self.coll_site[j]),
                    "rule": rule.q}
        j -= self.n_coll
        return {"kind": "boundary", "site": int(self.bnd_site[j]),
                "v": int(self.bnd_v[j]),
                "side": "left" if self.bnd_side[j] == 0 else "right",
                "insert_rate": float(self.bnd_ins[j]),
                "remove_rate": float(self.bnd_rem[j])}


def _merged_displacements(model: VelocityModel, law: JumpLaw, N: int):
    """Per velocity: ordered (z, P_N(z, v)) pairs, symmetric part first."""
    d = model.dim
    neighbors = []
    for j in range(d):
        e = [0] * d
        e[j] = 1
        neighbors.append(tuple(e))
        e = [0] * d
        e[j] = -1
        neighbors.append(tuple(e))
    out = []
    for vidx in range(model.n_velocities):
        drift = {z: p / N for z, p in law.for_velocity(vidx)}
        row = []
        for z in neighbors:
            row.append((z, 0.5 + drift.pop(z, 0.0)))
        for z, p in law.for_velocity(vidx):
            if z in drift:  # not merged into a neighbor slot
                row.append((z, drift[z]))
        out.append(row)
    return out


def _target_site(geom, coords, z, torus: bool) -> int:
    x1 = coords[0] + z[0]
    if torus:
        return geom.site_index((x1,) + tuple(c + dz for c, dz
                                             in zip(coords[1:], z[1:])))
    if not 1 <= x1 <= geom.N - 1:
        return -1
    return geom.site_index((x1,) + tuple(c + dz for c, dz
                                         in zip(coords[1:], z[1:])))


def exclusion_weights(tables: ClockTables, g_at_site, vtilde_k: np.ndarray,
                      scale: float) -> np.ndarray:
    """Observable weights w_c: the change of <pi^k, G> when clock c fires.

    g_at_site: array of G(x/N) per site; vtilde_k: the k-th component of
    (1, v) per velocity; scale = N^-d.  Collision clocks get weight zero
    (collisions conserve every site observable); boundary weights are the
    insertion direction, the kernel flips the sign while the bit is set.
    """
    w = np.zeros(tables.n_clocks)
    live = tables.ex_base > 0
    w[:tables.n_ex][live] = scale * vtilde_k[tables.ex_v[live]] * (
        g_at_site[tables.ex_tgt[live]] - g_at_site[tables.ex_src[live]])
    if tables.n_bnd:
        w[tables.n_ex + tables.n_coll:] = (
            scale * vtilde_k[tables.bnd_v] * g_at_site[tables.bnd_site])
    return w
