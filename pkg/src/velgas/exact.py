"""Exact finite-state checks for tiny systems.

For lattices with at most 20 occupancy bits the full state space is
enumerable, and the generator becomes an explicit rate matrix assembled
from the very same clock tables that drive the kinetic Monte Carlo
kernels.  This single source of rates makes the algebraic checks sharp:

  * stationarity of the grand-canonical product measures on the torus,
  * the collision generator annihilating empirical mass/momentum
    observables,
  * the Dirichlet-form identity <L^c sqrt(f), sqrt(f)> = -(1/2) D^c
    against arbitrary reference product measures,
  * agreement of Monte Carlo state-occupation frequencies with the
    matrix-exponential law.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import thermo
from .clocks import ClockTables, TorusGeom
from .jumps import default_jump_law
from .models import VelocityModel

MAX_BITS = 20


class StateSpaceTooLarge(ValueError):
    pass


def _check_size(tables: ClockTables) -> int:
    n_bits = tables.n_sites * tables.n_v
    if n_bits > MAX_BITS:
        raise StateSpaceTooLarge(
            f"{n_bits} occupancy bits give 2^{n_bits} states; limit is 2^{MAX_BITS}")
    return n_bits


def state_bits(state: int, n_bits: int) -> np.ndarray:
    return np.array([(state >> b) & 1 for b in range(n_bits)], dtype=np.uint8)


def bits_state(bits) -> int:
    s = 0
    for b, val in enumerate(bits):
        if val:
            s |= 1 << b
    return s


PART_EXCLUSION = "exclusion"
PART_COLLISION = "collision"
PART_BOUNDARY = "boundary"
ALL_PARTS = (PART_EXCLUSION, PART_COLLISION, PART_BOUNDARY)


def build_generator_matrix(tables: ClockTables,
                           parts=ALL_PARTS) -> sp.csr_matrix:
    """Explicit rate matrix of the selected generator parts over the full
    configuration space (rows sum to zero, off-diagonals nonnegative)."""
    n_bits = _check_size(tables)
    n_states = 1 << n_bits
    clock_sets = {
        PART_EXCLUSION: range(0, tables.n_ex),
        PART_COLLISION: range(tables.n_ex, tables.n_ex + tables.n_coll),
        PART_BOUNDARY: range(tables.n_ex + tables.n_coll, tables.n_clocks),
    }
    clocks = [c for p in parts for c in clock_sets[p]]
    rows, cols, vals = [], [], []
    for s in range(n_states):
        bits = state_bits(s, n_bits)
        diag = 0.0
        for c in clocks:
            r = tables.clock_rate(c, bits)
            if r <= 0.0:
                continue
            after = bits.copy()
            tables.apply_event(c, after)
            s2 = bits_state(after)
            rows.append(s)
            cols.append(s2)
            vals.append(r)
            diag -= r
        rows.append(s)
        cols.append(s)
        vals.append(diag)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_states, n_states))


def torus_tables(model: VelocityModel, N: int, law=None) -> ClockTables:
    """Clock tables for the fully periodic dynamics (no reservoirs)."""
    if law is None:
        law = default_jump_law(model)
    return ClockTables(TorusGeom(model.dim, N), model, law, theta=0.0)


def generator_matrix(geom, model: VelocityModel, params=None,
                     torus: bool = False) -> sp.csr_matrix:
    """Rate matrix of the full dynamics on ``geom``, or of the periodic
    bulk dynamics (exclusion + collisions, no reservoirs) when ``torus``.

    Convenience wrapper over the clock tables; ``params`` supplies theta
    and the reservoir profiles for the non-torus case.
    """
    if torus:
        tables = torus_tables(model, geom.N,
                              law=None if params is None else params.law)
        return build_generator_matrix(
            tables, parts=(PART_EXCLUSION, PART_COLLISION))
    if params is None:
        raise ValueError("params required for the boundary-driven generator")
    from .dynamics import build_tables
    tables = build_tables(geom, model, params)
    return build_generator_matrix(tables)


def product_measure(thetas_per_bit: np.ndarray) -> np.ndarray:
    """Probability vector of the product Bernoulli measure over states."""
    n_bits = len(thetas_per_bit)
    mu = np.ones(1 << n_bits)
    for b, th in enumerate(thetas_per_bit):
        states = np.arange(1 << n_bits)
        bit = (states >> b) & 1
        mu *= np.where(bit, th, 1.0 - th)
    return mu


def grand_canonical_measure(tables: ClockTables, lam) -> np.ndarray:
    """mu_lambda over the full state space (homogeneous product measure)."""
    n_bits = _check_size(tables)
    th = thermo.theta_all(lam, tables.model)
    per_bit = np.array([th[b % tables.n_v] for b in range(n_bits)])
    return product_measure(per_bit)


def reference_measure(tables: ClockTables, h) -> np.ndarray:
    """nu^N_h: product measure with site marginals m_{Lambda(h(x/N))}."""
    n_bits = _check_size(tables)
    pos = tables.geom.positions()
    per_bit = np.empty(n_bits)
    for site in range(tables.n_sites):
        lam = thermo.inverse_map(np.asarray(h(pos[site]), dtype=float),
                                 tables.model)
        th = thermo.theta_all(lam, tables.model)
        per_bit[site * tables.n_v:(site + 1) * tables.n_v] = th
    return product_measure(per_bit)


def stationarity_residual(L: sp.csr_matrix, mu: np.ndarray) -> float:
    """max-norm of mu^T L; zero iff mu is invariant."""
    return float(np.max(np.abs(L.T @ mu)))


def observable_vector(tables: ClockTables, g_at_site: np.ndarray,
                      component: int) -> np.ndarray:
    """<pi^k, G> evaluated on every state: N^-d sum_x G(x/N) I_k(eta_x)."""
    n_bits = _check_size(tables)
    vt = tables.model.vtilde[:, component]
    weight_per_bit = np.array([
        g_at_site[b // tables.n_v] * vt[b % tables.n_v]
        for b in range(n_bits)]) / tables.N ** tables.d
    states = np.arange(1 << n_bits)
    out = np.zeros(1 << n_bits)
    for b in range(n_bits):
        out += ((states >> b) & 1) * weight_per_bit[b]
    return out


def collision_annihilation_residual(tables: ClockTables,
                                    g_at_site: np.ndarray) -> float:
    """max over components and states of |N^2 L^c <pi^k, G>|; the collision
    generator conserves every site's mass and momentum so this vanishes."""
    Lc = build_generator_matrix(tables, parts=(PART_COLLISION,))
    worst = 0.0
    for k in range(tables.d + 1):
        obs = observable_vector(tables, g_at_site, k)
        worst = max(worst, float(np.max(np.abs(Lc @ obs))))
    return worst


def collision_dirichlet_identity(tables: ClockTables, nu: np.ndarray,
                                 f: np.ndarray) -> tuple[float, float]:
    """Both sides of <L^c sqrt(f), sqrt(f)>_nu = -(1/2) D^c_nu(sqrt(f)).

    f must be a density with respect to nu.  Returns (lhs, rhs); the
    identity is exact because collisions preserve the one-site
    exponential-family weights.
    """
    n_bits = _check_size(tables)
    sqrtf = np.sqrt(f)
    Lc = build_generator_matrix(tables, parts=(PART_COLLISION,))
    lhs = float(nu @ (sqrtf * (Lc @ sqrtf)))
    dsum = 0.0
    clocks = range(tables.n_ex, tables.n_ex + tables.n_coll)
    for s in range(1 << n_bits):
        bits = state_bits(s, n_bits)
        for c in clocks:
            r = tables.clock_rate(c, bits)
            if r <= 0.0:
                continue
            after = bits.copy()
            tables.apply_event(c, after)
            s2 = bits_state(after)
            dsum += nu[s] * r * (sqrtf[s2] - sqrtf[s]) ** 2
    return lhs, -0.5 * dsum


def random_density(nu: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Strictly positive random density with respect to nu."""
    g = rng.uniform(0.1, 2.0, size=nu.shape)
    return g / float(nu @ g)


def transition_law(L: sp.csr_matrix, p0: np.ndarray, t: float) -> np.ndarray:
    """Distribution at time t from initial law p0 (dense matrix exponential)."""
    from scipy.linalg import expm
    n = L.shape[0]
    if n > 4096:
        raise StateSpaceTooLarge(f"dense exponential limited to 4096 states, got {n}")
    return p0 @ expm(L.toarray() * t)
