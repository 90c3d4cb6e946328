"""Exact finite-state checks: stationarity, detailed identities, and the
Monte Carlo law against the matrix exponential."""

import numpy as np
import pytest

from velgas import exact, thermo
from velgas.dynamics import SimParams, build_tables, make_kernel
from velgas.lattice import Configuration, LatticeGeom
from velgas.models import build_model_one
from velgas.rng import derive_stream
from velgas.thermo import ReservoirProfile

MODEL1 = build_model_one(1)
MODEL2 = build_model_one(2)


def _slab_tables(model, N=2, theta=0.5, a=0.55, b=0.45):
    geom = LatticeGeom(model.dim, N)
    alpha = ReservoirProfile.constant(model, a)
    beta = ReservoirProfile.constant(model, b)
    params = SimParams(theta=theta, T=1.0, alpha=alpha, beta=beta, seed=0)
    return build_tables(geom, model, params)


class TestGeneratorMatrix:
    def test_rows_sum_to_zero_offdiag_nonneg(self):
        for tables in (exact.torus_tables(MODEL1, 3), _slab_tables(MODEL2)):
            L = exact.build_generator_matrix(tables)
            dense = L.toarray()
            np.testing.assert_allclose(dense.sum(axis=1), 0.0, atol=1e-12)
            off = dense - np.diag(np.diag(dense))
            assert np.all(off >= 0)

    def test_state_space_guard(self):
        tables = _slab_tables(MODEL2, N=4)   # 3*4 sites * 4 velocities = 48 bits
        with pytest.raises(exact.StateSpaceTooLarge):
            exact.build_generator_matrix(tables)

    def test_torus_stationarity_random_lambda(self):
        """mu_lambda is invariant for the periodic dynamics: ||mu^T L|| = 0."""
        tables = exact.torus_tables(MODEL1, 3)
        L = exact.build_generator_matrix(
            tables, parts=(exact.PART_EXCLUSION, exact.PART_COLLISION))
        rng = np.random.default_rng(0)
        for _ in range(5):
            lam = rng.uniform(-1.5, 1.5, 2)
            mu = exact.grand_canonical_measure(tables, lam)
            assert abs(mu.sum() - 1.0) < 1e-12
            assert exact.stationarity_residual(L, mu) <= 1e-12

    def test_torus_stationarity_with_collisions_d2(self):
        tables = exact.torus_tables(MODEL2, 2)
        L = exact.build_generator_matrix(
            tables, parts=(exact.PART_EXCLUSION, exact.PART_COLLISION))
        mu = exact.grand_canonical_measure(tables, np.array([0.4, -0.3, 0.2]))
        assert exact.stationarity_residual(L, mu) <= 1e-12

    def test_corrupted_rate_breaks_stationarity(self):
        tables = exact.torus_tables(MODEL1, 3)
        live = np.nonzero(tables.ex_base)[0]
        tables.ex_base[live[0]] *= 1.001
        L = exact.build_generator_matrix(
            tables, parts=(exact.PART_EXCLUSION, exact.PART_COLLISION))
        mu = exact.grand_canonical_measure(tables, np.array([0.3, 0.1]))
        assert exact.stationarity_residual(L, mu) > 1e-12

    def test_matched_reservoirs_symmetric_part(self):
        """With equal reservoirs alpha = beta = a, the flat product measure
        is stationary for the boundary part and for the symmetric exclusion;
        only the weak asymmetry tilts it (it is an O(1/N) effect, and exact
        invariance holds on the torus only)."""
        a = 0.55
        tables = _slab_tables(MODEL1, N=3, a=a, b=a)
        mu = exact.product_measure(np.full(tables.n_sites * tables.n_v, a))
        Lb = exact.build_generator_matrix(tables, parts=(exact.PART_BOUNDARY,))
        assert exact.stationarity_residual(Lb, mu) <= 1e-12
        Lfull = exact.build_generator_matrix(tables)
        assert exact.stationarity_residual(Lfull, mu) > 1e-6

    def test_slab_generator_ergodic(self):
        """The full slab generator has a unique, strictly positive
        stationary law (null space of L^T is one-dimensional)."""
        tables = _slab_tables(MODEL1, N=3, a=0.7, b=0.4)
        L = exact.build_generator_matrix(tables).toarray()
        w, vecs = np.linalg.eig(L.T)
        order = np.argsort(np.abs(w))
        assert abs(w[order[0]]) < 1e-9
        assert abs(w[order[1]]) > 1e-6     # spectral gap: unique null vector
        pi = np.real(vecs[:, order[0]])
        pi /= pi.sum()
        assert np.all(pi > 0)
        assert exact.stationarity_residual(
            exact.build_generator_matrix(tables), pi) < 1e-10


class TestCollisionIdentities:
    def test_annihilates_observables(self):
        tables = _slab_tables(MODEL2)
        rng = np.random.default_rng(1)
        g = rng.uniform(-2, 2, tables.n_sites)
        assert exact.collision_annihilation_residual(tables, g) <= 1e-12

    @pytest.mark.parametrize("h_kind", ["constant", "smooth"])
    def test_dirichlet_form_identity(self, h_kind):
        """<L^c sqrt(f), sqrt(f)> = -(1/2) D^c for densities w.r.t. nu_h."""
        tables = _slab_tables(MODEL2)
        if h_kind == "constant":
            h = lambda u: np.array([1.8, 0.1, -0.05])
        else:
            h = lambda u: np.array([2.0 + 0.4 * np.sin(2 * np.pi * u[1]),
                                    0.15 * u[0], 0.1 * u[1]])
        nu = exact.reference_measure(tables, h)
        assert abs(nu.sum() - 1.0) < 1e-12
        rng = np.random.default_rng(2)
        for _ in range(20):
            f = exact.random_density(nu, rng)
            assert abs(nu @ f - 1.0) < 1e-12
            lhs, rhs = exact.collision_dirichlet_identity(tables, nu, f)
            assert abs(lhs - rhs) <= 1e-10
            assert lhs <= 1e-15  # the form is nonpositive

    def test_identity_is_nontrivial(self):
        """Sanity: for generic f both sides are far from zero."""
        tables = _slab_tables(MODEL2)
        nu = exact.reference_measure(tables, lambda u: np.array([2.0, 0.1, 0.0]))
        f = exact.random_density(nu, np.random.default_rng(3))
        lhs, _ = exact.collision_dirichlet_identity(tables, nu, f)
        assert lhs < -1e-3


class TestReferenceSampling:
    def test_sampled_frequencies_match_measure(self):
        """lattice.sample_reference agrees with the enumerated nu_h."""
        from velgas.lattice import sample_reference
        tables = _slab_tables(MODEL1, N=3)
        geom = LatticeGeom(1, 3)
        h = lambda u: np.array([1.0 + 0.4 * (u[0] - 0.5), 0.1])
        nu = exact.reference_measure(tables, h)
        M = 20000
        counts = np.zeros(len(nu))
        for r in range(M):
            cfg = sample_reference(geom, MODEL1, h, 17, stream=r)
            counts[exact.bits_state(cfg.bits)] += 1
        freq = counts / M
        sd = np.sqrt(nu * (1 - nu) / M)
        assert np.all(np.abs(freq - nu) < 5 * np.maximum(sd, 1e-9))


class TestMonteCarloVsExponential:
    @pytest.mark.parametrize("theta", [0.0, 0.7])
    def test_state_occupation_frequencies(self, theta):
        """Kernel trajectories hit the matrix-exponential law at time t."""
        tables = _slab_tables(MODEL1, N=3, theta=theta, a=0.7, b=0.45)
        geom = LatticeGeom(1, 3)
        L = exact.build_generator_matrix(tables)
        t = 0.06
        start = 0b0101
        p0 = np.zeros(16)
        p0[start] = 1.0
        pt = exact.transition_law(L, p0, t)
        M = 20000
        counts = np.zeros(16)
        for r in range(M):
            cfg = Configuration(geom, MODEL1, exact.state_bits(start, 4))
            kern = make_kernel(tables, cfg, 23, stream=derive_stream(r))
            kern.advance(t)
            counts[exact.bits_state(cfg.bits)] += 1
        freq = counts / M
        sd = np.sqrt(np.maximum(pt * (1 - pt), 1e-12) / M)
        z = np.abs(freq - pt) / sd
        assert float(z.max()) < 5.0

    def test_collision_dynamics_matches_exponential(self):
        """d=2 slab (256 states, collisions active): the kernel's law at
        time t matches the matrix exponential, so collision events are
        executed with exactly the enumerated rates."""
        tables = _slab_tables(MODEL2, N=2, theta=0.5, a=0.6, b=0.45)
        geom = LatticeGeom(2, 2)
        L = exact.build_generator_matrix(tables)
        t = 0.05
        start = 0b00111001
        p0 = np.zeros(256)
        p0[start] = 1.0
        pt = exact.transition_law(L, p0, t)
        M = 12000
        counts = np.zeros(256)
        for r in range(M):
            cfg = Configuration(geom, MODEL2, exact.state_bits(start, 8))
            kern = make_kernel(tables, cfg, 29, stream=derive_stream(5, r))
            kern.advance(t)
            counts[exact.bits_state(cfg.bits)] += 1
        freq = counts / M
        sd = np.sqrt(np.maximum(pt * (1 - pt), 1e-12) / M)
        z = np.abs(freq - pt) / sd
        # 256 states: allow the expected extremes of that many z-scores
        assert float(z.max()) < 5.5

    def test_transition_law_guard(self):
        tables = _slab_tables(MODEL1, N=8)   # 14 bits -> 16384 states
        L = exact.build_generator_matrix(tables)
        with pytest.raises(exact.StateSpaceTooLarge):
            exact.transition_law(L, np.ones(L.shape[0]) / L.shape[0], 0.1)


class TestGeneratorWrapper:
    def test_torus_wrapper(self):
        from velgas.clocks import TorusGeom
        L = exact.generator_matrix(TorusGeom(1, 3), MODEL1, torus=True)
        tables = exact.torus_tables(MODEL1, 3)
        ref = exact.build_generator_matrix(
            tables, parts=(exact.PART_EXCLUSION, exact.PART_COLLISION))
        assert (L != ref).nnz == 0

    def test_full_wrapper(self):
        geom = LatticeGeom(1, 3)
        alpha = ReservoirProfile.constant(MODEL1, 0.6)
        params = SimParams(theta=0.5, T=1.0, alpha=alpha, beta=alpha, seed=0)
        L = exact.generator_matrix(geom, MODEL1, params)
        np.testing.assert_allclose(np.asarray(L.sum(axis=1)).ravel(), 0.0,
                                   atol=1e-12)
        with pytest.raises(ValueError):
            exact.generator_matrix(geom, MODEL1)


class TestMeasureHelpers:
    def test_product_measure_normalized(self):
        th = np.array([0.3, 0.8, 0.5])
        mu = exact.product_measure(th)
        assert abs(mu.sum() - 1.0) < 1e-12
        # P(bit pattern 101) = th0 (1-th1) th2
        assert abs(mu[0b101] - 0.3 * 0.2 * 0.5) < 1e-15

    def test_grand_canonical_matches_theta(self):
        tables = exact.torus_tables(MODEL1, 2)
        lam = np.array([0.3, -0.2])
        mu = exact.grand_canonical_measure(tables, lam)
        th = thermo.theta_all(lam, MODEL1)
        empty = mu[0]
        expect = np.prod([(1 - th[b % 2]) for b in range(4)])
        assert abs(empty - expect) < 1e-14
