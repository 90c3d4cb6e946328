"""Dynamics driver: jump laws, clock rates, trajectory statistics against
exact single-particle oracles, event accounting, the Dynkin martingale."""

import numpy as np
import pytest
from scipy import stats

from velgas import lattice
from velgas.clocks import ClockTables
from velgas.dynamics import (SimParams, build_tables, dynkin_martingale_check,
                             make_kernel, simulate, step)
from velgas.jumps import (JumpLawError, NonLatticeVelocity, default_jump_law,
                          load_jump_law, validate_jump_law)
from velgas.lattice import Configuration, LatticeGeom, empirical_profile
from velgas.models import build_model_one, build_model_two
from velgas.profiles import InitialProfile
from velgas.rng import derive_stream
from velgas.thermo import ReservoirProfile

MODEL1 = build_model_one(1)


def _params(theta=0.5, T=0.05, a=None, b=None, seed=1, snapshots=()):
    alpha = ReservoirProfile.constant(MODEL1, a if a is not None else 0.5)
    beta = ReservoirProfile.constant(MODEL1, b if b is not None else 0.5)
    return SimParams(theta=theta, T=T, alpha=alpha, beta=beta, seed=seed,
                     snapshots=snapshots)


class TestJumpLaw:
    def test_default_d1(self):
        law = default_jump_law(MODEL1)
        vp = MODEL1.index_of((1.0,))
        assert law.for_velocity(vp) == (((1,), 1.0),)
        assert law.range_bound == 1

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_default_mean_is_velocity(self, d):
        model = build_model_one(d)
        law = default_jump_law(model)
        for i, v in enumerate(model.velocities):
            mean = sum(np.asarray(z) * p for z, p in law.for_velocity(i))
            np.testing.assert_allclose(mean, v, atol=1e-15)

    def test_non_lattice_velocity_rejected(self):
        with pytest.raises(NonLatticeVelocity):
            default_jump_law(build_model_two())

    def test_wrong_mean_names_velocity(self, tmp_path):
        path = tmp_path / "law.json"
        path.write_text('[{"v": [1.0], "steps": [[[1], 0.5], [[-1], 0.5]]},'
                        ' {"v": [-1.0], "steps": [[[-1], 1.0]]}]')
        with pytest.raises(JumpLawError, match=r"\(1\.0,\)"):
            load_jump_law(MODEL1, path)

    def test_valid_spread_law(self):
        # mean +1 via 1/2 * (0 displacement impossible) -> (2, 1/2), nothing else sums
        law = validate_jump_law(MODEL1, [
            [((2,), 0.5), ((-1,), 0.25), ((1,), 0.25)],   # mean = 1
            [((-2,), 0.5), ((1,), 0.25), ((-1,), 0.25)],  # mean = -1
        ])
        assert law.range_bound == 2

    def test_probability_errors(self):
        with pytest.raises(JumpLawError, match="sum"):
            validate_jump_law(MODEL1, [[((1,), 0.9)], [((-1,), 1.0)]])
        with pytest.raises(JumpLawError, match="zero displacement"):
            validate_jump_law(MODEL1, [[((0,), 1.0)], [((-1,), 1.0)]])


class TestClockRates:
    def test_merged_neighbor_rates(self):
        """Clock base rates realize N^2 P_N: 1/2 each neighbor plus 1/N on
        the displacement the law selects."""
        N = 10
        geom = LatticeGeom(1, N)
        tables = build_tables(geom, MODEL1, _params())
        vp = MODEL1.index_of((1.0,))
        site = geom.site_index((5,))
        rates = {}
        for c in range(tables.n_ex):
            if tables.ex_src[c] == site and tables.ex_v[c] == vp:
                rates[int(tables.ex_tgt[c])] = float(tables.ex_base[c])
        assert rates[geom.site_index((6,))] == N * N * (0.5 + 1.0 / N)
        assert rates[geom.site_index((4,))] == N * N * 0.5

    def test_exit_moves_suppressed(self):
        geom = LatticeGeom(1, 6)
        tables = build_tables(geom, MODEL1, _params())
        vp = MODEL1.index_of((1.0,))
        right_edge = geom.site_index((5,))
        for c in range(tables.n_ex):
            if tables.ex_src[c] == right_edge and tables.ex_v[c] == vp \
                    and tables.ex_tgt[c] == right_edge:
                assert tables.ex_base[c] == 0.0
                break
        else:
            pytest.fail("suppressed edge clock not found")

    def test_blocked_jump_rate_zero(self):
        geom = LatticeGeom(1, 6)
        tables = build_tables(geom, MODEL1, _params())
        cfg = Configuration(geom, MODEL1)
        vp = MODEL1.index_of((1.0,))
        cfg.set((2,), vp, 1)
        cfg.set((3,), vp, 1)   # target occupied: exclusion suppresses
        for c in range(tables.n_ex):
            if (tables.ex_src[c] == geom.site_index((2,))
                    and tables.ex_tgt[c] == geom.site_index((3,))
                    and tables.ex_v[c] == vp):
                assert tables.clock_rate(c, cfg.bits) == 0.0

    def test_boundary_insertion_rate(self):
        """Empty boundary site: insertion fires at N^{2-theta} alpha_v."""
        N, theta = 8, 0.7
        geom = LatticeGeom(1, N)
        params = _params(theta=theta, a={0: 0.8, 1: 0.6}, b=0.3)
        tables = build_tables(geom, MODEL1, params)
        cfg = Configuration(geom, MODEL1)
        damp = float(N) ** (2 - theta)
        vals = {}
        for j in range(tables.n_bnd):
            c = tables.n_ex + tables.n_coll + j
            key = (int(tables.bnd_side[j]), int(tables.bnd_v[j]))
            vals[key] = tables.clock_rate(c, cfg.bits)
        assert abs(vals[(0, 0)] - damp * 0.8) < 1e-12
        assert abs(vals[(0, 1)] - damp * 0.6) < 1e-12
        assert abs(vals[(1, 0)] - damp * 0.3) < 1e-12

    def test_reservoirs_required_off_torus(self):
        geom = LatticeGeom(1, 6)
        with pytest.raises(ValueError, match="reservoir"):
            ClockTables(geom, MODEL1, default_jump_law(MODEL1), 0.5)


class TestSingleParticle:
    def test_displacement_moments(self):
        """One tagged particle in a huge damped system: mean displacement t
        (drift p/N at speed N^2) and variance t(1 + 1/N) macroscopically."""
        N, T, M = 40, 0.008, 1500
        geom = LatticeGeom(1, N)
        params = _params(theta=600.0, T=T)  # reservoirs frozen
        tables = build_tables(geom, MODEL1, params)
        vp = MODEL1.index_of((1.0,))
        start = geom.site_index((N // 2,))
        disp = []
        for r in range(M):
            cfg = Configuration(geom, MODEL1)
            cfg.site_matrix[start, vp] = 1
            kern = make_kernel(tables, cfg, 99, stream=r)
            kern.advance(T)
            pos = int(np.nonzero(cfg.site_matrix[:, vp])[0][0])
            disp.append((pos - start) / N)
        disp = np.array(disp)
        mean_th = T          # velocity-1 drift
        var_th = T * (1.0 + 1.0 / N)
        assert abs(disp.mean() - mean_th) < 4 * np.sqrt(var_th / M)
        lo = var_th * (1 - 4 * np.sqrt(2.0 / M))
        hi = var_th * (1 + 4 * np.sqrt(2.0 / M))
        assert lo < disp.var(ddof=1) < hi


class TestSimulate:
    def test_snapshots_and_determinism(self):
        geom = LatticeGeom(1, 16)
        params = _params(T=0.03, snapshots=(0.01, 0.03), seed=5)
        prof = InitialProfile.constant([1.0, 0.0])
        outs = []
        for _ in range(2):
            cfg = lattice.sample_local_equilibrium(geom, MODEL1, prof, 5, 0)
            snaps, kern = simulate(geom, MODEL1, params, cfg, stream=1)
            outs.append((tuple(t for t, _ in snaps),
                         np.concatenate([p.ravel() for _, p in snaps]),
                         kern.events))
        assert outs[0][0] == (0.01, 0.03)
        np.testing.assert_array_equal(outs[0][1], outs[1][1])
        assert outs[0][2] == outs[1][2]

    def test_huge_theta_freezes_mass(self):
        """Boundary events have expected count ~ N^{2-theta}: none occur."""
        geom = LatticeGeom(1, 16)
        params = _params(theta=1e6, T=0.05, seed=2)
        prof = InitialProfile.constant([1.0, 0.0])
        cfg = lattice.sample_local_equilibrium(geom, MODEL1, prof, 2, 0)
        mass0 = cfg.bits.sum()
        snaps, kern = simulate(geom, MODEL1, params, cfg, stream=3)
        c = np.array(kern.counters)
        assert c[2:].sum() == 0
        assert cfg.bits.sum() == mass0

    def test_matched_reservoirs_stay_flat(self):
        """alpha = beta = a with flat initial data: the fitted slope of the
        mean density profile stays within its confidence band."""
        geom = LatticeGeom(1, 32)
        a = 0.45
        params = _params(theta=0.0, T=0.05, a=a, b=a, seed=8)
        prof = InitialProfile.constant([2 * a, 0.0])
        tables = build_tables(geom, MODEL1, params)
        M = 60
        slopes = []
        x = geom.axis_coordinates()
        for r in range(M):
            cfg = lattice.sample_local_equilibrium(
                geom, MODEL1, prof, 8, stream=derive_stream(r, 0))
            kern = make_kernel(tables, cfg, 8, stream=derive_stream(r, 1))
            kern.advance(params.T)
            y = empirical_profile(cfg)[:, 0]
            slopes.append(np.polyfit(x, y, 1)[0])
        slopes = np.array(slopes)
        assert abs(slopes.mean()) < 4 * slopes.std(ddof=1) / np.sqrt(M)

    def test_event_count_accounting(self):
        """Total events within 20% of the a-priori rate estimate computed
        from the stationary occupation factors."""
        N, T, a = 64, 0.05, 0.5
        geom = LatticeGeom(1, N)
        params = _params(theta=0.0, T=T, a=a, b=a, seed=4)
        prof = InitialProfile.constant([2 * a, 0.0])
        tables = build_tables(geom, MODEL1, params)
        # exclusion: sum over live clocks of base * E[eta(1-eta)] = base*a(1-a);
        # boundary: 2 sites x 2 velocities at N^2 * (a(1-eta)+(1-a)eta) -> mean
        # rate N^2 * 2a(1-a) each
        ex_rate = float(tables.ex_base.sum()) * a * (1 - a)
        bnd_rate = (tables.bnd_ins + tables.bnd_rem).sum() * a * (1 - a) * 2
        expected = (ex_rate + bnd_rate) * T
        cfg = lattice.sample_local_equilibrium(geom, MODEL1, prof, 4, 0)
        _, kern = simulate(geom, MODEL1, params, cfg, stream=9)
        assert abs(kern.events - expected) < 0.2 * expected

    def test_reversed_velocity_coupling(self):
        """Relabeling v -> -v with swapped reservoir densities mirrors the
        momentum profiles in law (KS test on the total momentum)."""
        geom = LatticeGeom(1, 24)
        pa = _params(theta=0.0, T=0.03, a={0: 0.8, 1: 0.5},
                     b={0: 0.4, 1: 0.6}, seed=6)
        pb = _params(theta=0.0, T=0.03, a={0: 0.5, 1: 0.8},
                     b={0: 0.6, 1: 0.4}, seed=60)
        ta = build_tables(geom, MODEL1, pa)
        tb = build_tables(geom, MODEL1, pb)
        prof_a = InitialProfile.constant([1.0, 0.2])
        prof_b = InitialProfile.constant([1.0, -0.2])
        m_a, m_b = [], []
        for r in range(220):
            ca = lattice.sample_local_equilibrium(geom, MODEL1, prof_a, 6,
                                                  stream=derive_stream(r, 0))
            ka = make_kernel(ta, ca, 6, stream=derive_stream(r, 1))
            ka.advance(pa.T)
            m_a.append(empirical_profile(ca)[:, 1].sum())
            cb = lattice.sample_local_equilibrium(geom, MODEL1, prof_b, 60,
                                                  stream=derive_stream(r, 2))
            kb = make_kernel(tb, cb, 60, stream=derive_stream(r, 3))
            kb.advance(pb.T)
            m_b.append(-empirical_profile(cb)[:, 1].sum())
        assert stats.ks_2samp(m_a, m_b).pvalue > 0.01


class TestStep:
    def test_single_event(self):
        geom = LatticeGeom(1, 8)
        params = _params(theta=0.0, seed=3)
        prof = InitialProfile.constant([1.0, 0.0])
        cfg = lattice.sample_local_equilibrium(geom, MODEL1, prof, 3, 0)
        before = cfg.bits.copy()
        event, elapsed, kern = step(geom, MODEL1, params, cfg)
        assert elapsed > 0
        assert event["kind"] in ("exclusion", "collision", "boundary")
        changed = int(np.sum(before != cfg.bits))
        assert changed in (1, 2, 4)
        # subsequent steps reuse the kernel
        event2, elapsed2, kern2 = step(geom, MODEL1, params, cfg, kernel=kern)
        assert kern2 is kern and kern.events == 2

    def test_absorbed(self):
        geom = LatticeGeom(1, 6)
        params = _params(theta=600.0, seed=3)
        cfg = Configuration(geom, MODEL1,
                            np.ones(geom.n_sites * 2, np.uint8))
        event, elapsed, _ = step(geom, MODEL1, params, cfg)
        assert event == "absorbed"
        assert elapsed == np.inf


class TestDynkin:
    def test_no_replicas_rejected(self):
        geom = LatticeGeom(1, 8)
        with pytest.raises(ValueError):
            dynkin_martingale_check(geom, MODEL1, _params(), [lambda u: 1.0],
                                    InitialProfile.constant([1.0, 0.0]),
                                    replicas=0)

    def test_mean_zero_small(self):
        """Full dynamics, d=1: replica mean of M_t within 4 stderr of zero
        (4 sigma keeps the false-failure rate negligible at 60 replicas)."""
        geom = LatticeGeom(1, 16)
        params = _params(theta=0.5, T=0.02, a={0: 0.7, 1: 0.5}, b=0.4,
                         seed=12)
        stats_list = dynkin_martingale_check(
            geom, MODEL1, params,
            [lambda u: float(np.sin(np.pi * u[0])),
             lambda u: float(u[0] * (1 - u[0]))],
            InitialProfile.constant([1.0, 0.0]),
            replicas=60, times=[0.01, 0.02])
        for s in stats_list:
            assert s.mean.shape == (2, 2)
            assert np.all(np.abs(s.mean) <= 4.0 * s.stderr)

    def test_collisions_carry_zero_weight(self):
        """d=2: the generator term of <pi, G> gets no collision
        contribution (exact annihilation), so the martingale stays mean
        zero with collisions active."""
        model = build_model_one(2)
        geom = LatticeGeom(2, 6)
        alpha = ReservoirProfile.constant(model, 0.6)
        beta = ReservoirProfile.constant(model, 0.4)
        params = SimParams(theta=1.0, T=0.01, alpha=alpha, beta=beta, seed=21)
        stats_list = dynkin_martingale_check(
            geom, model, params, [lambda u: float(np.cos(np.pi * u[0]))],
            InitialProfile.constant([2.0, 0.0, 0.0]),
            replicas=50, times=[0.01])
        s = stats_list[0]
        assert np.all(np.abs(s.mean) <= 4.0 * s.stderr)


class TestHigherDimensions:
    @pytest.mark.parametrize("d", [2, 3])
    def test_simulation_runs_and_conserves(self, d):
        """d in {2, 3}: collisions fire, bulk conserves the observable
        vector up to the exact boundary counters."""
        model = build_model_one(d)
        geom = LatticeGeom(d, 4)
        alpha = ReservoirProfile.constant(model, 0.6)
        beta = ReservoirProfile.constant(model, 0.4)
        params = SimParams(theta=1.0, T=0.08, alpha=alpha, beta=beta, seed=31)
        prof = InitialProfile.constant([model.n_velocities / 2.0] + [0.0] * d)
        cfg = lattice.sample_local_equilibrium(
            geom, model, lambda u: np.array([model.n_velocities / 2.0] + [0.0] * d),
            31, 0)
        mass0 = int(cfg.bits.sum())
        tables = build_tables(geom, model, params)
        kern = make_kernel(tables, cfg, 31, stream=1)
        kern.advance(params.T)
        c = np.array(kern.counters)
        assert kern.events > 0
        if d >= 2:
            assert c[1] > 0   # collisions occurred
        net = (c[2] - c[3]) + (c[4] - c[5])
        assert int(cfg.bits.sum()) - mass0 == net
