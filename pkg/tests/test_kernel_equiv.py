"""The two event-loop backends must realize bit-identical trajectories:
same Philox stream, same tree arithmetic, same update order."""

import numpy as np
import pytest

from velgas import lattice
from velgas._kernel import available_backends
from velgas.dynamics import SimParams, build_tables
from velgas.lattice import LatticeGeom
from velgas.models import build_model_one
from velgas.profiles import InitialProfile
from velgas.thermo import ReservoirProfile

BACKENDS = available_backends()
needs_compiled = pytest.mark.skipif(
    "compiled" not in BACKENDS, reason="compiled kernel not built")


def _scenario(d, N, theta, with_obs=False, seed=13):
    model = build_model_one(d)
    geom = LatticeGeom(d, N)
    alpha = ReservoirProfile.constant(
        model, {i: 0.55 + 0.1 * (i % 2) for i in range(model.n_velocities)})
    beta = ReservoirProfile.constant(model, 0.35)
    params = SimParams(theta=theta, T=0.02, alpha=alpha, beta=beta, seed=seed)
    tables = build_tables(geom, model, params)
    prof = InitialProfile.constant([model.n_velocities / 2 - 0.2]
                                   + [0.05] * d)
    weights = None
    if with_obs:
        rng = np.random.default_rng(3)
        weights = rng.normal(size=(3, tables.n_clocks)) * 1e-3
    return geom, model, params, tables, prof, weights


def _run(cls, geom, model, params, tables, prof, weights, t_end,
         max_events=-1):
    cfg = lattice.sample_local_equilibrium(geom, model, prof,
                                           params.seed, stream=1)
    kern = cls(tables, cfg.bits, params.seed, stream=2)
    if weights is not None:
        kern.install_observables(weights)
    status = kern.advance(t_end, max_events=max_events)
    return {
        "bits": cfg.bits.copy(),
        "t": kern.t,
        "events": int(kern.events),
        "counters": np.array(kern.counters).copy(),
        "status": status,
        "obs": np.array(kern.obs_integral).copy(),
        "leaves": kern.leaf_rates(),
    }


@needs_compiled
@pytest.mark.parametrize("d,N,theta", [(1, 8, 0.0), (1, 12, 0.5),
                                       (1, 8, 2.0), (2, 4, 1.0)])
def test_trajectories_identical(d, N, theta):
    geom, model, params, tables, prof, _ = _scenario(d, N, theta)
    runs = [_run(cls, geom, model, params, tables, prof, None, 0.02)
            for cls in (BACKENDS["python"], BACKENDS["compiled"])]
    a, b = runs
    assert np.array_equal(a["bits"], b["bits"])
    assert a["t"] == b["t"]
    assert a["events"] == b["events"]
    assert np.array_equal(a["counters"], b["counters"])
    np.testing.assert_array_equal(a["leaves"], b["leaves"])


@needs_compiled
def test_observable_integrals_identical():
    geom, model, params, tables, prof, weights = _scenario(1, 10, 0.5,
                                                           with_obs=True)
    a = _run(BACKENDS["python"], geom, model, params, tables, prof,
             weights, 0.02)
    b = _run(BACKENDS["compiled"], geom, model, params, tables, prof,
             weights, 0.02)
    np.testing.assert_array_equal(a["obs"], b["obs"])


@needs_compiled
def test_max_events_stops_identically():
    geom, model, params, tables, prof, _ = _scenario(1, 8, 0.5)
    a = _run(BACKENDS["python"], geom, model, params, tables, prof, None,
             np.inf, max_events=25)
    b = _run(BACKENDS["compiled"], geom, model, params, tables, prof, None,
             np.inf, max_events=25)
    assert a["events"] == b["events"] == 25
    assert a["t"] == b["t"]
    assert np.array_equal(a["bits"], b["bits"])


@pytest.mark.parametrize("cls", list(BACKENDS.values()),
                         ids=list(BACKENDS.keys()))
class TestKernelInvariants:
    def test_rate_table_matches_rebuild_after_many_events(self, cls):
        """Incremental leaf rates equal a from-scratch recomputation."""
        geom, model, params, tables, prof, _ = _scenario(1, 16, 0.5)
        cfg = lattice.sample_local_equilibrium(geom, model, prof,
                                               params.seed, stream=1)
        kern = cls(tables, cfg.bits, params.seed, stream=2)
        n_events = 100_000 if cls.backend == "compiled" else 5_000
        kern.advance(np.inf, max_events=n_events)
        fresh = tables.all_rates(cfg.bits)
        np.testing.assert_allclose(kern.leaf_rates(), fresh, rtol=1e-9,
                                   atol=0.0)
        np.testing.assert_array_equal(kern.leaf_rates(), fresh)

    def test_occupancy_stays_binary_and_conservation(self, cls):
        """Bulk moves conserve the global observable; only boundary flips
        change mass (tracked exactly by the counters)."""
        geom, model, params, tables, prof, _ = _scenario(1, 12, 0.5)
        cfg = lattice.sample_local_equilibrium(geom, model, prof,
                                               params.seed, stream=4)
        cfg0 = cfg.copy()
        kern = cls(tables, cfg.bits, params.seed, stream=5)
        kern.advance(0.01)
        assert set(np.unique(cfg.bits)) <= {0, 1}
        c = np.array(kern.counters)
        net = (c[2] - c[3]) + (c[4] - c[5])
        assert cfg.bits.sum() - cfg0.bits.sum() == net

    def test_absorbed_state(self, cls):
        """A state with zero total rate waits forever (Absorbed status)."""
        from velgas._kernel import STATUS_ABSORBED
        model = build_model_one(1)
        geom = LatticeGeom(1, 6)
        alpha = ReservoirProfile.constant(model, 0.5)
        params = SimParams(theta=600.0, T=1.0, alpha=alpha, beta=alpha,
                           seed=1)
        tables = build_tables(geom, model, params)
        # full lattice: every exclusion move blocked, d=1 has no collisions,
        # boundary rates underflow to exact zero at theta=600
        cfg = lattice.Configuration(geom, model,
                                    np.ones(geom.n_sites * 2, np.uint8))
        kern = cls(tables, cfg.bits, 3, 0)
        assert kern.total_rate == 0.0
        status = kern.advance(0.5)
        assert status == STATUS_ABSORBED
        assert kern.t == 0.5
        assert kern.events == 0


def test_collision_events_fire_d2():
    """d=2 dynamics executes collisions and conserves site observables."""
    cls = available_backends()[max(available_backends())]
    geom, model, params, tables, prof, _ = _scenario(2, 4, 1.0, seed=5)
    cfg = lattice.sample_local_equilibrium(geom, model, prof, 5, stream=1)
    kern = cls(tables, cfg.bits, 5, stream=2)
    kern.advance(0.05)
    assert np.array(kern.counters)[1] > 0
