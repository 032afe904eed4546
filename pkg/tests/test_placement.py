import numpy as np
import pytest

from rmws.placement import (GibbsConfig, ScoreCache, acceptance_probability, gibbs_optimize,
                            is_feasible_placement, propose, storage_feasible_rows)
from rmws.verification import brute_force_placement

from conftest import make_config, snapshot


class TestPropose:
    def test_single_service_rows_are_equally_likely(self):
        cfg = make_config(M=(100.0,), m=(10.0,))
        rng = np.random.default_rng(0)
        rows = [int(propose(np.zeros((1, 1), int), rng, cfg).row[0]) for _ in range(4000)]
        assert np.mean(rows) == pytest.approx(0.5, abs=0.03)

    def test_storage_infeasible_rows_are_excluded(self):
        cfg = make_config(M=(15.0,), m=(10.0, 20.0), c=(0.2, 0.2))
        space = {tuple(r) for r in storage_feasible_rows(0, cfg)}
        assert space == {(0, 0), (1, 0)}
        rng = np.random.default_rng(1)
        drawn = {tuple(propose(np.zeros((1, 2), int), rng, cfg).row) for _ in range(200)}
        assert drawn == space

    def test_drawing_the_current_row_is_a_noop(self):
        cfg = make_config(M=(5.0,), m=(10.0,))  # only the empty row fits
        p = propose(np.zeros((1, 1), int), np.random.default_rng(0), cfg)
        assert p.noop and p.row[0] == 0

    def test_seeded_sequence_repeats(self):
        cfg = make_config(F=(100.0,) * 3, M=(100.0,) * 3, Pm=(20.0,) * 3, Pf=(20.0,) * 3,
                          m=(10.0,) * 4, c=(0.2,) * 4)
        X = np.zeros((3, 4), int)

        def seq():
            rng = np.random.default_rng(42)
            return [(p.server, tuple(p.row)) for p in (propose(X, rng, cfg) for _ in range(50))]

        assert seq() == seq()

    def test_servers_are_uniform(self):
        cfg = make_config(F=(100.0,) * 4, M=(100.0,) * 4, Pm=(20.0,) * 4, Pf=(20.0,) * 4)
        rng = np.random.default_rng(3)
        counts = np.bincount([propose(np.zeros((4, 1), int), rng, cfg).server for _ in range(8000)], minlength=4)
        assert np.all(np.abs(counts / 8000 - 0.25) < 0.02)

    def test_rejection_path_for_wide_rows(self):
        S = 20
        cfg = make_config(M=(60.0,), m=(10.0,) * S, c=(0.2,) * S, budget=(100.0,))
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = propose(np.zeros((1, S), int), rng, cfg)
            assert p.row @ cfg.m <= 60.0


class TestFeasibility:
    def test_empty_row(self):
        assert is_feasible_placement([0], 0, make_config())

    def test_storage_bound_is_inclusive(self):
        cfg = make_config(M=(10.0,), m=(10.0,), Pm=(20.0,), budget=(30.0,))
        assert is_feasible_placement([1], 0, cfg)

    def test_budget_eaten_by_storage_is_infeasible(self):
        cfg = make_config(M=(10.0,), m=(10.0,), Pm=(20.0,), budget=(20.0,))
        assert not is_feasible_placement([1], 0, cfg)


class TestAcceptance:
    def test_equal_energies(self):
        assert acceptance_probability(5.0, 5.0, 0.001) == 0.5

    def test_one_temperature_uphill(self):
        assert acceptance_probability(1.001, 1.0, 0.001) == pytest.approx(1 / (1 + np.e), rel=1e-9)

    def test_far_downhill_is_certain(self):
        assert acceptance_probability(0.0, 10.0, 0.001) == pytest.approx(1.0)

    def test_no_overflow(self):
        assert acceptance_probability(1e6, 0.0, 1e-3) == 0.0
        assert acceptance_probability(-1e6, 0.0, 1e-3) == 1.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GibbsConfig(omega=0.0)
        with pytest.raises(ValueError):
            GibbsConfig(max_iters=0)


def one_by_one():
    cfg = make_config(F=(100.0,), M=(50.0,), m=(10.0,), c=(0.2,), phic=(0.2,))
    return cfg, snapshot([[18_000]], dt=1800.0)


def test_single_service_that_pays_off_is_placed():
    cfg, w = one_by_one()
    trace = gibbs_optimize(cfg, w, GibbsConfig(rng_seed=0, max_iters=50, patience=20))
    x_best, _ = brute_force_placement(cfg, w)
    np.testing.assert_array_equal(trace.x, [[1]])
    np.testing.assert_array_equal(trace.x, x_best)


def test_hot_chain_is_a_random_walk(small_system):
    cfg, w, _ = small_system
    trace = gibbs_optimize(cfg, w, GibbsConfig(omega=1e6, max_iters=1000, rng_seed=0, chain_mode=True))
    moves = [s for s in trace.steps if s.feasible]
    rate = np.mean([s.accepted for s in moves])
    assert 0.45 <= rate <= 0.55


def test_trace_invariants(small_system):
    cfg, w, _ = small_system
    trace = gibbs_optimize(cfg, w, GibbsConfig(rng_seed=5, max_iters=300))
    after = np.array([s.theta_after for s in trace.steps])
    assert trace.theta == pytest.approx(min(after.min(), trace.steps[0].theta_before))
    assert trace.iterations <= 300
    for step in trace.steps:
        if step.accepted:
            assert step.feasible and is_feasible_placement(step.candidate, step.server, cfg)
    best_so_far = np.minimum.accumulate(after)
    assert np.all(np.diff(best_so_far) <= 0)


def test_patience_stops_the_chain(small_system):
    cfg, w, _ = small_system
    trace = gibbs_optimize(cfg, w, GibbsConfig(rng_seed=1, max_iters=10_000, patience=30))
    assert trace.iterations < 10_000


def test_same_seed_same_bytes(small_system):
    cfg, w, _ = small_system
    a = gibbs_optimize(cfg, w, GibbsConfig(rng_seed=9, max_iters=80)).to_json()
    b = gibbs_optimize(cfg, w, GibbsConfig(rng_seed=9, max_iters=80)).to_json()
    assert a == b


def test_cache_is_shared_and_counts_misses(small_system):
    cfg, w, _ = small_system
    cache = ScoreCache()
    gibbs_optimize(cfg, w, GibbsConfig(rng_seed=2, max_iters=60), cache=cache)
    misses = cache.misses
    gibbs_optimize(cfg, w, GibbsConfig(rng_seed=2, max_iters=60), cache=cache)
    assert cache.misses == misses and len(cache) == misses


def test_rejects_infeasible_start():
    cfg = make_config(M=(10.0,), m=(10.0,), Pm=(20.0,), budget=(20.0,))
    with pytest.raises(ValueError):
        gibbs_optimize(cfg, snapshot([[10]]), initial=np.ones((1, 1), int))
