import numpy as np
import pytest

from rmws.baselines import (BaselineKind, baseline_frame_decision, baseline_slot_schedule,
                            cover_services, greedy_fill, local_caps, popularity_order)
from rmws.domain import check_constraints, objective
from rmws.exceptions import InfeasibleDemand
from rmws.inner import solve_inner
from rmws.instances import table1_config
from rmws.placement import GibbsConfig
from rmws.provisioning import gammas
from rmws.workload import frame_forecast, generate_trace

from conftest import make_config, snapshot

FAST = GibbsConfig(max_iters=120, patience=40, rng_seed=0)


def decide(kind, cfg, w):
    return baseline_frame_decision(kind, cfg, w, gibbs=FAST)


def test_popularity_order_breaks_ties_by_index():
    np.testing.assert_array_equal(popularity_order([1, 3, 3, 0]), [1, 2, 0, 3])


def test_cloud_only_places_nothing(small_system):
    cfg, w, _ = small_system
    X, Y, info = decide("CPO", cfg, w)
    assert not X.any() and not Y.any() and info["iterations"] == 0
    res = baseline_slot_schedule("CPO", X, Y, w, cfg)
    np.testing.assert_array_equal(res.z[-1], 1.0)


def test_cloud_only_ignores_edge_parameters(small_system):
    cfg, w, _ = small_system
    weak = table1_config(3, n_servers=2, n_services=3, compute_scale=0.2, storage_scale=0.5)
    a = baseline_slot_schedule("CPO", *decide("CPO", cfg, w)[:2], w, cfg).objective
    b = baseline_slot_schedule("CPO", *decide("CPO", weak, w)[:2], w, weak).objective
    assert a == b == pytest.approx((w.totals * cfg.phic).sum())


def test_popularity_fill_takes_the_two_hottest():
    cfg = make_config(M=(25.0,), m=(10.0,) * 3, c=(0.2,) * 3, budget=(100.0,))
    w = snapshot([[5.0, 50.0, 20.0]], dt=3600.0)
    X, _, _ = decide("PSP", cfg, w)
    np.testing.assert_array_equal(X, [[0, 1, 1]])
    X, _, _ = decide("FSP", cfg, w)
    np.testing.assert_array_equal(X, [[1, 1, 0]])


def test_greedy_skips_what_does_not_fit():
    cfg = make_config(M=(30.0,), m=(20.0, 15.0, 10.0), c=(0.2,) * 3, budget=(100.0,))
    np.testing.assert_array_equal(greedy_fill(cfg, [0, 1, 2]), [[1, 0, 1]])


def test_equal_split_shares(small_system):
    cfg, w, _ = small_system
    X, Y, _ = decide("ECEERA", cfg, w)
    bound = np.minimum(1.0, gammas(X, cfg))
    for i in range(cfg.n_servers):
        k = X[i].sum()
        if k:
            np.testing.assert_allclose(Y[i, X[i] == 1], bound[i] / k, rtol=1e-12)
        assert not Y[i, X[i] == 0].any()


def test_local_only_keeps_demand_in_region():
    cfg = table1_config(1, n_servers=3, n_services=4)
    w = frame_forecast(cfg, 0)
    counts = np.asarray(w.counts).copy()
    counts[0, 1] = 0.0  # region 0 never asks for service 1
    from rmws.domain import WorkloadSnapshot
    w = WorkloadSnapshot(counts, w.interval_length)
    X, Y, _ = decide("NSP", cfg, w)
    res = baseline_slot_schedule("NSP", X, Y, w, cfg)
    caps = local_caps(w)
    assert np.all(res.z <= caps + 1e-12)
    assert res.z[0, 1] == 0.0


def test_edge_only_never_uses_cloud(small_system):
    cfg, w, _ = small_system
    X, Y, _ = decide("EERA", cfg, w)
    res = baseline_slot_schedule("EERA", X, Y, w, cfg)
    np.testing.assert_array_equal(res.z[-1], 0.0)
    assert check_constraints(X, Y, res.z, cfg, w).ok


def test_edge_only_zero_workload():
    cfg = table1_config(0, n_servers=2, n_services=3)
    w = snapshot(np.zeros((2, 3)))
    X, Y, _ = decide("EERA", cfg, w)
    res = baseline_slot_schedule("EERA", X, Y, w, cfg)
    assert res.objective == 0.0


def test_edge_only_overload_raises():
    cfg = make_config(F=(1.0,), M=(100.0,), m=(10.0,), c=(0.5,), budget=(100.0,))
    w = snapshot([[1e6]], dt=60.0)
    with pytest.raises(InfeasibleDemand):
        decide("EERA", cfg, w)


def test_cover_places_missing_services():
    cfg = make_config(F=(100.0, 100.0), M=(20.0, 20.0), Pm=(20.0, 20.0), Pf=(20.0, 20.0),
                      m=(10.0,) * 3, c=(0.2,) * 3, budget=(100.0, 100.0))
    X = np.array([[1, 1, 0], [1, 1, 0]])
    out = cover_services(X, cfg, np.array([30.0, 20.0, 10.0]))
    assert out[:, 2].any() and out[:, 0].any() and out[:, 1].any()


@pytest.mark.parametrize("kind", list(BaselineKind))
def test_every_baseline_is_feasible(kind):
    cfg = table1_config(2, n_servers=3, n_services=5, frames=1)
    trace = generate_trace(cfg)
    X, Y, _ = decide(kind, cfg, frame_forecast(cfg, 0))
    for t in range(2):
        w = trace.snapshot(0, t)
        res = baseline_slot_schedule(kind, X, Y, w, cfg)
        assert check_constraints(X, Y, res.z, cfg, w).ok
        assert res.objective == pytest.approx(objective(X, Y, res.z, w, cfg))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_joint_search_beats_baselines_on_the_frame(seed):
    from rmws.placement import gibbs_optimize

    cfg = table1_config(seed, n_servers=2, n_services=4)
    w = frame_forecast(cfg, 0)
    best = gibbs_optimize(cfg, w, GibbsConfig(max_iters=400, rng_seed=seed)).theta
    for kind in ("CPO", "FSP", "PSP"):
        X, Y, _ = decide(kind, cfg, w)
        theta = solve_inner(X, w, cfg).objective if X.any() else baseline_slot_schedule(
            kind, X, Y, w, cfg).objective
        assert best <= theta * (1 + 1e-3)
