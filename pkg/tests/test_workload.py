import numpy as np
import pytest
from hypothesis import given, strategies as st

from rmws.exceptions import ConfigError
from rmws.instances import table1_config
from rmws.workload import (WorkloadTrace, frame_forecast, frame_popularity, generate_trace,
                           zipf_popularity)


class TestZipf:
    def test_single_service(self):
        np.testing.assert_array_equal(zipf_popularity(1, 0.6), [1.0])

    def test_two_services_exponent_one(self):
        np.testing.assert_allclose(zipf_popularity(2, 1.0), [2 / 3, 1 / 3], rtol=1e-15)

    def test_rank_ratio(self):
        p = zipf_popularity(5, 0.6)
        assert p[0] / p[1] == pytest.approx(2 ** 0.6, rel=1e-12)

    @given(st.integers(1, 50), st.floats(0.0, 3.0))
    def test_is_a_decreasing_distribution(self, S, e):
        p = zipf_popularity(S, e)
        assert p.sum() == pytest.approx(1.0)
        assert np.all(np.diff(p) <= 1e-15)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            zipf_popularity(0, 1.0)
        with pytest.raises(ValueError):
            zipf_popularity(3, -0.1)


def test_rankings_permute_popularity():
    cfg = table1_config(0, n_servers=1, n_services=3, frames=2)
    pop = frame_popularity(cfg, exponents=[1.0], rankings=[[0, 1, 2], [2, 0, 1]])
    base = zipf_popularity(3, 1.0)
    np.testing.assert_allclose(pop[0], base)
    np.testing.assert_allclose(pop[1], [base[1], base[2], base[0]])


def test_trace_statistics_over_many_slots():
    cfg = table1_config(0, n_servers=2, n_services=4, frames=10, slots_per_frame=1000)
    trace = generate_trace(cfg)
    per_slot = trace.counts.sum(axis=3)
    assert per_slot.mean() == pytest.approx(600.0, rel=0.01)
    assert per_slot.std() == pytest.approx(20.0, rel=0.05)
    shares = trace.counts.sum(axis=(0, 1, 2)) / trace.counts.sum()
    np.testing.assert_allclose(shares, zipf_popularity(4, 0.6), rtol=0.01)


def test_zero_arrivals():
    cfg = table1_config(0, n_servers=2, n_services=3, frames=1, arrival_mean=0.0)
    assert not generate_trace(cfg).counts.any()


def test_seeded_traces_repeat_and_totals_ignore_service_count():
    a = generate_trace(table1_config(4, n_servers=2, n_services=3, frames=2))
    b = generate_trace(table1_config(4, n_servers=2, n_services=3, frames=2))
    c = generate_trace(table1_config(4, n_servers=2, n_services=7, frames=2))
    np.testing.assert_array_equal(a.counts, b.counts)
    np.testing.assert_array_equal(a.counts.sum(axis=3), c.counts.sum(axis=3))


def test_mean_forecast():
    cfg = table1_config(0, n_servers=2, n_services=1, arrival_mean=150.0)
    w = frame_forecast(cfg, 0)
    np.testing.assert_allclose(w.counts, [[4500.0], [4500.0]])
    assert w.interval_length == cfg.frame_length


def test_oracle_forecast_sums_the_frame():
    cfg = table1_config(1, n_servers=2, n_services=3, frames=2)
    trace = generate_trace(cfg)
    w = frame_forecast(cfg, 1, "oracle", trace)
    np.testing.assert_array_equal(w.counts, trace.counts[1].sum(axis=0))
    with pytest.raises(ValueError):
        frame_forecast(cfg, 0, "oracle")


def test_csv_round_trip(tmp_path):
    cfg = table1_config(2, n_servers=2, n_services=3, frames=2, slots_per_frame=4)
    trace = generate_trace(cfg)
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    back = WorkloadTrace.from_csv(path, cfg.slot_length, trace.counts.shape)
    np.testing.assert_array_equal(back.counts, trace.counts)
    assert path.read_text().splitlines()[0] == "frame,slot,server,service,count"


def test_bad_csv_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ConfigError):
        WorkloadTrace.from_csv(path, 60.0)


def test_negative_counts_rejected():
    with pytest.raises(ConfigError):
        WorkloadTrace(-np.ones((1, 1, 1, 1), dtype=int), 60.0, np.ones((1, 1)))
