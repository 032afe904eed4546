import json

import numpy as np
import pytest

from rmws.exceptions import ConfigError
from rmws.harness import (CSV_COLUMNS, ExperimentReport, SweepSpec, emit_report, fmt,
                          load_config, load_report, run_experiment, run_sweep, write_sweep)
from rmws.instances import table1_config
from rmws.placement import GibbsConfig
from rmws.workload import generate_trace

FAST = GibbsConfig(max_iters=60, patience=30)


def small(seed=0, **kw):
    kw.setdefault("frames", 1)
    kw.setdefault("slots_per_frame", 3)
    return table1_config(seed, n_servers=2, n_services=3, **kw)


def test_number_format():
    assert fmt(20.0) == "20.0000000"
    assert fmt(0.1) == "0.100000000"


def test_empty_report_is_header_only():
    assert ExperimentReport([]).to_csv() == ",".join(CSV_COLUMNS) + "\n"


def test_cloud_only_single_slot_row():
    cfg = small(slots_per_frame=1)
    trace = generate_trace(cfg)
    rep = run_experiment(cfg, ("CPO",), FAST, trace=trace)
    (row,) = rep.rows
    n = trace.counts[0, 0].sum(axis=0)
    assert row.total_latency_s == pytest.approx((n * cfg.phic).sum())
    assert row.edge_latency_s == 0 and row.cost_total == 0 and row.feasible


def test_rows_are_feasible_and_complete():
    cfg = small()
    rep = run_experiment(cfg, ("RMWS", "FSP", "EERA"), FAST)
    assert len(rep.rows) == 3 * cfg.frames * cfg.slots_per_frame
    assert all(r.feasible and not r.violations for r in rep.rows)
    for r in rep.rows:
        assert r.total_latency_s == pytest.approx(r.edge_latency_s + r.cloud_latency_s)
        assert r.cost_total == pytest.approx(sum(r.server_costs))


def test_reports_repeat_byte_for_byte():
    a = run_experiment(small(1), ("RMWS", "PSP"), FAST).to_csv()
    b = run_experiment(small(1), ("RMWS", "PSP"), FAST).to_csv()
    assert a == b


def test_json_round_trip_and_aggregates(tmp_path):
    rep = run_experiment(small(), ("CPO", "PSP"), FAST)
    path = tmp_path / "r.json"
    emit_report(rep, path, "json")
    back = load_report(path)
    assert back.to_csv() == rep.to_csv()
    stored = json.loads(path.read_text())["aggregates"]
    for name, agg in back.aggregates().items():
        lat = back.latencies(name)
        assert agg["mean"] == pytest.approx(lat.mean())
        assert agg["p95"] == pytest.approx(np.percentile(lat, 95))
        assert stored[name]["mean"] == pytest.approx(agg["mean"])


def test_emit_errors(tmp_path):
    with pytest.raises(ValueError):
        emit_report(ExperimentReport([]), tmp_path / "x", "xml")
    with pytest.raises(OSError):
        emit_report(ExperimentReport([]), tmp_path / "missing" / "x.csv")


def test_infeasible_frames_are_flagged_not_fatal():
    cfg = small(compute_scale=1e-4, storage_scale=4.0)
    rep = run_experiment(cfg, ("EERA", "CPO"), FAST)
    eera = [r for r in rep.rows if r.algorithm == "EERA"]
    assert eera and not any(r.feasible for r in eera)
    assert all(np.isinf(r.total_latency_s) for r in eera)
    assert all(r.feasible for r in rep.rows if r.algorithm == "CPO")


def test_load_config(tmp_path):
    cfg = small()
    full = tmp_path / "full.json"
    full.write_text(cfg.to_json())
    assert load_config(full).to_dict() == cfg.to_dict()
    gen = tmp_path / "gen.json"
    gen.write_text(json.dumps({"generate": {"seed": 0, "n_servers": 2, "n_services": 3,
                                            "frames": 1, "slots_per_frame": 3}}))
    assert load_config(gen).to_dict() == cfg.to_dict()
    for text in ("{", "[]", json.dumps({"generate": {"bogus": 1}})):
        bad = tmp_path / "bad.json"
        bad.write_text(text)
        with pytest.raises(ConfigError):
            load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json")


def test_sweep_spec_validation():
    with pytest.raises(ConfigError):
        SweepSpec("budget_coefficient", ())
    with pytest.raises(ConfigError):
        SweepSpec("zipf", (1,))
    with pytest.raises(ConfigError):
        SweepSpec("n_services", (3,), algorithms=("XYZ",))


def test_cloud_only_is_flat_across_budgets(tmp_path):
    spec = SweepSpec("budget_coefficient", (0.5, 0.9), {"frames": 1, "slots_per_frame": 2,
                                                         "n_servers": 2, "n_services": 3},
                     ("CPO", "PSP"), seeds=(0, 1), gibbs=FAST)
    result = run_sweep(spec)
    table = result.summary()
    assert table[(0.5, "CPO")] == table[(0.9, "CPO")]
    write_sweep(result, tmp_path)
    assert (tmp_path / "summary.csv").read_text().startswith("budget_coefficient,CPO,PSP\n")
    assert len(list(tmp_path.glob("budget_coefficient=*_seed=*.csv"))) == 4
