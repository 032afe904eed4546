"""Two-timescale experiment driver, parameter sweeps and report files.

At the start of every frame each algorithm is fitted on the frame forecast,
fixing its placement and CPU shares; every slot is then scheduled against
the realised demand of that slot.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .domain import SystemConfig, check_constraints, latency_components, server_costs
from .estimators import ALGORITHMS, make_scheduler
from .exceptions import ConfigError, InfeasibleDemand, NegativeGamma
from .instances import table1_config
from .placement import GibbsConfig
from .scheduling import SolverConfig
from .workload import SWEEP_EXPONENTS, ForecastMode, frame_forecast, generate_trace

CSV_COLUMNS = ("frame", "slot", "algorithm", "total_latency_s", "edge_latency_s",
               "cloud_latency_s", "cost_total", "feasible", "iters_placement", "iters_schedule")

#: Parameters a sweep may vary, with the keyword of ``table1_config`` they set.
SWEEPABLE = {
    "budget_coefficient": "budget_coefficient",
    "n_services": "n_services",
    "compute_capacity": "compute_scale",
    "storage_capacity": "storage_scale",
    "compute_requirement": "compute_req_scale",
    "storage_requirement": "storage_req_scale",
}


def fmt(x):
    """Nine significant digits, keeping trailing zeros (``20.0 -> 20.0000000``)."""
    return f"{float(x):#.9g}"


@dataclass
class Row:
    frame: int
    slot: int
    algorithm: str
    total_latency_s: float
    edge_latency_s: float
    cloud_latency_s: float
    cost_total: float
    feasible: bool
    iters_placement: int
    iters_schedule: int
    server_costs: list = field(default_factory=list)
    violations: list = field(default_factory=list)


@dataclass
class ExperimentReport:
    rows: list
    meta: dict = field(default_factory=dict)

    def algorithms(self):
        return list(dict.fromkeys(r.algorithm for r in self.rows))

    def latencies(self, algorithm):
        return np.array([r.total_latency_s for r in self.rows if r.algorithm == algorithm])

    def aggregates(self):
        """Mean and 95th-percentile slot latency per algorithm."""
        out = {}
        for a in self.algorithms():
            lat = self.latencies(a)
            with np.errstate(invalid="ignore"):  # flagged rows carry inf latency
                p95 = float(np.percentile(lat, 95)) if np.isfinite(lat).all() else float("inf")
            out[a] = {"mean": float(lat.mean()), "p95": p95,
                      "feasible": all(r.feasible for r in self.rows if r.algorithm == a)}
        return out

    def to_dict(self):
        return {"meta": self.meta, "rows": [asdict(r) for r in self.rows],
                "aggregates": self.aggregates()}

    @classmethod
    def from_dict(cls, d):
        return cls([Row(**r) for r in d["rows"]], d.get("meta", {}))

    def to_csv(self):
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(CSV_COLUMNS)
        for r in self.rows:
            out.writerow((r.frame, r.slot, r.algorithm, fmt(r.total_latency_s),
                          fmt(r.edge_latency_s), fmt(r.cloud_latency_s), fmt(r.cost_total),
                          int(r.feasible), r.iters_placement, r.iters_schedule))
        return buf.getvalue()

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def emit_report(report, path, format="csv"):
    """Write a report as CSV (fixed columns) or JSON, UTF-8 with LF line endings."""
    if format not in ("csv", "json"):
        raise ValueError(f"unknown report format {format!r}")
    text = report.to_csv() if format == "csv" else report.to_json() + "\n"
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror}") from exc


def load_report(path):
    with open(path, encoding="utf-8") as fh:
        return ExperimentReport.from_dict(json.load(fh))


def load_config(path):
    """Read a JSON config: a full system, or ``{"generate": {...}}`` for a random draw.

    The generate form takes the keywords of :func:`~rmws.instances.table1_config`.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    if "generate" in d:
        if d.get("schema", 1) != 1:
            raise ConfigError(f"unsupported config schema {d['schema']!r}")
        try:
            return table1_config(**d["generate"])
        except TypeError as exc:
            raise ConfigError(f"bad generate block in {path}: {exc}") from exc
    return SystemConfig.from_dict(d)


def _flagged(frame, slot, name, iters_placement, L):
    inf = float("inf")
    return Row(frame, slot, name, inf, inf, inf, inf, False, iters_placement, 0,
               [inf] * L, ["infeasible"])


def run_experiment(config, algorithms=ALGORITHMS, gibbs=None, solver=None, trace=None,
                   forecast=ForecastMode.MEAN, exponents=None, rankings=None):
    """Run every algorithm over every frame and slot of ``config``.

    Parameters
    ----------
    trace : WorkloadTrace, optional
        Realised demand; generated from ``config.rng_seed`` when omitted.
    forecast : {"mean", "oracle"}
        Frame predictor handed to the frame-level decision.
    exponents, rankings : optional
        Per-frame popularity changes passed to :func:`generate_trace`.

    Returns
    -------
    ExperimentReport
        Infeasible frames or slots appear as rows with ``feasible = False``
        and infinite latency rather than aborting the run.
    """
    gibbs = gibbs or GibbsConfig()
    solver = solver or SolverConfig()
    if not algorithms:
        raise ValueError("need at least one algorithm")
    if trace is None:
        trace = generate_trace(config, exponents=exponents, rankings=rankings)
    L = config.n_servers
    rows = []
    for name in algorithms:
        for f in range(config.frames):
            est = make_scheduler(name, config, omega=gibbs.omega, max_iters=gibbs.max_iters,
                                 patience=gibbs.patience, solver_iters=solver.max_iters,
                                 tolerance=solver.tolerance, step_decay=solver.step_decay,
                                 random_state=(gibbs.rng_seed * 1_000_003 + f) % 2**32)
            try:
                est.fit(frame_forecast(config, f, forecast, trace))
            except (InfeasibleDemand, NegativeGamma):
                rows.extend(_flagged(f, t, name, 0, L) for t in range(config.slots_per_frame))
                continue
            X, Y = est.placement_, est.allocation_
            X0, Y0 = X.copy(), Y.copy()
            costs = server_costs(X, Y, config)
            for t in range(config.slots_per_frame):
                w = trace.snapshot(f, t)
                try:
                    res = est.schedule(w)
                except InfeasibleDemand:
                    rows.append(_flagged(f, t, name, est.n_iter_, L))
                    continue
                edge, cloud = latency_components(X, Y, res.z, w, config)
                report = check_constraints(X, Y, res.z, config, w)
                rows.append(Row(f, t, name, float(edge + cloud), float(edge), float(cloud),
                                float(costs.sum()), report.ok, est.n_iter_, res.iterations,
                                [float(v) for v in costs], report.failures()))
            if not (np.array_equal(X0, est.placement_) and np.array_equal(Y0, est.allocation_)):
                raise AssertionError(f"{name} changed its frame decision inside frame {f}")
    meta = {"config": config.to_dict(), "algorithms": list(algorithms),
            "gibbs": asdict(gibbs), "solver": asdict(solver), "forecast": ForecastMode(forecast).value}
    return ExperimentReport(rows, meta)


@dataclass(frozen=True)
class SweepSpec:
    """One swept parameter over a list of values, replicated over seeds.

    ``base`` holds keyword arguments of :func:`~rmws.instances.table1_config`
    shared by every run (e.g. ``{"frames": 2}``).
    """

    parameter: str
    values: tuple
    base: dict = field(default_factory=dict)
    algorithms: tuple = ALGORITHMS
    seeds: tuple = (0, 1, 2, 3, 4)
    gibbs: GibbsConfig = field(default_factory=GibbsConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if self.parameter not in SWEEPABLE:
            raise ConfigError(f"cannot sweep {self.parameter!r}; choose from {', '.join(SWEEPABLE)}")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ConfigError(f"unknown algorithms {sorted(unknown)}")


@dataclass
class SweepResult:
    spec: SweepSpec
    reports: dict  # (value, seed) -> ExperimentReport

    def summary(self):
        """Mean slot latency per algorithm per value, averaged over seeds."""
        table = {}
        for v in self.spec.values:
            for a in self.spec.algorithms:
                means = [self.reports[(v, s)].latencies(a).mean() for s in self.spec.seeds]
                table[(v, a)] = float(np.mean(means))
        return table

    def summary_csv(self):
        table = self.summary()
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow((self.spec.parameter, *self.spec.algorithms))
        for v in self.spec.values:
            out.writerow((v, *(fmt(table[(v, a)]) for a in self.spec.algorithms)))
        return buf.getvalue()


def run_sweep(spec):
    """One experiment per (value, seed) with common random numbers across values."""
    reports = {}
    for seed in spec.seeds:
        for v in spec.values:
            kwargs = dict(spec.base)
            kwargs[SWEEPABLE[spec.parameter]] = v
            config = table1_config(seed, **kwargs)
            gibbs = GibbsConfig(spec.gibbs.omega, spec.gibbs.max_iters, spec.gibbs.patience,
                                seed, spec.gibbs.chain_mode)
            reports[(v, seed)] = run_experiment(config, spec.algorithms, gibbs, spec.solver)
    return SweepResult(spec, reports)


def write_sweep(result, out_dir, format="csv"):
    """Per-run reports plus ``summary.csv`` under ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    p = result.spec.parameter
    for (v, seed), rep in sorted(result.reports.items()):
        emit_report(rep, os.path.join(out_dir, f"{p}={v}_seed={seed}.{format}"), format)
    with open(os.path.join(out_dir, "summary.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(result.summary_csv())


__all__ = [
    "CSV_COLUMNS", "SWEEPABLE", "SWEEP_EXPONENTS", "Row", "ExperimentReport", "SweepSpec",
    "SweepResult", "emit_report", "load_report", "load_config", "run_experiment", "run_sweep",
    "write_sweep", "table1_config",
]
