"""System model: servers, services, latency model, cost model and constraints.

Matrices are plain numpy arrays:

* placement ``X``  -- ``(L, S)`` array of 0/1,
* allocation ``Y`` -- ``(L, S)`` CPU shares,
* schedule ``Z``   -- ``(L + 1, S)`` routing ratios; the last row is the cloud.

Demand ``n[i, s]`` counts tasks arriving at server ``i``'s region for
service ``s`` over an interval of ``interval_length`` seconds.  Compute
requirements ``c_s`` are giga-cycles per task and capacities ``F_i`` are
giga-cycles per second, so ``F_i / c_s`` is a service rate in tasks/s.

All latencies are summed over tasks (seconds), not per-task means.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np

from .exceptions import ConfigError, QueueUnstable

SCHEMA_VERSION = 1

#: Relative margin below which an M/M/1 queue counts as unstable.
STABILITY_MARGIN = 1e-9
#: Tolerance on the column sums of a schedule.
SUM_TOL = 1e-9


@dataclass(frozen=True)
class EdgeServer:
    compute_capacity: float  # F_i, giga-cycles / s
    storage_capacity: float  # M_i, GB
    storage_price: float  # P^m_i, currency / hour for the full storage
    compute_price: float  # P^f_i, currency / hour for the full CPU
    budget: Optional[float] = None  # P^bud_i; derived from the budget coefficient when None

    def __post_init__(self):
        if not self.compute_capacity > 0 or not self.storage_capacity > 0:
            raise ConfigError("server capacities must be positive")
        if self.storage_price < 0 or self.compute_price < 0:
            raise ConfigError("server prices must be non-negative")
        if self.budget is not None and self.budget < 0:
            raise ConfigError("server budget must be non-negative")


@dataclass(frozen=True)
class Service:
    storage_req: float  # m_s, GB
    compute_req: float  # c_s, giga-cycles / task
    edge_delay: float = 0.01  # phi_s, s / task forwarded between edge servers
    cloud_delay: float = 0.1  # phi_{c,s}, s / task sent to the cloud

    def __post_init__(self):
        if not self.storage_req > 0 or not self.compute_req > 0:
            raise ConfigError("service requirements must be positive")
        if self.edge_delay < 0 or self.cloud_delay < 0:
            raise ConfigError("transfer delays must be non-negative")
        if self.cloud_delay < self.edge_delay:
            raise ConfigError("cloud transfer delay must not be below the edge transfer delay")


def _frozen(a):
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SystemConfig:
    """Immutable description of one edge/cloud system and its workload model."""

    servers: tuple
    services: tuple
    slot_length: float = 60.0
    slots_per_frame: int = 30
    frames: int = 10
    zipf_exponent: float = 0.6
    arrival_mean: float = 600.0
    arrival_spread: float = 20.0
    budget_coefficient: float = 0.7
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "servers", tuple(self.servers))
        object.__setattr__(self, "services", tuple(self.services))
        if not self.servers or not self.services:
            raise ConfigError("need at least one server and one service")
        if self.slots_per_frame < 1 or self.frames < 1:
            raise ConfigError("slots_per_frame and frames must be >= 1")
        if not self.slot_length > 0:
            raise ConfigError("slot_length must be positive")
        if not 0 < self.budget_coefficient <= 1:
            raise ConfigError("budget_coefficient must lie in (0, 1]")
        if self.zipf_exponent < 0 or self.arrival_mean < 0 or self.arrival_spread < 0:
            raise ConfigError("workload parameters must be non-negative")

    @property
    def n_servers(self):
        return len(self.servers)

    @property
    def n_services(self):
        return len(self.services)

    @property
    def frame_length(self):
        return self.slot_length * self.slots_per_frame

    @cached_property
    def F(self):
        return _frozen([sv.compute_capacity for sv in self.servers])

    @cached_property
    def M(self):
        return _frozen([sv.storage_capacity for sv in self.servers])

    @cached_property
    def Pm(self):
        return _frozen([sv.storage_price for sv in self.servers])

    @cached_property
    def Pf(self):
        return _frozen([sv.compute_price for sv in self.servers])

    @cached_property
    def budgets(self):
        mu = self.budget_coefficient
        return _frozen([
            sv.budget if sv.budget is not None else mu * (sv.storage_price + sv.compute_price)
            for sv in self.servers
        ])

    @cached_property
    def m(self):
        return _frozen([sv.storage_req for sv in self.services])

    @cached_property
    def c(self):
        return _frozen([sv.compute_req for sv in self.services])

    @cached_property
    def phi(self):
        return _frozen([sv.edge_delay for sv in self.services])

    @cached_property
    def phic(self):
        return _frozen([sv.cloud_delay for sv in self.services])

    @cached_property
    def storage_cost_matrix(self):
        """``(m_s / M_i) * P^m_i`` -- hourly storage cost of hosting s on i."""
        return _frozen(np.outer(self.Pm / self.M, self.m))

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        d = {"schema": SCHEMA_VERSION}
        for k in ("slot_length", "slots_per_frame", "frames", "zipf_exponent",
                  "arrival_mean", "arrival_spread", "budget_coefficient", "rng_seed"):
            d[k] = getattr(self, k)
        d["servers"] = [asdict(sv) for sv in self.servers]
        d["services"] = [asdict(sv) for sv in self.services]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        schema = d.pop("schema", SCHEMA_VERSION)
        if schema != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema {schema!r}")
        try:
            servers = [EdgeServer(**sv) for sv in d.pop("servers")]
            services = [Service(**sv) for sv in d.pop("services")]
            return cls(servers=servers, services=services, **d)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc


@dataclass(frozen=True)
class WorkloadSnapshot:
    """Task counts ``n[i, s]`` arriving over one interval."""

    counts: np.ndarray
    interval_length: float

    def __post_init__(self):
        counts = np.array(self.counts, dtype=float)
        if counts.ndim != 2:
            raise ConfigError("workload counts must be a 2-D (servers x services) array")
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise ConfigError("workload counts must be finite and non-negative")
        if not self.interval_length > 0:
            raise ConfigError("interval_length must be positive")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @cached_property
    def totals(self):
        t = self.counts.sum(axis=0)
        t.setflags(write=False)
        return t


def check_dimensions(config, X=None, Y=None, Z=None, w=None):
    L, S = config.n_servers, config.n_services
    for name, a, shape in (("placement", X, (L, S)), ("allocation", Y, (L, S)),
                           ("schedule", Z, (L + 1, S))):
        if a is not None and np.shape(a) != shape:
            raise ConfigError(f"{name} has shape {np.shape(a)}, expected {shape}")
    if w is not None and w.counts.shape != (L, S):
        raise ConfigError(f"workload has shape {w.counts.shape}, expected {(L, S)}")


def cloud_only_schedule(config):
    Z = np.zeros((config.n_servers + 1, config.n_services))
    Z[-1] = 1.0
    return Z


# -- per-term latency model ------------------------------------------------

def transmission_latency(i, s, Z, w, config):
    """Latency of forwarding the excess of ``z*n_s`` over local demand to server ``i``."""
    check_dimensions(config, Z=Z, w=w)
    return max(Z[i, s] * w.totals[s] - w.counts[i, s], 0.0) * config.phi[s]


def computation_latency(i, s, Y, Z, w, config):
    """M/M/1 sojourn time of all tasks of service ``s`` processed on server ``i``.

    Raises :class:`QueueUnstable` when the arrival rate reaches the service
    rate (``z*n*c >= y*F*dt``).
    """
    check_dimensions(config, Y=Y, Z=Z, w=w)
    routed = Z[i, s] * w.totals[s]
    if routed == 0:
        return 0.0
    dt = w.interval_length
    capacity = Y[i, s] * config.F[i] * dt
    margin = capacity - routed * config.c[s]
    if margin <= STABILITY_MARGIN * capacity:
        raise QueueUnstable(i, s, margin)
    return routed / (Y[i, s] * config.F[i] / config.c[s] - routed / dt)


def cloud_latency(s, Z, w, config):
    check_dimensions(config, Z=Z, w=w)
    return Z[-1, s] * w.totals[s] * config.phic[s]


def total_latency(X, Y, Z, w, config):
    """P1 objective assembled term by term (edge terms only for placed services)."""
    check_dimensions(config, X, Y, Z, w)
    stray = (np.asarray(X) == 0) & (np.asarray(Z)[:-1] != 0)
    if stray.any():
        i, s = map(int, np.argwhere(stray)[0])
        raise ValueError(f"schedule routes service {s} to server {i} which does not host it")
    total = 0.0
    for i in range(config.n_servers):
        for s in np.flatnonzero(X[i]):
            total += computation_latency(i, s, Y, Z, w, config)
            total += transmission_latency(i, s, Z, w, config)
    for s in range(config.n_services):
        total += cloud_latency(s, Z, w, config)
    return total


# -- vectorised evaluation -------------------------------------------------

def latency_components(X, Y, Z, w, config):
    """Return ``(edge, cloud)`` latency in one vectorised pass."""
    X = np.asarray(X)
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    n, ns, dt = w.counts, w.totals, w.interval_length
    routed = Z[:-1] * ns  # tasks sent to each edge queue
    active = (X != 0) & (routed > 0)
    capacity = Y * config.F[:, None] * dt
    margin = capacity - routed * config.c
    bad = active & (margin <= STABILITY_MARGIN * capacity)
    if bad.any():
        i, s = map(int, np.argwhere(bad)[0])
        raise QueueUnstable(i, s, float(margin[i, s]))
    with np.errstate(divide="ignore", invalid="ignore"):
        comp = np.where(active, routed * config.c * dt / np.where(active, margin, 1.0), 0.0)
    tran = np.where(X != 0, np.maximum(routed - n, 0.0) * config.phi, 0.0)
    edge = float(comp.sum() + tran.sum())
    cloud = float(np.dot(Z[-1] * ns, config.phic))
    return edge, cloud


def objective(X, Y, Z, w, config):
    edge, cloud = latency_components(X, Y, Z, w, config)
    return edge + cloud


# -- cost model ------------------------------------------------------------

def server_cost(i, X, Y, config):
    """Hourly cost of server ``i``: storage of hosted services plus CPU shares."""
    x = np.asarray(X[i]) != 0
    return float(np.sum(config.storage_cost_matrix[i, x]) + np.sum(np.asarray(Y[i])[x]) * config.Pf[i])


def server_costs(X, Y, config):
    x = np.asarray(X) != 0
    return (config.storage_cost_matrix * x).sum(axis=1) + (np.asarray(Y) * x).sum(axis=1) * config.Pf


# -- constraints -----------------------------------------------------------

CONSTRAINTS = ("C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8")


@dataclass
class ConstraintReport:
    """Per-constraint pass flags and worst violation magnitudes."""

    passed: dict = field(default_factory=dict)
    violation: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(self.passed.values())

    def failures(self):
        return [k for k in CONSTRAINTS if not self.passed.get(k, True)]

    def _set(self, name, worst, tol):
        worst = max(float(worst), 0.0)
        self.violation[name] = worst
        self.passed[name] = worst <= tol


def check_constraints(X, Y, Z, config, w, tol=1e-9):
    """Evaluate C1-C8 and report, never raise, on violations.

    C5 is only checked where a queue receives tasks (``z * n_s > 0``); an
    idle entry has no queue to destabilise.
    """
    check_dimensions(config, X, Y, Z, w)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    rep = ConstraintReport()
    placed = X != 0

    rep._set("C1", np.max(X @ config.m - config.M), tol)
    rep._set("C2", np.max(Y.sum(axis=1) - 1.0), tol)
    rep._set("C3", np.max(np.abs(Z.sum(axis=0) - 1.0)), SUM_TOL)
    rep._set("C4", np.max(server_costs(X, Y, config) - config.budgets), tol * max(1.0, config.budgets.max()))

    routed = Z[:-1] * w.totals
    capacity = Y * config.F[:, None] * w.interval_length
    slack_needed = routed * config.c - capacity * (1 - STABILITY_MARGIN)
    c5 = np.where(routed > 0, slack_needed, -np.inf)
    worst_c5 = np.max(c5)
    rep.violation["C5"] = max(float(worst_c5), 0.0) if np.isfinite(worst_c5) else 0.0
    rep.passed["C5"] = bool(np.all(c5 < 0))

    rep._set("C6", np.max(np.minimum(np.abs(X), np.abs(X - 1))), 0.0)
    y_out = np.maximum(np.maximum(-Y, Y - 1.0), np.where(placed, 0.0, np.abs(Y)))
    rep._set("C7", np.max(y_out), 1e-12)
    z_out = np.maximum(-Z, Z - 1.0)
    z_out[:-1] = np.maximum(z_out[:-1], np.where(placed, 0.0, np.abs(Z[:-1])))
    rep._set("C8", np.max(z_out), 1e-12)
    return rep
