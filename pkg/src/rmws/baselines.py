"""Comparison algorithms sharing the RMWS sub-solvers.

Each baseline disables one mechanism of the joint optimiser:

* CPO sends everything to the cloud.
* FSP freezes a popularity placement taken from the nominal Zipf ranking.
* NSP lets each server fill and serve only its own region (edge or cloud).
* PSP re-ranks services by forecast popularity every frame.
* EERA splits CPU evenly and forbids the cloud.
* ECEERA splits CPU evenly but keeps the placement search and the cloud.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .domain import check_dimensions, cloud_only_schedule, objective
from .exceptions import InfeasibleDemand
from .inner import InnerSolution, solve_inner
from .placement import GibbsConfig, gibbs_optimize, is_feasible_placement
from .provisioning import equal_allocation
from .scheduling import ScheduleResult, SolverConfig, solve_schedule


class BaselineKind(str, Enum):
    CPO = "CPO"
    FSP = "FSP"
    NSP = "NSP"
    PSP = "PSP"
    EERA = "EERA"
    ECEERA = "ECEERA"


def popularity_order(weights):
    """Service indices by decreasing weight, ties broken by index."""
    weights = np.asarray(weights, dtype=float)
    return np.lexsort((np.arange(len(weights)), -weights))


def greedy_fill(config, order):
    """Fill each server with services in ``order`` while they stay feasible.

    A service that does not fit is skipped and the next one is tried, so a
    server keeps filling until no remaining service fits.  ``order`` may be
    one ranking for all servers or one row per server.
    """
    L, S = config.n_servers, config.n_services
    order = np.atleast_2d(order)
    X = np.zeros((L, S), dtype=int)
    for i in range(L):
        for s in order[min(i, len(order) - 1)]:
            X[i, s] = 1
            if not is_feasible_placement(X[i], i, config):
                X[i, s] = 0
    return X


def cover_services(X, config, demand):
    """Host every demanded service at least once, evicting the least popular.

    Used when the cloud is unavailable: a service placed nowhere cannot be
    served at all.  Missing services go to the server with the most free
    storage; if none fits, that server drops its least-demanded services
    that are hosted elsewhere until it does.
    """
    X = X.copy()
    order = popularity_order(demand)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    for s in order:
        if demand[s] <= 0 or X[:, s].any():
            continue
        free = config.M - X @ config.m
        for i in np.argsort(-free, kind="stable"):
            trial = X[i].copy()
            trial[s] = 1
            # evict shared services from the bottom of the ranking until feasible
            for v in sorted(np.flatnonzero(trial), key=lambda v: -rank[v]):
                if is_feasible_placement(trial, i, config):
                    break
                if v != s and X[:, v].sum() > 1:
                    trial[v] = 0
            if is_feasible_placement(trial, i, config):
                X[i] = trial
                break
    return X


def _equal_split_solution(X, w, config, solver, allow_cloud=True):
    Y = equal_allocation(X, config)
    res = solve_schedule(X, Y, w, config, solver, allow_cloud=allow_cloud)
    return InnerSolution(Y, res.z, res.objective, res.iterations, res.converged, [res.objective])


def local_caps(w):
    """Upper bounds ``z[i, s] <= n_{i,s} / n_s`` that keep demand in its own region."""
    ns = w.totals
    L, S = w.counts.shape
    caps = np.ones((L + 1, S))
    caps[:-1] = np.divide(w.counts, ns, out=np.zeros((L, S)), where=ns > 0)
    return caps


def baseline_frame_decision(kind, config, w_frame, solver=None, gibbs=None):
    """Frame-level placement and allocation for a baseline.

    Returns
    -------
    X, Y : ndarray
        Placement and CPU shares, fixed for every slot of the frame.
    info : dict
        ``iterations`` spent on placement search (0 without search).

    Raises
    ------
    InfeasibleDemand
        EERA only, when the edge cannot absorb the frame demand.
    """
    kind = BaselineKind(kind)
    solver = solver or SolverConfig()
    check_dimensions(config, w=w_frame)
    L, S = config.n_servers, config.n_services
    if kind is BaselineKind.CPO:
        return np.zeros((L, S), dtype=int), np.zeros((L, S)), {"iterations": 0}
    if kind is BaselineKind.FSP:
        X = greedy_fill(config, np.arange(S))
        return X, solve_inner(X, w_frame, config, solver).y, {"iterations": 0}
    if kind is BaselineKind.PSP:
        X = greedy_fill(config, popularity_order(w_frame.totals))
        return X, solve_inner(X, w_frame, config, solver).y, {"iterations": 0}
    if kind is BaselineKind.NSP:
        X = greedy_fill(config, np.array([popularity_order(row) for row in w_frame.counts]))
        sol = solve_inner(X, w_frame, config, solver, caps=local_caps(w_frame))
        return X, sol.y, {"iterations": 0}
    if kind is BaselineKind.EERA:
        X = greedy_fill(config, popularity_order(w_frame.totals))
        X = cover_services(X, config, w_frame.totals)
        _equal_split_solution(X, w_frame, config, solver, allow_cloud=False)  # raises if infeasible
        return X, equal_allocation(X, config), {"iterations": 0}
    if kind is BaselineKind.ECEERA:
        trace = gibbs_optimize(config, w_frame, gibbs or GibbsConfig(), solver,
                               scorer=lambda X: _equal_split_solution(X, w_frame, config, solver))
        return trace.x, equal_allocation(trace.x, config), {"iterations": trace.iterations}
    raise AssertionError(f"unhandled baseline {kind}")


def baseline_slot_schedule(kind, X, Y, w_slot, config, solver=None, z0=None):
    """Slot-level schedule for a baseline given its frame decision.

    Returns
    -------
    ScheduleResult
    """
    kind = BaselineKind(kind)
    solver = solver or SolverConfig()
    if kind is BaselineKind.CPO:
        Z = cloud_only_schedule(config)
        return ScheduleResult(Z, objective(X, Y, Z, w_slot, config), 0, True)
    if kind is BaselineKind.NSP:
        return solve_schedule(X, Y, w_slot, config, solver, z0=z0, caps=local_caps(w_slot))
    if kind is BaselineKind.EERA:
        return solve_schedule(X, Y, w_slot, config, solver, z0=z0, allow_cloud=False)
    if kind in (BaselineKind.FSP, BaselineKind.PSP, BaselineKind.ECEERA):
        return solve_schedule(X, Y, w_slot, config, solver, z0=z0)
    raise AssertionError(f"unhandled baseline {kind}")


__all__ = [
    "BaselineKind", "baseline_frame_decision", "baseline_slot_schedule",
    "greedy_fill", "cover_services", "popularity_order", "local_caps", "InfeasibleDemand",
]
