"""Alternating minimisation over allocation and shadow schedule for a fixed placement."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import check_dimensions, cloud_only_schedule, objective
from .exceptions import InfeasibleDemand
from .provisioning import gammas, optimal_allocation
from .scheduling import SolverConfig, admissible_rows, initial_schedule, solve_schedule

#: Halvings of the edge share tried when the starting schedule cannot be stabilised.
RETRY_BUDGET = 8


@dataclass
class InnerSolution:
    y: np.ndarray
    z: np.ndarray  # shadow schedule, used only to score (X, Y)
    objective: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def _budgeted_capacity(X, w, config):
    """Tasks each placed queue could absorb under an equal split of the budgeted CPU."""
    X = np.asarray(X) != 0
    k = X.sum(axis=1)
    bound = np.clip(gammas(X, config), 0.0, 1.0)
    share = np.divide(bound, k, out=np.zeros_like(bound), where=k > 0)
    return X * (share * config.F * w.interval_length)[:, None] / config.c


def solve_inner(X, w, config, solver=None, max_rounds=100, tolerance=1e-6, caps=None):
    """Alternate the closed-form allocation and the sub-gradient schedule.

    Each round runs the schedule step warm-started from the previous
    schedule and then the exact allocation step, so the objective never
    increases between rounds.  Stops once two consecutive round objectives
    differ by at most ``tolerance`` seconds.

    Parameters
    ----------
    caps : ndarray, optional
        Upper bounds on the schedule, forwarded to :func:`solve_schedule`.
    """
    solver = solver or SolverConfig()
    check_dimensions(config, X=X, w=w)
    X = (np.asarray(X) != 0).astype(int)
    L, S = X.shape
    cap = np.ones((L + 1, S)) if caps is None else np.asarray(caps, dtype=float)

    if not X.any():
        Y = np.zeros((L, S))
        Z = cloud_only_schedule(config)
        f = objective(X, Y, Z, w, config)
        return InnerSolution(Y, Z, f, 1, True, [f])

    adm = admissible_rows(X, np.ones((L, S)), True, cap)
    capacity = _budgeted_capacity(X, w, config)
    share = 0.5
    for _ in range(RETRY_BUDGET):
        Z = initial_schedule(capacity, w, adm, cap, share=share)
        try:
            kkt = optimal_allocation(X, Z, w, config)
            break
        except InfeasibleDemand:
            share /= 2
    else:
        Y = np.zeros((L, S))
        Z = cloud_only_schedule(config)
        f = objective(X, Y, Z, w, config)
        return InnerSolution(Y, Z, f, 0, False, [f])

    Y = kkt.y
    f_prev = objective(X, Y, Z, w, config)
    history = [f_prev]
    converged = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        Z = solve_schedule(X, Y, w, config, solver, z0=Z, caps=caps).z
        Y = optimal_allocation(X, Z, w, config).y
        f = objective(X, Y, Z, w, config)
        history.append(f)
        if abs(f - f_prev) <= tolerance:
            converged = True
            break
        f_prev = f
    return InnerSolution(Y, Z, float(history[-1]), rounds, converged, history)
