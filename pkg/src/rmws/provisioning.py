"""Closed-form CPU provisioning for a fixed placement and schedule.

With the schedule fixed, the compute term of server ``i`` for service ``s``
is ``w_s * dt / (y_s * F * dt - w_s)`` with ``w_s = z_s * n_s * c_s``.  The
optimum spreads the slack above each stability floor ``w_s / (F dt)`` in
proportion to ``sqrt(w_s)``, and spends either the whole CPU (budget not
binding) or exactly the budget left after storage costs.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .domain import check_dimensions
from .exceptions import InfeasibleDemand, NegativeGamma


class ActiveCase(str, Enum):
    BUDGET = "budget-limited"  # gamma < 1
    CAPACITY = "capacity-limited"  # gamma >= 1
    IDLE = "idle"  # nothing placed


@dataclass
class KktSolution:
    y: np.ndarray
    lam: np.ndarray  # multiplier of sum(y) <= 1
    mu: np.ndarray  # multiplier of the budget constraint
    case: list
    gamma: np.ndarray


def gamma(i, X, config):
    """Compute-budget headroom of server ``i`` in units of its full CPU."""
    placed = np.asarray(X[i]) != 0
    storage = config.storage_cost_matrix[i, placed].sum()
    return float((config.budgets[i] - storage) / config.Pf[i])


def gammas(X, config):
    storage = (config.storage_cost_matrix * (np.asarray(X) != 0)).sum(axis=1)
    return (config.budgets - storage) / config.Pf


def routed_work(X, Z, w, config):
    """``w[i, s] = z * n_s * c_s`` restricted to placed entries (giga-cycles)."""
    return np.where(np.asarray(X) != 0, np.asarray(Z)[:-1] * w.totals * config.c, 0.0)


def optimal_allocation(X, Z, w, config):
    """Optimal ``Y`` for fixed ``(X, Z)`` with its KKT multipliers.

    Raises
    ------
    NegativeGamma
        A server hosting services has no budget left after storage.
    InfeasibleDemand
        The routed work on a server exceeds its budgeted capacity, so no
        allocation keeps every queue stable.
    """
    check_dimensions(config, X=X, Z=Z, w=w)
    L, S = config.n_servers, config.n_services
    work = routed_work(X, Z, w, config)
    G = gammas(X, config)
    Y = np.zeros((L, S))
    lam = np.zeros(L)
    mu = np.zeros(L)
    cases = []
    dt = w.interval_length
    for i in range(L):
        placed = np.asarray(X[i]) != 0
        if not placed.any():
            cases.append(ActiveCase.IDLE)
            continue
        if G[i] <= 0:
            raise NegativeGamma(i, G[i])
        case = ActiveCase.BUDGET if G[i] < 1 else ActiveCase.CAPACITY
        cases.append(case)
        bound = min(1.0, G[i])
        D = config.F[i] * dt
        wi = work[i]
        busy = wi > 0
        if not busy.any():
            continue
        slack = bound * D - wi.sum()
        if slack <= 0:
            raise InfeasibleDemand(i)
        root = np.sqrt(wi[busy])
        Y[i, busy] = root * slack / (root.sum() * D) + wi[busy] / D
        # multiplier of whichever constraint is tight
        nu = (root.sum() * np.sqrt(config.F[i]) * dt / slack) ** 2
        if case is ActiveCase.BUDGET:
            mu[i] = nu / config.Pf[i]
        else:
            lam[i] = nu
    return KktSolution(y=Y, lam=lam, mu=mu, case=cases, gamma=G)


def equal_allocation(X, config):
    """Split ``min(1, gamma_i)`` evenly over the services hosted on each server."""
    X = np.asarray(X) != 0
    k = X.sum(axis=1)
    bound = np.minimum(1.0, gammas(X, config))
    if np.any((k > 0) & (bound <= 0)):
        i = int(np.flatnonzero((k > 0) & (bound <= 0))[0])
        raise NegativeGamma(i, float(bound[i]))
    share = np.divide(bound, k, out=np.zeros_like(bound), where=k > 0)
    return X * share[:, None]
