"""Gibbs-sampling search over service placements.

The chain state is the placement matrix.  Each step picks one server
uniformly, draws a candidate row for it uniformly from the rows that fit
its storage, scores the candidate with the inner solver, and moves with the
logistic probability ``1 / (1 + exp((theta_new - theta_old) / omega))``.
Its stationary law is ``pi(X) ~ exp(-theta(X) / omega)``, which concentrates
on the best placements as ``omega`` shrinks.
"""

from __future__ import annotations

import itertools
import json
import threading
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .inner import solve_inner
from .scheduling import SolverConfig

#: Rejection-sampling retries when the row space is too large to enumerate.
MAX_RETRIES = 64
#: Largest service count whose row space is enumerated explicitly.
ENUMERATE_UP_TO = 16


@dataclass(frozen=True)
class GibbsConfig:
    omega: float = 0.001
    max_iters: int = 500
    patience: int = 100
    rng_seed: int = 0
    chain_mode: bool = False  # pure Markov chain: no patience stop, record every state

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class GibbsStep:
    iteration: int
    server: int
    candidate: tuple
    feasible: bool
    accepted: bool
    theta_before: float
    theta_after: float


@dataclass
class GibbsTrace:
    steps: list
    x: np.ndarray
    y: np.ndarray
    z_shadow: np.ndarray
    theta: float
    iterations: int
    states: list = field(default_factory=list)  # state key after each step (chain mode)

    def to_json(self):
        return json.dumps({
            "steps": [asdict(s) for s in self.steps],
            "x": self.x.tolist(),
            "y": self.y.tolist(),
            "z_shadow": self.z_shadow.tolist(),
            "theta": self.theta,
            "iterations": self.iterations,
            "states": [list(s) for s in self.states],
        }, sort_keys=True)


@dataclass
class Proposal:
    server: int
    row: np.ndarray
    noop: bool


def storage_feasible_rows(server, config):
    """All 0/1 rows whose storage fits on ``server`` (None when too many to list)."""
    S = config.n_services
    if S > ENUMERATE_UP_TO:
        return None
    rows = np.array(list(itertools.product((0, 1), repeat=S)), dtype=int)
    return rows[rows @ config.m <= config.M[server] + 1e-12]


def is_feasible_placement(row, server, config):
    """Row fits in storage and leaves part of the budget for compute."""
    row = np.asarray(row) != 0
    if config.m[row].sum() > config.M[server] + 1e-12:
        return False
    return bool(config.storage_cost_matrix[server, row].sum() < config.budgets[server])


def propose(X, rng, config, row_spaces=None):
    """Pick a server uniformly and a candidate row uniformly from its row space.

    The current row is part of the row space; drawing it yields a no-op
    proposal.  Without an enumerated row space, rows are drawn by rejection
    from ``{0, 1}^S`` and fall back to a single-bit flip after
    ``MAX_RETRIES`` misses.
    """
    k = int(rng.integers(config.n_servers))
    current = np.asarray(X[k])
    space = row_spaces[k] if row_spaces is not None else storage_feasible_rows(k, config)
    if space is not None:
        row = space[int(rng.integers(len(space)))].copy()
    else:
        row = None
        for _ in range(MAX_RETRIES):
            cand = rng.integers(0, 2, size=config.n_services)
            if cand @ config.m <= config.M[k] + 1e-12:
                row = cand
                break
        if row is None:
            row = current.copy()
            bit = int(rng.integers(config.n_services))
            row[bit] = 1 - row[bit]
            if row @ config.m > config.M[k] + 1e-12:
                row = current.copy()
    return Proposal(k, row.astype(int), bool(np.array_equal(row, current)))


def acceptance_probability(theta_new, theta_old, omega):
    """Logistic acceptance ``1 / (1 + exp((theta_new - theta_old) / omega))``."""
    return float(expit(-(theta_new - theta_old) / omega))


class ScoreCache:
    """Thread-safe memo of inner solutions keyed by placement."""

    def __init__(self):
        self._store = {}
        self._lock = threading.Lock()
        self.misses = 0

    def get(self, X, compute):
        key = np.asarray(X, dtype=np.int8).tobytes()
        with self._lock:
            hit = self._store.get(key)
        if hit is not None:
            return hit
        value = compute()
        with self._lock:
            self._store.setdefault(key, value)
            self.misses += 1
        return value

    def __len__(self):
        return len(self._store)


def gibbs_optimize(config, w_frame, gibbs=None, solver=None, initial=None, cache=None,
                   scorer=None):
    """Search placements by Gibbs sampling and return the best state visited.

    Parameters
    ----------
    initial : ndarray, optional
        Starting placement; cloud-only (all zeros) by default.
    cache : ScoreCache, optional
        Shared memo of inner solutions.
    scorer : callable, optional
        ``scorer(X) -> InnerSolution`` replacing the default inner solve.

    Returns
    -------
    GibbsTrace
        Per-step records plus the best-ever placement, its allocation,
        shadow schedule and objective.
    """
    gibbs = gibbs or GibbsConfig()
    solver = solver or SolverConfig()
    cache = cache if cache is not None else ScoreCache()
    rng = np.random.default_rng(gibbs.rng_seed)
    L, S = config.n_servers, config.n_services
    row_spaces = [storage_feasible_rows(k, config) for k in range(L)]

    if scorer is None:
        def scorer(X):
            return solve_inner(X, w_frame, config, solver)

    def score(X):
        return cache.get(X, lambda: scorer(X))

    X = np.zeros((L, S), dtype=int) if initial is None else (np.asarray(initial) != 0).astype(int)
    for k in range(L):
        if not is_feasible_placement(X[k], k, config):
            raise ValueError(f"initial placement row {k} is infeasible")
    sol = score(X)
    best_x, best = X.copy(), sol
    steps = []
    states = []
    stale = 0
    it = 0
    for it in range(1, gibbs.max_iters + 1):
        prop = propose(X, rng, config, row_spaces)
        feasible = not prop.noop and is_feasible_placement(prop.row, prop.server, config)
        accepted = False
        theta_before = sol.objective
        if feasible:
            cand = X.copy()
            cand[prop.server] = prop.row
            cand_sol = score(cand)
            rho = acceptance_probability(cand_sol.objective, sol.objective, gibbs.omega)
            if rng.random() < rho:
                X, sol = cand, cand_sol
                accepted = True
        steps.append(GibbsStep(it, prop.server, tuple(int(v) for v in prop.row), feasible,
                               accepted, theta_before, sol.objective))
        if gibbs.chain_mode:
            states.append(tuple(int(v) for v in X.ravel()))
        if sol.objective < best.objective:
            best_x, best = X.copy(), sol
            stale = 0
        else:
            stale += 1
        if not gibbs.chain_mode and stale >= gibbs.patience:
            break
    return GibbsTrace(steps=steps, x=best_x, y=best.y, z_shadow=best.z,
                      theta=best.objective, iterations=it, states=states)
