"""Estimator-style wrappers: ``fit`` on a frame forecast, ``predict`` a slot schedule.

``fit`` fixes the placement and the CPU shares for one frame; ``predict``
maps a slot's demand matrix to a routing matrix of shape ``(L + 1, S)``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted

from .baselines import BaselineKind, baseline_frame_decision, baseline_slot_schedule
from .domain import WorkloadSnapshot, objective
from .placement import GibbsConfig, gibbs_optimize
from .scheduling import SolverConfig, solve_schedule


def _as_snapshot(counts, config, interval):
    if isinstance(counts, WorkloadSnapshot):
        return counts
    counts = check_array(counts, dtype=np.float64, ensure_all_finite=True)
    if counts.shape != (config.n_servers, config.n_services):
        raise ValueError(f"demand has shape {counts.shape}, expected "
                         f"{(config.n_servers, config.n_services)}")
    if np.any(counts < 0):
        raise ValueError("demand must be non-negative")
    return WorkloadSnapshot(counts, interval)


class _FrameScheduler(BaseEstimator):
    """Shared slot-level behaviour; subclasses implement ``_fit_frame``."""

    def _solver(self):
        return SolverConfig(max_iters=self.solver_iters, tolerance=self.tolerance,
                            step_decay=self.step_decay)

    def _gibbs(self):
        rs = check_random_state(self.random_state)
        return GibbsConfig(omega=self.omega, max_iters=self.max_iters, patience=self.patience,
                           rng_seed=int(rs.randint(np.iinfo(np.int32).max)))

    def fit(self, forecast, y=None):
        """Fix placement and allocation from a frame-total demand matrix.

        Parameters
        ----------
        forecast : array-like of shape (n_servers, n_services) or WorkloadSnapshot
            Predicted requests over one frame.
        """
        w = _as_snapshot(forecast, self.config, self.config.frame_length)
        X, Y, iters = self._fit_frame(w)
        X = np.asarray(X, dtype=int)
        Y = np.asarray(Y, dtype=float)
        X.setflags(write=False)
        Y.setflags(write=False)
        self.placement_, self.allocation_, self.n_iter_ = X, Y, int(iters)
        return self

    def schedule(self, slot_counts):
        """Full :class:`~rmws.scheduling.ScheduleResult` for one slot."""
        check_is_fitted(self, "placement_")
        w = _as_snapshot(slot_counts, self.config, self.config.slot_length)
        return self._schedule_slot(w)

    def predict(self, slot_counts):
        """Routing matrix for one slot's demand."""
        return self.schedule(slot_counts).z

    def score(self, slot_counts, y=None):
        """Negative total latency of the predicted schedule (higher is better)."""
        w = _as_snapshot(slot_counts, self.config, self.config.slot_length)
        Z = self.predict(w)
        return -objective(self.placement_, self.allocation_, Z, w, self.config)


class RMWS(_FrameScheduler):
    """Joint placement, provisioning and scheduling.

    Parameters
    ----------
    config : SystemConfig
    omega : float
        Gibbs temperature.
    max_iters, patience : int
        Placement search limits.
    solver_iters, tolerance, step_decay
        Sub-gradient scheduler settings.
    random_state : int, RandomState or None
        Seeds the placement chain.

    Attributes
    ----------
    placement_, allocation_ : ndarray of shape (n_servers, n_services)
    shadow_schedule_ : ndarray of shape (n_servers + 1, n_services)
        Frame-level schedule used only to score the placement.
    objective_ : float
        Frame objective of the chosen placement.
    trace_ : GibbsTrace
    """

    def __init__(self, config=None, omega=0.001, max_iters=500, patience=100, solver_iters=300,
                 tolerance=1e-6, step_decay=0.5, random_state=0):
        self.config = config
        self.omega = omega
        self.max_iters = max_iters
        self.patience = patience
        self.solver_iters = solver_iters
        self.tolerance = tolerance
        self.step_decay = step_decay
        self.random_state = random_state

    def _fit_frame(self, w):
        trace = gibbs_optimize(self.config, w, self._gibbs(), self._solver())
        self.trace_ = trace
        self.shadow_schedule_ = trace.z_shadow
        self.objective_ = trace.theta
        return trace.x, trace.y, trace.iterations

    def _schedule_slot(self, w):
        return solve_schedule(self.placement_, self.allocation_, w, self.config, self._solver())


class BaselineScheduler(_FrameScheduler):
    """One of the comparison algorithms behind the same interface as :class:`RMWS`.

    Parameters
    ----------
    kind : {"CPO", "FSP", "NSP", "PSP", "EERA", "ECEERA"}
    """

    def __init__(self, kind="CPO", config=None, omega=0.001, max_iters=500, patience=100,
                 solver_iters=300, tolerance=1e-6, step_decay=0.5, random_state=0):
        self.kind = kind
        self.config = config
        self.omega = omega
        self.max_iters = max_iters
        self.patience = patience
        self.solver_iters = solver_iters
        self.tolerance = tolerance
        self.step_decay = step_decay
        self.random_state = random_state

    def _fit_frame(self, w):
        X, Y, info = baseline_frame_decision(BaselineKind(self.kind), self.config, w,
                                             self._solver(), self._gibbs())
        return X, Y, info["iterations"]

    def _schedule_slot(self, w):
        return baseline_slot_schedule(BaselineKind(self.kind), self.placement_, self.allocation_,
                                      w, self.config, self._solver())


ALGORITHMS = ("RMWS",) + tuple(k.value for k in BaselineKind)


def make_scheduler(name, config, **params):
    """Estimator for an algorithm name (``RMWS`` or a baseline kind)."""
    if name == "RMWS":
        return RMWS(config=config, **params)
    if name in ALGORITHMS:
        return BaselineScheduler(kind=name, config=config, **params)
    raise ValueError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")
