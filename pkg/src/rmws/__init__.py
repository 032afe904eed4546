"""Two-timescale resource management and workload scheduling for cloud-assisted MEC."""

from .domain import EdgeServer, Service, SystemConfig, WorkloadSnapshot, check_constraints, objective
from .estimators import RMWS, BaselineScheduler
from .harness import run_experiment, run_sweep
from .inner import solve_inner
from .instances import table1_config
from .placement import GibbsConfig, gibbs_optimize
from .provisioning import optimal_allocation
from .scheduling import SolverConfig, solve_schedule

__version__ = "0.1.0"

__all__ = [
    "EdgeServer", "Service", "SystemConfig", "WorkloadSnapshot", "check_constraints", "objective",
    "RMWS", "BaselineScheduler", "run_experiment", "run_sweep", "solve_inner", "table1_config",
    "GibbsConfig", "gibbs_optimize", "optimal_allocation", "SolverConfig", "solve_schedule",
]
