import numpy as np
import pytest
from hypothesis import settings

from rmws.domain import EdgeServer, Service, SystemConfig, WorkloadSnapshot

settings.register_profile("repo", max_examples=60, deadline=None)
settings.load_profile("repo")


def make_config(F=(100.0,), M=(100.0,), Pm=(20.0,), Pf=(20.0,), m=(10.0,), c=(0.2,),
                phi=None, phic=None, budget=None, **kw):
    """Small explicit system; scalars broadcast over servers or services."""
    L, S = len(F), len(m)
    phi = phi or (0.01,) * S
    phic = phic or (0.1,) * S
    budget = budget or (None,) * L
    servers = [EdgeServer(F[i], M[i], Pm[i], Pf[i], budget[i]) for i in range(L)]
    services = [Service(m[s], c[s], phi[s], phic[s]) for s in range(S)]
    return SystemConfig(servers, services, **kw)


def snapshot(counts, dt=60.0):
    return WorkloadSnapshot(np.asarray(counts, dtype=float), dt)


@pytest.fixture
def small_system():
    """Two servers, three services, a frame forecast and a full placement that fits."""
    from rmws.instances import table1_config
    from rmws.workload import frame_forecast

    cfg = table1_config(3, n_servers=2, n_services=3)
    w = frame_forecast(cfg, 0)
    X = np.zeros((2, 3), dtype=int)
    for i in range(2):
        for s in range(3):
            X[i, s] = 1
            if X[i] @ cfg.m > cfg.M[i] or (cfg.storage_cost_matrix[i] * X[i]).sum() >= cfg.budgets[i]:
                X[i, s] = 0
    return cfg, w, X
