"""Random system instances drawn from the default parameter ranges."""

from __future__ import annotations

import numpy as np

from .domain import EdgeServer, Service, SystemConfig

#: Uniform ranges of the default setup.
STORAGE_CAPACITY = (50.0, 200.0)  # GB
COMPUTE_CAPACITY = (50.0, 150.0)  # GHz
STORAGE_REQ = (10.0, 40.0)  # GB
COMPUTE_REQ = (0.1, 0.5)  # giga-cycles per task
STORAGE_PRICE = (10.0, 40.0)  # per hour
COMPUTE_PRICE = (10.0, 50.0)  # per hour


def table1_config(seed=0, n_servers=4, n_services=10, compute_scale=1.0, storage_scale=1.0,
                  compute_req_scale=1.0, storage_req_scale=1.0, **overrides):
    """Draw a system from the default ranges.

    Servers and services come from separate child streams and are drawn one
    at a time, so the first ``k`` services are identical for every
    ``n_services >= k`` and server draws ignore the service count.

    Parameters
    ----------
    compute_scale, storage_scale : float
        Multipliers on every server's CPU and storage capacity.
    compute_req_scale, storage_req_scale : float
        Multipliers on every service's compute and storage requirement.
    **overrides
        Remaining :class:`SystemConfig` fields (``budget_coefficient``,
        ``frames`` ...).
    """
    server_ss, service_ss = np.random.SeedSequence(seed).spawn(2)
    srng = np.random.default_rng(server_ss)
    servers = []
    for _ in range(n_servers):
        F, M, Pm, Pf = srng.uniform(*np.array([COMPUTE_CAPACITY, STORAGE_CAPACITY,
                                               STORAGE_PRICE, COMPUTE_PRICE]).T)
        servers.append(EdgeServer(F * compute_scale, M * storage_scale, Pm, Pf))
    vrng = np.random.default_rng(service_ss)
    services = []
    for _ in range(n_services):
        m, c = vrng.uniform(*np.array([STORAGE_REQ, COMPUTE_REQ]).T)
        services.append(Service(m * storage_req_scale, c * compute_req_scale))
    overrides.setdefault("rng_seed", seed)
    return SystemConfig(servers, services, **overrides)
