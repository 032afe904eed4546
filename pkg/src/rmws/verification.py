"""Independent numeric oracles for the production solvers.

Nothing here calls the solvers it checks: latencies, feasibility tests,
projections and the allocation optimum are re-derived from the model so a
shared bug cannot hide on both sides of a comparison.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import DegenerateInstance, NonConvergence, TooLarge

#: Desk-scale limit on the placement space enumerated by brute force.
BRUTE_FORCE_LIMIT = 4096


@dataclass
class ProbeReport:
    name: str
    samples: int
    violations: int
    worst_margin: float
    tolerance: float
    passed: bool
    expect_violation: bool = False
    detail: str = ""

    def to_json(self):
        d = asdict(self)
        d["worst_margin"] = float(d["worst_margin"])
        return json.dumps(d, sort_keys=True)


@dataclass
class ProbeInstance:
    """A system, a workload and whichever decision blocks the probe holds fixed."""

    config: object
    w: object
    X: np.ndarray
    Y: np.ndarray = None
    Z: np.ndarray = None


# -- independent model evaluation ------------------------------------------

def reference_latency(X, Y, Z, w, config):
    """Total latency by direct summation; ``inf`` when a loaded queue is unstable."""
    X, Y, Z = np.asarray(X), np.asarray(Y, float), np.asarray(Z, float)
    n, dt = np.asarray(w.counts, float), float(w.interval_length)
    L, S = X.shape
    total = 0.0
    for s in range(S):
        ns = n[:, s].sum()
        svc = config.services[s]
        total += Z[L, s] * ns * svc.cloud_delay
        for i in range(L):
            load = Z[i, s] * ns
            if load <= 0:
                continue
            if not X[i, s]:
                return np.inf
            rate = Y[i, s] * config.servers[i].compute_capacity / svc.compute_req
            if rate - load / dt <= 0:
                return np.inf
            total += load / (rate - load / dt)
            total += max(load - n[i, s], 0.0) * svc.edge_delay
    return total


def _row_ok(row, i, config):
    sv = config.servers[i]
    m = np.array([svc.storage_req for svc in config.services])
    if (m * row).sum() > sv.storage_capacity:
        return False
    budget = sv.budget if sv.budget is not None else config.budget_coefficient * (
        sv.storage_price + sv.compute_price)
    return (m * row).sum() / sv.storage_capacity * sv.storage_price < budget


def _headroom(X, config):
    """Compute-budget headroom per server in CPU fractions, from raw fields."""
    out = []
    for i, sv in enumerate(config.servers):
        budget = sv.budget if sv.budget is not None else config.budget_coefficient * (
            sv.storage_price + sv.compute_price)
        stored = sum(svc.storage_req for s, svc in enumerate(config.services) if X[i, s])
        out.append((budget - stored / sv.storage_capacity * sv.storage_price) / sv.compute_price)
    return np.array(out)


def _work(X, Z, w, config):
    ns = np.asarray(w.counts, float).sum(axis=0)
    c = np.array([svc.compute_req for svc in config.services])
    return np.where(np.asarray(X) != 0, np.asarray(Z)[:-1] * ns * c, 0.0)


# -- placement ---------------------------------------------------------------

def brute_force_placement(config, w, solver=None, inner=None, return_all=False):
    """Enumerate every feasible placement and score it with the inner solver.

    Parameters
    ----------
    inner : callable, optional
        ``inner(X, w, config, solver) -> solution with .objective``;
        :func:`rmws.inner.solve_inner` by default.
    return_all : bool
        Also return ``{state tuple: objective}`` for every feasible state.

    Returns
    -------
    X_best, theta_best[, table]
        Ties go to the lexicographically smallest flattened placement.
    """
    if inner is None:
        from .inner import solve_inner as inner
    L, S = config.n_servers, config.n_services
    if 2 ** (L * S) > BRUTE_FORCE_LIMIT:
        raise TooLarge(f"2^{L * S} placements exceed the brute-force limit {BRUTE_FORCE_LIMIT}")
    rows = [[r for r in itertools.product((0, 1), repeat=S) if _row_ok(np.array(r), i, config)]
            for i in range(L)]
    best_x, best = None, np.inf
    table = {}
    for combo in itertools.product(*rows):
        X = np.array(combo, dtype=int)
        theta = float(inner(X, w, config, solver).objective)
        table[tuple(X.ravel())] = theta
        if theta < best:
            best_x, best = X, theta
    return (best_x, best, table) if return_all else (best_x, best)


def stationarity_check(trace, omega, thetas, burn_in=10_000, tolerance=0.05):
    """Total-variation distance between visited states and ``exp(-theta / omega)``.

    ``thetas`` maps each feasible state (flattened tuple) to its objective,
    e.g. the table from :func:`brute_force_placement`.
    """
    states = list(thetas)
    energy = np.array([thetas[s] for s in states])
    logp = -(energy - energy.min()) / omega
    target = np.exp(logp - logp.max())
    target /= target.sum()
    visits = trace.states[burn_in:]
    if not visits:
        raise ValueError("trace has no states after burn-in; run the chain in chain mode")
    index = {s: k for k, s in enumerate(states)}
    counts = np.zeros(len(states))
    for v in visits:
        counts[index[tuple(v)]] += 1
    empirical = counts / counts.sum()
    tv = 0.5 * np.abs(empirical - target).sum()
    return ProbeReport("stationarity", len(visits), int(tv > tolerance), float(tv), tolerance,
                       bool(tv <= tolerance),
                       detail=json.dumps({"target": target.tolist(), "empirical": empirical.tolist()}))


# -- allocation --------------------------------------------------------------

def kkt_multipliers(X, Z, config, w):
    """Multipliers of the CPU cap (``lam``) and of the budget (``mu``) per server.

    ``lam = (sum sqrt(w F dt^2) / (F dt - sum w))^2`` when the CPU cap binds
    and ``mu = (sum sqrt(w F dt^2))^2 / (P^f (gamma F dt - sum w)^2)`` when
    the budget binds.
    """
    X = np.asarray(X) != 0
    dt = float(w.interval_length)
    work = _work(X, Z, w, config)
    head = _headroom(X, config)
    L = X.shape[0]
    lam, mu = np.zeros(L), np.zeros(L)
    for i, sv in enumerate(config.servers):
        wi = work[i][work[i] > 0]
        if wi.size == 0:
            continue
        F = sv.compute_capacity
        top = np.sqrt(wi * F * dt ** 2).sum()
        if head[i] >= 1:
            lam[i] = (top / (F * dt - wi.sum())) ** 2
        else:
            mu[i] = top ** 2 / (sv.compute_price * (head[i] * F * dt - wi.sum()) ** 2)
    return lam, mu


def kkt_residual(X, Z, Y, config, w):
    """Largest relative stationarity, slackness or feasibility residual of ``Y``."""
    X = np.asarray(X) != 0
    Y = np.asarray(Y, float)
    dt = float(w.interval_length)
    work = _work(X, Z, w, config)
    head = _headroom(X, config)
    lam, mu = kkt_multipliers(X, Z, config, w)
    worst = 0.0
    for i, sv in enumerate(config.servers):
        busy = work[i] > 0
        if not busy.any():
            continue
        F = sv.compute_capacity
        bound = min(1.0, head[i])
        margin = Y[i, busy] * F * dt - work[i, busy]
        if np.any(margin <= 0):
            return np.inf
        price = lam[i] + mu[i] * sv.compute_price
        grad = -work[i, busy] * F * dt ** 2 / margin ** 2
        worst = max(worst, np.max(np.abs(grad + price)) / price)
        used = Y[i, X[i]].sum()
        worst = max(worst, abs(used - bound) / bound)  # the priced constraint must be tight
        worst = max(worst, -Y[i].min(initial=0.0))
    return float(worst)


def p3_optimal_value(X, Z, w, config):
    """Optimal compute latency for fixed ``(X, Z)``: ``sum_i (sum sqrt(w/F))^2 / room``."""
    X = np.asarray(X) != 0
    dt = float(w.interval_length)
    work = _work(X, Z, w, config)
    head = _headroom(X, config)
    total = 0.0
    for i, sv in enumerate(config.servers):
        wi = work[i][work[i] > 0]
        if wi.size:
            F = sv.compute_capacity
            room = min(1.0, head[i]) - wi.sum() / (F * dt)
            total += np.sqrt(wi / F).sum() ** 2 / room
    return float(total)


def _project_capped_sum(v, total, floor):
    """Euclidean projection onto ``{u >= floor, sum u <= total}`` by bisection."""
    u = np.maximum(v, floor)
    if u.sum() <= total:
        return u
    lo, hi = v.min() - total, v.max()
    for _ in range(200):
        if hi - lo <= 1e-12 * (1.0 + abs(hi)):
            break
        tau = 0.5 * (lo + hi)
        if np.maximum(v - tau, floor).sum() > total:
            lo = tau
        else:
            hi = tau
    tau = 0.5 * (lo + hi)
    free = v - tau > floor
    if free.any():  # exact threshold on the identified free set
        tau = (v[free].sum() - (total - floor * (~free).sum())) / free.sum()
    return np.maximum(v - tau, floor)


def numeric_p3_solver(X, Z, w, config, tol=1e-9, max_iters=1_000_000):
    """Allocation by projected gradient on each server's slack variables.

    Writes ``y = w / (F dt) + u`` so the problem becomes minimising
    ``sum (w / F) / u`` over ``{u > 0, sum u <= room}``, and runs projected
    gradient with Barzilai-Borwein steps and Armijo backtracking until the
    projected-gradient step is at most ``tol``, or until no step the line
    search can represent lowers the objective (stationary to machine
    precision, which happens first on servers with steep gradients).

    Raises
    ------
    NonConvergence
        After ``max_iters`` iterations on some server.
    """
    X = np.asarray(X) != 0
    dt = float(w.interval_length)
    work = _work(X, Z, w, config)
    head = _headroom(X, config)
    Y = np.zeros(X.shape)
    for i, sv in enumerate(config.servers):
        busy = work[i] > 0
        if not busy.any():
            continue
        F = sv.compute_capacity
        a = work[i, busy] / F
        floor_y = work[i, busy] / (F * dt)
        room = min(1.0, head[i]) - floor_y.sum()
        if room <= 0:
            raise ValueError(f"server {i} cannot host its routed work")
        eps = 1e-15 * room
        u = np.full(a.size, room / a.size)
        f = lambda v: (a / v).sum()
        g = -a / u ** 2
        step = 1.0 / np.abs(g).max()
        for it in range(max_iters):
            if np.abs(_project_capped_sum(u - g, room, eps) - u).max() <= tol:
                break
            fu = f(u)
            while True:
                cand = _project_capped_sum(u - step * g, room, eps)
                if f(cand) <= fu + 1e-4 * g @ (cand - u) or step < 1e-300:
                    break
                step *= 0.5
            if not f(cand) < fu:  # no representable descent left
                break
            g_new = -a / cand ** 2
            s, r = cand - u, g_new - g
            u, g = cand, g_new
            sr = s @ r
            step = (s @ s) / sr if sr > 0 else 1.0 / np.abs(g).max()
        else:
            raise NonConvergence(f"projected gradient did not settle on server {i}")
        Y[i, busy] = floor_y + u
    return Y


# -- scheduling --------------------------------------------------------------

def grid_schedule(config, w, Y, resolution=1e-5):
    """Best edge share on a uniform grid for a one-server, one-service system.

    Returns
    -------
    z_edge, objective
    """
    if config.n_servers != 1 or config.n_services != 1:
        raise ValueError("grid search covers one server and one service")
    grid = np.linspace(0.0, 1.0, int(round(1.0 / resolution)) + 1)
    n_local = float(np.asarray(w.counts)[0, 0])
    sv, svc = config.servers[0], config.services[0]
    dt = float(w.interval_length)
    load = grid * n_local
    rate = float(np.asarray(Y)[0, 0]) * sv.compute_capacity / svc.compute_req
    gap = rate - load / dt
    with np.errstate(divide="ignore"):
        comp = np.where(load > 0, load / np.where(gap > 0, gap, np.nan), 0.0)
    f = comp + (1 - grid) * n_local * svc.cloud_delay
    f = np.where((load == 0) | (gap > 0), f, np.inf)
    k = int(np.nanargmin(f))
    return float(grid[k]), float(f[k])


def _simplex_grid(k, step):
    """Points of the ``k``-simplex with coordinates on a ``step`` lattice."""
    n = int(round(1.0 / step))
    pts = [c for c in itertools.product(range(n + 1), repeat=k - 1) if sum(c) <= n]
    pts = np.array(pts, dtype=float).reshape(-1, k - 1)
    return np.column_stack([pts, n - pts.sum(axis=1)]) / n


def nested_inner_oracle(X, w, config, step=0.01, chunk=256):
    """Best joint (allocation, schedule) value for two services by grid search.

    Each service's routing column runs over a ``step`` lattice of the
    simplex on its hosting servers plus the cloud; for every pair of
    columns the allocation is optimal in closed form, giving compute latency
    ``(sum sqrt(w / F))^2 / room`` per server.
    """
    X = np.asarray(X) != 0
    L, S = X.shape
    if S != 2:
        raise ValueError("the nested oracle enumerates exactly two services")
    dt = float(w.interval_length)
    n = np.asarray(w.counts, float)
    ns = n.sum(axis=0)
    F = np.array([sv.compute_capacity for sv in config.servers])
    c = np.array([svc.compute_req for svc in config.services])
    phi = np.array([svc.edge_delay for svc in config.services])
    phic = np.array([svc.cloud_delay for svc in config.services])
    bound = np.minimum(1.0, _headroom(X, config))

    cols, sep, work = [], [], []
    for s in range(S):
        hosts = np.flatnonzero(X[:, s])
        g = _simplex_grid(hosts.size + 1, step)
        Zs = np.zeros((len(g), L + 1))
        Zs[:, hosts] = g[:, :-1]
        Zs[:, L] = g[:, -1]
        routed = Zs[:, :L] * ns[s]
        sep.append((np.maximum(routed - n[:, s], 0.0) * phi[s]).sum(axis=1) + Zs[:, L] * ns[s] * phic[s])
        work.append(routed * c[s])
        cols.append(Zs)
    best, arg = np.inf, None
    w1 = work[1]
    for lo in range(0, len(cols[0]), chunk):
        w0 = work[0][lo:lo + chunk, None, :]  # (a, 1, L)
        tot = w0 + w1[None, :, :]
        room = bound - tot / (F * dt)
        root = np.sqrt(w0 / F) + np.sqrt(w1[None] / F)
        with np.errstate(divide="ignore", invalid="ignore"):
            comp = np.where(tot > 0, np.where(room > 0, root**2 / room, np.inf), 0.0).sum(axis=2)
        val = comp + sep[0][lo:lo + chunk, None] + sep[1][None, :]
        k = np.unravel_index(np.argmin(val), val.shape)
        if val[k] < best:
            best, arg = float(val[k]), (lo + k[0], k[1])
    Z = np.column_stack([cols[0][arg[0]], cols[1][arg[1]]])
    return best, Z


# -- convexity ---------------------------------------------------------------

def _sample_allocation(rng, X, Z, w, config):
    """Random interior point of the allocation feasible set for fixed ``(X, Z)``."""
    X = np.asarray(X) != 0
    dt = float(w.interval_length)
    work = _work(X, Z, w, config)
    head = _headroom(X, config)
    Y = np.zeros(X.shape)
    for i, sv in enumerate(config.servers):
        hosted = np.flatnonzero(X[i])
        if hosted.size == 0:
            continue
        floor_y = work[i, hosted] / (sv.compute_capacity * dt)
        room = min(1.0, head[i]) - floor_y.sum()
        if room <= 0:
            raise DegenerateInstance(f"server {i} has no allocation interior")
        share = rng.dirichlet(np.ones(hosted.size)) * room * rng.uniform(0.05, 1.0)
        Y[i, hosted] = floor_y + np.maximum(share, 1e-9 * room)
    return Y


def _sample_schedule(rng, X, Y, w, config, tries=200):
    """Random schedule that keeps every loaded queue strictly stable."""
    X = np.asarray(X) != 0
    L, S = X.shape
    dt = float(w.interval_length)
    ns = np.asarray(w.counts, float).sum(axis=0)
    c = np.array([svc.compute_req for svc in config.services])
    F = np.array([sv.compute_capacity for sv in config.servers])
    Z = np.zeros((L + 1, S))
    for s in range(S):
        hosts = np.flatnonzero(X[:, s] & (np.asarray(Y)[:, s] > 0))
        limit = np.asarray(Y)[hosts, s] * F[hosts] * dt / (ns[s] * c[s]) if ns[s] > 0 else np.inf
        for _ in range(tries):
            p = rng.dirichlet(np.ones(hosts.size + 1))
            if np.all(p[:-1] < limit):
                break
            p[:-1] *= rng.uniform(0.0, 1.0) * np.min(limit / np.maximum(p[:-1], 1e-300))
            p[-1] = 1.0 - p[:-1].sum()
            if np.all(p[:-1] < limit):
                break
        else:
            raise DegenerateInstance(f"no stable schedule found for service {s}")
        Z[hosts, s] = p[:-1]
        Z[L, s] = p[-1]
    return Z


def _allocation_latency(X, Y, Z, w, config):
    """Compute-only latency of the allocation problem."""
    X = np.asarray(X) != 0
    dt = float(w.interval_length)
    work = _work(X, Z, w, config)
    F = np.array([sv.compute_capacity for sv in config.servers])[:, None]
    margin = np.asarray(Y) * F * dt - work
    busy = work > 0
    if np.any(margin[busy] <= 0):
        return np.inf
    return float((work[busy] * dt / margin[busy]).sum())


def convexity_probe(tag, instance, n_pairs=1000, rng_seed=0, tol=1e-9):
    """Midpoint-convexity test on random feasible pairs.

    ``P3`` varies the allocation with ``(X, Z)`` fixed, ``P4`` varies the
    schedule with ``(X, Y)`` fixed and ``P2`` varies both.  P3 and P4 pass
    with no violation; P2 passes once a violation is found, since the joint
    problem is not convex.  ``worst_margin`` is the largest relative excess
    ``(f(mid) - mean) / max(1, |mean|)`` seen.
    """
    rng = np.random.default_rng(rng_seed)
    cfg, w, X = instance.config, instance.w, np.asarray(instance.X)
    if tag == "P3":
        def draw():
            return instance.Z, _sample_allocation(rng, X, instance.Z, w, cfg)
        f = lambda Z, Y: _allocation_latency(X, Y, Z, w, cfg)
    elif tag == "P4":
        def draw():
            return _sample_schedule(rng, X, instance.Y, w, cfg), instance.Y
        f = lambda Z, Y: reference_latency(X, Y, Z, w, cfg)
    elif tag == "P2":
        # a common stable schedule makes the allocation interior non-empty
        base_z = instance.Z if instance.Z is not None else _sample_schedule(
            rng, X, np.where(X != 0, 1.0, 0.0), w, cfg)

        def draw():
            Z = base_z * rng.uniform(0.0, 1.0, size=(1, X.shape[1]))
            Z[-1] = 1.0 - Z[:-1].sum(axis=0)
            return Z, _sample_allocation(rng, X, Z, w, cfg)
        f = lambda Z, Y: reference_latency(X, Y, Z, w, cfg)
    else:
        raise ValueError(f"unknown problem tag {tag!r}")

    violations, worst = 0, -np.inf
    for _ in range(n_pairs):
        (za, ya), (zb, yb) = draw(), draw()
        fa, fb = f(za, ya), f(zb, yb)
        fm = f(0.5 * (za + zb), 0.5 * (ya + yb))
        mean = 0.5 * (fa + fb)
        if not np.isfinite(mean) or not np.isfinite(fm):
            raise DegenerateInstance(f"{tag} probe drew an unstable point")
        excess = (fm - mean) / max(1.0, abs(mean))
        worst = max(worst, excess)
        if excess > tol:
            violations += 1
            if tag == "P2":
                break
    samples = _ + 1
    expect = tag == "P2"
    passed = violations > 0 if expect else violations == 0
    return ProbeReport(f"convexity-{tag}", samples, violations, float(worst), tol, passed, expect)


def run_probe_suite(seed=0, n_pairs=1000):
    """Convexity, allocation and placement probes on small seeded instances."""
    from .inner import solve_inner
    from .instances import table1_config
    from .placement import GibbsConfig, gibbs_optimize
    from .provisioning import optimal_allocation
    from .workload import frame_forecast

    reports = []
    cfg = table1_config(seed, n_servers=2, n_services=3)
    w = frame_forecast(cfg, 0)
    X = np.ones((2, 3), dtype=int)
    for i in range(2):
        while not _row_ok(X[i], i, cfg):
            X[i, np.flatnonzero(X[i])[-1]] = 0
    sol = solve_inner(X, w, cfg)
    inst = ProbeInstance(cfg, w, X, sol.y, sol.z)
    reports.append(convexity_probe("P3", inst, n_pairs, seed))
    reports.append(convexity_probe("P4", inst, n_pairs, seed))

    found = None
    for k in range(5):
        one = table1_config(seed + k, n_servers=1, n_services=1)
        rep = convexity_probe("P2", ProbeInstance(one, frame_forecast(one, 0), np.ones((1, 1), int)),
                              10 * n_pairs, seed + k)
        if found is None or rep.passed:
            found = rep
        if rep.passed:
            break
    reports.append(found)

    kkt = optimal_allocation(X, sol.z, w, cfg)
    res = kkt_residual(X, sol.z, kkt.y, cfg, w)
    reports.append(ProbeReport("kkt-residual", 1, int(res > 1e-8), res, 1e-8, res <= 1e-8))
    gap = float(np.abs(numeric_p3_solver(X, sol.z, w, cfg) - kkt.y).max())
    reports.append(ProbeReport("allocation-oracle", 1, int(gap > 1e-6), gap, 1e-6, gap <= 1e-6))

    x_best, theta_best = brute_force_placement(cfg, w)
    trace = gibbs_optimize(cfg, w, GibbsConfig(max_iters=2000, rng_seed=seed))
    rel = (trace.theta - theta_best) / theta_best
    reports.append(ProbeReport("placement-oracle", trace.iterations, int(rel > 0.01), rel, 0.01,
                               rel <= 0.01))
    return reports
