"""Workload scheduling for fixed placement and allocation.

The schedule problem is convex but non-smooth: each edge entry has a kink
where the routed load ``z * n_s`` equals the local demand ``n_{i,s}``.
It is solved by projected sub-gradient descent with diminishing steps.
Iterates that break queue stability follow the gradient of the violated
constraint instead (the obstacle step) and are pulled back inside the
stable region before projection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .domain import STABILITY_MARGIN, check_dimensions, objective
from .exceptions import InfeasibleDemand

KINK_RTOL = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the sub-gradient solver.

    ``step0=None`` picks ``1 / (max_s n_s * phi_{c,s} + 1)``, which makes the
    first cloud-branch step move about one unit of routing ratio.  Steps
    shrink as ``step0 / n ** step_decay``.
    """

    step0: Optional[float] = None
    step_decay: float = 0.5
    tolerance: float = 1e-6
    max_iters: int = 300
    pullback: float = 0.999

    def __post_init__(self):
        if self.step0 is not None and not self.step0 > 0:
            raise ValueError("step0 must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.pullback < 1:
            raise ValueError("pullback must lie in (0, 1)")


@dataclass
class ScheduleResult:
    z: np.ndarray
    objective: float
    iterations: int
    converged: bool


def subgradient(X, Y, Z, w, config):
    """Sub-gradient of the total latency with respect to ``Z``.

    Edge entries take the M/M/1 derivative plus ``n_s * phi_s`` once the
    routed load exceeds local demand; exactly at the kink the midpoint of
    the sub-differential is returned.  Cloud entries are ``n_s * phi_{c,s}``.
    Entries of unplaced services are zero.
    """
    check_dimensions(config, X, Y, Z, w)
    Z = np.asarray(Z, dtype=float)
    ns, dt = w.totals, w.interval_length
    routed = Z[:-1] * ns
    capacity = np.asarray(Y) * config.F[:, None] * dt
    margin = capacity - routed * config.c
    placed = (np.asarray(X) != 0) & (capacity > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        queue = ns * config.c * capacity * dt / margin**2
    kink = np.isclose(routed, w.counts, rtol=KINK_RTOL, atol=0.0)
    hop = np.where(kink, 0.5, (routed > w.counts).astype(float)) * ns * config.phi
    G = np.zeros_like(Z)
    G[:-1] = np.where(placed, queue + hop, 0.0)
    G[-1] = ns * config.phic
    return G


def project_schedule(col, mask, cloud=True):
    """Weighting step: clamp negatives to 0, drop inadmissible rows, renormalise.

    Renormalising already brings every entry into [0, 1], so entries above 1
    are left for the division to scale (``[2, 1, 1] -> [0.5, 0.25, 0.25]``).

    ``mask`` marks admissible edge rows (length ``L`` or ``L + 1``; the cloud
    row is admissible unless ``cloud=False``).  An all-zero admissible part
    routes everything to the cloud.
    """
    col = np.maximum(np.asarray(col, dtype=float), 0.0)
    allowed = np.zeros(col.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    allowed[: len(mask)] = mask
    allowed[-1] = cloud
    col = np.where(allowed, col, 0.0)
    total = col.sum()
    if total <= 0:
        col = np.zeros_like(col)
        if cloud:
            col[-1] = 1.0
        elif allowed.any():
            col[allowed] = 1.0 / allowed.sum()
        return col
    return col / total


# -- compiled core -----------------------------------------------------------

@numba.njit(cache=True)
def _objective(z, adm, n, ns, c, F, y, dt, phi, phic):
    L = n.shape[0]
    S = ns.shape[0]
    total = 0.0
    for s in range(S):
        if ns[s] == 0.0:
            continue
        for i in range(L):
            if z[i, s] <= 0.0:
                continue
            routed = z[i, s] * ns[s]
            capa = y[i, s] * F[i] * dt
            margin = capa - routed * c[s]
            if margin <= 1e-9 * capa:
                return np.inf
            total += routed * c[s] * dt / margin
            extra = routed - n[i, s]
            if extra > 0.0:
                total += extra * phi[s]
        total += z[L, s] * ns[s] * phic[s]
    return total


@numba.njit(cache=True)
def _gradient(z, adm, n, ns, c, F, y, dt, phi, phic, g, blocked):
    L = n.shape[0]
    S = ns.shape[0]
    for s in range(S):
        for i in range(L):
            g[i, s] = 0.0
            blocked[i, s] = False
            if not adm[i, s] or ns[s] == 0.0:
                continue
            routed = z[i, s] * ns[s]
            capa = y[i, s] * F[i] * dt
            margin = capa - routed * c[s]
            if margin <= 1e-9 * capa:
                # obstacle: descend the violated stability constraint
                g[i, s] = ns[s] * c[s]
                blocked[i, s] = True
                continue
            d = ns[s] * c[s] * capa * dt / (margin * margin)
            gap = abs(routed - n[i, s])
            if gap <= 1e-12 * max(routed, n[i, s]):
                d += 0.5 * ns[s] * phi[s]
            elif routed > n[i, s]:
                d += ns[s] * phi[s]
            g[i, s] = d
        g[L, s] = ns[s] * phic[s]


@numba.njit(cache=True)
def _project_simplex(v, adm, out, buf):
    """Euclidean projection onto the unit simplex over admissible rows (sort based)."""
    R = v.shape[0]
    k = 0
    for i in range(R):
        if adm[i]:
            # insertion into buf, kept in descending order
            j = k
            while j > 0 and buf[j - 1] < v[i]:
                buf[j] = buf[j - 1]
                j -= 1
            buf[j] = v[i]
            k += 1
    acc = 0.0
    tau = 0.0
    for j in range(k):
        acc += buf[j]
        t = (acc - 1.0) / (j + 1)
        if buf[j] - t > 0.0:
            tau = t
    for i in range(R):
        out[i] = max(v[i] - tau, 0.0) if adm[i] else 0.0


@numba.njit(cache=True)
def _project_column(v, cap, adm, out, buf):
    """Euclidean projection onto {sum = 1, 0 <= out <= cap} over admissible rows."""
    R = v.shape[0]
    capped = False
    for i in range(R):
        if adm[i] and cap[i] < 1.0:
            capped = True
    if not capped:
        _project_simplex(v, adm, out, buf)
        return
    lo = np.inf
    hi = -np.inf
    for i in range(R):
        if adm[i]:
            lo = min(lo, v[i] - cap[i])
            hi = max(hi, v[i])
    for _ in range(200):
        tau = 0.5 * (lo + hi)
        tot = 0.0
        for i in range(R):
            if adm[i]:
                tot += min(max(v[i] - tau, 0.0), cap[i])
        if tot > 1.0:
            lo = tau
        else:
            hi = tau
        if hi - lo <= 1e-15 * max(1.0, abs(tau)):
            break
    tau = 0.5 * (lo + hi)
    # solve exactly on the free set identified by bisection
    nfree = 0
    acc = 0.0
    for i in range(R):
        if adm[i]:
            t = v[i] - tau
            if t >= cap[i]:
                acc += cap[i]
            elif t > 0.0:
                acc += v[i]
                nfree += 1
    if nfree > 0:
        tau = (acc - 1.0) / nfree
    for i in range(R):
        out[i] = min(max(v[i] - tau, 0.0), cap[i]) if adm[i] else 0.0


@numba.njit(cache=True)
def _descend(z0, adm, cap, n, ns, c, F, y, dt, phi, phic,
             alpha0, decay, eps, max_iters, pullback):
    R, S = z0.shape
    z = z0.copy()
    g = np.zeros((R, S))
    blocked = np.zeros((R, S), dtype=np.bool_)
    v = np.zeros(R)
    out = np.zeros(R)
    buf = np.zeros(R)
    f = _objective(z, adm, n, ns, c, F, y, dt, phi, phic)
    best = z.copy()
    fbest = f
    fprev = f
    it = 0
    converged = False
    for k in range(1, max_iters + 1):
        it = k
        _gradient(z, adm, n, ns, c, F, y, dt, phi, phic, g, blocked)
        alpha = alpha0 / k**decay
        for s in range(S):
            if ns[s] == 0.0:
                continue
            for i in range(R):
                v[i] = z[i, s] - alpha * g[i, s]
                if blocked[i, s]:
                    limit = pullback * y[i, s] * F[i] * dt / (ns[s] * c[s])
                    v[i] = min(v[i], limit)
            _project_column(v, cap[:, s], adm[:, s], out, buf)
            for i in range(R):
                z[i, s] = out[i]
        f = _objective(z, adm, n, ns, c, F, y, dt, phi, phic)
        if f < fbest:
            fbest = f
            best[:, :] = z
        if f < np.inf and fprev < np.inf and abs(f - fprev) <= eps:
            converged = True
            break
        fprev = f
    return best, fbest, it, converged


# -- driver ----------------------------------------------------------------

def admissible_rows(X, Y, allow_cloud=True, caps=None):
    """``(L + 1, S)`` mask of rows each service may be routed to."""
    X = np.asarray(X)
    adm = np.zeros((X.shape[0] + 1, X.shape[1]), dtype=bool)
    adm[:-1] = (X != 0) & (np.asarray(Y) > 0)
    if caps is not None:
        adm[:-1] &= np.asarray(caps)[:-1] > 0
    adm[-1] = allow_cloud
    return adm


def initial_schedule(capacity, w, adm, caps, allow_cloud=True, share=0.5):
    """Capacity-proportional starting point that keeps every queue stable.

    ``capacity[i, s]`` is the number of tasks queue ``(i, s)`` can absorb
    over the interval.  Each edge row gets ``share`` of that, the cloud
    takes the remainder.  Without a cloud row the split is proportional to
    the full (stable) capacity and demand that cannot fit raises
    :class:`InfeasibleDemand`.
    """
    R, S = adm.shape
    ns = w.totals
    Z = np.zeros((R, S))
    for s in range(S):
        hosts = adm[:-1, s]
        if ns[s] == 0:
            Z[:, s] = project_schedule(np.zeros(R), hosts, cloud=allow_cloud or not hosts.any())
            continue
        frac = share if allow_cloud else 1.0 - 1e-6
        u = np.where(hosts, np.minimum(caps[:-1, s], frac * capacity[:, s] / ns[s]), 0.0)
        total = u.sum()
        if allow_cloud:
            if total <= 1.0:
                Z[:-1, s] = u
                Z[-1, s] = 1.0 - total
            else:
                Z[:-1, s] = u / total
        else:
            if total < 1.0:  # shares already sit strictly inside each stable capacity
                culprit = int(np.argmax(u)) if hosts.any() else -1
                raise InfeasibleDemand(culprit, f"edge capacity cannot absorb service {s} without the cloud")
            Z[:-1, s] = u / total
    return Z


def solve_schedule(X, Y, w, config, solver=None, z0=None, allow_cloud=True, caps=None):
    """Minimise total latency over the schedule for fixed ``(X, Y)``.

    Parameters
    ----------
    z0 : ndarray, optional
        Feasible warm start; the result is never worse than it.
    allow_cloud : bool
        ``False`` pins the cloud row to zero.
    caps : ndarray, optional
        Per-entry upper bounds on ``Z`` (e.g. local-demand shares when
        edge-to-edge forwarding is disabled).

    Returns
    -------
    ScheduleResult
        Best feasible iterate, its objective, the iteration count and
        whether the objective-change test fired before ``max_iters``.
    """
    solver = solver or SolverConfig()
    check_dimensions(config, X=X, Y=Y, w=w)
    X = np.asarray(X)
    Y = np.asarray(Y, dtype=float)
    L, S = X.shape
    cap = np.ones((L + 1, S)) if caps is None else np.asarray(caps, dtype=float)
    adm = admissible_rows(X, Y, allow_cloud, cap)
    dt = w.interval_length
    capacity = Y * config.F[:, None] * dt / config.c

    start = None
    if z0 is not None:
        z0 = np.asarray(z0, dtype=float)
        check_dimensions(config, Z=z0)
        ok = not np.any((z0 > 0) & ~adm) and np.all(z0 <= cap + 1e-12)
        if ok and np.isfinite(_safe_objective(X, Y, z0, w, config)):
            start = z0.copy()
    if start is None:
        start = initial_schedule(capacity, w, adm, cap, allow_cloud)

    ns = np.ascontiguousarray(w.totals, dtype=float)
    step0 = solver.step0 or 1.0 / (float(np.max(ns * config.phic)) + 1.0)
    zb, fb, iters, converged = _descend(
        np.ascontiguousarray(start), adm, cap, np.ascontiguousarray(w.counts), ns,
        np.ascontiguousarray(config.c), np.ascontiguousarray(config.F), np.ascontiguousarray(Y),
        float(dt), np.ascontiguousarray(config.phi), np.ascontiguousarray(config.phic),
        float(step0), float(solver.step_decay), float(solver.tolerance),
        int(solver.max_iters), float(solver.pullback),
    )
    Z = np.empty_like(zb)
    for s in range(S):
        Z[:, s] = project_schedule(zb[:, s], adm[:-1, s], cloud=allow_cloud or not adm[:-1, s].any())
    f = _safe_objective(X, Y, Z, w, config)
    if not np.isfinite(f):  # renormalisation nudged a queue over the edge
        Z, f = zb, _safe_objective(X, Y, zb, w, config)
    if allow_cloud:
        Zc = np.zeros_like(Z)
        Zc[-1] = 1.0
        fc = objective(X, Y, Zc, w, config)
        if fc < f:
            Z, f = Zc, fc
    return ScheduleResult(z=Z, objective=float(f), iterations=int(iters), converged=bool(converged))


def _safe_objective(X, Y, Z, w, config):
    try:
        return objective(X, Y, Z, w, config)
    except (ArithmeticError, ValueError):
        return np.inf


__all__ = [
    "SolverConfig", "ScheduleResult", "subgradient", "project_schedule",
    "solve_schedule", "initial_schedule", "admissible_rows", "STABILITY_MARGIN",
]
