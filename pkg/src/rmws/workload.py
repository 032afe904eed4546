"""Synthetic demand: Zipf popularity, per-slot arrivals and frame forecasts."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .domain import WorkloadSnapshot
from .exceptions import ConfigError

#: Zipf exponents cycled through frames in the popularity sweep.
SWEEP_EXPONENTS = (0.23, 0.3, 0.41, 0.42, 0.46, 0.54, 0.64, 0.67, 0.76, 0.89)

CSV_COLUMNS = ("frame", "slot", "server", "service", "count")


def zipf_popularity(S, e):
    """Zipf probabilities ``p_s = s**-e / sum_k k**-e`` for ranks ``1..S``."""
    if S < 1:
        raise ValueError("S must be >= 1")
    if e < 0:
        raise ValueError("Zipf exponent must be non-negative")
    weights = np.arange(1, S + 1, dtype=float) ** -float(e)
    return weights / weights.sum()


@dataclass(frozen=True)
class WorkloadTrace:
    """Integer task counts indexed ``[frame, slot, server, service]``.

    ``popularity[f]`` is the service distribution used to split frame ``f``
    (after any per-frame exponent or ranking change).
    """

    counts: np.ndarray
    slot_length: float
    popularity: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 4:
            raise ConfigError("trace counts must be 4-D (frames, slots, servers, services)")
        if np.any(counts < 0) or not np.issubdtype(counts.dtype, np.integer):
            raise ConfigError("trace counts must be non-negative integers")
        counts = counts.astype(np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def frames(self):
        return self.counts.shape[0]

    @property
    def slots_per_frame(self):
        return self.counts.shape[1]

    def snapshot(self, frame, slot):
        return WorkloadSnapshot(self.counts[frame, slot], self.slot_length)

    def frame_totals(self, frame):
        return self.counts[frame].sum(axis=0)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(CSV_COLUMNS)
            for idx in np.ndindex(self.counts.shape):
                out.writerow((*idx, int(self.counts[idx])))

    @classmethod
    def from_csv(cls, path, slot_length, shape=None):
        """Read a trace written by :meth:`to_csv`.

        Missing rows count as zero; ``shape`` defaults to one past the
        largest index seen in each column.
        """
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
                raise ConfigError(f"{path}: expected columns {','.join(CSV_COLUMNS)}")
            rows = np.array([[int(r[c]) for c in CSV_COLUMNS] for r in reader], dtype=np.int64)
        if rows.size == 0:
            rows = np.zeros((0, 5), dtype=np.int64)
        if shape is None:
            shape = tuple(int(v) + 1 for v in rows[:, :4].max(axis=0)) if len(rows) else (0, 0, 0, 0)
        counts = np.zeros(shape, dtype=np.int64)
        counts[tuple(rows[:, :4].T)] = rows[:, 4]
        totals = counts.sum(axis=(1, 2))
        pop = np.divide(totals, totals.sum(axis=1, keepdims=True),
                        out=np.zeros(totals.shape), where=totals.sum(axis=1, keepdims=True) > 0)
        return cls(counts, float(slot_length), pop, {"source": str(path)})


def frame_popularity(config, exponents=None, rankings=None):
    """Per-frame service distributions, shape ``(frames, S)``.

    Parameters
    ----------
    exponents : sequence of float, optional
        Zipf exponent per frame, cycled if shorter than the run.
    rankings : sequence of permutations, optional
        ``rankings[f][r]`` is the service holding popularity rank ``r``.
    """
    S, frames = config.n_services, config.frames
    pop = np.empty((frames, S))
    for f in range(frames):
        e = config.zipf_exponent if exponents is None else exponents[f % len(exponents)]
        p = zipf_popularity(S, e)
        if rankings is not None:
            perm = np.asarray(rankings[f % len(rankings)])
            q = np.empty(S)
            q[perm] = p
            p = q
        pop[f] = p
    return pop


def generate_trace(config, rng=None, exponents=None, rankings=None):
    """Draw per-slot counts for every frame of ``config``.

    Each server's slot total is ``round(max(0, Normal(mean, spread)))``,
    split across services multinomially by the frame's popularity.  Totals
    and splits use separate child streams of the seed, so the totals do not
    depend on the number of services.

    Parameters
    ----------
    rng : int or numpy.random.SeedSequence, optional
        Seed; ``config.rng_seed`` when omitted.
    """
    seed = config.rng_seed if rng is None else rng
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    totals_ss, split_ss = ss.spawn(2)
    totals_rng = np.random.default_rng(totals_ss)
    split_rng = np.random.default_rng(split_ss)
    L, S = config.n_servers, config.n_services
    F, T = config.frames, config.slots_per_frame
    pop = frame_popularity(config, exponents, rankings)
    draws = totals_rng.normal(config.arrival_mean, config.arrival_spread, size=(F, T, L))
    totals = np.rint(np.maximum(draws, 0.0)).astype(np.int64)
    if config.arrival_mean == 0:
        totals[:] = 0
    counts = np.empty((F, T, L, S), dtype=np.int64)
    for f in range(F):
        counts[f] = split_rng.multinomial(totals[f], pop[f])
    meta = {
        "seed": int(ss.entropy) if isinstance(ss.entropy, int) else None,
        "arrival_mean": config.arrival_mean,
        "arrival_spread": config.arrival_spread,
        "exponents": None if exponents is None else [float(e) for e in exponents],
        "rankings": None if rankings is None else [list(map(int, r)) for r in rankings],
    }
    return WorkloadTrace(counts, config.slot_length, pop, meta)


class ForecastMode(str, Enum):
    MEAN = "mean"
    ORACLE = "oracle"


def frame_forecast(config, frame_index, mode=ForecastMode.MEAN, trace=None):
    """Predicted frame-total requests as a snapshot over the frame length.

    ``mean`` gives ``slots * arrival_mean * p_s`` on every server, using
    the frame's popularity from ``trace`` when one is supplied.  ``oracle``
    returns the realised frame sums of ``trace``.
    """
    mode = ForecastMode(mode)
    L = config.n_servers
    if mode is ForecastMode.ORACLE:
        if trace is None:
            raise ValueError("oracle forecast needs a trace")
        counts = trace.frame_totals(frame_index).astype(float)
    else:
        if trace is not None:
            p = trace.popularity[frame_index]
        else:
            p = zipf_popularity(config.n_services, config.zipf_exponent)
        counts = np.tile(config.slots_per_frame * config.arrival_mean * p, (L, 1))
    return WorkloadSnapshot(counts, config.frame_length)
