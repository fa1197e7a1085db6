"""
Monte Carlo simulation of MAP event streams.

Used as an independent oracle for the analytic count and inter-event
moments. Each replication draws from its own ``numpy`` generator spawned
from a single :class:`numpy.random.SeedSequence`, so results depend only
on ``(seed, config)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MarkovArrivalProcess
from .errors import ValidationError
from .interevent import embedded_chain

WARMUP_EVENTS = 1000
_CHUNK = 256


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    Exactly one of ``horizon`` (time) and ``n_events`` must be given.
    ``initial`` is ``"pi"`` (time-stationary), ``"alpha"`` (phase law at an
    event) or an explicit probability vector.
    """

    horizon: float | None = None
    n_events: int | None = None
    replications: int = 1
    seed: int = 0
    initial: object = "pi"
    warmup: int = WARMUP_EVENTS

    def __post_init__(self):
        if (self.horizon is None) == (self.n_events is None):
            raise ValidationError("give exactly one of horizon and n_events")
        if self.horizon is not None and not self.horizon > 0:
            raise ValidationError("horizon must be > 0")
        if self.n_events is not None and self.n_events < 1:
            raise ValidationError("n_events must be >= 1")
        if self.replications < 1:
            raise ValidationError("replications must be >= 1")


@dataclass(frozen=True)
class SimEstimate:
    point: float
    std_error: float
    replications: int

    def within(self, value: float, k: float = 3.0) -> bool:
        return abs(self.point - value) <= k * self.std_error


class _Tables:
    """Per-phase sojourn rates and cumulative jump probabilities.

    Outcome ``o < p`` is a silent move to phase ``o``; ``o >= p`` is an event
    with a move to phase ``o - p``.
    """

    def __init__(self, m: MarkovArrivalProcess):
        p = m.order
        C = m.C.copy()
        np.fill_diagonal(C, 0.0)
        W = np.hstack((C, m.D))
        self.p = p
        self.rate = W.sum(axis=1)
        self.cum = np.cumsum(W / self.rate[:, None], axis=1)
        self.cum[:, -1] = 1.0


def _initial_law(m: MarkovArrivalProcess, initial) -> np.ndarray:
    if isinstance(initial, str):
        if initial == "pi":
            return m.initial()
        if initial == "alpha":
            return embedded_chain(m).alpha
        raise ValidationError(f"unknown initial law {initial!r}")
    law = np.asarray(initial, dtype=float)
    if law.shape != (m.order,) or np.any(law < 0) or abs(law.sum() - 1) > 1e-9:
        raise ValidationError("explicit initial law must be a probability vector")
    return law


def _stream(tab: _Tables, rng: np.random.Generator, phase: int, horizon: float | None,
            n_events: int | None) -> np.ndarray:
    """Event epochs of one replication."""
    p = tab.p
    rate = tab.rate.tolist()
    cum = tab.cum.tolist()
    times = []
    t = 0.0
    limit = np.inf if horizon is None else horizon
    want = np.inf if n_events is None else n_events
    while True:
        exps = rng.standard_exponential(_CHUNK).tolist()
        unis = rng.random(_CHUNK).tolist()
        for e, u in zip(exps, unis):
            t += e / rate[phase]
            if t > limit:
                return np.array(times)
            row = cum[phase]
            o = 0
            while row[o] < u:
                o += 1
            if o >= p:
                times.append(t)
                phase = o - p
                if len(times) >= want:
                    return np.array(times)
            else:
                phase = o


def _children(config: SimConfig):
    seqs = np.random.SeedSequence(config.seed).spawn(config.replications)
    return [np.random.default_rng(s) for s in seqs]


def simulate_events(m: MarkovArrivalProcess, config: SimConfig) -> list[np.ndarray]:
    """One array of event epochs per replication (horizon- or count-limited)."""
    m.require_valid()
    tab = _Tables(m)
    law = _initial_law(m, config.initial)
    out = []
    for rng in _children(config):
        phase = int(rng.choice(m.order, p=law))
        out.append(_stream(tab, rng, phase, config.horizon, config.n_events))
    return out


def estimate_count_moments(m: MarkovArrivalProcess, t_grid, config: SimConfig) -> dict:
    """Estimates of ``E[N(t)^k]`` (k = 1, 2, 3), ``Var N(t)`` and the third
    central moment across replications.

    Keys are ``(t, k)`` for raw moments, ``(t, "var")`` for the variance and
    ``(t, "cm3")`` for ``E[(N - EN)^3]``. The central moments carry much less
    noise than ``E[N^3]`` when comparing processes with equal mean and variance.
    ``config.horizon`` is ignored; the simulation runs to ``max(t_grid)``.
    """
    ts = np.sort(np.asarray(list(t_grid), dtype=float))
    if ts.size == 0 or ts[0] < 0:
        raise ValidationError("t_grid must be non-empty and nonnegative")
    cfg = SimConfig(horizon=float(ts[-1]) if ts[-1] > 0 else 1.0, replications=config.replications,
                    seed=config.seed, initial=config.initial)
    streams = simulate_events(m, cfg)
    R = len(streams)
    counts = np.array([np.searchsorted(s, ts, side="right") for s in streams], dtype=float)
    out = {}
    for i, t in enumerate(ts):
        n = counts[:, i]
        for k in (1, 2, 3):
            vals = n**k
            se = vals.std(ddof=1) / np.sqrt(R) if R > 1 else np.nan
            out[(float(t), k)] = SimEstimate(float(vals.mean()), float(se), R)
        var = n.var(ddof=1) if R > 1 else np.nan
        centred4 = np.mean((n - n.mean()) ** 4)
        se_var = np.sqrt(max(centred4 - var**2, 0.0) / R) if R > 1 else np.nan
        out[(float(t), "var")] = SimEstimate(float(var), float(se_var), R)
        d = n - n.mean()
        k3 = float(np.mean(d**3))
        influence = d**3 - 3.0 * var * d - k3
        se_k3 = influence.std(ddof=1) / np.sqrt(R) if R > 1 else np.nan
        out[(float(t), "cm3")] = SimEstimate(k3, float(se_k3), R)
    return out


@dataclass
class InterEventEstimate:
    m1: SimEstimate
    scv: SimEstimate
    autocorr: list[SimEstimate]


def _interval_stats(gaps: np.ndarray, n_lags: int):
    mean = gaps.mean()
    dev = gaps - mean
    var = np.mean(dev * dev)
    rho = [np.mean(dev[:-j] * dev[j:]) / var for j in range(1, n_lags + 1)]
    return mean, var / (mean * mean), rho


def estimate_interevent(m: MarkovArrivalProcess, config: SimConfig, n_lags: int = 3,
                        n_batches: int = 20) -> InterEventEstimate:
    """Estimate ``M1``, ``c^2`` and ``rho_1..rho_n_lags`` from simulated intervals.

    ``config.n_events`` intervals are used per replication. With ``initial="pi"``
    the first ``config.warmup`` events are discarded. Standard errors come from
    the spread across replications, or from batch means when there is only one.
    """
    if config.n_events is None:
        raise ValidationError("inter-event estimation needs n_events")
    warm = config.warmup if isinstance(config.initial, str) and config.initial == "pi" else 0
    cfg = SimConfig(n_events=config.n_events + warm + 1, replications=config.replications,
                    seed=config.seed, initial=config.initial, warmup=config.warmup)
    per_rep = []
    for times in simulate_events(m, cfg):
        gaps = np.diff(times[warm:])
        if config.replications > 1:
            per_rep.append(_interval_stats(gaps, n_lags))
        else:
            per_rep.extend(_interval_stats(b, n_lags) for b in np.array_split(gaps, n_batches))
    k = len(per_rep)
    m1 = np.array([s[0] for s in per_rep])
    c2 = np.array([s[1] for s in per_rep])
    rho = np.array([s[2] for s in per_rep])

    def est(v):
        return SimEstimate(float(v.mean()), float(v.std(ddof=1) / np.sqrt(k)), k)

    return InterEventEstimate(m1=est(m1), scv=est(c2), autocorr=[est(rho[:, j]) for j in range(n_lags)])
