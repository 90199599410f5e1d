"""Ogata thinning simulation and time-rescaling diagnostics."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .events import EventLog, MarkedEvent, atomic_write_text
from .model import HawkesParams, ModelError, compensator_many

BACKGROUND, RECENCY, DYAD = "background", "recency", "dyad"


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SimConfig:
    params: HawkesParams
    horizon: float
    seed: int = 0
    feature_emission: np.ndarray | None = None
    dyad_emission: np.ndarray | None = None
    max_events: int = 10_000_000
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        K = self.params.num_processes
        if not self.horizon > 0:
            raise ValueError("horizon must be > 0")
        if self.feature_emission is not None:
            fe = np.asarray(self.feature_emission, dtype=float)
            if fe.ndim != 2 or fe.shape[0] != K or np.any(fe < 0) or \
                    not np.allclose(fe.sum(axis=1), 1.0):
                raise ValueError("feature_emission must be (K, F) rows of probabilities")
            object.__setattr__(self, "feature_emission", fe)
        if self.dyad_emission is not None:
            de = np.asarray(self.dyad_emission, dtype=float)
            if de.shape != (K, K) or np.any(de < 0) or np.any(de > 1):
                raise ValueError("dyad_emission must be a (K, K) matrix of probabilities")
            object.__setattr__(self, "dyad_emission", de)
        self.params.check_stability()


@dataclass(frozen=True)
class Simulation:
    log: EventLog
    parents: tuple[int | None, ...]
    channels: tuple[str, ...]


def simulate(config: SimConfig) -> EventLog:
    return simulate_with_parents(config).log


def simulate_with_parents(config: SimConfig) -> Simulation:
    """Sample one realisation by Ogata's modified thinning.

    The dominating rate is the sum over receivers of the background plus,
    for every event still inside the window, the supremum of its remaining
    impulse; it is recomputed after each candidate.
    """
    p = config.params
    K, T = p.num_processes, float(config.horizon)
    rng = np.random.default_rng(config.seed)
    fam, A, W, b = p.family, p.impulse.weights, p.weights, p.background
    Wd = p.dyad_weights
    dfam = p.dyad_family
    window = p.window
    F = 0 if config.feature_emission is None else config.feature_emission.shape[1]

    times: list[float] = []
    procs: list[int] = []
    feats: list[tuple | None] = []
    dyads: list[frozenset] = []
    parents: list[int | None] = []
    channels: list[str] = []
    # active-event arrays
    a_idx = np.zeros(0, dtype=np.int64)
    a_s = np.zeros(0)
    a_W = np.zeros((0, K))       # W[c_m, :]
    a_A = np.zeros((0, K, fam.count))
    a_D = np.zeros((0, K))       # Wd[c_m, :] masked by mentions

    t = 0.0
    while True:
        if a_s.size:
            live = t - a_s <= window
            if not np.all(live):
                a_idx, a_s, a_W, a_A, a_D = a_idx[live], a_s[live], a_W[live], a_A[live], a_D[live]
        dt = t - a_s
        bound = b.sum()
        if a_s.size:
            bound += np.sum(a_W * np.einsum("mb,mkb->mk", fam.sup_after(dt), a_A))
            if Wd is not None:
                bound += np.sum(a_D * dfam.sup_after(dt).mean(axis=-1)[:, None])
        t = t + rng.exponential(1.0 / bound)
        if t > T:
            break
        dt = t - a_s
        comps = [b[:, None]]
        if a_s.size:
            comps.append((a_W * np.einsum("mb,mkb->mk", fam.values(dt), a_A)).T)
            if Wd is not None:
                comps.append((a_D * p.dyad_kernel(dt)[:, None]).T)
        comps = np.hstack(comps)          # (K, 1 + m [+ m])
        cum = np.cumsum(comps.ravel())
        u = rng.uniform() * bound
        if u >= cum[-1]:
            continue
        flat = int(np.searchsorted(cum, u, side="right"))
        k, j = divmod(flat, comps.shape[1])
        m = a_s.size
        if j == 0:
            parent, channel = None, BACKGROUND
        elif j <= m:
            parent, channel = int(a_idx[j - 1]), RECENCY
        else:
            parent, channel = int(a_idx[j - 1 - m]), DYAD

        feat = None
        if F:
            topic = rng.choice(F, p=config.feature_emission[k])
            feat = tuple(1.0 if i == topic else 0.0 for i in range(F))
        dyad = frozenset()
        if config.dyad_emission is not None:
            draws = rng.uniform(size=K) < config.dyad_emission[k]
            draws[k] = False
            dyad = frozenset(int(x) for x in np.flatnonzero(draws))

        n = len(times)
        if n >= config.max_events:
            raise SimulationError(
                f"event cap {config.max_events} exceeded at t={t:.6g}; "
                f"spectral radius {p.spectral_radius():.3g}")
        times.append(t)
        procs.append(k)
        feats.append(feat)
        dyads.append(dyad)
        parents.append(parent)
        channels.append(channel)

        a_idx = np.append(a_idx, n)
        a_s = np.append(a_s, t)
        a_W = np.vstack([a_W, W[k][None]])
        a_A = np.concatenate([a_A, A[k][None]])
        drow = np.zeros(K)
        if Wd is not None:
            mask = np.zeros(K, dtype=bool)
            mask[list(dyad)] = True
            drow = np.where(mask, Wd[k], 0.0)
        a_D = np.vstack([a_D, drow[None]])

    events = tuple(MarkedEvent(t_, k_, f_, d_) for t_, k_, f_, d_ in zip(times, procs, feats, dyads))
    log = EventLog(T, K, F, events, config.labels)
    return Simulation(log, tuple(parents), tuple(channels))


def dump_parentage(parents) -> str:
    return "".join(json.dumps({"child": i, "parent": p}) + "\n" for i, p in enumerate(parents))


def save_parentage(parents, path: str | os.PathLike) -> None:
    atomic_write_text(path, dump_parentage(parents))


def load_parentage(path: str | os.PathLike) -> list[int | None]:
    out: dict[int, int | None] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if set(rec) != {"child", "parent"}:
                raise ValueError(f"line {lineno}: parentage record needs exactly child and parent")
            out[int(rec["child"])] = None if rec["parent"] is None else int(rec["parent"])
    return [out.get(i) for i in range(len(out))]


def compensator(params: HawkesParams, log: EventLog, k: int, t: float) -> float:
    """Cumulative intensity ``Lambda_k(t)`` over ``[0, t]``."""
    if not 0 <= t <= log.horizon:
        raise ModelError(f"time {t} outside [0, {log.horizon}]")
    if not 0 <= k < params.num_processes:
        raise ModelError(f"process {k} out of range")
    return float(compensator_many(params, log, k, [t])[0])


@dataclass(frozen=True)
class Residuals:
    gaps: tuple[np.ndarray, ...]
    ks_statistic: float
    ks_pvalue: float
    per_process: tuple[tuple[float, float] | None, ...]

    def rejects(self, alpha: float = 0.01) -> bool:
        return self.ks_pvalue < alpha


def rescaled_residuals(params: HawkesParams, log: EventLog) -> Residuals:
    """Compensator increments between consecutive events of each process.

    Under the true model they are i.i.d. Exp(1); the pooled KS test against
    Exp(1) is reported, plus a per-process test where there are gaps.
    """
    gaps = []
    per = []
    for k in range(params.num_processes):
        ts = log.times[log.processes == k]
        if ts.size < 2:
            gaps.append(np.zeros(0))
            per.append(None)
            continue
        lam = compensator_many(params, log, k, ts)
        g = np.diff(lam)
        gaps.append(g)
        r = stats.kstest(g, "expon")
        per.append((float(r.statistic), float(r.pvalue)))
    pooled = np.concatenate(gaps) if gaps else np.zeros(0)
    if pooled.size:
        r = stats.kstest(pooled, "expon")
        stat, pval = float(r.statistic), float(r.pvalue)
    else:
        stat, pval = float("nan"), float("nan")
    return Residuals(tuple(gaps), stat, pval, tuple(per))
