"""Directed responsiveness between voices: instantaneous, interval shares,
feature/mention attribution, and the influence network.

Responsiveness of receiver ``t`` to sender ``s`` at time ``tau`` is the part
of ``t``'s intensity produced by ``s``'s recent events,
``W[s, t] * sum_{m: c_m = s} g_{s,t}(tau - s_m)``. Interval values are exact
integrals of that series; shares divide by the total over all senders.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .events import EventLog, FilterCriteria, filter_events
from .model import HawkesParams, ModelError, _attributions, _recent


@dataclass(frozen=True)
class ResponsivenessQuery:
    receiver: int
    sender: int | None = None
    interval: tuple[float, float] | None = None
    feature: int | None = None
    criteria: FilterCriteria | None = None
    resolution: float = 3600.0
    self_influence: bool = False

    def __post_init__(self):
        if self.sender is not None and self.sender == self.receiver and not self.self_influence:
            raise ModelError("sender equals receiver; set self_influence to allow it")
        if self.interval is not None:
            a, b = self.interval
            if not a <= b:
                raise ModelError(f"interval {self.interval} is not well ordered")
            object.__setattr__(self, "interval", (float(a), float(b)))
        if not self.resolution > 0:
            raise ModelError("resolution must be > 0")

    def senders(self, K: int) -> list[int]:
        if self.sender is not None:
            return [self.sender]
        return [s for s in range(K) if s != self.receiver or self.self_influence]


@dataclass(frozen=True)
class IntervalShares:
    receiver: int
    senders: tuple[int, ...]
    raw: np.ndarray
    shares: np.ndarray
    no_influence: bool


@dataclass(frozen=True)
class Attribution:
    feature_term: float
    dyad_term: float

    @property
    def total(self) -> float:
        return self.feature_term + self.dyad_term


@dataclass(frozen=True)
class Edge:
    sender: int
    receiver: int
    weight: float


@dataclass(frozen=True, eq=False)
class ResponsivenessReport:
    receiver: int
    grid: np.ndarray
    series: dict[int, np.ndarray]
    shares: IntervalShares
    attribution: dict[int, dict[int, Attribution]] | None = None

    def series_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "sender", "receiver", "value"])
        for s, vals in sorted(self.series.items()):
            for t, v in zip(self.grid, vals):
                w.writerow([repr(float(t)), s, self.receiver, repr(float(v))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        d = {
            "receiver": self.receiver,
            "shares": [{"sender": s, "raw": float(r), "share": float(x)}
                       for s, r, x in zip(self.shares.senders, self.shares.raw, self.shares.shares)],
            "no_influence": self.shares.no_influence,
        }
        if self.attribution is not None:
            d["attribution"] = [
                {"feature": g, "sender": s, "feature_term": a.feature_term,
                 "dyad_term": a.dyad_term, "total": a.total}
                for g, per in sorted(self.attribution.items()) for s, a in sorted(per.items())]
        return d


def _check(params: HawkesParams, log: EventLog, *procs: int):
    if log.num_processes != params.num_processes:
        raise ModelError("log and params disagree on K")
    for k in procs:
        if not 0 <= k < params.num_processes:
            raise ModelError(f"process {k} out of range")


def _interval(log: EventLog, q: ResponsivenessQuery) -> tuple[float, float]:
    a, b = q.interval if q.interval is not None else (0.0, log.horizon)
    if not 0 <= a <= b <= log.horizon:
        raise ModelError(f"interval {(a, b)} not within [0, {log.horizon}]")
    return a, b


def _prepare(log: EventLog, q: ResponsivenessQuery) -> EventLog:
    return log if q.criteria is None else filter_events(log, q.criteria)


def instantaneous(params: HawkesParams, log: EventLog, sender: int, receiver: int, t: float,
                  receiver_side: bool = False) -> float:
    """Sender-driven component of the receiver's intensity at ``t``.

    ``receiver_side=True`` counts the receiver's own events instead (the
    literal index reading), kept for comparison only.
    """
    _check(params, log, sender, receiver)
    if not 0 <= t <= log.horizon:
        raise ModelError(f"time {t} outside [0, {log.horizon}]")
    w = params.weights[sender, receiver]
    if w == 0:
        return 0.0
    idx, dt = _recent(log, t, params.family.window)
    own = receiver if receiver_side else sender
    dt = dt[log.processes[idx] == own]
    return float(w * np.sum(params.kernel(sender, receiver, dt)))


def dyad_instantaneous(params: HawkesParams, log: EventLog, sender: int, receiver: int,
                       t: float) -> float:
    """Mention-channel component of the receiver's intensity at ``t``."""
    _check(params, log, sender, receiver)
    if params.dyad_weights is None:
        return 0.0
    idx, dt = _recent(log, t, params.dyad_family.window)
    m = (log.processes[idx] == sender) & log.dyad_matrix[idx, receiver]
    return float(params.dyad_weights[sender, receiver] * np.sum(params.dyad_kernel(dt[m])))


def instantaneous_series(params: HawkesParams, log: EventLog, sender: int, receiver: int,
                         grid: np.ndarray) -> np.ndarray:
    _check(params, log, sender, receiver)
    grid = np.asarray(grid, dtype=float)
    ts = log.times[log.processes == sender]
    w = params.weights[sender, receiver]
    out = np.zeros(grid.shape)
    if w == 0 or ts.size == 0:
        return out
    win = params.family.window
    lo = np.searchsorted(ts, grid - win, side="left")
    hi = np.searchsorted(ts, grid, side="left")
    for j in range(grid.size):
        if hi[j] > lo[j]:
            out[j] = w * np.sum(params.kernel(sender, receiver, grid[j] - ts[lo[j]:hi[j]]))
    return out


def _pair_mass(params: HawkesParams, ts: np.ndarray, sender: int, receiver: int,
               a: float, b: float, weights: np.ndarray | None = None) -> float:
    """``sum_m weights_m * integral_a^b g(tau - s_m) dtau`` for sender times ``ts``."""
    if ts.size == 0:
        return 0.0
    A = params.impulse.weights[sender, receiver]
    mass = params.family.integrals(a - ts, b - ts) @ A
    if weights is not None:
        mass = mass * weights
    return float(np.sum(mass))


def pair_aggregate(params: HawkesParams, log: EventLog, sender: int, receiver: int,
                   a: float, b: float, include_dyad: bool = True) -> float:
    """Exact integral over ``[a, b]`` of the sender-driven intensity, unnormalised."""
    _check(params, log, sender, receiver)
    if not a <= b:
        raise ModelError("reversed interval")
    sel = log.processes == sender
    total = params.weights[sender, receiver] * _pair_mass(params, log.times[sel], sender, receiver, a, b)
    if include_dyad and params.dyad_weights is not None:
        total += _dyad_mass(params, log, sender, receiver, a, b)
    return float(total)


def _dyad_mass(params, log, sender, receiver, a, b) -> float:
    sel = (log.processes == sender) & log.dyad_matrix[:, receiver]
    ts = log.times[sel]
    if ts.size == 0:
        return 0.0
    mass = params.dyad_family.integrals(a - ts, b - ts).mean(axis=-1)
    return float(params.dyad_weights[sender, receiver] * np.sum(mass))


def interval_responsiveness(params: HawkesParams, log: EventLog,
                            query: ResponsivenessQuery) -> IntervalShares:
    """Integrated influence per sender on the receiver, and its shares.

    Shares sum to one whenever any sender has positive influence; otherwise
    they are all zero and ``no_influence`` is set.
    """
    _check(params, log, query.receiver)
    log = _prepare(log, query)
    a, b = _interval(log, query)
    senders = query.senders(params.num_processes)
    raw = np.array([pair_aggregate(params, log, s, query.receiver, a, b) for s in senders])
    total = raw.sum()
    shares = raw / total if total > 0 else np.zeros_like(raw)
    return IntervalShares(query.receiver, tuple(senders), raw, shares, not total > 0)


def attribution(params: HawkesParams, log: EventLog, query: ResponsivenessQuery) -> Attribution:
    """Influence of ``query.sender`` on the receiver credited to ``query.feature``.

    The feature term weights each featured sender event by its softmax
    attribution; the mention term integrates the dyadic channel over the
    interval and is reported whole.
    """
    if params.feature_weights is None:
        raise ModelError("attribution needs feature weights")
    if query.sender is None or query.feature is None:
        raise ModelError("attribution needs a sender and a feature")
    _check(params, log, query.sender, query.receiver)
    if not 0 <= query.feature < params.feature_weights.shape[1]:
        raise ModelError(f"feature {query.feature} out of range")
    log = _prepare(log, query)
    a, b = _interval(log, query)
    s, r = query.sender, query.receiver
    attr = _attributions(params.feature_weights, log)[:, query.feature]
    sel = (log.processes == s) & log.has_features & (attr > 0)
    feat = params.weights[s, r] * _pair_mass(params, log.times[sel], s, r, a, b, attr[sel])
    dyad = _dyad_mass(params, log, s, r, a, b) if params.dyad_weights is not None else 0.0
    return Attribution(float(feat), float(dyad))


def influence_network(params: HawkesParams, log: EventLog,
                      interval: tuple[float, float] | None = None,
                      threshold: float = 0.0) -> list[Edge]:
    """Edges ``(s, t, weight)`` with positive weight at or above ``threshold``.

    Weight is the unnormalised interval aggregate. Ordered by weight
    descending, then sender, then receiver.
    """
    if threshold < 0:
        raise ModelError("threshold must be >= 0")
    a, b = interval if interval is not None else (0.0, log.horizon)
    K = params.num_processes
    edges = []
    for s in range(K):
        for t in range(K):
            if s == t:
                continue
            w = pair_aggregate(params, log, s, t, a, b)
            if w > 0 and w >= threshold:
                edges.append(Edge(s, t, w))
    edges.sort(key=lambda e: (-e.weight, e.sender, e.receiver))
    return edges


def network_to_json(edges: list[Edge], labels=None) -> str:
    out = []
    for e in edges:
        rec = {"sender": e.sender, "receiver": e.receiver, "weight": e.weight}
        if labels is not None:
            rec["sender_label"], rec["receiver_label"] = labels[e.sender], labels[e.receiver]
        out.append(rec)
    return json.dumps({"edges": out}, indent=1) + "\n"


def network_from_json(text: str) -> list[Edge]:
    return [Edge(int(r["sender"]), int(r["receiver"]), float(r["weight"]))
            for r in json.loads(text)["edges"]]


def score(params: HawkesParams, log: EventLog, query: ResponsivenessQuery) -> ResponsivenessReport:
    """Series on the query grid, interval shares and, with features, attributions."""
    shares = interval_responsiveness(params, log, query)
    flog = _prepare(log, query)
    a, b = _interval(flog, query)
    n = int(np.floor((b - a) / query.resolution)) + 1
    grid = a + query.resolution * np.arange(n)
    series = {s: instantaneous_series(params, flog, s, query.receiver, grid) for s in shares.senders}
    table = None
    if params.feature_weights is not None and flog.num_features > 0:
        features = ([query.feature] if query.feature is not None
                    else range(params.feature_weights.shape[1]))
        table = {g: {s: attribution(params, flog, ResponsivenessQuery(
            query.receiver, s, (a, b), g, None, query.resolution, query.self_influence))
            for s in shares.senders} for g in features}
    return ResponsivenessReport(query.receiver, grid, series, shares, table)
