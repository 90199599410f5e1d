"""Marked multivariate event streams, JSON Lines I/O and filtering."""
from __future__ import annotations

import json
import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class EventFormatError(ValueError):
    """Raised when an event file or record cannot be turned into a valid log."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class InvalidCriteriaError(ValueError):
    pass


@dataclass(frozen=True)
class MarkedEvent:
    time: float
    process: int
    features: tuple[float, ...] | None = None
    dyad: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.features is not None and not isinstance(self.features, tuple):
            object.__setattr__(self, "features", tuple(float(x) for x in self.features))
        if not isinstance(self.dyad, frozenset):
            object.__setattr__(self, "dyad", frozenset(int(x) for x in self.dyad))


@dataclass(frozen=True)
class Violation:
    index: int | None
    code: str
    message: str

    def __str__(self):
        where = "log" if self.index is None else f"event {self.index}"
        return f"{where}: [{self.code}] {self.message}"


@dataclass(frozen=True)
class EventLog:
    """Immutable sequence of marked events on ``[0, horizon]``.

    Construction does not validate; use :func:`validate_log` or
    :meth:`checked` for that, so invalid logs can still be inspected.
    """

    horizon: float
    num_processes: int
    num_features: int = 0
    events: tuple[MarkedEvent, ...] = ()
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if not isinstance(self.events, tuple):
            object.__setattr__(self, "events", tuple(self.events))
        if self.labels is not None and not isinstance(self.labels, tuple):
            object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self):
        return len(self.events)

    def checked(self) -> "EventLog":
        report = validate_log(self)
        if report:
            raise EventFormatError("; ".join(str(v) for v in report[:5]))
        return self

    def replace_events(self, events: Iterable[MarkedEvent]) -> "EventLog":
        return EventLog(self.horizon, self.num_processes, self.num_features,
                        tuple(events), self.labels)

    # array views used by the numerical modules

    @cached_property
    def times(self) -> np.ndarray:
        a = np.array([e.time for e in self.events], dtype=float)
        a.flags.writeable = False
        return a

    @cached_property
    def processes(self) -> np.ndarray:
        a = np.array([e.process for e in self.events], dtype=np.int64)
        a.flags.writeable = False
        return a

    @cached_property
    def feature_matrix(self) -> np.ndarray:
        """(N, F) feature values; rows of unfeatured events are zero."""
        a = np.zeros((len(self.events), self.num_features))
        for n, e in enumerate(self.events):
            if e.features is not None:
                a[n] = e.features
        a.flags.writeable = False
        return a

    @cached_property
    def has_features(self) -> np.ndarray:
        a = np.array([e.features is not None for e in self.events], dtype=bool)
        a.flags.writeable = False
        return a

    @cached_property
    def dyad_matrix(self) -> np.ndarray:
        """(N, K) boolean mention marks."""
        a = np.zeros((len(self.events), self.num_processes), dtype=bool)
        for n, e in enumerate(self.events):
            for k in e.dyad:
                a[n, k] = True
        a.flags.writeable = False
        return a

    def counts(self) -> np.ndarray:
        return np.bincount(self.processes, minlength=self.num_processes)


@dataclass(frozen=True)
class FilterCriteria:
    voice_set: frozenset[int] | None = None
    topic_tags: frozenset[int] | None = None
    time_range: tuple[float, float] | None = None
    min_feature_weight: float = 0.0

    def __post_init__(self):
        if self.voice_set is not None and not isinstance(self.voice_set, frozenset):
            object.__setattr__(self, "voice_set", frozenset(self.voice_set))
        if self.topic_tags is not None and not isinstance(self.topic_tags, frozenset):
            object.__setattr__(self, "topic_tags", frozenset(self.topic_tags))
        if self.time_range is not None:
            object.__setattr__(self, "time_range", tuple(float(x) for x in self.time_range))

    def intersect(self, other: "FilterCriteria") -> "FilterCriteria":
        def both(a, b):
            if a is None:
                return b
            if b is None:
                return a
            return a & b

        if self.topic_tags is not None and other.topic_tags is not None and (
                self.topic_tags != other.topic_tags
                or self.min_feature_weight != other.min_feature_weight):
            # "any tag above threshold" does not distribute over tag-set intersection
            raise InvalidCriteriaError("topic filters only intersect when tags and threshold match")
        tr = self.time_range
        if other.time_range is not None:
            tr = other.time_range if tr is None else (
                max(tr[0], other.time_range[0]), min(tr[1], other.time_range[1]))
        mfw = self.min_feature_weight if self.topic_tags is not None else other.min_feature_weight
        voices = both(self.voice_set, other.voice_set)
        if tr is not None and tr[0] > tr[1]:
            # disjoint ranges select nothing
            tr, voices = (tr[0], tr[0]), frozenset()
        return FilterCriteria(voices,
                              both(self.topic_tags, other.topic_tags), tr, mfw)


def validate_log(log: EventLog) -> list[Violation]:
    """Return every invariant violation in ``log``; empty means valid."""
    out: list[Violation] = []
    K, F, T = log.num_processes, log.num_features, log.horizon
    if not (isinstance(K, int) and K >= 1):
        out.append(Violation(None, "header", f"num_processes must be a positive int, got {K!r}"))
        return out
    if not (isinstance(F, int) and F >= 0):
        out.append(Violation(None, "header", f"num_features must be a non-negative int, got {F!r}"))
        return out
    if not (math.isfinite(T) and T > 0):
        out.append(Violation(None, "header", f"horizon must be finite and > 0, got {T!r}"))
        return out
    if log.labels is not None and len(log.labels) != K:
        out.append(Violation(None, "labels", f"{len(log.labels)} labels for {K} processes"))

    prev = None
    for n, e in enumerate(log.events):
        t = e.time
        if not math.isfinite(t):
            out.append(Violation(n, "time", f"non-finite time {t!r}"))
        elif t < 0:
            out.append(Violation(n, "time", f"negative time {t!r}"))
        elif t > T:
            out.append(Violation(n, "time", f"time exceeds horizon: {t!r} > {T!r}"))
        if not (0 <= e.process < K):
            out.append(Violation(n, "process", f"process index {e.process} not in [0, {K})"))
        if e.features is not None:
            if len(e.features) != F:
                out.append(Violation(n, "features", f"{len(e.features)} features, expected {F}"))
            elif any(not math.isfinite(x) or x < 0 for x in e.features):
                out.append(Violation(n, "features", "feature values must be finite and >= 0"))
            elif F > 0 and not any(x > 0 for x in e.features):
                out.append(Violation(n, "features", "feature vector is all zero"))
        for d in e.dyad:
            if not (0 <= d < K):
                out.append(Violation(n, "dyad", f"dyad target {d} not in [0, {K})"))
            elif d == e.process:
                out.append(Violation(n, "dyad", f"dyad target equals own process {d}"))
        if prev is not None and math.isfinite(t) and t < prev[1]:
            out.append(Violation(n, "order",
                                 f"event {prev[0]} at {prev[1]!r} precedes event {n} at {t!r}"))
        if math.isfinite(t):
            prev = (n, t)
    return out


def filter_events(log: EventLog, criteria: FilterCriteria) -> EventLog:
    """Keep the events matching every set field of ``criteria``, in order."""
    K, F = log.num_processes, log.num_features
    if criteria.voice_set is not None and any(not 0 <= v < K for v in criteria.voice_set):
        raise InvalidCriteriaError(f"voice index out of range for K={K}")
    if criteria.topic_tags is not None and any(not 0 <= g < F for g in criteria.topic_tags):
        raise InvalidCriteriaError(f"topic index out of range for F={F}")
    if criteria.min_feature_weight < 0:
        raise InvalidCriteriaError("min_feature_weight must be >= 0")
    if criteria.time_range is not None:
        a, b = criteria.time_range
        if not (0 <= a <= b <= log.horizon):
            raise InvalidCriteriaError(f"time_range {criteria.time_range} not within [0, {log.horizon}]")

    def keep(e: MarkedEvent) -> bool:
        if criteria.voice_set is not None and e.process not in criteria.voice_set:
            return False
        if criteria.time_range is not None and not (
                criteria.time_range[0] <= e.time <= criteria.time_range[1]):
            return False
        if criteria.topic_tags is not None:
            if e.features is None:
                return False
            if not any(e.features[g] >= criteria.min_feature_weight for g in criteria.topic_tags):
                return False
        return True

    return log.replace_events(e for e in log.events if keep(e))


# JSON Lines I/O


def _parse_event(rec: dict, lineno: int) -> MarkedEvent:
    unknown = set(rec) - {"time", "proc", "feat", "dyad"}
    if unknown:
        raise EventFormatError(f"unknown keys {sorted(unknown)}", lineno)
    try:
        time = float(rec["time"])
        proc = rec["proc"]
    except KeyError as exc:
        raise EventFormatError(f"missing key {exc.args[0]!r}", lineno) from None
    except (TypeError, ValueError):
        raise EventFormatError(f"bad time {rec.get('time')!r}", lineno) from None
    if isinstance(proc, bool) or not isinstance(proc, int):
        raise EventFormatError(f"proc must be an integer, got {proc!r}", lineno)
    feat = rec.get("feat")
    dyad = rec.get("dyad") or ()
    try:
        feat = None if feat is None else tuple(float(x) for x in feat)
        dyad = frozenset(int(x) for x in dyad)
    except (TypeError, ValueError):
        raise EventFormatError("feat/dyad must be lists of numbers", lineno) from None
    return MarkedEvent(time, proc, feat, dyad)


def parse_events(lines: Iterable[str], schema: str = "jsonl") -> EventLog:
    if schema != "jsonl":
        raise ValueError(f"unsupported event schema {schema!r}")
    header = None
    events: list[MarkedEvent] = []
    linenos: list[int] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EventFormatError(f"malformed JSON: {exc.msg}", lineno) from None
        if not isinstance(rec, dict):
            raise EventFormatError("record is not an object", lineno)
        if header is None:
            header = rec
            hdr_line = lineno
            continue
        events.append(_parse_event(rec, lineno))
        linenos.append(lineno)
    if header is None:
        raise EventFormatError("missing header record")
    try:
        K, F, T = header["k"], header.get("f", 0), float(header["t"])
    except (KeyError, TypeError, ValueError):
        raise EventFormatError("header needs 'k' and 't'", hdr_line) from None
    if not isinstance(K, int) or not isinstance(F, int):
        raise EventFormatError("header 'k' and 'f' must be integers", hdr_line)
    labels = header.get("labels")

    order = sorted(range(len(events)), key=lambda i: events[i].time)
    moved = sum(1 for i, j in enumerate(order) if i != j)
    if moved:
        warnings.warn(f"{moved} events out of time order were re-sorted", stacklevel=3)
        events = [events[i] for i in order]
        linenos = [linenos[i] for i in order]

    log = EventLog(T, K, F, tuple(events), None if labels is None else tuple(labels))
    report = validate_log(log)
    if report:
        v = report[0]
        line = hdr_line if v.index is None else linenos[v.index]
        raise EventFormatError(v.message, line)
    return log


def load_events(path: str | os.PathLike, schema: str = "jsonl") -> EventLog:
    with open(path, encoding="utf-8") as fh:
        return parse_events(fh, schema)


def load_corpus(paths: Sequence[str | os.PathLike] | str | os.PathLike) -> list[EventLog]:
    """Load one log per file; a directory loads every ``*.jsonl`` in name order."""
    if isinstance(paths, (str, os.PathLike)):
        root = Path(paths)
        paths = sorted(root.glob("*.jsonl")) if root.is_dir() else [root]
    return [load_events(p) for p in paths]


def dump_events(log: EventLog) -> str:
    header = {"k": log.num_processes, "f": log.num_features, "t": log.horizon}
    if log.labels is not None:
        header["labels"] = list(log.labels)
    lines = [json.dumps(header)]
    for e in log.events:
        rec: dict = {"time": e.time, "proc": e.process}
        if e.features is not None:
            rec["feat"] = list(e.features)
        if e.dyad:
            rec["dyad"] = sorted(e.dyad)
        lines.append(json.dumps(rec))
    return "\n".join(lines) + "\n"


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_events(log: EventLog, path: str | os.PathLike) -> None:
    atomic_write_text(path, dump_events(log))
