"""Scoring inferred influence edges against ground-truth directed pairs.

Two measures: recall over true pairs, and the noise-signal ratio
``|significant edges| / |significant edges that are true|`` (1 is perfect).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

from .events import EventLog
from .responsiveness import Edge
from .simulate import DYAD


@dataclass(frozen=True)
class GroundTruth:
    pairs: frozenset[tuple[int, int]]
    links: tuple[tuple[int, int], ...] = ()
    provenance: str = "curated"
    allow_self: bool = False

    def __post_init__(self):
        object.__setattr__(self, "pairs", frozenset((int(s), int(t)) for s, t in self.pairs))
        if not self.allow_self and any(s == t for s, t in self.pairs):
            raise ValueError("ground truth contains a self-loop; set allow_self to permit")

    def check(self, K: int) -> None:
        if any(not (0 <= s < K and 0 <= t < K) for s, t in self.pairs):
            raise ValueError(f"ground-truth pair out of range for K={K}")


@dataclass(frozen=True)
class EvalResult:
    threshold: float
    recall: float | None
    noise_signal_ratio: float | None
    significant: int
    correct: int
    true: int

    @property
    def recall_defined(self) -> bool:
        return self.recall is not None

    @property
    def nsr_defined(self) -> bool:
        return self.noise_signal_ratio is not None


class InvariantError(AssertionError):
    pass


def ground_truth_from_parentage(log: EventLog, parents: Sequence[int | None],
                                channels: Sequence[str] | None = None,
                                mention_only: bool = True, min_links: int = 1) -> GroundTruth:
    """Reduce per-event parent links to directed process pairs.

    With ``mention_only`` a link counts only when the parent event mentions
    the child's process, the synthetic analogue of a direct reply. When
    ``channels`` from the simulator are given, the link must also have been
    generated through the mention channel.
    """
    if len(parents) != len(log):
        raise ValueError("parentage length does not match the log")
    c = log.processes
    links = []
    counts: dict[tuple[int, int], int] = {}
    for child, parent in enumerate(parents):
        if parent is None:
            continue
        if mention_only and c[child] not in log.events[parent].dyad:
            continue
        if channels is not None and mention_only and channels[child] != DYAD:
            continue
        links.append((parent, child))
        key = (int(c[parent]), int(c[child]))
        counts[key] = counts.get(key, 0) + 1
    pairs = frozenset(k for k, n in counts.items() if n >= min_links and k[0] != k[1])
    return GroundTruth(pairs, tuple(links), "synthetic-parentage")


def _as_map(inferred: Iterable) -> dict[tuple[int, int], float]:
    out = {}
    for e in inferred:
        s, t, w = (e.sender, e.receiver, e.weight) if isinstance(e, Edge) else e
        out[(int(s), int(t))] = float(w)
    return out


def evaluate_at(inferred, truth: GroundTruth, threshold: float) -> EvalResult:
    edges = _as_map(inferred)
    significant = {k for k, w in edges.items() if w >= threshold}
    correct = len(significant & truth.pairs)
    n_true = len(truth.pairs)
    rec = correct / n_true if n_true else None
    nsr = len(significant) / correct if correct else None
    return EvalResult(float(threshold), rec, nsr, len(significant), correct, n_true)


def recall(inferred, truth: GroundTruth, threshold: float) -> float | None:
    """Fraction of true pairs with weight >= threshold; None when truth is empty."""
    return evaluate_at(inferred, truth, threshold).recall


def noise_signal_ratio(inferred, truth: GroundTruth, threshold: float) -> float | None:
    """None when no significant edge is correct."""
    return evaluate_at(inferred, truth, threshold).noise_signal_ratio


def threshold_sweep(inferred, truth: GroundTruth, thresholds: Sequence[float]) -> list[EvalResult]:
    thresholds = [float(x) for x in thresholds]
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be sorted ascending")
    edges = list(inferred)
    curve = [evaluate_at(edges, truth, th) for th in thresholds]
    for prev, cur in zip(curve, curve[1:]):
        if cur.significant > prev.significant or (
                cur.recall is not None and cur.recall > prev.recall):
            raise InvariantError("recall or significant count increased with threshold")
    return curve


def relative_thresholds(inferred, fractions: Sequence[float]) -> list[float]:
    """Thresholds as fractions of the largest edge weight."""
    top = max((w for w in _as_map(inferred).values()), default=0.0)
    return [f * top for f in fractions]


def dominates_at_matched_nsr(curve_a: Sequence[EvalResult], curve_b: Sequence[EvalResult],
                             slack: float = 1e-9) -> bool:
    """True if for every point of ``b`` with defined noise-signal ratio, ``a``
    has a point with ratio no larger and recall no smaller."""
    for pb in curve_b:
        if pb.noise_signal_ratio is None or pb.recall is None:
            continue
        best = max((pa.recall for pa in curve_a
                    if pa.noise_signal_ratio is not None and pa.recall is not None
                    and pa.noise_signal_ratio <= pb.noise_signal_ratio + slack), default=None)
        if best is None or best < pb.recall - slack:
            return False
    return True


def sweep_to_csv(curve: Sequence[EvalResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "recall", "nsr", "significant", "correct"])
    for r in curve:
        w.writerow([repr(r.threshold), "" if r.recall is None else repr(r.recall),
                    "" if r.noise_signal_ratio is None else repr(r.noise_signal_ratio),
                    r.significant, r.correct])
    return buf.getvalue()
