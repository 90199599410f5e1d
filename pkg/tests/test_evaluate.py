import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hawkinfluence.evaluate import (EvalResult, GroundTruth, dominates_at_matched_nsr, evaluate_at,
                                    ground_truth_from_parentage, noise_signal_ratio, recall,
                                    relative_thresholds, sweep_to_csv, threshold_sweep)
from hawkinfluence.events import EventLog, MarkedEvent
from hawkinfluence.responsiveness import Edge


def counting_fixture():
    """10 true pairs; edges on 7 of them above 0.5, plus 1 false edge above."""
    true = [(i, i + 1) for i in range(10)]
    edges = [(s, t, 0.9 - 0.05 * i) for i, (s, t) in enumerate(true[:7])]
    edges += [(s, t, 0.2) for s, t in true[7:]]
    edges.append((5, 0, 0.8))
    return edges, GroundTruth(frozenset(true))


def test_recall_counting():
    edges, truth = counting_fixture()
    assert recall(edges, truth, 0.5) == pytest.approx(0.7)
    assert recall(edges, truth, 0.0) == 1.0
    assert recall([(0, 5, 1.0)], truth, 0.0) == 0.0


def test_recall_empty_truth_undefined():
    assert recall([(0, 1, 1.0)], GroundTruth(frozenset()), 0.0) is None


def test_nsr_counting():
    truth = GroundTruth(frozenset({(0, 1), (1, 2), (2, 3), (3, 4)}))
    edges = [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0),
             (4, 0, 1.0), (4, 1, 1.0), (4, 2, 1.0), (4, 3, 1.0)]
    assert noise_signal_ratio(edges, truth, 0.5) == 2.0
    assert noise_signal_ratio(edges[:4], truth, 0.5) == 1.0


def test_nsr_undefined_without_correct_edges():
    truth = GroundTruth(frozenset({(0, 1)}))
    edges = [(1, 0, 1.0), (2, 0, 1.0), (0, 2, 1.0), (2, 1, 1.0), (1, 2, 1.0)]
    r = evaluate_at(edges, truth, 0.0)
    assert r.noise_signal_ratio is None and not r.nsr_defined
    assert (r.significant, r.correct, r.true) == (5, 0, 1)


def test_sweep_hand_counts():
    edges, truth = counting_fixture()
    curve = threshold_sweep(edges, truth, [0.0, 0.5, 0.85])
    got = [(r.significant, r.correct, r.recall) for r in curve]
    assert got == [(11, 10, 1.0), (8, 7, 0.7), (2, 2, 0.2)]
    assert curve[1].noise_signal_ratio == pytest.approx(8 / 7)


def test_sweep_endpoints():
    edges, truth = counting_fixture()
    top = max(w for _, _, w in edges)
    curve = threshold_sweep(edges, truth, [0.0, top + 1e-9])
    assert curve[0].recall == 1.0 and curve[1].recall == 0.0
    assert curve[1].noise_signal_ratio is None


def test_sweep_rejects_unsorted():
    edges, truth = counting_fixture()
    with pytest.raises(ValueError, match="ascending"):
        threshold_sweep(edges, truth, [0.5, 0.1, 0.9])


def test_accepts_edge_objects():
    truth = GroundTruth(frozenset({(0, 1)}))
    assert recall([Edge(0, 1, 0.3)], truth, 0.3) == 1.0


def test_truth_invariants():
    with pytest.raises(ValueError):
        GroundTruth(frozenset({(1, 1)}))
    GroundTruth(frozenset({(1, 1)}), allow_self=True)
    with pytest.raises(ValueError):
        GroundTruth(frozenset({(0, 4)})).check(3)


def test_truth_from_parentage():
    evs = (MarkedEvent(0.0, 0, None, frozenset({1})), MarkedEvent(1.0, 1), MarkedEvent(2.0, 2),
           MarkedEvent(3.0, 0), MarkedEvent(3.5, 2))
    log = EventLog(10.0, 3, 0, evs)
    parents = [None, 0, 1, None, 3]
    assert ground_truth_from_parentage(log, parents).pairs == {(0, 1)}
    every = ground_truth_from_parentage(log, parents, mention_only=False)
    assert every.pairs == {(0, 1), (1, 2), (0, 2)}
    assert every.links == ((0, 1), (1, 2), (3, 4))
    assert ground_truth_from_parentage(log, parents, mention_only=False, min_links=2).pairs == frozenset()


def test_relative_thresholds_and_dominance():
    edges, truth = counting_fixture()
    ths = relative_thresholds(edges, [0.0, 0.5, 1.0])
    assert ths == [0.0, 0.45, 0.9]
    good = threshold_sweep(edges, truth, ths)
    noisy = threshold_sweep(edges + [(9, 0, 0.95), (8, 0, 0.95)], truth, ths)
    assert dominates_at_matched_nsr(good, noisy)
    assert not dominates_at_matched_nsr(noisy, good)


def test_sweep_csv():
    edges, truth = counting_fixture()
    text = sweep_to_csv(threshold_sweep(edges, truth, [0.0, 2.0]))
    lines = text.splitlines()
    assert lines[0] == "threshold,recall,nsr,significant,correct"
    assert lines[2].split(",")[2] == ""


def test_eval_result_counts_consistent():
    edges, truth = counting_fixture()
    for th in np.linspace(0, 1, 11):
        r = evaluate_at(edges, truth, th)
        assert isinstance(r, EvalResult)
        assert r.correct <= r.significant and r.correct <= r.true


@st.composite
def scored(draw):
    K = draw(st.integers(2, 6))
    pairs = [(s, t) for s in range(K) for t in range(K) if s != t]
    truth = draw(st.sets(st.sampled_from(pairs), min_size=1))
    weights = draw(st.lists(st.floats(0, 1), min_size=len(pairs), max_size=len(pairs)))
    perm = draw(st.permutations(range(K)))
    ths = sorted(draw(st.lists(st.floats(0, 1), min_size=1, max_size=6)))
    return K, [(s, t, w) for (s, t), w in zip(pairs, weights)], frozenset(truth), perm, ths


@settings(max_examples=100, deadline=None)
@given(scored())
def test_permutation_invariance_and_monotone_sweep(case):
    K, edges, truth, perm, ths = case
    base = threshold_sweep(edges, GroundTruth(truth), ths)
    relabeled = threshold_sweep([(perm[s], perm[t], w) for s, t, w in edges],
                                GroundTruth(frozenset((perm[s], perm[t]) for s, t in truth)), ths)
    key = lambda r: (r.recall, r.noise_signal_ratio, r.significant, r.correct, r.true)
    assert [key(r) for r in base] == [key(r) for r in relabeled]
    recalls = [r.recall for r in base]
    assert recalls == sorted(recalls, reverse=True)
