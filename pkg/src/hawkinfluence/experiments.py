"""Synthetic scenarios with known ground truth, shared by scripts and tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evaluate import (EvalResult, dominates_at_matched_nsr, ground_truth_from_parentage,
                       relative_thresholds, threshold_sweep)
from .infer import FitConfig, fit
from .kernel import BasisFamily, ImpulseCoefficients
from .model import HawkesParams
from .responsiveness import influence_network
from .simulate import SimConfig, simulate, simulate_with_parents

SWEEP_FRACTIONS = (0.02, 0.05, 0.1, 0.2, 0.4)


def toy_chain() -> HawkesParams:
    """Three voices in a chain 0 -> 1 -> 2 with a weak 2 -> 0 return edge."""
    fam = BasisFamily("truncated-exponential", 1, 10.0, (1.0,))
    W = np.array([[0.0, 0.7, 0.0],
                  [0.0, 0.0, 0.6],
                  [0.1, 0.0, 0.0]])
    return HawkesParams(np.array([0.15, 0.05, 0.05]), W, fam, ImpulseCoefficients.uniform(3, 1))


def recovery_params() -> HawkesParams:
    """K=3, weights in {0, 0.3, 0.6}, spectral radius 0.6."""
    fam = BasisFamily("truncated-exponential", 1, 10.0, (1.0,))
    W = np.array([[0.3, 0.6, 0.0],
                  [0.0, 0.3, 0.3],
                  [0.3, 0.0, 0.0]])
    return HawkesParams(np.full(3, 0.1), W, fam, ImpulseCoefficients.uniform(3, 1))


def horizon_for(params: HawkesParams, expected_events: float) -> float:
    """Horizon giving ``expected_events`` at the stationary rate."""
    K = params.num_processes
    rate = np.linalg.solve(np.eye(K) - params.weights.T, params.background)
    return float(expected_events / rate.sum())


@dataclass(frozen=True)
class RecoveryTrial:
    seed: int
    n_events: int
    estimate: np.ndarray
    truth: np.ndarray
    converged: bool

    @property
    def passed(self) -> bool:
        nz = self.truth > 0
        return bool(np.all(np.abs(self.estimate - self.truth)[nz] <= 0.2)
                    and np.all(self.estimate[~nz] < 0.05))


def recovery_trial(seed: int, expected_events: float = 2000.0,
                   params: HawkesParams | None = None) -> RecoveryTrial:
    params = params or recovery_params()
    log = simulate(SimConfig(params, horizon_for(params, expected_events), seed=seed))
    m = fit(log, FitConfig(family=params.family, seed=seed))
    return RecoveryTrial(seed, len(log), np.asarray(m.params.weights), np.asarray(params.weights),
                         m.converged)


def mention_scenario() -> tuple[HawkesParams, np.ndarray]:
    """Five voices where replies to mentions arrive 1-5 time units later,
    alongside faster recency-driven follow-up.

    Returns the generating params and the per-pair mention probabilities;
    several mentioned pairs never reply.
    """
    K = 5
    g = BasisFamily("truncated-exponential", 1, 20.0, (0.5,))
    reply = BasisFamily("boxcar", 1, 6.0, ((1.0, 5.0),))
    W = np.zeros((K, K))
    W[0, 1], W[2, 3], W[4, 0] = 0.6, 0.4, 0.3
    Wd = np.zeros((K, K))
    Wd[0, 2], Wd[3, 4], Wd[1, 3] = 0.9, 0.8, 0.6
    mentions = np.zeros((K, K))
    mentions[0, 2], mentions[3, 4], mentions[1, 3] = 0.5, 0.5, 0.4
    mentions[2, 0], mentions[4, 1] = 0.3, 0.3
    params = HawkesParams(np.full(K, 0.05), W, g, ImpulseCoefficients.uniform(K, 1),
                          None, Wd, reply)
    return params, mentions


@dataclass(frozen=True)
class ComparisonTrial:
    seed: int
    n_events: int
    truth_pairs: frozenset
    recency: list[EvalResult]
    interaction: list[EvalResult]

    @property
    def interaction_dominates(self) -> bool:
        return dominates_at_matched_nsr(self.interaction, self.recency)


def comparison_trial(seed: int, horizon: float = 3000.0,
                     fractions=SWEEP_FRACTIONS) -> ComparisonTrial:
    """Fit recency-only and mention-aware models to one mention corpus and
    sweep thresholds (as fractions of each model's top edge weight)."""
    params, mentions = mention_scenario()
    sim = simulate_with_parents(SimConfig(params, horizon, seed=seed, dyad_emission=mentions))
    truth = ground_truth_from_parentage(sim.log, sim.parents, sim.channels)
    recency = fit(sim.log, FitConfig(family=params.family, use_dyads=False, seed=seed))
    inter = fit(sim.log, FitConfig(family=params.family, dyad_family=params.dyad_family,
                                   use_dyads=True, seed=seed))
    curves = []
    for m in (recency, inter):
        edges = influence_network(m.params, sim.log)
        curves.append(threshold_sweep(edges, truth, relative_thresholds(edges, fractions)))
    return ComparisonTrial(seed, len(sim.log), truth.pairs, curves[0], curves[1])
