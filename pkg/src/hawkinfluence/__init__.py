"""Directed influence between event-emitting voices from multivariate Hawkes fits."""

__version__ = "0.1.0"

from .events import EventLog, FilterCriteria, MarkedEvent, filter_events, load_events, save_events
from .kernel import BasisFamily, ImpulseCoefficients
from .model import HawkesParams, PriorConfig, neg_log_likelihood, neg_log_posterior
from .simulate import SimConfig, simulate, simulate_with_parents
from .infer import FitConfig, fit
from .responsiveness import ResponsivenessQuery, influence_network, interval_responsiveness

__all__ = [
    "EventLog", "FilterCriteria", "MarkedEvent", "filter_events", "load_events", "save_events",
    "BasisFamily", "ImpulseCoefficients", "HawkesParams", "PriorConfig", "neg_log_likelihood",
    "neg_log_posterior", "SimConfig", "simulate", "simulate_with_parents", "FitConfig", "fit",
    "ResponsivenessQuery", "influence_network", "interval_responsiveness",
]
