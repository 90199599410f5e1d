"""MAP estimation: minibatch stochastic gradient and L-BFGS on the log-posterior."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .events import EventLog, atomic_write_text
from .kernel import BasisFamily, ImpulseCoefficients
from .model import (Design, HawkesGradient, HawkesParams, PriorConfig, make_design,
                    value_and_gradient)

log_ = logging.getLogger(__name__)

METHODS = ("quasi-newton", "sgd")
_W_FLOOR = 1e-12


class FitError(RuntimeError):
    def __init__(self, message: str, iteration: int | None = None):
        self.iteration = iteration
        super().__init__(message if iteration is None else f"iteration {iteration}: {message}")


@dataclass(frozen=True)
class FitConfig:
    method: str = "quasi-newton"
    max_iterations: int = 500
    learning_rate: float = 0.05
    lr_decay: float = 0.01
    batch_size: int = 256
    tolerance: float = 1e-7
    patience: int = 5
    seed: int = 0
    prior: PriorConfig = field(default_factory=PriorConfig)
    family: BasisFamily = field(default_factory=BasisFamily)
    dyad_family: BasisFamily | None = None
    use_dyads: bool | None = None
    use_features: bool | None = None
    shared_coefficients: bool = False
    init: HawkesParams | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.learning_rate <= 0 or self.lr_decay < 0:
            raise ValueError("step sizes must be positive")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        if self.max_iterations < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("iteration counts must be >= 1")


@dataclass(frozen=True, eq=False)
class FittedModel:
    params: HawkesParams
    objective_trace: tuple[float, ...]
    converged: bool
    iterations: int
    gradient_norm: float
    prior: PriorConfig = field(default_factory=PriorConfig)
    method: str = "quasi-newton"

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "prior": vars(self.prior).copy(),
            "fit": {
                "method": self.method,
                "converged": self.converged,
                "iterations": self.iterations,
                "gradient_norm": self.gradient_norm,
                "objective_trace": list(self.objective_trace),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        fit = d["fit"]
        return cls(HawkesParams.from_dict(d["params"]), tuple(fit["objective_trace"]),
                   bool(fit["converged"]), int(fit["iterations"]), float(fit["gradient_norm"]),
                   PriorConfig(**d["prior"]), fit["method"])


def save_model(model: FittedModel, path: str | os.PathLike) -> None:
    atomic_write_text(path, json.dumps(model.to_dict(), indent=1) + "\n")


def load_model(path: str | os.PathLike) -> FittedModel:
    with open(path, encoding="utf-8") as fh:
        return FittedModel.from_dict(json.load(fh))


class Layout:
    """Maps a :class:`HawkesParams` template to a flat unconstrained vector."""

    def __init__(self, template: HawkesParams, shared_coefficients: bool = False):
        self.template = template
        self.K = template.num_processes
        self.B = template.family.count
        self.shared = shared_coefficients
        self.has_theta = template.feature_weights is not None
        self.has_dyad = template.dyad_weights is not None
        K, B = self.K, self.B
        sizes = [K, K * K]
        sizes.append(0 if B == 1 else (B if self.shared else K * K * B))
        sizes.append(template.feature_weights.size if self.has_theta else 0)
        sizes.append(K * K if self.has_dyad else 0)
        self.bounds = np.cumsum([0] + sizes)

    @property
    def size(self) -> int:
        return int(self.bounds[-1])

    def _block(self, x, i):
        return x[self.bounds[i]:self.bounds[i + 1]]

    def pack(self, p: HawkesParams) -> np.ndarray:
        B = self.B
        parts = [np.log(p.background), np.log(np.maximum(p.weights, _W_FLOOR)).ravel()]
        if B > 1:
            logits = np.log(np.maximum(p.impulse.weights, 1e-300))
            parts.append(logits[0, 0] if self.shared else logits.ravel())
        if self.has_theta:
            parts.append(p.feature_weights.ravel())
        if self.has_dyad:
            parts.append(np.log(np.maximum(p.dyad_weights, _W_FLOOR)).ravel())
        return np.concatenate(parts)

    def unpack(self, x: np.ndarray) -> HawkesParams:
        K, B = self.K, self.B
        t = self.template
        b = np.exp(self._block(x, 0))
        W = np.exp(self._block(x, 1)).reshape(K, K)
        impulse = t.impulse
        if B > 1:
            z = self._block(x, 2)
            z = np.broadcast_to(z, (K, K, B)) if self.shared else z.reshape(K, K, B)
            z = z - z.max(axis=-1, keepdims=True)
            impulse = ImpulseCoefficients(np.exp(z))
        theta = self._block(x, 3).reshape(t.feature_weights.shape) if self.has_theta else None
        Wd = np.exp(self._block(x, 4)).reshape(K, K) if self.has_dyad else None
        return HawkesParams(b, W, t.family, impulse, theta, Wd, t.dyad_family)

    def bounds_list(self) -> list[tuple[float | None, float | None]]:
        """Box limits keeping exp() of log-space blocks finite during line searches."""
        limits = [(-50.0, 20.0), (-30.0, 10.0), (-50.0, 50.0), (None, None), (-30.0, 10.0)]
        out = []
        for i, lim in enumerate(limits):
            out += [lim] * int(self.bounds[i + 1] - self.bounds[i])
        return out

    def pack_gradient(self, g: HawkesGradient) -> np.ndarray:
        parts = [g.log_background, g.log_weights.ravel()]
        if self.B > 1:
            parts.append(g.coefficient_logits.sum(axis=(0, 1)) if self.shared
                         else g.coefficient_logits.ravel())
        if self.has_theta:
            parts.append(g.feature_weights.ravel())
        if self.has_dyad:
            parts.append(g.log_dyad_weights.ravel())
        return np.concatenate(parts)


def default_init(log: EventLog, config: FitConfig) -> HawkesParams:
    """Empirical rates, ``W = 0.01``, ``theta = 0``, uniform simplices."""
    K, F, T = log.num_processes, log.num_features, log.horizon
    counts = log.counts().astype(float)
    b = np.maximum(counts, 0.5) / T
    fam = config.family
    use_feat = config.use_features if config.use_features is not None else F > 0
    use_dyad = (config.use_dyads if config.use_dyads is not None
                else bool(log.dyad_matrix.any()) if len(log) else False)
    if use_feat and F == 0:
        raise ValueError("use_features requested on an unfeatured log")
    theta = np.zeros((K, F)) if use_feat else None
    Wd = np.full((K, K), 0.01) if use_dyad else None
    dfam = (config.dyad_family or fam) if use_dyad else None
    return HawkesParams(b, np.full((K, K), 0.01), fam, ImpulseCoefficients.uniform(K, fam.count),
                        theta, Wd, dfam)


def _objective(layout: Layout, design: Design, prior: PriorConfig):
    def f(x, event_weights=None, comp_scale=1.0):
        p = layout.unpack(x)
        v, g = value_and_gradient(p, design.log, prior, design, event_weights, comp_scale)
        return v, layout.pack_gradient(g)
    return f


def fit(log: EventLog, config: FitConfig = FitConfig()) -> FittedModel:
    """Fit by MAP estimation; deterministic given ``config.seed``."""
    init = config.init if config.init is not None else default_init(log, config)
    layout = Layout(init, config.shared_coefficients)
    design = make_design(init, log)
    f = _objective(layout, design, config.prior)
    x0 = layout.pack(init)
    if config.method == "quasi-newton":
        x, trace, converged, its = _lbfgs(f, x0, config, layout.bounds_list())
    else:
        x, trace, converged, its = _sgd(f, x0, config, len(log), layout.bounds_list())
    params = layout.unpack(x)
    _, g = f(x)
    return FittedModel(params, tuple(trace), converged, its, float(np.linalg.norm(g)),
                       config.prior, config.method)


def _converged(trace: list[float], tol: float, patience: int) -> bool:
    if len(trace) <= patience:
        return False
    window = trace[-patience - 1:]
    scale = max(abs(window[-1]), 1.0)
    return all(abs(a - b) / scale < tol for a, b in zip(window[:-1], window[1:]))


def _lbfgs(f, x0, config: FitConfig, bounds=None):
    trace: list[float] = []
    state = {"converged": False}

    def checked(x):
        v, g = f(x)
        if not np.isfinite(v) or not np.all(np.isfinite(g)):
            raise FitError("non-finite objective", len(trace))
        return v, g

    v0, _ = checked(x0)
    trace.append(v0)

    def callback(intermediate_result):
        trace.append(float(intermediate_result.fun))
        if _converged(trace, config.tolerance, config.patience):
            state["converged"] = True
            raise StopIteration

    if bounds is not None:
        lo = np.array([-np.inf if a is None else a for a, _ in bounds])
        hi = np.array([np.inf if b is None else b for _, b in bounds])
        x0 = np.clip(x0, lo, hi)
    res = minimize(checked, x0, jac=True, method="L-BFGS-B", callback=callback, bounds=bounds,
                   options={"maxiter": config.max_iterations, "ftol": 0.0, "gtol": 1e-9,
                            "maxcor": 20})
    converged = state["converged"] or res.status == 0
    log_.debug("L-BFGS finished: %s after %d iterations", res.message, res.nit)
    return res.x, trace, converged, int(res.nit)


def _sgd(f, x0, config: FitConfig, n_events: int, bounds):
    """Minibatch stochastic gradient with Adam step scaling.

    Each batch objective is the batch's event terms plus the compensator and
    prior scaled by the batch fraction of events.
    """
    rng = np.random.default_rng(config.seed)
    lo = np.array([-np.inf if a is None else a for a, _ in bounds])
    hi = np.array([np.inf if b is None else b for _, b in bounds])
    x = np.clip(x0, lo, hi)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    full, _ = f(x)
    if not np.isfinite(full):
        raise FitError("non-finite objective", 0)
    trace = [full]
    best_x, best = x.copy(), full
    step = 0
    converged = False
    n = max(n_events, 1)
    epoch = 0
    for epoch in range(1, config.max_iterations + 1):
        lr = config.learning_rate / (1.0 + config.lr_decay * (epoch - 1))
        order = rng.permutation(n_events)
        batches = [order[i:i + config.batch_size] for i in range(0, n_events, config.batch_size)] or [order]
        for batch in batches:
            w = np.zeros(n_events)
            w[batch] = 1.0
            _, g = f(x, w, len(batch) / n)
            if not np.all(np.isfinite(g)):
                raise FitError("non-finite gradient", epoch)
            step += 1
            m = beta1 * m + (1 - beta1) * g
            v = beta2 * v + (1 - beta2) * g * g
            mhat = m / (1 - beta1 ** step)
            vhat = v / (1 - beta2 ** step)
            x = np.clip(x - lr * mhat / (np.sqrt(vhat) + eps), lo, hi)
        full, _ = f(x)
        if not np.isfinite(full):
            raise FitError("non-finite objective", epoch)
        trace.append(full)
        if full < best:
            best_x, best = x.copy(), full
        if _converged(trace, config.tolerance, config.patience):
            converged = True
            break
    return best_x, trace, converged, epoch


def finite_difference_check(params: HawkesParams, log: EventLog, prior: PriorConfig | None,
                            h: float = 1e-5, atol: float = 1e-6,
                            shared_coefficients: bool = False) -> float:
    """Worst coordinate-wise relative error of the analytic gradient.

    Central differences on the unconstrained parameterisation; each error
    is ``|a - n| / max(|a|, |n|, atol)``.
    """
    layout = Layout(params, shared_coefficients)
    design = make_design(params, log)
    f = _objective(layout, design, prior)
    x = layout.pack(params)
    _, g = f(x)
    worst = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        num = (f(x + e)[0] - f(x - e)[0]) / (2 * h)
        err = abs(g[i] - num) / max(abs(g[i]), abs(num), atol)
        worst = max(worst, err)
    return worst
