"""Multivariate Hawkes intensities, likelihood, log-posterior and gradients.

Weights are indexed ``W[sender, receiver]``. The impulse from a sender
event at ``s`` onto receiver ``k`` is ``W[c, k] * g_{c,k}(t - s)`` with
``g`` a unit-mass convex combination of basis functions. Optional blocks:

* ``feature_weights`` (K, F): softmax attribution of each sender event's
  impulse across features;
* ``dyad_weights`` (K, K): an extra channel fired only towards processes
  an event mentions, shaped by ``dyad_family`` (equal-weight mixture of
  its bases).

With features active the event term of the likelihood is the soft-labelled
marked intensity ``(b_k + omega_k(t)) / F + sum rho(t - s_m) * attr_m(i)``,
which sums over ``i`` to the total intensity, so the compensator is the
same as the unmarked model.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .events import EventLog, MarkedEvent
from .kernel import BasisFamily, ImpulseCoefficients

LOG_FLOOR = 1e-12


class ModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HawkesParams:
    background: np.ndarray
    weights: np.ndarray
    family: BasisFamily
    impulse: ImpulseCoefficients
    feature_weights: np.ndarray | None = None
    dyad_weights: np.ndarray | None = None
    dyad_family: BasisFamily | None = None

    def __post_init__(self):
        b = _frozen(self.background)
        W = _frozen(self.weights)
        K = b.shape[0]
        if b.ndim != 1 or W.shape != (K, K):
            raise ModelError("background must be (K,) and weights (K, K)")
        if not np.all(b > 0) or not np.all(np.isfinite(b)):
            raise ModelError("background rates must be finite and > 0")
        if not np.all(W >= 0) or not np.all(np.isfinite(W)):
            raise ModelError("weights must be finite and >= 0")
        if self.impulse.num_processes != K or self.impulse.count != self.family.count:
            raise ModelError("impulse coefficients do not match K or the basis count")
        object.__setattr__(self, "background", b)
        object.__setattr__(self, "weights", W)
        if self.feature_weights is not None:
            th = _frozen(self.feature_weights)
            if th.ndim != 2 or th.shape[0] != K or not np.all(np.isfinite(th)):
                raise ModelError("feature_weights must be a finite (K, F) matrix")
            object.__setattr__(self, "feature_weights", th)
        if self.dyad_weights is not None:
            Wd = _frozen(self.dyad_weights)
            if Wd.shape != (K, K) or not np.all(Wd >= 0) or not np.all(np.isfinite(Wd)):
                raise ModelError("dyad_weights must be a finite non-negative (K, K) matrix")
            object.__setattr__(self, "dyad_weights", Wd)
            if self.dyad_family is None:
                object.__setattr__(self, "dyad_family", self.family)

    @property
    def num_processes(self) -> int:
        return self.background.shape[0]

    @property
    def window(self) -> float:
        w = self.family.window
        if self.dyad_weights is not None:
            w = max(w, self.dyad_family.window)
        return w

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.weights))))

    def check_stability(self) -> bool:
        """Warn (never raise) when the branching matrix is explosive."""
        r = self.spectral_radius()
        if r >= 1:
            warnings.warn(f"spectral radius of W is {r:.3g} >= 1; process may explode",
                          RuntimeWarning, stacklevel=2)
            return False
        return True

    def replace(self, **changes) -> "HawkesParams":
        return replace(self, **changes)

    def kernel(self, sender: int, receiver: int, dt) -> np.ndarray:
        return self.family.values(dt) @ self.impulse.weights[sender, receiver]

    def dyad_kernel(self, dt) -> np.ndarray:
        return self.dyad_family.values(dt).mean(axis=-1)

    def to_dict(self) -> dict:
        d = {
            "background": self.background.tolist(),
            "weights": self.weights.tolist(),
            "kernel": self.family.to_dict(),
            "impulse": self.impulse.weights.tolist(),
        }
        if self.feature_weights is not None:
            d["feature_weights"] = self.feature_weights.tolist()
        if self.dyad_weights is not None:
            d["dyad_weights"] = self.dyad_weights.tolist()
            d["dyad_kernel"] = self.dyad_family.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HawkesParams":
        unknown = set(d) - {"background", "weights", "kernel", "impulse",
                            "feature_weights", "dyad_weights", "dyad_kernel"}
        if unknown:
            raise ModelError(f"unknown parameter keys {sorted(unknown)}")
        family = BasisFamily.from_dict(d["kernel"])
        K = len(d["background"])
        impulse = (ImpulseCoefficients(np.array(d["impulse"])) if "impulse" in d
                   else ImpulseCoefficients.uniform(K, family.count))
        dyad_family = BasisFamily.from_dict(d["dyad_kernel"]) if "dyad_kernel" in d else None
        return cls(np.array(d["background"], dtype=float), np.array(d["weights"], dtype=float),
                   family, impulse,
                   None if d.get("feature_weights") is None else np.array(d["feature_weights"], dtype=float),
                   None if d.get("dyad_weights") is None else np.array(d["dyad_weights"], dtype=float),
                   dyad_family)

    def __eq__(self, other):
        if not isinstance(other, HawkesParams):
            return NotImplemented
        return self.to_dict() == other.to_dict()


@dataclass(frozen=True)
class PriorConfig:
    """Gamma(shape, rate) on every W and W' entry plus quadratic penalties.

    ``theta_penalty`` multiplies ``|theta|^2 / 2``; ``coefficient_penalty``
    multiplies the squared distance of each impulse simplex from uniform.
    """

    gamma_shape: float = 1.1
    gamma_rate: float = 1.0
    theta_penalty: float = 0.01
    coefficient_penalty: float = 0.0

    def __post_init__(self):
        if not self.gamma_shape > 0:
            raise ModelError("gamma_shape must be > 0")
        if not self.gamma_rate >= 0:
            raise ModelError("gamma_rate must be >= 0")
        if self.theta_penalty < 0 or self.coefficient_penalty < 0:
            raise ModelError("penalty weights must be >= 0")


FLAT_PRIOR = PriorConfig(1.0, 0.0, 0.0, 0.0)


@dataclass
class HawkesGradient:
    """Gradient with respect to the unconstrained parameterisation.

    Positive blocks are differentiated in log space, impulse simplices in
    softmax-logit space, ``theta`` raw.
    """

    log_background: np.ndarray
    log_weights: np.ndarray
    coefficient_logits: np.ndarray
    feature_weights: np.ndarray | None = None
    log_dyad_weights: np.ndarray | None = None

    def blocks(self) -> list[np.ndarray]:
        out = [self.log_background, self.log_weights, self.coefficient_logits]
        out += [x for x in (self.feature_weights, self.log_dyad_weights) if x is not None]
        return out

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(x ** 2) for x in self.blocks())))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_attribution(theta: np.ndarray, event: MarkedEvent) -> np.ndarray:
    """Distribution over features: softmax of ``theta[c] * f`` elementwise."""
    if event.features is None:
        raise ModelError("event has no features")
    theta = np.asarray(theta, dtype=float)
    if not 0 <= event.process < theta.shape[0]:
        raise ModelError(f"event process {event.process} out of range")
    f = np.asarray(event.features, dtype=float)
    if f.shape[0] != theta.shape[1]:
        raise ModelError("feature length does not match theta")
    return _softmax(theta[event.process] * f)


def _attributions(theta: np.ndarray, log: EventLog) -> np.ndarray:
    """(N, F) softmax attributions; unfeatured events get uniform rows."""
    c = log.processes
    F = theta.shape[1]
    out = np.full((len(log), F), 1.0 / F)
    has = log.has_features
    if np.any(has):
        out[has] = _softmax(theta[c[has]] * log.feature_matrix[has])
    return out


# pair design


class Design:
    """Precomputed event pairs and basis quantities for one (log, kernels).

    ``src -> dst`` lists every ordered pair with ``0 < s_dst - s_src <= window``.
    """

    def __init__(self, log: EventLog, family: BasisFamily, dyad_family: BasisFamily | None = None):
        self.log = log
        self.family = family
        self.dyad_family = dyad_family
        s, c = log.times, log.processes
        self.N, self.K, self.T = len(log), log.num_processes, float(log.horizon)
        window = family.window if dyad_family is None else max(family.window, dyad_family.window)

        start = np.searchsorted(s, s - window, side="left")
        lengths = np.arange(self.N) - start
        total = int(lengths.sum())
        dst = np.repeat(np.arange(self.N), lengths)
        first = np.repeat(np.cumsum(lengths) - lengths, lengths)
        src = np.repeat(start, lengths) + (np.arange(total) - first)
        dt = s[dst] - s[src]
        keep = (dt > 0) & (dt <= window)
        self.src, self.dst, self.dt = src[keep], dst[keep], dt[keep]
        self.ks, self.kd = c[self.src], c[self.dst]
        self.pair_key = self.ks * self.K + self.kd

        self.phi = family.values(self.dt)
        remaining = self.T - s
        # S[k', b]: total in-horizon basis mass emitted by sender k'
        ibar = family.cumulative(remaining)
        self.sender_mass = np.zeros((self.K, family.count))
        np.add.at(self.sender_mass, c, ibar)

        if dyad_family is not None and log.num_processes:
            mention = log.dyad_matrix[self.src, self.kd]
            self.dsrc, self.ddst = self.src[mention], self.dst[mention]
            self.dkey = self.pair_key[mention]
            self.psi = dyad_family.values(self.dt[mention]).mean(axis=-1)
            j = dyad_family.cumulative(remaining).mean(axis=-1)
            onehot = np.zeros((self.N, self.K))
            onehot[np.arange(self.N), c] = 1.0
            self.dyad_mass = onehot.T @ (j[:, None] * log.dyad_matrix)
        else:
            self.dsrc = self.ddst = self.dkey = np.zeros(0, dtype=np.int64)
            self.psi = np.zeros(0)
            self.dyad_mass = np.zeros((self.K, self.K))

        self.featured = log.num_features > 0
        if self.featured:
            f = log.feature_matrix
            tot = f.sum(axis=1, keepdims=True)
            self.labels = np.divide(f, tot, out=np.zeros_like(f), where=tot > 0)

    def matches(self, params: HawkesParams, log: EventLog) -> bool:
        return (log is self.log and params.family == self.family
                and (params.dyad_weights is None or params.dyad_family == self.dyad_family))


def make_design(params: HawkesParams, log: EventLog) -> Design:
    if log.num_processes != params.num_processes:
        raise ModelError(f"log has K={log.num_processes}, params K={params.num_processes}")
    if params.feature_weights is not None and params.feature_weights.shape[1] != log.num_features:
        raise ModelError("feature_weights width does not match the log's feature count")
    return Design(log, params.family, params.dyad_family if params.dyad_weights is not None else None)


def _evaluate(params: HawkesParams, d: Design, prior: PriorConfig | None,
              want_grad: bool, event_weights: np.ndarray | None = None,
              comp_scale: float = 1.0):
    """Objective ``-sum_n w_n log-term_n + comp_scale * (compensator + prior)``."""
    K, N, T = d.K, d.N, d.T
    b, W, A = params.background, params.weights, params.impulse.weights
    c = d.log.processes
    ew = np.ones(N) if event_weights is None else event_weights
    use_dyad = params.dyad_weights is not None
    use_feat = params.feature_weights is not None and d.featured

    A_pair = A[d.ks, d.kd]
    g_pair = np.einsum("pb,pb->p", d.phi, A_pair)
    rho = W[d.ks, d.kd] * g_pair
    omega_n = np.zeros(N)
    if use_dyad:
        Wd = params.dyad_weights
        om = Wd.ravel()[d.dkey] * d.psi
        omega_n = np.bincount(d.ddst, om, minlength=N)
    lam = b[c] + np.bincount(d.dst, rho, minlength=N) + omega_n

    if use_feat:
        theta = params.feature_weights
        F = theta.shape[1]
        attr = _attributions(theta, d.log)
        marked = d.log.has_features
        lam_f = np.empty((N, F))
        base = (b[c] + omega_n) / F
        contrib = rho[:, None] * attr[d.src]
        for i in range(F):
            lam_f[:, i] = base + np.bincount(d.dst, contrib[:, i], minlength=N)
        logterm = np.where(marked, np.sum(d.labels * np.log(lam_f), axis=1), np.log(lam))
    else:
        logterm = np.log(lam)

    AS = np.einsum("kjb,kb->kj", A, d.sender_mass)
    comp = b.sum() * T + np.sum(W * AS)
    if use_dyad:
        comp += np.sum(params.dyad_weights * d.dyad_mass)
    pen = 0.0
    if prior is not None:
        pen = _prior_value(params, prior)
    value = -np.dot(ew, logterm) + comp_scale * (comp + pen)
    if not want_grad:
        return float(value), None

    # d(-loglik)/d(intensity pieces)
    if use_feat:
        r = np.where(marked[:, None], ew[:, None] * d.labels / lam_f, 0.0)
        wb = np.where(marked, r.sum(axis=1) / F, ew / lam)
        w_pair = np.where(marked[d.dst], np.einsum("pi,pi->p", r[d.dst], attr[d.src]),
                          ew[d.dst] / lam[d.dst])
    else:
        wb = ew / lam
        w_pair = wb[d.dst]

    g_b = -np.bincount(c, wb, minlength=K) + comp_scale * T
    g_W = (-np.bincount(d.pair_key, w_pair * g_pair, minlength=K * K).reshape(K, K)
           + comp_scale * AS)
    g_A = np.zeros((K * K, A.shape[2]))
    np.add.at(g_A, d.pair_key, (w_pair * W[d.ks, d.kd])[:, None] * d.phi)
    g_A = -g_A.reshape(A.shape) + comp_scale * W[:, :, None] * d.sender_mass[:, None, :]

    grad = HawkesGradient(np.zeros(K), np.zeros((K, K)), np.zeros(A.shape))
    if use_dyad:
        g_Wd = (-np.bincount(d.dkey, wb[d.ddst] * d.psi, minlength=K * K).reshape(K, K)
                + comp_scale * d.dyad_mass)
    if use_feat:
        featured_src = d.log.has_features[d.src] & marked[d.dst]
        G = np.zeros((N, F))
        sel = np.flatnonzero(featured_src)
        np.add.at(G, d.src[sel], -rho[sel, None] * r[d.dst[sel]])
        dz = attr * (G - np.sum(attr * G, axis=1, keepdims=True))
        dz[~d.log.has_features] = 0.0
        g_theta = np.zeros_like(theta)
        np.add.at(g_theta, c, d.log.feature_matrix * dz)
        grad.feature_weights = g_theta

    if prior is not None:
        _prior_grad(params, prior, comp_scale, g_W, g_A,
                    g_Wd if use_dyad else None, grad.feature_weights)

    grad.log_background = b * g_b
    grad.log_weights = W * g_W
    grad.coefficient_logits = A * (g_A - np.sum(A * g_A, axis=-1, keepdims=True))
    if use_dyad:
        grad.log_dyad_weights = params.dyad_weights * g_Wd
    return float(value), grad


def _gamma_terms(M: np.ndarray, prior: PriorConfig) -> float:
    return float(np.sum(-(prior.gamma_shape - 1.0) * np.log(np.maximum(M, LOG_FLOOR))
                        + prior.gamma_rate * M))


def _gamma_grad(M: np.ndarray, prior: PriorConfig) -> np.ndarray:
    inv = np.divide(1.0, M, out=np.zeros_like(M), where=M > LOG_FLOOR)
    return -(prior.gamma_shape - 1.0) * inv + prior.gamma_rate


def _prior_value(params: HawkesParams, prior: PriorConfig) -> float:
    v = _gamma_terms(params.weights, prior)
    if params.dyad_weights is not None:
        v += _gamma_terms(params.dyad_weights, prior)
    if params.feature_weights is not None:
        v += 0.5 * prior.theta_penalty * float(np.sum(params.feature_weights ** 2))
    if prior.coefficient_penalty:
        A = params.impulse.weights
        v += 0.5 * prior.coefficient_penalty * float(np.sum((A - 1.0 / A.shape[2]) ** 2))
    return v


def _prior_grad(params, prior, scale, g_W, g_A, g_Wd, g_theta):
    g_W += scale * _gamma_grad(params.weights, prior)
    if g_Wd is not None:
        g_Wd += scale * _gamma_grad(params.dyad_weights, prior)
    if g_theta is not None:
        g_theta += scale * prior.theta_penalty * params.feature_weights
    if prior.coefficient_penalty:
        A = params.impulse.weights
        g_A += scale * prior.coefficient_penalty * (A - 1.0 / A.shape[2])


# public API


def neg_log_likelihood(params: HawkesParams, log: EventLog, design: Design | None = None) -> float:
    """Exact negative log-likelihood: event log-intensities minus compensator."""
    d = design if design is not None else make_design(params, log)
    return _evaluate(params, d, None, False)[0]


def neg_log_posterior(params: HawkesParams, log: EventLog, prior: PriorConfig,
                      design: Design | None = None) -> float:
    d = design if design is not None else make_design(params, log)
    return _evaluate(params, d, prior, False)[0]


def gradient(params: HawkesParams, log: EventLog, prior: PriorConfig | None,
             design: Design | None = None) -> HawkesGradient:
    d = design if design is not None else make_design(params, log)
    return _evaluate(params, d, prior, True)[1]


def value_and_gradient(params, log, prior, design=None, event_weights=None, comp_scale=1.0):
    d = design if design is not None else make_design(params, log)
    return _evaluate(params, d, prior, True, event_weights, comp_scale)


def _recent(log: EventLog, t: float, window: float) -> tuple[np.ndarray, np.ndarray]:
    s = log.times
    lo = np.searchsorted(s, t - window, side="left")
    hi = np.searchsorted(s, t, side="left")
    idx = np.arange(lo, hi)
    dt = t - s[idx]
    keep = (dt > 0) & (dt <= window)
    return idx[keep], dt[keep]


def _check_time(log: EventLog, t: float):
    if not 0 <= t <= log.horizon:
        raise ModelError(f"time {t} outside [0, {log.horizon}]")


def _check_proc(params: HawkesParams, k: int):
    if not 0 <= k < params.num_processes:
        raise ModelError(f"process {k} out of range")


def intensity(params: HawkesParams, log: EventLog, k: int, t: float,
              include_dyad: bool = True) -> float:
    """``b_k`` plus the impulses of strictly-past events still inside the window."""
    _check_time(log, t)
    _check_proc(params, k)
    idx, dt = _recent(log, t, params.window)
    senders = log.processes[idx]
    in_g = dt <= params.family.window
    A = params.impulse.weights[senders[in_g], k]
    lam = params.background[k] + np.sum(
        params.weights[senders[in_g], k] * np.einsum("pb,pb->p", params.family.values(dt[in_g]), A))
    if include_dyad and params.dyad_weights is not None:
        m = log.dyad_matrix[idx, k]
        lam += np.sum(params.dyad_weights[senders[m], k] * params.dyad_kernel(dt[m]))
    return float(lam)


def feature_intensity(params: HawkesParams, log: EventLog, k: int, i: int, t: float) -> float:
    """Feature-resolved rate ``b_k + sum rho * attr(i) + sum omega``.

    Unfeatured sender events split their impulse uniformly across features.
    """
    if params.feature_weights is None or log.num_features == 0:
        raise ModelError("feature_intensity needs feature weights and a featured log")
    if not 0 <= i < log.num_features:
        raise ModelError(f"feature index {i} out of range")
    _check_time(log, t)
    _check_proc(params, k)
    idx, dt = _recent(log, t, params.window)
    senders = log.processes[idx]
    in_g = dt <= params.family.window
    attr = _attributions(params.feature_weights, log)[idx[in_g], i]
    g = np.einsum("pb,pb->p", params.family.values(dt[in_g]),
                  params.impulse.weights[senders[in_g], k])
    lam = params.background[k] + np.sum(params.weights[senders[in_g], k] * g * attr)
    if params.dyad_weights is not None:
        m = log.dyad_matrix[idx, k]
        lam += np.sum(params.dyad_weights[senders[m], k] * params.dyad_kernel(dt[m]))
    return float(lam)


def compensator_many(params: HawkesParams, log: EventLog, k: int, ts) -> np.ndarray:
    """``Lambda_k(t)`` for each ``t`` in ``ts``; events at or after ``t`` excluded."""
    ts = np.asarray(ts, dtype=float)
    s, c = log.times, log.processes
    out = params.background[k] * ts
    # events older than the window have deposited their full unit mass
    Wk = params.weights[c, k]
    csum = np.concatenate([[0.0], np.cumsum(Wk)])
    fam = params.family
    full = np.searchsorted(s, ts - fam.window, side="right")
    out = out + csum[full]
    hi = np.searchsorted(s, ts, side="left")
    A = params.impulse.weights
    for j in range(ts.shape[0]):
        idx = np.arange(full[j], hi[j])
        if idx.size:
            mass = fam.cumulative(ts[j] - s[idx])
            out[j] += np.sum(Wk[idx] * np.einsum("pb,pb->p", mass, A[c[idx], k]))
    if params.dyad_weights is not None:
        dfam = params.dyad_family
        mentions = np.flatnonzero(log.dyad_matrix[:, k])
        if mentions.size:
            sm = s[mentions]
            wm = params.dyad_weights[c[mentions], k]
            for j in range(ts.shape[0]):
                sel = sm < ts[j]
                if np.any(sel):
                    out[j] += np.sum(wm[sel] * dfam.cumulative(ts[j] - sm[sel]).mean(axis=-1))
    return out
