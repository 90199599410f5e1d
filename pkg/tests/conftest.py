import math
from pathlib import Path

import numpy as np
import pytest

from hawkinfluence.events import EventLog, MarkedEvent
from hawkinfluence.kernel import BasisFamily, ImpulseCoefficients, basis_value
from hawkinfluence.model import HawkesParams
from hawkinfluence.simulate import SimConfig, simulate_with_parents


def brute_intensity(params, log, k, t):
    """Loop-over-events intensity, right-continuous at event times when t is nudged."""
    lam = params.background[k]
    fam = params.family
    for e in log.events:
        dt = t - e.time
        if 0 < dt <= fam.window:
            g = sum(params.impulse.weights[e.process, k, b] * basis_value(fam, b, dt)
                    for b in range(fam.count))
            lam += params.weights[e.process, k] * g
        if params.dyad_weights is not None and k in e.dyad:
            dfam = params.dyad_family
            if 0 < dt <= dfam.window:
                psi = np.mean([basis_value(dfam, b, dt) for b in range(dfam.count)])
                lam += params.dyad_weights[e.process, k] * psi
    return lam


def grid_intensity(params, log, k, grid):
    """Intensity of process k on an array of times, accumulated event by event."""
    lam = np.full(grid.shape, params.background[k], dtype=float)
    fam = params.family
    for e in log.events:
        dt = grid - e.time
        vals = np.zeros(grid.shape)
        for b in range(fam.count):
            vals += params.impulse.weights[e.process, k, b] * basis_value(fam, b, dt)
        lam += params.weights[e.process, k] * vals
        if params.dyad_weights is not None and k in e.dyad:
            dfam = params.dyad_family
            psi = np.mean([basis_value(dfam, b, dt) for b in range(dfam.count)], axis=0)
            lam += params.dyad_weights[e.process, k] * psi
    return lam


def _breakpoints(params, log):
    pts = {0.0, float(log.horizon)}
    fams = [params.family] + ([params.dyad_family] if params.dyad_weights is not None else [])
    for e in log.events:
        pts.add(e.time)
        for fam in fams:
            edges = [fam.window]
            if fam.kind == "boxcar":
                edges += [x for seg in fam.params for x in seg]
            for x in edges:
                if e.time + x < log.horizon:
                    pts.add(e.time + x)
    return np.array(sorted(pts))


def trapezoid_compensator(params, log, k, n_points=1_000_000):
    """Piecewise trapezoid of the intensity between kernel breakpoints.

    Segment endpoints are nudged inward so jumps are sampled from the
    correct side.
    """
    bp = _breakpoints(params, log)
    lengths = np.diff(bp)
    T = log.horizon
    total = 0.0
    for a, b, L in zip(bp[:-1], bp[1:], lengths):
        if L <= 0:
            continue
        n = max(3, int(round(n_points * L / T)))
        grid = np.linspace(a, b, n)
        eps = 1e-12 * max(1.0, T)
        grid[0] += eps
        grid[-1] -= eps
        total += np.trapezoid(grid_intensity(params, log, k, grid), grid)
    return total


def quadrature_nll(params, log, n_points=1_000_000):
    loglam = sum(math.log(brute_intensity(params, log, e.process, e.time)) for e in log.events)
    comp = sum(trapezoid_compensator(params, log, k, n_points) for k in range(params.num_processes))
    return comp - loglam


def _perturb(p, block, idx, h):
    if block == "b":
        b = p.background.copy()
        b[idx] *= math.exp(h)
        return p.replace(background=b)
    if block == "W":
        W = p.weights.copy()
        W[idx] *= math.exp(h)
        return p.replace(weights=W)
    if block == "A":
        A = p.impulse.weights.copy()
        A[idx] *= math.exp(h)
        return p.replace(impulse=ImpulseCoefficients(A))
    if block == "theta":
        th = p.feature_weights.copy()
        th[idx] += h
        return p.replace(feature_weights=th)
    Wd = p.dyad_weights.copy()
    Wd[idx] *= math.exp(h)
    return p.replace(dyad_weights=Wd)


def _pair_table(p, log):
    """Parameter-free kernel evaluations for every ordered event pair."""
    from hawkinfluence.kernel import basis_integral

    fam, dfam, T = p.family, p.dyad_family, log.horizon
    rows = []
    for n, e in enumerate(log.events):
        src, phi, dsrc, psi = [], [], [], []
        for m, s in enumerate(log.events[:n]):
            dt = e.time - s.time
            if not dt > 0:
                continue
            if dt <= fam.window:
                src.append(m)
                phi.append([basis_value(fam, j, dt) for j in range(fam.count)])
            if p.dyad_weights is not None and e.process in s.dyad and dt <= dfam.window:
                dsrc.append(m)
                psi.append(np.mean([basis_value(dfam, j, dt) for j in range(dfam.count)]))
        rows.append((np.array(src, dtype=int), np.array(phi).reshape(-1, fam.count),
                     np.array(dsrc, dtype=int), np.array(psi)))
    mass = np.array([[basis_integral(fam, j, 0.0, min(fam.window, T - e.time)) for j in range(fam.count)]
                     for e in log.events]).reshape(-1, fam.count)
    dmass = None
    if p.dyad_weights is not None:
        dmass = np.array([np.mean([basis_integral(dfam, j, 0.0, min(dfam.window, T - e.time))
                                   for j in range(dfam.count)]) for e in log.events])
    return rows, mass, dmass


def objective_terms(p, log, prior, table=None):
    """Every additive piece of the negative log-posterior, computed by brute force.

    Per-event log terms (soft-labelled marked form for featured events),
    per-event compensator deposits, background mass and prior entries.
    """
    rows, mass, dmass = table if table is not None else _pair_table(p, log)
    T = log.horizon
    A, W, b, Wd, theta = p.impulse.weights, p.weights, p.background, p.dyad_weights, p.feature_weights
    F = log.num_features
    c = np.array([e.process for e in log.events], dtype=int)
    use_feat = theta is not None and F > 0
    if use_feat:
        attr = np.full((len(log), F), 1.0 / F)
        for m, e in enumerate(log.events):
            if e.features is not None:
                z = theta[e.process] * np.array(e.features)
                z = np.exp(z - z.max())
                attr[m] = z / z.sum()

    terms = []
    for n, (e, (src, phi, dsrc, psi)) in enumerate(zip(log.events, rows)):
        k = e.process
        rho = W[c[src], k] * np.einsum("pj,pj->p", phi, A[c[src], k]) if src.size else np.zeros(0)
        om = float(np.sum(Wd[c[dsrc], k] * psi)) if dsrc.size else 0.0
        if use_feat and e.features is not None:
            lab = np.array(e.features) / sum(e.features)
            lam = (b[k] + om) / F + (rho @ attr[src] if src.size else 0.0)
            terms.append(-float(np.sum(lab * np.log(lam))))
        else:
            terms.append(-math.log(b[k] + om + float(np.sum(rho))))
    terms.extend(b * T)
    for m, e in enumerate(log.events):
        terms.extend(W[e.process] * (A[e.process] @ mass[m]))
        if Wd is not None:
            terms.extend(Wd[e.process, k] * dmass[m] for k in sorted(e.dyad))
    if prior is not None:
        for M in (W, Wd):
            if M is not None:
                terms.extend((-(prior.gamma_shape - 1) * np.log(np.maximum(M, 1e-12))
                              + prior.gamma_rate * M).ravel())
        if theta is not None:
            terms.extend((0.5 * prior.theta_penalty * theta ** 2).ravel())
        terms.extend((0.5 * prior.coefficient_penalty * (A - 1.0 / A.shape[2]) ** 2).ravel())
    return np.array(terms, dtype=float)


def central_differences(p, log, prior, h=1e-5):
    """Central differences in log space for positive blocks, raw for theta.

    Differences are taken term by term on :func:`objective_terms` and
    summed with ``math.fsum`` so unchanged terms cancel exactly.
    """
    blocks = {"b": p.background, "W": p.weights, "A": p.impulse.weights}
    if p.feature_weights is not None:
        blocks["theta"] = p.feature_weights
    if p.dyad_weights is not None:
        blocks["Wd"] = p.dyad_weights
    table = _pair_table(p, log)
    out = {}
    for name, arr in blocks.items():
        g = np.zeros(arr.shape)
        for idx in np.ndindex(arr.shape):
            up = objective_terms(_perturb(p, name, idx, h), log, prior, table)
            dn = objective_terms(_perturb(p, name, idx, -h), log, prior, table)
            g[idx] = math.fsum(up - dn) / (2 * h)
        out[name] = g
    return out


def gradient_errors(p, log, prior, h=1e-5, atol=1e-6):
    """Worst relative error of the analytic gradient against central differences."""
    from hawkinfluence.model import gradient

    g = gradient(p, log, prior)
    fd = central_differences(p, log, prior, h)
    pairs = [(g.log_background, fd["b"]), (g.log_weights, fd["W"]), (g.coefficient_logits, fd["A"])]
    if "theta" in fd:
        pairs.append((g.feature_weights, fd["theta"]))
    if "Wd" in fd:
        pairs.append((g.log_dyad_weights, fd["Wd"]))
    worst = 0.0
    for a, n in pairs:
        rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), atol)
        worst = max(worst, float(rel.max()))
    return worst


def random_params(rng, K=3, F=0, B=2, dyad=False, kind="raised-cosine", window=5.0):
    fam = BasisFamily(kind, B, window)
    theta = rng.normal(0, 1, (K, F)) if F else None
    Wd = rng.uniform(0.05, 0.5, (K, K)) if dyad else None
    dfam = BasisFamily("truncated-exponential", 2, 4.0) if dyad else None
    return HawkesParams(rng.uniform(0.2, 1.0, K), rng.uniform(0.0, 0.4, (K, K)), fam,
                        ImpulseCoefficients(rng.uniform(0.1, 1.0, (K, K, B))), theta, Wd, dfam)


def random_log(rng, params, horizon=40.0, seed=0, F=0, mention_p=0.0, missing_every=0):
    K = params.num_processes
    cfg = SimConfig(params.replace(feature_weights=None), horizon, seed=seed,
                    dyad_emission=np.full((K, K), mention_p) if mention_p else None)
    log = simulate_with_parents(cfg).log
    if F:
        evs = []
        for i, e in enumerate(log.events):
            feat = None if missing_every and i % missing_every == 0 else \
                tuple(rng.uniform(0.1, 2.0, F))
            evs.append(MarkedEvent(e.time, e.process, feat, e.dyad))
        log = EventLog(log.horizon, K, F, tuple(evs))
    return log


@pytest.fixture
def boxcar2():
    return BasisFamily("boxcar", 1, 2.0)


@pytest.fixture
def two_proc_params(boxcar2):
    W = np.array([[0.0, 0.8], [0.0, 0.0]])
    return HawkesParams(np.array([0.3, 0.1]), W, boxcar2, ImpulseCoefficients.uniform(2, 1))


@pytest.fixture
def one_event_log():
    return EventLog(10.0, 2, 0, (MarkedEvent(1.0, 0),))


def run_pipeline(root, config_path, overrides=()):
    """simulate -> fit -> score -> network -> evaluate in ``root``; returns exit codes."""
    from hawkinfluence.cli import main

    root = Path(root)
    sets = [a for kv in overrides for a in ("--set", kv)]
    base = ["--config", str(config_path), *sets]
    codes = [main(["simulate", *base, "--out", str(root / "sim")])]
    ev = str(root / "sim" / "events.jsonl")
    codes.append(main(["fit", *base, "--events", ev, "--out", str(root / "fit")]))
    model = str(root / "fit" / "model.json")
    codes.append(main(["score", *base, "--model", model, "--events", ev, "--out", str(root / "score")]))
    codes.append(main(["network", *base, "--model", model, "--events", ev, "--out", str(root / "net")]))
    codes.append(main(["evaluate", *base, "--edges", str(root / "net" / "network.json"),
                       "--parentage", str(root / "sim" / "parentage.jsonl"), "--events", ev,
                       "--out", str(root / "eval")]))
    return codes


def output_hashes(root):
    import hashlib

    root = Path(root)
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}
