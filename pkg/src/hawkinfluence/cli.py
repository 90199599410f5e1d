"""Batch command line: simulate, fit, score, network, evaluate, validate.

Every run writes its artifacts atomically into ``--out`` together with a
``manifest.json`` of config hash, seed, input/output hashes and versions.

Exit codes: 0 success, 1 usage/config error, 2 data validation failure,
3 numerical failure, 4 internal invariant violation.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .evaluate import (GroundTruth, InvariantError, ground_truth_from_parentage,
                       relative_thresholds, sweep_to_csv, threshold_sweep)
from .events import (EventFormatError, FilterCriteria, InvalidCriteriaError, atomic_write_text,
                     dump_events, parse_events, validate_log)
from .infer import FitConfig, FitError, FittedModel, fit
from .kernel import BasisFamily
from .model import HawkesParams, ModelError, PriorConfig
from .responsiveness import (ResponsivenessQuery, influence_network, network_from_json,
                             network_to_json, score)
from .simulate import SimConfig, SimulationError, dump_parentage, load_parentage, simulate_with_parents

logger = logging.getLogger("hawkinfluence")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_INVARIANT = 0, 1, 2, 3, 4

SCHEMA = {
    "seed": None,
    "verbosity": None,
    "kernel": {"kind", "count", "window", "params"},
    "dyad_kernel": {"kind", "count", "window", "params"},
    "prior": {"gamma_shape", "gamma_rate", "theta_penalty", "coefficient_penalty"},
    "fit": {"method", "max_iterations", "learning_rate", "lr_decay", "batch_size", "tolerance",
            "patience", "use_dyads", "use_features", "shared_coefficients"},
    "simulation": {"horizon", "background", "weights", "dyad_weights", "feature_weights",
                   "impulse", "feature_emission", "dyad_emission", "max_events", "labels"},
    "query": {"receiver", "sender", "interval", "feature", "resolution", "self_influence",
              "criteria"},
    "network": {"threshold", "interval"},
    "evaluate": {"fractions", "thresholds", "default_fraction", "mention_only", "min_links"},
}
CRITERIA_KEYS = {"voice_set", "topic_tags", "time_range", "min_feature_weight"}


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def check_config(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    for key, allowed in SCHEMA.items():
        if allowed is None or key not in cfg:
            continue
        block = cfg[key]
        if not isinstance(block, dict):
            raise ConfigError(f"config block {key!r} must be an object")
        bad = set(block) - allowed
        if bad:
            raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
    crit = cfg.get("query", {}).get("criteria")
    if crit is not None and set(crit) - CRITERIA_KEYS:
        raise ConfigError(f"unknown keys in query.criteria: {sorted(set(crit) - CRITERIA_KEYS)}")
    return cfg


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    """``a.b=value`` overrides; value parsed as JSON, else taken as a string."""
    cfg = copy.deepcopy(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = value
    return check_config(cfg)


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            cfg = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
    return apply_overrides(check_config(cfg), overrides)


def _family(cfg: dict, key: str = "kernel") -> BasisFamily:
    try:
        return BasisFamily.from_dict(cfg.get(key, {}))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _prior(cfg: dict) -> PriorConfig:
    try:
        return PriorConfig(**cfg.get("prior", {}))
    except (ModelError, TypeError) as exc:
        raise ConfigError(f"prior: {exc}") from None


def _fit_config(cfg: dict) -> FitConfig:
    opts = dict(cfg.get("fit", {}))
    dyad = _family(cfg, "dyad_kernel") if "dyad_kernel" in cfg else None
    try:
        return FitConfig(prior=_prior(cfg), family=_family(cfg), dyad_family=dyad,
                         seed=int(cfg.get("seed", 0)), **opts)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"fit: {exc}") from None


def _sim_config(cfg: dict) -> SimConfig:
    if "simulation" not in cfg:
        raise ConfigError("simulate needs a 'simulation' block")
    s = cfg["simulation"]
    fam = _family(cfg)
    try:
        d = {"background": s["background"], "weights": s["weights"], "kernel": fam.to_dict()}
        if "impulse" in s:
            d["impulse"] = s["impulse"]
        if s.get("feature_weights") is not None:
            d["feature_weights"] = s["feature_weights"]
        if s.get("dyad_weights") is not None:
            d["dyad_weights"] = s["dyad_weights"]
            d["dyad_kernel"] = _family(cfg, "dyad_kernel").to_dict() if "dyad_kernel" in cfg \
                else fam.to_dict()
        params = HawkesParams.from_dict(d)
        labels = s.get("labels")
        return SimConfig(params, float(s["horizon"]), int(cfg.get("seed", 0)),
                         s.get("feature_emission"), s.get("dyad_emission"),
                         int(s.get("max_events", 10_000_000)),
                         None if labels is None else tuple(labels))
    except KeyError as exc:
        raise ConfigError(f"simulation block missing {exc.args[0]!r}") from None
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"simulation: {exc}") from None


def _query(cfg: dict) -> ResponsivenessQuery:
    q = dict(cfg.get("query", {}))
    if "receiver" not in q:
        raise ConfigError("score needs query.receiver")
    crit = q.pop("criteria", None)
    criteria = None
    if crit is not None:
        criteria = FilterCriteria(
            None if crit.get("voice_set") is None else frozenset(crit["voice_set"]),
            None if crit.get("topic_tags") is None else frozenset(crit["topic_tags"]),
            None if crit.get("time_range") is None else tuple(crit["time_range"]),
            float(crit.get("min_feature_weight", 0.0)))
    if q.get("interval") is not None:
        q["interval"] = tuple(q["interval"])
    try:
        return ResponsivenessQuery(criteria=criteria, **q)
    except (ModelError, TypeError) as exc:
        raise ConfigError(f"query: {exc}") from None


def _sha(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def _read_input(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"input file {path} does not exist")
    return p.read_text(encoding="utf-8")


def _finish(out: Path, command: str, cfg: dict, inputs: dict[str, str], outputs: dict[str, str]):
    for name, text in outputs.items():
        atomic_write_text(out / name, text)
    manifest = {
        "command": command,
        "config_sha256": _sha(json.dumps(cfg, sort_keys=True)),
        "config": cfg,
        "seed": cfg.get("seed", 0),
        "inputs": {k: _sha(v) for k, v in sorted(inputs.items())},
        "outputs": {k: _sha(v) for k, v in sorted(outputs.items())},
        "versions": {"hawkinfluence": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }
    atomic_write_text(out / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def cmd_simulate(args, cfg):
    sim = simulate_with_parents(_sim_config(cfg))
    _finish(args.out, "simulate", cfg, {},
            {"events.jsonl": dump_events(sim.log), "parentage.jsonl": dump_parentage(sim.parents)})
    logger.info("simulated %d events", len(sim.log))


def cmd_fit(args, cfg):
    text = _read_input(args.events)
    log = parse_events(text.splitlines())
    model = fit(log, _fit_config(cfg))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "objective"])
    for i, v in enumerate(model.objective_trace):
        w.writerow([i, repr(v)])
    _finish(args.out, "fit", cfg, {"events": text},
            {"model.json": json.dumps(model.to_dict(), indent=1) + "\n", "trace.csv": buf.getvalue()})
    logger.info("fit converged=%s after %d iterations", model.converged, model.iterations)


def _model_and_log(args):
    mtext, etext = _read_input(args.model), _read_input(args.events)
    try:
        model = FittedModel.from_dict(json.loads(mtext))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"cannot read model {args.model}: {exc}") from None
    log = parse_events(etext.splitlines())
    return model, log, {"model": mtext, "events": etext}


def cmd_score(args, cfg):
    model, log, inputs = _model_and_log(args)
    try:
        report = score(model.params, log, _query(cfg))
    except (InvalidCriteriaError, ModelError) as exc:
        raise ConfigError(str(exc)) from None
    _finish(args.out, "score", cfg, inputs,
            {"series.csv": report.series_csv(),
             "report.json": json.dumps(report.to_dict(), indent=1) + "\n"})


def cmd_network(args, cfg):
    model, log, inputs = _model_and_log(args)
    net = cfg.get("network", {})
    interval = net.get("interval")
    try:
        edges = influence_network(model.params, log, None if interval is None else tuple(interval),
                                  float(net.get("threshold", 0.0)))
    except ModelError as exc:
        raise ConfigError(str(exc)) from None
    _finish(args.out, "network", cfg, inputs, {"network.json": network_to_json(edges, log.labels)})


def cmd_evaluate(args, cfg):
    etext = _read_input(args.edges)
    try:
        edges = network_from_json(etext)
    except (KeyError, ValueError, TypeError) as exc:
        raise EventFormatError(f"cannot read edge list: {exc}") from None
    ev = cfg.get("evaluate", {})
    inputs = {"edges": etext}
    if args.truth is not None:
        ttext = _read_input(args.truth)
        try:
            truth = GroundTruth(frozenset(tuple(p) for p in json.loads(ttext)["pairs"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise EventFormatError(f"cannot read truth file: {exc}") from None
        inputs["truth"] = ttext
    else:
        if args.parentage is None or args.events is None:
            raise ConfigError("evaluate needs --truth, or --parentage with --events")
        ptext, ltext = _read_input(args.parentage), _read_input(args.events)
        log = parse_events(ltext.splitlines())
        truth = ground_truth_from_parentage(log, load_parentage(args.parentage),
                                            mention_only=bool(ev.get("mention_only", True)),
                                            min_links=int(ev.get("min_links", 1)))
        inputs.update(parentage=ptext, events=ltext)
    if "thresholds" in ev:
        thresholds = [float(x) for x in ev["thresholds"]]
    else:
        fractions = ev.get("fractions", [0.0, 0.02, 0.05, 0.1, 0.2, 0.4])
        thresholds = relative_thresholds(edges, fractions)
    curve = threshold_sweep(edges, truth, thresholds)
    default = relative_thresholds(edges, [float(ev.get("default_fraction", 0.1))])[0]
    summary = threshold_sweep(edges, truth, [default])[0]
    _finish(args.out, "evaluate", cfg, inputs, {
        "sweep.csv": sweep_to_csv(curve),
        "summary.json": json.dumps({"threshold": summary.threshold, "recall": summary.recall,
                                    "nsr": summary.noise_signal_ratio,
                                    "significant": summary.significant,
                                    "correct": summary.correct, "true": summary.true,
                                    "truth_pairs": sorted(truth.pairs)}, indent=1) + "\n"})


def cmd_validate(args, cfg):
    text = _read_input(args.events)
    try:
        log = parse_events(text.splitlines())
    except EventFormatError as exc:
        print(f"invalid: {exc}")
        return EXIT_DATA
    report = validate_log(log)
    for v in report:
        print(v)
    print(f"{len(log)} events, {len(report)} violations")
    return EXIT_DATA if report else EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "score": cmd_score,
            "network": cmd_network, "evaluate": cmd_evaluate, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hawkinfluence", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, out=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. fit.max_iterations=100")
        if out:
            p.add_argument("--out", required=True, type=Path, help="output directory")

    common(sub.add_parser("simulate", help="sample events and parentage from a config"))
    p = sub.add_parser("fit", help="fit a model to an event file")
    common(p)
    p.add_argument("--events", required=True)
    for name, helptext in (("score", "responsiveness series and shares for a query"),
                           ("network", "influence network edge list")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--model", required=True)
        p.add_argument("--events", required=True)
    p = sub.add_parser("evaluate", help="threshold sweep of edges against ground truth")
    common(p)
    p.add_argument("--edges", required=True)
    p.add_argument("--truth", help='JSON {"pairs": [[s, t], ...]}')
    p.add_argument("--parentage")
    p.add_argument("--events")
    p = sub.add_parser("validate", help="check an event file")
    common(p, out=False)
    p.add_argument("--events", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set)
        if cfg.get("verbosity"):
            logging.getLogger().setLevel(logging.WARNING - 10 * min(int(cfg["verbosity"]), 2))
        if hasattr(args, "out"):
            if not args.out.is_dir():
                args.out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](args, cfg)
        return EXIT_OK if code is None else code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EventFormatError, InvalidCriteriaError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FitError, SimulationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvariantError, ModelError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
