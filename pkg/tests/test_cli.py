import json
from pathlib import Path

import pytest

from conftest import output_hashes, run_pipeline
from hawkinfluence.cli import apply_overrides, check_config, main, ConfigError

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "chain3.json"


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    return root, run_pipeline(root, CONFIG)


def test_pipeline_exit_codes_and_artifacts(pipeline):
    root, codes = pipeline
    assert codes == [0, 0, 0, 0, 0]
    for rel in ("sim/events.jsonl", "sim/parentage.jsonl", "fit/model.json", "fit/trace.csv",
                "score/series.csv", "score/report.json", "net/network.json", "eval/sweep.csv",
                "eval/summary.json"):
        assert (root / rel).is_file(), rel
    for step in ("sim", "fit", "score", "net", "eval"):
        manifest = json.loads((root / step / "manifest.json").read_text())
        assert manifest["seed"] == 7 and len(manifest["config_sha256"]) == 64


def test_pipeline_recall_on_strong_edges(pipeline):
    root, _ = pipeline
    summary = json.loads((root / "eval" / "summary.json").read_text())
    assert summary["truth_pairs"] == [[0, 1], [1, 2]]
    assert summary["recall"] >= 0.8


def test_manifest_hashes_match_files(pipeline):
    import hashlib
    root, _ = pipeline
    manifest = json.loads((root / "fit" / "manifest.json").read_text())
    for name, digest in manifest["outputs"].items():
        assert hashlib.sha256((root / "fit" / name).read_bytes()).hexdigest() == digest
    sim = json.loads((root / "sim" / "manifest.json").read_text())
    assert manifest["inputs"]["events"] == sim["outputs"]["events.jsonl"]


def test_rerun_is_byte_identical(pipeline, tmp_path):
    root, _ = pipeline
    assert run_pipeline(tmp_path, CONFIG) == [0] * 5
    assert output_hashes(tmp_path) == output_hashes(root)


def test_validate_corrupt_file(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"k": 2, "t": 10}\n{"time": 1.0, "proc": 0}\n{"time": 2.0, "proc": 9}\n')
    assert main(["validate", "--events", str(bad)]) == 2
    assert "line 3" in capsys.readouterr().out


def test_validate_good_file(pipeline, capsys):
    root, _ = pipeline
    assert main(["validate", "--events", str(root / "sim" / "events.jsonl")]) == 0
    assert "0 violations" in capsys.readouterr().out


def test_unknown_config_key(tmp_path):
    cfg = json.loads(CONFIG.read_text())
    cfg["fit"]["momentum"] = 0.9
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o" / "events.jsonl").exists()


def test_usage_errors(tmp_path):
    assert main(["fit", "--config", str(CONFIG), "--events", str(tmp_path / "missing.jsonl"),
                 "--out", str(tmp_path)]) == 1
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code == 1


def test_overrides():
    cfg = apply_overrides({"fit": {"max_iterations": 5}}, ["fit.max_iterations=20", "seed=3",
                                                          "fit.method=sgd"])
    assert cfg == {"fit": {"max_iterations": 20, "method": "sgd"}, "seed": 3}
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])
    with pytest.raises(ConfigError):
        check_config({"query": {"receiver": 0, "color": "red"}})


def test_override_changes_outputs(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    base = ["simulate", "--config", str(CONFIG), "--set", "simulation.horizon=500"]
    assert main([*base, "--out", str(out_a)]) == 0
    assert main([*base, "--set", "seed=8", "--out", str(out_b)]) == 0
    assert (out_a / "events.jsonl").read_bytes() != (out_b / "events.jsonl").read_bytes()


def test_numerical_failure_exit_code(tmp_path):
    # an explosive config trips the event cap
    with pytest.warns(RuntimeWarning, match="spectral radius"):
        code = main(["simulate", "--config", str(CONFIG), "--set",
                     "simulation.weights=[[1.5,0,0],[0,0,0],[0,0,0]]",
                     "--set", "simulation.max_events=500", "--out", str(tmp_path)])
    assert code == 3


def test_evaluate_with_truth_file(pipeline, tmp_path):
    root, _ = pipeline
    truth = tmp_path / "truth.json"
    truth.write_text(json.dumps({"pairs": [[0, 1], [1, 2]]}))
    assert main(["evaluate", "--edges", str(root / "net" / "network.json"), "--truth", str(truth),
                 "--out", str(tmp_path / "e")]) == 0
    lines = (tmp_path / "e" / "sweep.csv").read_text().splitlines()
    assert lines[0] == "threshold,recall,nsr,significant,correct" and len(lines) == 7
