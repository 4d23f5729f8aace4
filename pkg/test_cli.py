#!/usr/bin/env python3
"""Tests for configuration resolution and the uplift-forest command line."""
import io
import json
import sys
import tempfile
from contextlib import redirect_stderr
from pathlib import Path

import pandas as pd
import pytest

from cli import build_parser, main as cli_main
from config import load_config, parse_modes, parse_scheme
from dataset import OutcomeKind
from errors import ConfigError
from multi_treatment import Scheme

SMALL_RUN = """
modes = "rev,conv"
threads = 1

[data.synthetic]
n = 2000
p = 4
arm_probs = [0.4, 0.3, 0.3]
purchase_sparsity = 0.5
seed = 2

[[data.synthetic.effects]]
value = 2.0

[[data.synthetic.effects]]
kind = "step"

[forest]
num_trees = 20
seed = 11

[nuisance]
num_trees = 20

[partition]
num_partitions = 2
seed = 11
"""


def _write_config(tmp_path: Path, text: str = SMALL_RUN, name: str = "run.toml") -> Path:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def _run_cli(argv):
    """Exit code and captured stderr of one CLI invocation."""
    stderr = io.StringIO()
    with redirect_stderr(stderr):
        code = cli_main(argv)
    return code, stderr.getvalue()


def test_config_precedence(tmp_path):
    print("🧪 Testing configuration...")
    path = _write_config(tmp_path)
    from_file = load_config(path, env={})
    assert from_file.seed == 11 and from_file.partition.seed == 11
    assert from_file.modes == [OutcomeKind.REVENUE, OutcomeKind.CONVERSION]
    assert from_file.data.synthetic.n == 2000
    assert from_file.threads == 1

    from_env = load_config(path, env={"UPLIFT_SEED": "5", "UPLIFT_THREADS": "3"})
    assert from_env.seed == 5 and from_env.partition.seed == 5 and from_env.nuisance.seed == 5
    assert from_env.threads == 3

    from_flags = load_config(path, flags={"seed": 7, "forest": {"num_trees": 40}}, env={"UPLIFT_SEED": "5"})
    assert from_flags.seed == 7 and from_flags.partition.seed == 7
    assert from_flags.forest.num_trees == 40
    assert from_flags.nuisance.num_trees == 20
    print("✓ Defaults < TOML < environment < flags")


def test_config_hash(tmp_path):
    path = _write_config(tmp_path)
    base = load_config(path, env={})
    assert base.config_hash() == load_config(path, flags={"threads": 8, "output_dir": "elsewhere"}, env={}).config_hash()
    assert base.config_hash() != load_config(path, flags={"seed": 12}, env={}).config_hash()
    assert len(base.config_hash()) == 64

    defaults = load_config(flags={"data": {"synthetic": {}}}, env={})
    assert defaults.resolved_nuisance().num_trees == 500
    assert defaults.resolved_nuisance().seed == defaults.seed
    print("✓ Config hash ignores threads and output location")


def test_config_errors(tmp_path):
    unknown = _write_config(tmp_path, "[data.synthetic]\n\n[forest]\nnum_tree = 3\n", "unknown.toml")
    with pytest.raises(ConfigError):
        load_config(unknown, env={})

    two_sources = _write_config(tmp_path, "[data]\nhillstrom = true\n\n[data.synthetic]\nn = 100\n", "two.toml")
    with pytest.raises(ConfigError):
        load_config(two_sources, env={})

    no_schema = _write_config(tmp_path, '[data]\npath = "campaign.csv"\n', "noschema.toml")
    with pytest.raises(ConfigError):
        load_config(no_schema, env={})

    with pytest.raises(ConfigError):
        load_config(env={})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml", env={})
    with pytest.raises(ConfigError):
        load_config(flags={"data": {"synthetic": {}}}, env={"UPLIFT_SEED": "abc"})
    with pytest.raises(ConfigError):
        load_config(flags={"data": {"synthetic": {}}, "modes": "rev,uplift"}, env={})
    print("✓ Unknown keys, conflicting sources and bad values rejected")


def test_parse_helpers():
    assert parse_modes("rev, conv") == [OutcomeKind.REVENUE, OutcomeKind.CONVERSION]
    assert parse_modes(["conversion"]) == [OutcomeKind.CONVERSION]
    assert parse_modes([OutcomeKind.REVENUE]) == [OutcomeKind.REVENUE]
    assert parse_scheme("Combined") == Scheme.COMBINED_TREATMENT
    assert parse_scheme("treatment_comparison") == Scheme.TREATMENT_COMPARISON
    with pytest.raises(ConfigError):
        parse_scheme("pooled")
    with pytest.raises(SystemExit):
        build_parser().parse_args(["prepare", "--hillstrom", "--synthetic"])
    print("✓ Mode and scheme aliases")


def test_prepare(tmp_path):
    print("\n🧪 Testing subcommands...")
    config = _write_config(tmp_path)
    out = tmp_path / "prepared"
    code, _ = _run_cli(["prepare", "--config", str(config), "--out", str(out), "--json"])
    assert code == 0
    frame = pd.read_csv(out / "dataset.csv")
    assert len(frame) == 2000
    assert list(frame.columns[:3]) == ["unit_id", "arm", "revenue"]
    schema = json.loads((out / "schema.json").read_text())
    assert schema["treatment_column"] == "arm" and schema["control_label"] == "control"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["files"] == ["dataset.csv", "schema.json"]
    assert manifest["seed"] == 11 and len(manifest["config_hash"]) == 64
    print("✓ prepare caches the dataset and its schema")


def test_train_and_score(tmp_path):
    config = _write_config(tmp_path)
    prepared = tmp_path / "prepared"
    assert _run_cli(["prepare", "--config", str(config), "--out", str(prepared)])[0] == 0

    model_dir = tmp_path / "model"
    code, _ = _run_cli(["train", "--config", str(config), "--out", str(model_dir), "--modes", "rev"])
    assert code == 0
    assert (model_dir / "model.json").is_file() and (model_dir / "manifest.json").is_file()

    scores = tmp_path / "scores.csv"
    code, _ = _run_cli([
        "score", "--model", str(model_dir / "model.json"), "--data", str(prepared / "dataset.csv"),
        "--schema", str(prepared / "schema.json"), "--out", str(scores),
    ])
    assert code == 0
    frame = pd.read_csv(scores)
    assert list(frame.columns) == ["unit_id", "tau_arm1", "tau_arm2", "recommended"]
    assert len(frame) == 2000
    assert set(frame["recommended"].unique()) <= {0, 1, 2}

    # a covariate the model was trained on is missing
    dataset = pd.read_csv(prepared / "dataset.csv").drop(columns=["x2"])
    dataset.to_csv(tmp_path / "partial.csv", index=False)
    code, stderr = _run_cli([
        "score", "--model", str(model_dir / "model.json"), "--data", str(tmp_path / "partial.csv"),
        "--schema", str(prepared / "schema.json"), "--out", str(tmp_path / "partial_scores.csv"),
    ])
    assert code == 3
    assert json.loads(stderr.strip().splitlines()[-1])["error"] == "CompatibilityError"

    code, _ = _run_cli([
        "score", "--model", str(model_dir / "model.json"), "--data", str(prepared / "dataset.csv"),
    ])
    assert code == 2
    print("✓ train + score write models and per-unit recommendations")


def test_run(tmp_path):
    config = _write_config(tmp_path)
    first, second = tmp_path / "first", tmp_path / "second"
    assert _run_cli(["run", "--config", str(config), "--out", str(first)])[0] == 0
    assert _run_cli(["run", "--config", str(config), "--out", str(second), "--threads", "2"])[0] == 0

    for name in ["report.json", "manifest.json", "table2.csv", "table1_arm1_0.csv", "table1_arm2_1_conv.csv",
                 "ite_hist_arm1.csv", "importance_arm2_conv.csv"]:
        assert (first / name).is_file(), name
    comparison = pd.read_csv(first / "table2.csv", dtype=str)
    assert "% Diff." in comparison.columns
    assert comparison["Treatment"].tolist() == ["arm1", "arm2"]

    assert (first / "report.json").read_bytes() == (second / "report.json").read_bytes()
    manifests = [json.loads((d / "manifest.json").read_text()) for d in (first, second)]
    assert manifests[0]["config_hash"] == manifests[1]["config_hash"]
    assert manifests[0]["seed"] == 11
    print("✓ run writes the full report, identically on rerun")


def test_input_errors(tmp_path):
    schema = tmp_path / "schema.json"
    schema.write_text(json.dumps({
        "treatment_column": "arm", "control_label": "control", "outcome_column": "revenue", "covariates": ["x1"],
    }))
    code, stderr = _run_cli(["prepare", "--data", str(tmp_path / "missing.csv"), "--schema", str(schema)])
    assert code == 2
    assert json.loads(stderr.strip().splitlines()[-1])["exit_code"] == 2

    code, _ = _run_cli(["run", "--config", str(tmp_path / "absent.toml")])
    assert code == 2
    print("✓ Bad paths exit with code 2")


def main():
    """Run all tests."""
    print("=" * 60)
    print("🎯 cli Test Suite")
    print("=" * 60)
    try:
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            for number, test in enumerate([
                test_config_precedence, test_config_hash, test_config_errors, test_prepare,
                test_train_and_score, test_run, test_input_errors,
            ]):
                workdir = tmp / str(number)
                workdir.mkdir()
                test(workdir)
            test_parse_helpers()

        print("\n" + "=" * 60)
        print("✅ All tests passed!")
        print("=" * 60)
        return 0
    except Exception as e:
        print(f"\n❌ Test failed: {e}")
        import traceback
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
