import json

import pandas as pd
import pytest

from app import main
from src.datagen import TaskSpec, export_csv, generate
from src.evaluation import step_columns
from src.reporting import GRID_COLUMNS
from src.trainer import ARM_NAMES

SMALL = {
    "seed": 0,
    "task": {"profile": "p5-5", "train_per_class": 20, "test_per_class": 5},
    "train": {"pretrain_epochs": 1, "discover_epochs": 1, "batch_size": 64},
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL))
    return path


def write_config(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def test_pretrain_writes_its_artifacts(tmp_path, config):
    out = tmp_path / "stage1"
    assert main(["pretrain", "--config", str(config), "--out", str(out)]) == 0
    for name in ("checkpoint.json", "prototypes.json", "manifest.json", "losses.csv"):
        assert (out / name).is_file()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "pretrain"
    assert manifest["config"]["train"]["lam"] == 10.0
    assert manifest["artifacts"]["checkpoint"] == "checkpoint.json"
    losses = pd.read_csv(out / "losses.csv")
    assert list(losses.columns[:2]) == ["epoch", "ce"]


def test_missing_config_is_a_usage_error(tmp_path, capsys):
    missing = tmp_path / "absent.json"
    assert main(["pretrain", "--config", str(missing), "--out", str(tmp_path / "out")]) == 2
    assert str(missing) in capsys.readouterr().err


def test_invalid_config_names_the_field(tmp_path, capsys):
    bad = write_config(tmp_path, "bad.json", {"train": {"topk": 99}})
    assert main(["pretrain", "--config", str(bad), "--out", str(tmp_path / "out")]) == 2
    assert "train.topk" in capsys.readouterr().err


def test_seeds_give_different_checkpoints(tmp_path, config):
    for seed in ("1", "2"):
        assert main(["pretrain", "--config", str(config), "--out", str(tmp_path / seed), "--seed", seed]) == 0
    assert (tmp_path / "1" / "checkpoint.json").read_bytes() != (tmp_path / "2" / "checkpoint.json").read_bytes()


def test_unknown_ablation_lists_valid_names(tmp_path, capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["discover", "--from", str(tmp_path), "--out", str(tmp_path / "d"), "--ablation", "no_thing"])
    assert excinfo.value.code == 2
    assert "no_fd_fr" in capsys.readouterr().err


def test_invalid_protocol_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        main(["eval", "--model", str(tmp_path), "--protocol", "task-aware"])
    assert excinfo.value.code == 2


def test_discover_needs_a_checkpoint(tmp_path):
    assert main(["discover", "--from", str(tmp_path), "--out", str(tmp_path / "d")]) == 1


def test_discover_writes_reports(tmp_path, config):
    stage1, stage2 = tmp_path / "stage1", tmp_path / "stage2"
    assert main(["pretrain", "--config", str(config), "--out", str(stage1)]) == 0
    assert main(["discover", "--from", str(stage1), "--out", str(stage2)]) == 0
    for name in ("checkpoint.json", "report_class-incd.json", "report_original-rt.json",
                 "confusion.csv", "norms.csv", "report.html", "manifest.json"):
        assert (stage2 / name).is_file()
    manifest = json.loads((stage2 / "manifest.json").read_text())
    assert manifest["ablation"] == "full"
    assert len(manifest["mappings"]) == 1
    report = json.loads((stage2 / "report_class-incd.json").read_text())
    assert report["protocol"] == "class-incd"
    assert report["arm"] == "full"
    confusion = pd.read_csv(stage2 / "confusion.csv")
    assert list(confusion.columns) == ["true"] + [str(j) for j in range(10)]
    assert confusion.drop(columns="true").to_numpy().sum(axis=1).tolist() == [5] * 10


def test_discover_without_prototypes_names_the_switch(tmp_path, config, capsys):
    stage1 = tmp_path / "stage1"
    assert main(["pretrain", "--config", str(config), "--out", str(stage1)]) == 0
    (stage1 / "prototypes.json").unlink()
    assert main(["discover", "--from", str(stage1), "--out", str(tmp_path / "d")]) == 2
    assert "no_fr" in capsys.readouterr().err
    assert main(["discover", "--from", str(stage1), "--out", str(tmp_path / "d"), "--ablation", "no_fr"]) == 0


def test_reference_checkpoints_separate_the_protocols(tmp_path, capsys):
    results = {}
    for kind in ("oracle", "swap"):
        out = tmp_path / kind
        assert main(["make-reference", "--kind", kind, "--out", str(out)]) == 0
        for protocol in ("class-incd", "original-rt"):
            assert main(["eval", "--model", str(out), "--protocol", protocol]) == 0
            results[kind, protocol] = json.loads((out / f"report_{protocol}.json").read_text())
    capsys.readouterr()
    assert results["oracle", "class-incd"]["all_acc"] == 1.0
    assert results["oracle", "original-rt"]["all_acc"] == 1.0
    assert results["swap", "class-incd"]["all_acc"] == 0.0
    assert results["swap", "original-rt"]["all_acc"] == 1.0


def test_eval_report_is_byte_identical(tmp_path, capsys):
    model = tmp_path / "swap"
    assert main(["make-reference", "--kind", "swap", "--out", str(model)]) == 0
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["eval", "--model", str(model), "--out", str(first)]) == 0
    assert main(["eval", "--model", str(model), "--out", str(second)]) == 0
    capsys.readouterr()
    assert (first / "report_class-incd.json").read_bytes() == (second / "report_class-incd.json").read_bytes()


def test_eval_with_a_manifest_missing_its_config(tmp_path, capsys):
    model = tmp_path / "oracle"
    assert main(["make-reference", "--kind", "oracle", "--out", str(model)]) == 0
    manifest = json.loads((model / "manifest.json").read_text())
    del manifest["config"]
    (model / "manifest.json").write_text(json.dumps(manifest))
    capsys.readouterr()
    assert main(["eval", "--model", str(model)]) == 2
    assert "config" in capsys.readouterr().err


def test_eval_on_exported_csv(tmp_path, capsys):
    model = tmp_path / "oracle"
    assert main(["make-reference", "--kind", "oracle", "--out", str(model)]) == 0
    capsys.readouterr()
    splits = generate(TaskSpec.from_profile("p5-5", seed=0, noise=0.01))
    old = export_csv(splits.test_old, tmp_path / "old.csv")
    new = export_csv(splits.test_new[0], tmp_path / "new.csv")
    assert main(["eval", "--model", str(model), "--data", f"csv:old={old},new={new}"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["all_acc"] == 1.0


def test_grid_writes_one_row_per_arm(tmp_path, config, capsys):
    out = tmp_path / "grid"
    assert main(["grid", "--config", str(config), "--out", str(out)]) == 0
    capsys.readouterr()
    table = pd.read_csv(out / "grid.csv")
    assert list(table.columns) == GRID_COLUMNS
    assert list(table["arm"]) == list(ARM_NAMES)
    assert table.loc[table["arm"] == "joint_only", "All_RT"].isna().all()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["arms"] == list(ARM_NAMES)


def test_steps_reruns_are_identical(tmp_path, capsys):
    doc = dict(SMALL, task={"profile": "p5-3-3", "train_per_class": 20, "test_per_class": 5})
    config = write_config(tmp_path, "steps.json", doc)
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["steps", "--config", str(config), "--out", str(first)]) == 0
    assert main(["steps", "--config", str(first / "manifest.json"), "--out", str(second)]) == 0
    capsys.readouterr()
    table = pd.read_csv(first / "steps.csv")
    assert list(table.columns) == ["Step"] + step_columns(2)
    for name in ("steps.csv", "report_class-incd.json", "losses.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_discover_chains_into_the_second_step(tmp_path, capsys):
    doc = dict(SMALL, task={"profile": "p5-3-3", "train_per_class": 20, "test_per_class": 5})
    config = write_config(tmp_path, "steps.json", doc)
    stage1, step1, step2 = tmp_path / "s0", tmp_path / "s1", tmp_path / "s2"
    assert main(["pretrain", "--config", str(config), "--out", str(stage1)]) == 0
    assert main(["discover", "--from", str(stage1), "--out", str(step1)]) == 0
    assert main(["discover", "--from", str(step1), "--out", str(step2)]) == 0
    capsys.readouterr()
    manifest = json.loads((step2 / "manifest.json").read_text())
    assert manifest["step"] == 2
    assert len(manifest["mappings"]) == 2
    assert main(["discover", "--from", str(step2), "--out", str(tmp_path / "s3")]) == 1
