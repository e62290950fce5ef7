import sys
import os
sys.path.append(os.getcwd())

import numpy as np
import pandas as pd
import pytest

from src.analysis import analyze_eval_report, block_norm_means, leakage_fractions, norm_balance_ratio
from src.evaluation import CLASS_INCD, ORIGINAL_RT, EvalReport
from src.reporting import (
    LOSS_COLUMNS,
    confusion_frame,
    export_workbook,
    grid_table,
    loss_history_frame,
    steps_table,
    write_html_report,
    write_loss_history,
    write_norms,
)
from src.trainer import RunRecord


def make_report(protocol=CLASS_INCD, old=0.8, new=0.6, norms=(1.0, 1.0, 1.0, 1.0), confusion=None):
    if confusion is None:
        confusion = np.array([[4, 1, 0, 0], [0, 4, 1, 0], [0, 0, 3, 2], [1, 0, 1, 3]])
    return EvalReport(
        protocol=protocol,
        old_acc=old,
        new_acc=new,
        all_acc=(old + new) / 2,
        num_old=2,
        num_new=2,
        n_old=10,
        n_new=10,
        confusion=np.asarray(confusion),
        head_norms=list(norms),
        mapping={0: 1, 1: 0},
    )


def history_row(epoch, **values):
    row = {"epoch": epoch, "ce": 0.0, "bce": 0.5, "self": 0.1, "mse": 0.2, "replay": 0.3, "kd": 0.4,
           "lwf": 0.0, "total": 1.5, "omega_self": 0.01, "omega_mse": 0.5, "lr": 0.1}
    row.update(values)
    return row


def make_record(stage="discover", arm="full", step=0, epochs=2, **values):
    record = RunRecord(stage=stage, arm=arm, step=step)
    record.history = [history_row(e, **values) for e in range(epochs)]
    record.reports = {CLASS_INCD: make_report(), ORIGINAL_RT: make_report(ORIGINAL_RT, 0.9, 0.7)}
    return record


# --- diagnostics ----------------------------------------------------------------

def test_norm_helpers():
    assert norm_balance_ratio([2.0, 4.0, 1.0]) == 4.0
    assert norm_balance_ratio([0.0, 1.0]) == float("inf")
    assert np.isnan(norm_balance_ratio([]))
    assert block_norm_means([1.0, 3.0, 5.0, 7.0], 2) == {"old": 2.0, "new": 6.0}


def test_leakage_fractions():
    leakage = leakage_fractions(make_report().confusion, 2)
    assert leakage["old_to_new"] == pytest.approx(0.1)
    assert leakage["new_to_old"] == pytest.approx(0.1)


def test_recency_bias_is_flagged():
    biased = analyze_eval_report(make_report(norms=(1.0, 1.0, 2.0, 2.0)))
    assert biased["recency_bias"] is True
    assert biased["norm_ratio"] == pytest.approx(2.0)
    assert any("replay" in line for line in biased["recommendations"])
    balanced = analyze_eval_report(make_report())
    assert balanced["recency_bias"] is False
    assert set(balanced) >= {"summary", "insights", "recommendations", "key_metrics"}


def test_protocol_gap_is_reported():
    swap = make_report(old=0.0, new=0.0, confusion=[[0, 0, 5, 0], [0, 0, 0, 5], [5, 0, 0, 0], [0, 5, 0, 0]])
    pooled = make_report(ORIGINAL_RT, 1.0, 1.0)
    result = analyze_eval_report(swap, other_report=pooled)
    assert result["protocol_gap"] == pytest.approx(1.0)
    assert result["leakage"] == {"old_to_new": 1.0, "new_to_old": 1.0}
    assert result["key_metrics"]["Protocol gap (All)"] == "100.0%"
    assert len(result["recommendations"]) == 2


# --- tables -------------------------------------------------------------------

def test_discovery_loss_history_columns():
    frame = loss_history_frame([make_record()])
    assert list(frame.columns) == LOSS_COLUMNS
    assert len(frame) == 2


def test_loss_history_across_stages(tmp_path):
    pre = make_record(stage="pretrain", arm="pretrain", ce=1.2, bce=0.0)
    lwf = make_record(arm="lwf_softmax", lwf=0.25)
    frame = loss_history_frame([pre, lwf])
    assert list(frame.columns[:4]) == ["stage", "step", "epoch", "ce"]
    assert "lwf" in frame.columns
    assert frame["step"].tolist() == [0, 0, 1, 1]
    path = write_loss_history([pre, lwf], tmp_path / "losses.csv")
    assert pd.read_csv(path).shape == (4, len(frame.columns))


def test_confusion_frame_layout():
    frame = confusion_frame(make_report())
    assert list(frame.columns) == ["true", "0", "1", "2", "3"]
    assert frame["true"].tolist() == [0, 1, 2, 3]


def test_norms_file(tmp_path):
    path = write_norms([3.0, 4.0, 5.0], tmp_path / "norms.csv", 2)
    frame = pd.read_csv(path)
    assert frame["block"].tolist() == ["old", "old", "new"]
    assert path.read_text().splitlines()[1] == "0,3.000000,old"


def test_grid_table_marks_missing_protocols():
    joint = make_record(arm="joint_only")
    del joint.reports[ORIGINAL_RT]
    table = grid_table([make_record(), joint])
    assert table["arm"].tolist() == ["full", "joint_only"]
    assert table.loc[0, "Old_RT"] == 0.9
    assert np.isnan(table.loc[1, "All_RT"])


def test_steps_table_keeps_column_order():
    rows = [
        {"Step": 1, "Old": 0.9, "New-1-J": 0.7, "New-2-J": float("nan"), "New-1-N": 0.8,
         "New-2-N": float("nan"), "All": 0.85},
        {"Step": 2, "Old": 0.8, "New-1-J": 0.6, "New-2-J": 0.5, "New-1-N": 0.8, "New-2-N": 0.55, "All": 0.123456},
    ]
    table = steps_table(rows)
    assert list(table.columns) == ["Step", "Old", "New-1-J", "New-2-J", "New-1-N", "New-2-N", "All"]
    assert table.loc[1, "All"] == pytest.approx(0.1235)


def test_workbook_has_one_sheet_per_table(tmp_path):
    path = export_workbook({"grid": grid_table([make_record()])}, tmp_path / "grid.xlsx")
    sheets = pd.read_excel(path, sheet_name=None, engine="openpyxl")
    assert list(sheets) == ["grid"]
    assert sheets["grid"]["arm"].tolist() == ["full"]


# --- html ---------------------------------------------------------------------

def test_generation(tmp_path):
    record = make_record()
    diagnostics = analyze_eval_report(record.reports[CLASS_INCD], other_report=record.reports[ORIGINAL_RT])
    path = write_html_report(
        tmp_path / "report.html", record.reports, [record], diagnostics,
        title="Discovery step 1 (full)", tables={"Ablation grid": grid_table([record])},
    )
    html = path.read_text(encoding="utf-8")
    assert "<title>Discovery step 1 (full)</title>" in html
    assert html.index("class-incd") < html.index("original-rt")
    assert "80.0%" in html
    assert 'class="diag"' in html
    assert "Loss history" in html and "Ablation grid" in html
    assert diagnostics["summary"] in html


def test_generation_is_reproducible(tmp_path):
    record = make_record()
    first = write_html_report(tmp_path / "a.html", record.reports, [record])
    second = write_html_report(tmp_path / "b.html", record.reports, [record])
    assert first.read_bytes() == second.read_bytes()
