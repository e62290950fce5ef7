"""
Tabular run artifacts

- losses.csv: per-epoch loss history of one or more stages
- confusion.csv / norms.csv: per-report diagnostics
- grid.csv / steps.csv: consolidated accuracy tables
- optional workbook with one sheet per table
"""

import logging
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Union

import numpy as np
import pandas as pd

from ..evaluation import CLASS_INCD, ORIGINAL_RT, EvalReport, step_columns
from ..utils import write_json

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ["epoch", "bce", "self", "mse", "replay", "kd", "total", "omega_self", "omega_mse"]
GRID_COLUMNS = ["arm", "Old", "New", "All", "Old_RT", "New_RT", "All_RT"]
FLOAT_FORMAT = "%.6g"


def write_table(df: pd.DataFrame, path: Union[str, Path], float_format: str = FLOAT_FORMAT) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=float_format, na_rep="NaN", lineterminator="\n")
    logger.info("wrote %s (%d rows)", path, len(df))
    return path


def loss_history_frame(records: Sequence) -> pd.DataFrame:
    """
    One row per epoch. `ce` is added when a pretraining stage is included,
    `lwf` when an LwF arm contributed a non-zero term, and `step` when the
    records span more than one discovery step.
    """
    frames = []
    for record in records:
        df = pd.DataFrame(record.history)
        if df.empty:
            continue
        df.insert(0, "stage", record.stage)
        df.insert(1, "step", record.step + 1 if record.stage != "pretrain" else 0)
        frames.append(df)
    if not frames:
        return pd.DataFrame(columns=LOSS_COLUMNS)
    history = pd.concat(frames, ignore_index=True)

    columns = list(LOSS_COLUMNS)
    if (history["stage"] == "pretrain").any():
        columns.insert(1, "ce")
    if "lwf" in history and history["lwf"].abs().sum() > 0:
        columns.insert(columns.index("total"), "lwf")
    if history["stage"].nunique() > 1 or history["step"].nunique() > 1:
        columns = ["stage", "step"] + columns
    return history[columns]


def write_loss_history(records: Sequence, path: Union[str, Path]) -> Path:
    return write_table(loss_history_frame(records), path)


def confusion_frame(report: EvalReport) -> pd.DataFrame:
    size = report.confusion.shape[0]
    df = pd.DataFrame(report.confusion.astype(int), columns=[str(j) for j in range(size)])
    df.insert(0, "true", range(size))
    return df


def write_confusion(report: EvalReport, path: Union[str, Path]) -> Path:
    return write_table(confusion_frame(report), path)


def norms_frame(norms: Sequence[float], num_old: int) -> pd.DataFrame:
    return pd.DataFrame({
        "class": range(len(norms)),
        "norm": [float(v) for v in norms],
        "block": ["old" if c < num_old else "new" for c in range(len(norms))],
    })


def write_norms(norms: Sequence[float], path: Union[str, Path], num_old: int) -> Path:
    return write_table(norms_frame(norms, num_old), path, float_format="%.6f")


def _accuracies(reports: Mapping[str, EvalReport], protocol: str) -> List[float]:
    report = reports.get(protocol)
    if report is None:
        return [np.nan, np.nan, np.nan]
    return [round(report.old_acc, 4), round(report.new_acc, 4), round(report.all_acc, 4)]


def grid_table(records: Sequence) -> pd.DataFrame:
    """
    Old/New/All per arm under class-incd, then the same under original-rt.
    Arms without a novel head have no original-rt report and show NaN there.
    """
    rows = []
    for record in records:
        rows.append([record.arm] + _accuracies(record.reports, CLASS_INCD) + _accuracies(record.reports, ORIGINAL_RT))
    return pd.DataFrame(rows, columns=GRID_COLUMNS)


def steps_table(rows: Sequence[Dict[str, float]]) -> pd.DataFrame:
    if not rows:
        return pd.DataFrame(columns=["Step"])
    num_steps = sum(1 for key in rows[0] if key.endswith("-J"))
    columns = ["Step"] + step_columns(num_steps)
    df = pd.DataFrame(list(rows))[columns]
    df[columns[1:]] = df[columns[1:]].astype(float).round(4)
    return df


def export_workbook(tables: Dict[str, pd.DataFrame], path: Union[str, Path]) -> Path:
    """One sheet per table, in insertion order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with pd.ExcelWriter(path, engine="openpyxl") as writer:
        for name, df in tables.items():
            df.to_excel(writer, sheet_name=name[:31], index=False)
    logger.info("wrote workbook %s (%s)", path, ", ".join(tables))
    return path


def write_json_report(report: EvalReport, path: Union[str, Path], **extra) -> Path:
    """An EvalReport document, optionally tagged with run context such as arm and step."""
    payload = report.to_dict()
    payload.update(extra)
    return write_json(path, payload)
