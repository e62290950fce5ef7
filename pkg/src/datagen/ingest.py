"""
CSV feature files: D comma-separated features then an integer label per line,
with an optional single header line starting with '#'.
"""

import io
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from ..errors import ParseError
from .synthetic import LabeledSet

logger = logging.getLogger(__name__)


def ingest_csv(
    path: Union[str, Path],
    input_dim: Optional[int] = None,
    label_range: Optional[range] = None,
    first_id: int = 0,
) -> LabeledSet:
    """
    Load a feature CSV.

    Row numbers in errors are file line numbers (the header counts as line 1).
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except UnicodeDecodeError as e:
        raise ParseError(f"{path}: not a text file") from e

    offset = 1 if lines and lines[0].startswith("#") else 0
    body = [(number, line) for number, line in enumerate(lines[offset:], start=offset + 1) if line.strip()]
    if not body:
        raise ParseError(f"{path}: no samples")

    width = (input_dim + 1) if input_dim is not None else len(body[0][1].split(","))
    if width < 2:
        raise ParseError(f"{path}: need at least one feature column and a label", row=body[0][0])
    for number, line in body:
        count = len(line.split(","))
        if count != width:
            raise ParseError(f"{path}: expected {width} fields, found {count}", row=number)

    frame = pd.read_csv(io.StringIO("\n".join(line for _, line in body)), header=None, dtype=str)
    fields = frame.apply(lambda col: col.str.strip())
    bad = fields.apply(lambda col: pd.to_numeric(col, errors="coerce")).isna().any(axis=1).to_numpy()
    if bad.any():
        raise ParseError(f"{path}: non-numeric field", row=body[int(np.argmax(bad))][0])

    # to_numeric is not correctly rounded for 17-digit input; astype is
    data = fields.to_numpy(dtype=object).astype(np.float64)
    x, raw_labels = data[:, :-1], data[:, -1]
    if not np.all(np.isfinite(x)):
        row = int(np.argmax(~np.all(np.isfinite(x), axis=1)))
        raise ParseError(f"{path}: non-finite feature", row=body[row][0])
    integral = np.equal(np.mod(raw_labels, 1), 0)
    if not integral.all():
        raise ParseError(f"{path}: label is not an integer", row=body[int(np.argmax(~integral))][0])
    y = raw_labels.astype(np.int64)
    if label_range is not None:
        outside = ~np.isin(y, np.array(label_range))
        if outside.any():
            row = int(np.argmax(outside))
            raise ParseError(f"{path}: label {y[row]} outside [{label_range.start}, {label_range.stop})", row=body[row][0])

    logger.info("ingested %d samples of dimension %d from %s", len(y), x.shape[1], path)
    return LabeledSet(x=x, y=y, ids=np.arange(first_id, first_id + len(y), dtype=np.int64))


def export_csv(samples: LabeledSet, path: Union[str, Path]) -> Path:
    """Write samples in the ingest format; floats keep 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dim = samples.x.shape[1]
    frame = pd.DataFrame(samples.x, columns=[f"f{i}" for i in range(dim)])
    frame["label"] = samples.y.astype(np.int64)
    with path.open("w", encoding="utf-8", newline="") as handle:
        handle.write("# " + ",".join(frame.columns) + "\n")
        frame.to_csv(handle, header=False, index=False, float_format="%.17g", lineterminator="\n")
    return path
