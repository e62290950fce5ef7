"""
Utility functions shared by the trainer, the reports and the CLI
"""

import hashlib
import json
import logging
import os
import re
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np
import pandas as pd

from .errors import ConfigurationError, LookupFailure, ParseError

logger = logging.getLogger(__name__)

THREADS_ENV = "FROST_THREADS"
LOG_LEVEL_ENV = "FROST_LOG_LEVEL"


@dataclass
class RunArtifact:
    """A file found in a run directory together with its recognised kind."""
    name: str
    path: Path
    kind: str


# Artifact kind to filename patterns
ARTIFACT_PATTERNS = {
    'checkpoint': [r'^checkpoint\.json$', r'^checkpoint_step\d+\.json$'],
    'prototypes': [r'^prototypes\.json$', r'^prototypes_step\d+\.json$'],
    'manifest': [r'^manifest\.json$'],
    'report': [r'^report_(class-incd|original-rt)\.json$', r'^report\.html$'],
    'table': [r'^(losses|confusion|norms|grid|steps)\.csv$', r'^.*\.xlsx$'],
}


def classify_artifact(filename: str) -> Optional[str]:
    """
    Classify a run-directory file by its name.

    Args:
        filename: The file name (no directory part)

    Returns:
        The artifact kind ('checkpoint', 'prototypes', ...) or None if unrecognized
    """
    for kind, patterns in ARTIFACT_PATTERNS.items():
        for pattern in patterns:
            if re.search(pattern, filename):
                return kind
    return None


def route_artifacts(directory: Union[str, Path]) -> Dict[str, List[RunArtifact]]:
    """
    Group the files of a run directory by artifact kind.

    Args:
        directory: A run output directory

    Returns:
        Dict mapping every artifact kind to the (sorted) files of that kind
    """
    routed: Dict[str, List[RunArtifact]] = {kind: [] for kind in ARTIFACT_PATTERNS}
    root = Path(directory)
    if not root.is_dir():
        raise LookupFailure(f"run directory not found: {root}")

    for path in sorted(root.iterdir()):
        kind = classify_artifact(path.name)
        if kind is None:
            logger.debug("ignoring unrecognised file %s", path)
            continue
        routed[kind].append(RunArtifact(name=path.name, path=path, kind=kind))
    return routed


def require_artifact(directory: Union[str, Path], name: str) -> Path:
    """Path of a named artifact in a run directory, or LookupFailure naming it."""
    routed = route_artifacts(directory)
    for artifacts in routed.values():
        for artifact in artifacts:
            if artifact.name == name:
                return artifact.path
    raise LookupFailure(f"{name} missing from run directory {directory}")


def derive_rng(seed: int, *names: str) -> np.random.Generator:
    """
    Named random sub-stream of a run seed.

    The stream depends only on the seed and the names, never on Python's
    hash randomisation, so it is stable across processes and threads.
    """
    entropy = [int(seed)] + [zlib.crc32(name.encode("utf-8")) for name in names]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def array_digest(arrays: Iterable[np.ndarray]) -> str:
    """sha256 over the shapes and raw float64 bytes of the given arrays."""
    digest = hashlib.sha256()
    for array in arrays:
        array = np.ascontiguousarray(array, dtype=np.float64)
        digest.update(repr(array.shape).encode("ascii"))
        digest.update(array.tobytes())
    return digest.hexdigest()


def write_json(path: Union[str, Path], payload: Dict[str, Any]) -> Path:
    """Write a document with sorted keys so reruns are byte-identical."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("wrote %s", path)
    return path


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e.msg}", row=e.lineno) from e
    if not isinstance(payload, dict):
        raise ParseError(f"{path}: expected a JSON object at the top level")
    return payload


def thread_count() -> int:
    """Grid parallelism from FROST_THREADS (default 1)."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(THREADS_ENV, f"expected a positive integer, got {raw!r}")
    if value < 1:
        raise ConfigurationError(THREADS_ENV, f"expected a positive integer, got {value}")
    return value


def log_level(cli_value: Optional[str] = None) -> str:
    value = (cli_value or os.environ.get(LOG_LEVEL_ENV) or "WARNING").upper()
    if value not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        raise ConfigurationError("log-level", f"unknown level {value!r}")
    return value


def format_percent(value: float, decimal_places: int = 1) -> str:
    """Format a fraction in [0, 1] as a percentage."""
    if value is None or pd.isna(value):
        return "-"
    return f"{value * 100:.{decimal_places}f}%"
