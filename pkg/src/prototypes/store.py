"""
Per-class Gaussian feature statistics for generative replay.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from ..autodiff import Tensor
from ..errors import LookupFailure, ParameterError, ParseError, ShapeError, ValidationError
from ..utils import read_json, write_json

logger = logging.getLogger(__name__)

DOCUMENT_VERSION = 1


@dataclass(frozen=True, eq=False)
class ClassPrototype:
    class_id: int
    mean: np.ndarray
    variance: np.ndarray
    count: int

    def __post_init__(self):
        if self.mean.shape != self.variance.shape or self.mean.ndim != 1:
            raise ShapeError(f"class {self.class_id}: mean {self.mean.shape} and variance {self.variance.shape} disagree")
        if np.any(self.variance < 0):
            raise ValidationError(f"class {self.class_id}: variance must be non-negative")
        if self.count < 1:
            raise ValidationError(f"class {self.class_id}: count must be at least 1")

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)


class PrototypeStore:
    """Immutable map class_id -> ClassPrototype over one feature dimension."""

    def __init__(self, dim: int, prototypes: Dict[int, ClassPrototype]):
        for class_id, proto in prototypes.items():
            if class_id != proto.class_id:
                raise ValidationError(f"prototype keyed {class_id} describes class {proto.class_id}")
            if proto.mean.shape[0] != dim:
                raise ShapeError(f"class {class_id} has dimension {proto.mean.shape[0]}, store has {dim}")
        self.dim = dim
        self._prototypes = dict(sorted(prototypes.items()))

    def __len__(self) -> int:
        return len(self._prototypes)

    def __contains__(self, class_id: int) -> bool:
        return class_id in self._prototypes

    def __getitem__(self, class_id: int) -> ClassPrototype:
        try:
            return self._prototypes[class_id]
        except KeyError:
            raise LookupFailure(f"no prototype for class {class_id}") from None

    def __eq__(self, other) -> bool:
        if not isinstance(other, PrototypeStore) or other.dim != self.dim:
            return False
        if self.class_ids() != other.class_ids():
            return False
        return all(
            np.array_equal(a.mean, b.mean) and np.array_equal(a.variance, b.variance) and a.count == b.count
            for a, b in zip(self._prototypes.values(), other._prototypes.values())
        )

    def class_ids(self) -> List[int]:
        return list(self._prototypes)

    def merge(self, other: "PrototypeStore") -> "PrototypeStore":
        """Union of two stores over disjoint class sets."""
        if other.dim != self.dim:
            raise ShapeError(f"cannot merge stores of dimension {self.dim} and {other.dim}")
        overlap = set(self._prototypes) & set(other._prototypes)
        if overlap:
            raise ValidationError(f"classes {sorted(overlap)} already have prototypes")
        combined = dict(self._prototypes)
        combined.update(other._prototypes)
        return PrototypeStore(self.dim, combined)


def compute_prototypes(features, labels) -> PrototypeStore:
    """Population mean and variance of every class present in labels."""
    z = features.data if isinstance(features, Tensor) else np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if z.ndim != 2:
        raise ShapeError(f"features must be n x d, got shape {z.shape}")
    if labels.shape != (z.shape[0],):
        raise ShapeError(f"{labels.shape} labels for {z.shape[0]} feature rows")
    if z.shape[0] == 0:
        raise ValidationError("cannot compute prototypes from an empty class set")

    prototypes = {}
    for class_id in np.unique(labels):
        rows = z[labels == class_id]
        mean = rows.mean(axis=0)
        variance = ((rows - mean) ** 2).mean(axis=0)
        prototypes[int(class_id)] = ClassPrototype(int(class_id), mean, variance, int(rows.shape[0]))
    return PrototypeStore(z.shape[1], prototypes)


def sample_replay(store: PrototypeStore, class_id: int, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """n draws from N(mean, diag(variance)) of one class, with their labels."""
    if n < 1:
        raise ParameterError(f"replay sample count must be positive, got {n}")
    proto = store[class_id]
    eps = rng.standard_normal((n, store.dim))
    return proto.mean + eps * proto.std, np.full(n, class_id, dtype=np.int64)


def sample_replay_batch(store: PrototypeStore, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    n replayed features with classes drawn uniformly from the store.

    Rows come back in draw order; every class is sampled from its own Gaussian.
    """
    if len(store) == 0:
        raise ValidationError("prototype store is empty")
    if n < 1:
        raise ParameterError(f"replay sample count must be positive, got {n}")
    ids = np.array(store.class_ids())
    labels = rng.choice(ids, size=n, replace=True)
    eps = rng.standard_normal((n, store.dim))
    means = np.stack([store[int(c)].mean for c in labels])
    stds = np.stack([store[int(c)].std for c in labels])
    return means + eps * stds, labels.astype(np.int64)


def store_to_document(store: PrototypeStore) -> Dict[str, Any]:
    return {
        "version": DOCUMENT_VERSION,
        "d": store.dim,
        "prototypes": [
            {
                "class_id": proto.class_id,
                "count": proto.count,
                "mean": [float(v) for v in proto.mean],
                "variance": [float(v) for v in proto.variance],
            }
            for proto in (store[c] for c in store.class_ids())
        ],
    }


def store_from_document(doc: Dict[str, Any]) -> PrototypeStore:
    if doc.get("version") != DOCUMENT_VERSION:
        raise ParseError(f"unsupported prototype document version {doc.get('version')!r}")
    try:
        dim = int(doc["d"])
        entries = list(doc["prototypes"])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"prototype document is malformed: {e}") from e

    prototypes: Dict[int, ClassPrototype] = {}
    for position, entry in enumerate(entries):
        try:
            class_id = int(entry["class_id"])
            mean = np.array(entry["mean"], dtype=np.float64)
            variance = np.array(entry["variance"], dtype=np.float64)
            count = int(entry["count"])
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"prototype entry {position} is malformed: {e}") from e
        if mean.shape != (dim,) or variance.shape != (dim,):
            raise ParseError(f"class {class_id}: expected {dim} values, got {mean.size} and {variance.size}")
        if np.any(variance < 0):
            raise ParseError(f"class {class_id}: negative variance")
        if class_id in prototypes:
            raise ParseError(f"class {class_id} listed twice")
        try:
            prototypes[class_id] = ClassPrototype(class_id, mean, variance, count)
        except ValidationError as e:
            raise ParseError(str(e)) from e
    return PrototypeStore(dim, prototypes)


def save_prototypes(store: PrototypeStore, path: Union[str, Path]) -> Path:
    return write_json(path, store_to_document(store))


def load_prototypes(path: Union[str, Path]) -> PrototypeStore:
    store = store_from_document(read_json(path))
    logger.info("loaded %d prototypes from %s", len(store), path)
    return store
