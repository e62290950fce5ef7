"""
Synthetic class-incremental discovery tasks

- TaskSpec: class counts, sample counts, geometry and seed of a task
- PROFILES: named task shapes (5 old / 5 new, 80-20, 180-10-10, ...)
- generate: Gaussian clusters split into labelled / unlabelled / test sets
- correlated_view: feature-space jitter used as the second view
"""

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..autodiff import Tensor
from ..errors import ConfigurationError, ParameterError, ValidationError
from ..utils import array_digest, derive_rng

logger = logging.getLogger(__name__)

DEFAULT_PROFILE = "p5-5"
PLACEMENTS = ("related", "orthogonal")

# profile name -> (input_dim, old classes, new classes per step)
PROFILES = {
    'p5-5': (16, 5, [5]),
    'p5-3-3': (16, 5, [3, 3]),
    'p80-20': (64, 80, [20]),
    'p80-10-10': (64, 80, [10, 10]),
    'p180-20': (128, 180, [20]),
    'p180-10-10': (128, 180, [10, 10]),
}


@dataclass
class TaskSpec:
    input_dim: int = 16
    num_old: int = 5
    new_per_step: List[int] = field(default_factory=lambda: [5])
    train_per_class: int = 200
    test_per_class: int = 50
    radius: float = 5.0
    noise: float = 1.0
    aug_scale: Optional[float] = None
    placement: str = "related"
    seed: int = 0
    profile: Optional[str] = None

    def __post_init__(self):
        self.new_per_step = [int(n) for n in self.new_per_step]
        if self.aug_scale is None:
            self.aug_scale = 0.5 * self.noise
        self.validate()

    def validate(self) -> None:
        if self.input_dim < 1:
            raise ConfigurationError("task.input_dim", f"must be at least 1, got {self.input_dim}")
        if self.num_old < 1:
            raise ConfigurationError("task.num_old", f"must be at least 1, got {self.num_old}")
        if not self.new_per_step or min(self.new_per_step) < 1:
            raise ConfigurationError("task.new_per_step", f"every step needs at least one class, got {self.new_per_step}")
        if self.train_per_class < 1 or self.test_per_class < 1:
            raise ConfigurationError("task.train_per_class", "sample counts must be at least 1")
        if not self.noise > 0:
            raise ConfigurationError("task.noise", f"must be positive, got {self.noise}")
        if not self.radius > 0:
            raise ConfigurationError("task.radius", f"must be positive, got {self.radius}")
        if self.aug_scale < 0:
            raise ConfigurationError("task.aug_scale", f"must be non-negative, got {self.aug_scale}")
        if self.placement not in PLACEMENTS:
            raise ConfigurationError("task.placement", f"expected one of {', '.join(PLACEMENTS)}, got {self.placement!r}")
        if self.num_classes > 2 * self.input_dim:
            raise ConfigurationError(
                "task.input_dim",
                f"{self.num_classes} classes need more than the {2 * self.input_dim} placements "
                f"available in {self.input_dim} dimensions",
            )

    @property
    def num_new(self) -> int:
        return sum(self.new_per_step)

    @property
    def num_classes(self) -> int:
        return self.num_old + self.num_new

    @property
    def num_steps(self) -> int:
        return len(self.new_per_step)

    def step_offset(self, step: int) -> int:
        """Global id of the first class of discovery step `step` (0-based)."""
        return self.num_old + sum(self.new_per_step[:step])

    def step_classes(self, step: int) -> List[int]:
        start = self.step_offset(step)
        return list(range(start, start + self.new_per_step[step]))

    @classmethod
    def from_profile(cls, name: str, **overrides) -> "TaskSpec":
        if name not in PROFILES:
            raise ConfigurationError("task.profile", f"unknown profile {name!r}; expected one of {', '.join(PROFILES)}")
        input_dim, num_old, steps = PROFILES[name]
        values = {"input_dim": input_dim, "num_old": num_old, "new_per_step": list(steps), "profile": name}
        values.update(overrides)
        return cls(**values)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], seed: Optional[int] = None) -> "TaskSpec":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"task.{unknown[0]}", "unknown field")
        if seed is not None and data.get("seed") is None:
            data["seed"] = seed
        profile = data.pop("profile", None)
        try:
            if profile:
                return cls.from_profile(profile, **data)
            return cls(**data)
        except (TypeError, ValueError) as e:
            raise ConfigurationError("task", str(e)) from e

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class LabeledSet:
    """Samples with visible labels and globally unique sample ids."""
    x: np.ndarray
    y: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        if self.x.ndim != 2 or self.y.shape != (self.x.shape[0],) or self.ids.shape != self.y.shape:
            raise ValidationError(f"inconsistent set shapes x{self.x.shape} y{self.y.shape} ids{self.ids.shape}")

    def __len__(self) -> int:
        return int(self.x.shape[0])

    def digest(self) -> str:
        return array_digest([self.x, self.y, self.ids])

    @staticmethod
    def concat(sets: List["LabeledSet"]) -> "LabeledSet":
        return LabeledSet(
            x=np.vstack([s.x for s in sets]),
            y=np.concatenate([s.y for s in sets]),
            ids=np.concatenate([s.ids for s in sets]),
        )


class UnlabeledSet:
    """Samples whose ground truth travels with them but is only revealed to evaluation."""

    def __init__(self, x: np.ndarray, ids: np.ndarray, truth: np.ndarray):
        if x.ndim != 2 or ids.shape != (x.shape[0],) or truth.shape != ids.shape:
            raise ValidationError("inconsistent unlabelled set shapes")
        self.x = x
        self.ids = ids
        self._truth = truth

    def __len__(self) -> int:
        return int(self.x.shape[0])

    def reveal(self) -> LabeledSet:
        return LabeledSet(self.x, self._truth, self.ids)

    def digest(self) -> str:
        return array_digest([self.x, self._truth, self.ids])


@dataclass
class SplitSet:
    spec: TaskSpec
    class_means: np.ndarray
    labeled: LabeledSet
    unlabeled: List[UnlabeledSet]
    test_old: LabeledSet
    test_new: List[LabeledSet]

    def known_test(self, steps_done: int) -> LabeledSet:
        """Test samples of the base classes and of the first steps_done discovery steps."""
        return LabeledSet.concat([self.test_old] + self.test_new[:steps_done])

    def digests(self) -> Dict[str, str]:
        out = {"labeled": self.labeled.digest(), "test_old": self.test_old.digest()}
        for step, (u, t) in enumerate(zip(self.unlabeled, self.test_new), start=1):
            out[f"unlabeled_{step}"] = u.digest()
            out[f"test_new_{step}"] = t.digest()
        return out

    def digest(self) -> str:
        return array_digest(
            [self.labeled.x, self.test_old.x]
            + [u.x for u in self.unlabeled]
            + [t.x for t in self.test_new]
            + [self.labeled.y, self.test_old.y]
            + [t.y for t in self.test_new]
        )


def parent_classes(spec: TaskSpec, c: int) -> Tuple[int, int]:
    """Primary and secondary old class a new class c is built from."""
    n = c - spec.num_old
    if n < 0:
        raise ValidationError(f"class {c} is an old class and has no parents")
    primary = n % spec.num_old
    secondary = (n + 1 + n // spec.num_old) % spec.num_old
    return primary, secondary


def class_means(spec: TaskSpec) -> np.ndarray:
    """
    Class means on the radius-R sphere.

    Every class owns a direction: columns of a seeded orthonormal basis for
    the first D classes, their negatives for the next D. Old classes sit on
    their own direction. Under the "related" placement a new class mixes its
    own direction with those of two old classes, 2:2:1 for own, primary and
    secondary parent, so features learnt on the old classes respond to it.
    Distinct new classes have distinct primary parents while there are at
    most C_L of them.
    """
    rng = derive_rng(spec.seed, "data", "means")
    q, r = np.linalg.qr(rng.standard_normal((spec.input_dim, spec.input_dim)))
    q = q * np.sign(np.diag(r))

    def own(c: int) -> np.ndarray:
        column = q[:, c % spec.input_dim]
        return column if c < spec.input_dim else -column

    means = np.empty((spec.num_classes, spec.input_dim))
    for c in range(spec.num_classes):
        direction = own(c)
        if spec.placement == "related" and c >= spec.num_old:
            primary, secondary = parent_classes(spec, c)
            # a parent on the same basis column would cancel the own direction
            columns = {primary % spec.input_dim, secondary % spec.input_dim}
            if c % spec.input_dim not in columns:
                direction = 2.0 * own(c) + 2.0 * own(primary) + own(secondary)
        means[c] = spec.radius * direction / np.linalg.norm(direction)
    return means


def _draw(spec: TaskSpec, means: np.ndarray, classes: List[int], per_class: int, split: str, next_id: int):
    xs, ys = [], []
    for c in classes:
        rng = derive_rng(spec.seed, "data", split, str(c))
        xs.append(means[c] + spec.noise * rng.standard_normal((per_class, spec.input_dim)))
        ys.append(np.full(per_class, c, dtype=np.int64))
    x = np.vstack(xs)
    y = np.concatenate(ys)
    ids = np.arange(next_id, next_id + y.shape[0], dtype=np.int64)
    return x, y, ids


def generate(spec: TaskSpec) -> SplitSet:
    spec.validate()
    means = class_means(spec)
    next_id = 0

    old = list(range(spec.num_old))
    x, y, ids = _draw(spec, means, old, spec.train_per_class, "train", next_id)
    labeled = LabeledSet(x, y, ids)
    next_id += len(ids)

    unlabeled = []
    for step in range(spec.num_steps):
        x, y, ids = _draw(spec, means, spec.step_classes(step), spec.train_per_class, "train", next_id)
        unlabeled.append(UnlabeledSet(x, ids, y))
        next_id += len(ids)

    x, y, ids = _draw(spec, means, old, spec.test_per_class, "test", next_id)
    test_old = LabeledSet(x, y, ids)
    next_id += len(ids)

    test_new = []
    for step in range(spec.num_steps):
        x, y, ids = _draw(spec, means, spec.step_classes(step), spec.test_per_class, "test", next_id)
        test_new.append(LabeledSet(x, y, ids))
        next_id += len(ids)

    logger.info(
        "generated task %s: %d old, %s new, %d samples",
        spec.profile or "custom", spec.num_old, spec.new_per_step, next_id,
    )
    return SplitSet(spec, means, labeled, unlabeled, test_old, test_new)


def correlated_view(x, sigma_aug: float, rng: np.random.Generator):
    """x plus N(0, sigma_aug^2) jitter; returns the same kind it was given."""
    if sigma_aug < 0:
        raise ParameterError(f"jitter scale must be non-negative, got {sigma_aug}")
    data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    view = data + sigma_aug * rng.standard_normal(data.shape)
    return Tensor(view) if isinstance(x, Tensor) else view
