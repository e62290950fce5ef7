"""
Run configuration

- TrainConfig: optimisation settings, loss weights and ablation switches
- ARMS: named ablation arms and the switches each one sets
- RunConfig: the JSON document {seed, task, train}; manifests load too
"""

import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Union

from ..datagen import DEFAULT_PROFILE, TaskSpec
from ..errors import ConfigurationError, LookupFailure
from ..objectives import LWF_MODES, PAIR_SIMILARITIES, RampUpSchedule
from ..utils import read_json

logger = logging.getLogger(__name__)

SELF_REDUCTIONS = ("mean", "literal")
SWITCHES = ("no_fd", "no_fr", "no_st", "lwf_softmax", "lwf_presoftmax", "joint_only")

# arm name -> switches turned on (all others off)
ARMS: Dict[str, Dict[str, bool]] = {
    'full': {},
    'no_fd_fr': {'no_fd': True, 'no_fr': True},
    'no_fd': {'no_fd': True},
    'no_fr': {'no_fr': True},
    'no_st': {'no_st': True},
    'no_all_st': {'no_fd': True, 'no_fr': True, 'no_st': True},
    'lwf_softmax': {'lwf_softmax': True, 'no_fd': True, 'no_fr': True},
    'lwf_softmax_fr': {'lwf_softmax': True, 'no_fd': True},
    'lwf_presoftmax': {'lwf_presoftmax': True, 'no_fd': True, 'no_fr': True},
    'lwf_presoftmax_fr': {'lwf_presoftmax': True, 'no_fd': True},
    'joint_only': {'joint_only': True},
    'joint_only_no_st': {'joint_only': True, 'no_st': True},
}
ARM_NAMES = tuple(ARMS)


def resolve_arm(name: str) -> str:
    """Canonical arm name; accepts forms such as 'no_fd&fr' or 'lwf_softmax+fr'."""
    key = name.strip().lower().replace("&", "_").replace("+", "_").replace("-", "_")
    if key not in ARMS:
        raise LookupFailure(f"unknown ablation {name!r}; valid names: {', '.join(ARM_NAMES)}")
    return key


@dataclass(frozen=True)
class TrainConfig:
    pretrain_epochs: int = 30
    discover_epochs: int = 40
    lr: float = 0.1
    lr_decay: float = 0.1
    decay_fraction: float = 0.85
    batch_size: int = 128
    momentum: float = 0.9
    topk: int = 5
    hidden_dim: int = 64
    feature_dim: int = 16
    head_init_scale: float = 0.1
    mse_weight: float = 5.0
    mse_length: Optional[int] = None
    self_weight: float = 0.05
    self_length: Optional[int] = None
    self_reduction: str = "mean"
    ramp_fraction: float = 0.25
    lam: float = 10.0
    bce_weight: float = 1.0
    replay_weight: float = 1.0
    lwf_weight: float = 1.0
    lwf_temperature: float = 2.0
    pair_similarity: str = "softmax-dot"
    no_fd: bool = False
    no_fr: bool = False
    no_st: bool = False
    lwf_softmax: bool = False
    lwf_presoftmax: bool = False
    joint_only: bool = False
    show_progress: bool = False
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("pretrain_epochs", "discover_epochs"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"train.{name}", "must be non-negative")
        if self.batch_size < 1:
            raise ConfigurationError("train.batch_size", f"must be at least 1, got {self.batch_size}")
        if not self.lr > 0:
            raise ConfigurationError("train.lr", f"must be positive, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError("train.momentum", f"must lie in [0, 1), got {self.momentum}")
        # int(f * epochs) < epochs for every f in (0, 1)
        if not 0 < self.decay_fraction < 1:
            raise ConfigurationError("train.decay_fraction", f"must lie in (0, 1), got {self.decay_fraction}")
        if not 0 < self.lr_decay <= 1:
            raise ConfigurationError("train.lr_decay", f"must lie in (0, 1], got {self.lr_decay}")
        if not 1 <= self.topk <= self.feature_dim:
            raise ConfigurationError("train.topk", f"must lie in [1, {self.feature_dim}], got {self.topk}")
        if self.hidden_dim < 1 or self.feature_dim < 1:
            raise ConfigurationError("train.feature_dim", "layer widths must be positive")
        if self.head_init_scale < 0:
            raise ConfigurationError("train.head_init_scale", "must be non-negative")
        for name in ("mse_weight", "self_weight", "lam", "bce_weight", "replay_weight", "lwf_weight"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"train.{name}", "loss weights must be non-negative")
        for name in ("mse_length", "self_length"):
            if getattr(self, name) is not None and getattr(self, name) < 1:
                raise ConfigurationError(f"train.{name}", "ramp-up length must be at least 1")
        if not 0 < self.ramp_fraction <= 1:
            raise ConfigurationError("train.ramp_fraction", f"must lie in (0, 1], got {self.ramp_fraction}")
        if self.self_reduction not in SELF_REDUCTIONS:
            raise ConfigurationError("train.self_reduction", f"expected one of {', '.join(SELF_REDUCTIONS)}")
        if not self.lwf_temperature > 0:
            raise ConfigurationError("train.lwf_temperature", "must be positive")
        if self.pair_similarity not in PAIR_SIMILARITIES:
            raise ConfigurationError("train.pair_similarity", f"expected one of {', '.join(PAIR_SIMILARITIES)}")
        if self.lwf_softmax and self.lwf_presoftmax:
            raise ConfigurationError("train.lwf_presoftmax", "choose one LwF mode")
        if self.lwf_mode and not self.no_fd:
            raise ConfigurationError("train.no_fd", "LwF arms replace feature distillation; set no_fd")
        if self.joint_only and self.lwf_mode:
            raise ConfigurationError("train.joint_only", "joint-only arms do not combine with LwF")

    def decay_epoch(self, epochs: int) -> int:
        return int(self.decay_fraction * epochs)

    def ramp_length(self, explicit: Optional[int] = None) -> int:
        """An explicit length wins; otherwise ramp_fraction of the discovery epochs."""
        if explicit is not None:
            return explicit
        return max(1, int(round(self.ramp_fraction * self.discover_epochs)))

    @property
    def lwf_mode(self) -> str:
        if self.lwf_softmax:
            return LWF_MODES[0]
        if self.lwf_presoftmax:
            return LWF_MODES[1]
        return ""

    @property
    def self_schedule(self) -> RampUpSchedule:
        return RampUpSchedule(self.self_weight, self.ramp_length(self.self_length))

    @property
    def mse_schedule(self) -> RampUpSchedule:
        return RampUpSchedule(self.mse_weight, self.ramp_length(self.mse_length))

    @property
    def uses_replay(self) -> bool:
        return not self.no_fr

    @property
    def uses_feature_kd(self) -> bool:
        return not self.no_fd and not self.lwf_mode

    def with_arm(self, name: str) -> "TrainConfig":
        arm = resolve_arm(name)
        switches = {switch: False for switch in SWITCHES}
        switches.update(ARMS[arm])
        return replace(self, **switches)

    def arm_name(self) -> str:
        """Arm whose switches match this config, or 'custom'."""
        active = {s: True for s in SWITCHES if getattr(self, s)}
        for name, switches in ARMS.items():
            if switches == active:
                return name
        return "custom"

    @classmethod
    def from_dict(cls, data: Dict[str, Any], seed: int = 0) -> "TrainConfig":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"train.{unknown[0]}", "unknown field")
        data.setdefault("seed", seed)
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigurationError("train", str(e)) from e

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class RunConfig:
    seed: int
    task: TaskSpec
    train: TrainConfig

    @classmethod
    def default(cls, seed: int = 0, profile: str = DEFAULT_PROFILE) -> "RunConfig":
        return cls(seed, TaskSpec.from_profile(profile, seed=seed), TrainConfig(seed=seed))

    @classmethod
    def from_dict(cls, data: Dict[str, Any], seed_override: Union[int, None] = None) -> "RunConfig":
        data = dict(data or {})
        unknown = sorted(set(data) - {"seed", "task", "train"})
        if unknown:
            raise ConfigurationError(unknown[0], "unknown field")
        seed = data.get("seed", 0) if seed_override is None else seed_override
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigurationError("seed", f"expected a non-negative integer, got {seed!r}")
        task_data = dict(data.get("task") or {"profile": DEFAULT_PROFILE})
        train_data = dict(data.get("train") or {})
        if seed_override is not None:
            task_data["seed"] = seed_override
            train_data["seed"] = seed_override
        task = TaskSpec.from_dict(task_data, seed=seed)
        train = TrainConfig.from_dict(train_data, seed=seed)
        return cls(seed, task, train)

    def to_dict(self) -> Dict[str, Any]:
        return {"seed": self.seed, "task": self.task.to_dict(), "train": self.train.to_dict()}


def load_config(path: Union[str, Path], seed_override: Union[int, None] = None) -> RunConfig:
    """Read a config document, or the config section of a run manifest."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError("config", f"config file not found: {path}")
    doc = read_json(path)
    if "config" in doc and "tool_version" in doc:
        logger.info("using the config section of manifest %s", path)
        doc = doc["config"]
    return RunConfig.from_dict(doc, seed_override=seed_override)
