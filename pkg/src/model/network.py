"""
Feature extractor, classifier heads and the bundle that ties them together.

- Backbone: input -> hidden (relu) -> linear feature of dimension d
- Head: linear classifier, weight (num_classes x d) plus bias
- ModelBundle: live backbone, frozen snapshot, old / joint / novel heads
"""

import copy
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..autodiff import Tensor, add, matmul, parameter, relu, transpose
from ..errors import ParameterError, ShapeError, ValidationError
from ..utils import array_digest

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN_DIM = 64
DEFAULT_FEATURE_DIM = 16
DEFAULT_HEAD_INIT_SCALE = 0.1


@dataclass
class Dense:
    """One affine layer; weight is stored input x output."""
    weight: Tensor
    bias: Tensor

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]


class Backbone:
    """Two-layer perceptron g: relu on every layer except the last."""

    def __init__(self, layers: List[Dense]):
        if not layers:
            raise ShapeError("a backbone needs at least one layer")
        for previous, layer in zip(layers, layers[1:]):
            if previous.out_dim != layer.in_dim:
                raise ShapeError(f"layer widths do not chain: {previous.out_dim} -> {layer.in_dim}")
        self.layers = layers

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, feature_dim: int, rng: np.random.Generator) -> "Backbone":
        layers = []
        for index, (fan_in, fan_out) in enumerate(((input_dim, hidden_dim), (hidden_dim, feature_dim))):
            bound = 1.0 / np.sqrt(fan_in)
            weight = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            layers.append(Dense(
                weight=parameter(weight, name=f"backbone.{index}.weight"),
                bias=parameter(np.zeros(fan_out), name=f"backbone.{index}.bias"),
            ))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def feature_dim(self) -> int:
        return self.layers[-1].out_dim

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError(f"backbone expects batch x {self.input_dim} input, got {x.shape}")
        out = x
        for index, layer in enumerate(self.layers):
            out = add(matmul(out, layer.weight), layer.bias)
            if index < len(self.layers) - 1:
                out = relu(out)
        return out

    def parameters(self) -> List[Tensor]:
        params = []
        for layer in self.layers:
            params.extend([layer.weight, layer.bias])
        return params

    def clone(self, trainable: bool = True) -> "Backbone":
        layers = [
            Dense(
                weight=Tensor(layer.weight.data, requires_grad=trainable, name=layer.weight.name),
                bias=Tensor(layer.bias.data, requires_grad=trainable, name=layer.bias.name),
            )
            for layer in self.layers
        ]
        return Backbone(layers)

    def digest(self) -> str:
        return array_digest(p.data for p in self.parameters())


class Head:
    """Linear classifier; logits = z W^T + b."""

    def __init__(self, weight: Tensor, bias: Tensor):
        if weight.ndim != 2 or bias.ndim != 1 or weight.shape[0] != bias.shape[0]:
            raise ShapeError(f"head weight {weight.shape} and bias {bias.shape} disagree")
        self.weight = weight
        self.bias = bias

    @classmethod
    def init(cls, num_classes: int, dim: int, half_width: float, rng: np.random.Generator, name: str = "head") -> "Head":
        if num_classes < 1:
            raise ParameterError(f"a head needs at least one class, got {num_classes}")
        weight = rng.uniform(-half_width, half_width, size=(num_classes, dim))
        return cls(parameter(weight, name=f"{name}.weight"), parameter(np.zeros(num_classes), name=f"{name}.bias"))

    @property
    def num_classes(self) -> int:
        return self.weight.shape[0]

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    def logits(self, z: Tensor) -> Tensor:
        if z.ndim != 2 or z.shape[1] != self.dim:
            raise ShapeError(f"head expects batch x {self.dim} features, got {z.shape}")
        return add(matmul(z, transpose(self.weight)), self.bias)

    def parameters(self) -> List[Tensor]:
        return [self.weight, self.bias]

    def clone(self, trainable: bool = True) -> "Head":
        return Head(
            Tensor(self.weight.data, requires_grad=trainable, name=self.weight.name),
            Tensor(self.bias.data, requires_grad=trainable, name=self.bias.name),
        )


@dataclass
class ModelBundle:
    """
    Everything a run trains or evaluates.

    base_classes is the labelled class count of stage 1; step_sizes lists the
    new-class count of every discovery step so far (the last one is current).
    retired_heads keeps the novel heads of earlier steps for per-step metrics.
    """
    backbone: Backbone
    old_head: Head
    joint_head: Head
    base_classes: int
    novel_head: Optional[Head] = None
    frozen_backbone: Optional[Backbone] = None
    step_sizes: List[int] = field(default_factory=list)
    retired_heads: List[Head] = field(default_factory=list)

    @property
    def num_old(self) -> int:
        """C_L of the current stage: every class known before it started."""
        return self.base_classes + sum(self.step_sizes[:-1])

    @property
    def num_new(self) -> int:
        return self.step_sizes[-1] if self.step_sizes else 0

    @property
    def num_all(self) -> int:
        return self.base_classes + sum(self.step_sizes)

    @property
    def input_dim(self) -> int:
        return self.backbone.input_dim

    @property
    def feature_dim(self) -> int:
        return self.backbone.feature_dim

    def step_offsets(self) -> List[int]:
        """First joint-head column of every discovery step's block."""
        offsets, start = [], self.base_classes
        for size in self.step_sizes:
            offsets.append(start)
            start += size
        return offsets

    def clone(self) -> "ModelBundle":
        return copy.deepcopy(self)


def init_bundle(
    input_dim: int,
    num_classes: int,
    rng: np.random.Generator,
    hidden_dim: int = DEFAULT_HIDDEN_DIM,
    feature_dim: int = DEFAULT_FEATURE_DIM,
) -> ModelBundle:
    """Fresh stage-1 bundle; the joint head starts as a copy of the old head."""
    backbone = Backbone.init(input_dim, hidden_dim, feature_dim, rng)
    old_head = Head.init(num_classes, feature_dim, 1.0 / np.sqrt(feature_dim), rng, name="old_head")
    return ModelBundle(
        backbone=backbone,
        old_head=old_head,
        joint_head=old_head.clone(),
        base_classes=num_classes,
    )


def forward_features(m: ModelBundle, x: Tensor) -> Tensor:
    return m.backbone.forward(x)


def extend_head(old: Head, new_classes: int, init_scale: float, rng: np.random.Generator) -> Head:
    """
    Append new_classes rows to a head.

    The old rows and biases are copied bit-exactly; appended rows are uniform
    in [-init_scale, init_scale] with zero biases.
    """
    if new_classes < 1:
        raise ParameterError(f"new_classes must be at least 1, got {new_classes}")
    if init_scale < 0:
        raise ParameterError(f"init_scale must be non-negative, got {init_scale}")
    appended = rng.uniform(-init_scale, init_scale, size=(new_classes, old.dim))
    if init_scale == 0:
        appended = np.zeros((new_classes, old.dim))
    weight = np.vstack([old.weight.data, appended])
    bias = np.concatenate([old.bias.data, np.zeros(new_classes)])
    return Head(parameter(weight, name="joint_head.weight"), parameter(bias, name="joint_head.bias"))


def snapshot_frozen(m: ModelBundle, replace: bool = False) -> ModelBundle:
    """
    Store a deep, non-trainable copy of the live backbone.

    A stage takes exactly one snapshot; replace=True is used at step
    boundaries, where the previous task's extractor becomes the reference.
    """
    if m.frozen_backbone is not None and not replace:
        raise ValidationError("frozen backbone already set for this stage")
    m.frozen_backbone = m.backbone.clone(trainable=False)
    logger.debug("frozen backbone snapshot %s", m.frozen_backbone.digest()[:12])
    return m


def head_weight_norms(h: Head) -> np.ndarray:
    """Per-class L2 norm of the weight row concatenated with its bias."""
    stacked = np.hstack([h.weight.data, h.bias.data[:, None]])
    return np.sqrt((stacked ** 2).sum(axis=1))


def concat_heads(first: Head, second: Head) -> Head:
    """Stack two heads over the same feature space (the Original_RT concat head)."""
    if first.dim != second.dim:
        raise ShapeError(f"cannot concatenate heads over {first.dim} and {second.dim} features")
    return Head(
        Tensor(np.vstack([first.weight.data, second.weight.data]), name="concat_head.weight"),
        Tensor(np.concatenate([first.bias.data, second.bias.data]), name="concat_head.bias"),
    )
