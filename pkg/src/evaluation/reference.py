"""
Hand-set reference bundles for protocol demonstrations.

Both use an identity feature map (x -> [x, -x] -> relu -> x) and heads whose
rows are class means, so with low-noise data the dot-product argmax recovers
the nearest mean.
"""

import numpy as np

from ..autodiff import Tensor
from ..datagen import TaskSpec, class_means
from ..errors import ConfigurationError
from ..model import Backbone, Dense, Head, ModelBundle, concat_heads

REFERENCE_KINDS = ("oracle", "swap")


def _identity_backbone(dim: int) -> Backbone:
    eye = np.eye(dim)
    first = Dense(
        Tensor(np.hstack([eye, -eye]), requires_grad=True, name="backbone.0.weight"),
        Tensor(np.zeros(2 * dim), requires_grad=True, name="backbone.0.bias"),
    )
    second = Dense(
        Tensor(np.vstack([eye, -eye]), requires_grad=True, name="backbone.1.weight"),
        Tensor(np.zeros(dim), requires_grad=True, name="backbone.1.bias"),
    )
    return Backbone([first, second])


def _rows(means: np.ndarray, name: str) -> Head:
    return Head(
        Tensor(means, requires_grad=True, name=f"{name}.weight"),
        Tensor(np.zeros(means.shape[0]), requires_grad=True, name=f"{name}.bias"),
    )


def build_reference_bundle(spec: TaskSpec, kind: str) -> ModelBundle:
    """
    oracle: every head row is its own class mean.
    swap:   the old head scores old samples with new-class means and the
            novel head scores new samples with old-class means; the joint
            head is their concatenation, so each block predicts the other
            task's classes.
    """
    if kind not in REFERENCE_KINDS:
        raise ConfigurationError("kind", f"unknown reference kind {kind!r}; expected one of {', '.join(REFERENCE_KINDS)}")
    if spec.num_steps != 1:
        raise ConfigurationError("task.new_per_step", "reference bundles cover single-step tasks")
    means = class_means(spec)
    old_means, new_means = means[:spec.num_old], means[spec.num_old:]

    if kind == "oracle":
        old_head, novel_head = _rows(old_means, "old_head"), _rows(new_means, "novel_head")
    else:
        if spec.num_old != spec.num_new:
            raise ConfigurationError("task.new_per_step", "the swap construction needs as many new classes as old ones")
        old_head, novel_head = _rows(new_means, "old_head"), _rows(old_means, "novel_head")

    joint = concat_heads(old_head, novel_head)
    joint_head = Head(Tensor(joint.weight.data, requires_grad=True, name="joint_head.weight"),
                      Tensor(joint.bias.data, requires_grad=True, name="joint_head.bias"))
    return ModelBundle(
        backbone=_identity_backbone(spec.input_dim),
        old_head=old_head,
        joint_head=joint_head,
        base_classes=spec.num_old,
        novel_head=novel_head,
        step_sizes=[spec.num_new],
    )
