"""
Loss terms of the two training stages.

Supervised stage:
- cross_entropy_supervised

Discovery stage:
- rank-statistics pair labels, pairwise BCE, consistency MSE
- offset pseudo-labels and the self-training CE on the joint head
- feature replay CE and feature distillation
- LwF logit distillation (baseline arms)
- frost_total, which weights everything into one objective
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Union

import numpy as np

from ..autodiff import (
    Tensor,
    clamp,
    constant,
    log,
    matmul,
    mean,
    mul,
    row_norm,
    scale,
    shift,
    sigmoid,
    softmax,
    sub,
    total,
    transpose,
    add,
)
from ..errors import ParameterError, ShapeError, ValidationError
from .schedules import RampUpSchedule

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-7
PAIR_SIMILARITIES = ("softmax-dot", "logistic")
LWF_MODES = ("softmax", "pre-softmax")

Number = Union[float, Tensor]


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _log_probs(logits: Tensor, temperature: float = 1.0) -> Tensor:
    return log(clamp(softmax(logits, temperature), PROB_FLOOR, 1.0))


def _one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _check_labels(labels, low: int, high: int, what: str) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeError(f"{what} must be a vector, got shape {labels.shape}")
    if labels.size and (not np.issubdtype(labels.dtype, np.integer)):
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise ValidationError(f"{what} must be integral")
        labels = labels.astype(np.int64)
    if labels.size and (labels.min() < low or labels.max() >= high):
        raise ValidationError(f"{what} must lie in [{low}, {high}), got range [{labels.min()}, {labels.max()}]")
    return labels.astype(np.int64)


def _weighted_nll(logits: Tensor, targets: np.ndarray, factor: float) -> Tensor:
    """-(factor) * sum(targets * log softmax(logits)), averaged over the batch."""
    batch = logits.shape[0]
    return scale(total(mul(constant(targets), _log_probs(logits))), -factor / batch)


# --- supervised ---------------------------------------------------------------

def cross_entropy_supervised(logits: Tensor, targets) -> Tensor:
    """Mean over the batch of -(1/C) sum_k y_k log softmax_k(logits)."""
    targets = _as_array(targets)
    if targets.shape != logits.shape or logits.ndim != 2:
        raise ShapeError(f"targets {targets.shape} must match logits {logits.shape}")
    binary = np.all((targets == 0) | (targets == 1))
    if not binary or not np.all(targets.sum(axis=1) == 1):
        raise ValidationError("every target row must be one-hot")
    return _weighted_nll(logits, targets, 1.0 / logits.shape[1])


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = _check_labels(labels, 0, num_classes, "labels")
    return _one_hot(labels, num_classes)


# --- LwF baseline -------------------------------------------------------------

def lwf_logit_kd(frozen_old_logits: Tensor, live_old_logits: Tensor, temperature: float = 2.0,
                 mode: str = "softmax") -> Tensor:
    """
    Logit distillation from the frozen stage-1 model.

    softmax: mean over the batch of -(1/C_L) sum_k pi_k(frozen) log pi_k(live)
    pre-softmax: mean squared difference of the raw logits
    """
    if not temperature > 0:
        raise ParameterError(f"distillation temperature must be positive, got {temperature}")
    if mode not in LWF_MODES:
        raise ParameterError(f"unknown LwF mode {mode!r}; expected one of {', '.join(LWF_MODES)}")
    if frozen_old_logits.shape != live_old_logits.shape:
        raise ShapeError(f"logit shapes differ: {frozen_old_logits.shape} vs {live_old_logits.shape}")

    if mode == "pre-softmax":
        diff = sub(constant(frozen_old_logits.data), live_old_logits)
        return mean(mul(diff, diff))

    target = softmax(constant(frozen_old_logits.data), temperature).data
    batch, classes = live_old_logits.shape
    log_live = _log_probs(live_old_logits, temperature)
    return scale(total(mul(constant(target), log_live)), -1.0 / (classes * batch))


# --- rank statistics ----------------------------------------------------------

def top_k_indices(z, k: int) -> np.ndarray:
    z = _as_array(z)
    if not 1 <= k <= z.shape[-1]:
        raise ParameterError(f"k must lie in [1, {z.shape[-1]}], got {k}")
    # stable sort of -z keeps the lower index first among ties
    return np.argsort(-z, axis=-1, kind="stable")[..., :k]


def rank_stats_pair_label(z_i, z_j, k: int) -> int:
    """1 when the top-k index sets of the two feature vectors coincide."""
    z_i, z_j = _as_array(z_i), _as_array(z_j)
    if z_i.shape != z_j.shape or z_i.ndim != 1:
        raise ShapeError(f"feature vectors must share one dimension, got {z_i.shape} and {z_j.shape}")
    top_i = set(top_k_indices(z_i, k).tolist())
    top_j = set(top_k_indices(z_j, k).tolist())
    return int(top_i == top_j)


def rank_stats_pair_labels(z, k: int) -> np.ndarray:
    """Batch x batch matrix of pair labels for every row pair of z."""
    z = _as_array(z)
    if z.ndim != 2:
        raise ShapeError(f"expected batch x d features, got shape {z.shape}")
    idx = top_k_indices(z, k)
    mask = np.zeros_like(z)
    np.put_along_axis(mask, idx, 1.0, axis=1)
    return (mask @ mask.T == k).astype(np.float64)


# --- pairwise BCE -------------------------------------------------------------

def _bce(p: Tensor, y: np.ndarray) -> Tensor:
    """Elementwise -[y log p + (1-y) log(1-p)] with p already clamped."""
    log_p = log(p)
    log_q = log(shift(scale(p, -1.0), 1.0))
    return scale(add(mul(constant(y), log_p), mul(constant(1.0 - y), log_q)), -1.0)


def pair_probability(novel_logits_i: Tensor, novel_logits_j: Tensor, similarity: str = "softmax-dot") -> Tensor:
    if novel_logits_i.shape != novel_logits_j.shape or novel_logits_i.ndim != 1:
        raise ShapeError(f"pair logits must be vectors of one length, got {novel_logits_i.shape} and {novel_logits_j.shape}")
    if similarity == "softmax-dot":
        p = total(mul(softmax(novel_logits_i), softmax(novel_logits_j)))
    elif similarity == "logistic":
        p = sigmoid(total(mul(novel_logits_i, novel_logits_j)))
    else:
        raise ParameterError(f"unknown pair similarity {similarity!r}")
    return clamp(p, PROB_FLOOR, 1.0 - PROB_FLOOR)


def pairwise_bce(novel_logits_i: Tensor, novel_logits_j: Tensor, label: int,
                 similarity: str = "softmax-dot") -> Tensor:
    if label not in (0, 1):
        raise ValidationError(f"pair label must be 0 or 1, got {label}")
    p = pair_probability(novel_logits_i, novel_logits_j, similarity)
    return _bce(p, np.array(float(label)))


def pairwise_bce_batch(novel_logits: Tensor, pair_labels: np.ndarray, similarity: str = "softmax-dot") -> Tensor:
    """Mean pairwise BCE over all unordered pairs i < j of a minibatch."""
    batch = novel_logits.shape[0]
    pair_labels = np.asarray(pair_labels, dtype=np.float64)
    if pair_labels.shape != (batch, batch):
        raise ShapeError(f"pair labels must be {batch}x{batch}, got {pair_labels.shape}")
    if batch < 2:
        # no pairs: a zero that still sits on the tape
        return scale(total(novel_logits), 0.0)

    if similarity == "softmax-dot":
        probs = softmax(novel_logits)
        sims = matmul(probs, transpose(probs))
    elif similarity == "logistic":
        sims = sigmoid(matmul(novel_logits, transpose(novel_logits)))
    else:
        raise ParameterError(f"unknown pair similarity {similarity!r}")

    losses = _bce(clamp(sims, PROB_FLOOR, 1.0 - PROB_FLOOR), pair_labels)
    upper = np.triu(np.ones((batch, batch)), k=1)
    pairs = batch * (batch - 1) / 2
    return scale(total(mul(constant(upper), losses)), 1.0 / pairs)


# --- self-training ------------------------------------------------------------

def make_pseudo_label(novel_logits, num_old: int) -> int:
    """num_old + argmax(novel_logits); ties go to the lower index."""
    return int(num_old + np.argmax(_as_array(novel_logits)))


def make_pseudo_labels(novel_logits, num_old: int) -> np.ndarray:
    logits = _as_array(novel_logits)
    if logits.ndim != 2:
        raise ShapeError(f"expected batch x C_U logits, got shape {logits.shape}")
    return num_old + np.argmax(logits, axis=1).astype(np.int64)


def self_training_loss(joint_logits: Tensor, pseudo_labels) -> Tensor:
    """Mean over the batch of -(1/C_A) log softmax_y(joint_logits)."""
    classes = joint_logits.shape[1]
    labels = _check_labels(pseudo_labels, 0, classes, "pseudo-labels")
    if labels.shape[0] != joint_logits.shape[0]:
        raise ShapeError(f"{labels.shape[0]} pseudo-labels for {joint_logits.shape[0]} rows")
    return _weighted_nll(joint_logits, _one_hot(labels, classes), 1.0 / classes)


def consistency_mse(novel_probs_v1: Tensor, novel_probs_v2: Tensor) -> Tensor:
    """Mean over the batch of (1/C_U) sum_k (p1_k - p2_k)^2."""
    if novel_probs_v1.shape != novel_probs_v2.shape:
        raise ShapeError(f"view shapes differ: {novel_probs_v1.shape} vs {novel_probs_v2.shape}")
    diff = sub(novel_probs_v1, novel_probs_v2)
    return mean(mul(diff, diff))


# --- forgetting ---------------------------------------------------------------

def replay_loss(joint_logits_on_sampled: Tensor, old_class_labels, num_old: int) -> Tensor:
    """Plain CE of the joint head on replayed old-class features."""
    labels = np.asarray(old_class_labels)
    if labels.size and labels.max() >= num_old:
        raise ValidationError(f"replay labels must be old classes (< {num_old}), got {labels.max()}")
    classes = joint_logits_on_sampled.shape[1]
    labels = _check_labels(labels, 0, classes, "replay labels")
    if labels.shape[0] != joint_logits_on_sampled.shape[0]:
        raise ShapeError(f"{labels.shape[0]} replay labels for {joint_logits_on_sampled.shape[0]} rows")
    return _weighted_nll(joint_logits_on_sampled, _one_hot(labels, classes), 1.0)


def feature_kd(frozen_features: Tensor, live_features: Tensor) -> Tensor:
    """Mean over the batch of ||frozen - live||_2."""
    if frozen_features.shape != live_features.shape:
        raise ShapeError(f"feature shapes differ: {frozen_features.shape} vs {live_features.shape}")
    return mean(row_norm(sub(frozen_features, live_features)))


# --- combined objective -------------------------------------------------------

@dataclass
class LossParts:
    """Loss terms of one minibatch; None means the term is switched off."""
    ce: Optional[Number] = None
    bce: Optional[Number] = None
    self_train: Optional[Number] = None
    mse: Optional[Number] = None
    replay: Optional[Number] = None
    feat_kd: Optional[Number] = None
    lwf: Optional[Number] = None


@dataclass
class LossBreakdown:
    ce: float = 0.0
    bce: float = 0.0
    self_train: float = 0.0
    mse: float = 0.0
    replay: float = 0.0
    feat_kd: float = 0.0
    lwf: float = 0.0
    total: float = 0.0
    omega_self: float = 0.0
    omega_mse: float = 0.0
    lam: float = 0.0
    objective: Optional[Tensor] = field(default=None, repr=False, compare=False)

    def as_row(self) -> Dict[str, float]:
        return {
            "ce": self.ce,
            "bce": self.bce,
            "self": self.self_train,
            "mse": self.mse,
            "replay": self.replay,
            "kd": self.feat_kd,
            "lwf": self.lwf,
            "total": self.total,
            "omega_self": self.omega_self,
            "omega_mse": self.omega_mse,
        }


def _value(term: Optional[Number]) -> float:
    if term is None:
        return 0.0
    return term.item() if isinstance(term, Tensor) else float(term)


def frost_total(
    parts: LossParts,
    t: float,
    lam: float,
    self_schedule: RampUpSchedule,
    mse_schedule: RampUpSchedule,
    bce_weight: float = 1.0,
    replay_weight: float = 1.0,
    lwf_weight: float = 1.0,
) -> LossBreakdown:
    """
    total = bce + w_self(t) self + w_mse(t) mse + replay + lam kd (+ lwf, + ce)

    The optional weights default to 1 so the plain combination holds exactly.
    """
    omega_self = self_schedule(t)
    omega_mse = mse_schedule(t)
    weighted = [
        (parts.ce, 1.0),
        (parts.bce, bce_weight),
        (parts.self_train, omega_self),
        (parts.mse, omega_mse),
        (parts.replay, replay_weight),
        (parts.feat_kd, lam),
        (parts.lwf, lwf_weight),
    ]

    objective: Optional[Tensor] = None
    value = 0.0
    for term, weight in weighted:
        if term is None:
            continue
        value += weight * _value(term)
        if isinstance(term, Tensor):
            piece = scale(term, weight)
            objective = piece if objective is None else add(objective, piece)

    return LossBreakdown(
        ce=_value(parts.ce),
        bce=_value(parts.bce),
        self_train=_value(parts.self_train),
        mse=_value(parts.mse),
        replay=_value(parts.replay),
        feat_kd=_value(parts.feat_kd),
        lwf=_value(parts.lwf),
        total=value,
        omega_self=omega_self,
        omega_mse=omega_mse,
        lam=float(lam),
        objective=objective,
    )


def average_breakdowns(items: Sequence[LossBreakdown]) -> LossBreakdown:
    """Epoch summary: mean of every term over the minibatches of an epoch."""
    if not items:
        return LossBreakdown()
    names = ("ce", "bce", "self_train", "mse", "replay", "feat_kd", "lwf", "total")
    means = {name: float(np.mean([getattr(b, name) for b in items])) for name in names}
    last = items[-1]
    return LossBreakdown(omega_self=last.omega_self, omega_mse=last.omega_mse, lam=last.lam, **means)
