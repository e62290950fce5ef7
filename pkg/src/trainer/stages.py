"""
Training stages

- pretrain_supervised: cross-entropy on the labelled old classes, then
  prototypes from the final features and the frozen snapshot
- discover: one discovery step with pairwise BCE, consistency MSE,
  self-training, feature replay and feature distillation (or LwF)
- incremental_step: step-boundary bookkeeping followed by discover
"""

import logging
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from ..autodiff import GradTape, Tensor, constant, scale, softmax, take_columns
from ..datagen import SplitSet, TaskSpec, correlated_view, generate
from ..errors import ConfigurationError, DivergenceError, NonFiniteError, ValidationError
from ..evaluation import EvalReport, eval_class_incd, eval_original_rt, evaluate_steps, rounded_metric
from ..model import Head, ModelBundle, extend_head, init_bundle, snapshot_frozen
from ..objectives import (
    LossBreakdown,
    LossParts,
    RampUpSchedule,
    average_breakdowns,
    consistency_mse,
    cross_entropy_supervised,
    feature_kd,
    frost_total,
    lwf_logit_kd,
    make_pseudo_labels,
    one_hot,
    pairwise_bce_batch,
    rank_stats_pair_labels,
    replay_loss,
    self_training_loss,
)
from ..prototypes import PrototypeStore, compute_prototypes, sample_replay_batch
from ..utils import array_digest, derive_rng
from .config import TrainConfig
from .optim import SGD

logger = logging.getLogger(__name__)

TaskLike = Union[TaskSpec, SplitSet]


@dataclass
class RunRecord:
    stage: str
    arm: str = "full"
    step: int = 0
    history: List[Dict[str, float]] = field(default_factory=list)
    reports: Dict[str, EvalReport] = field(default_factory=dict)
    mappings: List[Dict[int, int]] = field(default_factory=list)
    step_metrics: Dict[str, float] = field(default_factory=dict)
    train_accuracy: Optional[float] = None
    start_digest: str = ""
    frozen_digests: Tuple[str, str] = ("", "")
    replay_classes: List[int] = field(default_factory=list)
    artifacts: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "stage": self.stage,
            "arm": self.arm,
            "step": self.step,
            "epochs": len(self.history),
            "history": self.history,
            "reports": {name: report.to_dict() for name, report in sorted(self.reports.items())},
            "mappings": [{str(k): v for k, v in sorted(mp.items())} for mp in self.mappings],
            "step_metrics": {k: rounded_metric(v) for k, v in self.step_metrics.items()},
            "train_accuracy": None if self.train_accuracy is None else round(self.train_accuracy, 4),
            "start_digest": self.start_digest,
            "frozen_digests": list(self.frozen_digests),
            "replay_classes": self.replay_classes,
            "artifacts": dict(sorted(self.artifacts.items())),
        }


def resolve_splits(task: TaskLike) -> SplitSet:
    return generate(task) if isinstance(task, TaskSpec) else task


@contextmanager
def _guard(term: str, stage: str, epoch: int):
    """Report a non-finite loss term by name."""
    try:
        yield
    except NonFiniteError as e:
        raise DivergenceError(term, stage, epoch) from e


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _epochs(count: int, cfg: TrainConfig, desc: str):
    return tqdm(range(count), desc=desc, disable=not cfg.show_progress, file=sys.stderr, leave=False)


def _history_row(epoch: int, breakdown: LossBreakdown, lr: float) -> Dict[str, float]:
    row = {"epoch": epoch}
    row.update(breakdown.as_row())
    row["lr"] = lr
    return row


def _bundle_digest(m: ModelBundle) -> str:
    arrays = [p.data for p in m.backbone.parameters()] + [p.data for p in m.joint_head.parameters()]
    return array_digest(arrays)


def pretrain_supervised(task: TaskLike, cfg: TrainConfig) -> Tuple[ModelBundle, PrototypeStore, RunRecord]:
    """Stage 1 on the labelled split."""
    splits = resolve_splits(task)
    labeled = splits.labeled
    if len(labeled) == 0:
        raise ValidationError("labelled split is empty")
    num_classes = splits.spec.num_old

    m = init_bundle(splits.spec.input_dim, num_classes, derive_rng(cfg.seed, "init"),
                    hidden_dim=cfg.hidden_dim, feature_dim=cfg.feature_dim)
    params = m.backbone.parameters() + m.old_head.parameters()
    optimizer = SGD(params, cfg.lr, cfg.momentum, cfg.lr_decay, cfg.decay_epoch(cfg.pretrain_epochs))
    shuffle = derive_rng(cfg.seed, "shuffle", "pretrain")
    targets = one_hot(labeled.y, num_classes)
    record = RunRecord(stage="pretrain", arm="pretrain")
    zero = RampUpSchedule(0.0, 1)

    logger.info("pretraining on %d labelled samples, %d classes", len(labeled), num_classes)
    for epoch in _epochs(cfg.pretrain_epochs, cfg, "pretrain"):
        lr = optimizer.set_epoch(epoch)
        batch_losses = []
        for idx in _batches(len(labeled), cfg.batch_size, shuffle):
            with GradTape() as tape:
                with _guard("ce", "pretrain", epoch):
                    logits = m.old_head.logits(m.backbone.forward(constant(labeled.x[idx])))
                    ce = cross_entropy_supervised(logits, targets[idx])
                breakdown = frost_total(LossParts(ce=ce), epoch, 0.0, zero, zero)
            grads = tape.backward(breakdown.objective)
            with _guard("ce", "pretrain", epoch):
                optimizer.step(grads)
            batch_losses.append(breakdown)
        summary = average_breakdowns(batch_losses)
        record.history.append(_history_row(epoch, summary, lr))
        logger.info("pretrain epoch %d ce=%.5f", epoch, summary.ce)

    z = m.backbone.forward(constant(labeled.x))
    preds = np.argmax(m.old_head.logits(z).data, axis=1)
    record.train_accuracy = float(np.mean(preds == labeled.y))
    store = compute_prototypes(z, labeled.y)
    m.joint_head = m.old_head.clone()
    snapshot_frozen(m)
    record.start_digest = _bundle_digest(m)
    logger.info("pretrain done: train accuracy %.4f, %d prototypes", record.train_accuracy, len(store))
    return m, store, record


def _begin_step(m: ModelBundle, num_new: int, cfg: TrainConfig, rng: np.random.Generator) -> None:
    m.joint_head = extend_head(m.joint_head, num_new, cfg.head_init_scale, rng)
    m.step_sizes.append(num_new)
    if cfg.joint_only:
        m.novel_head = None
    else:
        m.novel_head = Head.init(num_new, m.feature_dim, 1.0 / np.sqrt(m.feature_dim), rng, name="novel_head")


def _cluster_logits(m: ModelBundle, z: Tensor) -> Tensor:
    """Novel-head logits, or the joint head's newest block for joint-only runs."""
    if m.novel_head is not None:
        return m.novel_head.logits(z)
    return take_columns(m.joint_head.logits(z), m.num_old, m.num_all)


def discover(
    m: ModelBundle,
    store: Optional[PrototypeStore],
    task: TaskLike,
    cfg: TrainConfig,
    step: int = 0,
    arm: Optional[str] = None,
    frozen_mappings: Sequence[Dict[int, int]] = (),
) -> Tuple[ModelBundle, RunRecord]:
    """
    One discovery step on unlabelled split `step`.

    Works on a clone of m, so a shared stage-1 bundle can seed several arms.
    The step's cluster->class mapping is fixed at the end and appended to
    the record's mappings after the frozen ones passed in.
    """
    splits = resolve_splits(task)
    arm = arm or cfg.arm_name()
    if cfg.uses_replay and (store is None or len(store) == 0):
        raise ConfigurationError("no_fr", "feature replay is enabled but no prototypes were given")
    if m.frozen_backbone is None and (cfg.uses_feature_kd or cfg.lwf_mode):
        raise ConfigurationError("no_fd", "distillation needs the frozen stage-1 backbone")
    if step >= len(splits.unlabeled) or len(splits.unlabeled[step]) == 0:
        raise ValidationError(f"unlabelled split for step {step + 1} is empty")

    m = m.clone()
    record = RunRecord(stage="discover", arm=arm, step=step, start_digest=_bundle_digest(m))
    num_new = splits.spec.new_per_step[step]
    tag = f"step{step + 1}"
    _begin_step(m, num_new, cfg, derive_rng(cfg.seed, arm, "init", tag))
    num_old = m.num_old

    augment = derive_rng(cfg.seed, arm, "augmentation", tag)
    replay_rng = derive_rng(cfg.seed, arm, "replay", tag)
    shuffle = derive_rng(cfg.seed, arm, "shuffle", tag)
    frozen_start = m.frozen_backbone.digest() if m.frozen_backbone is not None else ""

    params = m.backbone.parameters() + m.joint_head.parameters()
    if m.novel_head is not None:
        params += m.novel_head.parameters()
    optimizer = SGD(params, cfg.lr, cfg.momentum, cfg.lr_decay, cfg.decay_epoch(cfg.discover_epochs))
    unlabeled = splits.unlabeled[step].x
    replayed = set()

    logger.info("discovery %s arm=%s: %d unlabelled samples, %d new classes", tag, arm, len(unlabeled), num_new)
    for epoch in _epochs(cfg.discover_epochs, cfg, f"discover {arm}"):
        lr = optimizer.set_epoch(epoch)
        batch_losses = []
        for idx in _batches(len(unlabeled), cfg.batch_size, shuffle):
            x = unlabeled[idx]
            x_bar = correlated_view(x, splits.spec.aug_scale, augment)
            parts = LossParts()
            with GradTape() as tape:
                z = m.backbone.forward(constant(x))
                z_bar = m.backbone.forward(constant(x_bar))
                logits = _cluster_logits(m, z)
                logits_bar = _cluster_logits(m, z_bar)

                with _guard("bce", "discover", epoch):
                    pair_labels = rank_stats_pair_labels(z.data, cfg.topk)
                    parts.bce = pairwise_bce_batch(logits, pair_labels, cfg.pair_similarity)
                with _guard("mse", "discover", epoch):
                    parts.mse = consistency_mse(softmax(logits), softmax(logits_bar))

                joint_logits = m.joint_head.logits(z)
                if not cfg.no_st:
                    with _guard("self", "discover", epoch):
                        pseudo = make_pseudo_labels(logits.data, num_old)
                        parts.self_train = self_training_loss(joint_logits, pseudo)
                        if cfg.self_reduction == "mean":
                            # undo the 1/C_A of the literal form: plain batch-mean CE
                            parts.self_train = scale(parts.self_train, joint_logits.shape[1])
                if cfg.uses_replay:
                    with _guard("replay", "discover", epoch):
                        feats, labels = sample_replay_batch(store, len(idx), replay_rng)
                        replayed.update(int(c) for c in np.unique(labels))
                        parts.replay = replay_loss(m.joint_head.logits(constant(feats)), labels, num_old)
                if cfg.uses_feature_kd:
                    with _guard("kd", "discover", epoch):
                        frozen = m.frozen_backbone.forward(constant(x))
                        parts.feat_kd = feature_kd(constant(frozen.data), z)
                if cfg.lwf_mode:
                    with _guard("lwf", "discover", epoch):
                        frozen_logits = m.old_head.logits(m.frozen_backbone.forward(constant(x)))
                        live_old = take_columns(joint_logits, 0, num_old)
                        parts.lwf = lwf_logit_kd(constant(frozen_logits.data), live_old,
                                                 cfg.lwf_temperature, cfg.lwf_mode)

                logger.debug("epoch %d batch positive pair rate %.3f", epoch, float(pair_labels.mean()))
                with _guard("total", "discover", epoch):
                    breakdown = frost_total(
                        parts, epoch, cfg.lam, cfg.self_schedule, cfg.mse_schedule,
                        bce_weight=cfg.bce_weight, replay_weight=cfg.replay_weight, lwf_weight=cfg.lwf_weight,
                    )
            grads = tape.backward(breakdown.objective)
            with _guard("total", "discover", epoch):
                optimizer.step(grads)
            batch_losses.append(breakdown)

        summary = average_breakdowns(batch_losses)
        record.history.append(_history_row(epoch, summary, lr))
        logger.info(
            "discover epoch %d total=%.5f bce=%.5f self=%.5f mse=%.5f replay=%.5f kd=%.5f",
            epoch, summary.total, summary.bce, summary.self_train, summary.mse, summary.replay, summary.feat_kd,
        )

    frozen_end = m.frozen_backbone.digest() if m.frozen_backbone is not None else ""
    record.frozen_digests = (frozen_start, frozen_end)
    record.replay_classes = sorted(replayed)

    test_old = splits.known_test(step)
    test_new = splits.test_new[step]
    incd = eval_class_incd(m, test_old, test_new, frozen_mappings)
    record.reports["class-incd"] = incd
    if m.novel_head is not None:
        record.reports["original-rt"] = eval_original_rt(m, test_old, test_new, frozen_mappings)
    record.mappings = list(frozen_mappings) + [incd.mapping]
    record.step_metrics = evaluate_steps(m, splits.test_old, splits.test_new, record.mappings)
    incd.step_metrics = dict(record.step_metrics)
    logger.info("discovery %s arm=%s done: old=%.4f new=%.4f all=%.4f",
                tag, arm, incd.old_acc, incd.new_acc, incd.all_acc)
    return m, record


def step_prototypes(m: ModelBundle, unlabeled_x: np.ndarray) -> Optional[PrototypeStore]:
    """
    Prototypes of the current step's classes from its unlabelled data.

    Samples are labelled by the joint head restricted to the step's block;
    a class that receives no sample is skipped.
    """
    offset, size = m.num_old, m.num_new
    z = m.backbone.forward(constant(unlabeled_x))
    block = m.joint_head.logits(z).data[:, offset:offset + size]
    labels = offset + np.argmax(block, axis=1)
    missing = sorted(set(range(offset, offset + size)) - set(labels.tolist()))
    for class_id in missing:
        logger.warning("discovered class %d received no samples; no prototype stored", class_id)
    if len(missing) == size:
        return None
    return compute_prototypes(z, labels)


def incremental_step(
    m: ModelBundle,
    store: Optional[PrototypeStore],
    task: TaskLike,
    cfg: TrainConfig,
    step: int,
    arm: Optional[str] = None,
    frozen_mappings: Sequence[Dict[int, int]] = (),
) -> Tuple[ModelBundle, Optional[PrototypeStore], RunRecord]:
    """
    Close the previous step and discover the classes of step `step`.

    The previous novel head is retired, prototypes of the classes it found
    are merged into the store, the previous joint head becomes the old head
    and the live backbone becomes the new frozen reference.
    """
    splits = resolve_splits(task)
    if step < 1 or len(m.step_sizes) != step:
        raise ValidationError(f"step {step + 1} needs exactly {step} completed discovery steps, model has {len(m.step_sizes)}")

    m = m.clone()
    discovered = step_prototypes(m, splits.unlabeled[step - 1].x)
    if discovered is not None:
        store = discovered if store is None else store.merge(discovered)
    if m.novel_head is not None:
        m.retired_heads.append(m.novel_head)
        m.novel_head = None
    m.old_head = m.joint_head.clone()
    snapshot_frozen(m, replace=True)
    logger.info("step boundary %d: %d classes known, %d prototypes", step, m.num_all,
                0 if store is None else len(store))

    m, record = discover(m, store, splits, cfg, step=step, arm=arm, frozen_mappings=frozen_mappings)
    record.stage = "incremental"
    return m, store, record
