"""
Evaluation protocols

- class-incd: task-agnostic joint head; HA only re-assigns the new-class
  ground truth using the novel head's clusters, old classes are scored plainly
- original-rt: task-aware old/new accuracies plus HA over all pooled classes
  on the concatenated old+novel head
- evaluate_steps: per-step columns of a multi-step run with frozen mappings
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ..assignment import optimal_label_mapping
from ..autodiff import Tensor
from ..datagen import LabeledSet
from ..errors import ValidationError
from ..model import Head, ModelBundle, concat_heads, head_weight_norms

logger = logging.getLogger(__name__)

CLASS_INCD = "class-incd"
ORIGINAL_RT = "original-rt"
PROTOCOLS = (CLASS_INCD, ORIGINAL_RT)
ROUND_DIGITS = 4


def rounded_metric(value: float) -> Optional[float]:
    """Rounded accuracy for documents; NaN (a step not reached) becomes null."""
    return None if np.isnan(value) else round(float(value), ROUND_DIGITS)


@dataclass
class EvalReport:
    protocol: str
    old_acc: float
    new_acc: float
    all_acc: float
    num_old: int
    num_new: int
    n_old: int
    n_new: int
    confusion: np.ndarray
    head_norms: List[float] = field(default_factory=list)
    mapping: Dict[int, int] = field(default_factory=dict)
    step_metrics: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "protocol": self.protocol,
            "old_acc": round(self.old_acc, ROUND_DIGITS),
            "new_acc": round(self.new_acc, ROUND_DIGITS),
            "all_acc": round(self.all_acc, ROUND_DIGITS),
            "num_old": self.num_old,
            "num_new": self.num_new,
            "n_old": self.n_old,
            "n_new": self.n_new,
            "confusion": self.confusion.astype(int).tolist(),
            "head_norms": [round(float(v), 6) for v in self.head_norms],
            "mapping": {str(k): v for k, v in sorted(self.mapping.items())},
            "step_metrics": {k: rounded_metric(v) for k, v in self.step_metrics.items()},
        }


def confusion_matrix(preds, labels, num_classes: int) -> np.ndarray:
    """Entry (i, j) counts samples of true class i predicted as j."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ValidationError(f"{preds.shape} predictions for {labels.shape} labels")
    for name, values in (("prediction", preds), ("label", labels)):
        if values.size and (values.min() < 0 or values.max() >= num_classes):
            raise ValidationError(f"{name} ids must lie in [0, {num_classes})")
    matrix = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(matrix, (labels, preds), 1)
    return matrix


def _features(m: ModelBundle, x: np.ndarray) -> Tensor:
    return m.backbone.forward(Tensor(x))


def _argmax(head: Head, z: Tensor) -> np.ndarray:
    return np.argmax(head.logits(z).data, axis=1)


def _cluster_predictions(m: ModelBundle, z: Tensor) -> np.ndarray:
    """Cluster ids of the current step: novel head, or the joint head's newest block."""
    if m.novel_head is not None:
        return _argmax(m.novel_head, z)
    block = m.joint_head.logits(z).data[:, m.num_old:m.num_all]
    return np.argmax(block, axis=1)


def _inverse(mapping: Dict[int, int]) -> Dict[int, int]:
    return {cls: cluster for cluster, cls in mapping.items()}


def reassign_labels(labels: np.ndarray, offset: int, mapping: Dict[int, int]) -> np.ndarray:
    """Global true ids of one block -> joint-head columns, through a cluster->class mapping."""
    inverse = _inverse(mapping)
    local = labels - offset
    return offset + np.array([inverse.get(int(g), int(g)) for g in local], dtype=np.int64)


def _joint_targets(m: ModelBundle, labels: np.ndarray, mappings: Sequence[Optional[Dict[int, int]]]) -> np.ndarray:
    """Relabel every discovered-class sample into the joint column its step's mapping assigns."""
    targets = labels.astype(np.int64).copy()
    for step, (offset, size) in enumerate(zip(m.step_offsets(), m.step_sizes)):
        mapping = mappings[step] if step < len(mappings) else None
        if mapping is None:
            continue
        in_block = (labels >= offset) & (labels < offset + size)
        if in_block.any():
            targets[in_block] = reassign_labels(labels[in_block], offset, mapping)
    return targets


def _check_ranges(m: ModelBundle, test_old: LabeledSet, test_new: LabeledSet) -> None:
    if m.num_new == 0:
        raise ValidationError("model has no discovered classes to evaluate")
    if len(test_old) and (test_old.y.min() < 0 or test_old.y.max() >= m.num_old):
        raise ValidationError(f"old test labels must lie in [0, {m.num_old})")
    if len(test_new) == 0:
        raise ValidationError("new-class test set is empty")
    if test_new.y.min() < m.num_old or test_new.y.max() >= m.num_all:
        raise ValidationError(f"new test labels must lie in [{m.num_old}, {m.num_all})")


def _fraction(hits: np.ndarray) -> float:
    return float(hits.mean()) if hits.size else 0.0


def eval_class_incd(
    m: ModelBundle,
    test_old: LabeledSet,
    test_new: LabeledSet,
    frozen_mappings: Sequence[Optional[Dict[int, int]]] = (),
) -> EvalReport:
    """
    Task-agnostic evaluation with the joint head.

    frozen_mappings holds the cluster->class mapping fixed at the end of every
    earlier step; old-set samples from those steps are scored through them.
    """
    _check_ranges(m, test_old, test_new)
    offset = m.num_old

    z_new = _features(m, test_new.x)
    clusters = _cluster_predictions(m, z_new)
    mapping, _ = optimal_label_mapping(clusters, test_new.y - offset, m.num_new, m.num_new)
    new_targets = reassign_labels(test_new.y, offset, mapping)
    new_preds = _argmax(m.joint_head, z_new)
    new_hits = new_preds == new_targets

    if len(test_old):
        old_targets = _joint_targets(m, test_old.y, list(frozen_mappings))
        old_preds = _argmax(m.joint_head, _features(m, test_old.x))
    else:
        old_targets = old_preds = np.zeros(0, dtype=np.int64)
    old_hits = old_preds == old_targets

    confusion = confusion_matrix(
        np.concatenate([old_preds, new_preds]),
        np.concatenate([old_targets, new_targets]),
        m.num_all,
    )
    all_acc = float(old_hits.sum() + new_hits.sum()) / (len(old_hits) + len(new_hits))
    report = EvalReport(
        protocol=CLASS_INCD,
        old_acc=_fraction(old_hits),
        new_acc=_fraction(new_hits),
        all_acc=all_acc,
        num_old=m.num_old,
        num_new=m.num_new,
        n_old=len(old_hits),
        n_new=len(new_hits),
        confusion=confusion,
        head_norms=head_weight_norms(m.joint_head).tolist(),
        mapping=mapping,
    )
    logger.info("class-incd old=%.4f new=%.4f all=%.4f", report.old_acc, report.new_acc, report.all_acc)
    return report


def eval_original_rt(
    m: ModelBundle,
    test_old: LabeledSet,
    test_new: LabeledSet,
    frozen_mappings: Sequence[Optional[Dict[int, int]]] = (),
) -> EvalReport:
    """
    Task-aware old/new accuracies and HA over all pooled classes.

    All_RT lets one global mapping absorb cross-task confusion, which is why
    it can report a perfect score for a predictor that swaps the two blocks.
    """
    _check_ranges(m, test_old, test_new)
    if m.novel_head is None:
        raise ValidationError("original-rt needs a novel head")
    offset = m.num_old

    z_old = _features(m, test_old.x) if len(test_old) else None
    z_new = _features(m, test_new.x)

    if z_old is not None:
        old_targets = _joint_targets(m, test_old.y, list(frozen_mappings))
        old_hits = _argmax(m.old_head, z_old) == old_targets
    else:
        old_hits = np.zeros(0, dtype=bool)

    clusters = _argmax(m.novel_head, z_new)
    mapping, new_rt = optimal_label_mapping(clusters, test_new.y - offset, m.num_new, m.num_new)

    concat = concat_heads(m.old_head, m.novel_head)
    pooled = [(z_new, test_new.y)] if z_old is None else [(z_old, test_old.y), (z_new, test_new.y)]
    preds = np.concatenate([_argmax(concat, z) for z, _ in pooled])
    labels = np.concatenate([y for _, y in pooled])
    all_mapping, all_rt = optimal_label_mapping(preds, labels, m.num_all, m.num_all)
    mapped = np.array([all_mapping.get(int(p), int(p)) for p in preds], dtype=np.int64)

    report = EvalReport(
        protocol=ORIGINAL_RT,
        old_acc=_fraction(old_hits),
        new_acc=new_rt,
        all_acc=all_rt,
        num_old=m.num_old,
        num_new=m.num_new,
        n_old=len(old_hits),
        n_new=len(test_new),
        confusion=confusion_matrix(mapped, labels, m.num_all),
        head_norms=head_weight_norms(concat).tolist(),
        mapping=mapping,
    )
    logger.info("original-rt old=%.4f new=%.4f all=%.4f", report.old_acc, report.new_acc, report.all_acc)
    return report


def evaluate(m: ModelBundle, test_old: LabeledSet, test_new: LabeledSet, protocol: str = CLASS_INCD,
             frozen_mappings: Sequence[Optional[Dict[int, int]]] = ()) -> EvalReport:
    if protocol == CLASS_INCD:
        return eval_class_incd(m, test_old, test_new, frozen_mappings)
    if protocol == ORIGINAL_RT:
        return eval_original_rt(m, test_old, test_new, frozen_mappings)
    raise ValidationError(f"unknown protocol {protocol!r}; expected one of {', '.join(PROTOCOLS)}")


def step_columns(num_steps: int) -> List[str]:
    return (
        ["Old"]
        + [f"New-{k}-J" for k in range(1, num_steps + 1)]
        + [f"New-{k}-N" for k in range(1, num_steps + 1)]
        + ["All"]
    )


def evaluate_steps(
    m: ModelBundle,
    test_old: LabeledSet,
    test_new_per_step: Sequence[LabeledSet],
    frozen_mappings: Sequence[Optional[Dict[int, int]]],
) -> Dict[str, float]:
    """
    Multi-step metrics after the latest step.

    New-k-J scores the joint head on step k's classes through step k's frozen
    mapping; New-k-N scores step k's own novel head (retired heads for earlier
    steps) through the same mapping. Columns of steps not reached yet are NaN.
    """
    steps_done = len(m.step_sizes)
    if len(test_new_per_step) < steps_done or len(frozen_mappings) < steps_done:
        raise ValidationError(f"need test sets and mappings for {steps_done} steps")
    heads = list(m.retired_heads) + ([m.novel_head] if m.novel_head is not None else [])

    z_old = _features(m, test_old.x)
    old_hits = _argmax(m.joint_head, z_old) == test_old.y
    row: Dict[str, float] = {"Old": _fraction(old_hits)}
    pooled_hits = [old_hits]

    for step in range(steps_done):
        offset = m.step_offsets()[step]
        mapping = frozen_mappings[step] or {}
        tests = test_new_per_step[step]
        z = _features(m, tests.x)
        targets = reassign_labels(tests.y, offset, mapping)
        joint_hits = _argmax(m.joint_head, z) == targets
        row[f"New-{step + 1}-J"] = _fraction(joint_hits)
        pooled_hits.append(joint_hits)

        if step < len(heads):
            clusters = _argmax(heads[step], z)
            assigned = np.array([mapping.get(int(c), -1) for c in clusters])
            row[f"New-{step + 1}-N"] = _fraction(assigned == tests.y - offset)
        else:
            # joint-only runs have no novel head; the joint block stands in
            block = m.joint_head.logits(z).data[:, offset:offset + m.step_sizes[step]]
            assigned = np.array([mapping.get(int(c), -1) for c in np.argmax(block, axis=1)])
            row[f"New-{step + 1}-N"] = _fraction(assigned == tests.y - offset)

    hits = np.concatenate(pooled_hits)
    row["All"] = _fraction(hits)
    for column in step_columns(len(test_new_per_step)):
        row.setdefault(column, float("nan"))
    return {column: row[column] for column in step_columns(len(test_new_per_step))}
