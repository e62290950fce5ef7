from itertools import product

import numpy as np
import pytest

from src.assignment import optimal_label_mapping
from src.autodiff import Tensor
from src.datagen import LabeledSet, TaskSpec, generate
from src.errors import ConfigurationError, ValidationError
from src.evaluation import (
    CLASS_INCD,
    ORIGINAL_RT,
    build_reference_bundle,
    confusion_matrix,
    eval_class_incd,
    eval_original_rt,
    evaluate,
    evaluate_steps,
    step_columns,
)
from src.model import Backbone, Dense, Head, ModelBundle


def labeled(rows, labels):
    x = np.array(rows, dtype=float)
    return LabeledSet(x, np.array(labels, dtype=np.int64), np.arange(len(labels)))


def rows_head(rows):
    rows = np.array(rows, dtype=float)
    return Head(Tensor(rows, requires_grad=True), Tensor(np.zeros(rows.shape[0]), requires_grad=True))


def one_hot_bundle(novel_rows=((0, 0, 1, 0), (0, 0, 0, 1))):
    """2 old + 2 new classes over 4 features; every head reads its class's coordinate."""
    eye = np.eye(4)
    return ModelBundle(
        backbone=Backbone([Dense(Tensor(eye), Tensor(np.zeros(4)))]),
        old_head=rows_head(eye[:2]),
        joint_head=rows_head(eye),
        base_classes=2,
        novel_head=rows_head(novel_rows),
        step_sizes=[2],
    )


HAND_OLD = labeled([[1, 0, 0, 0], [1, 0, 0, 0], [0, 1, 0, 0], [1, 0, 0, 0]], [0, 0, 1, 1])
HAND_NEW = labeled([[0, 0, 1, 0], [0, 0, 1, 0], [2, 0, 0, 1], [2, 0, 0, 1]], [2, 2, 3, 3])


@pytest.fixture(scope="module")
def reference_task():
    return generate(TaskSpec.from_profile("p5-5", noise=0.01, seed=0))


# --- confusion matrix ---------------------------------------------------------

def test_confusion_examples():
    np.testing.assert_array_equal(confusion_matrix([0, 1, 2], [0, 1, 2], 3), np.eye(3))
    np.testing.assert_array_equal(confusion_matrix([1, 1], [0, 0], 2), [[0, 2], [0, 0]])


def test_confusion_rows_count_true_classes():
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 6, size=200)
    preds = rng.integers(0, 6, size=200)
    matrix = confusion_matrix(preds, labels, 6)
    np.testing.assert_array_equal(matrix.sum(axis=1), np.bincount(labels, minlength=6))
    assert matrix.sum() == 200


def test_confusion_rejects_out_of_range_ids():
    with pytest.raises(ValidationError):
        confusion_matrix([0, 3], [0, 1], 3)
    with pytest.raises(ValidationError):
        confusion_matrix([0], [0, 1], 3)


# --- class-incremental protocol -----------------------------------------------

def test_hand_simulated_class_incd_scores():
    report = eval_class_incd(one_hot_bundle(), HAND_OLD, HAND_NEW)
    assert report.old_acc == pytest.approx(0.75)
    assert report.new_acc == pytest.approx(0.5)
    assert report.all_acc == pytest.approx(0.625)
    assert report.mapping == {0: 0, 1: 1}
    np.testing.assert_array_equal(report.confusion.sum(axis=1), [2, 2, 2, 2])


def test_new_accuracy_ignores_a_joint_channel_permutation():
    straight = eval_class_incd(one_hot_bundle(), HAND_OLD, HAND_NEW)
    m = one_hot_bundle(((0, 0, 0, 1), (0, 0, 1, 0)))
    m.joint_head = rows_head(np.eye(4)[[0, 1, 3, 2]])
    swapped = eval_class_incd(m, HAND_OLD, HAND_NEW)
    assert swapped.new_acc == straight.new_acc == 0.5
    assert swapped.mapping == {0: 1, 1: 0}


def test_mapping_absorbs_relabelled_new_classes():
    relabelled = labeled(HAND_NEW.x, 5 - HAND_NEW.y)
    straight = eval_class_incd(one_hot_bundle(), HAND_OLD, HAND_NEW)
    report = eval_class_incd(one_hot_bundle(), HAND_OLD, relabelled)
    assert report.new_acc == straight.new_acc
    assert report.mapping == {0: 1, 1: 0}


def test_novel_channels_alone_move_the_targets():
    swapped = eval_class_incd(one_hot_bundle(((0, 0, 0, 1), (0, 0, 1, 0))), HAND_OLD, HAND_NEW)
    assert swapped.new_acc == 0.0


def test_old_accuracy_is_not_remapped():
    rotated = labeled([[0, 1, 0, 0], [0, 1, 0, 0], [1, 0, 0, 0], [1, 0, 0, 0]], [0, 0, 1, 1])
    assert eval_class_incd(one_hot_bundle(), rotated, HAND_NEW).old_acc == 0.0


def test_label_ranges_are_checked():
    with pytest.raises(ValidationError):
        eval_class_incd(one_hot_bundle(), HAND_OLD, labeled([[0, 0, 1, 0]], [1]))
    with pytest.raises(ValidationError):
        eval_class_incd(one_hot_bundle(), labeled([[1, 0, 0, 0]], [3]), HAND_NEW)


def test_unknown_protocol():
    with pytest.raises(ValidationError):
        evaluate(one_hot_bundle(), HAND_OLD, HAND_NEW, protocol="task-aware")


def test_oracle_reference_scores_perfectly(reference_task):
    m = build_reference_bundle(reference_task.spec, "oracle")
    for protocol in (CLASS_INCD, ORIGINAL_RT):
        report = evaluate(m, reference_task.test_old, reference_task.test_new[0], protocol)
        assert (report.old_acc, report.new_acc, report.all_acc) == (1.0, 1.0, 1.0)


def test_protocols_disagree_on_the_swap_predictor(reference_task):
    m = build_reference_bundle(reference_task.spec, "swap")
    incd = eval_class_incd(m, reference_task.test_old, reference_task.test_new[0])
    assert (incd.old_acc, incd.new_acc, incd.all_acc) == (0.0, 0.0, 0.0)
    rt = eval_original_rt(m, reference_task.test_old, reference_task.test_new[0])
    assert rt.all_acc == 1.0


def test_reference_kind_must_be_known(reference_task):
    with pytest.raises(ConfigurationError):
        build_reference_bundle(reference_task.spec, "mirror")


def test_reports_are_deterministic(reference_task):
    m = build_reference_bundle(reference_task.spec, "swap")
    a = eval_original_rt(m, reference_task.test_old, reference_task.test_new[0]).to_dict()
    b = eval_original_rt(m, reference_task.test_old, reference_task.test_new[0]).to_dict()
    assert a == b


# --- pooled assignment optimism -----------------------------------------------

def test_pooled_assignment_flatters_a_random_predictor():
    n = 10
    labels = np.array([0, 1] * (n // 2))
    expected = np.mean([
        max(hits, n - hits) / n
        for hits in ((np.array(p) == labels).sum() for p in product([0, 1], repeat=n))
    ])
    rng = np.random.default_rng(0)
    trials = [optimal_label_mapping(rng.integers(0, 2, size=n), labels, 2, 2)[1] for _ in range(1000)]
    assert np.mean(trials) >= 0.5
    assert np.mean(trials) == pytest.approx(expected, abs=0.05)


# --- multi-step columns -------------------------------------------------------

def test_step_columns():
    assert step_columns(2) == ["Old", "New-1-J", "New-2-J", "New-1-N", "New-2-N", "All"]


def test_evaluate_steps_marks_unreached_steps(reference_task):
    m = build_reference_bundle(reference_task.spec, "oracle")
    test_new = reference_task.test_new[0]
    mapping = eval_class_incd(m, reference_task.test_old, test_new).mapping
    row = evaluate_steps(m, reference_task.test_old, [test_new, test_new], [mapping, None])
    assert list(row) == step_columns(2)
    assert row["Old"] == row["New-1-J"] == row["New-1-N"] == row["All"] == 1.0
    assert np.isnan(row["New-2-J"]) and np.isnan(row["New-2-N"])


def test_report_document_writes_missing_steps_as_null(reference_task):
    m = build_reference_bundle(reference_task.spec, "oracle")
    report = eval_class_incd(m, reference_task.test_old, reference_task.test_new[0])
    report.step_metrics = {"Old": 1.0, "New-2-J": float("nan")}
    doc = report.to_dict()
    assert doc["step_metrics"] == {"Old": 1.0, "New-2-J": None}
    assert doc["protocol"] == CLASS_INCD
