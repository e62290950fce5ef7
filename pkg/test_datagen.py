from itertools import combinations

import numpy as np
import pytest

from src.autodiff import Tensor
from src.datagen import (
    PROFILES,
    LabeledSet,
    TaskSpec,
    class_means,
    correlated_view,
    export_csv,
    generate,
    ingest_csv,
    parent_classes,
)
from src.errors import ConfigurationError, ParameterError, ParseError


def nearest_mean_accuracy(samples: LabeledSet, means: np.ndarray) -> float:
    distances = ((samples.x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return float((np.argmin(distances, axis=1) == samples.y).mean())


def test_same_seed_same_splits():
    a = generate(TaskSpec(seed=3))
    b = generate(TaskSpec(seed=3))
    assert a.digests() == b.digests()
    assert a.digest() == b.digest()
    assert generate(TaskSpec(seed=4)).digest() != a.digest()


def test_label_sets_are_disjoint_and_ids_unique():
    split = generate(TaskSpec.from_profile("p5-3-3", train_per_class=20, test_per_class=5))
    old = set(split.labeled.y.tolist())
    seen = [old]
    for step, u in enumerate(split.unlabeled):
        classes = set(u.reveal().y.tolist())
        assert classes == set(split.spec.step_classes(step))
        assert all(classes.isdisjoint(s) for s in seen)
        seen.append(classes)
    ids = np.concatenate(
        [split.labeled.ids, split.test_old.ids]
        + [u.ids for u in split.unlabeled]
        + [t.ids for t in split.test_new]
    )
    assert len(np.unique(ids)) == len(ids)


def test_separable_limit():
    split = generate(TaskSpec(noise=1e-9, train_per_class=20, test_per_class=20))
    for part in [split.labeled, split.test_old, *split.test_new, *(u.reveal() for u in split.unlabeled)]:
        assert nearest_mean_accuracy(part, split.class_means) == 1.0


def test_default_task_is_separable_but_noisy():
    split = generate(TaskSpec())
    acc = nearest_mean_accuracy(LabeledSet.concat([split.test_old, *split.test_new]), split.class_means)
    assert acc >= 0.95


def test_class_means_are_spread_out():
    spec = TaskSpec()
    means = generate(spec).class_means
    assert np.allclose(np.linalg.norm(means, axis=1), spec.radius)
    for i, j in combinations(range(spec.num_classes), 2):
        assert np.linalg.norm(means[i] - means[j]) >= 0.5 * spec.radius


def test_new_classes_lean_on_their_parents():
    spec = TaskSpec()
    means = class_means(spec)
    old = means[:spec.num_old]
    primaries = []
    for c in range(spec.num_old, spec.num_classes):
        primary, secondary = parent_classes(spec, c)
        closeness = old @ means[c]
        assert np.argmax(closeness) == primary
        assert closeness[primary] == pytest.approx(2 / 3 * spec.radius ** 2)
        assert closeness[secondary] == pytest.approx(spec.radius ** 2 / 3)
        primaries.append(primary)
    assert sorted(primaries) == list(range(spec.num_old))


def test_orthogonal_placement_keeps_classes_unrelated():
    means = class_means(TaskSpec(placement="orthogonal"))
    np.testing.assert_allclose(means @ means.T, 25.0 * np.eye(10), atol=1e-9)


def test_too_many_classes_for_the_dimension():
    with pytest.raises(ConfigurationError):
        TaskSpec(input_dim=2, num_old=3, new_per_step=[2])


@pytest.mark.parametrize("overrides", [
    {"noise": 0.0}, {"num_old": 0}, {"new_per_step": []}, {"train_per_class": 0}, {"placement": "grid"},
])
def test_invalid_task_fields(overrides):
    with pytest.raises(ConfigurationError):
        TaskSpec(**overrides)


def test_profiles_and_from_dict():
    spec = TaskSpec.from_profile("p80-10-10")
    assert (spec.input_dim, spec.num_old, spec.new_per_step) == PROFILES["p80-10-10"][:2] + ([10, 10],)
    assert spec.step_offset(1) == 90
    assert TaskSpec.from_dict({"profile": "p5-5"}, seed=9).seed == 9
    with pytest.raises(ConfigurationError):
        TaskSpec.from_profile("p1-1")
    with pytest.raises(ConfigurationError):
        TaskSpec.from_dict({"colour": "red"})


def test_correlated_view():
    x = np.random.default_rng(0).normal(size=16)
    np.testing.assert_array_equal(correlated_view(x, 0.0, np.random.default_rng(1)), x)
    a = correlated_view(x, 0.5, np.random.default_rng(1))
    b = correlated_view(x, 0.5, np.random.default_rng(2))
    assert not np.array_equal(a, b)
    assert isinstance(correlated_view(Tensor(x), 0.5, np.random.default_rng(1)), Tensor)
    with pytest.raises(ParameterError):
        correlated_view(x, -0.1, np.random.default_rng(0))


def test_view_distance_matches_jitter_scale():
    sigma, dim = 0.5, 16
    x = np.zeros((10000, dim))
    views = correlated_view(x, sigma, np.random.default_rng(3))
    assert ((views - x) ** 2).sum(axis=1).mean() == pytest.approx(dim * sigma ** 2, rel=0.05)


def test_csv_round_trip(tmp_path):
    split = generate(TaskSpec(train_per_class=4, test_per_class=2))
    path = export_csv(split.test_old, tmp_path / "old.csv")
    loaded = ingest_csv(path, input_dim=16, label_range=range(0, 5))
    np.testing.assert_array_equal(loaded.x, split.test_old.x)
    np.testing.assert_array_equal(loaded.y, split.test_old.y)


def test_csv_keeps_every_bit_of_seventeen_digit_floats(tmp_path):
    x = np.array([[-0.664536603857972, 0.1 + 0.2], [1 / 3, -2.5e-300]])
    x = np.vstack([x, np.random.default_rng(7).normal(size=(200, 2))])
    samples = LabeledSet(x=x, y=np.zeros(len(x), dtype=np.int64), ids=np.arange(len(x)))
    loaded = ingest_csv(export_csv(samples, tmp_path / "bits.csv"), input_dim=2)
    assert loaded.x.tobytes() == x.tobytes()


def test_csv_short_row_names_the_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# f0,f1,label\n1.0,2.0,0\n3.0,1\n")
    with pytest.raises(ParseError) as excinfo:
        ingest_csv(path, input_dim=2)
    assert excinfo.value.row == 3
    assert "row 3" in str(excinfo.value)


def test_csv_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("# f0,f1,label\n")
    with pytest.raises(ParseError):
        ingest_csv(path)


@pytest.mark.parametrize("body, row", [("1.0,x,0\n", 1), ("1.0,2.0,0.5\n", 1), ("1.0,2.0,0\n1.0,2.0,7\n", 2)])
def test_csv_field_errors(tmp_path, body, row):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(ParseError) as excinfo:
        ingest_csv(path, label_range=range(0, 5))
    assert excinfo.value.row == row
