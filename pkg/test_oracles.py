import numpy as np
import pytest

from oracles import brute_assignment, brute_pair_label, brute_topk_sets, finite_difference_gradient


def test_brute_assignment_identity():
    best, optimal = brute_assignment(np.ones((3, 3)) - np.eye(3))
    assert best == 0.0
    assert optimal == [(0, 1, 2)]


def test_brute_assignment_reports_every_tie():
    best, optimal = brute_assignment(np.zeros((3, 3)))
    assert best == 0.0
    assert len(optimal) == 6
    assert optimal[0] == (0, 1, 2)


def test_brute_assignment_worked_example():
    best, optimal = brute_assignment([[4, 1, 3], [2, 0, 5], [3, 2, 2]])
    assert best == 5.0
    assert optimal == [(1, 0, 2)]


def test_brute_assignment_refuses_large_or_ragged_input():
    with pytest.raises(ValueError):
        brute_assignment(np.zeros((7, 7)))
    with pytest.raises(ValueError):
        brute_assignment(np.zeros((2, 3)))


def test_topk_sets():
    assert brute_topk_sets([3, 2, 1, 0], 2) == {0, 1}
    assert brute_topk_sets([1, 1, 1, 1], 2) == {0, 1}
    with pytest.raises(ValueError):
        brute_topk_sets([1, 2], 3)


def test_pair_label():
    assert brute_pair_label([5, 4, 0], [4, 5, 0], 2) == 1
    assert brute_pair_label([3, 2, 1, 0], [0, 1, 2, 3], 2) == 0


def test_finite_difference_of_sum_of_squares():
    grad = finite_difference_gradient(lambda v: float((v ** 2).sum()), [1.0, 2.0])
    np.testing.assert_allclose(grad, [2.0, 4.0], rtol=0, atol=1e-8)


def test_finite_difference_step_sensitivity():
    f = lambda v: float(np.sin(v).sum() + (v ** 3).sum())
    x = np.array([0.3, -1.2, 2.0])
    coarse = finite_difference_gradient(f, x, step=1e-5)
    fine = finite_difference_gradient(f, x, step=1e-6)
    np.testing.assert_allclose(coarse, fine, rtol=0, atol=1e-6)


def test_finite_difference_leaves_input_alone():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    finite_difference_gradient(lambda v: float(v.sum()), x)
    np.testing.assert_array_equal(x, [[1.0, 2.0], [3.0, 4.0]])
    with pytest.raises(ValueError):
        finite_difference_gradient(lambda v: 0.0, x, step=0.0)
