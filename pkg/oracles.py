"""
Brute-force references used by the test suite

- brute_assignment: exhaustive search over every permutation (n <= 6)
- brute_topk_sets: top-k index sets by a full stable sort
- finite_difference_gradient: central differences of a scalar function

Nothing here imports from src/, so a bug in the code under test cannot leak
into the reference it is checked against.
"""

from itertools import permutations
from typing import Callable, FrozenSet, List, Tuple

import numpy as np

MAX_BRUTE_SIZE = 6


def brute_assignment(cost) -> Tuple[float, List[Tuple[int, ...]]]:
    """
    Minimum total cost and every permutation reaching it.

    perm[i] is the column assigned to row i; the list is in lexicographic
    order, so its first entry is the lexicographically smallest optimum.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {cost.shape}")
    n = cost.shape[0]
    if n > MAX_BRUTE_SIZE:
        raise ValueError(f"refusing to enumerate {n}! permutations; n must be at most {MAX_BRUTE_SIZE}")
    if n == 0:
        return 0.0, [()]

    rows = np.arange(n)
    totals = {perm: float(cost[rows, list(perm)].sum()) for perm in permutations(range(n))}
    best = min(totals.values())
    tolerance = 1e-9 * max(1.0, float(np.abs(cost).max()))
    optimal = sorted(perm for perm, total in totals.items() if total <= best + tolerance)
    return best, optimal


def brute_topk_sets(z, k: int) -> FrozenSet[int]:
    """Indices of the k largest entries; equal values prefer the lower index."""
    z = np.asarray(z, dtype=np.float64)
    if not 1 <= k <= z.shape[0]:
        raise ValueError(f"k must lie in [1, {z.shape[0]}], got {k}")
    ranked = sorted(range(z.shape[0]), key=lambda i: (-z[i], i))
    return frozenset(ranked[:k])


def brute_pair_label(z_i, z_j, k: int) -> int:
    return int(brute_topk_sets(z_i, k) == brute_topk_sets(z_j, k))


def finite_difference_gradient(f: Callable[[np.ndarray], float], x, step: float = 1e-6) -> np.ndarray:
    """(f(x + h e_i) - f(x - h e_i)) / 2h for every entry of x."""
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        upper = float(f(x))
        flat[i] = original - step
        lower = float(f(x))
        flat[i] = original
        out[i] = (upper - lower) / (2 * step)
    return grad
