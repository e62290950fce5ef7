"""
Minimum-cost assignment and cluster-to-class label mapping.

solve() runs the O(n^3) shortest-augmenting-path form of the Hungarian
method, then walks the tight-edge graph of the final potentials to return
the lexicographically smallest optimal permutation.
"""

import logging
from collections import deque
from typing import Dict, Optional, Tuple

import numpy as np

from ..errors import ValidationError

logger = logging.getLogger(__name__)


def _validate(cost) -> np.ndarray:
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
        raise ValidationError(f"cost matrix must be square and non-empty, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValidationError("cost matrix entries must be finite")
    return c


def _potentials(c: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Optimal row->column permutation plus dual potentials u (rows), v (columns)."""
    n = c.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    owner = np.zeros(n + 1, dtype=np.int64)  # owner[j]: row (1-based) matched to column j
    way = np.zeros(n + 1, dtype=np.int64)

    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            cur = c[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            candidates = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(candidates)) + 1
            delta = candidates[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1

    perm = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        perm[owner[j] - 1] = j - 1
    return perm, u[1:], v[1:]


def _lexicographic(tight: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Smallest row->column permutation among perfect matchings of the tight graph."""
    n = perm.shape[0]
    perm = perm.copy()

    for i in range(n):
        target = int(perm[i])
        # reverse search: columns that can be emptied by shifting unfixed rows toward `target`
        parent = {target: None}
        queue = deque([target])
        while queue:
            col = queue.popleft()
            for r in range(i + 1, n):
                owned = int(perm[r])
                if tight[r, col] and owned not in parent:
                    parent[owned] = (r, col)
                    queue.append(owned)
        best = min([j for j in parent if tight[i, j]] or [target])
        if best == target:
            continue
        # row i takes `best`; each displaced row moves one column along the chain
        perm[i] = best
        col = best
        while col != target:
            r, nxt = parent[col]
            perm[r] = nxt
            col = nxt
    return perm


def solve(cost) -> np.ndarray:
    """
    Permutation perm (row i -> column perm[i]) of minimum total cost.

    Among co-optimal permutations the lexicographically smallest is returned.
    """
    c = _validate(cost)
    perm, u, v = _potentials(c)
    optimum = float(c[np.arange(c.shape[0]), perm].sum())

    tolerance = 1e-9 * max(1.0, float(np.abs(c).max()))
    tight = (c - u[:, None] - v[None, :]) <= tolerance
    ordered = _lexicographic(tight, perm)
    if float(c[np.arange(c.shape[0]), ordered].sum()) > optimum + tolerance * c.shape[0]:
        logger.warning("tight-edge reordering lost optimality; keeping the solver's permutation")
        return perm
    return ordered


def assignment_cost(cost, perm) -> float:
    c = _validate(cost)
    return float(c[np.arange(c.shape[0]), np.asarray(perm)].sum())


def optimal_label_mapping(
    preds,
    gts,
    num_clusters: Optional[int] = None,
    num_classes: Optional[int] = None,
) -> Tuple[Dict[int, int], float]:
    """
    Match-maximising bijection cluster -> class and the accuracy it achieves.

    Cluster and class counts may differ; the count matrix is then padded to
    square with zero-count dummies, and clusters matched to a dummy are left out.
    """
    preds = np.asarray(preds)
    gts = np.asarray(gts)
    if preds.shape != gts.shape or preds.ndim != 1:
        raise ValidationError(f"predictions {preds.shape} and ground truth {gts.shape} must be equal-length vectors")
    if preds.size == 0:
        raise ValidationError("cannot map labels of an empty sample set")
    if preds.min() < 0 or gts.min() < 0:
        raise ValidationError("cluster and class ids must be non-negative")

    k_pred = num_clusters if num_clusters is not None else int(preds.max()) + 1
    k_true = num_classes if num_classes is not None else int(gts.max()) + 1
    if preds.max() >= k_pred or gts.max() >= k_true:
        raise ValidationError(f"ids exceed declared counts ({k_pred} clusters, {k_true} classes)")

    size = max(k_pred, k_true)
    counts = np.zeros((size, size))
    np.add.at(counts, (preds.astype(np.int64), gts.astype(np.int64)), 1.0)

    perm = solve(-counts)
    mapping = {int(cluster): int(perm[cluster]) for cluster in range(k_pred) if perm[cluster] < k_true}
    matched = sum(counts[cluster, cls] for cluster, cls in mapping.items())
    return mapping, float(matched / preds.size)
