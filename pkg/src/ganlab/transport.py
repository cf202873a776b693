"""Empirical Wasserstein-1 distance between equal-size point clouds."""

import itertools

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .errors import InvalidInputError, TooLargeError

BRUTEFORCE_MAX = 8


def as_samples(points) -> np.ndarray:
    """Validate a sample set: a non-empty ``(n, d)`` array of finite coordinates."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise InvalidInputError(f"sample set must be a non-empty (n, d) array, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("sample set has non-finite coordinates")
    return pts


def _pair(a, b):
    a, b = as_samples(a), as_samples(b)
    if a.shape != b.shape:
        raise InvalidInputError(f"sample sets must have equal size and dimension, got {a.shape} and {b.shape}")
    return a, b


def cost_matrix(a, b) -> np.ndarray:
    a, b = _pair(a, b)
    return cdist(a, b)


def w1_exact(a, b) -> float:
    """Mean Euclidean cost of the optimal one-to-one matching."""
    cost = cost_matrix(a, b)
    rows, cols = linear_sum_assignment(cost)
    # summing sorted costs makes the value independent of the matching order
    return float(np.sum(np.sort(cost[rows, cols]))) / cost.shape[0]


def w1_bruteforce(a, b) -> float:
    """Same quantity by enumerating every permutation (``n <= 8``)."""
    a, b = _pair(a, b)
    n = a.shape[0]
    if n > BRUTEFORCE_MAX:
        raise TooLargeError(f"brute force handles n <= {BRUTEFORCE_MAX}, got {n}")
    cost = cdist(a, b)
    perms = np.array(list(itertools.permutations(range(n))))
    totals = np.sort(cost[np.arange(n), perms], axis=1).sum(axis=1)
    return float(totals.min()) / n
