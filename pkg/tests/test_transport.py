import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ganlab.errors import InvalidInputError, TooLargeError
from ganlab.transport import w1_bruteforce, w1_exact

coords = st.floats(-100, 100, allow_nan=False)


def cloud(n):
    return hnp.arrays(float, (n, 2), elements=coords)


def test_identical_sets_are_zero():
    a = np.random.default_rng(0).normal(size=(50, 2))
    assert w1_exact(a, a) == 0.0


def test_translation():
    a = np.random.default_rng(1).normal(size=(64, 2))
    assert w1_exact(a, a + [1.0, 0.0]) == pytest.approx(1.0, abs=1e-9)


def test_two_point_example():
    a = [(0.0, 0.0), (1.0, 0.0)]
    b = [(0.0, 1.0), (1.0, 1.0)]
    assert w1_exact(a, b) == 1.0
    assert w1_bruteforce(a, b) == 1.0


def test_single_pair():
    assert w1_bruteforce([(0.0, 0.0)], [(3.0, 4.0)]) == 5.0
    assert w1_exact([(0.0, 0.0)], [(3.0, 4.0)]) == 5.0


def test_bruteforce_size_guard():
    a = np.zeros((9, 2))
    with pytest.raises(TooLargeError):
        w1_bruteforce(a, a)


@pytest.mark.parametrize(
    "a,b",
    [
        (np.zeros((3, 2)), np.zeros((4, 2))),
        (np.zeros((0, 2)), np.zeros((0, 2))),
        ([[np.nan, 0.0]], [[0.0, 0.0]]),
        ([1.0, 2.0], [1.0, 2.0]),
    ],
)
def test_invalid_inputs(a, b):
    with pytest.raises(InvalidInputError):
        w1_exact(a, b)


def test_oracle_equivalence_random_instances():
    rng = np.random.default_rng(2)
    for _ in range(200):
        n = int(rng.integers(2, 9))
        a, b = rng.normal(size=(n, 2)), rng.normal(size=(n, 2)) * 2 + 0.5
        assert abs(w1_exact(a, b) - w1_bruteforce(a, b)) <= 1e-12


def test_random_n6_matches_oracle():
    rng = np.random.default_rng(3)
    a, b = rng.uniform(size=(6, 2)), rng.uniform(size=(6, 2))
    assert w1_exact(a, b) == pytest.approx(w1_bruteforce(a, b), abs=1e-12)


@settings(max_examples=100)
@given(st.integers(1, 6).flatmap(lambda n: st.tuples(cloud(n), cloud(n))))
def test_symmetry(pair):
    a, b = pair
    assert w1_exact(a, b) == w1_exact(b, a)


@settings(max_examples=100)
@given(st.integers(1, 5).flatmap(lambda n: st.tuples(cloud(n), cloud(n), cloud(n))))
def test_triangle_inequality(triple):
    a, b, c = triple
    assert w1_exact(a, c) <= w1_exact(a, b) + w1_exact(b, c) + 1e-9


@settings(max_examples=100)
@given(st.integers(1, 6).flatmap(lambda n: st.tuples(cloud(n), cloud(n))), st.floats(-10, 10))
def test_scale_equivariance(pair, c):
    a, b = pair
    assert w1_exact(c * a, c * b) == pytest.approx(abs(c) * w1_exact(a, b), abs=1e-9, rel=1e-12)


def test_w1_bounded_by_identity_coupling():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=(40, 2)), rng.normal(size=(40, 2))
    assert w1_exact(a, b) <= np.mean(np.linalg.norm(a - b, axis=1)) + 1e-15


def test_n512_runtime():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=(512, 2)), rng.normal(size=(512, 2)) + 1
    start = time.perf_counter()
    value = w1_exact(a, b)
    assert time.perf_counter() - start < 2.0
    assert 0.5 < value < 2.0
