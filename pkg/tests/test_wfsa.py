import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparse_rrnn.wfsa import (
    PathCountError, PathRecord, WfsaOverflowError, WfsaShape, count_paths,
    enumerate_paths, extreme_path, forward_score, path_score,
)

from conftest import random_weights


def count_by_recursion(n, k):
    # partial[i]: paths sitting in state i after the tokens seen so far
    partial = [1] + [0] * k
    for _ in range(n):
        partial = [1] + [partial[i] + partial[i - 1] for i in range(1, k + 1)]
    return sum(partial[1:])


def test_shape():
    s = WfsaShape(4)
    assert list(s.states) == [0, 1, 2, 3, 4]
    assert list(s.final_states) == [1, 2, 3, 4]
    with pytest.raises(ValueError):
        WfsaShape(0)


def test_forward_zero_main_weights(rng):
    f = rng.uniform(0.1, 0.9, size=(7, 3))
    res = forward_score(f, np.zeros((7, 3)))
    assert res.total == 0.0
    np.testing.assert_array_equal(res.c[:, 0], 1.0)


def test_forward_single_transition():
    res = forward_score(np.array([[0.5]]), np.array([[3.0]]))
    assert res.c[1, 1] == 3.0
    assert res.total == 3.0


def test_forward_boundary_conditions(rng):
    f, u = random_weights(rng, 5, 3)
    c = forward_score(f, u).c
    np.testing.assert_array_equal(c[:, 0], 1.0)
    np.testing.assert_array_equal(c[0, 1:], 0.0)


def test_forward_matches_enumeration_k2_n3(rng):
    f, u = random_weights(rng, 3, 2)
    total = forward_score(f, u).total
    assert total == pytest.approx(sum(p.score for p in enumerate_paths(f, u)), rel=1e-12)


def test_forward_overflow_names_timestep():
    f = np.full((4, 1), 0.5)
    u = np.array([[1e308], [1e308], [1.0], [1.0]])
    f[:, 0] = 1e10
    with pytest.raises(WfsaOverflowError) as err:
        forward_score(f, u)
    assert err.value.timestep == 2


def test_forward_rejects_mismatched_shapes():
    with pytest.raises(ValueError):
        forward_score(np.zeros((3, 2)), np.zeros((3, 1)))


def test_enumerate_k1_n2():
    f = np.array([[0.3], [0.6]])
    u = np.array([[2.0], [5.0]])
    paths = enumerate_paths(f, u)
    assert len(paths) == count_by_recursion(2, 1) == 2
    scores = sorted(p.score for p in paths)
    assert scores == pytest.approx(sorted([2.0 * 0.6, 5.0]))


def test_enumerate_k2_n1():
    paths = enumerate_paths(np.array([[0.5, 0.5]]), np.array([[1.0, 1.0]]))
    assert [p.end_state for p in paths] == [1]


@pytest.mark.parametrize("n,k", [(0, 1), (1, 1), (3, 2), (5, 4), (6, 3), (8, 4)])
def test_path_counts(n, k):
    f, u = random_weights(np.random.default_rng(n * 10 + k), n, k)
    paths = enumerate_paths(f, u)
    assert len(paths) == count_by_recursion(n, k) == count_paths(n, k)
    assert len({(p.main, p.self_loops) for p in paths}) == len(paths)


def test_enumerate_guard():
    with pytest.raises(PathCountError):
        enumerate_paths(np.full((80, 4), 0.5), np.ones((80, 4)))


def test_enumerated_paths_are_well_formed(rng):
    f, u = random_weights(rng, 6, 3)
    for p in enumerate_paths(f, u):
        assert list(p.main) == sorted(set(p.main))
        consumed = sorted(list(p.main) + [t for loop in p.self_loops for t in loop])
        assert consumed == list(range(p.start_time, 6))
        assert p.score == path_score(p, f, u)


def test_forward_equals_path_sum_many(rng):
    for _ in range(200):
        k = int(rng.integers(1, 5))
        n = int(rng.integers(1, 7))
        f, u = random_weights(rng, n, k)
        expected = sum(p.score for p in enumerate_paths(f, u))
        assert forward_score(f, u).total == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_zero_transition_blocks_later_states(rng):
    f, u = random_weights(rng, 6, 4)
    u[:, 1] = 0.0
    c = forward_score(f, u).c
    assert np.all(c[:, 2:] == 0.0)


def test_extreme_all_positive_matches_argmax(rng):
    for _ in range(50):
        k = int(rng.integers(1, 5))
        n = int(rng.integers(1, 7))
        f, u = random_weights(rng, n, k, signed=False)
        paths = enumerate_paths(f, u)
        best, worst = extreme_path(f, u)
        assert best.score == pytest.approx(max(p.score for p in paths), rel=1e-9)
        assert worst.score == pytest.approx(min(p.score for p in paths), rel=1e-9)


def naive_max_product(f, u):
    """Max-only Viterbi: wrong once weights can be negative."""
    n, k = f.shape
    m = np.full(k + 1, -np.inf)
    m[0] = 1.0
    for t in range(n):
        new = m.copy()
        for i in range(1, k + 1):
            new[i] = max(m[i] * f[t, i - 1], m[i - 1] * u[t, i - 1])
        m = new
    return max(m[1:])


def test_extreme_negative_product_case():
    # (-5) * (-4) = 20 wins, but at t=1 a max-only DP keeps the 0.05 branch
    # into state 1 and throws the -5 away
    f = np.full((3, 2), 0.5)
    u = np.array([[0.1, 0.1], [-5.0, 0.1], [0.1, -4.0]])
    paths = enumerate_paths(f, u)
    truth = max(p.score for p in paths)
    assert truth == pytest.approx(20.0)
    best, worst = extreme_path(f, u)
    assert best.score == pytest.approx(truth, rel=1e-12)
    assert best.main == (1, 2)
    assert worst.score == pytest.approx(min(p.score for p in paths), rel=1e-12)
    assert naive_max_product(f, u) < truth


def test_extreme_single_candidate():
    best, worst = extreme_path(np.array([[0.4]]), np.array([[-2.0]]))
    assert best == worst
    assert best.main == (0,) and best.score == -2.0


def test_extreme_empty():
    assert extreme_path(np.zeros((0, 2)), np.zeros((0, 2))) == (None, None)


def test_extreme_signed_many(rng):
    for trial in range(200):
        k = int(rng.integers(1, 5))
        n = int(rng.integers(1, 7))
        f, u = random_weights(rng, n, k)
        if trial % 4 == 0:
            u = -np.abs(u) * rng.uniform(1, 5)
        paths = enumerate_paths(f, u)
        best, worst = extreme_path(f, u)
        assert best.score == pytest.approx(max(p.score for p in paths), rel=1e-9, abs=1e-12)
        assert worst.score == pytest.approx(min(p.score for p in paths), rel=1e-9, abs=1e-12)
        assert best.score == path_score(best, f, u)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 6), st.integers(0, 10**6), st.floats(0.1, 10))
def test_main_weight_scaling(k, n, seed, alpha):
    rng = np.random.default_rng(seed)
    f, u = random_weights(rng, n, k)
    base = {(p.main, p.self_loops): p for p in enumerate_paths(f, u)}
    scaled = {(p.main, p.self_loops): p for p in enumerate_paths(f, alpha * u)}
    for key, p in base.items():
        assert scaled[key].score == pytest.approx(p.score * alpha ** p.end_state, rel=1e-9, abs=1e-300)
    # the best path among those ending in the same state does not move
    for end in range(1, min(k, n) + 1):
        same = [key for key, p in base.items() if p.end_state == end]
        assert max(same, key=lambda x: base[x].score) == max(same, key=lambda x: scaled[x].score)


def test_path_record_properties():
    p = PathRecord((2, 4), ((3,), ()), 1.0)
    assert p.start_time == 2 and p.end_state == 2
