import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import random_graph, simplex_grid_best
from tensorfs.graph import (check_graph, graph_objective_terms, knn_graph, laplacian,
                           pairwise_penalty, project_columns, project_simplex_zero,
                           similarity_target, update_similarity)


def test_knn_equidistant():
    X = np.eye(3)
    S = knn_graph(X, 2)
    for i in range(3):
        np.testing.assert_allclose(np.delete(S[:, i], i), [0.5, 0.5])
    check_graph(S)


def test_knn_top1():
    X = np.array([[0.0, 1, 5, 7]])
    S = knn_graph(X, 1)
    np.testing.assert_array_equal(S.sum(axis=0), 1)
    assert S[1, 0] == 1 and S[0, 1] == 1 and S[3, 2] == 1 and S[2, 3] == 1


def test_knn_line_example():
    S = knn_graph(np.array([[0.0, 1, 2, 10]]), 2)
    # squared distances from 0: 1, 4, then 100 as the (k+1)-th
    np.testing.assert_allclose(S[:, 0], [0, 99 / 195, 96 / 195, 0], rtol=1e-14)
    assert S[1, 0] > S[2, 0]


def test_knn_ties_lower_index():
    S = knn_graph(np.array([[0.0, 1, 1, 1]]), 1)
    assert S[1, 0] == 1


def test_knn_bad_k():
    with pytest.raises(ValueError):
        knn_graph(np.eye(3), 3)


def test_laplacian_examples():
    L, D = laplacian(np.array([[0.0, 1], [1, 0]]))
    np.testing.assert_array_equal(D, np.eye(2))
    np.testing.assert_array_equal(L, [[1, -1], [-1, 1]])
    assert not laplacian(np.zeros((3, 3))).L.any()


def test_penalty_examples():
    np.testing.assert_array_equal(pairwise_penalty(np.ones((2, 3)), np.ones((3, 2))), 0)
    F = pairwise_penalty(np.eye(2), np.zeros((2, 1)))
    assert F[0, 1] == 2


def test_projection_examples():
    np.testing.assert_allclose(project_simplex_zero([0.2, 0.3, 0.1], 0), [0, 0.6, 0.4])
    np.testing.assert_allclose(project_simplex_zero([-5, -5, -5], 0), [0, 0.5, 0.5])
    q = np.array([0.0, 0.25, 0.75])
    np.testing.assert_allclose(project_simplex_zero(q, 0), q, atol=1e-15)


def test_feasible_target_is_fixed_point():
    S = random_graph(np.random.default_rng(0), 4)
    np.testing.assert_allclose(project_columns(S), S, atol=1e-15)
    # equal graphs, full beliefs and zero penalty make the target the graph itself
    b = np.array([[0, 1.0], [1.0, 0]])
    out = update_similarity(0, [S, S], b, np.zeros((4, 4)))
    np.testing.assert_allclose(out, S, atol=1e-15)


def test_update_concentrates_on_min_penalty():
    S = [random_graph(np.random.default_rng(1), 3)] * 2
    F = np.array([[0.0, 5, 9], [5, 0, 1], [9, 1, 0]]) * 10
    out = update_similarity(0, S, np.zeros((2, 2)), F)
    np.testing.assert_array_equal(out, [[0, 0, 0], [1, 0, 1], [0, 1, 0]])
    for i in range(3):
        q = similarity_target(0, S, np.zeros((2, 2)), F)[:, i]
        best, arg = simplex_grid_best(q, i)
        np.testing.assert_allclose(out[:, i], arg, atol=1e-3)


def test_graph_terms_examples():
    rng = np.random.default_rng(2)
    S = random_graph(rng, 4)
    smooth, cons = graph_objective_terms([S, S], [np.ones((2, 4))] * 2, np.ones((4, 2)),
                                         np.array([[0, 1.0], [1.0, 0]]))
    assert abs(smooth) < 1e-12 and cons == 0


def test_trace_identity():
    rng = np.random.default_rng(3)
    S = random_graph(rng, 6)
    H = rng.random((6, 2))
    Sb = 0.5 * (S + S.T)
    ref = 0.5 * sum(Sb[i, j] * np.sum((H[i] - H[j]) ** 2) for i in range(6) for j in range(6))
    np.testing.assert_allclose(np.trace(H.T @ laplacian(S).L @ H), ref, rtol=1e-10)


@given(st.integers(0, 2**31), st.integers(2, 9))
def test_laplacian_psd_null(seed, n):
    S = random_graph(np.random.default_rng(seed), n)
    L = laplacian(S).L
    np.testing.assert_allclose(L, L.T, atol=0)
    assert abs(L.sum()) < 1e-12
    assert np.linalg.eigvalsh(L).min() >= -1e-10


@given(st.integers(0, 2**31), st.integers(2, 8), st.integers(1, 7))
def test_knn_is_valid_graph(seed, n, k):
    k = min(k, n - 1)
    X = np.random.default_rng(seed).random((3, n))
    check_graph(knn_graph(X, k))


@given(st.integers(0, 2**31), st.integers(2, 12))
def test_projection_kkt(seed, n):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=n) * 3
    z = int(rng.integers(n))
    s = project_simplex_zero(q, z)
    assert s[z] == 0 and s.min() >= 0 and abs(s.sum() - 1) < 1e-12
    pos = np.flatnonzero(s > 0)
    theta = float(np.mean(q[pos] - s[pos]))
    rest = np.delete(np.arange(n), z)
    np.testing.assert_allclose(s[rest], np.maximum(q[rest] - theta, 0), atol=1e-12)


@given(st.integers(0, 2**31))
def test_penalty_symmetric(seed):
    rng = np.random.default_rng(seed)
    F = pairwise_penalty(rng.random((3, 5)), rng.random((5, 2)))
    assert np.abs(F - F.T).max() <= 1e-12 and np.all(np.diag(F) == 0) and F.min() >= 0


@given(st.integers(0, 2**31), st.integers(2, 4))
def test_update_similarity_does_not_increase_column_objective(seed, V):
    rng = np.random.default_rng(seed)
    n = 5
    Ss = [random_graph(rng, n) for _ in range(V)]
    b = rng.random((V, V))
    np.fill_diagonal(b, 0)
    b /= b.sum(axis=1, keepdims=True) * 1.5
    F = rng.random((n, n))
    F = F + F.T
    np.fill_diagonal(F, 0)
    Q = similarity_target(0, Ss, b, F)
    new = update_similarity(0, Ss, b, F)
    check_graph(new)
    assert np.all(((new - Q) ** 2).sum(axis=0) <= ((Ss[0] - Q) ** 2).sum(axis=0) + 1e-12)
