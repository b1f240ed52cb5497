import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import cp_loop, khatri_rao_loop, unfold_loop
from tensorfs.tensor import cp_reconstruct, fold, khatri_rao, stack_weighted, unfold

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def tensors():
    return st.tuples(st.integers(1, 4), st.integers(1, 5), st.integers(1, 3)).flatmap(
        lambda s: arrays(float, s, elements=finite))


def test_khatri_rao_example():
    A = np.array([[1.0, 2], [3, 4]])
    B = np.array([[0.0, 1], [1, 0]])
    np.testing.assert_array_equal(khatri_rao(A, B), [[0, 2], [1, 0], [0, 4], [3, 0]])


def test_khatri_rao_ones_row_and_zero():
    A = np.random.default_rng(0).normal(size=(3, 2))
    np.testing.assert_array_equal(khatri_rao(A, np.ones((1, 2))), A)
    np.testing.assert_array_equal(khatri_rao(np.zeros((2, 2)), A), 0)


def test_khatri_rao_column_mismatch():
    with pytest.raises(ValueError):
        khatri_rao(np.ones((2, 2)), np.ones((2, 3)))


def test_unfold_examples():
    Z = np.zeros((2, 2, 2))
    Z[:, :, 0] = [[1, 2], [3, 4]]
    Z[:, :, 1] = [[5, 6], [7, 8]]
    np.testing.assert_array_equal(unfold(Z, 1), [[1, 2, 5, 6], [3, 4, 7, 8]])
    np.testing.assert_array_equal(unfold(Z, 3), [[1, 3, 2, 4], [5, 7, 6, 8]])
    for m in (1, 2, 3):
        np.testing.assert_array_equal(unfold(np.full((1, 1, 1), 7.0), m), [[7.0]])


def test_cp_rank_one():
    Z = cp_reconstruct(np.array([[1.0], [2.0]]), np.ones((2, 1)), np.ones((1, 1)))
    np.testing.assert_array_equal(Z[:, :, 0], [[1, 1], [2, 2]])


def test_cp_zero_factor_and_mismatch():
    rng = np.random.default_rng(1)
    assert not cp_reconstruct(rng.random((3, 2)), np.zeros((4, 2)), rng.random((2, 2))).any()
    with pytest.raises(ValueError):
        cp_reconstruct(np.ones((2, 2)), np.ones((3, 1)), np.ones((2, 2)))


def test_cp_matches_unfolding_identity():
    rng = np.random.default_rng(2)
    A, H, P = rng.random((3, 2)), rng.random((4, 2)), rng.random((2, 2))
    Z = cp_reconstruct(A, H, P)
    np.testing.assert_allclose(unfold(Z, 1), A @ khatri_rao(P, H).T, atol=1e-12)
    np.testing.assert_allclose(unfold(Z, 2), H @ khatri_rao(P, A).T, atol=1e-12)
    np.testing.assert_allclose(unfold(Z, 3), P @ khatri_rao(H, A).T, atol=1e-12)
    np.testing.assert_allclose(Z, cp_loop(A, H, P), atol=1e-12)


def test_stack_weighted_examples():
    Zs = [np.ones((2, 3)) for _ in range(3)]
    T = stack_weighted(Zs, np.full(3, 1 / 3), 2.0)
    np.testing.assert_allclose(T, 1 / 3, rtol=1e-15)
    T = stack_weighted(Zs, np.array([1.0, 0, 0]), 4.0)
    assert not T[:, :, 1:].any()
    T = stack_weighted(Zs[:2], np.array([0.25, 0.75]), 4.0)
    np.testing.assert_allclose(T[0, 0], [0.0625, 0.5625], rtol=1e-15)


def test_stack_weighted_errors():
    with pytest.raises(ValueError):
        stack_weighted([np.ones((2, 2)), np.ones((2, 3))], np.array([0.5, 0.5]), 2.0)
    with pytest.raises(ValueError):
        stack_weighted([np.ones((2, 2))] * 2, np.array([0.5, 0.6]), 2.0)


@given(tensors(), st.sampled_from([1, 2, 3]))
def test_unfold_matches_loop_and_folds_back(Z, mode):
    M = unfold(Z, mode)
    np.testing.assert_array_equal(M, unfold_loop(Z, mode))
    np.testing.assert_array_equal(fold(M, mode, Z.shape), Z)
    assert np.isclose(np.linalg.norm(M), np.linalg.norm(Z))


@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**31))
def test_khatri_rao_column_norms(n1, n2, r, seed):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(n1, r)), rng.normal(size=(n2, r))
    K = khatri_rao(A, B)
    np.testing.assert_allclose(K, khatri_rao_loop(A, B), atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(K, axis=0),
                               np.linalg.norm(A, axis=0) * np.linalg.norm(B, axis=0), rtol=1e-10)
