import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ddsensor import tensor_ops as to

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def sym(rng, d):
    a = rng.standard_normal((d, d))
    return a + a.T


def test_kron_identity_case():
    M = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(to.kron(np.eye(1), M), M)


def test_kron_vectors():
    assert np.array_equal(to.kron([1, 2], [3, 4]), [3, 4, 6, 8])


def test_kron_matches_entrywise_blocks(rng):
    a, b = rng.standard_normal((3, 2)), rng.standard_normal((2, 2))
    K = to.kron(a, b)
    for i in range(3):
        for j in range(2):
            assert np.array_equal(K[2 * i:2 * i + 2, 2 * j:2 * j + 2], a[i, j] * b)


def test_vec_column_major():
    assert np.array_equal(to.vec([[1, 3], [2, 4]]), [1, 2, 3, 4])
    assert np.array_equal(to.vec(np.zeros((2, 2))), np.zeros(4))


@given(arrays(float, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=finite))
def test_unvec_inverts_vec(M):
    assert np.array_equal(to.unvec(to.vec(M), *M.shape), M)


def test_unvec_rejects_wrong_length():
    with pytest.raises(ValueError):
        to.unvec(np.ones(5), 2, 2)


def test_vech_vecs_two_by_two():
    a, b, d = 1.5, -2.0, 3.0
    W = np.array([[a, b], [b, d]])
    assert np.array_equal(to.vech(W), [a, b, d])
    assert np.array_equal(to.vecs(W), [a, 2 * b, d])


def test_half_index_order_is_lower_column_major():
    rows, cols = to.half_indices(3)
    assert list(zip(rows.tolist(), cols.tolist())) == [(0, 0), (1, 0), (2, 0), (1, 1), (2, 1), (2, 2)]


@given(st.integers(1, 7), st.integers(0, 2**31 - 1))
def test_unvecs_and_unvech_invert(d, seed):
    W = sym(np.random.default_rng(seed), d)
    assert np.allclose(to.unvecs(to.vecs(W)), W, rtol=0, atol=1e-12)
    assert np.array_equal(to.unvech(to.vech(W)), W)


def test_vech_rejects_asymmetric():
    with pytest.raises(ValueError):
        to.vech(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_tri_root():
    assert to.tri_root(10) == 4
    with pytest.raises(ValueError):
        to.tri_root(7)


def test_op_H_examples():
    z = np.array([1.0, 2.0])
    assert np.array_equal(to.op_H(to.kron(z, z)), [1, 4, 4])
    assert np.array_equal(to.op_H(to.vec(np.eye(2))), [1, 0, 1])


def test_op_H_rejects_non_square_length():
    with pytest.raises(ValueError):
        to.op_H(np.ones(5))


def test_quadratic_form_identity_100_draws(rng):
    for _ in range(100):
        d = int(rng.integers(1, 9))
        z = rng.standard_normal(d)
        W = sym(rng, d)
        lhs = to.op_H(to.kron(z, z)) @ to.vech(W)
        rhs = z @ W @ z
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs), np.abs(W).sum() * (z @ z))


@given(arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 4)), elements=st.floats(-10, 10)))
def test_quadratic_features_match_op_H(Z):
    F = to.quadratic_features(Z)
    for j in range(Z.shape[1]):
        assert np.allclose(F[:, j], to.op_H(to.kron(Z[:, j], Z[:, j])), rtol=1e-14, atol=1e-12)


def test_duplication_and_elimination(rng):
    W = sym(rng, 4)
    assert np.allclose(to.duplication_matrix(4) @ to.vech(W), to.vec(W))
    assert np.array_equal(to.elimination_matrix(4) @ to.vec(W), to.vech(W))


def test_pinv_diagonal_and_identity():
    r = to.pinv_tol(np.diag([2.0, 0.0]))
    assert r.numerical_rank == 1
    assert np.array_equal(r.pseudoinverse, np.diag([0.5, 0.0]))
    r = to.pinv_tol(np.eye(3))
    assert r.numerical_rank == 3
    assert np.allclose(r.pseudoinverse, np.eye(3), rtol=0, atol=1e-15)


def test_pinv_penrose_conditions(rng):
    for _ in range(20):
        m, n, k = rng.integers(2, 9, size=3)
        M = rng.standard_normal((m, k)) @ rng.standard_normal((k, n))
        P = to.pinv_tol(M).pseudoinverse
        scale = np.linalg.norm(M)
        assert np.linalg.norm(M @ P @ M - M) <= 1e-10 * scale
        assert np.linalg.norm(P @ M @ P - P) <= 1e-9 * np.linalg.norm(P)
        assert np.linalg.norm((M @ P) - (M @ P).T) <= 1e-9
        assert np.linalg.norm((P @ M) - (P @ M).T) <= 1e-9


def test_pinv_apply_matches_dense(rng):
    M = rng.standard_normal((6, 4))
    r = to.pinv_tol(M)
    b = rng.standard_normal(6)
    assert np.allclose(r.apply(b), r.pseudoinverse @ b)
    assert np.allclose(r.pseudoinverse, np.linalg.pinv(M))


def test_tolerance_policies():
    M = np.diag([1.0, 1e-3, 1e-9])
    assert to.pinv_tol(M).numerical_rank == 3
    assert to.pinv_tol(M, rtol=1e-6).numerical_rank == 2
    assert to.pinv_tol(M, atol=1e-2).numerical_rank == 1
    # the larger threshold wins when both are given
    assert to.pinv_tol(M, rtol=1e-6, atol=1e-2).tolerance_used == 1e-2


def test_pinv_rejects_empty():
    with pytest.raises(ValueError):
        to.pinv_tol(np.zeros((0, 3)))


def test_numerical_rank_of_zero_matrix():
    rank, s, tol = to.numerical_rank(np.zeros((3, 3)))
    assert rank == 0 and tol == 0.0


@settings(max_examples=30)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_symmetrize_is_idempotent(d, seed):
    A = np.random.default_rng(seed).standard_normal((d, d))
    S = to.symmetrize(A)
    assert np.array_equal(S, S.T)
    assert np.array_equal(to.symmetrize(S), S)
