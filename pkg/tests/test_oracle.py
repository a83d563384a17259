import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddsensor import oracle
from ddsensor.errors import ConfigError, UnobservableError, UnstableSystemError
from ddsensor.generators import random_stable_system
from ddsensor.lti_core import LtiSystem, Metric, SelectionIndex, simulate_states

INF = Metric("trace", None, 0.97)
FIN3 = Metric("trace", 3)


def test_ale_collapses_for_zero_A(rng):
    C = rng.standard_normal((2, 3))
    assert np.allclose(oracle.solve_discounted_ale(np.zeros((3, 3)), C), C.T @ C)


def test_ale_scalar_geometric_series():
    assert oracle.solve_discounted_ale([[0.5]], [[1.0]])[0, 0] == pytest.approx(4 / 3, rel=1e-14)


def test_ale_matches_truncated_series(rng):
    sys = random_stable_system(4, 1, 2, seed=5, rho=0.9)
    a = 0.95
    Cg = sys.C
    W = oracle.solve_discounted_ale(sys.A, Cg, a)
    S, P = np.zeros((4, 4)), np.eye(4)
    for t in range(2001):
        S += a ** (2 * t) * P.T @ Cg.T @ Cg @ P
        P = P @ sys.A
    assert np.allclose(W, S, rtol=1e-9, atol=1e-9 * np.abs(S).max())
    assert oracle.ale_residual(sys.A, Cg, W, a) <= 1e-10 * np.linalg.norm(Cg.T @ Cg)


def test_ale_rejects_unstable():
    with pytest.raises(UnstableSystemError):
        oracle.solve_discounted_ale(np.diag([1.2, 0.1]), np.eye(2), 0.9)


def test_finite_gramian_examples(rng):
    A = rng.standard_normal((3, 3))
    C = rng.standard_normal((1, 3))
    Ws = oracle.finite_horizon_obs_gramian(A, C, 4)
    assert np.allclose(Ws[1], C.T @ C)
    Z = oracle.finite_horizon_obs_gramian(np.zeros((3, 3)), C, 5)
    assert all(np.allclose(W, C.T @ C) for W in Z[1:])
    direct = sum(np.linalg.matrix_power(A.T, t) @ C.T @ C @ np.linalg.matrix_power(A, t) for t in range(4))
    assert np.allclose(Ws[4], direct, rtol=1e-12, atol=1e-12 * np.abs(direct).max())


def test_finite_gramian_monotone(rng):
    sys = random_stable_system(5, 2, 3, seed=2)
    Ws = oracle.finite_horizon_obs_gramian(sys.A, sys.C, 10)
    for a, b in zip(Ws, Ws[1:]):
        assert np.linalg.eigvalsh(b - a).min() >= -1e-12


def test_true_cost_scalar_and_zero_sensor():
    sys = LtiSystem([[0.5]], [[1.0]], [[1.0], [0.0]])
    assert oracle.true_cost(sys, SelectionIndex((1,), 2), Metric("trace", None, 1.0)) == pytest.approx(4 / 3)
    zero = SelectionIndex((2,), 2)
    assert oracle.true_cost(sys, zero, Metric("trace", None, 1.0)) == 0.0
    assert oracle.true_cost(sys, zero, Metric("logdet", None, 1.0)) == -math.inf


def test_finite_cost_matches_monte_carlo():
    sys = random_stable_system(5, 2, 3, seed=9)
    sel = SelectionIndex((1, 3), 3)
    J = oracle.true_cost(sys, sel, FIN3)
    rng = np.random.default_rng(0)
    U = rng.standard_normal((1_000_000, 2))
    X = U @ sys.B.T  # x(1)
    Cg = sys.C[sel.rows]
    energy = 0.0
    for _ in range(3):
        energy += np.mean(np.sum((X @ Cg.T) ** 2, axis=1))
        X = X @ sys.A.T
    assert energy == pytest.approx(J, rel=0.01)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([INF, FIN3, Metric("trace", 7)]))
def test_trace_duality(seed, metric):
    sys = random_stable_system(5, 2, 4, seed=seed)
    sel = SelectionIndex((1, 4), 4)
    J = float(np.trace(oracle.cost_block(sys, sel, metric)))
    assert oracle.dual_trace_cost(sys, sel, metric) == pytest.approx(J, rel=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([INF, FIN3]))
def test_additivity_across_sensors(seed, metric):
    sys = random_stable_system(4, 2, 5, seed=seed)
    sel = SelectionIndex((1, 2, 5), 5)
    total = oracle.true_cost(sys, sel, metric)
    parts = sum(oracle.true_cost(sys, SelectionIndex((j,), 5), metric) for j in sel)
    assert total == pytest.approx(parts, rel=1e-10)


def test_full_state_reconstruction_is_exact():
    sys = random_stable_system(3, 1, 3, seed=0)
    sys = LtiSystem(sys.A, sys.B, np.eye(3))
    rec = oracle.build_reconstruction(sys, SelectionIndex((1, 2, 3), 3), 3)
    assert rec.K == 1
    u = np.random.default_rng(2).standard_normal((20, 1))
    x = simulate_states(sys, u)
    for t in range(3, 20):
        assert np.allclose(rec.M @ _stack(u, x[:-1], 3, t), x[t], rtol=0, atol=1e-12)


def _stack(u, y, N, t):
    return np.concatenate([u[t - N:t][::-1].ravel(), y[t - N:t][::-1].ravel()])


@pytest.mark.parametrize("N", [3, 5])
def test_reconstruction_replay(N):
    sys = random_stable_system(4, 2, 3, seed=1, x0=True)
    hat = SelectionIndex((1, 2), 3)
    rec = oracle.build_reconstruction(sys, hat, N)
    u = np.random.default_rng(3).standard_normal((50, 2))
    x = simulate_states(sys, u)
    y = x[:-1] @ sys.C[hat.rows].T
    err = max(np.abs(rec.M @ _stack(u, y, N, t) - x[t]).max() for t in range(N, 50))
    assert err <= 1e-9


def test_reconstruction_identity_ME1_is_B():
    sys = random_stable_system(5, 2, 4, seed=4)
    rec = oracle.build_reconstruction(sys, SelectionIndex((1, 2), 4), 4)
    assert np.allclose(rec.M[:, :2], sys.B, atol=1e-10)


def test_reconstruction_errors():
    sys = LtiSystem(np.diag([0.5, 0.2]), np.ones((2, 1)), [[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(UnobservableError):
        oracle.build_reconstruction(sys, SelectionIndex((1,), 2), 2)
    companion = LtiSystem([[0, 1], [-0.1, 0.3]], [[0], [1]], [[1, 0]])
    with pytest.raises(ConfigError):
        oracle.build_reconstruction(companion, SelectionIndex((1,), 1), 1)


def test_observability_index_cases(rng):
    assert oracle.observability_index(rng.standard_normal((4, 4)), np.eye(4)) == 1
    n = 5
    A = np.diag(np.ones(n - 1), 1)
    A[-1] = rng.standard_normal(n)
    C = np.eye(n)[:1]
    assert oracle.observability_index(A, C) == n
    for _ in range(10):
        A, C = rng.standard_normal((4, 4)), rng.standard_normal((2, 4))
        K = oracle.observability_index(A, C)
        ranks = [np.linalg.matrix_rank(oracle.observability_matrix(A, C, k)) for k in range(1, 5)]
        assert K == 1 + ranks.index(4)


def test_unobservable_index_is_inf():
    assert oracle.observability_index(np.diag([0.1, 0.2]), [[1.0, 0.0]]) == math.inf


def test_lifted_gramian_quadratic_form():
    sys = random_stable_system(3, 1, 2, seed=2)
    rec = oracle.build_reconstruction(sys, SelectionIndex((1, 2), 2), 2)
    W = oracle.solve_discounted_ale(sys.A, sys.C, 0.9)
    Wbar = oracle.lifted_gramian(rec, W)
    z = np.random.default_rng(0).standard_normal(Wbar.shape[0])
    x = rec.M @ z
    assert z @ Wbar @ z == pytest.approx(x @ W @ x)


def test_brute_force_trivial_cases():
    sys = random_stable_system(4, 2, 5, seed=3)
    assert oracle.brute_force_select(sys, 5, INF).indices == (1, 2, 3, 4, 5)
    C = np.zeros((4, 4))
    C[2] = np.random.default_rng(1).standard_normal(4)
    dom = LtiSystem(sys.A, sys.B, C)
    assert oracle.brute_force_select(dom, 1, INF).indices == (3,)


@pytest.mark.parametrize("kind", ["trace", "logdet"])
def test_brute_force_is_exhaustive_max(kind):
    sys = random_stable_system(6, 2, 8, seed=8)
    metric = Metric(kind, None, 0.95)
    best = oracle.brute_force_select(sys, 3, metric)
    vals = {c: oracle.true_cost(sys, SelectionIndex(c, 8), metric) for c in itertools.combinations(range(1, 9), 3)}
    assert len(vals) == 56
    assert oracle.true_cost(sys, best, metric) == pytest.approx(max(vals.values()), rel=1e-12)


def test_brute_force_respects_seed_and_guard():
    sys = random_stable_system(4, 1, 6, seed=0)
    assert {1, 2} <= set(oracle.brute_force_select(sys, 4, INF, seed_set=(1, 2)).indices)
    big = random_stable_system(3, 1, 22, seed=0)
    with pytest.raises(ConfigError):
        oracle.brute_force_select(big, 2, INF)


def test_oracle_report_shape():
    sys = random_stable_system(3, 1, 4, seed=0)
    rep = oracle.oracle_report(sys, Metric("trace", 4))
    assert len(rep["sensors"]) == 4
    assert len(rep["sensors"][0]["trace_by_horizon"]) == 5
