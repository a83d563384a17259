"""Model-based ground truth.

Everything here reads the plant matrices and exists to validate the
data-driven path; nothing in :mod:`ddsensor.regressors`,
:mod:`ddsensor.estimator` or :mod:`ddsensor.selector` imports it.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import tensor_ops as to
from .errors import ConfigError, UnobservableError, UnstableSystemError
from .lti_core import LtiSystem, Metric, SelectionIndex, spectral_radius

LOGDET_FLOOR = 1e-12
BRUTE_FORCE_MAX_P = 20


def _lyapunov_operator(A: np.ndarray) -> np.ndarray:
    """Matrix of ``W -> A^T W A`` acting on vech coordinates."""
    n = A.shape[0]
    rows, cols = to.half_indices(n)
    # column (i,j) holds vech(A^T E_ij A) with E_ij = e_i e_j^T + e_j e_i^T (halved on the diagonal)
    Ai, Aj = A[rows], A[cols]
    op = Ai[:, rows] * Aj[:, cols] + Aj[:, rows] * Ai[:, cols]
    op[rows == cols] *= 0.5
    return op.T


def solve_discounted_ale(A, Cg, a: float = 1.0) -> np.ndarray:
    """Solve ``a² AᵀWA - W + CgᵀCg = 0`` by dense LU on the symmetric coordinates."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Cg = np.atleast_2d(np.asarray(Cg, dtype=float))
    if a * spectral_radius(A) >= 1.0:
        raise UnstableSystemError(
            f"discount {a} times spectral radius {spectral_radius(A):.6g} is not below 1")
    n = A.shape[0]
    Q = Cg.T @ Cg
    lhs = np.eye(to.half_dim(n)) - a * a * _lyapunov_operator(A)
    W = to.unvech(scipy.linalg.lu_solve(scipy.linalg.lu_factor(lhs), to.vech(Q)))
    return W


def ale_residual(A, Cg, W, a: float = 1.0) -> float:
    Cg = np.atleast_2d(Cg)
    return float(np.linalg.norm(a * a * A.T @ W @ A - W + Cg.T @ Cg))


def finite_horizon_obs_gramian(A, Cg, T: int) -> list[np.ndarray]:
    """``[W(0), ..., W(T)]`` from ``W(t+1) = AᵀW(t)A + CgᵀCg``, ``W(0) = 0``."""
    if T < 0:
        raise ConfigError("horizon must be nonnegative")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Cg = np.atleast_2d(np.asarray(Cg, dtype=float))
    Q = Cg.T @ Cg
    out = [np.zeros_like(A)]
    for _ in range(T):
        W = A.T @ out[-1] @ A + Q
        out.append(to.symmetrize(W))
    return out


def discounted_ctrb_gramian(A, B, a: float = 1.0) -> np.ndarray:
    return solve_discounted_ale(np.asarray(A).T, np.asarray(B).T, a)


def finite_horizon_ctrb_gramian(A, B, T: int) -> list[np.ndarray]:
    return finite_horizon_obs_gramian(np.asarray(A).T, np.asarray(B).T, T)


def obs_gramian(sys: LtiSystem, rows: np.ndarray, metric: Metric) -> np.ndarray:
    Cg = sys.C[rows]
    if metric.infinite:
        return solve_discounted_ale(sys.A, Cg, metric.discount)
    return finite_horizon_obs_gramian(sys.A, Cg, metric.horizon)[-1]


def cost_block(sys: LtiSystem, sel: SelectionIndex, metric: Metric) -> np.ndarray:
    """``Bᵀ W_o B`` for the Gramian of the selected sensors."""
    W = obs_gramian(sys, sel.rows, metric)
    return to.symmetrize(sys.B.T @ W @ sys.B)


def sensor_blocks(sys: LtiSystem, metric: Metric, sensors=None) -> dict[int, np.ndarray]:
    """Singleton cost blocks keyed by 1-based sensor index."""
    sensors = range(1, sys.p + 1) if sensors is None else sensors
    return {j: cost_block(sys, SelectionIndex((j,), sys.p), metric) for j in sensors}


def finite_horizon_sensor_blocks(sys: LtiSystem, T: int, sensors=None) -> dict[int, list[np.ndarray]]:
    """Per-sensor ``[BᵀW(t)B for t = 0..T]``."""
    sensors = range(1, sys.p + 1) if sensors is None else sensors
    out = {}
    for j in sensors:
        Ws = finite_horizon_obs_gramian(sys.A, sys.C[[j - 1]], T)
        out[j] = [to.symmetrize(sys.B.T @ W @ sys.B) for W in Ws]
    return out


def logdet(block: np.ndarray, floor: float = LOGDET_FLOOR) -> float:
    w = np.linalg.eigvalsh(to.symmetrize(block))
    if w.size == 0 or w.min() < floor:
        return -math.inf
    return float(np.sum(np.log(w)))


def _value(block, kind: str, floor: float) -> float:
    return float(np.trace(block)) if kind == "trace" else logdet(block, floor)


def true_cost(sys: LtiSystem, sel: SelectionIndex, metric: Metric,
              floor: float = LOGDET_FLOOR, check_duality: bool = True) -> float:
    block = cost_block(sys, sel, metric)
    if metric.kind == "trace" and check_duality:
        dual = dual_trace_cost(sys, sel, metric)
        J = float(np.trace(block))
        scale = max(abs(J), abs(dual), 1e-300)
        if abs(J - dual) > 1e-7 * scale:
            raise ArithmeticError(f"trace duality violated: {J} vs {dual}")
    return _value(block, metric.kind, floor)


def dual_trace_cost(sys: LtiSystem, sel: SelectionIndex, metric: Metric) -> float:
    """``tr(Cγ W_c Cγᵀ)`` with the controllability Gramian."""
    if metric.infinite:
        Wc = discounted_ctrb_gramian(sys.A, sys.B, metric.discount)
    else:
        Wc = finite_horizon_ctrb_gramian(sys.A, sys.B, metric.horizon)[-1]
    Cg = sys.C[sel.rows]
    return float(np.trace(Cg @ Wc @ Cg.T))


# -- state reconstruction from input/output history --------------------------

@dataclass(frozen=True)
class ReconstructionMatrices:
    """Matrices with ``x(t) = M z(t)`` for ``t >= N``; ``M = [M_u, M_y]``."""

    U_N: np.ndarray
    V_N: np.ndarray
    T_N: np.ndarray
    M_u: np.ndarray
    M_y: np.ndarray
    N: int
    K: int

    @property
    def M(self) -> np.ndarray:
        return np.hstack([self.M_u, self.M_y])


def observability_matrix(A, C, depth: int) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, float))
    C = np.atleast_2d(np.asarray(C, float))
    blocks, cur = [], C
    for _ in range(depth):
        blocks.append(cur)
        cur = cur @ A
    return np.vstack(blocks)


def _rank(M: np.ndarray) -> int:
    return to.numerical_rank(M)[0] if M.size else 0


def observability_index(A, C) -> float:
    """Smallest ``K`` with ``rank([C; CA; ...; CA^(K-1)]) = n``; ``math.inf`` if unobservable."""
    A = np.atleast_2d(np.asarray(A, float))
    n = A.shape[0]
    O = observability_matrix(A, C, n)
    if _rank(O) < n:
        return math.inf
    q = np.atleast_2d(C).shape[0]
    for K in range(1, n + 1):
        if _rank(O[: K * q]) == n:
            return K
    return math.inf  # unreachable


def is_observable(A, C) -> bool:
    return observability_index(A, C) != math.inf


def build_reconstruction(sys: LtiSystem, sel_hat: SelectionIndex, N: int) -> ReconstructionMatrices:
    A, B = sys.A, sys.B
    Ch = sys.sensor_rows(sel_hat)
    K = observability_index(A, Ch)
    if K == math.inf:
        raise UnobservableError(f"(A, C_hat) is not observable for sensors {sel_hat.indices}")
    if N < K:
        raise ConfigError(f"history length N={N} is below the observability index K={K}")
    n, m, r = sys.n, sys.m, Ch.shape[0]
    powers = [np.eye(n)]
    for _ in range(N):
        powers.append(powers[-1] @ A)
    U_N = np.hstack([powers[j] @ B for j in range(N)])
    V_N = np.vstack([Ch @ powers[N - 1 - i] for i in range(N)])
    T_N = np.zeros((N * r, N * m))
    for i in range(N):
        for j in range(i + 1, N):
            T_N[i * r:(i + 1) * r, j * m:(j + 1) * m] = Ch @ powers[j - i - 1] @ B
    M_y = powers[N] @ np.linalg.pinv(V_N)
    M_u = U_N - M_y @ T_N
    return ReconstructionMatrices(U_N, V_N, T_N, M_u, M_y, N, int(K))


def lifted_gramian(recon: ReconstructionMatrices, W: np.ndarray) -> np.ndarray:
    """``Mᵀ W M``, the Gramian in history-stack coordinates."""
    M = recon.M
    return to.symmetrize(M.T @ W @ M)


# -- exhaustive selection -----------------------------------------------------

def brute_force_select(sys: LtiSystem, p_prime: int, metric: Metric, candidates=None,
                       seed_set=None, floor: float = LOGDET_FLOOR) -> SelectionIndex:
    """Exact maximizer of the metric over all sets of size ``p_prime``.

    Sets always contain ``seed_set``; the remaining members come from
    ``candidates`` (default: every other sensor). Subset blocks are formed as
    sums of singleton blocks, which is exact because the Gramian is linear in
    ``CγᵀCγ``. Ties go to the lexicographically smallest set.
    """
    seed = tuple(sorted(seed_set or ()))
    pool = sorted(set(range(1, sys.p + 1) if candidates is None else candidates) - set(seed))
    if len(pool) > BRUTE_FORCE_MAX_P:
        raise ConfigError(f"brute force over {len(pool)} sensors is too large")
    extra = p_prime - len(seed)
    if extra < 0 or extra > len(pool):
        raise ConfigError(f"cannot choose {p_prime} sensors with seed {seed} from {len(pool)} candidates")
    blocks = sensor_blocks(sys, metric, sorted(set(pool) | set(seed)))
    base = sum((blocks[j] for j in seed), np.zeros((sys.m, sys.m)))
    best, best_val = None, -math.inf
    for combo in itertools.combinations(pool, extra):
        total = base.copy()
        for j in combo:
            total += blocks[j]
        val = _value(total, metric.kind, floor)
        if best is None or val > best_val:
            best, best_val = combo, val
    return SelectionIndex(seed + tuple(best), sys.p)


def oracle_report(sys: LtiSystem, metric: Metric, sensors=None, floor: float = LOGDET_FLOOR) -> dict:
    """JSON-ready per-sensor ground truth."""
    sensors = list(range(1, sys.p + 1) if sensors is None else sensors)
    rows = []
    if metric.infinite:
        blocks = sensor_blocks(sys, metric, sensors)
        for j in sensors:
            rows.append({"sensor": j, "trace": float(np.trace(blocks[j])),
                         "block": blocks[j].tolist()})
    else:
        seq = finite_horizon_sensor_blocks(sys, metric.horizon, sensors)
        for j in sensors:
            rows.append({"sensor": j, "trace": float(np.trace(seq[j][-1])),
                         "trace_by_horizon": [float(np.trace(b)) for b in seq[j]],
                         "block": seq[j][-1].tolist()})
    return {"metric": metric.label(), "spectral_radius": spectral_radius(sys),
            "sensors": rows}
