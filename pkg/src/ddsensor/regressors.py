"""Data matrices built from recorded input/output trajectories only.

The history stack at time ``t`` is

    z(t) = [u(t-1); u(t-2); ...; u(t-N); y_hat(t-1); ...; y_hat(t-N)]

of length ``d = N*m + N*r``. A regressor column at time ``t`` needs ``z(t)``,
``z(t+1)``, ``u(t)`` and ``y_tilde(t)``, so a trajectory of length ``L``
supports timestamps ``N <= t <= L-1``.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import tensor_ops as to
from .errors import ConfigError, InsufficientSamplesError, RankDeficitWarning
from .lti_core import Trajectory


@dataclass(frozen=True)
class HistoryStack:
    z: np.ndarray
    t: int
    N: int


def build_z(traj: Trajectory, N: int, t: int) -> HistoryStack:
    if N < 1:
        raise ConfigError("history length N must be positive")
    if t < N or t > len(traj):
        raise InsufficientSamplesError(f"z({t}) needs {N} <= t <= {len(traj)}")
    u_hist = traj.u[t - N:t][::-1].ravel()
    y_hist = traj.y_hat[t - N:t][::-1].ravel()
    return HistoryStack(np.concatenate([u_hist, y_hist]), t, N)


def history_matrix(u: np.ndarray, y: np.ndarray, N: int, ts: np.ndarray) -> np.ndarray:
    """Columns ``[u(t-1..t-N); y(t-1..t-N)]`` for every ``t`` in ``ts``."""
    ts = np.asarray(ts)
    blocks = [u[ts - lag] for lag in range(1, N + 1)]
    blocks += [y[ts - lag] for lag in range(1, N + 1)]
    return np.hstack(blocks).T


def selector_E1(d: int, m: int) -> np.ndarray:
    """``[I_m; 0]``, picking the newest input out of a history stack."""
    E1 = np.zeros((d, m))
    E1[:m, :m] = np.eye(m)
    return E1


def build_phi_inf(z_t: HistoryStack, z_t1: HistoryStack, u_t, a: float) -> np.ndarray:
    """Regressor column ``H(a² w⊗w - z⊗z)`` with ``w = z(t+1) - E1 u(t)``."""
    if z_t1.t != z_t.t + 1:
        raise ConfigError(f"history stacks at t={z_t.t} and t={z_t1.t} are not consecutive")
    u_t = np.atleast_1d(np.asarray(u_t, dtype=float))
    w = z_t1.z - selector_E1(z_t1.z.size, u_t.size) @ u_t
    return to.op_H(a * a * to.kron(w, w) - to.kron(z_t.z, z_t.z))


def build_phi_fin(z_tau: HistoryStack, z_tau1: HistoryStack, u_tau) -> tuple[np.ndarray, np.ndarray]:
    if z_tau1.t != z_tau.t + 1:
        raise ConfigError(f"history stacks at t={z_tau.t} and t={z_tau1.t} are not consecutive")
    u_tau = np.atleast_1d(np.asarray(u_tau, dtype=float))
    w = z_tau1.z - selector_E1(z_tau1.z.size, u_tau.size) @ u_tau
    return to.op_H(to.kron(z_tau.z, z_tau.z)), to.op_H(to.kron(w, w))


@dataclass(frozen=True)
class RankReport:
    rank: int
    rows: int
    tolerance: float
    smallest_retained: float
    largest: float
    attainable: int | None = None

    @property
    def full_row_rank(self) -> bool:
        return self.rank == self.rows

    @property
    def attains(self) -> bool | None:
        """Whether the rank reaches ``(Nm+n)(Nm+n+1)/2``; ``None`` when ``n`` is unknown."""
        return None if self.attainable is None else self.rank >= self.attainable

    @property
    def condition(self) -> float:
        return self.largest / self.smallest_retained if self.smallest_retained else np.inf

    def as_dict(self) -> dict:
        return {"rank": self.rank, "rows": self.rows, "attainable": self.attainable,
                "attains": self.attains, "full_row_rank": self.full_row_rank,
                "tolerance": self.tolerance, "smallest_retained_singular_value": self.smallest_retained,
                "largest_singular_value": self.largest}


def attainable_rank(N: int, m: int, n: int) -> int:
    return to.half_dim(N * m + n)


@dataclass(frozen=True, eq=False)
class _BundleBase:
    Y: np.ndarray
    N: int
    m: int
    r: int
    timestamps: np.ndarray
    eval_sensors: tuple[int, ...]
    pinv: to.PinvResult = field(repr=False)
    pinv_seconds: float = 0.0
    n: int | None = None

    @property
    def d(self) -> int:
        return self.N * (self.m + self.r)

    @property
    def D(self) -> int:
        return to.half_dim(self.d)

    @property
    def k(self) -> int:
        return self.Y.shape[0]

    @property
    def E1(self) -> np.ndarray:
        return selector_E1(self.d, self.m)

    @cached_property
    def rank_report(self) -> RankReport:
        p = self.pinv
        return RankReport(rank=p.numerical_rank, rows=self.D, tolerance=p.tolerance_used,
                          smallest_retained=p.smallest_retained,
                          largest=float(p.singular_values[0]) if p.singular_values.size else 0.0,
                          attainable=None if self.n is None else attainable_rank(self.N, self.m, self.n))

    def column(self, sensor: int) -> int:
        try:
            return self.eval_sensors.index(sensor)
        except ValueError:
            raise ConfigError(f"sensor {sensor} is not part of this bundle") from None


@dataclass(frozen=True, eq=False)
class RegressorBundle(_BundleBase):
    """Stacked ``Ψ`` (``D x k``) and per-sensor targets ``Y`` (``k x q``), discounted case."""

    Psi: np.ndarray = field(default=None, repr=False)
    discount: float = 1.0


@dataclass(frozen=True, eq=False)
class FiniteRegressorBundle(_BundleBase):
    """``Ψ₁``, ``Ψ₂`` (``D x k``) and targets ``Y`` for the finite-horizon recursion."""

    Psi1: np.ndarray = field(default=None, repr=False)
    Psi2: np.ndarray = field(default=None, repr=False)

    @cached_property
    def reduced_step(self) -> np.ndarray:
        """``S⁻¹ Uᵀ Ψ₂ᵀ V`` where ``Ψ₁ᵀ ≈ U S Vᵀ`` is the truncated SVD.

        Every iterate of the recursion lies in the range of ``V``, so it can be
        propagated in ``rank``-dimensional coordinates ``c`` with
        ``vech(W) = V c``.
        """
        p = self.pinv
        V = p.vt.T
        return (p.u.T @ (self.Psi2.T @ V)) / p.retained[:, None]


def timestamps_for(length: int, N: int, samples: int, stride: int = 1) -> np.ndarray:
    if stride < 1:
        raise ConfigError("stride must be positive")
    ts = N + stride * np.arange(samples)
    if samples < 1 or ts[-1] > length - 1:
        avail = max(0, (length - 1 - N) // stride + 1)
        raise InsufficientSamplesError(
            f"need {samples} regressor columns, trajectory of length {length} "
            f"supports {avail} with N={N}, stride={stride}")
    return ts


def _targets(traj: Trajectory, ts, sensors) -> tuple[np.ndarray, tuple[int, ...]]:
    if sensors is None:
        cols = list(range(traj.q))
        labels = traj.eval_sensors or tuple(range(1, traj.q + 1))
    else:
        labels = tuple(int(s) for s in sensors)
        cols = [traj.eval_column(s) for s in labels] if traj.eval_sensors else [s - 1 for s in labels]
    return traj.y_tilde[np.asarray(ts)][:, cols] ** 2, tuple(labels)


def _check_rank(bundle: _BundleBase) -> None:
    rep = bundle.rank_report
    if rep.rank == 0:
        warnings.warn("regressor matrix has numerical rank 0; data carry no excitation",
                      RankDeficitWarning, stacklevel=3)
    elif rep.attainable is None and rep.rank == bundle.k < rep.rows:
        warnings.warn(f"regressor rank {rep.rank} is capped by the {bundle.k} sample columns "
                      f"(rows: {rep.rows}); collect more samples", RankDeficitWarning, stacklevel=3)
    elif rep.attains is False:
        warnings.warn(f"regressor rank {rep.rank} is below the attainable {rep.attainable}; "
                      "estimates may be inexact", RankDeficitWarning, stacklevel=3)


def assemble(traj: Trajectory, N: int, horizon: str = "inf", discount: float = 1.0,
             sensors=None, samples: int | None = None, stride: int = 1,
             rtol: float | None = None, atol: float | None = None,
             n: int | None = None) -> RegressorBundle | FiniteRegressorBundle:
    """Build the regressor bundle and its pseudoinverse from one trajectory.

    ``horizon`` is ``"inf"`` (discounted, uses ``discount``) or ``"fin"``.
    ``samples`` defaults to twice the number of regressor rows. ``n`` is the
    true state dimension; pass it only when an oracle is available, to
    enable the attainable-rank check.
    """
    if horizon not in ("inf", "fin"):
        raise ConfigError(f"horizon must be 'inf' or 'fin', got {horizon!r}")
    if N < 1:
        raise ConfigError("history length N must be positive")
    d = N * (traj.m + traj.r)
    D = to.half_dim(d)
    k = 2 * D if samples is None else int(samples)
    ts = timestamps_for(len(traj), N, k, stride)
    Y, labels = _targets(traj, ts, sensors)

    Z = history_matrix(traj.u, traj.y_hat, N, ts)
    W = history_matrix(traj.u, traj.y_hat, N, ts + 1)
    W[: traj.m] -= traj.u[ts].T
    del_phi = to.quadratic_features(W)
    common = dict(Y=Y, N=N, m=traj.m, r=traj.r, timestamps=ts, eval_sensors=labels, n=n)
    if horizon == "inf":
        Psi = discount * discount * del_phi
        Psi -= to.quadratic_features(Z)
        del del_phi
        t0 = time.perf_counter()
        pinv = to.pinv_tol(Psi.T, rtol=rtol, atol=atol)
        bundle = RegressorBundle(pinv=pinv, pinv_seconds=time.perf_counter() - t0,
                                 Psi=Psi, discount=discount, **common)
    else:
        Psi1 = to.quadratic_features(Z)
        t0 = time.perf_counter()
        pinv = to.pinv_tol(Psi1.T, rtol=rtol, atol=atol)
        bundle = FiniteRegressorBundle(pinv=pinv, pinv_seconds=time.perf_counter() - t0,
                                       Psi1=Psi1, Psi2=del_phi, **common)
    _check_rank(bundle)
    return bundle


# -- observability data ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ObsDataMatrices:
    """History stacks from the known channel (``Z``) and the evaluated one (``Z_tilde``)."""

    Z: np.ndarray
    Z_tilde: np.ndarray
    N: int
    m: int
    timestamps: np.ndarray
    sensors: tuple[int, ...] = ()

    @property
    def k(self) -> int:
        return self.Z.shape[1]


def assemble_obs_matrices(traj: Trajectory, N: int, sensors=None,
                          samples: int | None = None) -> ObsDataMatrices:
    """Aligned ``Z`` and ``Z_tilde`` over ``samples`` timestamps (default: all usable).

    ``sensors`` restricts the evaluated channel to a subset of the recorded
    ``y_tilde`` columns.
    """
    if N < 1:
        raise ConfigError("history length N must be positive")
    if sensors is None:
        cols, labels = list(range(traj.q)), traj.eval_sensors
    else:
        labels = tuple(int(s) for s in sensors)
        cols = [traj.eval_column(s) for s in labels]
    y_t = traj.y_tilde[:, cols]
    avail = len(traj) - N + 1  # z(t) exists for N <= t <= L
    k = avail if samples is None else int(samples)
    need = N * traj.m + N * max(traj.r, len(cols))
    if k < need or k > avail:
        raise InsufficientSamplesError(
            f"observability test needs between {need} and {avail} columns, got {k}")
    ts = N + np.arange(k)
    Z = history_matrix(traj.u, traj.y_hat, N, ts)
    Zt = history_matrix(traj.u, y_t, N, ts)
    return ObsDataMatrices(Z=Z, Z_tilde=Zt, N=N, m=traj.m, timestamps=ts, sensors=tuple(labels))


# -- fixtures -------------------------------------------------------------------

def bundle_to_dict(bundle) -> dict:
    out = {"kind": "inf" if isinstance(bundle, RegressorBundle) else "fin",
           "N": bundle.N, "m": bundle.m, "r": bundle.r, "n": bundle.n,
           "timestamps": bundle.timestamps.tolist(), "eval_sensors": list(bundle.eval_sensors),
           "Y": bundle.Y.tolist(), "tolerance": bundle.pinv.tolerance_used}
    if isinstance(bundle, RegressorBundle):
        out.update(discount=bundle.discount, Psi=bundle.Psi.tolist())
    else:
        out.update(Psi1=bundle.Psi1.tolist(), Psi2=bundle.Psi2.tolist())
    return out


def bundle_from_dict(d: dict):
    common = dict(Y=np.asarray(d["Y"], float), N=d["N"], m=d["m"], r=d["r"], n=d.get("n"),
                  timestamps=np.asarray(d["timestamps"], int),
                  eval_sensors=tuple(d["eval_sensors"]))
    tol = d.get("tolerance")
    if d["kind"] == "inf":
        Psi = np.asarray(d["Psi"], float)
        return RegressorBundle(pinv=to.pinv_tol(Psi.T, atol=tol), Psi=Psi,
                               discount=d["discount"], **common)
    Psi1 = np.asarray(d["Psi1"], float)
    return FiniteRegressorBundle(pinv=to.pinv_tol(Psi1.T, atol=tol), Psi1=Psi1,
                                 Psi2=np.asarray(d["Psi2"], float), **common)
