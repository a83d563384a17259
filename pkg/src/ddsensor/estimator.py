"""Gramian estimates in history-stack coordinates and the costs read off them.

Only the top-left ``m x m`` block of the estimated Gramian is identifiable
when the output history is longer than the state, and it is exactly the
block the costs need.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import tensor_ops as to
from .errors import ConfigError
from .regressors import FiniteRegressorBundle, RegressorBundle

LOGDET_FLOOR = 1e-12
ASYMMETRY_TOL = 1e-9


def _block_positions(d: int, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Positions in vech coordinates of the entries of the leading ``m x m`` block."""
    rows, cols = to.half_indices(d)
    pos = np.nonzero((rows < m) & (cols < m))[0]
    return pos, rows[pos], cols[pos]


def _block_from_vech(w: np.ndarray, d: int, m: int) -> np.ndarray:
    pos, rows, cols = _block_positions(d, m)
    out = np.zeros((m, m))
    out[rows, cols] = w[pos]
    out[cols, rows] = w[pos]
    return out


def _checked_symmetric(block: np.ndarray) -> np.ndarray:
    scale = max(1.0, float(np.abs(block).max(initial=0.0)))
    if np.abs(block - block.T).max(initial=0.0) > ASYMMETRY_TOL * scale:
        raise ArithmeticError("cost block is not symmetric")
    return to.symmetrize(block)


@dataclass(frozen=True, eq=False)
class GramianEstimate:
    """Estimated Gramian for one sensor (or a summed set of sensors).

    ``blocks[t]`` is the leading ``m x m`` block after ``t`` propagation steps
    for finite horizons; for the discounted case it has a single entry.
    ``vech_W`` holds the full estimate at the final horizon.
    """

    sensor: int | None
    horizon: int | None
    discount: float | None
    vech_W: np.ndarray = field(repr=False)
    blocks: tuple[np.ndarray, ...] = field(repr=False)
    rank: int = 0
    smallest_singular_value: float = 0.0
    degraded: bool = False

    @property
    def cost_block(self) -> np.ndarray:
        return self.blocks[-1]

    @property
    def W_hat(self) -> np.ndarray:
        return to.unvech(self.vech_W)

    def block_at(self, t: int) -> np.ndarray:
        if self.horizon is None:
            raise ConfigError("discounted estimates carry no horizon sequence")
        return self.blocks[t]

    def as_dict(self) -> dict:
        return {"sensor": self.sensor, "horizon": self.horizon, "discount": self.discount,
                "trace": metric_value(self.cost_block, "trace"),
                "logdet": _json_float(metric_value(self.cost_block, "logdet")),
                "trace_by_horizon": ([metric_value(b, "trace") for b in self.blocks]
                                     if self.horizon is not None else None),
                "diagnostics": {"rank": self.rank,
                                "smallest_singular_value": self.smallest_singular_value,
                                "degraded": self.degraded}}


def _json_float(x: float):
    return x if math.isfinite(x) else ("-inf" if x < 0 else "inf")


def _degraded(bundle) -> bool:
    rep = bundle.rank_report
    return rep.rank == 0 or rep.attains is False


def estimate_inf(bundle: RegressorBundle, sensor: int) -> GramianEstimate:
    """``vech(Ŵ) = -(Ψᵀ)† Y_j``."""
    if not isinstance(bundle, RegressorBundle):
        raise ConfigError("estimate_inf needs a discounted-horizon bundle")
    y = bundle.Y[:, bundle.column(sensor)]
    w = -bundle.pinv.apply(y)
    block = _checked_symmetric(_block_from_vech(w, bundle.d, bundle.m))
    return GramianEstimate(sensor=sensor, horizon=None, discount=bundle.discount, vech_W=w,
                           blocks=(block,), rank=bundle.pinv.numerical_rank,
                           smallest_singular_value=bundle.pinv.smallest_retained,
                           degraded=_degraded(bundle))


def estimate_fin(bundle: FiniteRegressorBundle, sensor: int, T: int) -> GramianEstimate:
    """Propagate ``vech(Ŵ(t+1)) = (Ψ₁ᵀ)†(Ψ₂ᵀ vech(Ŵ(t)) + Y_j)`` from ``Ŵ(0) = 0``."""
    if not isinstance(bundle, FiniteRegressorBundle):
        raise ConfigError("estimate_fin needs a finite-horizon bundle")
    if T < 0:
        raise ConfigError("horizon must be nonnegative")
    p = bundle.pinv
    d, m = bundle.d, bundle.m
    y = bundle.Y[:, bundle.column(sensor)]
    V = p.vt.T
    pos = _block_positions(d, m)[0]
    V_block = V[pos]
    drive = (p.u.T @ y) / p.retained
    c = np.zeros(p.numerical_rank)
    blocks = [np.zeros((m, m))]
    if T > 0:
        G = bundle.reduced_step
        for _ in range(T):
            c = G @ c + drive
            wb = np.zeros(bundle.D)
            wb[pos] = V_block @ c
            blocks.append(_checked_symmetric(_block_from_vech(wb, d, m)))
    return GramianEstimate(sensor=sensor, horizon=T, discount=None, vech_W=V @ c,
                           blocks=tuple(blocks), rank=p.numerical_rank,
                           smallest_singular_value=p.smallest_retained,
                           degraded=_degraded(bundle))


def estimate(bundle, sensor: int, T: int | None = None) -> GramianEstimate:
    if isinstance(bundle, RegressorBundle):
        return estimate_inf(bundle, sensor)
    if T is None:
        raise ConfigError("finite-horizon estimation needs a horizon T")
    return estimate_fin(bundle, sensor, T)


def estimate_all(bundle, sensors=None, T: int | None = None, threads: int = 1) -> dict[int, GramianEstimate]:
    """Per-sensor estimates; with ``threads > 1`` sensors run concurrently.

    Each sensor is a pure function of the shared bundle, so the result does
    not depend on the schedule.
    """
    sensors = list(bundle.eval_sensors if sensors is None else sensors)
    if isinstance(bundle, FiniteRegressorBundle) and T:
        bundle.reduced_step  # build once before fanning out
    if threads <= 1:
        return {j: estimate(bundle, j, T) for j in sensors}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(lambda j: estimate(bundle, j, T), sensors))
    return dict(zip(sensors, results))


def cost_block_sum(estimates, t: int | None = None) -> np.ndarray:
    """Sum of cost blocks in ascending sensor order.

    The Gramian and both estimation formulas are linear in the target vector,
    so the block of a sensor set equals the sum of its singleton blocks.
    ``t`` picks an intermediate horizon of finite-horizon estimates.
    """
    ests = sorted(estimates, key=lambda e: (e.sensor is None, e.sensor))
    if not ests:
        raise ConfigError("no estimates to sum")
    kinds = {(e.horizon, e.discount) for e in ests}
    if len(kinds) > 1:
        raise ConfigError(f"cannot sum estimates with different horizons/discounts: {sorted(map(str, kinds))}")
    total = np.zeros_like(ests[0].cost_block)
    for e in ests:
        total = total + (e.cost_block if t is None else e.block_at(t))
    return total


def metric_value(block, kind: str, floor: float = LOGDET_FLOOR) -> float:
    """Trace, or log-determinant with ``-inf`` once an eigenvalue drops below ``floor``."""
    block = np.asarray(block, dtype=float)
    if kind == "trace":
        return float(np.trace(block))
    if kind != "logdet":
        raise ConfigError(f"unknown metric kind {kind!r}")
    w = np.linalg.eigvalsh(to.symmetrize(block))
    if w.size == 0 or w.min() < floor:
        return -math.inf
    return float(np.sum(np.log(w)))


def estimates_to_json(estimates: dict[int, GramianEstimate]) -> list[dict]:
    return [estimates[j].as_dict() for j in sorted(estimates)]
