"""Sensor-set selection from data-driven cost blocks, and observability checks."""
from __future__ import annotations

import csv
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import tensor_ops as to
from .errors import ConfigError, DataError, RankDeficitWarning
from .estimator import LOGDET_FLOOR, estimate_all, metric_value
from .lti_core import (ExcitationConfig, LtiSystem, Metric, SelectionIndex,
                       generate_excitation, simulate)
from .regressors import ObsDataMatrices, assemble, assemble_obs_matrices

OBSERVABLE = "verified-observable"
UNOBSERVABLE = "verified-unobservable"
INCONCLUSIVE = "inconclusive"


def select_topk(scores: Sequence[float], p_prime: int, sensors: Sequence[int] | None = None,
                p: int | None = None) -> SelectionIndex:
    """The ``p_prime`` highest scores; ties go to the lower sensor index.

    ``scores[i]`` belongs to ``sensors[i]`` (default ``i + 1``).
    """
    sensors = list(range(1, len(scores) + 1)) if sensors is None else list(sensors)
    if len(sensors) != len(scores):
        raise ConfigError("one score per sensor is required")
    if p_prime > len(scores):
        raise ConfigError(f"cannot pick {p_prime} of {len(scores)} sensors")
    if p_prime < 1:
        raise ConfigError("must pick at least one sensor")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], sensors[i]))
    return SelectionIndex(tuple(sensors[i] for i in order[:p_prime]), p or max(sensors))


def _greedy_logdet(blocks: Mapping[int, np.ndarray], p_prime: int, seed_set=(),
                   floor: float = LOGDET_FLOOR, extra_order: bool = False):
    """Greedy maximization; returns (chosen in pick order, whether a trace fallback was used)."""
    chosen = list(seed_set)
    pool = sorted(set(blocks) - set(chosen))
    m = next(iter(blocks.values())).shape[0]
    total = sum((blocks[j] for j in sorted(chosen)), np.zeros((m, m)))
    fallback = False
    target = len(chosen) + len(pool) if extra_order else p_prime
    while len(chosen) < target:
        best_key, best = None, None
        for j in pool:
            cand = total + blocks[j]
            key = (metric_value(cand, "logdet", floor), float(np.trace(cand)), -j)
            if best_key is None or key > best_key:
                best_key, best = key, j
        if best_key[0] == -math.inf:
            fallback = True
        chosen.append(best)
        pool.remove(best)
        total = total + blocks[best]
    return chosen, fallback


def rank_sensors(blocks: Mapping[int, np.ndarray], kind: str, p_prime: int, seed=(),
                 floor: float = LOGDET_FLOOR) -> tuple[list[int], bool]:
    """Every sensor in pick order: ``seed`` first, then by score (trace) or greedy gain (logdet).

    The first ``p_prime`` entries are the selection; the tail is the order in
    which a relaxed cardinality adds sensors. The flag reports a trace fallback.
    """
    seed = list(seed)
    pool = sorted(set(blocks) - set(seed))
    if kind == "trace":
        return seed + sorted(pool, key=lambda j: (-float(np.trace(blocks[j])), j)), False
    if kind != "logdet":
        raise ConfigError(f"unknown metric kind {kind!r}")
    order, _ = _greedy_logdet(blocks, p_prime, seed, floor, extra_order=True)
    # only picks inside the selection count toward the fallback flag
    _, fallback = _greedy_logdet(blocks, p_prime, seed, floor)
    return order, fallback


def select_greedy_logdet(blocks: Mapping[int, np.ndarray], p_prime: int,
                         seed_set: SelectionIndex | Sequence[int] | None = None,
                         p: int | None = None, floor: float = LOGDET_FLOOR) -> SelectionIndex:
    """Grow ``seed_set`` one sensor at a time, maximizing ``logdet`` of the summed blocks.

    When every candidate leaves the sum singular, the larger trace decides,
    then the lower index.
    """
    seed = list(seed_set or ())
    if p_prime > len(set(blocks) | set(seed)):
        raise ConfigError(f"cannot pick {p_prime} of {len(blocks)} sensors")
    if not set(seed) <= set(blocks):
        raise ConfigError("seed sensors need cost blocks too")
    if len(seed) > p_prime:
        raise ConfigError("seed set is larger than the target size")
    chosen, _ = _greedy_logdet(blocks, p_prime, seed, floor)
    return SelectionIndex(tuple(chosen), p or max(blocks))


@dataclass(frozen=True)
class ObservabilityVerdict:
    verdict: str
    rank_Z: int
    rank_Z_tilde: int
    target_rank: int | None
    min_singular_value: float
    tolerance: float
    n_known: bool
    sensors: tuple[int, ...] = ()

    def as_dict(self) -> dict:
        return {"verdict": self.verdict, "sensors": list(self.sensors), "rank_Z": self.rank_Z,
                "rank_Z_tilde": self.rank_Z_tilde, "target_rank": self.target_rank,
                "min_singular_value_Z_tilde": self.min_singular_value,
                "tolerance": self.tolerance, "n_known": self.n_known}


def verify_observability(obs: ObsDataMatrices, rtol: float | None = None,
                         atol: float | None = None, n: int | None = None) -> ObservabilityVerdict:
    """Rank test on the evaluated channel's history stacks.

    With the state dimension ``n`` known the target rank is ``N*m + n``.
    Without it, ``rank(Z)`` stands in for the target, which holds when the
    known channel is observable and the input is rich enough, and
    ``rank(Z) - N*m`` stands in for ``n``.

    A rank shortfall proves unobservability only when the window covers the
    worst-case observability index, ``N >= n``; shorter windows give
    ``inconclusive`` instead.
    """
    Nm = obs.N * obs.m
    rZ, _, _ = to.numerical_rank(obs.Z, rtol, atol)
    rZt, s, tol = to.numerical_rank(obs.Z_tilde, rtol, atol)
    target = Nm + n if n is not None else None
    smin = float(s[min(rZt, s.size) - 1]) if rZt else 0.0
    if target is None and (rZ <= Nm or rZt > rZ):
        verdict = INCONCLUSIVE
    else:
        goal = rZ if target is None else target
        n_eff = goal - Nm
        if rZt >= goal:
            verdict = OBSERVABLE
        elif rZ >= goal and obs.N >= n_eff:
            verdict = UNOBSERVABLE
        else:
            verdict = INCONCLUSIVE
    return ObservabilityVerdict(verdict, rZ, rZt, target, smin, tol, n is not None,
                                tuple(obs.sensors))


# -- the full pipeline --------------------------------------------------------

@dataclass
class PipelineConfig:
    """Everything :func:`run_selection` needs besides the plant.

    ``p_prime`` counts the whole final set, seed sensors included.
    ``observability`` is ``"seed"`` (grow from the known observable set),
    ``"relax"`` (add sensors past ``p_prime`` until verified observable) or
    ``"none"``; ``None`` picks ``"seed"`` for logdet and ``"none"`` for trace.
    """

    seed_sensors: Sequence[int]
    p_prime: int
    metric: Metric = field(default_factory=Metric)
    N: int = 1
    candidates: Sequence[int] | None = None
    excitation: ExcitationConfig | None = None
    samples: int | None = None
    stride: int = 1
    data_mode: str = "shared"
    pinv_rtol: float | None = None
    pinv_atol: float | None = None
    rank_rtol: float | None = None
    logdet_floor: float = LOGDET_FLOOR
    observability: str | None = None
    threads: int = 1
    state_dim: int | None = None

    def policy(self) -> str:
        if self.observability is not None:
            return self.observability
        return "seed" if self.metric.kind == "logdet" else "none"


@dataclass
class SelectionResult:
    chosen: SelectionIndex
    per_sensor_scores: dict[int, float]
    subset_metric: float
    metric: Metric
    observability: ObservabilityVerdict | None
    timings: dict[str, float]
    rank: dict
    warnings: list[str] = field(default_factory=list)
    pick_order: list[int] = field(default_factory=list)
    trace_fallback: bool = False
    chosen_by_horizon: dict[int, list[int]] = field(default_factory=dict)
    estimates: dict = field(default_factory=dict, repr=False)

    def as_dict(self) -> dict:
        """JSON-ready summary; timings are left out so that reruns are byte-identical."""
        return {
            "schema_version": 1,
            "metric": {"kind": self.metric.kind, "horizon": self.metric.horizon,
                       "discount": self.metric.discount if self.metric.infinite else None},
            "chosen": list(self.chosen.indices),
            "pick_order": self.pick_order,
            "subset_metric": _json_float(self.subset_metric),
            "per_sensor_scores": [{"sensor": j, "score": s} for j, s in sorted(self.per_sensor_scores.items())],
            "observability": None if self.observability is None else self.observability.as_dict(),
            "rank": self.rank,
            "warnings": list(self.warnings),
            "trace_fallback": self.trace_fallback,
            "chosen_by_horizon": {str(t): c for t, c in sorted(self.chosen_by_horizon.items())},
        }


def _json_float(x: float):
    return x if math.isfinite(x) else ("-inf" if x < 0 else "inf")


def write_score_csv(result: SelectionResult, path) -> None:
    order = sorted(result.per_sensor_scores, key=lambda j: (-result.per_sensor_scores[j], j))
    rank = {j: i + 1 for i, j in enumerate(order)}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sensor", "score", "rank", "chosen"])
        for j in sorted(result.per_sensor_scores):
            w.writerow([j, repr(float(result.per_sensor_scores[j])), rank[j],
                        int(j in result.chosen)])


def collect(plant: LtiSystem, seed_sensors, eval_sensors, excitation: ExcitationConfig):
    """One data-collection run; the only place the pipeline touches the plant."""
    u = generate_excitation(excitation, plant.m)
    return simulate(plant, u, SelectionIndex.of(seed_sensors, plant.p),
                    SelectionIndex.of(eval_sensors, plant.p))


def excitation_for(cfg: PipelineConfig, m: int, r: int, q: int = 1, offset: int = 0) -> ExcitationConfig:
    """Excitation long enough for the regressor columns and for the observability test.

    ``q`` is the number of evaluated sensors recorded in the same run.
    """
    d = cfg.N * (m + r)
    k = cfg.samples or 2 * to.half_dim(d)
    length = cfg.N + cfg.stride * k + 1
    # observability test: twice the minimum column count over a window of N
    length = max(length, cfg.N + 2 * cfg.N * (m + max(r, q)))
    base = cfg.excitation or ExcitationConfig(horizon=length)
    return ExcitationConfig(seed=base.seed + offset, horizon=max(base.horizon, length),
                            amplitude=base.amplitude, kind=base.kind, tones=base.tones)


def run_selection(plant: LtiSystem, cfg: PipelineConfig) -> SelectionResult:
    """Collect data, estimate every sensor's cost block, select, then verify observability.

    ``data_mode="shared"`` records all evaluated sensors in one run;
    ``"sequential"`` gives each sensor its own run and its own regressor
    pseudoinverse.
    """
    p, m = plant.p, plant.m
    seed = tuple(sorted(cfg.seed_sensors))
    if not seed:
        raise ConfigError("a known observable seed sensor set is required")
    policy = cfg.policy()
    if policy not in ("seed", "relax", "none"):
        raise ConfigError(f"unknown observability policy {policy!r}")
    candidates = sorted(set(range(1, p + 1) if cfg.candidates is None else cfg.candidates))
    start = seed if policy == "seed" else ()
    pool = sorted(set(candidates) - set(start))
    evaluated = sorted(set(pool) | set(start))
    if cfg.p_prime < len(start) or cfg.p_prime - len(start) > len(pool):
        raise ConfigError(f"cannot build a set of {cfg.p_prime} sensors from seed {start} "
                          f"and {len(pool)} candidates")
    if cfg.data_mode not in ("shared", "sequential"):
        raise ConfigError(f"unknown data mode {cfg.data_mode!r}")
    metric = cfg.metric
    horizon = "inf" if metric.infinite else "fin"
    T = metric.horizon
    timings = {"collect": 0.0, "assemble": 0.0, "pinv": 0.0, "scoring": 0.0, "select": 0.0, "verify": 0.0}
    notes: list[str] = []
    estimates = {}
    rank_info = {}

    def build(traj, sensors):
        t0 = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RankDeficitWarning)
            bundle = assemble(traj, cfg.N, horizon, metric.discount, sensors=sensors,
                              samples=cfg.samples, stride=cfg.stride, rtol=cfg.pinv_rtol,
                              atol=cfg.pinv_atol, n=cfg.state_dim)
        notes.extend(str(w.message) for w in caught if issubclass(w.category, RankDeficitWarning))
        timings["assemble"] += time.perf_counter() - t0
        timings["pinv"] += bundle.pinv_seconds
        return bundle

    shared_traj = None
    if cfg.data_mode == "shared":
        t0 = time.perf_counter()
        exc = excitation_for(cfg, m, len(seed), len(evaluated))
        shared_traj = collect(plant, seed, evaluated, exc)
        timings["collect"] += time.perf_counter() - t0
        bundle = build(shared_traj, evaluated)
        rank_info = bundle.rank_report.as_dict()
        t0 = time.perf_counter()
        estimates = estimate_all(bundle, evaluated, T, threads=cfg.threads)
        timings["scoring"] += time.perf_counter() - t0
    else:
        for j in evaluated:
            t0 = time.perf_counter()
            traj = collect(plant, seed, (j,), excitation_for(cfg, m, len(seed), 1, offset=j))
            timings["collect"] += time.perf_counter() - t0
            bundle = build(traj, (j,))
            rank_info[str(j)] = bundle.rank_report.as_dict()
            t0 = time.perf_counter()
            estimates.update(estimate_all(bundle, (j,), T))
            timings["scoring"] += time.perf_counter() - t0

    t0 = time.perf_counter()
    blocks = {j: estimates[j].cost_block for j in evaluated}
    scores = {j: float(np.trace(blocks[j])) for j in evaluated}
    order, fallback = rank_sensors(blocks, metric.kind, cfg.p_prime, start, cfg.logdet_floor)
    chosen = order[:cfg.p_prime]
    if fallback:
        notes.append("greedy met only singular candidate sums; ties broken by trace")
    by_horizon = {}
    if not metric.infinite:
        for t in range(1, T + 1):
            o, _ = rank_sensors({j: estimates[j].block_at(t) for j in evaluated}, metric.kind,
                                cfg.p_prime, start, cfg.logdet_floor)
            by_horizon[t] = sorted(o[:cfg.p_prime])
    timings["select"] += time.perf_counter() - t0

    # observability of the chosen set, from data alone
    t0 = time.perf_counter()

    def check(sensors):
        if shared_traj is not None:
            traj = shared_traj
        else:
            traj = collect(plant, seed, sensors, excitation_for(cfg, m, len(seed), len(sensors), offset=p + 1))
        obs = assemble_obs_matrices(traj, cfg.N, sensors=sensors)
        return verify_observability(obs, rtol=cfg.rank_rtol, n=cfg.state_dim)

    verdict = None
    try:
        verdict = check(tuple(sorted(chosen)))
        if policy == "relax":
            nxt = len(chosen)
            while verdict.verdict != OBSERVABLE and nxt < len(order):
                chosen = order[:nxt + 1]
                nxt += 1
                verdict = check(tuple(sorted(chosen)))
            if len(chosen) > cfg.p_prime:
                notes.append(f"cardinality relaxed to {len(chosen)} sensors to reach observability")
    except (ConfigError, DataError) as exc:
        notes.append(f"observability check skipped: {exc}")
    timings["verify"] += time.perf_counter() - t0

    total = sum((blocks[j] for j in sorted(chosen)), np.zeros((m, m)))
    if metric.kind == "trace":
        subset = float(sum(scores[j] for j in sorted(chosen)))
    else:
        subset = metric_value(total, "logdet", cfg.logdet_floor)
    return SelectionResult(chosen=SelectionIndex(tuple(chosen), p), per_sensor_scores=scores,
                           subset_metric=subset, metric=metric, observability=verdict,
                           timings=timings, rank=rank_info, warnings=notes,
                           pick_order=list(chosen), trace_fallback=fallback,
                           chosen_by_horizon=by_horizon, estimates=estimates)
