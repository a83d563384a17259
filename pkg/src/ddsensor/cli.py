"""Command-line driver: ``ddsensor {generate,collect,select,verify,oracle,sweep} SCENARIO``.

A scenario is one JSON document::

    {"schema_version": 1,
     "plant": {"file": "plant.json"}
              | {"generator": "random-stable", "n": 6, "m": 2, "p": 8, "seed": 0, "rho": 0.9}
              | {"generator": "oscillator-network", "nodes": 10, "seed": 0},
     "seed_sensors": [1, 3], "candidates": null, "p_prime": 4,
     "metric": {"kind": "trace", "discount": 0.99}      (or {"kind": ..., "horizon": 8}),
     "N": 4,
     "excitation": {"seed": 0, "kind": "gaussian-iid", "amplitude": 1.0},
     "samples": null, "stride": 1, "data_mode": "shared", "observability": null,
     "tolerances": {"pinv_rtol": null, "pinv_atol": null, "rank_rtol": null, "logdet_floor": 1e-12},
     "output_dir": "out"}

Relative paths resolve against the scenario file. The output directory is
taken from ``--out-dir``, then the scenario, then ``$DDSENSOR_OUTPUT_DIR``,
then ``./ddsensor-out``.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import oracle
from .errors import ConfigError, DDSensorError
from .estimator import LOGDET_FLOOR
from .generators import oscillator_network, random_stable_system
from .lti_core import (ExcitationConfig, LtiSystem, Metric, load_plant, save_plant,
                       spectral_radius, write_trajectory_csv)
from .regressors import assemble_obs_matrices
from .selector import (PipelineConfig, collect, excitation_for, rank_sensors, run_selection,
                       verify_observability, write_score_csv)

SCHEMA_VERSION = 1
OUTPUT_ENV = "DDSENSOR_OUTPUT_DIR"
MAX_RANDOM_RHO = 0.95


@dataclass
class Scenario:
    plant: dict
    seed_sensors: list[int]
    p_prime: int
    metric: Metric
    N: int
    base_dir: Path
    candidates: list[int] | None = None
    excitation: dict = field(default_factory=dict)
    samples: int | None = None
    stride: int = 1
    data_mode: str = "shared"
    observability: str | None = None
    tolerances: dict = field(default_factory=dict)
    output_dir: str | None = None

    def tol(self, key: str, default=None):
        return self.tolerances.get(key, default)


def _require(d: dict, key: str):
    if key not in d:
        raise ConfigError(f"scenario is missing {key!r}")
    return d[key]


def parse_scenario(doc: dict, base_dir: Path = Path(".")) -> Scenario:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {doc.get('schema_version')!r}, expected {SCHEMA_VERSION}")
    met = _require(doc, "metric")
    horizon = met.get("horizon")
    discount = met.get("discount", 1.0 if horizon is not None else None)
    if horizon is None:
        if discount is None or not 0.0 < discount < 1.0:
            raise ConfigError("infinite-horizon metrics need a discount strictly between 0 and 1")
    elif int(horizon) < 1:
        raise ConfigError("finite-horizon metrics need T >= 1")
    metric = Metric(kind=met.get("kind", "trace"), horizon=None if horizon is None else int(horizon),
                    discount=float(discount))
    seed = [int(j) for j in _require(doc, "seed_sensors")]
    if not seed:
        raise ConfigError("seed_sensors must be nonempty")
    N = int(_require(doc, "N"))
    if N < 1:
        raise ConfigError("N must be positive")
    known = {"schema_version", "plant", "seed_sensors", "candidates", "p_prime", "metric", "N",
             "excitation", "samples", "stride", "data_mode", "observability", "tolerances",
             "output_dir", "description"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"unknown scenario fields {sorted(extra)}")
    return Scenario(plant=_require(doc, "plant"), seed_sensors=seed, p_prime=int(_require(doc, "p_prime")),
                    metric=metric, N=N, base_dir=base_dir, candidates=doc.get("candidates"),
                    excitation=doc.get("excitation") or {}, samples=doc.get("samples"),
                    stride=int(doc.get("stride", 1)), data_mode=doc.get("data_mode", "shared"),
                    observability=doc.get("observability"), tolerances=doc.get("tolerances") or {},
                    output_dir=doc.get("output_dir"))


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"scenario file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_scenario(doc, path.parent)


def generate_plant(spec: dict) -> tuple[LtiSystem, dict]:
    gen = spec.get("generator")
    if gen == "random-stable":
        rho = float(spec.get("rho", 0.9))
        if not 0.0 < rho <= MAX_RANDOM_RHO:
            raise ConfigError(f"rho must lie in (0, {MAX_RANDOM_RHO}], got {rho}")
        kw = {k: int(_require(spec, k)) for k in ("n", "m", "p")}
        plant = random_stable_system(**kw, seed=int(spec.get("seed", 0)), rho=rho)
    elif gen == "oscillator-network":
        plant = oscillator_network(nodes=int(spec.get("nodes", 10)), seed=int(spec.get("seed", 0)),
                                   dt=float(spec.get("dt", 0.2)), grounding=float(spec.get("grounding", 0.1)))
    else:
        raise ConfigError(f"unknown plant generator {gen!r}")
    return plant, {"generator": dict(spec), "spectral_radius": spectral_radius(plant)}


def build_plant(sc: Scenario) -> LtiSystem:
    if "file" in sc.plant:
        path = sc.base_dir / sc.plant["file"]
        try:
            return load_plant(path)
        except FileNotFoundError:
            raise ConfigError(f"plant file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return generate_plant(sc.plant)[0]


def output_dir(sc: Scenario | None, flag: str | None) -> Path:
    if flag:
        out = Path(flag)
    elif sc is not None and sc.output_dir:
        out = sc.base_dir / sc.output_dir
    else:
        out = Path(os.environ.get(OUTPUT_ENV, "ddsensor-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def excitation_config(sc: Scenario, horizon: int | None = None) -> ExcitationConfig | None:
    if not sc.excitation and horizon is None:
        return None
    e = sc.excitation
    return ExcitationConfig(seed=int(e.get("seed", 0)), horizon=int(e.get("horizon", horizon or 1)),
                            amplitude=float(e.get("amplitude", 1.0)),
                            kind=e.get("kind", "gaussian-iid"), tones=int(e.get("tones", 64)))


def pipeline_config(sc: Scenario, threads: int = 1, metric: Metric | None = None,
                    state_dim: int | None = None) -> PipelineConfig:
    return PipelineConfig(seed_sensors=sc.seed_sensors, p_prime=sc.p_prime, metric=metric or sc.metric,
                          N=sc.N, candidates=sc.candidates, excitation=excitation_config(sc),
                          samples=sc.samples, stride=sc.stride, data_mode=sc.data_mode,
                          pinv_rtol=sc.tol("pinv_rtol"), pinv_atol=sc.tol("pinv_atol"),
                          rank_rtol=sc.tol("rank_rtol"),
                          logdet_floor=float(sc.tol("logdet_floor", LOGDET_FLOOR)),
                          observability=sc.observability, threads=threads, state_dim=state_dim)


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _rel(est: float, ref: float) -> float:
    return abs(est - ref) / max(abs(ref), 1e-12)


# -- commands -----------------------------------------------------------------

def cmd_generate(args) -> int:
    sc = load_scenario(args.scenario)
    if "file" in sc.plant:
        raise ConfigError("scenario already points at a plant file; nothing to generate")
    plant, meta = generate_plant(sc.plant)
    path = Path(args.out) if args.out else output_dir(sc, args.out_dir) / "plant.json"
    save_plant(plant, path, meta)
    print(f"wrote {path} (n={plant.n}, m={plant.m}, p={plant.p}, rho={meta['spectral_radius']:.6g})")
    return 0


def cmd_collect(args) -> int:
    sc = load_scenario(args.scenario)
    plant = build_plant(sc)
    cfg = pipeline_config(sc)
    evaluated = sorted(set(range(1, plant.p + 1) if sc.candidates is None else sc.candidates)
                       | set(sc.seed_sensors))
    exc = excitation_for(cfg, plant.m, len(sc.seed_sensors), len(evaluated))
    traj = collect(plant, sc.seed_sensors, evaluated, exc)
    out = output_dir(sc, args.out_dir)
    write_trajectory_csv(traj, out / "trajectory.csv")
    _dump({"schema_version": SCHEMA_VERSION, "hat_sensors": list(traj.hat_sensors),
           "eval_sensors": list(traj.eval_sensors), "length": len(traj),
           "excitation": {"seed": exc.seed, "horizon": exc.horizon, "amplitude": exc.amplitude,
                          "kind": exc.kind, "tones": exc.tones}}, out / "trajectory.json")
    print(f"wrote {out / 'trajectory.csv'} ({len(traj)} samples)")
    return 0


def _oracle_section(plant: LtiSystem, sc: Scenario, metric: Metric, result, out: Path) -> tuple[dict, dict]:
    """Oracle costs, per-sensor errors (also written to errors.csv) and oracle choices."""
    sensors = sorted(result.per_sensor_scores)
    floor = float(sc.tol("logdet_floor", LOGDET_FLOOR))
    start = sc.seed_sensors if result_policy(sc, metric) == "seed" else ()
    errors: dict[int, dict[int, float]] = {}
    rows = []
    if metric.infinite:
        ob = oracle.sensor_blocks(plant, metric, sensors)
        for j in sensors:
            ref, est = float(np.trace(ob[j])), result.per_sensor_scores[j]
            errors.setdefault(0, {})[j] = _rel(est, ref)
            rows.append([j, "inf", repr(est), repr(ref), repr(abs(est - ref)), repr(_rel(est, ref))])
        final_blocks = ob
        by_t_blocks = {}
    else:
        seq = oracle.finite_horizon_sensor_blocks(plant, metric.horizon, sensors)
        for j in sensors:
            for t in range(1, metric.horizon + 1):
                est = float(np.trace(result.estimates[j].block_at(t)))
                ref = float(np.trace(seq[j][t]))
                errors.setdefault(t, {})[j] = _rel(est, ref)
                rows.append([j, t, repr(est), repr(ref), repr(abs(est - ref)), repr(_rel(est, ref))])
        final_blocks = {j: seq[j][-1] for j in sensors}
        by_t_blocks = {t: {j: seq[j][t] for j in sensors} for t in range(1, metric.horizon + 1)}
    with open(out / "errors.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sensor", "horizon", "estimate", "oracle", "abs_error", "rel_error"])
        w.writerows(rows)

    order, _ = rank_sensors(final_blocks, metric.kind, sc.p_prime, start, floor)
    chosen = sorted(order[:sc.p_prime])
    section = {"chosen": chosen, "matches": chosen == list(result.chosen.indices),
               "max_rel_error": max(max(e.values()) for e in errors.values()),
               "method": "top-k" if metric.kind == "trace" else "greedy"}
    pool = sorted(set(sensors) - set(start))
    if len(pool) <= oracle.BRUTE_FORCE_MAX_P and metric.kind == "logdet":
        bf = oracle.brute_force_select(plant, sc.p_prime, metric, candidates=sensors,
                                       seed_set=start or None, floor=floor)
        section["brute_force"] = list(bf.indices)
    if by_t_blocks:
        per_t = {}
        for t, blocks in by_t_blocks.items():
            o, _ = rank_sensors(blocks, metric.kind, sc.p_prime, start, floor)
            per_t[str(t)] = sorted(o[:sc.p_prime])
        section["chosen_by_horizon"] = per_t
        section["matches_by_horizon"] = {k: v == result.chosen_by_horizon[int(k)] for k, v in per_t.items()}
    return section, errors


def result_policy(sc: Scenario, metric: Metric) -> str:
    if sc.observability is not None:
        return sc.observability
    return "seed" if metric.kind == "logdet" else "none"


def _select(args, horizons: list[int] | None = None) -> int:
    sc = load_scenario(args.scenario)
    plant = build_plant(sc)
    metric = sc.metric
    if horizons:
        metric = Metric(kind=metric.kind, horizon=max(horizons), discount=1.0)
    elif getattr(args, "horizon", None):
        metric = Metric(kind=metric.kind, horizon=args.horizon, discount=1.0)
    cfg = pipeline_config(sc, threads=args.threads, metric=metric,
                          state_dim=plant.n if args.oracle else None)
    out = output_dir(sc, args.out_dir)
    t0 = time.perf_counter()
    result = run_selection(plant, cfg)
    wall = time.perf_counter() - t0
    doc = result.as_dict()
    if horizons:
        doc["chosen_by_horizon"] = {str(t): result.chosen_by_horizon[t] for t in sorted(set(horizons))}
    errors = None
    if args.oracle:
        doc["oracle"], errors = _oracle_section(plant, sc, metric, result, out)
    _dump(doc, out / "result.json")
    _dump({**{k: round(v, 6) for k, v in result.timings.items()}, "total": round(wall, 6)},
          out / "timing.json")
    write_score_csv(result, out / "scores.csv")
    if not args.no_plots:
        from . import plotting
        plotting.plot_scores(result.per_sensor_scores, result.chosen, out / "scores.png",
                             ylabel=f"trace score, {metric.label()}")
        if errors:
            plotting.plot_error_scatter(errors, out / "errors.png")
        if result.chosen_by_horizon:
            plotting.plot_selection_grid(result.chosen_by_horizon, plant.p, out / "selection.png")
    for note in result.warnings:
        print(f"warning: {note}", file=sys.stderr)
    verdict = result.observability.verdict if result.observability else "not checked"
    print(f"chosen {list(result.chosen.indices)}; observability: {verdict}; "
          f"pinv {result.timings['pinv']:.3f}s, scoring {result.timings['scoring']:.3f}s")
    return 0


def cmd_select(args) -> int:
    return _select(args)


def parse_horizons(text: str) -> list[int]:
    """``"1-8"``, ``"1..8"`` or ``"1,2,5"``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        for sep in ("..", "-"):
            if sep in part:
                lo, hi = part.split(sep, 1)
                out.extend(range(int(lo), int(hi) + 1))
                break
        else:
            out.append(int(part))
    if not out or min(out) < 1:
        raise ConfigError(f"bad horizon list {text!r}")
    return sorted(set(out))


def cmd_sweep(args) -> int:
    return _select(args, horizons=parse_horizons(args.horizons))


def cmd_verify(args) -> int:
    sc = load_scenario(args.scenario)
    plant = build_plant(sc)
    sensors = sorted(int(s) for s in args.sensors.split(","))
    N = sc.N
    need = N * plant.m + N * max(len(sc.seed_sensors), len(sensors))
    cfg = excitation_config(sc) or ExcitationConfig()
    length = max(cfg.horizon, N + 4 * need)
    exc = ExcitationConfig(seed=cfg.seed, horizon=length, amplitude=cfg.amplitude,
                           kind=cfg.kind, tones=cfg.tones)
    traj = collect(plant, sc.seed_sensors, sensors, exc)
    obs = assemble_obs_matrices(traj, N)
    rtol = args.rank_rtol if args.rank_rtol is not None else sc.tol("rank_rtol")
    verdict = verify_observability(obs, rtol=rtol, n=plant.n if args.oracle else None)
    doc = {"schema_version": SCHEMA_VERSION, "N": N, "seed_sensors": sc.seed_sensors,
           "rank_rtol": rtol, **verdict.as_dict()}
    if args.oracle:
        doc["oracle_observable"] = oracle.is_observable(plant.A, plant.C[np.asarray(sensors) - 1])
    out = output_dir(sc, args.out_dir)
    _dump(doc, out / "verify.json")
    print(f"{verdict.verdict}: rank(Z)={verdict.rank_Z}, rank(Z~)={verdict.rank_Z_tilde}, "
          f"min sv {verdict.min_singular_value:.3e}")
    return 0


def cmd_oracle(args) -> int:
    sc = load_scenario(args.scenario)
    plant = build_plant(sc)
    metric = sc.metric
    doc = oracle.oracle_report(plant, metric)
    sensors = sorted(set(range(1, plant.p + 1) if sc.candidates is None else sc.candidates)
                     | set(sc.seed_sensors))
    start = sc.seed_sensors if result_policy(sc, metric) == "seed" else ()
    floor = float(sc.tol("logdet_floor", LOGDET_FLOOR))
    pool = sorted(set(sensors) - set(start))
    if len(pool) <= oracle.BRUTE_FORCE_MAX_P:
        bf = oracle.brute_force_select(plant, sc.p_prime, metric, candidates=sensors,
                                       seed_set=start or None, floor=floor)
        doc["brute_force"] = list(bf.indices)
        doc["brute_force_value"] = _json_num(oracle.true_cost(plant, bf, metric, floor))
    doc["observable_seed"] = oracle.is_observable(plant.A, plant.C[np.asarray(sc.seed_sensors) - 1])
    out = output_dir(sc, args.out_dir)
    _dump(doc, out / "oracle.json")
    print(f"wrote {out / 'oracle.json'}")
    return 0


def _json_num(x: float):
    return x if math.isfinite(x) else ("-inf" if x < 0 else "inf")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ddsensor", description="Sensor selection from input/output data.")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("scenario", help="scenario JSON file")
        p.add_argument("--out-dir", help=f"output directory (default: scenario, then ${OUTPUT_ENV})")
        p.set_defaults(func=func)
        return p

    g = add("generate", cmd_generate, "write the plant described by the scenario")
    g.add_argument("--out", help="plant file path (default: OUT_DIR/plant.json)")
    add("collect", cmd_collect, "simulate one excitation run and write the trajectory CSV")
    for name, func, help_ in (("select", cmd_select, "run the full selection pipeline"),
                              ("sweep", cmd_sweep, "finite-horizon selection for several horizons")):
        p = add(name, func, help_)
        p.add_argument("--oracle", action="store_true", help="compare against model-based ground truth")
        p.add_argument("--no-plots", action="store_true")
        p.add_argument("--threads", type=int, default=1, help="worker cap for per-sensor scoring")
        if name == "select":
            p.add_argument("--horizon", type=int, help="override with a finite horizon T")
        else:
            p.add_argument("--horizons", default="1-8", help="e.g. 1-8 or 1,2,4")
    v = add("verify", cmd_verify, "data-driven observability check of a sensor set")
    v.add_argument("--sensors", required=True, help="comma-separated 1-based sensor indices")
    v.add_argument("--rank-rtol", type=float, help="relative singular-value threshold")
    v.add_argument("--oracle", action="store_true", help="use the true state dimension")
    add("oracle", cmd_oracle, "write model-based costs and the brute-force choice")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", category=RuntimeWarning)
            return args.func(args)
    except DDSensorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
