"""Discrete-time LTI plants, sensor selections, simulation and excitation."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DimensionError


@dataclass(frozen=True)
class LtiSystem:
    """``x(t+1) = A x(t) + B u(t)``, ``y(t) = C x(t)``; each row of ``C`` is one sensor."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    x0: np.ndarray | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        C = np.asarray(self.C, dtype=float)
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.ndim == 1:
            B = B.reshape(n, -1)
        if C.ndim == 1:
            C = C.reshape(-1, n)
        if B.shape[0] != n or B.shape[1] < 1:
            raise DimensionError(f"B has shape {B.shape}, expected ({n}, m)")
        if C.shape[1] != n or C.shape[0] < 1:
            raise DimensionError(f"C has shape {C.shape}, expected (p, {n})")
        x0 = np.zeros(n) if self.x0 is None else np.asarray(self.x0, dtype=float).ravel()
        if x0.shape != (n,):
            raise DimensionError(f"x0 has length {x0.size}, expected {n}")
        labels = None if self.labels is None else tuple(str(s) for s in self.labels)
        if labels is not None and len(labels) != C.shape[0]:
            raise DimensionError("one label per sensor row of C is required")
        for name, val in (("A", A), ("B", B), ("C", C), ("x0", x0), ("labels", labels)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def sensor_rows(self, sel: "SelectionIndex") -> np.ndarray:
        if sel.p != self.p:
            raise DimensionError(f"selection is over {sel.p} sensors, plant has {self.p}")
        return self.C[sel.rows]


@dataclass(frozen=True)
class SelectionIndex:
    """A set of sensors, numbered ``1..p`` as in the sensor list of ``C``."""

    indices: tuple[int, ...]
    p: int

    def __post_init__(self):
        idx = [int(i) for i in self.indices]
        if not idx:
            raise ConfigError("a sensor selection must be nonempty")
        if len(set(idx)) != len(idx):
            raise ConfigError(f"duplicate sensors in {idx}")
        if min(idx) < 1 or max(idx) > self.p:
            raise ConfigError(f"sensor indices {idx} outside 1..{self.p}")
        object.__setattr__(self, "indices", tuple(sorted(idx)))

    @classmethod
    def of(cls, indices: Iterable[int], p: int) -> "SelectionIndex":
        return cls(tuple(indices), p)

    @property
    def rows(self) -> np.ndarray:
        """Zero-based row positions in ``C``."""
        return np.asarray(self.indices, dtype=int) - 1

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, j) -> bool:
        return j in self.indices

    def union(self, other: Iterable[int]) -> "SelectionIndex":
        return SelectionIndex(tuple(set(self.indices) | set(other)), self.p)


def selection_matrix(sel: SelectionIndex) -> np.ndarray:
    return np.eye(sel.p)[sel.rows]


@dataclass(frozen=True)
class Metric:
    """Selection objective: ``kind`` in {trace, logdet}; ``horizon=None`` means infinite."""

    kind: str = "trace"
    horizon: int | None = None
    discount: float = 1.0

    def __post_init__(self):
        if self.kind not in ("trace", "logdet"):
            raise ConfigError(f"unknown metric kind {self.kind!r}")
        if self.horizon is not None and int(self.horizon) < 0:
            raise ConfigError("finite horizon must be nonnegative")
        if not 0.0 < self.discount <= 1.0:
            raise ConfigError(f"discount must lie in (0, 1], got {self.discount}")

    @property
    def infinite(self) -> bool:
        return self.horizon is None

    def label(self) -> str:
        if self.infinite:
            return f"{self.kind}_inf(a={self.discount:g})"
        return f"{self.kind}_fin(T={self.horizon})"


@dataclass(frozen=True)
class ExcitationConfig:
    seed: int = 0
    horizon: int = 1000
    amplitude: float = 1.0
    kind: str = "gaussian-iid"
    tones: int = 64

    def __post_init__(self):
        if self.kind not in ("gaussian-iid", "sum-of-sinusoids"):
            raise ConfigError(f"unknown excitation kind {self.kind!r}")
        if self.horizon < 1:
            raise ConfigError("excitation horizon must be positive")
        if self.amplitude < 0:
            raise ConfigError("excitation amplitude must be nonnegative")


@dataclass(frozen=True)
class Trajectory:
    """Input and the two output channels recorded over one run, rows indexed by time.

    ``y_hat`` comes from the known observable sensor set, ``y_tilde`` from the
    sensors under evaluation (one column per sensor, labelled by ``eval_sensors``).
    """

    u: np.ndarray
    y_hat: np.ndarray
    y_tilde: np.ndarray
    t0: int = 0
    hat_sensors: tuple[int, ...] = ()
    eval_sensors: tuple[int, ...] = ()

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        yh = np.asarray(self.y_hat, dtype=float)
        yt = np.asarray(self.y_tilde, dtype=float)
        L = u.shape[0]
        yh = yh.reshape(L, -1)
        yt = yt.reshape(L, -1)
        if not (u.shape[0] == yh.shape[0] == yt.shape[0]):
            raise DimensionError("trajectory channels have different lengths")
        for name, val in (("u", u), ("y_hat", yh), ("y_tilde", yt)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "hat_sensors", tuple(int(i) for i in self.hat_sensors))
        object.__setattr__(self, "eval_sensors", tuple(int(i) for i in self.eval_sensors))

    def __len__(self) -> int:
        return self.u.shape[0]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def r(self) -> int:
        return self.y_hat.shape[1]

    @property
    def q(self) -> int:
        return self.y_tilde.shape[1]

    def eval_column(self, sensor: int) -> int:
        """Column of ``y_tilde`` holding the given sensor."""
        try:
            return self.eval_sensors.index(sensor)
        except ValueError:
            raise ConfigError(f"sensor {sensor} was not recorded in this trajectory") from None


def simulate_states(sys: LtiSystem, u) -> np.ndarray:
    """States ``x(0..L)`` for an input sequence of length ``L``."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u.reshape(-1, sys.m) if sys.m > 1 else u[:, None]
    if u.ndim != 2 or u.shape[1] != sys.m:
        raise DimensionError(f"input has shape {u.shape}, expected (L, {sys.m})")
    if u.shape[0] < 1:
        raise DimensionError("input sequence must be nonempty")
    L = u.shape[0]
    x = np.empty((L + 1, sys.n))
    x[0] = sys.x0
    At, Bt = sys.A.T, sys.B.T
    for t in range(L):
        x[t + 1] = x[t] @ At + u[t] @ Bt
    return x


def simulate(sys: LtiSystem, u, sensors_hat: SelectionIndex,
             sensors_eval: SelectionIndex) -> Trajectory:
    x = simulate_states(sys, u)[:-1]
    u = np.asarray(u, dtype=float).reshape(x.shape[0], sys.m)
    return Trajectory(u=u,
                      y_hat=x @ sys.sensor_rows(sensors_hat).T,
                      y_tilde=x @ sys.sensor_rows(sensors_eval).T,
                      hat_sensors=sensors_hat.indices,
                      eval_sensors=sensors_eval.indices)


def generate_excitation(cfg: ExcitationConfig, m: int) -> np.ndarray:
    """Input sequence of shape ``(cfg.horizon, m)``, deterministic in ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    if cfg.kind == "gaussian-iid":
        u = rng.standard_normal((cfg.horizon, m))
    else:
        t = np.arange(cfg.horizon)[:, None, None]
        freqs = rng.uniform(0.0, np.pi, size=(1, m, cfg.tones))
        phases = rng.uniform(0.0, 2 * np.pi, size=(1, m, cfg.tones))
        # unit average power per channel
        u = np.cos(freqs * t + phases).sum(axis=2) * math.sqrt(2.0 / cfg.tones)
    return cfg.amplitude * u


def spectral_radius(sys_or_A) -> float:
    A = sys_or_A.A if isinstance(sys_or_A, LtiSystem) else np.atleast_2d(np.asarray(sys_or_A, float))
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


# -- file formats ---------------------------------------------------------

def plant_to_dict(sys: LtiSystem, meta: dict | None = None) -> dict:
    out = {
        "A": sys.A.tolist(),
        "B": sys.B.tolist(),
        "C": sys.C.tolist(),
        "x0": sys.x0.tolist(),
        "sensor_labels": list(sys.labels) if sys.labels else [f"y{j}" for j in range(1, sys.p + 1)],
    }
    if meta:
        out["meta"] = meta
    return out


def plant_from_dict(d: dict) -> LtiSystem:
    try:
        return LtiSystem(A=d["A"], B=d["B"], C=d["C"], x0=d.get("x0"),
                         labels=d.get("sensor_labels"))
    except KeyError as exc:
        raise ConfigError(f"plant file is missing field {exc}") from None


def save_plant(sys: LtiSystem, path, meta: dict | None = None) -> None:
    Path(path).write_text(json.dumps(plant_to_dict(sys, meta), indent=1) + "\n")


def load_plant(path) -> LtiSystem:
    return plant_from_dict(json.loads(Path(path).read_text()))


def write_trajectory_csv(traj: Trajectory, path) -> None:
    m, r, q = traj.m, traj.r, traj.q
    header = (["t"] + [f"u_{i}" for i in range(1, m + 1)]
              + [f"yhat_{i}" for i in range(1, r + 1)]
              + [f"ytilde_{i}" for i in range(1, q + 1)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t in range(len(traj)):
            row = [traj.t0 + t]
            row += [repr(float(v)) for v in traj.u[t]]
            row += [repr(float(v)) for v in traj.y_hat[t]]
            row += [repr(float(v)) for v in traj.y_tilde[t]]
            w.writerow(row)


def read_trajectory_csv(path, hat_sensors: Sequence[int] = (),
                        eval_sensors: Sequence[int] = ()) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not body:
        raise DimensionError(f"{path}: trajectory file has no samples")
    data = np.array([[float(v) for v in row] for row in body])
    cols = {h: i for i, h in enumerate(header)}

    def block(prefix):
        idx = [i for h, i in cols.items() if h.startswith(prefix + "_")]
        return data[:, sorted(idx, key=lambda i: int(header[i].split("_")[1]))]

    return Trajectory(u=block("u"), y_hat=block("yhat"), y_tilde=block("ytilde"),
                      t0=int(data[0, cols["t"]]), hat_sensors=tuple(hat_sensors),
                      eval_sensors=tuple(eval_sensors))
