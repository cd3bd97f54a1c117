"""Fixed-step Euler-Maruyama simulation of the full and the external system.

The same increment ``sigma(Z_k) dW_k`` enters the X- and the Z-update at
every step; Y is moved by its drift only. Gating-type bounded components are
clamped back into the state space after each step and the clamp magnitude is
tracked.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel

from .arrays import ArrayLike, FloatArray, as_vector
from .errors import EmptyChainError, StateSpaceEscapeError
from .models import DiffusionModel, FullState, block_labels
from .rng import brownian_increments
from .signals import ParamPoint, SignalModel, eval_signal

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-3
CLAMP_TOLERANCE = 1e-3


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A path sampled on the uniform grid ``t_k = k * step``.

    Columns are labelled by block (``X1``, ``Y2``, ``Z1``...). ``increments``
    keeps the Brownian increments a simulated path was driven by; it is not
    serialised.
    """

    step: float
    values: FloatArray
    labels: tuple[str, ...]
    seed: int | None = None
    replication: int = 0
    increments: FloatArray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(self.labels):
            raise ValueError(
                f"values of shape {values.shape} do not match {len(self.labels)} labels"
            )
        if values.shape[0] < 1:
            raise ValueError("a trajectory needs at least one row")
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if not np.all(np.isfinite(values)):
            raise ValueError("trajectory contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n_steps(self) -> int:
        return int(self.values.shape[0] - 1)

    @property
    def horizon(self) -> float:
        return self.n_steps * self.step

    @property
    def times(self) -> FloatArray:
        return np.arange(self.values.shape[0]) * self.step

    def columns(self, prefix: str) -> list[int]:
        return [i for i, label in enumerate(self.labels) if label.startswith(prefix)]

    def block(self, prefix: str) -> FloatArray:
        return self.values[:, self.columns(prefix)]  # type: ignore[no-any-return]

    @property
    def x_block(self) -> FloatArray:
        return self.block("X")

    @property
    def y_block(self) -> FloatArray:
        return self.block("Y")

    @property
    def z_block(self) -> FloatArray:
        return self.block("Z")

    def select(self, prefix: str) -> "Trajectory":
        cols = self.columns(prefix)
        if not cols:
            raise ValueError(f"trajectory has no '{prefix}' components")
        return Trajectory(
            step=self.step,
            values=self.values[:, cols],
            labels=tuple(self.labels[i] for i in cols),
            seed=self.seed,
            replication=self.replication,
            increments=self.increments,
        )

    def z_only(self) -> "Trajectory":
        return self.select("Z")

    def node_index(self, t: float) -> int:
        """Index of the grid node nearest to time ``t``."""
        return int(round(t / self.step))

    def truncate(self, horizon: float) -> "Trajectory":
        """Restriction to [0, horizon]."""
        last = self.node_index(horizon)
        if last > self.n_steps:
            raise ValueError(f"horizon {horizon} exceeds the trajectory horizon {self.horizon}")
        increments = None if self.increments is None else self.increments[:last]
        return Trajectory(
            step=self.step,
            values=self.values[: last + 1],
            labels=self.labels,
            seed=self.seed,
            replication=self.replication,
            increments=increments,
        )


def step_count(horizon: float, step: float) -> int:
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    if horizon < 0:
        raise ValueError(f"horizon must be non-negative, got {horizon}")
    steps = int(round(horizon / step))
    if not math.isclose(steps * step, horizon, rel_tol=1e-9, abs_tol=1e-12):
        logger.warning(f"horizon {horizon} is not a multiple of step {step}; using {steps} steps")
    return steps


def _forcing(
    model: DiffusionModel,
    signal: SignalModel,
    p: ParamPoint,
    z0: FloatArray,
    steps: int,
    step: float,
    seed: int,
    replication: int,
) -> tuple[FloatArray, FloatArray, FloatArray | None]:
    """Signal contribution ``S(t_k) h``, increments dW and, for constant sigma, sigma dW."""
    times = np.arange(steps) * step
    signal_part = eval_signal(signal, p, times).reshape(steps, model.dim_n) * step
    dw = brownian_increments(seed, steps, model.dim_m, step, replication)
    noise = None
    if model.constant_volatility:
        noise = dw @ np.asarray(model.sigma(z0), dtype=np.float64).T
    return signal_part, dw, noise


def simulate_full(
    model: DiffusionModel,
    signal: SignalModel,
    p: ParamPoint,
    start: FullState,
    horizon: float,
    step: float = DEFAULT_STEP,
    seed: int = 0,
    replication: int = 0,
    clamp_tolerance: float = CLAMP_TOLERANCE,
) -> Trajectory:
    """Euler-Maruyama path of (X, Y, Z) on [0, horizon]."""
    steps = step_count(horizon, step)
    space = model.state_space
    state = start.stack()
    if not space.contains(state):
        raise ValueError("start state lies outside the declared state space")
    n, dim_l = model.dim_n, model.dim_l
    labels = block_labels(n, dim_l)
    values = np.empty((steps + 1, state.size))
    values[0] = state
    signal_part, dw, noise = _forcing(model, signal, p, start.z, steps, step, seed, replication)
    bounded = bool(np.any(space.bounded_mask))
    clamped = 0.0
    x, y, z = start.x.copy(), start.y.copy(), start.z.copy()
    for k in range(steps):
        shared = noise[k] if noise is not None else model.sigma(z) @ dw[k]
        forcing = signal_part[k] + shared
        reversion = model.b(z) * step
        x_next = x + (model.f(x, y) * step + reversion) + forcing
        y_next = y + model.g(x, y) * step
        z = z + reversion + forcing
        x, y = x_next, y_next
        row = np.concatenate([x, y, z])
        if not np.all(np.isfinite(row)):
            raise StateSpaceEscapeError("simulation produced non-finite values", time=(k + 1) * step)
        if bounded and not space.contains(row):
            row, magnitude = space.project(row)
            clamped += magnitude
            if clamped > clamp_tolerance:
                raise StateSpaceEscapeError(
                    f"state left the state space (cumulative clamp {clamped:.3g})",
                    time=(k + 1) * step,
                    clamped=clamped,
                )
            x, y, z = row[:n], row[n : n + dim_l], row[n + dim_l :]
        values[k + 1] = row
    if clamped > 0:
        logger.debug(f"Cumulative clamp magnitude over the path: {clamped:.3g}")
    return Trajectory(
        step=step, values=values, labels=labels, seed=seed, replication=replication, increments=dw
    )


def simulate_external(
    model: DiffusionModel,
    signal: SignalModel,
    p: ParamPoint,
    z0: ArrayLike,
    horizon: float,
    step: float = DEFAULT_STEP,
    seed: int = 0,
    replication: int = 0,
) -> Trajectory:
    """Euler-Maruyama path of the external variable Z alone."""
    steps = step_count(horizon, step)
    z = as_vector(z0, "z0").copy()
    if z.size != model.dim_n:
        raise ValueError(f"z0 has {z.size} components, expected {model.dim_n}")
    values = np.empty((steps + 1, z.size))
    values[0] = z
    signal_part, dw, noise = _forcing(model, signal, p, z, steps, step, seed, replication)
    if noise is not None:
        forcing = signal_part + noise
        for k in range(steps):
            z = z + model.b(z) * step + forcing[k]
            values[k + 1] = z
    else:
        for k in range(steps):
            z = z + model.b(z) * step + (signal_part[k] + model.sigma(z) @ dw[k])
            values[k + 1] = z
    if not np.all(np.isfinite(values)):
        bad = int(np.argmax(~np.all(np.isfinite(values), axis=1)))
        raise StateSpaceEscapeError("external path produced non-finite values", time=bad * step)
    labels = tuple(f"Z{i + 1}" for i in range(model.dim_n))
    return Trajectory(
        step=step, values=values, labels=labels, seed=seed, replication=replication, increments=dw
    )


def _period_nodes(traj: Trajectory, p: ParamPoint) -> list[int]:
    if traj.horizon < p.period * (1 - 1e-12):
        raise EmptyChainError(
            f"horizon {traj.horizon} is shorter than one period {p.period}",
            horizon=traj.horizon,
            period=p.period,
        )
    per_period = p.period / traj.step
    if not math.isclose(per_period, round(per_period), rel_tol=1e-9):
        logger.warning(
            f"period {p.period} is not a multiple of step {traj.step}; sampling nearest nodes"
        )
    count = int(math.floor(traj.horizon / p.period + 1e-9))
    return [min(traj.node_index(j * p.period), traj.n_steps) for j in range(count + 1)]


def grid_chain(traj: Trajectory, p: ParamPoint) -> FloatArray:
    """Z at the times 0, T, 2T, ..."""
    return traj.z_block[_period_nodes(traj, p)]  # type: ignore[no-any-return]


def path_segments(traj: Trajectory, p: ParamPoint) -> list[Trajectory]:
    """Z-path pieces on [(k-1)T, kT]; consecutive pieces share endpoints."""
    nodes = _period_nodes(traj, p)
    z = traj.z_only()
    return [
        Trajectory(
            step=traj.step,
            values=z.values[start : end + 1],
            labels=z.labels,
            seed=traj.seed,
            replication=traj.replication,
        )
        for start, end in zip(nodes[:-1], nodes[1:], strict=True)
    ]


class ChainDiagnostics(BaseModel):
    """Heuristic mixing diagnostics for the grid chain."""

    length: int
    autocorrelation: list[list[float]]
    half_mean_zscore: list[float]


def chain_diagnostics(chain: ArrayLike, max_lag: int = 5) -> ChainDiagnostics:
    """Autocorrelation by lag and a two-half mean comparison per component."""
    values = np.asarray(chain, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    length = values.shape[0]
    if length < max(4, max_lag + 2):
        raise EmptyChainError(f"chain of length {length} is too short for lag {max_lag}")
    centred = values - values.mean(axis=0)
    variance = np.mean(centred**2, axis=0)
    variance = np.where(variance > 0, variance, np.inf)
    autocorrelation = [
        (np.mean(centred[lag:] * centred[: length - lag], axis=0) / variance).tolist()
        for lag in range(1, max_lag + 1)
    ]
    first, second = values[: length // 2], values[length // 2 :]
    spread = np.sqrt(first.var(axis=0, ddof=1) / len(first) + second.var(axis=0, ddof=1) / len(second))
    spread = np.where(spread > 0, spread, np.inf)
    zscore = (first.mean(axis=0) - second.mean(axis=0)) / spread
    return ChainDiagnostics(
        length=length, autocorrelation=autocorrelation, half_mean_zscore=zscore.tolist()
    )


def degeneracy_gap(model: DiffusionModel, traj: Trajectory) -> float:
    """sup_k |(X_k - X_0 - sum_{j<k} f(X_j, Y_j) h) - (Z_k - Z_0)| on a full path."""
    x, y, z = traj.x_block, traj.y_block, traj.z_block
    if x.shape[1] != model.dim_n or z.shape[1] != model.dim_n:
        raise ValueError("degeneracy gap needs a full (X, Y, Z) trajectory")
    drift_sum = np.vstack(
        [np.zeros((1, model.dim_n)), np.cumsum(model.f(x[:-1], y[:-1]) * traj.step, axis=0)]
    )
    gap = (x - x[0] - drift_sum) - (z - z[0])
    return float(np.max(np.abs(gap)))
