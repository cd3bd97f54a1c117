"""Recover the internal and external variables from an observed X-path.

Given X on a uniform grid and the known start (X_0, Y_0, Z_0):

    dY/dt = g(X_t, Y_t)                         (solved pathwise)
    Z_t   = Z_0 + X_t - X_0 - int_0^t f(X_s, Y_s) ds
"""

import logging

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .arrays import FloatArray
from .errors import ReconstructionDivergenceError
from .models import DiffusionModel, FullState, StateSpace, block_labels
from .simulate import CLAMP_TOLERANCE, Trajectory

logger = logging.getLogger(__name__)


def _solve_internal(
    model: DiffusionModel,
    x: FloatArray,
    y0: FloatArray,
    step: float,
    bounds: StateSpace,
    clamp_tolerance: float,
) -> FloatArray:
    """Classical 4-stage one-step method with X linearly interpolated at half steps."""
    y = np.empty((x.shape[0], y0.size))
    y[0] = y0
    if y0.size == 0:
        return y
    bounded = bool(np.any(bounds.bounded_mask))
    clamped = 0.0
    current = y0.copy()
    for k in range(x.shape[0] - 1):
        x_left, x_right = x[k], x[k + 1]
        x_mid = 0.5 * (x_left + x_right)
        k1 = model.g(x_left, current)
        k2 = model.g(x_mid, current + 0.5 * step * k1)
        k3 = model.g(x_mid, current + 0.5 * step * k2)
        k4 = model.g(x_right, current + step * k3)
        current = current + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(current)):
            raise ReconstructionDivergenceError(
                "internal variables became non-finite", time=(k + 1) * step
            )
        if bounded and not bounds.contains(current):
            current, magnitude = bounds.project(current)
            clamped += magnitude
            if clamped > clamp_tolerance:
                raise ReconstructionDivergenceError(
                    f"reconstructed Y left the state space (cumulative clamp {clamped:.3g})",
                    time=(k + 1) * step,
                )
        y[k + 1] = current
    return y


def reconstruct_yz(
    model: DiffusionModel,
    x_traj: Trajectory,
    start: FullState,
    clamp_tolerance: float = CLAMP_TOLERANCE,
) -> Trajectory:
    """Full (X, Y, Z) trajectory on the grid of ``x_traj``."""
    x = x_traj.x_block
    n, dim_l = model.dim_n, model.dim_l
    if x.shape[1] != n:
        raise ValueError(f"reconstruction needs all {n} X components, got {x.shape[1]}")
    if not np.allclose(x[0], start.x, rtol=1e-9, atol=1e-12):
        logger.warning("Observed X_0 differs from the configured start; using the observed value")
    space = model.state_space
    y_bounds = StateSpace(lower=space.lower[n : n + dim_l], upper=space.upper[n : n + dim_l])
    y = _solve_internal(model, x, start.y, x_traj.step, y_bounds, clamp_tolerance)
    drift_integral = cumulative_trapezoid(model.f(x, y), dx=x_traj.step, axis=0, initial=0.0)
    z = start.z + (x - x[0]) - drift_integral
    logger.info(f"Reconstructed Y and Z over {x_traj.n_steps} steps")
    return Trajectory(
        step=x_traj.step,
        values=np.hstack([x, y, z]),
        labels=block_labels(n, dim_l),
        seed=x_traj.seed,
        replication=x_traj.replication,
    )
