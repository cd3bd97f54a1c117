"""Girsanov log-likelihood ratios of the external variable Z.

All stochastic integrals use left-point (Ito) evaluation on the grid of the
observed path. Likelihoods exist only as ratios against a reference
parameter.
"""

import logging
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel

from .arrays import ArrayLike, FloatArray
from .errors import EllipticityError
from .models import DiffusionModel, covariance
from .signals import ParamPoint, SignalModel, eval_sdot, eval_signal
from .simulate import Trajectory

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MartingaleIncrements:
    """dm_k = Z_{k+1} - Z_k - [S(t_k) + b(Z_k)] h, shape (K, N)."""

    step: float
    dm: FloatArray

    def __len__(self) -> int:
        return int(self.dm.shape[0])


def inverse_and_root(g: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Inverse and inverse square root of a stack of symmetric matrices."""
    scale = np.maximum(np.max(np.abs(g), axis=(-2, -1)), 1e-300)
    asymmetry = np.max(np.abs(g - np.swapaxes(g, -1, -2)), axis=(-2, -1))
    if np.any(asymmetry > 1e-12 * scale):
        raise EllipticityError("matrix is not symmetric")
    eigenvalues, vectors = np.linalg.eigh(g)
    if np.any(eigenvalues <= 0):
        node = int(np.argmin(np.min(eigenvalues.reshape(-1, eigenvalues.shape[-1]), axis=-1)))
        raise EllipticityError(
            "sigma sigma^T is singular or indefinite",
            node=node,
            min_eigenvalue=float(np.min(eigenvalues)),
        )
    root = np.einsum("...ik,...k,...jk->...ij", vectors, eigenvalues**-0.5, vectors)
    inverse = np.einsum("...ik,...k,...jk->...ij", vectors, 1.0 / eigenvalues, vectors)
    return inverse, root


def matrix_inv_sqrt(g: ArrayLike) -> FloatArray:
    """Symmetric positive-definite root of G^-1."""
    matrix = np.asarray(g, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
    return inverse_and_root(matrix)[1]


def inverse_covariance(model: DiffusionModel, z: FloatArray) -> tuple[FloatArray, FloatArray]:
    """(sigma sigma^T)^-1 and its root at each row of ``z``.

    Computed once and broadcast when the model's volatility is constant.
    """
    if model.constant_volatility:
        inverse, root = inverse_and_root(covariance(model, z[:1])[0])
        shape = (z.shape[0],) + inverse.shape
        return np.broadcast_to(inverse, shape), np.broadcast_to(root, shape)
    return inverse_and_root(covariance(model, z))


def _left_nodes(z_traj: Trajectory) -> tuple[FloatArray, FloatArray]:
    z = z_traj.z_block
    return z, z_traj.times[:-1]


def martingale_part(
    z_traj: Trajectory, model: DiffusionModel, signal: SignalModel, p: ParamPoint
) -> MartingaleIncrements:
    """Increments of Z with the parametric drift removed (left-point rule)."""
    z, times = _left_nodes(z_traj)
    drift_z = eval_signal(signal, p, times).reshape(-1, z.shape[1]) + model.b(z[:-1])
    dm = np.diff(z, axis=0) - drift_z * z_traj.step
    return MartingaleIncrements(step=z_traj.step, dm=dm)


def brownian_reconstruct(
    z_traj: Trajectory, model: DiffusionModel, signal: SignalModel, p: ParamPoint
) -> Trajectory:
    """B_t = int_0^t (sigma sigma^T)^-1/2 (Z_s) dm_s as an N-dimensional path."""
    increments = martingale_part(z_traj, model, signal, p)
    _, root = inverse_covariance(model, z_traj.z_block[:-1])
    db = np.einsum("kij,kj->ki", root, increments.dm)
    path = np.vstack([np.zeros((1, db.shape[1])), np.cumsum(db, axis=0)])
    return Trajectory(
        step=z_traj.step,
        values=path,
        labels=tuple(f"B{i + 1}" for i in range(db.shape[1])),
        seed=z_traj.seed,
        replication=z_traj.replication,
    )


def realized_quadratic_variation(path: Trajectory) -> FloatArray:
    """sum_k dB_k dB_k^T over the whole path."""
    increments = np.diff(path.values, axis=0)
    return increments.T @ increments  # type: ignore[no-any-return]


class LikelihoodTerms(BaseModel):
    """The two constituents of the log-likelihood ratio and their difference."""

    stochastic: float
    quadratic: float
    log_ratio: float


def log_likelihood_terms(
    z_traj: Trajectory,
    model: DiffusionModel,
    signal: SignalModel,
    p_alt: ParamPoint,
    p_ref: ParamPoint,
) -> LikelihoodTerms:
    """sum (G^-1 dS)^T dm  and  1/2 sum dS^T G^-1 dS h, with dm taken under ``p_ref``."""
    if z_traj.n_steps < 1:
        raise ValueError("the log-likelihood ratio needs at least one increment")
    z, times = _left_nodes(z_traj)
    n = z.shape[1]
    delta_s = (eval_signal(signal, p_alt, times) - eval_signal(signal, p_ref, times)).reshape(-1, n)
    dm = martingale_part(z_traj, model, signal, p_ref).dm
    inverse, _ = inverse_covariance(model, z[:-1])
    weighted = np.einsum("kij,kj->ki", inverse, delta_s)
    stochastic = float(np.sum(weighted * dm))
    quadratic = 0.5 * float(np.sum(weighted * delta_s)) * z_traj.step
    return LikelihoodTerms(
        stochastic=stochastic, quadratic=quadratic, log_ratio=stochastic - quadratic
    )


def log_likelihood_ratio(
    z_traj: Trajectory,
    model: DiffusionModel,
    signal: SignalModel,
    p_alt: ParamPoint,
    p_ref: ParamPoint,
) -> float:
    """log dQ^(p_alt)/dQ^(p_ref) along the observed Z-path."""
    return log_likelihood_terms(z_traj, model, signal, p_alt, p_ref).log_ratio


def local_scale(n: float, dim_theta: int) -> FloatArray:
    """delta_n = diag(n^-1/2, ..., n^-1/2, n^-3/2)."""
    if n <= 0:
        raise ValueError(f"horizon must be positive, got {n}")
    return np.append(np.full(dim_theta, n**-0.5), n**-1.5)


def unscaled_score(
    z_traj: Trajectory, model: DiffusionModel, signal: SignalModel, p: ParamPoint, n: float
) -> FloatArray:
    """int_0^n ((sigma sigma^T)^-1/2 Sdot)^T dB over [0, n]."""
    path = z_traj.truncate(n)
    z, times = _left_nodes(path)
    dm = martingale_part(path, model, signal, p).dm
    _, root = inverse_covariance(model, z[:-1])
    db = np.einsum("kij,kj->ki", root, dm)
    sdot = eval_sdot(signal, p, times)
    return np.einsum("kij,kjd,ki->d", root, sdot, db)  # type: ignore[no-any-return]


def score_statistic(
    z_traj: Trajectory, model: DiffusionModel, signal: SignalModel, p: ParamPoint, n: float
) -> FloatArray:
    """The LAN score delta_n * int_0^n ((sigma sigma^T)^-1/2 Sdot)^T dB."""
    return local_scale(n, p.dim_theta) * unscaled_score(z_traj, model, signal, p, n)
