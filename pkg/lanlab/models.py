"""Coefficients and dimensions of the degenerate system (X, Y, Z).

    dX = f(X, Y) dt + dZ
    dY = g(X, Y) dt
    dZ = [S(t) + b(Z)] dt + sigma(Z) dW

Coefficient functions are vectorised over leading axes: ``f`` takes
``x: (..., N)`` and ``y: (..., L)`` and returns ``(..., N)``; ``sigma``
returns ``(..., N, M)``.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Literal, Protocol, runtime_checkable

import numpy as np
from pydantic import BaseModel
from scipy.special import exprel

from .arrays import ArrayLike, FloatArray, as_matrix, as_vector
from .errors import EllipticityError
from .rng import stream
from .signals import ParamPoint, SignalModel, eval_signal

logger = logging.getLogger(__name__)


def block_labels(dim_n: int, dim_l: int) -> tuple[str, ...]:
    """Column labels of a full state: X1..XN, Y1..YL, Z1..ZN."""
    return (
        tuple(f"X{i + 1}" for i in range(dim_n))
        + tuple(f"Y{i + 1}" for i in range(dim_l))
        + tuple(f"Z{i + 1}" for i in range(dim_n))
    )


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Box U x U' given as per-component bounds (infinite for unconstrained)."""

    lower: FloatArray
    upper: FloatArray

    def __post_init__(self) -> None:
        lower = as_vector(self.lower, "lower")
        upper = as_vector(self.upper, "upper")
        if lower.shape != upper.shape or np.any(lower > upper):
            raise ValueError("state-space bounds must satisfy lower <= upper")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unbounded(cls, dim: int) -> "StateSpace":
        return cls(lower=np.full(dim, -np.inf), upper=np.full(dim, np.inf))

    @property
    def bounded_mask(self) -> FloatArray:
        return np.isfinite(self.lower) | np.isfinite(self.upper)  # type: ignore[no-any-return]

    def contains(self, state: ArrayLike, tol: float = 0.0) -> bool:
        s = np.asarray(state, dtype=np.float64)
        return bool(np.all(s >= self.lower - tol) and np.all(s <= self.upper + tol))

    def project(self, state: FloatArray) -> tuple[FloatArray, float]:
        """Clip into the box; returns the clipped state and the clip magnitude."""
        clipped = np.clip(state, self.lower, self.upper)
        return clipped, float(np.sum(np.abs(clipped - state)))


@runtime_checkable
class DiffusionModel(Protocol):
    """Coefficients (f, g, b, sigma) and dimensions (N, L, M) of the system."""

    @property
    def dim_n(self) -> int: ...

    @property
    def dim_l(self) -> int: ...

    @property
    def dim_m(self) -> int: ...

    @property
    def state_space(self) -> StateSpace: ...

    @property
    def constant_volatility(self) -> bool:
        """True when sigma does not depend on z (enables caching)."""
        ...

    def f(self, x: FloatArray, y: FloatArray) -> FloatArray: ...

    def g(self, x: FloatArray, y: FloatArray) -> FloatArray: ...

    def b(self, z: FloatArray) -> FloatArray: ...

    def sigma(self, z: FloatArray) -> FloatArray: ...


@dataclass(frozen=True, eq=False)
class FullState:
    """A point (x, y, z) of the state space."""

    x: FloatArray
    y: FloatArray
    z: FloatArray

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=np.float64)))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "z", np.atleast_1d(np.asarray(self.z, dtype=np.float64)))
        if self.x.shape != self.z.shape:
            raise ValueError("x and z must have the same dimension N")

    def stack(self) -> FloatArray:
        return np.concatenate([self.x, self.y, self.z])

    @classmethod
    def from_vector(cls, vector: ArrayLike, dim_n: int, dim_l: int) -> "FullState":
        v = as_vector(vector, "state")
        if v.size != 2 * dim_n + dim_l:
            raise ValueError(f"state vector has {v.size} entries, expected {2 * dim_n + dim_l}")
        return cls(x=v[:dim_n], y=v[dim_n : dim_n + dim_l], z=v[dim_n + dim_l :])


def _broadcast_sigma(matrix: FloatArray, z: FloatArray) -> FloatArray:
    return np.broadcast_to(matrix, z.shape[:-1] + matrix.shape)


@dataclass(frozen=True, eq=False)
class OuExternalModel:
    """External variable only: L=0, f=0, b(z) = -beta z, constant sigma."""

    beta: FloatArray = field(default_factory=lambda: np.eye(1))
    volatility: FloatArray = field(default_factory=lambda: np.eye(1))

    def __post_init__(self) -> None:
        beta = np.atleast_2d(np.asarray(self.beta, dtype=np.float64))
        vol = np.atleast_2d(np.asarray(self.volatility, dtype=np.float64))
        if beta.shape[0] != beta.shape[1] or vol.shape[0] != beta.shape[0]:
            raise ValueError("beta must be N x N and sigma N x M")
        if vol.shape[1] < vol.shape[0]:
            raise ValueError("the Brownian dimension M must be at least N")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "volatility", vol)

    @classmethod
    def build(cls, dim: int = 1, beta: ArrayLike = 1.0, sigma: ArrayLike = 1.0) -> "OuExternalModel":
        return cls(beta=as_matrix(beta, dim), volatility=as_matrix(sigma, dim))

    @property
    def dim_n(self) -> int:
        return int(self.beta.shape[0])

    @property
    def dim_l(self) -> int:
        return 0

    @property
    def dim_m(self) -> int:
        return int(self.volatility.shape[1])

    @property
    def state_space(self) -> StateSpace:
        return StateSpace.unbounded(2 * self.dim_n)

    @property
    def constant_volatility(self) -> bool:
        return True

    def f(self, x: FloatArray, y: FloatArray) -> FloatArray:
        return np.zeros_like(x)

    def g(self, x: FloatArray, y: FloatArray) -> FloatArray:
        return np.zeros(x.shape[:-1] + (0,))

    def b(self, z: FloatArray) -> FloatArray:
        return -z @ self.beta.T  # type: ignore[no-any-return]

    def sigma(self, z: FloatArray) -> FloatArray:
        return _broadcast_sigma(self.volatility, z)


def hh_rates(
    x: ArrayLike,
) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray, FloatArray, FloatArray]:
    """Hodgkin-Huxley opening/closing rates (alpha_1, beta_1, ..., alpha_3, beta_3).

    alpha_1 and alpha_2 are written through ``exprel(u) = (e^u - 1)/u`` so the
    removable singularities at x=10 and x=25 evaluate to 0.1 and 1 exactly.
    """
    v = np.asarray(x, dtype=np.float64)
    alpha_1 = 0.1 / exprel(1.0 - 0.1 * v)
    beta_1 = 0.125 * np.exp(-v / 80.0)
    alpha_2 = 1.0 / exprel(2.5 - 0.1 * v)
    beta_2 = 4.0 * np.exp(-v / 18.0)
    alpha_3 = 0.07 * np.exp(-v / 20.0)
    beta_3 = 1.0 / (np.exp(3.0 - 0.1 * v) + 1.0)
    return alpha_1, beta_1, alpha_2, beta_2, alpha_3, beta_3


@dataclass(frozen=True, eq=False)
class HodgkinHuxleyModel:
    """Stochastic Hodgkin-Huxley neuron with mean-reverting OU-type input.

    N = M = 1, L = 3 gating variables (n, m, h) confined to [0, 1]. U' is the
    interval ``[z_lower, z_upper]`` (the whole line by default).
    """

    beta: float = 1.0
    volatility: float = 1.0
    z_lower: float = -math.inf
    z_upper: float = math.inf

    @property
    def dim_n(self) -> int:
        return 1

    @property
    def dim_l(self) -> int:
        return 3

    @property
    def dim_m(self) -> int:
        return 1

    @property
    def state_space(self) -> StateSpace:
        return StateSpace(
            lower=np.array([-np.inf, 0.0, 0.0, 0.0, self.z_lower]),
            upper=np.array([np.inf, 1.0, 1.0, 1.0, self.z_upper]),
        )

    @property
    def constant_volatility(self) -> bool:
        return True

    def f(self, x: FloatArray, y: FloatArray) -> FloatArray:
        v = x[..., 0]
        n, m, h = y[..., 0], y[..., 1], y[..., 2]
        current = -36.0 * n**4 * (v + 12.0) - 120.0 * m**3 * h * (v - 120.0) - 0.3 * (v - 10.6)
        return current[..., None]  # type: ignore[no-any-return]

    def g(self, x: FloatArray, y: FloatArray) -> FloatArray:
        a1, b1, a2, b2, a3, b3 = hh_rates(x[..., 0])
        alphas = np.stack([a1, a2, a3], axis=-1)
        betas = np.stack([b1, b2, b3], axis=-1)
        return alphas * (1.0 - y) - betas * y  # type: ignore[no-any-return]

    def b(self, z: FloatArray) -> FloatArray:
        return -self.beta * z

    def sigma(self, z: FloatArray) -> FloatArray:
        return np.full(z.shape[:-1] + (1, 1), self.volatility)


def hh_resting_state(x: float = 0.0, z: float = 0.0) -> FullState:
    """Gating variables at their steady state for membrane potential ``x``."""
    a1, b1, a2, b2, a3, b3 = hh_rates(x)
    y = np.array([a1 / (a1 + b1), a2 / (a2 + b2), a3 / (a3 + b3)], dtype=np.float64)
    return FullState(x=np.array([x]), y=y, z=np.array([z]))


Potential = Literal["sin", "zero", "linear"]

_POTENTIALS: dict[str, Callable[[FloatArray], FloatArray]] = {
    "sin": np.sin,
    "zero": np.zeros_like,
    "linear": lambda r: r,
}


@dataclass(frozen=True, eq=False)
class RotorChainModel:
    """Three rotors coupled in a row, outer rotors driven by external torques.

    State ordering: X holds the driven momenta; Y holds the angles
    (q1, q2, q3) followed by the undriven momenta; Z holds the torques.
    ``delta``/``tau`` are indexed by rotor (1..3); only driven entries matter.
    """

    driven: tuple[int, ...] = (1, 3)
    delta: tuple[float, float, float] = (1.0, 1.0, 1.0)
    tau: tuple[float, float, float] = (0.5, 0.5, 0.5)
    beta: float = 1.0
    interaction: Potential = "sin"
    pinning: Potential = "sin"

    def __post_init__(self) -> None:
        driven = tuple(sorted(set(self.driven)))
        if driven not in ((1,), (3,), (1, 3)):
            raise ValueError(f"driven rotors must be {{1}}, {{3}} or {{1, 3}}, got {self.driven}")
        if any(d < 0 for d in self.delta) or any(t < 0 for t in self.tau):
            raise ValueError("dissipation constants and temperatures must be non-negative")
        for name in (self.interaction, self.pinning):
            if name not in _POTENTIALS:
                raise ValueError(f"unknown potential '{name}'")
        object.__setattr__(self, "driven", driven)

    @property
    def undriven(self) -> tuple[int, ...]:
        return tuple(i for i in (1, 2, 3) if i not in self.driven)

    @property
    def dim_n(self) -> int:
        return len(self.driven)

    @property
    def dim_l(self) -> int:
        return 3 + len(self.undriven)

    @property
    def dim_m(self) -> int:
        return self.dim_n

    @property
    def state_space(self) -> StateSpace:
        return StateSpace.unbounded(2 * self.dim_n + self.dim_l)

    @property
    def constant_volatility(self) -> bool:
        return True

    def _w(self, r: FloatArray) -> FloatArray:
        return _POTENTIALS[self.interaction](r)

    def _u(self, q: FloatArray) -> FloatArray:
        return _POTENTIALS[self.pinning](q)

    def _momenta(self, x: FloatArray, y: FloatArray) -> dict[int, FloatArray]:
        momenta = {i: x[..., c] for c, i in enumerate(self.driven)}
        momenta.update({i: y[..., 3 + c] for c, i in enumerate(self.undriven)})
        return momenta

    def _outer_force(self, i: int, q: FloatArray) -> FloatArray:
        return self._w(q[..., 1] - q[..., i - 1]) - self._u(q[..., i - 1])

    def f(self, x: FloatArray, y: FloatArray) -> FloatArray:
        q = y[..., :3]
        cols = [
            self._outer_force(i, q) - self.delta[i - 1] * x[..., c]
            for c, i in enumerate(self.driven)
        ]
        return np.stack(cols, axis=-1)

    def g(self, x: FloatArray, y: FloatArray) -> FloatArray:
        q = y[..., :3]
        momenta = self._momenta(x, y)
        cols = [momenta[1], momenta[2], momenta[3]]
        for i in self.undriven:
            if i == 2:
                force = -(self._w(q[..., 1] - q[..., 0]) + self._w(q[..., 1] - q[..., 2]))
                cols.append(force - self._u(q[..., 1]))
            else:
                cols.append(self._outer_force(i, q))
        return np.stack(cols, axis=-1)

    def b(self, z: FloatArray) -> FloatArray:
        return -self.beta * z

    @property
    def volatility(self) -> FloatArray:
        return np.diag([math.sqrt(2.0 * self.delta[i - 1] * self.tau[i - 1]) for i in self.driven])

    def sigma(self, z: FloatArray) -> FloatArray:
        return _broadcast_sigma(self.volatility, z)


def drift(
    model: DiffusionModel, signal: SignalModel, p: ParamPoint, t: float, s: FullState
) -> FloatArray:
    """B_(theta,T)(t, x, y, z) = (f + S + b, g, S + b) stacked."""
    external = eval_signal(signal, p, t) + model.b(s.z)
    return np.concatenate([model.f(s.x, s.y) + external, model.g(s.x, s.y), external])


def diffusion(model: DiffusionModel, s: FullState) -> FloatArray:
    """Sigma(x, y, z): sigma(z) in the X- and Z-rows, zeros in the Y-rows."""
    vol = np.asarray(model.sigma(s.z), dtype=np.float64)
    return np.vstack([vol, np.zeros((model.dim_l, model.dim_m)), vol])


def covariance(model: DiffusionModel, z: FloatArray) -> FloatArray:
    """sigma sigma^T evaluated at each row of ``z``."""
    vol = model.sigma(z)
    return np.einsum("...im,...jm->...ij", vol, vol)  # type: ignore[no-any-return]


class EllipticityReport(BaseModel):
    sigma0_hat: float
    sigma_inf_hat: float
    uniform: bool
    quadratic_form_bounds_hold: bool
    samples: int
    notes: list[str] = []

    @property
    def passed(self) -> bool:
        return (
            self.sigma0_hat > 1e-12 * self.sigma_inf_hat
            and self.uniform
            and self.quadratic_form_bounds_hold
        )


def check_ellipticity(
    model: DiffusionModel,
    sample_states: ArrayLike,
    directions: int = 32,
    seed: int = 0,
    rtol: float = 1e-6,
) -> EllipticityReport:
    """Empirical bounds sigma_0 <= eig(sigma sigma^T(z)) <= sigma_inf over sampled z.

    Also checks ``sigma_inf^-1 |x|^2 <= x^T (sigma sigma^T)^-1 x <= sigma_0^-1 |x|^2``
    on random directions. The bounds are flagged as not uniform when the
    extremes over the inner half of the sample (by |z|) differ from those over
    the whole sample.
    """
    z = np.asarray(sample_states, dtype=np.float64)
    if z.ndim == 1:
        z = z.reshape(-1, model.dim_n)
    if z.shape[0] == 0:
        raise ValueError("ellipticity check needs at least one sampled state")
    cov = covariance(model, z)
    scale = max(float(np.max(np.abs(cov))), 1e-300)
    if np.max(np.abs(cov - np.swapaxes(cov, -1, -2))) > 1e-12 * scale:
        raise EllipticityError("sigma sigma^T is not symmetric")
    eigenvalues = np.linalg.eigvalsh(cov)
    if np.min(eigenvalues) < -1e-12 * scale:
        raise EllipticityError(
            "sigma sigma^T is not positive semi-definite", min_eigenvalue=float(np.min(eigenvalues))
        )
    sigma0 = float(np.min(eigenvalues))
    sigma_inf = float(np.max(eigenvalues))
    notes: list[str] = []

    radius = np.linalg.norm(z, axis=-1)
    inner = eigenvalues[radius <= np.median(radius)]
    inner_min, inner_max = float(np.min(inner)), float(np.max(inner))
    uniform = math.isclose(inner_min, sigma0, rel_tol=rtol, abs_tol=1e-300) and math.isclose(
        inner_max, sigma_inf, rel_tol=rtol
    )
    if not uniform:
        notes.append("bounds not uniform")
        logger.warning(
            f"Ellipticity bounds move with the sample range: inner [{inner_min:.4g}, "
            f"{inner_max:.4g}] vs full [{sigma0:.4g}, {sigma_inf:.4g}]"
        )

    bounds_hold = False
    if sigma0 > 1e-12 * scale:
        rng = stream(seed)
        vectors = rng.standard_normal((directions, model.dim_n))
        norms = np.sum(vectors**2, axis=-1)
        inverse = np.linalg.inv(cov)
        forms = np.einsum("di,kij,dj->kd", vectors, inverse, vectors)
        slack = 1.0 + 1e-9
        bounds_hold = bool(
            np.all(forms * slack >= norms / sigma_inf) and np.all(forms <= slack * norms / sigma0)
        )
    else:
        notes.append("sigma sigma^T is singular on the sample")
    return EllipticityReport(
        sigma0_hat=sigma0,
        sigma_inf_hat=sigma_inf,
        uniform=uniform,
        quadratic_form_bounds_hold=bounds_hold,
        samples=int(z.shape[0]),
        notes=notes,
    )
