"""Shared test fixtures and configuration."""

from typing import Any

import numpy as np
import pytest

from lanlab.models import OuExternalModel
from lanlab.signals import FourierSignal, ParamPoint, sine_signal
from lanlab.simulate import Trajectory, simulate_external
from tests.fixtures import experiments


@pytest.fixture
def ou_model() -> OuExternalModel:
    """Scalar OU input with beta = sigma = 1."""
    return OuExternalModel.build(dim=1, beta=1.0, sigma=1.0)


@pytest.fixture
def sine() -> FourierSignal:
    """theta sin(2 pi s)."""
    return sine_signal(1)


class ShiftedGradientSignal:
    """A signal whose theta-gradient is off by a constant."""

    def __init__(self, signal: FourierSignal, shift: float):
        self.signal = signal
        self.shift = shift

    @property
    def dim_n(self) -> int:
        return self.signal.dim_n

    @property
    def dim_theta(self) -> int:
        return self.signal.dim_theta

    def eval(self, theta: np.ndarray, s: Any) -> np.ndarray:
        return self.signal.eval(theta, s)

    def grad_theta(self, theta: np.ndarray, s: Any) -> np.ndarray:
        return self.signal.grad_theta(theta, s) + self.shift

    def time_deriv(self, theta: np.ndarray, s: Any) -> np.ndarray:
        return self.signal.time_deriv(theta, s)


@pytest.fixture
def perturbed_sine(sine: FourierSignal) -> ShiftedGradientSignal:
    """theta sin(2 pi s) with its theta-gradient shifted by 0.1."""
    return ShiftedGradientSignal(sine, 0.1)


class CubicAmplitudeSignal:
    """theta^3 sin(2 pi s): periodic and smooth but not affine in theta."""

    dim_n = 1
    dim_theta = 1

    def eval(self, theta: np.ndarray, s: Any) -> np.ndarray:
        return np.asarray(theta[0] ** 3 * np.sin(2 * np.pi * np.asarray(s, dtype=float)))[..., None]

    def grad_theta(self, theta: np.ndarray, s: Any) -> np.ndarray:
        return 3 * theta[0] ** 2 * np.sin(2 * np.pi * np.asarray(s, dtype=float))[..., None, None]

    def time_deriv(self, theta: np.ndarray, s: Any) -> np.ndarray:
        phase = 2 * np.pi * np.asarray(s, dtype=float)
        return (theta[0] ** 3 * 2 * np.pi * np.cos(phase))[..., None]


@pytest.fixture
def cubic_sine() -> CubicAmplitudeSignal:
    return CubicAmplitudeSignal()


@pytest.fixture
def benchmark_point() -> ParamPoint:
    return ParamPoint(theta=np.array([1.0]), period=1.0)


@pytest.fixture
def benchmark_path(ou_model: OuExternalModel, sine: FourierSignal, benchmark_point: ParamPoint) -> Trajectory:
    """Z-path of the benchmark over [0, 200] with step 0.01."""
    return simulate_external(ou_model, sine, benchmark_point, [0.0], 200.0, 0.01, seed=7)


@pytest.fixture
def benchmark_document() -> dict[str, Any]:
    return experiments.ou_benchmark()


@pytest.fixture
def mock_settings() -> dict[str, Any]:
    """Environment for Settings tests."""
    return {
        "LANLAB_LOG_LEVEL": "DEBUG",
        "LANLAB_WORKERS": "3",
        "LANLAB_OUT_DIR": "/tmp/lanlab-runs",
        "LANLAB_DEFAULT_FORMAT": "json",
    }
