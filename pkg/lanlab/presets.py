"""Build models, signals and parameters from validated config sections."""

import logging
import math

import numpy as np

from .arrays import FloatArray, as_vector
from .config import ExperimentFile, ModelConfig, ParameterConfig, SignalConfig
from .errors import ConfigurationError
from .models import (
    DiffusionModel,
    FullState,
    HodgkinHuxleyModel,
    OuExternalModel,
    RotorChainModel,
    hh_resting_state,
)
from .signals import FourierSignal, ParamPoint, SignalModel, fourier_expansion_signal, sine_signal

logger = logging.getLogger(__name__)


def build_model(config: ModelConfig) -> DiffusionModel:
    try:
        if config.preset == "ou-external":
            return OuExternalModel.build(config.dim, config.beta, config.sigma)
        if config.preset == "hodgkin-huxley":
            if not isinstance(config.beta, float | int) or not isinstance(config.sigma, float | int):
                raise ValueError("hodgkin-huxley takes scalar beta and sigma")
            return HodgkinHuxleyModel(
                beta=float(config.beta),
                volatility=float(config.sigma),
                z_lower=-math.inf if config.z_lower is None else config.z_lower,
                z_upper=math.inf if config.z_upper is None else config.z_upper,
            )
        if config.preset == "rotor-chain":
            if not isinstance(config.beta, float | int):
                raise ValueError("rotor-chain takes a scalar beta")
            return RotorChainModel(
                driven=tuple(config.driven),
                delta=(config.delta[0], config.delta[1], config.delta[2]),
                tau=(config.tau[0], config.tau[1], config.tau[2]),
                beta=float(config.beta),
                interaction=config.interaction,
                pinning=config.pinning,
            )
    except ValueError as e:
        raise ConfigurationError(f"invalid {config.preset} model: {e}", preset=config.preset)
    raise ConfigurationError(f"unknown model preset '{config.preset}'", preset=config.preset)


def _offsets(config: SignalConfig) -> list[tuple[FloatArray, FloatArray]] | None:
    if all(row.sin_offset == 0.0 and row.cos_offset == 0.0 for row in config.table):
        return None
    return [(as_vector(row.sin_offset), as_vector(row.cos_offset)) for row in config.table]


def build_signal(config: SignalConfig) -> SignalModel:
    try:
        if config.preset == "sine":
            return sine_signal(config.dim_theta)
        if config.preset == "fourier-expansion":
            return fourier_expansion_signal(config.harmonics)
        if config.preset == "fourier":
            width = {len(np.atleast_2d(row.sin)[0]) for row in config.table}
            if len(width) != 1:
                raise ValueError(f"coefficient rows disagree on D: {sorted(width)}")
            rows = [(row.k, row.sin, row.cos) for row in config.table]
            return FourierSignal.from_table(rows, width.pop(), _offsets(config))
    except ValueError as e:
        raise ConfigurationError(f"invalid {config.preset} signal: {e}", preset=config.preset)
    raise ConfigurationError(f"unknown signal preset '{config.preset}'", preset=config.preset)


def build_parameter(config: ParameterConfig, alternative: bool = False) -> ParamPoint:
    if not alternative:
        return ParamPoint(theta=np.asarray(config.theta, dtype=np.float64), period=config.period)
    theta = config.theta if config.alt_theta is None else config.alt_theta
    period = config.period if config.alt_period is None else config.alt_period
    return ParamPoint(theta=np.asarray(theta, dtype=np.float64), period=period)


def build_start(config: ModelConfig, model: DiffusionModel) -> FullState:
    """Configured start state, else the HH resting state, else zeros."""
    if config.start is not None:
        size = 2 * model.dim_n + model.dim_l
        if len(config.start) != size:
            raise ConfigurationError(
                f"start state has {len(config.start)} entries, expected {size}",
                preset=config.preset,
            )
        return FullState.from_vector(config.start, model.dim_n, model.dim_l)
    if isinstance(model, HodgkinHuxleyModel):
        return hh_resting_state()
    return FullState(
        x=np.zeros(model.dim_n), y=np.zeros(model.dim_l), z=np.zeros(model.dim_n)
    )


class Experiment:
    """A resolved experiment: the config plus the objects it describes."""

    def __init__(self, config: ExperimentFile):
        self.config = config
        self.model = build_model(config.model)
        self.signal = build_signal(config.signal)
        self.parameter = build_parameter(config.parameter)
        self.alternative = build_parameter(config.parameter, alternative=True)
        self.start = build_start(config.model, self.model)
        if self.signal.dim_n != self.model.dim_n:
            raise ConfigurationError(
                f"signal has {self.signal.dim_n} components, model expects {self.model.dim_n}"
            )
        for name, point in (("theta", self.parameter), ("alt_theta", self.alternative)):
            if point.dim_theta != self.signal.dim_theta:
                raise ConfigurationError(
                    f"{name} has {point.dim_theta} entries, signal expects {self.signal.dim_theta}"
                )
        logger.debug(
            f"Experiment: {config.model.preset} model, {config.signal.preset} signal, "
            f"theta={self.parameter.theta.tolist()}, T={self.parameter.period}"
        )

    @property
    def local_direction(self) -> FloatArray:
        """The configured h, or all ones."""
        h = self.config.experiment.h
        size = self.parameter.dim_theta + 1
        if h is None:
            return np.ones(size)
        if len(h) != size:
            raise ConfigurationError(f"h has {len(h)} entries, expected {size}")
        return np.asarray(h, dtype=np.float64)
