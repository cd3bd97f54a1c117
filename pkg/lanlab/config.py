"""Process settings and experiment configuration files.

Process-level settings come from the environment (``LANLAB_`` prefix) or a
``.env`` file. Experiments are YAML documents with the sections ``model``,
``signal``, ``parameter`` and ``experiment``; values can be overridden from
the command line with ``section.key=value``.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ConfigurationError
from .lan import SearchConfig
from .simulate import CLAMP_TOLERANCE, DEFAULT_STEP

logger = logging.getLogger(__name__)

OUTPUT_FORMATS = ("csv", "json", "bin")


class Settings(BaseSettings):
    """
    Configuration via environment variables.

    Every variable carries the LANLAB_ prefix, e.g. LANLAB_WORKERS=8.
    """

    model_config = SettingsConfigDict(
        env_prefix="LANLAB_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    LOG_LEVEL: str = Field(
        default="INFO", description="Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)"
    )
    WORKERS: int | None = Field(
        default=None, ge=1, description="Replication worker pool size; default: available cores"
    )
    OUT_DIR: Path = Field(default=Path("runs"), description="Root directory for run outputs")
    DEFAULT_FORMAT: str = Field(default="csv", description="Trajectory format: csv, json or bin")

    @field_validator("DEFAULT_FORMAT", mode="before")
    @classmethod
    def validate_format(cls, v: str) -> str:
        value = str(v).strip().lower()
        if value not in OUTPUT_FORMATS:
            raise ValueError(f"Invalid format: {v}. Expected one of {', '.join(OUTPUT_FORMATS)}")
        return value


def get_settings() -> Settings:
    """Factory function to get settings instance.

    This allows for lazy initialization and easier testing.
    """
    return Settings()


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


Matrix = float | list[float] | list[list[float]]


class ModelConfig(_Section):
    """The ``model`` section: one of the diffusion presets."""

    preset: Literal["ou-external", "hodgkin-huxley", "rotor-chain"] = Field(
        ..., description="Diffusion preset"
    )
    dim: int = Field(default=1, ge=1, description="ou-external: dimension N = M")
    beta: Matrix = Field(default=1.0, description="Mean-reversion rate (scalar, diagonal or matrix)")
    sigma: Matrix = Field(default=1.0, description="Volatility (scalar, diagonal or matrix)")
    z_lower: float | None = Field(default=None, description="hodgkin-huxley: lower end of U'")
    z_upper: float | None = Field(default=None, description="hodgkin-huxley: upper end of U'")
    driven: list[int] = Field(default=[1, 3], description="rotor-chain: driven rotors")
    delta: list[float] = Field(default=[1.0, 1.0, 1.0], description="rotor-chain: dissipation")
    tau: list[float] = Field(default=[0.5, 0.5, 0.5], description="rotor-chain: temperatures")
    interaction: Literal["sin", "zero", "linear"] = Field(default="sin")
    pinning: Literal["sin", "zero", "linear"] = Field(default="sin")
    start: list[float] | None = Field(
        default=None,
        description="Full start state (X, Y, Z); default: HH resting state or zeros",
    )

    @field_validator("delta", "tau")
    @classmethod
    def validate_rotor_constants(cls, v: list[float]) -> list[float]:
        if len(v) != 3:
            raise ValueError(f"expected one entry per rotor (3), got {len(v)}")
        return v


class HarmonicRow(_Section):
    """One harmonic of a Fourier coefficient table: G_k = sin theta + sin_offset."""

    k: int = Field(..., ge=1, description="Harmonic index")
    sin: list[float] | list[list[float]] = Field(..., description="Row (or N x D block) of A_k")
    cos: list[float] | list[list[float]] = Field(..., description="Row (or N x D block) of B_k")
    sin_offset: float | list[float] = Field(default=0.0)
    cos_offset: float | list[float] = Field(default=0.0)


class SignalConfig(_Section):
    """The ``signal`` section."""

    preset: Literal["sine", "fourier-expansion", "fourier"] = Field(..., description="Signal preset")
    dim_theta: int = Field(default=1, ge=1, description="sine: number of harmonics D")
    harmonics: int = Field(default=1, ge=1, description="fourier-expansion: d, with D = 2d")
    table: list[HarmonicRow] = Field(default_factory=list, description="fourier: coefficient rows")

    @model_validator(mode="after")
    def validate_table(self) -> "SignalConfig":
        if self.preset == "fourier" and not self.table:
            raise ValueError("the fourier preset needs a non-empty coefficient table")
        return self


class ParameterConfig(_Section):
    """The ``parameter`` section: the true (or reference) parameter and an alternative."""

    theta: list[float] = Field(..., min_length=1, description="Shape parameter theta")
    period: float = Field(..., gt=0, description="Period T")
    alt_theta: list[float] | None = Field(default=None, description="loglik: alternative theta")
    alt_period: float | None = Field(default=None, gt=0, description="loglik: alternative T")


class ExperimentConfig(_Section):
    """The ``experiment`` section: horizons, replications and tolerances."""

    horizon: float = Field(default=10.0, gt=0, description="Simulated horizon")
    step: float = Field(default=DEFAULT_STEP, gt=0, description="Euler-Maruyama step h")
    clamp_tolerance: float = Field(default=CLAMP_TOLERANCE, ge=0)
    n: float = Field(default=100.0, gt=0, description="Horizon for lan and score-cov")
    n_list: list[float] = Field(default=[50.0, 100.0, 200.0, 400.0], min_length=1)
    replications: int = Field(default=200, ge=2)
    h: list[float] | None = Field(default=None, description="Local parameter; default all ones")
    fisher_t: float = Field(default=1.0, gt=0, description="t at which I(t), I'(t) are reported")
    fisher_horizon: float | None = Field(
        default=None, gt=0, description="Averaging horizon of the forms; default: horizon"
    )
    reference: Literal["ergodic", "oracle"] = Field(
        default="ergodic", description="Fisher matrix used by lan/score-cov/rates"
    )
    trajectory: Path | None = Field(
        default=None, description="Observed trajectory file; simulated when absent"
    )
    check_horizon: float = Field(default=100.0, gt=0, description="check: path horizon")
    search: SearchConfig = Field(default_factory=SearchConfig)

    @field_validator("n_list")
    @classmethod
    def validate_n_list(cls, v: list[float]) -> list[float]:
        if any(n <= 0 for n in v) or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError(f"n_list must be positive and increasing, got {v}")
        return v


class ExperimentFile(_Section):
    """A complete experiment document."""

    model: ModelConfig
    signal: SignalConfig
    parameter: ParameterConfig
    experiment: ExperimentConfig = Field(default_factory=ExperimentConfig)

    def canonical(self) -> dict[str, Any]:
        """Fully resolved config as plain JSON types."""
        return self.model_dump(mode="json")

    def digest(self) -> str:
        """sha256 of the canonical JSON of the resolved config."""
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def parse_override(text: str) -> tuple[list[str], Any]:
    """Split ``section.key=value``; the value is read as a YAML scalar or list."""
    key, sep, raw = text.partition("=")
    path = [part for part in key.strip().split(".") if part]
    if not sep or len(path) < 2:
        raise ConfigurationError(f"override must look like section.key=value, got '{text}'")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigurationError(f"override value of '{key}' is not valid YAML: {e}")
    return path, value


def apply_overrides(document: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Return a copy of ``document`` with every override applied in order."""
    result = json.loads(json.dumps(document, default=str))
    for text in overrides:
        path, value = parse_override(text)
        node = result
        for part in path[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigurationError(f"cannot override inside non-mapping key '{part}'")
            node = child
        node[path[-1]] = value
        logger.debug(f"Override {'.'.join(path)} = {value!r}")
    return result


def _validation_details(error: ValidationError) -> list[dict[str, Any]]:
    return json.loads(error.json(include_url=False))  # type: ignore[no-any-return]


def load_document(document: dict[str, Any], overrides: list[str] | None = None) -> ExperimentFile:
    """Validate a parsed document after applying overrides."""
    resolved = apply_overrides(document, overrides or [])
    try:
        return ExperimentFile.model_validate(resolved)
    except ValidationError as e:
        raise ConfigurationError(
            f"invalid experiment config ({e.error_count()} errors)", errors=_validation_details(e)
        )


def load_experiment(path: Path, overrides: list[str] | None = None) -> ExperimentFile:
    """Read, override and validate an experiment file."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}")
    try:
        document = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError(f"config {path} is not valid YAML: {e}")
    if not isinstance(document, dict):
        raise ConfigurationError(f"config {path} must be a mapping of sections")
    experiment = load_document(document, overrides)
    logger.info(f"Loaded experiment config {path} (digest {experiment.digest()[:12]})")
    return experiment
