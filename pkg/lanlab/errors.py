"""Exception hierarchy shared by every module.

Each error carries the process exit code the CLI reports for it, so the
numerical modules can raise without knowing anything about the entry point.
"""

from typing import Any

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class LanLabError(Exception):
    """Base class for all library errors."""

    exit_code: int = EXIT_FAILURE

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        """Machine-readable form printed by the CLI on failure."""
        payload: dict[str, Any] = {
            "error": self.__class__.__name__,
            "message": self.message,
            "exit_code": self.exit_code,
        }
        if self.details:
            payload["details"] = self.details
        return payload


class ConfigurationError(LanLabError):
    """Malformed experiment config or unknown preset."""

    exit_code = EXIT_USAGE


class UsageError(LanLabError):
    """Invalid command-line usage."""

    exit_code = EXIT_USAGE


class SignalEvaluationError(LanLabError):
    """A signal model produced non-finite values."""


class QuadratureError(LanLabError):
    """Quadrature inputs are too coarse or empty."""


class StateSpaceEscapeError(LanLabError):
    """The simulated state left the declared state space."""

    def __init__(self, message: str, time: float, **details: Any):
        super().__init__(message, time=time, **details)
        self.time = time


class ReconstructionDivergenceError(LanLabError):
    """Reconstructed internal variables left the state space."""

    def __init__(self, message: str, time: float, **details: Any):
        super().__init__(message, time=time, **details)
        self.time = time


class EllipticityError(LanLabError):
    """sigma sigma^T is singular, non-symmetric or not PSD."""


class EmptyChainError(LanLabError):
    """Trajectory is shorter than one period."""


class NonIdentifiableError(LanLabError):
    """The likelihood surface is flat over the search window."""


class InvariantViolationError(LanLabError):
    """A numerical invariant or assumption check failed."""
