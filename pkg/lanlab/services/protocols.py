"""Protocols (interfaces) for dependency inversion."""

from collections.abc import Callable, Iterable
from typing import Any, Protocol, TypeVar

T = TypeVar("T")
R = TypeVar("R")


class ReplicationRunner(Protocol):
    """Protocol for executing independent replications."""

    @property
    def workers(self) -> int: ...

    def map(self, fn: Callable[[T], R], jobs: Iterable[T]) -> list[R]:
        """Apply ``fn`` to every job.

        Args:
            fn: Picklable module-level callable
            jobs: Independent job descriptions

        Returns:
            Results in job order, whatever the scheduling
        """
        ...


class Checker(Protocol):
    """Protocol for one assumption checker of the check suite."""

    name: str

    def check(self, context: Any) -> dict[str, Any]:
        """Run the check.

        Args:
            context: The resolved experiment (model, signal, parameter, paths)

        Returns:
            Verdict dict with at least ``passed`` and ``details``
        """
        ...
