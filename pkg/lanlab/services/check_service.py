"""Assumption check suite."""

import logging
from collections.abc import Sequence
from typing import Any

from pydantic import BaseModel

from .protocols import Checker

logger = logging.getLogger(__name__)


class Verdict(BaseModel):
    name: str
    passed: bool
    skipped: bool = False
    error: str | None = None
    details: dict[str, Any] = {}


class CheckReport(BaseModel):
    verdicts: list[Verdict]

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def table(self) -> str:
        """Plain-text verdict table."""
        width = max([len(v.name) for v in self.verdicts] + [5])
        lines = [f"{'check'.ljust(width)}  verdict"]
        for v in self.verdicts:
            status = "skip" if v.skipped else ("pass" if v.passed else "FAIL")
            suffix = f"  ({v.error})" if v.error else ""
            lines.append(f"{v.name.ljust(width)}  {status}{suffix}")
        return "\n".join(lines)


class CheckService:
    """Service for running assumption checkers.

    Follows Single Responsibility Principle:
    - Only responsible for orchestrating checkers
    - Doesn't know about the CLI, files or run directories
    """

    def __init__(self, checkers: Sequence[Checker]):
        """Initialize check service with checkers.

        Args:
            checkers: List of checkers to run
        """
        self.checkers = checkers

    def run(self, context: Any) -> CheckReport:
        """Run every checker against the context.

        Args:
            context: Resolved experiment handed to each checker

        Returns:
            One verdict per checker

        Note:
            If a checker fails, it logs a warning, records a failed verdict
            and continues with the other checkers (graceful degradation).
        """
        verdicts = []
        for checker in self.checkers:
            try:
                result = checker.check(context)
                verdict = Verdict(
                    name=checker.name,
                    passed=bool(result.get("passed", False)),
                    skipped=bool(result.get("skipped", False)),
                    details=result.get("details", {}),
                )
            except Exception as e:
                logger.warning(f"Checker {checker.__class__.__name__} failed: {e}")
                verdict = Verdict(name=checker.name, passed=False, error=str(e))
            logger.info(f"Check {verdict.name}: {'pass' if verdict.passed else 'fail'}")
            verdicts.append(verdict)
        return CheckReport(verdicts=verdicts)
