"""Service for writing run artifacts: reports, tidy rows and trajectories."""

import csv
import json
import logging
import math
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

from pydantic import BaseModel

from ..config import ExperimentFile
from ..simulate import Trajectory
from ..storage import SUFFIXES, write_trajectory

logger = logging.getLogger(__name__)


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _jsonable(value: Any) -> Any:
    """Replace non-finite floats, which JSON cannot carry, by None."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_jsonable(v) for v in value]
    return value


class ReportService:
    """Writes every artifact of one run under its run directory.

    Follows Single Responsibility Principle:
    - Only responsible for naming the run directory and serialising results
    - Doesn't know how the results were computed
    """

    def __init__(self, out_dir: Path, config: ExperimentFile, seed: int, fmt: str = "csv"):
        """Initialize report service.

        Args:
            out_dir: Root directory holding all runs
            config: Fully resolved experiment config, embedded in every report
            seed: Experiment seed
            fmt: Format of trajectories and row tables (csv, json or bin)
        """
        self.out_dir = out_dir
        self.config = config
        self.seed = seed
        self.fmt = fmt

    @staticmethod
    def run_name(config: ExperimentFile, seed: int) -> str:
        """Run directory name from the config digest and the seed.

        Returns:
            Name such as '3f2a9c01b7de-seed42'
        """
        return f"{config.digest()[:12]}-seed{seed}"

    @property
    def run_dir(self) -> Path:
        return self.out_dir / self.run_name(self.config, self.seed)

    def _target(self, name: str, suffix: str) -> Path:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        return self.run_dir / f"{name}{suffix}"

    def write_report(self, command: str, result: BaseModel | Mapping[str, Any]) -> Path:
        """Write ``<command>.json`` with the resolved config embedded.

        Args:
            command: Subcommand that produced the result
            result: Report model or plain mapping

        Returns:
            Path of the written file
        """
        payload = result.model_dump(mode="json") if isinstance(result, BaseModel) else dict(result)
        document = {
            "command": command,
            "seed": self.seed,
            "config": self.config.canonical(),
            "result": _jsonable(payload),
        }
        path = self._target(command, ".json")
        path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info(f"Wrote report {path}")
        return path

    def write_rows(self, name: str, rows: Sequence[Mapping[str, Any]]) -> Path | None:
        """Write one row per replication; columns in order of first appearance.

        Returns:
            Path of the written file, None when there are no rows
        """
        if not rows:
            logger.debug(f"No rows to write for {name}")
            return None
        if self.fmt == "json":
            path = self._target(name, ".json")
            path.write_text(json.dumps(_jsonable(list(rows)), indent=1) + "\n", encoding="utf-8")
            return path
        columns: list[str] = []
        for row in rows:
            columns.extend(key for key in row if key not in columns)
        path = self._target(name, ".csv")
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(row[c]) if c in row else "" for c in columns])
        logger.info(f"Wrote {len(rows)} rows to {path}")
        return path

    def write_trajectory(self, traj: Trajectory, name: str) -> Path:
        path = self._target(name, SUFFIXES[self.fmt])
        write_trajectory(traj, path, self.fmt)
        logger.info(f"Wrote trajectory {path} ({traj.n_steps} steps)")
        return path
