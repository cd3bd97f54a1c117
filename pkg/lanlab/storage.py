"""Trajectory files: CSV and JSON for inspection and the ``LANTRAJ1`` binary format.

Binary layout (little-endian)::

    magic      8 bytes  b"LANTRAJ1"
    rows       u64
    cols       u64
    step       f64
    seed       i64      (-1 when unknown)
    replication u64
    label_len  u32
    labels     label_len bytes, UTF-8, newline separated
    values     rows * cols f64, row-major
"""

import csv
import json
import logging
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .simulate import Trajectory

logger = logging.getLogger(__name__)

MAGIC = b"LANTRAJ1"
_HEADER = struct.Struct("<QQdqQI")


def write_csv(traj: Trajectory, path: Path) -> Path:
    """Header ``time,<labels>``; floats written with ``repr`` so they round-trip."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["time", *traj.labels])
        for t, row in zip(traj.times, traj.values, strict=True):
            writer.writerow([repr(float(t)), *(repr(float(v)) for v in row)])
    logger.debug(f"Wrote {traj.n_steps + 1} rows to {path}")
    return path


def read_csv(path: Path, step: float | None = None) -> Trajectory:
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigurationError(f"trajectory file {path} is empty")
        rows = [[float(v) for v in row] for row in reader if row]
    if not header or header[0] != "time":
        raise ConfigurationError(f"{path}: first column must be 'time'")
    if not rows:
        raise ConfigurationError(f"{path}: trajectory has no rows")
    data = np.array(rows, dtype=np.float64)
    if step is None:
        if data.shape[0] < 2:
            raise ConfigurationError(f"{path}: step cannot be inferred from a single row")
        step = float(data[1, 0] - data[0, 0])
    expected = np.arange(data.shape[0]) * step
    if not np.allclose(data[:, 0], expected, rtol=1e-9, atol=1e-12):
        raise ConfigurationError(f"{path}: time column is not a uniform grid")
    return Trajectory(step=step, values=data[:, 1:], labels=tuple(header[1:]))


def write_binary(traj: Trajectory, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    labels = "\n".join(traj.labels).encode("utf-8")
    rows, cols = traj.values.shape
    seed = -1 if traj.seed is None else traj.seed
    with path.open("wb") as handle:
        handle.write(MAGIC)
        handle.write(_HEADER.pack(rows, cols, traj.step, seed, traj.replication, len(labels)))
        handle.write(labels)
        handle.write(np.ascontiguousarray(traj.values, dtype="<f8").tobytes())
    return path


def read_binary(path: Path) -> Trajectory:
    data = path.read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise ConfigurationError(f"{path} is not a LANTRAJ1 file")
    offset = len(MAGIC)
    try:
        rows, cols, step, seed, replication, label_len = _HEADER.unpack_from(data, offset)
    except struct.error as e:
        raise ConfigurationError(f"{path}: truncated LANTRAJ1 header", size=len(data)) from e
    offset += _HEADER.size
    expected = offset + label_len + 8 * rows * cols
    if len(data) < expected:
        raise ConfigurationError(
            f"{path}: LANTRAJ1 body is truncated", size=len(data), expected=expected
        )
    try:
        labels = tuple(data[offset : offset + label_len].decode("utf-8").split("\n"))
    except UnicodeDecodeError as e:
        raise ConfigurationError(f"{path}: labels are not UTF-8") from e
    offset += label_len
    values = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=offset).reshape(rows, cols)
    return Trajectory(
        step=step,
        values=values.astype(np.float64),
        labels=labels,
        seed=None if seed < 0 else seed,
        replication=replication,
    )


def write_json(traj: Trajectory, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {
        "step": traj.step,
        "seed": traj.seed,
        "replication": traj.replication,
        "labels": list(traj.labels),
        "values": traj.values.tolist(),
    }
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


def read_json(path: Path) -> Trajectory:
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
        return Trajectory(
            step=float(document["step"]),
            values=np.asarray(document["values"], dtype=np.float64),
            labels=tuple(document["labels"]),
            seed=document.get("seed"),
            replication=int(document.get("replication", 0)),
        )
    except (KeyError, TypeError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"{path} is not a trajectory document: {e}")


def read_trajectory(path: Path) -> Trajectory:
    """Dispatch on the file's leading bytes."""
    if not path.is_file():
        raise ConfigurationError(f"trajectory file {path} does not exist")
    with path.open("rb") as handle:
        head = handle.read(len(MAGIC))
    if head == MAGIC:
        return read_binary(path)
    if head.lstrip().startswith(b"{"):
        return read_json(path)
    return read_csv(path)


SUFFIXES = {"csv": ".csv", "json": ".json", "bin": ".lantraj"}


def write_trajectory(traj: Trajectory, path: Path, fmt: str) -> Path:
    if fmt == "bin":
        return write_binary(traj, path)
    if fmt == "json":
        return write_json(traj, path)
    return write_csv(traj, path)
