"""Counter-based Gaussian increments.

Every replication owns a Philox stream keyed by ``(seed, replication)``.
Increments are drawn row-major, so the draw for (step k, component m) is
always the ``k*M + m``-th normal of the stream regardless of how many steps
are requested.
"""

import math

import numpy as np

from .arrays import FloatArray


def stream(seed: int, replication: int = 0) -> np.random.Generator:
    """Generator for one replication of an experiment."""
    if seed < 0 or replication < 0:
        raise ValueError("seed and replication index must be non-negative")
    key = np.array([seed, replication], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def brownian_increments(
    seed: int, steps: int, dim: int, step: float, replication: int = 0
) -> FloatArray:
    """``steps x dim`` Brownian increments with variance ``step``."""
    if steps < 0 or dim < 1:
        raise ValueError(f"invalid increment block {steps}x{dim}")
    normals = stream(seed, replication).standard_normal((steps, dim))
    return normals * math.sqrt(step)  # type: ignore[no-any-return]
