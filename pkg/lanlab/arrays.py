"""Array type aliases and small conversion helpers."""

from collections.abc import Sequence

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]
ArrayLike = npt.ArrayLike


def as_vector(values: ArrayLike, name: str = "value") -> FloatArray:
    """Return ``values`` as a 1-d float64 array."""
    arr = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def as_matrix(values: ArrayLike | Sequence[Sequence[float]], size: int) -> FloatArray:
    """Broadcast a scalar, a diagonal or a full matrix to ``size x size``."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        return np.eye(size) * float(arr)
    if arr.ndim == 1:
        if arr.shape[0] != size:
            raise ValueError(f"expected {size} diagonal entries, got {arr.shape[0]}")
        return np.diag(arr)
    if arr.shape != (size, size):
        raise ValueError(f"expected a {size}x{size} matrix, got shape {arr.shape}")
    return arr
