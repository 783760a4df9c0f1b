"""Input validation helpers used across the estimators and functional API."""

import numbers

import numpy as np

from .exceptions import InvalidArgumentError


def check_complex_matrix(a, name="matrix", ndim=2, allow_empty=False):
    """Return `a` as a complex128 array, checking shape and finiteness."""
    try:
        arr = np.asarray(a, dtype=np.complex128)
    except (TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"{name} is not numeric: {exc}") from None
    if arr.ndim != ndim:
        raise InvalidArgumentError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise InvalidArgumentError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return arr


def check_positive(value, name, allow_zero=False):
    """Check a finite real scalar is > 0 (or >= 0) and return it as float."""
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise InvalidArgumentError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise InvalidArgumentError(f"{name} must be finite, got {value}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise InvalidArgumentError(f"{name} must be {bound}, got {value}")
    return value


def check_indices(indices, size, name="indices", unique=False, allow_empty=False):
    """Validate an index list against ``range(size)``; returns an int64 array."""
    arr = np.asarray(indices)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be one-dimensional")
    if arr.size == 0:
        if allow_empty:
            return arr.astype(np.int64)
        raise InvalidArgumentError(f"{name} is empty")
    if not np.issubdtype(arr.dtype, np.integer):
        raise InvalidArgumentError(f"{name} must be integers, got dtype {arr.dtype}")
    arr = arr.astype(np.int64)
    bad = (arr < 0) | (arr >= size)
    if bad.any():
        raise InvalidArgumentError(
            f"{name} out of range [0, {size}): {arr[bad].tolist()}"
        )
    if unique and np.unique(arr).size != arr.size:
        raise InvalidArgumentError(f"{name} contains duplicates: {arr.tolist()}")
    return arr
