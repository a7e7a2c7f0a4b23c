"""Input-validation helpers used at public API boundaries."""

from __future__ import annotations

import numpy as np


def as_float_array(x, name="array", shape=None, ndim=None):
    """Coerce to a C-order float64 ndarray, optionally checking shape/ndim.

    `shape` may contain None for free dimensions.
    """
    arr = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if ndim is not None and arr.ndim != ndim:
        raise ValueError("%s: expected %d dims, got shape %s" % (name, ndim, arr.shape))
    if shape is not None:
        if arr.ndim != len(shape):
            raise ValueError("%s: expected shape %s, got %s" % (name, shape, arr.shape))
        for want, got in zip(shape, arr.shape):
            if want is not None and want != got:
                raise ValueError("%s: expected shape %s, got %s" % (name, shape, arr.shape))
    return arr


def check_finite(arr, name="array"):
    if not np.all(np.isfinite(arr)):
        raise ValueError("%s contains non-finite values" % name)
    return arr


def as_int_array(x, name="array", shape=None):
    arr = np.ascontiguousarray(np.asarray(x, dtype=np.int64))
    if shape is not None:
        if arr.ndim != len(shape):
            raise ValueError("%s: expected shape %s, got %s" % (name, shape, arr.shape))
        for want, got in zip(shape, arr.shape):
            if want is not None and want != got:
                raise ValueError("%s: expected shape %s, got %s" % (name, shape, arr.shape))
    return arr
