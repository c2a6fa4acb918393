"""Kernel backend selection.

The compiled extension is used when importable, unless the environment
variable GAUSSCONJ_PURE_PYTHON is set to a non-empty value other than "0".
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

PURE_ENV_VAR = "GAUSSCONJ_PURE_PYTHON"

_compiled = None
if os.environ.get(PURE_ENV_VAR, "0") in ("", "0"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])


def reduce_paths(X, scale, shift, drift_coef, drift, j, level, strides, offset=0, count_upto=None, start=0, backend=None):
    """Dispatch to the selected backend after normalising dtypes and layout."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, R, m = X.shape
    scale = np.ascontiguousarray(np.broadcast_to(scale, (n, R)), dtype=np.float64)
    shift = np.ascontiguousarray(np.broadcast_to(shift, (n, R)), dtype=np.float64)
    drift_coef = np.ascontiguousarray(np.broadcast_to(drift_coef, (n, R)), dtype=np.float64)
    drift = np.ascontiguousarray(np.broadcast_to(drift, (n, m)), dtype=np.float64)
    strides = np.ascontiguousarray(strides, dtype=np.int_)
    if count_upto is None:
        count_upto = m
    if not 1 <= j <= n:
        raise ValueError("order index out of range")
    use = backend or BACKEND
    if use == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _compiled.reduce_paths(X, scale, shift, drift_coef, drift, int(j), float(level), strides, int(offset), int(count_upto), int(start))
    return _kernels_py.reduce_paths(X, scale, shift, drift_coef, drift, int(j), float(level), strides, int(offset), int(count_upto), int(start))
