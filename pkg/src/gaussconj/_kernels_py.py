"""Pure-numpy versions of the path reduction kernels.

Same signatures and bit-identical results as the compiled ``_kernels``
module; used when the extension is not built or GAUSSCONJ_PURE_PYTHON=1.
"""

from __future__ import annotations

import numpy as np


def reduce_paths(X, scale, shift, drift_coef, drift, j, level, strides, offset, count_upto, start=0):
    """Reduce ``n`` coupled paths per replica to grid maxima and exceedance counts.

    With ``V[i, r, k] = scale[i, r] * X[i, r, k] + shift[i, r] - drift_coef[i, r] * drift[i, k]``
    and ``O[r, k]`` the ``j``-th largest of ``V[:, r, k]``:

    * ``maxes[r, s]`` is the max of ``O[r, k]`` over ``k >= start`` with ``(k + offset) % strides[s] == 0``
      (``-inf`` if there is no such ``k``);
    * ``counts[r]`` is the number of ``k < count_upto`` with ``O[r, k] > level``.
    """
    X = np.asarray(X, dtype=np.float64)
    n, R, m = X.shape
    V = scale[:, :, None] * X + shift[:, :, None]
    V = V - drift_coef[:, :, None] * drift[:, None, :]
    if j == n:
        O = V.min(axis=0)
    elif j == 1:
        O = V.max(axis=0)
    else:
        O = np.sort(V, axis=0)[n - j]
    k = np.arange(m)
    maxes = np.full((R, len(strides)), -np.inf)
    for s, stride in enumerate(strides):
        sel = ((k + offset) % stride == 0) & (k >= start)
        if sel.any():
            maxes[:, s] = O[:, sel].max(axis=1)
    counts = (O[:, :count_upto] > level).sum(axis=1).astype(np.int64)
    return maxes, counts
