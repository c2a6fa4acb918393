from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaussconj import kernels


def brute_force(X, scale, shift, coef, drift, j, level, strides, offset, count_upto, start):
    n, R, m = X.shape
    maxes = np.full((R, len(strides)), -np.inf)
    counts = np.zeros(R, dtype=np.int64)
    for r in range(R):
        O = []
        for k in range(m):
            vals = sorted((scale[i, r] * X[i, r, k] + shift[i, r] - coef[i, r] * drift[i, k] for i in range(n)), reverse=True)
            O.append(vals[j - 1])
        for s, stride in enumerate(strides):
            sel = [O[k] for k in range(m) if k >= start and (k + offset) % stride == 0]
            if sel:
                maxes[r, s] = max(sel)
        counts[r] = sum(1 for k in range(min(count_upto, m)) if O[k] > level)
    return maxes, counts


def random_case(seed, n, R, m):
    rng = np.random.default_rng(seed)
    return (
        rng.standard_normal((n, R, m)),
        rng.uniform(0.5, 2, (n, R)),
        rng.exponential(1, (n, R)),
        rng.uniform(0, 1, (n, R)),
        np.abs(rng.standard_normal((n, m))),
    )


@pytest.mark.parametrize("backend", kernels.available_backends())
@pytest.mark.parametrize("j", [1, 2, 3])
def test_matches_brute_force(backend, j):
    X, sc, sh, co, dr = random_case(j, 3, 7, 9)
    args = (j, 0.3, [1, 2, 4], 1, 6, 1)
    got = kernels.reduce_paths(X, sc, sh, co, dr, *args, backend=backend)
    want = brute_force(X, sc, sh, co, dr, *args)
    np.testing.assert_allclose(got[0], want[0], rtol=0, atol=1e-12)
    np.testing.assert_array_equal(got[1], want[1])


def test_stride_with_no_points_is_minus_inf():
    X, sc, sh, co, dr = random_case(0, 1, 2, 3)
    maxes, _ = kernels.reduce_paths(X, sc, sh, co, dr, 1, 0.0, [8], offset=1, start=1)
    assert np.all(maxes == -np.inf)


def test_invalid_order_index():
    X, sc, sh, co, dr = random_case(0, 2, 2, 3)
    with pytest.raises(ValueError):
        kernels.reduce_paths(X, sc, sh, co, dr, 3, 0.0, [1])


@pytest.mark.skipif("cython" not in kernels.available_backends(), reason="compiled kernels not built")
@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    n=st.integers(1, 4),
    R=st.integers(1, 6),
    m=st.integers(1, 12),
    data=st.data(),
)
def test_backends_bit_identical(seed, n, R, m, data):
    j = data.draw(st.integers(1, n))
    strides = data.draw(st.lists(st.integers(1, 5), min_size=1, max_size=3))
    offset = data.draw(st.integers(0, 4))
    start = data.draw(st.integers(0, m))
    count_upto = data.draw(st.integers(0, m))
    X, sc, sh, co, dr = random_case(seed, n, R, m)
    args = (j, 0.1, strides, offset, count_upto, start)
    a = kernels.reduce_paths(X, sc, sh, co, dr, *args, backend="python")
    b = kernels.reduce_paths(X, sc, sh, co, dr, *args, backend="cython")
    assert a[0].tobytes() == b[0].tobytes()
    assert np.array_equal(a[1], b[1])


def test_backend_flag():
    assert kernels.BACKEND in kernels.available_backends()
