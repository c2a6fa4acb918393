from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, stats

from gaussconj.core import RandomStream, normal_survival
from gaussconj.errors import ConfigurationError, DomainError, TruncationNotCertified
from gaussconj.limit import (
    EnsembleSpec,
    LimitProcess,
    LimitVariant,
    TimeChangeLaw,
    advise_K,
    occupation_time,
    sample_limit_at_times,
    sample_limit_path,
    tail_truncation_bound,
)
from gaussconj.pickands import estimate_discrete_H, pickands_table


def discrete_H_bm(delta: float, terms: int = 200_000) -> float:
    """Grid constant for alpha = 1 from the fluctuation identity for random walks."""
    k = np.arange(1, terms + 1)
    s = np.sum(normal_survival(np.sqrt(k * delta / 2)) / k)
    return math.exp(-2 * s) / delta


def discrete_H_line(a: float, kmax: int = 400) -> float:
    """Grid constant for alpha = 2, where the fBm is ``t * N``: integrate over N."""
    k = np.arange(1, kmax + 1)

    def integrand(x):
        m = np.min(a * a * k * k - math.sqrt(2) * x * a * k)
        return (-math.expm1(-m) if m > 0 else 0.0) * math.exp(-x * x / 2) / math.sqrt(2 * math.pi)

    val, _ = integrate.quad(integrand, -12, 12, limit=400, points=[0.0])
    return val / a


def test_mean_of_single_term():
    spec = EnsembleSpec.build([1.0])
    Z = sample_limit_at_times(spec, LimitVariant.standard(), [0.5, 1.0, 2.0], RandomStream(1, 0), 200_000)
    se = Z.std(axis=0, ddof=1) / math.sqrt(Z.shape[0])
    assert np.all(np.abs(Z.mean(axis=0) - np.array([0.5, 0.0, -1.0])) <= 4 * se)


def test_value_at_zero_is_min_of_exponentials():
    spec = EnsembleSpec.build([1.0, 1.5, 1.0])
    Z0 = sample_limit_at_times(spec, LimitVariant.standard(), [0.0], RandomStream(2, 0), 20_000)[:, 0]
    assert stats.kstest(Z0, "expon", args=(0, 1 / 3)).pvalue > 0.001


def test_grid_and_exact_samplers_agree():
    spec = EnsembleSpec.build([1.0, 1.0], C=[1.0, 2.0])
    lp = LimitProcess(spec, LimitVariant.standard(), 0.25, 4)
    P = lp.paths(RandomStream(3, 0), 50_000)
    E = sample_limit_at_times(spec, LimitVariant.standard(), [0.25, 0.5, 0.75, 1.0], RandomStream(3, 1), 50_000)
    se = np.hypot(P.std(axis=0), E.std(axis=0)) / math.sqrt(50_000)
    assert np.all(np.abs(P.mean(axis=0) - E.mean(axis=0)) <= 4 * se)


def test_nonstandard_with_unit_scales_matches_standard():
    spec = EnsembleSpec.build([1.0, 1.0])
    t = [0.5, 1.0]
    a = sample_limit_at_times(spec, LimitVariant.standard(), t, RandomStream(4, 0), 100_000)
    b = sample_limit_at_times(spec, LimitVariant.nonstandard(), t, RandomStream(4, 1), 100_000)
    R = a.shape[0]
    se_mean = np.hypot(a.std(axis=0), b.std(axis=0)) / math.sqrt(R)
    assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) <= 4 * se_mean)
    va, vb = a.var(axis=0, ddof=1), b.var(axis=0, ddof=1)
    se_var = np.hypot(np.std((a - a.mean(0)) ** 2, axis=0), np.std((b - b.mean(0)) ** 2, axis=0)) / math.sqrt(R)
    assert np.all(np.abs(va - vb) <= 4 * se_var)


def test_nonstandard_same_streams_is_identical_when_b_is_one():
    spec = EnsembleSpec.build([1.0, 2.0])
    s = RandomStream(5, 0)
    x = LimitProcess(spec, LimitVariant.standard(), 0.1, 20).paths(s, 64)
    y = LimitProcess(spec, LimitVariant.nonstandard(), 0.1, 20).paths(s, 64)
    np.testing.assert_allclose(x, y, rtol=0, atol=1e-12)


def test_sample_limit_path_shape():
    spec = EnsembleSpec.build([1.0])
    p = sample_limit_path(spec, LimitVariant.standard(), 0.1, 30, RandomStream(0, 0))
    assert p.shape == (30,)


@pytest.mark.parametrize(
    "path, a, expected",
    [([-1.0, 0.0, -2.0], 0.3, 0.0), ([1.0, 2.0, 0.5, 3.0], 0.25, 1.0), ([1.0, -1.0, 2.0, 0.1], 0.5, 1.5)],
)
def test_occupation_time(path, a, expected):
    assert occupation_time(path, a) == pytest.approx(expected)


def test_truncation_bound_properties():
    spec = EnsembleSpec.build([1.0])
    v = LimitVariant.standard()
    bounds = [tail_truncation_bound(spec, v, 0.1, K) for K in (50, 100, 200, 400, 800, 1600)]
    assert all(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:]))
    assert bounds[-1] < 1e-12 * 1e6 and bounds[-1] < bounds[0] / 1e3
    # closed-form check of the first summand against direct evaluation
    direct = sum(2 * normal_survival(math.sqrt(0.1 * k / 2)) for k in range(201, 400_000))
    assert tail_truncation_bound(spec, v, 0.1, 200) == pytest.approx(direct, rel=1e-3)


def test_truncation_refusal_carries_advice():
    spec = EnsembleSpec.build([1.0])
    v = LimitVariant.standard()
    with pytest.raises(TruncationNotCertified) as info:
        tail_truncation_bound(spec, v, 0.2, 100, epsilon=1e-7)
    K = info.value.advice["K"]
    assert K > 100
    assert tail_truncation_bound(spec, v, 0.2, K) <= 1e-7 < tail_truncation_bound(spec, v, 0.2, K - 1)
    assert advise_K(spec, v, 0.2, 1e-7) == K


def test_truncation_bound_uses_best_active_process():
    one = EnsembleSpec.build([1.0], C=[4.0])
    two = EnsembleSpec.build([1.0, 1.0], C=[1.0, 4.0])
    v = LimitVariant.standard()
    assert tail_truncation_bound(two, v, 0.1, 100) == pytest.approx(tail_truncation_bound(one, v, 0.1, 100))


def test_variant_validation():
    with pytest.raises(ConfigurationError):
        LimitVariant.order_stat(2).validate(EnsembleSpec.build([1.0, 1.0], C=[1.0, 2.0]))
    with pytest.raises(ConfigurationError):
        LimitVariant.order_stat(3).validate(EnsembleSpec.build([1.0, 1.0]))
    with pytest.raises(ConfigurationError):
        LimitVariant.order_stat(1).validate(EnsembleSpec.build([1.0, 1.5]))
    with pytest.raises(ConfigurationError):
        LimitVariant.time_changed().validate(EnsembleSpec.build([1.0]))
    with pytest.raises(ConfigurationError):
        LimitVariant("order_stat")
    with pytest.raises(ConfigurationError):
        LimitVariant("weird")
    with pytest.raises(DomainError):
        LimitProcess(EnsembleSpec.build([1.0]), LimitVariant.standard(), 0.0, 10)


def test_time_change_law_validation():
    with pytest.raises(ConfigurationError):
        TimeChangeLaw.discrete([(1.0, 1.0)])
    with pytest.raises(ConfigurationError):
        TimeChangeLaw.discrete([(1.0, 0.5), (2.0, 0.4)])
    with pytest.raises(ConfigurationError):
        TimeChangeLaw.discrete([(-1.0, 0.5), (2.0, 0.5)])
    with pytest.raises(ConfigurationError):
        TimeChangeLaw.uniform(1.0, 1.0)
    law = TimeChangeLaw.discrete([(0.5, 0.25), (2.0, 0.75)])
    assert law.upper == 2.0
    assert law.expect(lambda t: t) == pytest.approx(1.625)
    assert TimeChangeLaw.uniform(0.0, 2.0).expect(lambda t: t * t) == pytest.approx(4 / 3)
    with pytest.raises(ConfigurationError):
        EnsembleSpec.build([1.0], b=[0.0])
    with pytest.raises(ConfigurationError):
        EnsembleSpec.build([1.0, 1.0], C=[1.0])


def test_time_changed_terms_use_theta():
    law = TimeChangeLaw.discrete([(0.5, 0.5), (2.0, 0.5)])
    spec = EnsembleSpec.build([1.0], theta=[law])
    Z = sample_limit_at_times(spec, LimitVariant.time_changed(), [1.0], RandomStream(6, 0), 200_000)[:, 0]
    # E Z(1) = 1 - E[Theta]
    assert abs(Z.mean() - (1 - 1.25)) <= 4 * Z.std() / math.sqrt(Z.size)
    assert math.isfinite(tail_truncation_bound(spec, LimitVariant.time_changed(), 0.1, 400))


def test_exchangeability_of_identical_processes():
    spec = EnsembleSpec.build([1.0, 1.0], C=[1.0, 4.0])
    swapped = EnsembleSpec.build([1.0, 1.0], C=[4.0, 1.0])
    v = LimitVariant.standard()
    a = pickands_table(spec, v, (0.2,), 4.0, 40_000, seed=7, job=0, epsilon=None)
    b = pickands_table(swapped, v, (0.2,), 4.0, 40_000, seed=7, job=1, epsilon=None)
    ra, rb = a.rows[0], b.rows[0]
    assert abs(ra.H_hat - rb.H_hat) <= 4 * math.hypot(ra.stderr_H, rb.stderr_H)
    again = pickands_table(spec, v, (0.2,), 4.0, 40_000, seed=7, job=0, epsilon=None)
    assert again.rows == a.rows


def test_order_stat_full_equals_standard():
    spec = EnsembleSpec.build([1.0, 1.0, 1.0])
    a = estimate_discrete_H(spec, LimitVariant.order_stat(3), 0.2, 20, 100_000, seed=8, job=0, epsilon=None)
    b = estimate_discrete_H(spec, LimitVariant.standard(), 0.2, 20, 100_000, seed=8, job=1, epsilon=None)
    assert abs(a.p_hat - b.p_hat) <= 4 * math.hypot(a.stderr_H, b.stderr_H) * 0.2


def test_order_stat_monotone_in_j_pathwise():
    spec = EnsembleSpec.build([1.0, 1.0, 1.0])
    s = RandomStream(9, 0)
    maxima = []
    for j in (1, 2, 3):
        m, _ = LimitProcess(spec, LimitVariant.order_stat(j), 0.1, 50).reduce(s, 2000)
        maxima.append(m[:, 0])
    assert np.all(maxima[1] <= maxima[0]) and np.all(maxima[2] <= maxima[1])
    p = [np.mean(m <= 0) for m in maxima]
    assert p[0] <= p[1] <= p[2]


def test_appending_rougher_processes_leaves_hits_unchanged():
    base = EnsembleSpec.build([1.0])
    extended = EnsembleSpec.build([1.0, 1.5, 2.0])
    v = LimitVariant.standard()
    a = pickands_table(base, v, (0.2, 0.1), 4.0, 20_000, seed=10, epsilon=None)
    b = pickands_table(extended, v, (0.2, 0.1), 4.0, 20_000, seed=10, epsilon=None)
    assert [r.p_hat for r in a.rows] == [r.p_hat for r in b.rows]


def test_discrete_constant_alpha_one_against_series():
    spec = EnsembleSpec.build([1.0])
    row = estimate_discrete_H(spec, LimitVariant.standard(), 0.2, 100, 200_000, seed=12, epsilon=None)
    oracle = discrete_H_bm(0.2)
    assert oracle == pytest.approx(0.69240, abs=5e-5)
    assert abs(row.H_hat - oracle) <= 4 * row.stderr_H


def test_discrete_constant_alpha_two_against_quadrature():
    spec = EnsembleSpec.build([2.0])
    row = estimate_discrete_H(spec, LimitVariant.standard(), 0.2, 100, 200_000, seed=13, epsilon=None)
    oracle = discrete_H_line(0.2)
    assert oracle == pytest.approx(0.56231, abs=5e-4)
    assert abs(row.H_hat - oracle) <= 4 * row.stderr_H
