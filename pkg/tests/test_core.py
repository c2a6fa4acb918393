from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from gaussconj.core import (
    DEFAULT_SEED,
    SEED_ENV_VAR,
    Estimate,
    RandomStream,
    combined_stderr,
    make_streams,
    normal_survival,
    normal_survival_asymptotic,
    resolve_seed,
)
from gaussconj.errors import DomainError


def test_survival_at_zero():
    assert normal_survival(0.0) == 0.5


def test_survival_far_tail_matches_mills():
    expected = math.exp(-32) / (math.sqrt(2 * math.pi) * 8)
    assert abs(normal_survival(8.0) / expected - 1) < 0.02


def test_survival_against_quadrature():
    density = lambda x: math.exp(-x * x / 2) / math.sqrt(2 * math.pi)  # noqa: E731
    oracle, _ = integrate.quad(density, 1.959964, np.inf)
    assert normal_survival(1.959964) == pytest.approx(oracle, rel=1e-9)
    assert normal_survival(1.959964) == pytest.approx(0.025, abs=1e-6)


def test_survival_symmetry_and_monotone():
    u = np.linspace(-6, 6, 241)
    s = normal_survival(u)
    assert np.all(np.diff(s) < 0)
    assert np.max(np.abs(s + normal_survival(-u) - 1)) < 1e-12


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_survival_rejects_non_finite(bad):
    with pytest.raises(DomainError):
        normal_survival(bad)


def test_asymptotic_examples():
    assert normal_survival_asymptotic(1.0) == pytest.approx(0.241971, abs=1e-6)
    assert normal_survival_asymptotic(3.0) == pytest.approx(math.exp(-4.5) / (3 * math.sqrt(2 * math.pi)), rel=1e-12)
    assert normal_survival_asymptotic(3.0) == pytest.approx(0.0014773, abs=1e-7)
    ratios = [normal_survival(u) / normal_survival_asymptotic(u) for u in (5, 10, 20, 30)]
    assert all(np.diff(ratios) > 0)
    assert abs(ratios[-1] - 1) < 2e-3


@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan])
def test_asymptotic_domain(bad):
    with pytest.raises(DomainError):
        normal_survival_asymptotic(bad)


def test_streams_repeatable():
    a = make_streams(42, 4)
    b = make_streams(42, 4)
    assert len(a) == 4 and a == b
    for s, t in zip(a, b):
        np.testing.assert_array_equal(s.generator().random(16), t.generator().random(16))


def test_streams_prefix_stable_and_distinct():
    short, long = make_streams(42, 2), make_streams(42, 5)
    assert short == long[:2]
    draws = [s.generator().random(8) for s in long]
    assert len({d.tobytes() for d in draws}) == 5


def test_seed_sensitivity():
    x = make_streams(42, 1)[0].generator().random(8)
    y = make_streams(43, 1)[0].generator().random(8)
    assert not np.array_equal(x, y)


def test_child_streams_do_not_disturb_parent():
    s = RandomStream(7, 3)
    before = s.generator().random(4)
    s.child(0).generator().random(100)
    np.testing.assert_array_equal(before, s.generator().random(4))
    assert not np.array_equal(s.child(0).generator().random(4), s.child(1).generator().random(4))


def test_stream_validation():
    with pytest.raises(DomainError):
        RandomStream(-1, 0)
    with pytest.raises(DomainError):
        RandomStream(2**64, 0)
    with pytest.raises(DomainError):
        make_streams(1, 0)


def test_normal_draw_moments():
    z = RandomStream(2024, 0).generator().standard_normal(10**6)
    assert abs(z.mean()) < 4e-3
    assert abs(z.var() - 1) < 5e-3


def test_seed_precedence(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
    assert resolve_seed() == (DEFAULT_SEED, "default")
    assert resolve_seed(config_seed=5) == (5, "config")
    monkeypatch.setenv(SEED_ENV_VAR, "9")
    assert resolve_seed(config_seed=5) == (9, "env")
    assert resolve_seed(cli_seed=1, config_seed=5) == (1, "cli")
    monkeypatch.setenv(SEED_ENV_VAR, "nine")
    with pytest.raises(DomainError):
        resolve_seed()


def test_estimate_from_samples():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    e = Estimate.from_samples(x)
    assert e.mean == 2.5
    assert e.stderr == pytest.approx(x.std(ddof=1) / 2)
    lo, hi = e.ci
    assert hi - e.mean == pytest.approx(1.959964 * e.stderr, rel=1e-6)
    assert e.mean - lo == pytest.approx(hi - e.mean)


def test_estimate_from_count_and_validation():
    e = Estimate.from_count(25, 100)
    assert e.mean == 0.25 and e.stderr == pytest.approx(math.sqrt(0.25 * 0.75 / 100))
    assert Estimate.from_count(0, 10).stderr == 0
    with pytest.raises(DomainError):
        Estimate(0.0, -1.0, 10)
    with pytest.raises(DomainError):
        Estimate(0.0, 1.0, 10, ci_level=1.0)
    with pytest.raises(DomainError):
        Estimate.from_samples([1.0])


def test_combined_stderr():
    assert combined_stderr(3.0, 4.0) == 5.0
    assert combined_stderr() == 0.0
