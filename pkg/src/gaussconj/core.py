"""Reproducible random streams, Gaussian tail functions and the Estimate container."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

SEED_ENV_VAR = "GAUSSCONJ_SEED"
DEFAULT_SEED = 20130601

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def normal_survival(u):
    """Standard normal survival function ``P(N(0,1) > u)``.

    Evaluated through the complementary error function, so the relative
    accuracy holds far into the upper tail. Accepts scalars or arrays.
    """
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"normal_survival needs finite input, got {u!r}")
    out = 0.5 * special.erfc(arr / _SQRT2)
    return float(out) if out.ndim == 0 else out


def normal_survival_asymptotic(u):
    """Mills-ratio form ``exp(-u**2/2) / (sqrt(2*pi) * u)`` for ``u > 0``."""
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"normal_survival_asymptotic needs u > 0, got {u!r}")
    out = np.exp(-0.5 * arr * arr) / (_SQRT2PI * arr)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RandomStream:
    """Counter-based random stream identified by ``(master_seed, stream_index)``.

    Every call to :meth:`generator` returns a fresh Philox generator keyed by
    the stream identity, so a stream can be replayed at will and handed to any
    worker without shared state. ``path`` addresses child streams (one per
    process, per ingredient) without disturbing the parent's sequence.
    """

    master_seed: int
    stream_index: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise DomainError("master_seed must be a 64-bit unsigned integer")
        if self.stream_index < 0:
            raise DomainError("stream_index must be non-negative")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            self.master_seed, spawn_key=(self.stream_index, *self.path)
        )
        return np.random.Generator(np.random.Philox(seq))

    def child(self, *keys: int) -> "RandomStream":
        return RandomStream(self.master_seed, self.stream_index, self.path + tuple(keys))


def make_streams(master_seed: int, count: int, start: int = 0) -> list[RandomStream]:
    """``count`` independent streams with indices ``start .. start+count-1``.

    Stream ``k`` does not depend on ``count`` (prefix stability).
    """
    if count < 1:
        raise DomainError("count must be >= 1")
    return [RandomStream(int(master_seed), start + k) for k in range(count)]


def resolve_seed(cli_seed: int | None = None, config_seed: int | None = None) -> tuple[int, str]:
    """Pick the master seed: CLI flag, then environment variable, then config.

    Returns the seed and a tag naming where it came from.
    """
    if cli_seed is not None:
        return int(cli_seed), "cli"
    env = os.environ.get(SEED_ENV_VAR)
    if env not in (None, ""):
        try:
            return int(env), "env"
        except ValueError as exc:
            raise DomainError(f"{SEED_ENV_VAR}={env!r} is not an integer") from exc
    if config_seed is not None:
        return int(config_seed), "config"
    return DEFAULT_SEED, "default"


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo point estimate with its standard error."""

    mean: float
    stderr: float
    n_replicas: int
    ci_level: float = 0.95

    def __post_init__(self):
        if self.stderr < 0 or not math.isfinite(self.stderr):
            raise DomainError("stderr must be finite and >= 0")
        if self.n_replicas < 1:
            raise DomainError("n_replicas must be positive")
        if not 0.0 < self.ci_level < 1.0:
            raise DomainError("ci_level must lie in (0, 1)")

    @property
    def z(self) -> float:
        return float(special.ndtri(0.5 + 0.5 * self.ci_level))

    @property
    def ci(self) -> tuple[float, float]:
        half = self.z * self.stderr
        return self.mean - half, self.mean + half

    @classmethod
    def from_samples(cls, samples, ci_level: float = 0.95) -> "Estimate":
        x = np.asarray(samples, dtype=float).ravel()
        if x.size < 2:
            raise DomainError("need at least two samples")
        return cls(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)), int(x.size), ci_level)

    @classmethod
    def from_count(cls, hits: int, n: int, ci_level: float = 0.95) -> "Estimate":
        """Binomial proportion ``hits/n`` with stderr ``sqrt(p(1-p)/n)``."""
        if n < 1:
            raise DomainError("n must be positive")
        p = hits / n
        return cls(p, math.sqrt(max(p * (1.0 - p), 0.0) / n), int(n), ci_level)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n_replicas, "ci_level": self.ci_level}


def combined_stderr(*errors: float) -> float:
    """Root sum of squares of independent standard errors."""
    return math.sqrt(sum(e * e for e in errors))

