"""Sojourn times of the conjunction above a level and both sides of the Berman limit."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Estimate, combined_stderr, normal_survival
from .errors import DomainError, InsufficientDataError
from .extremes import grid_statistics
from .gauss import GridSpec
from .limit import EnsembleSpec, LimitProcess, LimitVariant, tail_truncation_bound
from .parallel import BlockPlan, job_base, run_blocks

DEFAULT_PITCH = 0.05
DEFAULT_BLOCK = 4096
BERMAN_CSV_COLUMNS = ("u", "x", "lhs", "lhs_err", "B_hat", "B_err", "abs_diff")


@dataclass
class SojournSamples:
    """Per-replica sojourn times ``L`` (time units) above ``u`` on ``[0, t]``."""

    L: np.ndarray
    u: float
    t: float
    pitch: float
    n: int

    def __post_init__(self):
        self.L = np.asarray(self.L, dtype=float)

    def mean(self) -> Estimate:
        return Estimate.from_samples(self.L)

    def exact_mean(self) -> float:
        """``t Psi(u)^n``, the mean of the left Riemann sum as well as of the integral."""
        return self.t * normal_survival(self.u) ** self.n

    def rescaled(self, alpha_min: float) -> np.ndarray:
        if self.u <= 0:
            raise DomainError("rescaling needs u > 0")
        return self.u ** (2.0 / alpha_min) * self.L


def mc_sojourn(
    spec: EnsembleSpec,
    t: float,
    u: float,
    a: float = DEFAULT_PITCH,
    replicas: int = 100_000,
    seed: int = 0,
    pitch: float | None = None,
    job: int = 0,
    jobs: int = 1,
    block_size: int = DEFAULT_BLOCK,
) -> SojournSamples:
    """Sojourn of ``min_i X_i`` above ``u`` on ``[0, t]`` as ``pitch * #{k < N : min_i X_i(k pitch) > u}``.

    ``N = ceil(t / (a q(u)))`` and ``pitch = t / N``; pass ``pitch`` directly
    when ``u <= 0``, where ``q(u)`` is undefined.
    """
    if not (math.isfinite(t) and t > 0):
        raise DomainError("t must be positive")
    if not math.isfinite(u):
        raise DomainError("u must be finite")
    if pitch is None:
        if u <= 0:
            raise DomainError("u <= 0 needs an explicit pitch")
        pitch = a * spec.q(u)
    N = max(1, math.ceil(t / pitch - 1e-9))
    grid = GridSpec.from_points(t, N + 1)
    standard = LimitVariant.standard()

    def work(stream, size):
        _, counts = grid_statistics(spec, standard, grid, spec.n, u, [1], stream, size, lazy=True, count_upto=N)
        return counts

    counts = np.concatenate(run_blocks(work, BlockPlan(seed, replicas, block_size, job_base(job)), jobs))
    return SojournSamples(counts * (t / N), u, t, t / N, spec.n)


def _positive_part_stats(R: np.ndarray, x: float):
    A = np.maximum(R - x, 0.0)
    return A, A.mean(), R.mean()


def berman_lhs(samples, x: float, u: float | None = None, alpha_min: float | None = None) -> float:
    """``mean((R - x)^+) / mean(R)`` with ``R = u^(2/alpha_min) L``.

    ``samples`` is a SojournSamples (``u`` and ``alpha_min`` as given or
    taken from it) or an array of already rescaled values ``R``.
    """
    return berman_lhs_with_error(samples, x, u, alpha_min)[0]


def berman_lhs_with_error(samples, x: float, u: float | None = None, alpha_min: float | None = None):
    """:func:`berman_lhs` and its delta-method standard error."""
    if x < 0:
        raise DomainError("x must be non-negative")
    if isinstance(samples, SojournSamples):
        if alpha_min is None:
            raise DomainError("alpha_min is needed to rescale sojourn times")
        R = samples.rescaled(alpha_min) if u is None else (u ** (2.0 / alpha_min)) * samples.L
    else:
        R = np.asarray(samples, dtype=float)
        if u is not None and alpha_min is not None:
            R = u ** (2.0 / alpha_min) * R
    if R.size == 0:
        raise InsufficientDataError("no samples")
    A, mA, mR = _positive_part_stats(R, x)
    if mR <= 0:
        raise InsufficientDataError("all sojourn samples are zero; the ratio is undefined")
    ratio = mA / mR
    N = R.size
    if N < 2:
        return ratio, 0.0
    cov = np.cov(np.vstack([A, R]), ddof=1)
    var = (cov[0, 0] - 2 * ratio * cov[0, 1] + ratio**2 * cov[1, 1]) / (mR**2 * N)
    return float(ratio), float(math.sqrt(max(var, 0.0)))


@dataclass
class BEstimate:
    x: np.ndarray
    B: np.ndarray
    stderr: np.ndarray
    a: float
    K: int
    replicas: int
    truncation_bound: float

    def at(self, x: float) -> Estimate:
        i = int(np.flatnonzero(np.isclose(self.x, x))[0])
        return Estimate(float(self.B[i]), float(self.stderr[i]), self.replicas)

    def flags(self, steep: float = 2.0) -> dict[float, str]:
        """Per grid point: ``flat`` where the estimate sits at 0 or 1, ``steep``
        where it drops faster than ``steep`` per unit of x towards the next
        point, otherwise ``ok``. Comparisons near such points are fragile.
        """
        out = {}
        for i, (x, b) in enumerate(zip(self.x, self.B)):
            tag = "ok"
            if b in (0.0, 1.0):
                tag = "flat"
            elif i + 1 < self.x.size and (self.B[i] - self.B[i + 1]) > steep * (self.x[i + 1] - x):
                tag = "steep"
            out[float(x)] = tag
        return out


def occupation_times(
    spec: EnsembleSpec,
    a: float,
    K: int,
    replicas: int,
    seed: int = 0,
    variant: LimitVariant | None = None,
    job: int = 0,
    jobs: int = 1,
    block_size: int = DEFAULT_BLOCK,
) -> np.ndarray:
    """``a * #{0 <= k < K : Z(a k) > 0}`` per limit-process replica."""
    lp = LimitProcess(spec, variant or LimitVariant.standard(), a, K)
    parts = run_blocks(lambda st, k: lp.reduce(st, k, [1])[1], BlockPlan(seed, replicas, block_size, job_base(job)), jobs)
    return a * np.concatenate(parts)


def estimate_B(
    spec: EnsembleSpec,
    a: float,
    K: int,
    replicas: int,
    x_grid: Sequence[float],
    seed: int = 0,
    epsilon: float | None = 1e-2,
    variant: LimitVariant | None = None,
    job: int = 0,
    jobs: int = 1,
) -> BEstimate:
    """Survival function of the truncated occupation time of the limit process.

    Refuses with an advised ``K`` when the truncation bound exceeds ``epsilon``.
    """
    variant = variant or LimitVariant.standard()
    bound = tail_truncation_bound(spec, variant, a, K, epsilon)
    occ = occupation_times(spec, a, K, replicas, seed, variant, job, jobs)
    x = np.asarray(x_grid, dtype=float)
    B = (occ[None, :] > x[:, None]).mean(axis=1)
    se = np.sqrt(B * (1 - B) / replicas)
    return BEstimate(x, B, se, a, K, replicas, bound)


@dataclass
class BermanRow:
    u: float
    x: float
    lhs: float
    lhs_err: float
    B_hat: float
    B_err: float

    @property
    def abs_diff(self) -> float:
        return abs(self.lhs - self.B_hat)

    @property
    def err(self) -> float:
        return combined_stderr(self.lhs_err, self.B_err)


@dataclass
class BermanReport:
    t: float
    rows: list[BermanRow]
    B: BEstimate
    sojourn_replicas: dict = field(default_factory=dict)
    means: dict = field(default_factory=dict)

    def row(self, u: float, x: float) -> BermanRow:
        for r in self.rows:
            if math.isclose(r.u, u) and math.isclose(r.x, x):
                return r
        raise KeyError((u, x))

    def shrinking(self, sigmas: float = 3.0) -> dict[float, bool]:
        """Per ``x``: is the discrepancy at the largest ``u`` no larger than at the smallest, within error bars?"""
        us = sorted({r.u for r in self.rows})
        out = {}
        for x in sorted({r.x for r in self.rows}):
            lo, hi = self.row(us[0], x), self.row(us[-1], x)
            out[x] = hi.abs_diff <= lo.abs_diff + sigmas * combined_stderr(lo.err, hi.err)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(BERMAN_CSV_COLUMNS) + "\n")
        for r in self.rows:
            vals = (r.u, r.x, r.lhs, r.lhs_err, r.B_hat, r.B_err, r.abs_diff)
            buf.write(",".join(repr(float(v)) for v in vals) + "\n")
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "rows": [dict(vars(r), abs_diff=r.abs_diff) for r in self.rows],
            "B": {
                "a": self.B.a,
                "K": self.B.K,
                "replicas": self.B.replicas,
                "truncation_bound": self.B.truncation_bound,
                "flags": {repr(k): v for k, v in self.B.flags().items()},
            },
            "shrinking": {repr(k): v for k, v in self.shrinking().items()},
            "sojourn_replicas": self.sojourn_replicas,
            "sojourn_means": self.means,
        }


def berman_compare(
    spec: EnsembleSpec,
    t: float,
    u_values: Sequence[float],
    x_grid: Sequence[float],
    sojourn_replicas: int | dict = 10**6,
    B_replicas: int = 10**5,
    a: float = DEFAULT_PITCH,
    K: int | None = None,
    seed: int = 0,
    epsilon: float | None = 1e-2,
    jobs: int = 1,
    job_offset: int = 0,
    B: BEstimate | None = None,
) -> BermanReport:
    """Empirical left side of the Berman limit at every ``u`` against the limit-process survival ``B``.

    Both sides use the same pitch ``a`` (in units of ``q(u)``). The limit
    process uses job ``job_offset`` and level ``u_values[i]`` uses job
    ``job_offset + i + 1``. A precomputed ``B`` on the same x-grid may be
    passed in.
    """
    if K is None:
        K = int(math.ceil(30.0 / a))
    if B is None:
        B = estimate_B(spec, a, K, B_replicas, x_grid, seed, epsilon, job=job_offset, jobs=jobs)
    rows = []
    budgets = {}
    means = {}
    for idx, u in enumerate(u_values):
        reps = sojourn_replicas[u] if isinstance(sojourn_replicas, dict) else sojourn_replicas
        budgets[repr(float(u))] = reps
        samples = mc_sojourn(spec, t, u, a, reps, seed, job=job_offset + idx + 1, jobs=jobs)
        m = samples.mean()
        means[repr(float(u))] = {"mean": m.mean, "stderr": m.stderr, "exact": samples.exact_mean(), "pitch": samples.pitch}
        for xi, x in enumerate(B.x):
            lhs, err = berman_lhs_with_error(samples, float(x), alpha_min=spec.alpha_min)
            rows.append(BermanRow(float(u), float(x), lhs, err, float(B.B[xi]), float(B.stderr[xi])))
    return BermanReport(t, rows, B, budgets, means)
