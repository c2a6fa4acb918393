"""Generalized Pickands constants from the discrete-grid limit.

For a pitch ``a`` the grid constant is ``P(max_{k>=1} Z(a k) <= 0) / a``;
the constant itself is its limit as ``a -> 0``. Rows of a table share
fBm paths: all pitches are integer multiples of the finest one, and the
coarser grids are sub-grids of the finest.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import combined_stderr
from .errors import InsufficientDataError, TruncationNotCertified
from .limit import EnsembleSpec, LimitProcess, LimitVariant, tail_truncation_bound
from .parallel import BlockPlan, job_base, run_blocks

DEFAULT_A = (0.2, 0.1, 0.05)
DEFAULT_S = 20.0
DEFAULT_EPSILON = 1e-6
DEFAULT_REPLICAS = 10**6
DEFAULT_BLOCK = 4096
# a priori scale of a*H used to turn a relative truncation tolerance into an absolute one
_H_FLOOR = 0.5

CSV_COLUMNS = ("a", "S", "K", "replicas", "p_hat", "H_hat", "stderr_H")


@dataclass(frozen=True)
class PickandsRow:
    a: float
    S: float
    K: int
    replicas: int
    p_hat: float
    H_hat: float
    stderr_H: float
    truncation_bound: float = math.nan
    certified: bool = True

    @classmethod
    def from_hits(cls, a: float, K: int, hits: int, replicas: int, **extra) -> "PickandsRow":
        p = hits / replicas
        se = math.sqrt(p * (1.0 - p) / replicas) / a
        return cls(a, a * K, K, replicas, p, p / a, se, **extra)


@dataclass
class PickandsTable:
    rows: list[PickandsRow]
    alpha_min: float | None = None
    cov: np.ndarray | None = None  # covariance of H_hat across rows (shared paths)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def a(self) -> np.ndarray:
        return np.array([r.a for r in self.rows])

    @property
    def H(self) -> np.ndarray:
        return np.array([r.H_hat for r in self.rows])

    @property
    def stderr(self) -> np.ndarray:
        return np.array([r.stderr_H for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_COLUMNS) + "\n")
        for r in self.rows:
            buf.write(",".join(repr(getattr(r, c)) for c in CSV_COLUMNS) + "\n")
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "alpha_min": self.alpha_min,
            "cov": None if self.cov is None else self.cov.tolist(),
            "meta": self.meta,
        }


@dataclass
class PickandsEstimate:
    value: float
    stderr: float
    method: str  # "linear-extrapolation" or "finest-a"
    table: PickandsTable
    power: float = 1.0
    slope: float = math.nan
    residual: float = math.nan

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "method": self.method,
            "abscissa": f"a^{self.power:g}",
            "slope": self.slope,
            "residual": self.residual,
            "rate_model": "H(a) linear in a^p; convergence rate in a is not known in closed form",
        }


def _check_truncation(spec, variant, a, K, epsilon, certify):
    bound = tail_truncation_bound(spec, variant, a, K)
    target = None
    if epsilon is not None:
        ref = a * _H_FLOOR * max(spec.Cs[i] ** (1.0 / spec.alpha_min) for i in spec.active)
        target = epsilon * ref
    ok = target is None or bound <= target
    if not ok and certify == "raise":
        # re-run with an absolute target to obtain the advice payload
        tail_truncation_bound(spec, variant, a, K, epsilon=target)
    return bound, ok


def simulate_hits(
    spec: EnsembleSpec,
    variant: LimitVariant,
    a_finest: float,
    K_finest: int,
    strides: Sequence[int],
    replicas: int,
    seed: int,
    job: int = 0,
    jobs: int = 1,
    block_size: int = DEFAULT_BLOCK,
):
    """Hit counts of ``{max_k Z(s a k) <= 0}`` per stride and their pairwise joint counts."""
    lp = LimitProcess(spec, variant, a_finest, K_finest)

    def work(stream, size):
        maxes, _ = lp.reduce(stream, size, strides)
        ind = (maxes <= 0.0).astype(np.int64)
        return ind.sum(axis=0), ind.T @ ind

    plan = BlockPlan(seed, replicas, block_size, job_base(job))
    parts = run_blocks(work, plan, jobs)
    hits = sum(p[0] for p in parts)
    joint = sum(p[1] for p in parts)
    return hits, joint, plan


def pickands_table(
    spec: EnsembleSpec,
    variant: LimitVariant | None = None,
    a_values: Sequence[float] = DEFAULT_A,
    S: float = DEFAULT_S,
    replicas: int = DEFAULT_REPLICAS,
    seed: int = 0,
    job: int = 0,
    jobs: int = 1,
    epsilon: float | None = DEFAULT_EPSILON,
    certify: str = "raise",
    block_size: int = DEFAULT_BLOCK,
) -> PickandsTable:
    """Rows for every pitch in ``a_values`` on common random numbers.

    Every pitch must be an integer multiple of the smallest and divide ``S``.
    ``certify`` is ``"raise"`` (refuse uncertified horizons) or ``"report"``
    (record the bound and a ``certified`` flag per row).
    """
    variant = variant or LimitVariant.standard()
    a_values = sorted({float(a) for a in a_values}, reverse=True)
    a_f = a_values[-1]
    strides = []
    for a in a_values:
        s = a / a_f
        if abs(s - round(s)) > 1e-9 or abs(S / a - round(S / a)) > 1e-9:
            raise InsufficientDataError(f"pitch {a} is not a multiple of {a_f} or does not divide S={S}")
        strides.append(int(round(s)))
    K_f = int(round(S / a_f))
    checks = [_check_truncation(spec, variant, a, int(round(S / a)), epsilon, certify) for a in a_values]
    hits, joint, plan = simulate_hits(spec, variant, a_f, K_f, strides, replicas, seed, job, jobs, block_size)
    rows = [
        PickandsRow.from_hits(a, int(round(S / a)), int(h), replicas, truncation_bound=b, certified=ok)
        for a, h, (b, ok) in zip(a_values, hits, checks)
    ]
    p = hits / replicas
    a_arr = np.array(a_values)
    cov = (joint / replicas - np.outer(p, p)) / replicas / np.outer(a_arr, a_arr)
    meta = {
        "variant": variant.to_dict(),
        "spec": spec.to_dict(),
        "seed": seed,
        "streams": list(plan.stream_range),
        "epsilon": epsilon,
        "certify": certify,
    }
    return PickandsTable(rows, spec.alpha_min, cov, meta)


def estimate_discrete_H(
    spec: EnsembleSpec,
    variant: LimitVariant,
    a: float,
    K: int,
    replicas: int,
    seed: int = 0,
    job: int = 0,
    jobs: int = 1,
    epsilon: float | None = DEFAULT_EPSILON,
    certify: str = "raise",
    block_size: int = DEFAULT_BLOCK,
) -> PickandsRow:
    """One table row: ``p_hat = P(max_{1<=k<=K} Z(a k) <= 0)`` and ``H_hat = p_hat / a``."""
    bound, ok = _check_truncation(spec, variant, a, K, epsilon, certify)
    hits, _, _ = simulate_hits(spec, variant, a, K, [1], replicas, seed, job, jobs, block_size)
    return PickandsRow.from_hits(a, K, int(hits[0]), replicas, truncation_bound=bound, certified=ok)


def extrapolate_H(table: PickandsTable, power: float = 1.0, fallback_factor: float = 3.0) -> PickandsEstimate:
    """Weighted least-squares fit of ``H_hat`` against ``a**power``; the intercept estimates H.

    Falls back to the finest-pitch row when some row misses the fit by more
    than ``fallback_factor`` of its standard error.
    """
    rows = table.rows
    if len({r.a for r in rows}) < 3:
        raise InsufficientDataError("extrapolation needs at least 3 rows with distinct a")
    x = table.a**power
    y = table.H
    se = table.stderr
    w = np.where(se > 0, 1.0 / np.where(se > 0, se, 1.0) ** 2, 0.0)
    if not np.all(se > 0):
        w = np.ones_like(x)
    X = np.column_stack([np.ones_like(x), x])
    # coefficients are a fixed linear map of y: beta = A y
    A = np.linalg.solve(X.T @ (w[:, None] * X), (X * w[:, None]).T)
    beta = A @ y
    cov_y = table.cov if table.cov is not None else np.diag(se**2)
    var_icpt = float(A[0] @ cov_y @ A[0])
    fitted = X @ beta
    dev = np.abs(y - fitted)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, dev / se, np.where(dev > 1e-12 * np.abs(y).max(), np.inf, 0.0))
    residual = float(z.max())
    if residual > fallback_factor:
        finest = int(np.argmin(table.a))
        return PickandsEstimate(float(y[finest]), float(se[finest]), "finest-a", table, power, float(beta[1]), residual)
    return PickandsEstimate(
        float(beta[0]), math.sqrt(max(var_icpt, 0.0)), "linear-extrapolation", table, power, float(beta[1]), residual
    )


def default_power(alpha_min: float) -> float:
    """Abscissa exponent for extrapolation: grid effects scale like ``a^(alpha/2)``."""
    return alpha_min / 2.0


def estimate_H(
    spec: EnsembleSpec,
    variant: LimitVariant | None = None,
    a_values: Sequence[float] = DEFAULT_A,
    S: float = DEFAULT_S,
    replicas: int = DEFAULT_REPLICAS,
    seed: int = 0,
    job: int = 0,
    jobs: int = 1,
    power: float | None = None,
    epsilon: float | None = DEFAULT_EPSILON,
    certify: str = "raise",
    block_size: int = DEFAULT_BLOCK,
) -> PickandsEstimate:
    """Table plus extrapolation in one call."""
    table = pickands_table(spec, variant, a_values, S, replicas, seed, job, jobs, epsilon, certify, block_size)
    return extrapolate_H(table, default_power(spec.alpha_min) if power is None else power)


def lower_bound_H(spec: EnsembleSpec, H_alpha_min) -> float:
    """``max_{i active} C_i^{1/alpha_min} * H_{alpha_min}``.

    ``H_alpha_min`` is the classical constant for ``alpha_min``, as a float or
    a PickandsEstimate.
    """
    h = float(getattr(H_alpha_min, "value", H_alpha_min))
    return max(spec.Cs[i] ** (1.0 / spec.alpha_min) for i in spec.active) * h


def lower_bound_stderr(spec: EnsembleSpec, H_alpha_min) -> float:
    return max(spec.Cs[i] ** (1.0 / spec.alpha_min) for i in spec.active) * float(getattr(H_alpha_min, "stderr", 0.0))


def certificate_holds(estimate: PickandsEstimate, spec: EnsembleSpec, classical: PickandsEstimate, sigmas: float = 3.0) -> bool:
    bound = lower_bound_H(spec, classical)
    slack = sigmas * combined_stderr(estimate.stderr, lower_bound_stderr(spec, classical))
    return estimate.value >= bound - slack


def estimate_to_json(est: PickandsEstimate) -> str:
    return json.dumps({"table": est.table.to_dict(), "extrapolation": est.to_dict()}, indent=2, sort_keys=True)


__all__ = [
    "PickandsRow",
    "PickandsTable",
    "PickandsEstimate",
    "TruncationNotCertified",
    "pickands_table",
    "estimate_discrete_H",
    "extrapolate_H",
    "estimate_H",
    "lower_bound_H",
]
