"""Tail probabilities of suprema of conjunctions and order statistics.

Monte Carlo estimates come from exact grid samples of the stationary
processes at pitch ``a * q(u)``; asymptotic evaluators are closed-form and
take the Pickands-type constant as an explicit input.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, special, stats

from . import kernels
from .core import Estimate, RandomStream, combined_stderr, normal_survival
from .errors import ConfigurationError, DomainError, FeasibilityError
from .gauss import GridSpec, sample_stationary_steps, stationary_sampler
from .limit import PATH_KEY, THETA_KEY, EnsembleSpec, LimitVariant, sample_limit_at_times
from .parallel import BlockPlan, job_base, run_blocks

logger = logging.getLogger(__name__)

DEFAULT_PITCH = 0.25
DEFAULT_HALVINGS = 4
DEFAULT_BLOCK = 4096
MIN_ACCEPTED = 1000

TAIL_CSV_COLUMNS = ("u", "empirical", "stderr", "asymptotic", "ratio", "ci_lo", "ci_hi")


@dataclass(frozen=True)
class TailQuery:
    """Estimate ``P(sup_{[0,T]} statistic > u)`` on a grid of pitch ``a * q(u)``.

    The statistic is the minimum over processes, except for the order
    statistics variant where it is the ``j``-th largest of the ``n`` values.
    """

    spec: EnsembleSpec
    variant: LimitVariant
    T: float
    u: float
    a: float = DEFAULT_PITCH
    replicas: int = 100_000

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise DomainError(f"T must be positive, got {self.T}")
        if not (math.isfinite(self.u) and self.u > 0):
            raise DomainError(f"u must be positive, got {self.u}")
        if not self.a > 0:
            raise DomainError(f"pitch a must be positive, got {self.a}")
        if self.replicas < 1:
            raise DomainError("replicas must be >= 1")
        self.variant.validate(self.spec)

    @property
    def q(self) -> float:
        return self.spec.q(self.u)

    @property
    def rank(self) -> int:
        """Order of the driving statistic among the ``n`` values (``n`` = minimum)."""
        return self.variant.j if self.variant.tag == "order_stat" else self.spec.n

    def base_intervals(self) -> int:
        return max(1, math.ceil(self.T / (self.a * self.q) - 1e-9))

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "variant": self.variant.to_dict(),
            "T": self.T,
            "u": self.u,
            "a": self.a,
            "replicas": self.replicas,
        }


def sample_process(
    spec: EnsembleSpec, variant: LimitVariant, i: int, grid: GridSpec, stream: RandomStream, size: int
) -> np.ndarray:
    """``size`` paths of process ``i`` on ``grid``, shape ``(size, m)``.

    For the time-changed variant row ``r`` is ``X_i(Theta_r t)``; for the
    non-standard variant values are divided by ``b_i``.
    """
    proc = spec.processes[i]
    sub = stream.child(i)
    rng = sub.child(PATH_KEY).generator()
    if variant.tag != "time_changed":
        X = stationary_sampler(proc.model, grid).sample(rng, size)
        return X / proc.b if variant.tag == "nonstandard" else X
    theta = proc.theta.sample(sub.child(THETA_KEY).generator(), size)
    if proc.theta.kind == "uniform":
        return sample_stationary_steps(proc.model, theta * grid.step, grid.m, rng)
    X = np.empty((size, grid.m))
    for value in np.unique(theta):
        rows = np.flatnonzero(theta == value)
        if value == 0:
            X[rows] = rng.standard_normal((rows.size, 1))
        else:
            sub_grid = GridSpec.from_step(value * grid.step, grid.m)
            X[rows] = stationary_sampler(proc.model, sub_grid).sample(rng, rows.size)
    return X


def grid_statistics(
    spec: EnsembleSpec,
    variant: LimitVariant,
    grid: GridSpec,
    rank: int,
    level: float,
    strides: Sequence[int],
    stream: RandomStream,
    size: int,
    lazy: bool = True,
    count_upto: int | None = None,
):
    """Per-replica grid maxima of the rank-``rank`` statistic and its occupation count above ``level``.

    With ``lazy`` a process is only sampled for replicas in which enough of
    the earlier processes exceed ``level`` somewhere; the remaining replicas
    cannot exceed and get maxima ``-inf`` and counts 0. Results above
    ``level`` are unaffected.
    """
    n = spec.n
    m = grid.m
    X = np.empty((n, size, m))
    alive = np.arange(size)
    exceeded = np.zeros(size, dtype=np.int64)
    for i in range(n):
        X[i, alive] = sample_process(spec, variant, i, grid, stream, alive.size)
        if lazy and i < n - 1:
            exceeded[alive] += X[i, alive].max(axis=1) > level
            alive = alive[exceeded[alive] + (n - 1 - i) >= rank]
            if alive.size == 0:
                break
    maxes = np.full((size, len(strides)), -np.inf)
    counts = np.zeros(size, dtype=np.int64)
    if alive.size:
        Xa = X[:, alive] if alive.size < size else X
        mx, ct = kernels.reduce_paths(
            Xa, 1.0, 0.0, 0.0, 0.0, rank, level, list(strides), 0, m if count_upto is None else count_upto, 0
        )
        maxes[alive] = mx
        counts[alive] = ct
    return maxes, counts


@dataclass(frozen=True)
class GateReport:
    passed: bool
    chosen: int  # halving level reported
    coarse: dict
    fine: dict
    levels: tuple[dict, ...]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "chosen": self.chosen,
            "coarse": self.coarse,
            "fine": self.fine,
            "levels": list(self.levels),
        }


@dataclass
class TailResult:
    query: TailQuery
    estimate: Estimate
    gate: GateReport
    seed: int
    streams: tuple[int, int]
    warning: str | None = None

    def to_dict(self) -> dict:
        d = {
            "query": self.query.to_dict(),
            "estimate": {"mean": self.estimate.mean, "stderr": self.estimate.stderr, "n": self.estimate.n_replicas},
            "gate": self.gate.to_dict(),
            "seeds": {"master_seed": self.seed, "streams": list(self.streams)},
        }
        if self.warning:
            d["warning"] = self.warning
        return d


def _level_dict(h: int, step: float, est: Estimate) -> dict:
    return {"halvings": h, "step": step, "mean": est.mean, "stderr": est.stderr}


def mc_sup_tail(
    query: TailQuery,
    seed: int = 0,
    job: int = 0,
    jobs: int = 1,
    max_halvings: int = DEFAULT_HALVINGS,
    lazy: bool = True,
    block_size: int = DEFAULT_BLOCK,
) -> TailResult:
    """Crude Monte Carlo tail with an automatic pitch-halving gate.

    Paths are drawn once at ``max_halvings`` halvings of the base pitch; each
    coarser level is a sub-grid of the same paths. The gate accepts the first
    level ``h`` whose estimate differs from level ``h+1`` by less than two
    combined standard errors and reports level ``h+1``. Without a passing
    level the finest estimate is returned with a warning.
    """
    N0 = query.base_intervals()
    H = int(max_halvings)
    intervals = N0 * 2**H
    grid = GridSpec.from_points(query.T, intervals + 1)
    strides = [2 ** (H - h) for h in range(H + 1)]
    rank = query.rank

    def work(stream, size):
        maxes, _ = grid_statistics(query.spec, query.variant, grid, rank, query.u, strides, stream, size, lazy)
        return (maxes > query.u).sum(axis=0)

    plan = BlockPlan(seed, query.replicas, block_size, job_base(job))
    hits = sum(run_blocks(work, plan, jobs))
    ests = [Estimate.from_count(int(k), query.replicas) for k in hits]
    steps = [query.T / (N0 * 2**h) for h in range(H + 1)]
    levels = tuple(_level_dict(h, steps[h], e) for h, e in enumerate(ests))
    chosen, passed = H, False
    for h in range(H):
        diff = abs(ests[h].mean - ests[h + 1].mean)
        if diff == 0 or diff < 2 * combined_stderr(ests[h].stderr, ests[h + 1].stderr):
            chosen, passed = h + 1, True
            break
    warning = None
    if not passed:
        warning = f"discretization gate failed down to step {steps[H]:.4g}; finest estimate returned"
        logger.warning(warning)
    coarse = levels[chosen - 1] if chosen > 0 else levels[0]
    gate = GateReport(passed, chosen, coarse, levels[chosen], levels)
    return TailResult(query, ests[chosen], gate, seed, plan.stream_range, warning)


def coupled_tail_curve(
    spec: EnsembleSpec,
    variant: LimitVariant,
    T: float,
    u_values: Sequence[float],
    step: float,
    replicas: int,
    seed: int = 0,
    job: int = 0,
    jobs: int = 1,
    block_size: int = DEFAULT_BLOCK,
) -> list[Estimate]:
    """Tail estimates for several levels from the same replicas on one grid of pitch at most ``step``."""
    u_values = [float(u) for u in u_values]
    N = max(1, math.ceil(T / step - 1e-9))
    grid = GridSpec.from_points(T, N + 1)
    rank = variant.j if variant.tag == "order_stat" else spec.n
    levels = np.array(u_values)

    def work(stream, size):
        maxes, _ = grid_statistics(spec, variant, grid, rank, float(levels.min()), [1], stream, size)
        return (maxes[:, :1] > levels[None, :]).sum(axis=0)

    hits = sum(run_blocks(work, BlockPlan(seed, replicas, block_size, job_base(job)), jobs))
    return [Estimate.from_count(int(k), replicas) for k in hits]


# order statistics


@dataclass
class OrderStatTails:
    """Sup-tail estimates of every ingredient of the order-statistics bounds, from shared replicas."""

    n: int
    u: float
    T: float
    single: list[Estimate]  # sup X_i > u
    leave_one_out: list[Estimate]  # sup min_{k != i} X_k > u
    conjunction: Estimate  # sup min_k X_k > u
    order: list[Estimate]  # order[j-1]: sup X_{j:n} > u
    upper_violations: int = 0  # replicas breaking the pathwise union bound

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "u": self.u,
            "T": self.T,
            "single": [e.to_dict() for e in self.single],
            "leave_one_out": [e.to_dict() for e in self.leave_one_out],
            "conjunction": self.conjunction.to_dict(),
            "order": [e.to_dict() for e in self.order],
        }


def order_stat_tails(
    spec: EnsembleSpec,
    T: float,
    u: float,
    a: float = DEFAULT_PITCH,
    replicas: int = 100_000,
    seed: int = 0,
    halvings: int = 2,
    job: int = 0,
    jobs: int = 1,
    block_size: int = DEFAULT_BLOCK,
) -> OrderStatTails:
    """Estimates on one common grid of pitch ``a q(u) / 2**halvings``."""
    LimitVariant.order_stat(1).validate(spec)
    n = spec.n
    N = max(1, math.ceil(T / (a * spec.q(u)) - 1e-9)) * 2**halvings
    grid = GridSpec.from_points(T, N + 1)
    standard = LimitVariant.standard()

    def work(stream, size):
        X = np.stack([sample_process(spec, standard, i, grid, stream, size) for i in range(n)])
        single = X.max(axis=2) > u  # (n, R)
        loo = np.stack([np.delete(X, i, axis=0).min(axis=0).max(axis=1) > u for i in range(n)])
        srt = np.sort(X, axis=0)
        order = np.stack([srt[n - j].max(axis=1) > u for j in range(1, n + 1)])
        conj = order[n - 1]
        # pathwise union bound: 1{X_{n-1:n} > u somewhere} <= 1{min > u} + sum_i 1{min_{k != i} > u}
        viol = int(np.count_nonzero(order[n - 2] > conj + loo.sum(axis=0))) if n >= 2 else 0
        return single.sum(axis=1), loo.sum(axis=1), order.sum(axis=1), viol

    parts = run_blocks(work, BlockPlan(seed, replicas, block_size, job_base(job)), jobs)
    single = sum(p[0] for p in parts)
    loo = sum(p[1] for p in parts)
    order = sum(p[2] for p in parts)
    viol = sum(p[3] for p in parts)

    def est(k):
        return Estimate.from_count(int(k), replicas)

    return OrderStatTails(
        n, u, T, [est(k) for k in single], [est(k) for k in loo], est(order[n - 1]), [est(k) for k in order], viol
    )


def independence_identity(single: Sequence[Estimate]) -> Estimate:
    """``1 - prod(1 - p_i)`` with a delta-method standard error."""
    p = np.array([e.mean for e in single])
    se = np.array([e.stderr for e in single])
    comp = 1.0 - p
    value = 1.0 - float(np.prod(comp))
    grads = np.array([np.prod(np.delete(comp, i)) for i in range(p.size)])
    return Estimate(value, float(np.sqrt(np.sum((grads * se) ** 2))), min(e.n_replicas for e in single))


@dataclass(frozen=True)
class SandwichReport:
    value: Estimate
    lower: float
    lower_stderr: float
    upper: float
    upper_stderr: float
    sigma2_bound: float

    def holds(self, sigmas: float = 3.0) -> bool:
        lo_slack = sigmas * combined_stderr(self.value.stderr, self.lower_stderr)
        hi_slack = sigmas * combined_stderr(self.value.stderr, self.upper_stderr)
        return self.lower - lo_slack <= self.value.mean <= self.upper + hi_slack

    def to_dict(self) -> dict:
        return {
            "value": self.value.to_dict(),
            "lower": self.lower,
            "lower_stderr": self.lower_stderr,
            "upper": self.upper,
            "upper_stderr": self.upper_stderr,
            "sigma2_bound": self.sigma2_bound,
        }


def sigma_terms(single: Sequence[Estimate]) -> tuple[float, float]:
    """Cross terms ``(sum_{i<j} p_i p_j, n^2 prod p_i)`` from per-process tails."""
    p = np.array([e.mean for e in single])
    n = p.size
    s1 = float(sum(p[i] * p[j] for i in range(n) for j in range(i + 1, n)))
    return s1, float(n * n * np.prod(p))


def sandwich_bounds(tails: OrderStatTails) -> SandwichReport:
    """Union upper bound and product lower bound for ``P(sup X_{n-1:n} > u)``."""
    n = tails.n
    if n < 2:
        raise ConfigurationError("the sandwich needs n >= 2")
    p = [e.mean for e in tails.single]
    loo = tails.leave_one_out
    upper = tails.conjunction.mean + sum(e.mean for e in loo)
    upper_se = combined_stderr(tails.conjunction.stderr, *[e.stderr for e in loo])
    _, s2 = sigma_terms(tails.single)
    lower = sum(loo[i].mean * (1.0 - p[i]) for i in range(n)) - s2
    terms = [(1.0 - p[i]) * loo[i].stderr for i in range(n)] + [loo[i].mean * tails.single[i].stderr for i in range(n)]
    s2_se = s2 * math.sqrt(sum((e.stderr / e.mean) ** 2 for e in tails.single if e.mean > 0))
    lower_se = combined_stderr(*terms, s2_se)
    return SandwichReport(tails.order[n - 2], lower, lower_se, upper, upper_se, s2)


# asymptotic evaluators


@dataclass(frozen=True)
class AsymptoticValue:
    value: float
    formula_tag: str
    inputs: dict = field(default_factory=dict)
    stderr: float = 0.0  # propagated from the constant's standard error

    def to_dict(self) -> dict:
        return {"value": self.value, "tag": self.formula_tag, "stderr": self.stderr, "inputs": self.inputs}


def _constant(H) -> tuple[float, float]:
    value = float(getattr(H, "value", H))
    return value, float(getattr(H, "stderr", 0.0))


def _check_level(T: float, u: float) -> None:
    if not (math.isfinite(u) and u > 0):
        raise DomainError(f"u must be positive, got {u}")
    if not (math.isfinite(T) and T >= 0):
        raise DomainError(f"T must be non-negative, got {T}")


def _asym(value_per_H: float, H, tag: str, inputs: dict) -> AsymptoticValue:
    h, se = _constant(H)
    inputs = dict(inputs, H=h, H_stderr=se)
    return AsymptoticValue(h * value_per_H, tag, inputs, abs(value_per_H) * se)


def asymptotic_conjunction(spec: EnsembleSpec, T: float, u: float, H) -> AsymptoticValue:
    """``H T u^(2/alpha_min) exp(-n u^2/2) / ((2 pi)^(n/2) u^n)``."""
    _check_level(T, u)
    n = spec.n
    log_rest = 2.0 / spec.alpha_min * math.log(u) - n * u * u / 2 - n / 2 * math.log(2 * math.pi) - n * math.log(u)
    return _asym(T * math.exp(log_rest), H, "eqMain", {"n": n, "alpha_min": spec.alpha_min, "T": T, "u": u})


def asymptotic_classical(C: float, alpha: float, T: float, u: float, H_alpha) -> AsymptoticValue:
    """Single process: ``T C^(1/alpha) H_alpha u^(2/alpha) Psi(u)``."""
    _check_level(T, u)
    rest = T * C ** (1.0 / alpha) * u ** (2.0 / alpha) * normal_survival(u)
    return _asym(rest, H_alpha, "eq:pic", {"C": C, "alpha": alpha, "T": T, "u": u})


def asymptotic_order_stat(n: int, j: int, alpha: float, T: float, u: float, H_j) -> AsymptoticValue:
    """``H_j T binom(n, j) u^(2/alpha) Psi(u)^j``."""
    _check_level(T, u)
    if not 1 <= j <= n:
        raise DomainError(f"j={j} outside 1..{n}")
    rest = T * special.comb(n, j, exact=True) * u ** (2.0 / alpha) * normal_survival(u) ** j
    return _asym(rest, H_j, "ThmB2", {"n": n, "j": j, "alpha": alpha, "T": T, "u": u})


def asymptotic_nonstandard(spec: EnsembleSpec, T: float, u: float, H_tilde) -> AsymptoticValue:
    """``H T u^(2/alpha_min) prod_i Psi(b_i u)``."""
    _check_level(T, u)
    b = [p.b for p in spec.processes]
    rest = T * u ** (2.0 / spec.alpha_min) * float(np.prod([normal_survival(bi * u) for bi in b]))
    return _asym(rest, H_tilde, "eq:NS", {"b": b, "alpha_min": spec.alpha_min, "T": T, "u": u})


def asymptotic_timechanged(spec: EnsembleSpec, T: float, u: float, H_star) -> AsymptoticValue:
    """``H T u^(2/alpha_min) Psi(u)^n`` for processes run on random clocks."""
    _check_level(T, u)
    if any(p.theta is None for p in spec.processes):
        raise ConfigurationError("time-changed asymptotics need a time-change law for every process")
    rest = T * u ** (2.0 / spec.alpha_min) * normal_survival(u) ** spec.n
    return _asym(rest, H_star, "timechanged", {"n": spec.n, "alpha_min": spec.alpha_min, "T": T, "u": u})


@dataclass(frozen=True)
class RatioReport:
    ratio: float
    stderr: float
    ci: tuple[float, float]

    def to_dict(self) -> dict:
        return {"value": self.ratio, "stderr": self.stderr, "ci": list(self.ci)}


def ratio_diagnostic(empirical: Estimate, asymptotic: AsymptoticValue) -> RatioReport:
    """Empirical over asymptotic, with first-order error propagation from both inputs."""
    if not asymptotic.value > 0:
        raise DomainError("asymptotic value must be positive")
    ratio = empirical.mean / asymptotic.value
    rel = combined_stderr(empirical.stderr / asymptotic.value, ratio * asymptotic.stderr / asymptotic.value)
    half = empirical.z * rel
    return RatioReport(ratio, rel, (ratio - half, ratio + half))


def tail_sweep_csv(rows: Sequence[tuple[float, Estimate, AsymptoticValue, RatioReport]]) -> str:
    buf = io.StringIO()
    buf.write(",".join(TAIL_CSV_COLUMNS) + "\n")
    for u, est, asym, rat in sorted(rows, key=lambda r: r[0]):
        vals = (u, est.mean, est.stderr, asym.value, rat.ratio, rat.ci[0], rat.ci[1])
        buf.write(",".join(repr(float(v)) for v in vals) + "\n")
    return buf.getvalue()


# conditional excursions


def _acceptance_probability(spec: EnsembleSpec, variant: LimitVariant, u: float) -> float:
    if variant.tag == "nonstandard":
        return float(np.prod([normal_survival(p.b * u) for p in spec.processes]))
    return normal_survival(u) ** spec.n


def _excursion_weight(spec: EnsembleSpec, variant: LimitVariant, u: float) -> float:
    if variant.tag == "nonstandard":
        return sum(p.b**2 for p in spec.processes) * u
    return spec.n * u


def feasible_level(spec: EnsembleSpec, variant: LimitVariant, max_draws: int, needed: int) -> float:
    """Largest ``u`` at which ``max_draws`` joint draws are expected to yield ``needed`` acceptances."""
    f = lambda u: math.log(max_draws) + math.log(max(_acceptance_probability(spec, variant, u), 1e-300)) - math.log(needed)  # noqa: E731
    if f(0.0) < 0:
        return 0.0
    return float(optimize.brentq(f, 0.0, 40.0))


def conditional_excursion_sample(
    spec: EnsembleSpec,
    u: float,
    times: Sequence[float],
    accepted: int = MIN_ACCEPTED,
    seed: int = 0,
    variant: LimitVariant | None = None,
    max_draws: int = 10**9,
    block_size: int = 1 << 18,
    job: int = 0,
) -> np.ndarray:
    """Rejection sample of ``w(u) (Y(q(u) t_k) - u)`` given ``Y(0) > u``, shape ``(accepted, len(times))``.

    ``Y`` is the minimum of the processes (each divided by ``b_i`` for the
    non-standard variant) and ``w(u) = u * sum b_i^2``. Each process is drawn
    jointly at time 0 and at the requested times through a Cholesky factor;
    the values away from 0 are generated only for accepted draws, which does
    not change the joint law.
    """
    variant = variant or LimitVariant.standard()
    if variant.tag not in ("standard", "nonstandard"):
        raise ConfigurationError("conditional excursions are implemented for the standard and non-standard variants")
    if not u > 0:
        raise DomainError("u must be positive")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(times < 0):
        raise DomainError("times must be a non-empty list of non-negative numbers")
    p_acc = _acceptance_probability(spec, variant, u)
    needed = max(accepted, MIN_ACCEPTED)
    if max_draws * p_acc < needed:
        raise FeasibilityError(
            f"expected {max_draws * p_acc:.1f} acceptances at u={u} with {max_draws} draws, need {needed}",
            advice={"u_max": feasible_level(spec, variant, max_draws, needed), "max_draws": max_draws},
        )
    s = spec.q(u) * times
    factors = []
    for proc in spec.processes:
        tt = np.concatenate([[0.0], s])
        cov = proc.model.correlation(tt[:, None] - tt[None, :])
        L = np.linalg.cholesky(cov + 1e-12 * np.eye(tt.size))
        factors.append(L)
    inv_b = [1.0 / p.b if variant.tag == "nonstandard" else 1.0 for p in spec.processes]
    w = _excursion_weight(spec, variant, u)
    out = []
    total = 0
    b = 0
    base = job_base(job)
    while total < accepted:
        if b * block_size >= max_draws:
            raise FeasibilityError(
                f"only {total} acceptances after {max_draws} draws at u={u}",
                advice={"u_max": feasible_level(spec, variant, max_draws, needed), "max_draws": max_draws},
            )
        stream = RandomStream(seed, base + b)
        Z0 = [stream.child(i, 0).generator().standard_normal(block_size) for i in range(spec.n)]
        keep = np.ones(block_size, dtype=bool)
        for i in range(spec.n):
            keep &= Z0[i] * factors[i][0, 0] * inv_b[i] > u
        idx = np.flatnonzero(keep)
        if idx.size:
            Y = np.full((idx.size, s.size), np.inf)
            for i, L in enumerate(factors):
                rest = stream.child(i, 1).generator().standard_normal((idx.size, s.size))
                Zfull = np.column_stack([Z0[i][idx], rest])
                Xi = (Zfull @ L.T)[:, 1:] * inv_b[i]
                Y = np.minimum(Y, Xi)
            out.append(w * (Y - u))
            total += idx.size
        b += 1
    return np.concatenate(out)[:accepted]


def limit_excursion_sample(
    spec: EnsembleSpec,
    times: Sequence[float],
    size: int,
    seed: int = 0,
    variant: LimitVariant | None = None,
    job: int = 1,
    block_size: int = 1 << 16,
) -> np.ndarray:
    """Draws of ``w Z(t_k)`` from the limit process with the weight used by :func:`conditional_excursion_sample` at ``u=1``."""
    variant = variant or LimitVariant.standard()
    w = _excursion_weight(spec, variant, 1.0)
    plan = BlockPlan(seed, size, block_size, job_base(job))
    parts = run_blocks(lambda st, k: sample_limit_at_times(spec, variant, times, st, k), plan)
    return w * np.concatenate(parts)


def ks_exponential(sample) -> tuple[float, float]:
    """KS distance and p-value of ``sample`` against the unit exponential law."""
    res = stats.kstest(np.asarray(sample, dtype=float), "expon")
    return float(res.statistic), float(res.pvalue)


def ks_two_sample(x, y) -> tuple[float, float]:
    res = stats.ks_2samp(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return float(res.statistic), float(res.pvalue)


def ks_critical_value(n: int, level: float = 0.05) -> float:
    """Asymptotic one-sample KS critical value ``c(level) / sqrt(n)``."""
    return float(stats.kstwobign.isf(level) / math.sqrt(n))
