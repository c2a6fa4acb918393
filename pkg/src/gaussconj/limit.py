"""Limit processes of the conjunction extremes and their grid simulation.

The standard limit is

    Z(t) = min_i [ (sqrt(2) B_i(C_i^{1/alpha_i} t) - C_i t^alpha_i) 1(alpha_i = alpha_min) + E_i ]

with independent standard fBms ``B_i`` and unit exponentials ``E_i``. The
order-statistics, time-changed and non-standard variants change which
processes enter the minimum and how each term is scaled.

Every process term is simulated from the unit-scale fBm through exact
self-similarity, ``B(c t) = c^{alpha/2} B(t)`` in law, with ``c`` fixed for a
process (and, for the time-changed variant, fixed within a replica).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from . import kernels
from .core import RandomStream, normal_survival
from .errors import ConfigurationError, DomainError, TruncationNotCertified
from .gauss import CorrelationModel, FBMSampler, GridSpec, fbm_covariance

_SQRT2 = math.sqrt(2.0)

# child-stream keys inside a process substream
PATH_KEY, EXP_KEY, THETA_KEY = 0, 1, 2


@dataclass(frozen=True)
class TimeChangeLaw:
    """Bounded non-negative, non-degenerate random time change.

    ``kind="discrete"`` takes ``atoms = ((value, prob), ...)``;
    ``kind="uniform"`` takes ``lo`` and ``hi``.
    """

    kind: str
    atoms: tuple[tuple[float, float], ...] = ()
    lo: float = 0.0
    hi: float = 0.0

    def __post_init__(self):
        if self.kind == "discrete":
            if not self.atoms:
                raise ConfigurationError("discrete time change needs atoms")
            values = [v for v, _ in self.atoms]
            probs = [p for _, p in self.atoms]
            if any(v < 0 or not math.isfinite(v) for v in values):
                raise ConfigurationError("time-change atoms must be finite and non-negative")
            if any(p < 0 for p in probs) or not math.isclose(sum(probs), 1.0, abs_tol=1e-12):
                raise ConfigurationError("time-change probabilities must be non-negative and sum to 1")
            if len({v for v, p in self.atoms if p > 0}) < 2:
                raise ConfigurationError("time change must be non-degenerate (at least two atoms with mass)")
        elif self.kind == "uniform":
            if not (0 <= self.lo < self.hi and math.isfinite(self.hi)):
                raise ConfigurationError("uniform time change needs 0 <= lo < hi < inf")
        else:
            raise ConfigurationError(f"unknown time-change kind {self.kind!r}")

    @classmethod
    def discrete(cls, atoms: Sequence[tuple[float, float]]) -> "TimeChangeLaw":
        return cls("discrete", tuple((float(v), float(p)) for v, p in atoms))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "TimeChangeLaw":
        return cls("uniform", lo=float(lo), hi=float(hi))

    @property
    def upper(self) -> float:
        if self.kind == "discrete":
            return max(v for v, p in self.atoms if p > 0)
        return self.hi

    @property
    def has_zero_mass(self) -> bool:
        return self.kind == "discrete" and any(v == 0 and p > 0 for v, p in self.atoms)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "discrete":
            values = np.array([v for v, _ in self.atoms])
            probs = np.array([p for _, p in self.atoms])
            return values[rng.choice(len(values), size=size, p=probs / probs.sum())]
        return rng.uniform(self.lo, self.hi, size)

    def expect(self, fn) -> float:
        """``E[fn(Theta)]`` (Gauss-Legendre with 64 nodes for the uniform law)."""
        if self.kind == "discrete":
            return float(sum(p * fn(v) for v, p in self.atoms if p > 0))
        x, w = np.polynomial.legendre.leggauss(64)
        theta = 0.5 * (self.hi - self.lo) * x + 0.5 * (self.hi + self.lo)
        return float(0.5 * np.sum(w * np.array([fn(t) for t in theta])))

    def to_dict(self) -> dict:
        if self.kind == "discrete":
            return {"kind": "discrete", "atoms": [list(a) for a in self.atoms]}
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class ProcessSpec:
    model: CorrelationModel
    b: float = 1.0
    theta: TimeChangeLaw | None = None

    def __post_init__(self):
        if not (math.isfinite(self.b) and self.b > 0):
            raise ConfigurationError(f"scale b must be positive, got {self.b}")

    def to_dict(self) -> dict:
        d = {"model": self.model.to_dict(), "b": self.b}
        if self.theta is not None:
            d["theta"] = self.theta.to_dict()
        return d


@dataclass(frozen=True)
class EnsembleSpec:
    """``n`` independent stationary processes entering a conjunction."""

    processes: tuple[ProcessSpec, ...]

    def __post_init__(self):
        if not self.processes:
            raise ConfigurationError("an ensemble needs at least one process")
        object.__setattr__(self, "processes", tuple(self.processes))

    @classmethod
    def build(
        cls,
        alpha: Sequence[float],
        C: Sequence[float] | None = None,
        b: Sequence[float] | None = None,
        theta: Sequence[TimeChangeLaw | None] | None = None,
        family: str = "powered_exponential",
        gamma: float = 1.0,
    ) -> "EnsembleSpec":
        n = len(alpha)
        C = [1.0] * n if C is None else list(C)
        b = [1.0] * n if b is None else list(b)
        theta = [None] * n if theta is None else list(theta)
        if not len(C) == len(b) == len(theta) == n:
            raise ConfigurationError("alpha, C, b and theta must have the same length")
        procs = []
        for i in range(n):
            if family == "generalized_cauchy":
                model = CorrelationModel.generalized_cauchy(C[i], alpha[i], gamma)
            else:
                model = CorrelationModel.powered_exponential(C[i], alpha[i])
            procs.append(ProcessSpec(model, float(b[i]), theta[i]))
        return cls(tuple(procs))

    @property
    def n(self) -> int:
        return len(self.processes)

    @property
    def alphas(self) -> tuple[float, ...]:
        return tuple(p.model.alpha for p in self.processes)

    @property
    def Cs(self) -> tuple[float, ...]:
        return tuple(p.model.C for p in self.processes)

    @property
    def alpha_min(self) -> float:
        return min(self.alphas)

    @property
    def active(self) -> tuple[int, ...]:
        """Indices of the processes attaining ``alpha_min``."""
        amin = self.alpha_min
        return tuple(i for i, a in enumerate(self.alphas) if a == amin)

    def q(self, u: float) -> float:
        """Extremal time scale ``u^(-2/alpha_min)``."""
        if u <= 0:
            raise DomainError("q(u) needs u > 0")
        return u ** (-2.0 / self.alpha_min)

    def to_dict(self) -> dict:
        return {"processes": [p.to_dict() for p in self.processes]}


@dataclass(frozen=True)
class LimitVariant:
    tag: str = "standard"
    j: int | None = None

    TAGS = ("standard", "order_stat", "time_changed", "nonstandard")

    def __post_init__(self):
        if self.tag not in self.TAGS:
            raise ConfigurationError(f"unknown variant {self.tag!r}; expected one of {self.TAGS}")
        if (self.tag == "order_stat") != (self.j is not None):
            raise ConfigurationError("j is required for, and only for, the order_stat variant")

    @classmethod
    def standard(cls) -> "LimitVariant":
        return cls("standard")

    @classmethod
    def order_stat(cls, j: int) -> "LimitVariant":
        return cls("order_stat", int(j))

    @classmethod
    def time_changed(cls) -> "LimitVariant":
        return cls("time_changed")

    @classmethod
    def nonstandard(cls) -> "LimitVariant":
        return cls("nonstandard")

    def validate(self, spec: EnsembleSpec) -> None:
        if self.tag == "order_stat":
            if not 1 <= self.j <= spec.n:
                raise ConfigurationError(f"order statistic j={self.j} outside 1..{spec.n}")
            if len(set(spec.alphas)) != 1 or any(c != 1.0 for c in spec.Cs):
                raise ConfigurationError("order statistics need equal alphas and C_i = 1 for every process")
        if self.tag == "time_changed" and any(p.theta is None for p in spec.processes):
            raise ConfigurationError("time_changed variant needs a time-change law for every process")

    def members(self, spec: EnsembleSpec) -> tuple[int, ...]:
        """Processes entering the limit minimum."""
        if self.tag == "order_stat":
            return tuple(range(self.j))
        return tuple(range(spec.n))

    def to_dict(self) -> dict:
        return {"tag": self.tag} if self.j is None else {"tag": self.tag, "j": self.j}


def _term_coefficients(spec: EnsembleSpec, variant: LimitVariant, i: int, E: np.ndarray, theta: np.ndarray | None):
    """Per-replica ``(scale, shift, drift_coef)`` for process ``i``.

    The term is ``scale * B_alpha(t) + shift - drift_coef * C t^alpha`` with
    ``B_alpha`` a unit-scale standard fBm.
    """
    proc = spec.processes[i]
    alpha, C = proc.model.alpha, proc.model.C
    R = E.size
    active = i in spec.active
    if not active:
        shift = E / proc.b**2 if variant.tag == "nonstandard" else E
        return np.zeros(R), shift, np.zeros(R)
    if variant.tag == "time_changed":
        scale = _SQRT2 * math.sqrt(C) * theta ** (alpha / 2)
        return scale, E, theta**alpha
    if variant.tag == "nonstandard":
        return np.full(R, _SQRT2 * math.sqrt(C) / proc.b), E / proc.b**2, np.ones(R)
    return np.full(R, _SQRT2 * math.sqrt(C)), E, np.ones(R)


class LimitProcess:
    """Grid simulator for a limit variant on ``t_k = a k, k = 0..K``.

    Index ``k`` of every returned array is the grid time ``a k``; ``Z(0)`` is
    included so that left Riemann sums start at zero.
    """

    def __init__(self, spec: EnsembleSpec, variant: LimitVariant, a: float, K: int):
        if a <= 0 or K < 1:
            raise DomainError("need a > 0 and K >= 1")
        variant.validate(spec)
        self.spec = spec
        self.variant = variant
        self.a = float(a)
        self.K = int(K)
        self.grid = GridSpec.from_step(self.a, self.K + 1)
        self.members = variant.members(spec)
        self._fbm = {
            spec.processes[i].model.alpha: FBMSampler(spec.processes[i].model.alpha, self.grid)
            for i in self.members
            if i in spec.active
        }
        t = self.grid.times
        self.drift = np.stack([spec.processes[i].model.C * t ** spec.processes[i].model.alpha for i in self.members])

    def components(self, stream: RandomStream, size: int):
        """Arrays for :func:`kernels.reduce_paths`: fBm paths and coefficients."""
        n = len(self.members)
        m = self.grid.m
        X = np.zeros((n, size, m))
        scale = np.empty((n, size))
        shift = np.empty((n, size))
        coef = np.empty((n, size))
        for row, i in enumerate(self.members):
            proc = self.spec.processes[i]
            sub = stream.child(i)
            theta = None
            if self.variant.tag == "time_changed":
                theta = proc.theta.sample(sub.child(THETA_KEY).generator(), size)
            E = sub.child(EXP_KEY).generator().standard_exponential(size)
            scale[row], shift[row], coef[row] = _term_coefficients(self.spec, self.variant, i, E, theta)
            if i in self.spec.active:
                X[row] = self._fbm[proc.model.alpha].sample(sub.child(PATH_KEY).generator(), size)
        return X, scale, shift, coef

    def paths(self, stream: RandomStream, size: int, include_zero: bool = False) -> np.ndarray:
        """Simulated values ``Z(a k)``, shape ``(size, K)`` (``K+1`` with ``include_zero``)."""
        X, scale, shift, coef = self.components(stream, size)
        V = scale[:, :, None] * X + shift[:, :, None]
        V = V - coef[:, :, None] * self.drift[:, None, :]
        Z = V.min(axis=0)
        return Z if include_zero else Z[:, 1:]

    def reduce(self, stream: RandomStream, size: int, strides: Sequence[int] = (1,), backend: str | None = None):
        """Grid maxima over ``k >= 1`` for every stride, and occupation counts over ``k < K``.

        ``maxes[:, s]`` is ``max_{k >= 1, stride_s | k} Z(a k)``; ``counts`` is
        ``#{0 <= k < K : Z(a k) > 0}``.
        """
        X, scale, shift, coef = self.components(stream, size)
        return kernels.reduce_paths(
            X, scale, shift, coef, self.drift, len(self.members), 0.0, list(strides),
            offset=0, count_upto=self.K, start=1, backend=backend,
        )


def sample_limit_path(
    spec: EnsembleSpec, variant: LimitVariant, a: float, K: int, stream: RandomStream
) -> np.ndarray:
    """One path ``(Z(a), Z(2a), ..., Z(Ka))``."""
    return LimitProcess(spec, variant, a, K).paths(stream, 1)[0]


def sample_limit_at_times(
    spec: EnsembleSpec, variant: LimitVariant, times: Sequence[float], stream: RandomStream, size: int
) -> np.ndarray:
    """Exact draws of ``Z`` at arbitrary times ``>= 0``, shape ``(size, len(times))``.

    fBm values come from a Cholesky factor of the covariance at the positive
    times; ``Z(0) = min E_i``.
    """
    variant.validate(spec)
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise DomainError("times must be non-negative")
    pos = times > 0
    tp = times[pos]
    out = np.full((size, times.size), np.inf)
    for i in variant.members(spec):
        proc = spec.processes[i]
        alpha = proc.model.alpha
        sub = stream.child(i)
        theta = proc.theta.sample(sub.child(THETA_KEY).generator(), size) if variant.tag == "time_changed" else None
        E = sub.child(EXP_KEY).generator().standard_exponential(size)
        scale, shift, coef = _term_coefficients(spec, variant, i, E, theta)
        B = np.zeros((size, times.size))
        if i in spec.active and tp.size:
            cov = fbm_covariance(alpha, tp[:, None], tp[None, :])
            L = np.linalg.cholesky(cov + 1e-14 * np.eye(tp.size) * cov.max())
            B[:, pos] = sub.child(PATH_KEY).generator().standard_normal((size, tp.size)) @ L.T
        term = scale[:, None] * B + shift[:, None] - coef[:, None] * (proc.model.C * times**alpha)[None, :]
        out = np.minimum(out, term)
    return out


def occupation_time(path, a: float) -> float:
    """Left Riemann sum ``a * #{k : path[k] > 0}`` of the time spent above zero."""
    return float(a * np.count_nonzero(np.asarray(path) > 0))


def _exceedance_probability(spec: EnsembleSpec, variant: LimitVariant, i: int):
    """``t -> P(term_i(t) > 0)`` in closed form.

    For ``X ~ N(0, 2 s)``, ``E ~ Exp(1)`` one has ``P(X - s + E > 0) = 2 Psi(sqrt(s/2))``;
    the non-standard term scales both sides by ``b``.
    """
    proc = spec.processes[i]
    alpha, C, b = proc.model.alpha, proc.model.C, proc.b
    if variant.tag == "time_changed":
        law = proc.theta

        def f(t):
            return law.expect(lambda th: 2.0 * normal_survival(math.sqrt(C * (th * t) ** alpha / 2.0)))

        return f
    scale = b if variant.tag == "nonstandard" else 1.0

    def f(t):
        return 2.0 * normal_survival(scale * np.sqrt(C * np.asarray(t, dtype=float) ** alpha / 2.0))

    return f


def _tail_sum(f, a: float, K: int, max_terms: int = 200_000) -> float:
    """Upper bound on ``sum_{k > K} f(a k)`` for decreasing ``f``."""
    total = 0.0
    k0 = K + 1
    chunk = 4096
    vectorised = True
    while k0 <= K + max_terms:
        ks = np.arange(k0, k0 + chunk)
        if vectorised:
            try:
                vals = np.asarray(f(a * ks), dtype=float)
                if vals.shape != ks.shape:
                    raise TypeError
            except TypeError:
                vectorised = False
                continue
        else:
            vals = np.array([f(a * k) for k in ks])
        total += float(vals.sum())
        k0 += chunk
        if vals[-1] == 0.0 or vals[-1] < 1e-17 * total:
            break
    # remainder: sum_{k >= k0} f(a k) <= f(a k0) + (1/a) int_{a k0}^inf f
    rest, _ = integrate.quad(lambda t: float(f(t)), a * k0, np.inf, limit=200)
    return total + float(f(a * k0)) + rest / a


def tail_truncation_bound(
    spec: EnsembleSpec, variant: LimitVariant, a: float, K: int, epsilon: float | None = None
) -> float:
    """Union bound on ``P(exists k > K : Z(a k) > 0)``.

    ``Z`` never exceeds any of its active terms, so the bound is the smallest,
    over active members, of ``sum_{k > K} P(term_i(a k) > 0)``. With
    ``epsilon`` given, raises TruncationNotCertified (with an advised ``K``)
    when the bound exceeds it.
    """
    if a <= 0 or K < 1:
        raise DomainError("need a > 0 and K >= 1")
    variant.validate(spec)
    candidates = [i for i in variant.members(spec) if i in spec.active]
    best = math.inf
    for i in candidates:
        proc = spec.processes[i]
        if variant.tag == "time_changed" and proc.theta.has_zero_mass:
            continue
        best = min(best, _tail_sum(_exceedance_probability(spec, variant, i), a, K))
    if epsilon is not None and best > epsilon:
        raise TruncationNotCertified(
            f"truncation bound {best:.3e} exceeds {epsilon:.3e} at K={K}, a={a}",
            advice={"K": advise_K(spec, variant, a, epsilon, K), "bound": best},
        )
    return best


def advise_K(spec: EnsembleSpec, variant: LimitVariant, a: float, epsilon: float, K: int = 1) -> int | None:
    """Smallest ``K`` (up to ~1e7) whose truncation bound is at most ``epsilon``."""
    lo, hi = K, max(2 * K, 2)
    while tail_truncation_bound(spec, variant, a, hi) > epsilon:
        lo, hi = hi, 2 * hi
        if hi > 10**7:
            return None
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tail_truncation_bound(spec, variant, a, mid) > epsilon:
            lo = mid
        else:
            hi = mid
    return hi

