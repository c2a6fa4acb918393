"""Exact sampling of stationary Gaussian processes and fractional Brownian motion.

Both samplers work on uniform grids and factor the Toeplitz covariance once
by circulant embedding; each replica then costs one FFT of the embedding
length. When the minimal embedding is not non-negative definite it is
doubled up to three times before falling back to a dense Cholesky factor.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import linalg

from .core import Estimate, RandomStream
from .errors import (
    ConfigurationError,
    CovarianceNotPSDError,
    InsufficientDataError,
    ModelInconsistencyError,
    ShapeError,
)

logger = logging.getLogger(__name__)

POWERED_EXPONENTIAL = "powered_exponential"
GENERALIZED_CAUCHY = "generalized_cauchy"
FAMILIES = (POWERED_EXPONENTIAL, GENERALIZED_CAUCHY)

# Relative tolerance for negative circulant eigenvalues that are clipped to zero.
EIGEN_CLIP_TOL = 1e-10
# Below this (relative) magnitude negative eigenvalues are floating-point noise.
_ROUNDOFF = 1e-13
_MAX_DOUBLINGS = 3
# complex128 elements per FFT chunk (about 32 MB)
_CHUNK_ELEMENTS = 1 << 21


@dataclass(frozen=True)
class CorrelationModel:
    """Stationary correlation ``r(t) = 1 - C|t|^alpha + o(|t|^alpha)`` near zero.

    ``powered_exponential``: ``r(t) = exp(-C|t|^alpha)``.
    ``generalized_cauchy``: ``r(t) = (1 + (C/gamma)|t|^alpha)^(-gamma)``.
    """

    family: str
    C: float
    alpha: float
    gamma: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown correlation family {self.family!r}; expected one of {FAMILIES}")
        if not (math.isfinite(self.C) and self.C > 0):
            raise ConfigurationError(f"C must be a positive constant, got {self.C}")
        if not (math.isfinite(self.alpha) and 0 < self.alpha <= 2):
            raise ConfigurationError(
                f"alpha={self.alpha} violates the local correlation expansion, which requires alpha in (0,2]"
            )
        if self.family == GENERALIZED_CAUCHY:
            if self.gamma is None or not (math.isfinite(self.gamma) and self.gamma > 0):
                raise ConfigurationError("generalized_cauchy needs gamma > 0")
        elif self.gamma is not None:
            raise ConfigurationError("gamma only applies to generalized_cauchy")

    @classmethod
    def powered_exponential(cls, C: float = 1.0, alpha: float = 1.0) -> "CorrelationModel":
        return cls(POWERED_EXPONENTIAL, float(C), float(alpha))

    @classmethod
    def generalized_cauchy(cls, C: float = 1.0, alpha: float = 1.0, gamma: float = 1.0) -> "CorrelationModel":
        return cls(GENERALIZED_CAUCHY, float(C), float(alpha), float(gamma))

    def one_minus(self, t):
        """``1 - r(t)`` without cancellation for small ``t``."""
        x = np.abs(np.asarray(t, dtype=float)) ** self.alpha
        if self.family == POWERED_EXPONENTIAL:
            return -np.expm1(-self.C * x)
        return -np.expm1(-self.gamma * np.log1p(self.C / self.gamma * x))

    def correlation(self, t):
        x = np.abs(np.asarray(t, dtype=float)) ** self.alpha
        if self.family == POWERED_EXPONENTIAL:
            return np.exp(-self.C * x)
        return (1.0 + self.C / self.gamma * x) ** (-self.gamma)

    def to_dict(self) -> dict:
        d = {"family": self.family, "C": self.C, "alpha": self.alpha}
        if self.gamma is not None:
            d["gamma"] = self.gamma
        return d


def correlation_at(model: CorrelationModel, t: float) -> float:
    return float(model.correlation(t))


@dataclass(frozen=True)
class ExpansionReport:
    fitted_C: float
    fitted_alpha: float
    residual: float


def local_expansion_check(
    model,
    t_lo: float = 1e-4,
    t_hi: float = 1e-2,
    points: int = 41,
    alpha_tol: float = 0.01,
    C_tol: float = 0.02,
) -> ExpansionReport:
    """Fit ``log(1 - r(t)) = log C + alpha log t`` on ``[t_lo, t_hi]``.

    ``model`` needs ``C``, ``alpha`` and either ``one_minus`` or ``correlation``.
    Raises ModelInconsistencyError when the fit misses the declared values
    by more than ``alpha_tol`` / ``C_tol`` (relative).
    """
    t = np.geomspace(t_lo, t_hi, points)
    if hasattr(model, "one_minus"):
        y = np.asarray(model.one_minus(t), dtype=float)
    else:
        y = 1.0 - np.asarray(model.correlation(t), dtype=float)
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ModelInconsistencyError("1 - r(t) must be positive near 0")
    X = np.column_stack([np.ones_like(t), np.log(t)])
    coef, *_ = np.linalg.lstsq(X, np.log(y), rcond=None)
    resid = np.log(y) - X @ coef
    report = ExpansionReport(float(np.exp(coef[0])), float(coef[1]), float(np.sqrt(np.mean(resid**2))))
    if abs(report.fitted_alpha - model.alpha) > alpha_tol * model.alpha:
        raise ModelInconsistencyError(f"fitted alpha {report.fitted_alpha:.4f} != declared {model.alpha}")
    if abs(report.fitted_C - model.C) > C_tol * model.C:
        raise ModelInconsistencyError(f"fitted C {report.fitted_C:.4f} != declared {model.C}")
    return report


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid ``{0, step, ..., (m-1)*step}`` on ``[0, t_max]``."""

    t_max: float
    step: float
    m: int

    def __post_init__(self):
        if self.m < 2:
            raise ConfigurationError("a grid needs m >= 2 points")
        if not (self.step > 0 and self.t_max > 0):
            raise ConfigurationError("grid step and t_max must be positive")
        if not math.isclose((self.m - 1) * self.step, self.t_max, rel_tol=1e-9):
            raise ConfigurationError(f"(m-1)*step = {(self.m - 1) * self.step} != t_max = {self.t_max}")

    @classmethod
    def from_points(cls, t_max: float, m: int) -> "GridSpec":
        if m < 2:
            raise ConfigurationError("a grid needs m >= 2 points")
        return cls(float(t_max), float(t_max) / (m - 1), int(m))

    @classmethod
    def from_step(cls, step: float, m: int) -> "GridSpec":
        return cls(float(step) * (m - 1), float(step), int(m))

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(self.m)


@dataclass(frozen=True)
class SamplePath:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != self.grid.m:
            raise ShapeError(f"{len(self.values)} values for a {self.grid.m}-point grid")


def fgn_autocovariance(alpha: float, k) -> np.ndarray:
    """Autocovariance of unit-step increments of standard fBm with Hurst index alpha/2."""
    k = np.abs(np.asarray(k, dtype=float))
    return 0.5 * ((k + 1) ** alpha - 2 * k**alpha + np.abs(k - 1) ** alpha)


class ToeplitzSampler:
    """Exact sampler for a centered stationary Gaussian vector of length ``m``.

    ``row(k)`` returns the covariance at integer lags ``k``; it may be called
    beyond ``m - 1`` when the embedding is padded.
    """

    def __init__(self, row: Callable[[np.ndarray], np.ndarray], m: int, method: str = "auto"):
        if m < 1:
            raise ConfigurationError("need at least one point")
        self.m = int(m)
        self.embedding_size = 0
        self.clipped = 0
        if self.m == 1:
            self.method = "scalar"
            self._scale = math.sqrt(float(row(np.zeros(1))[0]))
            return
        if method in ("auto", "circulant"):
            m_e = self.m
            for _ in range(_MAX_DOUBLINGS + 1):
                root = _circulant_root(row(np.arange(m_e)))
                if root is not None:
                    self.method = "circulant"
                    self._root, self.clipped = root
                    self.embedding_size = self._root.size
                    return
                m_e = 2 * m_e - 1
            if method == "circulant":
                raise CovarianceNotPSDError("circulant embedding stayed indefinite after padding")
            logger.info("circulant embedding indefinite after %d doublings; using Cholesky", _MAX_DOUBLINGS)
        cov = linalg.toeplitz(row(np.arange(self.m)))
        try:
            self._chol = linalg.cholesky(cov, lower=True)
            self.method = "cholesky"
            return
        except linalg.LinAlgError:
            pass
        # numerically singular but PSD up to round-off (very smooth kernels on fine grids)
        lam, vec = linalg.eigh(cov)
        if lam[0] < -EIGEN_CLIP_TOL * lam[-1]:
            raise CovarianceNotPSDError(
                f"covariance of size {self.m} is not positive semidefinite (min eigenvalue {lam[0]:.3e})"
            )
        self.clipped = int((lam < 0).sum())
        self._chol = vec * np.sqrt(np.clip(lam, 0.0, None))
        self.method = "eigh"

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """``size`` independent rows, shape ``(size, m)``."""
        if self.method == "scalar":
            return self._scale * rng.standard_normal((size, 1))
        if self.method in ("cholesky", "eigh"):
            return rng.standard_normal((size, self.m)) @ self._chol.T
        M = self.embedding_size
        pairs = (size + 1) // 2
        out = np.empty((2 * pairs, self.m))
        chunk = max(1, _CHUNK_ELEMENTS // M)
        for lo in range(0, pairs, chunk):
            hi = min(pairs, lo + chunk)
            # one complex embedding draw yields two independent paths (real and imaginary parts)
            w = rng.standard_normal((hi - lo, 2 * M)).view(np.complex128)
            y = np.fft.fft(w * self._root, axis=1)[:, : self.m]
            out[2 * lo : 2 * hi : 2] = y.real
            out[2 * lo + 1 : 2 * hi : 2] = y.imag
        return out[:size]


def _circulant_root(first_row: np.ndarray):
    """Square root of the circulant eigenvalues scaled for the FFT, or None."""
    c = np.asarray(first_row, dtype=float)
    ext = np.concatenate([c, c[-2:0:-1]])
    lam = np.fft.fft(ext).real
    top = lam.max()
    low = lam.min()
    if low < -EIGEN_CLIP_TOL * top:
        return None
    neg = lam < 0
    n_clip = int(neg.sum())
    if low < -_ROUNDOFF * top:
        logger.warning("clipping %d negative circulant eigenvalues (min %.3e)", n_clip, low)
    lam = np.where(neg, 0.0, lam)
    return np.sqrt(lam / ext.size), n_clip


@functools.lru_cache(maxsize=64)
def stationary_sampler(model: CorrelationModel, grid: GridSpec, method: str = "auto") -> ToeplitzSampler:
    """Factorization for ``model`` on ``grid``; cached and shared between replicas."""
    step = grid.step
    return ToeplitzSampler(lambda k: model.correlation(k * step), grid.m, method)


@functools.lru_cache(maxsize=64)
def _fgn_sampler(alpha: float, n_increments: int, method: str = "auto") -> ToeplitzSampler:
    return ToeplitzSampler(lambda k: fgn_autocovariance(alpha, k), n_increments, method)


class FBMSampler:
    """Standard fBm ``B_alpha`` on a grid starting at 0, Hurst index ``alpha/2``."""

    def __init__(self, alpha: float, grid: GridSpec, method: str = "auto"):
        if not 0 < alpha <= 2:
            raise ConfigurationError(f"alpha={alpha} must lie in (0,2]")
        self.alpha = float(alpha)
        self.grid = grid
        self._noise = _fgn_sampler(self.alpha, grid.m - 1, method)
        self._scale = grid.step ** (self.alpha / 2)

    @property
    def method(self) -> str:
        return self._noise.method

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        inc = self._noise.sample(rng, size)
        out = np.zeros((size, self.grid.m))
        np.cumsum(inc, axis=1, out=out[:, 1:])
        out[:, 1:] *= self._scale
        return out


def fbm_covariance(alpha: float, s, t):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return 0.5 * (t**alpha + s**alpha - np.abs(t - s) ** alpha)


def sample_stationary_gp(model: CorrelationModel, grid: GridSpec, stream: RandomStream) -> SamplePath:
    values = stationary_sampler(model, grid).sample(stream.generator(), 1)[0]
    return SamplePath(grid, values)


def sample_fbm(alpha: float, grid: GridSpec, stream: RandomStream) -> SamplePath:
    return SamplePath(grid, FBMSampler(alpha, grid).sample(stream.generator(), 1)[0])


def sample_stationary_steps(
    model: CorrelationModel, steps: np.ndarray, m: int, rng: np.random.Generator
) -> np.ndarray:
    """One path per entry of ``steps``: row ``r`` lives on the grid ``steps[r] * (0..m-1)``.

    Used for random time changes, where every replica has its own grid pitch.
    A zero step gives a constant path.
    """
    steps = np.asarray(steps, dtype=float)
    out = np.empty((steps.size, m))
    zero = steps == 0
    out[zero] = rng.standard_normal((int(zero.sum()), 1))
    idx = np.flatnonzero(~zero)
    if idx.size == 0:
        return out
    k = np.arange(m)
    c = model.correlation(steps[idx, None] * k)
    ext = np.concatenate([c, c[:, -2:0:-1]], axis=1)
    lam = np.fft.fft(ext, axis=1).real
    ok = lam.min(axis=1) >= -EIGEN_CLIP_TOL * lam.max(axis=1)
    good = idx[ok]
    if good.size:
        root = np.sqrt(np.clip(lam[ok], 0.0, None) / ext.shape[1])
        w = rng.standard_normal((good.size, 2 * ext.shape[1])).view(np.complex128)
        out[good] = np.fft.fft(w * root, axis=1)[:, :m].real
    for r in idx[~ok]:
        step = steps[r]
        sampler = ToeplitzSampler(lambda kk, s=step: model.correlation(kk * s), m)
        out[r] = sampler.sample(rng, 1)[0]
    return out


def _as_matrix(paths) -> np.ndarray:
    if isinstance(paths, np.ndarray):
        return np.atleast_2d(paths)
    paths = list(paths)
    if not paths:
        raise InsufficientDataError("no paths")
    if isinstance(paths[0], SamplePath):
        grid = paths[0].grid
        if any(p.grid != grid for p in paths):
            raise ShapeError("paths live on different grids")
        return np.stack([np.asarray(p.values, dtype=float) for p in paths])
    rows = [np.asarray(p, dtype=float) for p in paths]
    if len({r.shape for r in rows}) != 1:
        raise ShapeError("paths have different lengths")
    return np.stack(rows)


def empirical_covariance(paths, pairs: Iterable[tuple[int, int]]) -> list[Estimate]:
    """Unbiased sample covariance between grid points, one Estimate per pair.

    The standard error is that of the mean of centred cross products.
    """
    X = _as_matrix(paths)
    R = X.shape[0]
    if R < 2:
        raise InsufficientDataError("need at least two paths")
    centred = X - X.mean(axis=0)
    out = []
    for i, j in pairs:
        d = centred[:, i] * centred[:, j]
        cov = d.sum() / (R - 1)
        se = d.std(ddof=1) / math.sqrt(R) if R > 2 else 0.0
        out.append(Estimate(float(cov), float(se), R))
    return out


def format_path_text(path: SamplePath) -> str:
    """One ``t,value`` line per grid point."""
    return "".join(f"{t!r},{float(v)!r}\n" for t, v in zip(path.grid.times.tolist(), path.values))


def parse_path_text(text: str) -> tuple[np.ndarray, np.ndarray]:
    rows = [line.split(",") for line in text.strip().splitlines() if line.strip()]
    arr = np.array(rows, dtype=float)
    return arr[:, 0], arr[:, 1]


def format_paths_csv(grid: GridSpec, values: np.ndarray | Sequence[np.ndarray]) -> str:
    """Multi-replica CSV: header of grid times, one replica per row."""
    X = _as_matrix(values)
    if X.shape[1] != grid.m:
        raise ShapeError("path length does not match grid")
    lines = ["replica," + ",".join(repr(t) for t in grid.times.tolist())]
    for r, row in enumerate(X):
        lines.append(f"{r}," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"
