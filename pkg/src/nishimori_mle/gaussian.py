"""Closed-form Nishimori estimators for two Gaussian model sets.

Two worked cases are covered:

* the pair ``P_+/-(x) = N(+/-a, 1)``, whose estimate interpolates between the
  two components through ``tanh(a n xbar)``;
* the whole family ``N(a, sigma^2)`` with a flat measure ``da dsigma``,
  whose estimate is a power of a Lorentzian (equivalently a Student-t with
  ``n - 2`` degrees of freedom) centred at the sample mean.

A quadrature grid over ``(a, sigma)`` is provided as an independent numerical
oracle for the second case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import (
    LOG_SQRT_2PI,
    DataSample,
    ModelSet,
    normal_model,
    predictive_mixture,
)
from .errors import ConfigurationError, DomainError

LOG_2PI = 2.0 * LOG_SQRT_2PI


@dataclass(frozen=True)
class SampleStats:
    """Sample mean and population-convention variance ``(1/n) sum xi^2 - xbar^2``."""

    mean: float
    variance: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"sample size must be >= 1, got {self.n}")
        if self.variance < 0:
            raise DomainError(f"variance must be >= 0, got {self.variance}")


def sample_stats(sample: DataSample) -> SampleStats:
    pts = np.asarray(sample.points, dtype=float)
    if pts.ndim != 1:
        raise DomainError("sample statistics are defined for one-dimensional data")
    mean = float(np.mean(pts))
    var = float(np.mean(pts * pts)) - mean * mean
    if var < 0:
        # one-pass cancellation only; anything larger is a real error
        if -var < 1e-15 * max(1.0, mean * mean):
            var = 0.0
        else:
            raise DomainError(f"negative variance {var!r}")
    return SampleStats(mean, var, sample.n)


def synthetic_sample(mean: float, variance: float, n: int) -> DataSample:
    """Deterministic sample with the given mean and population variance."""
    if n == 1:
        if variance != 0:
            raise DomainError("a single point has zero variance")
        return DataSample(np.array([float(mean)]))
    z = np.linspace(-1.0, 1.0, n)
    z = (z - z.mean()) / z.std()
    return DataSample(mean + math.sqrt(variance) * z)


# ---------------------------------------------------------------------------
# Two-Gaussian model set
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoGaussianConfig:
    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError(f"component offset a must be > 0, got {self.a}")


def two_gaussian_model_set(cfg: TwoGaussianConfig) -> ModelSet:
    return ModelSet.finite([normal_model(cfg.a, 1.0, "P+"), normal_model(-cfg.a, 1.0, "P-")])


def two_gaussian_predictive(cfg: TwoGaussianConfig, stats: SampleStats, x):
    """``e^{-(x^2+a^2)/2}/sqrt(2 pi) [cosh ax + sinh ax tanh(a n xbar)]``."""
    a = cfg.a
    x = np.asarray(x, dtype=float)
    envelope = np.exp(-0.5 * (x * x + a * a) - LOG_SQRT_2PI)
    out = envelope * (np.cosh(a * x) + np.sinh(a * x) * math.tanh(a * stats.n * stats.mean))
    return float(out) if out.ndim == 0 else out


def two_gaussian_limit(cfg: TwoGaussianConfig, xbar_sign: int, x):
    """Large-n limit: the component selected by the sign of the sample mean."""
    if xbar_sign not in (-1, 1):
        raise DomainError(f"xbar_sign must be -1 or +1, got {xbar_sign}")
    x = np.asarray(x, dtype=float)
    d = x - cfg.a * xbar_sign
    out = np.exp(-0.5 * d * d - LOG_SQRT_2PI)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Whole normal family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalFamilyPosterior:
    stats: SampleStats

    def __post_init__(self):
        if self.stats.n < 3:
            raise DomainError(
                f"unsupported sample size n={self.stats.n}: the estimate needs n >= 3"
            )
        if not self.stats.variance > 0:
            raise DomainError("degenerate sample: zero variance")


def _log_c(n):
    # C_n = [(2 pi)^{(n-1)/2} sqrt(n)]^{-1}
    return -(0.5 * (n - 1) * LOG_2PI + 0.5 * math.log(n))


def _log_u(n, z):
    # U_n(z) = [2 / (n z)]^{n/2 - 1}
    return (0.5 * n - 1.0) * (math.log(2.0) - np.log(n * z))


def augmented_variance(stats: SampleStats, x):
    """Population variance of the sample with ``x`` appended.

    Uses ``(n+1) V' = n V + n/(n+1) (x - xbar)^2``, which avoids the
    cancellation of the raw-moment formula.
    """
    n = stats.n
    d = np.asarray(x, dtype=float) - stats.mean
    return (n * stats.variance + n * d * d / (n + 1)) / (n + 1)


def all_normal_log_predictive(post: NormalFamilyPosterior, x):
    st = post.stats
    n = st.n
    v_aug = augmented_variance(st, x)
    out = (
        _log_c(n + 1) - _log_c(n)
        + _log_u(n + 1, v_aug) - _log_u(n, st.variance)
        + gammaln(0.5 * n - 0.5) - gammaln(0.5 * n - 1.0)
    )
    return float(out) if np.ndim(out) == 0 else out


def all_normal_predictive(post: NormalFamilyPosterior, x):
    """Nishimori estimate over every normal density (flat measure on a, sigma).

    Proportional to ``[(x - xbar)^2 + (n+1) V]^{-(n-1)/2}``; the constant
    is evaluated through log-Gamma so large ``n`` does not overflow.
    """
    out = np.exp(all_normal_log_predictive(post, x))
    return float(out) if np.ndim(out) == 0 else out


def all_normal_limit(stats: SampleStats, x):
    """Large-n limit ``N(xbar, V)``."""
    if not stats.variance > 0:
        raise DomainError("degenerate sample: zero variance")
    x = np.asarray(x, dtype=float)
    d = x - stats.mean
    out = np.exp(-0.5 * d * d / stats.variance - 0.5 * math.log(stats.variance) - LOG_SQRT_2PI)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Quadrature oracle
# ---------------------------------------------------------------------------


def _grid_from_nodes(a, sigma, quad):
    a = np.asarray(a, dtype=float).ravel()
    sigma = np.asarray(sigma, dtype=float).ravel()
    quad = np.asarray(quad, dtype=float).ravel()
    params = np.column_stack([a, sigma])
    log_sigma = np.log(sigma)

    def batch(points):
        pts = np.asarray(points, dtype=float).ravel()
        z = (pts[None, :] - a[:, None]) / sigma[:, None]
        return -0.5 * z * z - log_sigma[:, None] - LOG_SQRT_2PI

    models = [normal_model(ai, si, f"a={ai!r},sigma={si!r}") for ai, si in zip(a, sigma)]
    return ModelSet.grid(params, models, quad, batch)


def normal_family_grid(
    stats: SampleStats,
    n_a: int = 200,
    n_sigma: int = 200,
    layout: str = "sheared",
    a_halfwidth: float = 10.0,
    sigma_range=(1e-2, 1e4),
) -> ModelSet:
    """Quadrature grid over ``N(a, sigma^2)`` for the flat measure ``da dsigma``.

    ``layout="sheared"`` (default) places nodes at
    ``a = xbar + sigma * u / sqrt(n)`` with ``u`` uniform on
    ``[-a_halfwidth, a_halfwidth]`` and ``log sigma`` uniform over
    ``sigma_range * sqrt(V)``; the node weight ``sigma^2 / sqrt(n) du dlog(sigma)``
    is the Jacobian of that change of variables.  This keeps the heavy
    ``sigma^-(n-1)`` tail inside the grid for small ``n``.

    ``layout="box"`` is the plain tensor grid ``xbar +/- a_halfwidth sqrt(V)``
    by ``sigma_range * sqrt(V)`` with uniform spacing and flat weights.
    """
    if n_a < 2 or n_sigma < 2:
        raise ConfigurationError(
            f"grid too coarse: need at least 2 nodes per axis, got {n_a}x{n_sigma}"
        )
    lo, hi = sigma_range
    if not 0 < lo < hi:
        raise ConfigurationError(f"bad sigma range {sigma_range}")
    scale = math.sqrt(stats.variance) if stats.variance > 0 else 1.0
    if layout == "sheared":
        u = np.linspace(-a_halfwidth, a_halfwidth, n_a)
        s = np.linspace(math.log(lo * scale), math.log(hi * scale), n_sigma)
        uu, ss = np.meshgrid(u, s, indexing="ij")
        sigma = np.exp(ss)
        a = stats.mean + sigma * uu / math.sqrt(stats.n)
        quad = sigma * sigma / math.sqrt(stats.n) * (u[1] - u[0]) * (s[1] - s[0])
    elif layout == "box":
        av = np.linspace(stats.mean - a_halfwidth * scale, stats.mean + a_halfwidth * scale, n_a)
        sv = np.linspace(lo * scale, hi * scale, n_sigma)
        a, sigma = np.meshgrid(av, sv, indexing="ij")
        quad = np.full(a.shape, (av[1] - av[0]) * (sv[1] - sv[0]))
    else:
        raise ConfigurationError(f"unknown grid layout {layout!r}")
    return _grid_from_nodes(a, sigma, quad)


def grid_quadrature_predictive(grid: ModelSet, sample: DataSample, x):
    """Weighted-mixture density over a grid at ``beta = n``."""
    return predictive_mixture(grid, sample).density(x)
