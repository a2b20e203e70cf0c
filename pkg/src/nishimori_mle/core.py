"""Data/model types and the Boltzmann-weighted model average.

A candidate model ``P`` gets weight ``exp(-beta * D[P_emp, P])``.  The
entropy of the empirical distribution does not depend on ``P`` and drops out
after normalization, so every weight here is computed from the mean
log-likelihood alone::

    log w_P = beta * (1/n) * sum_i log P(xi_i) + log q_P  (then log-sum-exp normalized)

where ``q_P`` is the quadrature weight of a grid node (zero log-weight for a
finite set).  With ``beta = n`` the weights are the normalized likelihood
products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp, rel_entr

from .errors import DomainError, EstimationError

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

LogDensityFn = Callable[[np.ndarray], np.ndarray]
SamplerFn = Callable[[np.random.Generator, int], np.ndarray]


def _readonly(arr):
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


def _as_points(x):
    """Return ``(points, scalar)`` where ``points`` is at least 1-d."""
    arr = np.asarray(x)
    if arr.ndim == 0:
        return arr.reshape(1), True
    return arr, False


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DataSample:
    """An ordered i.i.d. sample ``xi_1, ..., xi_n``.

    ``points`` has shape ``(n,)`` for one-dimensional data or ``(n, D)``.
    Integer points are alphabet indices for the discrete harness.
    """

    points: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.points)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.ndim > 2:
            raise DomainError(f"sample points must be 1-d or 2-d, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise DomainError("a sample needs at least one point")
        object.__setattr__(self, "points", _readonly(arr))

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        return 1 if self.points.ndim == 1 else int(self.points.shape[1])

    def __len__(self):
        return self.n


@dataclass(frozen=True)
class DensityModel:
    """A named candidate density.

    ``log_density`` maps an array of points to the natural log of the
    density at each point (``-inf`` outside the support).  ``sampler`` draws
    ``size`` points from a numpy ``Generator``.
    """

    id: str
    log_density: LogDensityFn
    sampler: Optional[SamplerFn] = None

    def density(self, x):
        pts, scalar = _as_points(x)
        with np.errstate(divide="ignore"):
            out = np.exp(self.log_density(pts))
        return float(out[0]) if scalar else out

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.sampler is None:
            raise DomainError(f"model {self.id!r} has no sampler")
        return self.sampler(rng, size)


def _normal_logpdf(x, mean, sd):
    z = (np.asarray(x, dtype=float) - mean) / sd
    return -0.5 * z * z - math.log(sd) - LOG_SQRT_2PI


def _normal_sampler(mean, sd):
    def draw(rng, size):
        return rng.normal(mean, sd, size)

    return draw


def normal_model(mean: float, sd: float = 1.0, id: Optional[str] = None) -> DensityModel:
    """One-dimensional normal density ``N(mean, sd**2)``."""
    if not sd > 0:
        raise DomainError(f"standard deviation must be positive, got {sd}")
    mean, sd = float(mean), float(sd)
    if id is None:
        id = f"N({mean:g},{sd:g})"
    return DensityModel(
        id, lambda x: _normal_logpdf(x, mean, sd), _normal_sampler(mean, sd)
    )


@dataclass(frozen=True)
class DiscreteDistribution:
    """Probability vector over the alphabet ``0..K-1``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise DomainError(f"need a probability vector with K >= 2, got shape {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise DomainError(f"probabilities must be finite and nonnegative: {p}")
        if abs(p.sum() - 1.0) > 1e-12:
            raise DomainError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", _readonly(p))

    @classmethod
    def from_counts(cls, counts) -> "DiscreteDistribution":
        c = np.asarray(counts, dtype=float)
        total = c.sum()
        if total <= 0:
            raise DomainError("counts must sum to a positive number")
        return cls(c / total)

    @property
    def k(self) -> int:
        return int(self.probs.size)

    def as_model(self, id: Optional[str] = None) -> DensityModel:
        probs = self.probs
        with np.errstate(divide="ignore"):
            logp = np.log(probs)
        k = self.k

        def log_pmf(x):
            idx = np.asarray(x)
            out = np.full(idx.shape, -np.inf)
            ok = (idx >= 0) & (idx < k) & (idx == np.floor(idx))
            out[ok] = logp[idx[ok].astype(int)]
            return out

        def draw(rng, size):
            return rng.choice(k, size=size, p=probs)

        if id is None:
            id = "(" + ",".join(f"{v:g}" for v in probs) + ")"
        return DensityModel(id, log_pmf, draw)

    def __eq__(self, other):
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())


@dataclass(frozen=True)
class ModelSet:
    """A finite set of candidate models, or a quadrature grid over a family.

    For a grid, ``log_quad_weights`` holds the log of the (strictly
    positive) quadrature weight of each node and ``params`` the lattice
    coordinates.  ``batch_log_density`` may supply a vectorized evaluator
    returning the ``(m, k)`` matrix of log-densities for ``k`` points.
    """

    models: tuple
    log_quad_weights: Optional[np.ndarray] = None
    params: Optional[np.ndarray] = None
    batch_log_density: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, compare=False
    )

    def __post_init__(self):
        models = tuple(self.models)
        if not models:
            raise DomainError("a model set cannot be empty")
        ids = [m.id for m in models]
        if len(set(ids)) != len(ids):
            raise DomainError("model ids must be unique")
        object.__setattr__(self, "models", models)
        if self.log_quad_weights is not None:
            lq = np.asarray(self.log_quad_weights, dtype=float)
            if lq.shape != (len(models),):
                raise DomainError("one quadrature weight per grid node is required")
            if not np.all(np.isfinite(lq)):
                raise DomainError("grid quadrature weights must be strictly positive")
            object.__setattr__(self, "log_quad_weights", _readonly(lq))
        if self.params is not None:
            object.__setattr__(self, "params", _readonly(self.params))

    @classmethod
    def finite(cls, models: Sequence[DensityModel]) -> "ModelSet":
        return cls(tuple(models))

    @classmethod
    def grid(cls, params, models, quad_weights, batch_log_density=None) -> "ModelSet":
        w = np.asarray(quad_weights, dtype=float)
        if np.any(~(w > 0)):
            raise DomainError("grid quadrature weights must be strictly positive")
        return cls(tuple(models), np.log(w), np.asarray(params), batch_log_density)

    @property
    def is_grid(self) -> bool:
        return self.log_quad_weights is not None

    @property
    def size(self) -> float:
        """Cardinality of a finite set, or total quadrature volume of a grid."""
        if self.is_grid:
            return float(np.exp(logsumexp(self.log_quad_weights)))
        return float(len(self.models))

    @property
    def ids(self) -> list:
        return [m.id for m in self.models]

    def __len__(self):
        return len(self.models)

    def __iter__(self):
        return iter(self.models)

    def log_prior(self) -> np.ndarray:
        if self.is_grid:
            return np.asarray(self.log_quad_weights)
        return np.zeros(len(self.models))

    def log_density_matrix(self, points) -> np.ndarray:
        pts = np.asarray(points)
        if self.batch_log_density is not None:
            return np.asarray(self.batch_log_density(pts), dtype=float)
        with np.errstate(divide="ignore"):
            return np.stack([np.asarray(m.log_density(pts), dtype=float) for m in self.models])

    def extended(self, candidate: DensityModel, log_quad_weight: float = 0.0) -> "ModelSet":
        """A new set with ``candidate`` appended."""
        models = self.models + (candidate,)
        if not self.is_grid:
            return ModelSet(models)
        lq = np.append(self.log_quad_weights, log_quad_weight)
        return ModelSet(models, lq, None, None)


@dataclass(frozen=True)
class LogWeightVector:
    """Log-weights aligned with a model set, normalized by log-sum-exp."""

    log_weights: np.ndarray
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "log_weights", _readonly(np.asarray(self.log_weights, dtype=float)))

    @classmethod
    def normalized(cls, log_weights, beta) -> "LogWeightVector":
        lw = np.asarray(log_weights, dtype=float)
        if lw.size == 0:
            raise DomainError("empty weight vector")
        if np.any(np.isnan(lw)):
            raise EstimationError("log-weights contain NaN")
        if not np.any(np.isfinite(lw)):
            raise EstimationError("empty support: every model has zero weight")
        return cls(lw - logsumexp(lw), float(beta))

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def __len__(self):
        return self.log_weights.size


@dataclass(frozen=True)
class PredictiveMixture:
    """The weighted model average ``sum_P w_P P(x)``."""

    model_set: ModelSet
    weights: LogWeightVector

    def __post_init__(self):
        if len(self.weights) != len(self.model_set):
            raise DomainError("weight vector and model set differ in length")

    def log_density(self, x) -> np.ndarray:
        pts, scalar = _as_points(x)
        lw = self.weights.log_weights
        ld = self.model_set.log_density_matrix(pts)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = logsumexp(lw[:, None] + ld, axis=0)
        return float(out[0]) if scalar else out

    def density(self, x):
        pts, scalar = _as_points(x)
        out = np.exp(self.log_density(pts))
        return float(out[0]) if scalar else out

    __call__ = density

    def as_model(self, id: str = "mixture") -> DensityModel:
        samplers = [m.sampler for m in self.model_set.models]
        sampler = None
        if all(s is not None for s in samplers):
            w = self.weights.weights

            def sampler(rng, size):
                idx = rng.choice(len(w), size=size, p=w)
                out = None
                for j in np.unique(idx):
                    sel = idx == j
                    draws = np.asarray(samplers[j](rng, int(sel.sum())))
                    if out is None:
                        out = np.empty((size,) + draws.shape[1:], dtype=draws.dtype)
                    out[sel] = draws
                return out

        return DensityModel(id, self.log_density, sampler)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def empirical_counts(sample: DataSample, k: int) -> np.ndarray:
    """Symbol counts of a sample over the alphabet ``0..k-1``."""
    pts = np.asarray(sample.points)
    for i, v in enumerate(pts.ravel()):
        if not (v == int(v) and 0 <= v < k):
            raise DomainError(f"symbol {v!r} at index {i} is outside the alphabet [0, {k})")
    return np.bincount(pts.astype(int).ravel(), minlength=k)


def total_log_likelihoods(model_set: ModelSet, sample: DataSample) -> np.ndarray:
    """``sum_i log P(xi_i)`` for every model in the set."""
    ld = model_set.log_density_matrix(sample.points)
    with np.errstate(invalid="ignore"):
        return ld.sum(axis=1)


def mean_log_likelihood(model: DensityModel, sample: DataSample) -> float:
    """``(1/n) sum_i log P(xi_i)`` in nats; ``-inf`` on a zero-density point."""
    with np.errstate(divide="ignore"):
        ld = np.asarray(model.log_density(sample.points), dtype=float)
    if np.any(ld == -np.inf):
        return -math.inf
    return float(ld.sum() / sample.n)


def posterior_log_weights(model_set: ModelSet, sample: DataSample, beta=None) -> LogWeightVector:
    """Boltzmann log-weights ``beta * mean log-likelihood`` (+ quadrature).

    ``beta`` defaults to the sample size, i.e. the Nishimori condition.
    """
    n = sample.n
    beta = float(n) if beta is None else float(beta)
    if not (math.isfinite(beta) and beta >= 0):
        raise DomainError(f"beta must be finite and >= 0, got {beta}")
    if beta == 0:
        lw = np.zeros(len(model_set))
    else:
        total = total_log_likelihoods(model_set, sample)
        lw = (beta / n) * total
    lw = lw + model_set.log_prior()
    return LogWeightVector.normalized(lw, beta)


def predictive_mixture(model_set: ModelSet, sample: DataSample, beta=None) -> PredictiveMixture:
    return PredictiveMixture(model_set, posterior_log_weights(model_set, sample, beta))


def predictive_density(mix: PredictiveMixture, x):
    """Evaluate ``sum_i w_i P_i(x)``."""
    return mix.density(x)


def sample_model_index(weights: LogWeightVector, rng: np.random.Generator) -> int:
    """Draw a single model index with probability equal to its weight."""
    w = weights.weights
    return int(rng.choice(w.size, p=w / w.sum()))


def _as_probs(d) -> np.ndarray:
    if isinstance(d, DiscreteDistribution):
        return d.probs
    return DiscreteDistribution(d).probs


def kl_discrete(p, q) -> float:
    """``sum_k p_k log(p_k / q_k)`` with ``0 log 0 = 0``; ``inf`` if q misses mass of p."""
    p, q = _as_probs(p), _as_probs(q)
    if p.size != q.size:
        raise DomainError(f"alphabet sizes differ: {p.size} vs {q.size}")
    value = float(rel_entr(p, q).sum())
    return max(value, 0.0)


def kl_empirical_discrete(counts, model) -> float:
    """KL divergence from the empirical distribution of ``counts`` to ``model``."""
    c = np.asarray(counts)
    if np.any(c < 0) or c.sum() < 1:
        raise DomainError("counts must be nonnegative and sum to n >= 1")
    return kl_discrete(DiscreteDistribution.from_counts(c), model)


def gibbs_average_divergence(models: Sequence, counts, beta: float) -> float:
    """Boltzmann average of ``D[P_emp, P]`` over a set of discrete models."""
    c = np.asarray(counts)
    div = np.array([kl_empirical_discrete(c, m) for m in models])
    if beta == 0:
        lw = np.zeros(div.size)
    else:
        with np.errstate(invalid="ignore"):
            lw = -float(beta) * div
    w = LogWeightVector.normalized(lw, beta).weights
    with np.errstate(invalid="ignore"):
        terms = np.where(w > 0, w * div, 0.0)
    return float(terms.sum())
