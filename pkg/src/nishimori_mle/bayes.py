"""Sequential (Bayesian) reading of the Nishimori-temperature weights.

Starting from equal weights, multiplying in ``P(xi)`` one point at a time
reproduces the ``beta = n`` weights exactly.  Re-applying the whole sample
again and again is a different map: each sweep raises the likelihood ratio
between two models to one more power, so weights pile onto the likelihood
maximizer unless models are exactly tied.  :func:`iterate_updates` reports
which of these happens instead of assuming a fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DataSample,
    LogWeightVector,
    ModelSet,
    posterior_log_weights,
    total_log_likelihoods,
)
from .errors import DomainError, EstimationError


@dataclass(frozen=True)
class ModelPosterior:
    """Normalized log-weights over a finite model set plus an update counter."""

    model_set: ModelSet
    weights: LogWeightVector
    history: int = 0

    def __post_init__(self):
        if len(self.weights) != len(self.model_set):
            raise DomainError("posterior weights and model set differ in length")

    @property
    def probabilities(self) -> np.ndarray:
        return self.weights.weights


def uniform_prior(model_set: ModelSet) -> ModelPosterior:
    return ModelPosterior(model_set, LogWeightVector.normalized(np.zeros(len(model_set)), 0.0))


def prior_from_weights(model_set: ModelSet, weights) -> ModelPosterior:
    """User-supplied prior; zero entries become ``-inf`` log-weights."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(model_set),) or np.any(w < 0):
        raise DomainError("prior weights must be nonnegative and match the model set")
    with np.errstate(divide="ignore"):
        return ModelPosterior(model_set, LogWeightVector.normalized(np.log(w), 0.0))


def _reweight(post: ModelPosterior, log_factor: np.ndarray, steps: int, absorbed: float) -> ModelPosterior:
    with np.errstate(invalid="ignore"):
        lw = post.weights.log_weights + log_factor
    lw = np.where(np.isnan(lw), -np.inf, lw)
    if not np.any(np.isfinite(lw)):
        raise EstimationError("every model with prior mass has zero density at the data")
    return ModelPosterior(
        post.model_set,
        LogWeightVector.normalized(lw, post.weights.beta + absorbed),
        post.history + steps,
    )


def single_point_update(post: ModelPosterior, new_point) -> ModelPosterior:
    """``w_P <- w_P P(x) / sum_Q w_Q Q(x)``."""
    pts = np.asarray(new_point)
    ld = post.model_set.log_density_matrix(pts.reshape((1,) + pts.shape))[:, 0]
    return _reweight(post, ld, 1, 1.0)


def full_data_sweep_update(post: ModelPosterior, sample: DataSample) -> ModelPosterior:
    """Multiply every weight by the model's whole-sample likelihood once."""
    return _reweight(post, total_log_likelihoods(post.model_set, sample), 1, float(sample.n))


def sequential_posterior(model_set: ModelSet, sample: DataSample, prior=None) -> ModelPosterior:
    post = uniform_prior(model_set) if prior is None else prior
    for x in sample.points:
        post = single_point_update(post, x)
    return post


def batch_equivalence_check(model_set: ModelSet, sample: DataSample) -> float:
    """Max absolute gap between sequential weights and the batch ``beta = n`` weights."""
    seq = sequential_posterior(model_set, sample).probabilities
    batch = posterior_log_weights(model_set, sample).weights
    return float(np.max(np.abs(seq - batch)))


@dataclass(frozen=True)
class UpdateTrajectory:
    """Weights after each sweep (index 0 is the starting posterior).

    ``status`` is ``"stationary"`` when a sweep left the weights unchanged,
    ``"concentrated"`` when the likelihood-argmax models hold more than
    ``1 - threshold`` of the mass, else ``"max_iter"``.
    """

    posteriors: tuple
    status: str
    argmax_models: tuple
    fixed_point_weights: np.ndarray
    matches_fixed_point: bool

    @property
    def weights(self) -> np.ndarray:
        return np.stack([p.probabilities for p in self.posteriors])

    @property
    def sweeps(self) -> int:
        return len(self.posteriors) - 1


def iterate_updates(
    post: ModelPosterior,
    sample: DataSample,
    k_max: int,
    concentration_threshold: float = 1e-6,
    stationary_tol: float = 1e-12,
) -> UpdateTrajectory:
    if k_max < 1:
        raise DomainError(f"k_max must be >= 1, got {k_max}")
    ll = total_log_likelihoods(post.model_set, sample)
    alive = np.isfinite(post.weights.log_weights) & np.isfinite(ll)
    if not np.any(alive):
        raise EstimationError("every model with prior mass has zero likelihood")
    best = ll[alive].max()
    tol = 1e-12 * max(1.0, abs(best))
    argmax = tuple(int(i) for i in np.flatnonzero(alive & (ll >= best - tol)))
    fixed = posterior_log_weights(post.model_set, sample).weights

    trail = [post]
    status = "max_iter"
    for _ in range(k_max):
        nxt = full_data_sweep_update(trail[-1], sample)
        trail.append(nxt)
        w_prev, w = trail[-2].probabilities, nxt.probabilities
        if np.max(np.abs(w - w_prev)) < stationary_tol:
            status = "stationary"
            break
        if w[list(argmax)].sum() > 1.0 - concentration_threshold:
            status = "concentrated"
            break
    final = trail[-1].probabilities
    return UpdateTrajectory(
        tuple(trail), status, argmax, fixed, bool(np.max(np.abs(final - fixed)) < stationary_tol)
    )
