"""Growing the model set one candidate at a time.

Adding a model ``P_*`` with likelihood ``z_* = prod_i P_*(xi_i)`` to a set
with total likelihood ``Z`` moves the estimate by ``(P_* - P_hat) * z_*/Z`` to
first order.  The exact update is ``P_hat + (P_* - P_hat) * r / (1 + r)``
with ``r = z_*/Z``, so the first-order error is ``O(r^2)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import logsumexp

from .core import (
    DataSample,
    DensityModel,
    ModelSet,
    PredictiveMixture,
    predictive_mixture,
    total_log_likelihoods,
)
from .errors import DomainError, EstimationError

FIRST_ORDER_RATIO_LIMIT = 0.1


class ExpansionWarning(UserWarning):
    """The likelihood ratio is too large for the first-order expansion."""


def _log_likelihood(model: DensityModel, sample: DataSample) -> float:
    with np.errstate(divide="ignore"):
        ld = np.asarray(model.log_density(sample.points), dtype=float)
    return float(ld.sum())


def extension_ratio(candidate: DensityModel, sample: DataSample, model_set: ModelSet) -> float:
    """``z_* / Z_M``, computed in the log domain."""
    log_z = logsumexp(total_log_likelihoods(model_set, sample) + model_set.log_prior())
    if not np.isfinite(log_z):
        raise EstimationError("empty support: every model in the set has zero likelihood")
    log_zstar = _log_likelihood(candidate, sample)
    if log_zstar == -math.inf:
        return 0.0
    return math.exp(log_zstar - log_z)


def first_order_extended_predictive(mix: PredictiveMixture, candidate: DensityModel, ratio: float, x):
    """``P_hat(x) + (P_*(x) - P_hat(x)) * ratio``.

    Warns with :class:`ExpansionWarning` when ``ratio`` exceeds 0.1.
    """
    if ratio < 0:
        raise DomainError(f"ratio must be >= 0, got {ratio}")
    if ratio > FIRST_ORDER_RATIO_LIMIT:
        warnings.warn(
            f"ratio {ratio:.3g} > {FIRST_ORDER_RATIO_LIMIT}: first-order expansion is unreliable",
            ExpansionWarning,
            stacklevel=2,
        )
    p_hat = mix.density(x)
    p_star = candidate.density(x)
    return p_hat + (p_star - p_hat) * ratio


def exact_extended_predictive(model_set: ModelSet, candidate: DensityModel, sample: DataSample, x):
    return predictive_mixture(model_set.extended(candidate), sample).density(x)


@dataclass(frozen=True)
class ExtensionReport:
    ratio: float
    first_order_density: Callable
    exact_density: Callable
    sup_error: float
    # trapezoid integral of the first-order density minus one, on x_grid
    normalization_deviation: float


def extension_report(model_set, candidate, sample, x_grid) -> ExtensionReport:
    x = np.asarray(x_grid, dtype=float)
    mix = predictive_mixture(model_set, sample)
    exact_mix = predictive_mixture(model_set.extended(candidate), sample)
    ratio = extension_ratio(candidate, sample, model_set)

    def first(xx):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ExpansionWarning)
            return first_order_extended_predictive(mix, candidate, ratio, xx)

    fo = first(x)
    ex = exact_mix.density(x)
    return ExtensionReport(
        ratio,
        first,
        exact_mix.density,
        float(np.max(np.abs(fo - ex))),
        float(trapezoid(fo, x) - 1.0),
    )


def candidate_score(
    model_set: ModelSet,
    sample: DataSample,
    candidate: DensityModel,
    reference,
    rng: Optional[np.random.Generator] = None,
    draws: int = 10_000,
) -> float:
    """First-order reduction of the expected KL from adding ``candidate``.

    Estimates ``ratio * E_ref[P_*(x)/P_hat(x) - 1]``.  ``reference`` is either
    a synthetic ground truth (a :class:`DensityModel` with a sampler; ``rng``
    required) or held-out data standing in for ground-truth draws.  Higher is
    better; a candidate equal to the current estimate scores exactly zero.
    """
    if isinstance(reference, DensityModel):
        if rng is None:
            raise DomainError("a seeded rng is required to sample the reference model")
        pts = reference.sample(rng, draws)
    else:
        pts = np.asarray(reference.points if isinstance(reference, DataSample) else reference)
        if pts.size == 0:
            raise DomainError("held-out sample is empty")
    mix = predictive_mixture(model_set, sample)
    ratio = extension_ratio(candidate, sample, model_set)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_rel = np.asarray(candidate.log_density(pts), dtype=float) - mix.log_density(pts)
    return float(ratio * np.mean(np.expm1(log_rel)))
