"""Exact and Monte Carlo checks of the Nishimori-temperature estimator.

Discrete instances are evaluated exactly: the data average over ``K^n``
ordered sequences collapses onto count vectors weighted by their multinomial
multiplicity, so every expectation is a finite sum in a fixed order.
Continuous instances use seeded Monte Carlo with one independent stream per
replicate, shared across inverse temperatures so sweeps are paired.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp, rel_entr, xlogy

from .core import (
    DataSample,
    DensityModel,
    DiscreteDistribution,
    ModelSet,
    PredictiveMixture,
    _as_probs,
    posterior_log_weights,
)
from .errors import DomainError, EstimationError, SizeError

MAX_COUNT_VECTORS = 10**6
EXACT_MULTIPLICITY_MAX_N = 20


@dataclass(frozen=True)
class CountVectorEnumeration:
    """All count vectors of ``n`` draws over ``k`` symbols.

    ``multiplicity`` holds exact integers (number of ordered sequences with
    those counts) for ``n <= 20``; ``log_multiplicity`` is always present.
    """

    k: int
    n: int
    counts: np.ndarray
    log_multiplicity: np.ndarray
    multiplicity: Optional[tuple] = None

    def __len__(self):
        return self.counts.shape[0]

    def as_dict(self) -> dict:
        if self.multiplicity is None:
            raise DomainError("exact multiplicities are only kept for n <= 20")
        return {tuple(int(v) for v in c): m for c, m in zip(self.counts, self.multiplicity)}


def enumerate_count_vectors(k: int, n: int) -> CountVectorEnumeration:
    if k < 2 or n < 1:
        raise DomainError(f"need k >= 2 and n >= 1, got k={k}, n={n}")
    total = math.comb(n + k - 1, k - 1)
    if total > MAX_COUNT_VECTORS:
        raise SizeError(
            f"{total} count vectors for k={k}, n={n} exceeds the guard of {MAX_COUNT_VECTORS}"
        )
    counts = np.empty((total, k), dtype=np.int64)
    # stars and bars: bar positions split n stars into k groups
    for row, bars in enumerate(itertools.combinations(range(n + k - 1), k - 1)):
        prev = -1
        for j, b in enumerate(bars):
            counts[row, j] = b - prev - 1
            prev = b
        counts[row, k - 1] = n + k - 2 - prev
    log_mult = gammaln(n + 1) - gammaln(counts + 1).sum(axis=1)
    mult = None
    if n <= EXACT_MULTIPLICITY_MAX_N:
        fn = math.factorial(n)
        mult = tuple(fn // math.prod(math.factorial(int(c)) for c in row) for row in counts)
    counts.flags.writeable = False
    log_mult.flags.writeable = False
    return CountVectorEnumeration(k, n, counts, log_mult, mult)


def _prob_matrix(models) -> np.ndarray:
    if isinstance(models, np.ndarray) and models.ndim == 2:
        return np.stack([_as_probs(row) for row in models])
    return np.stack([_as_probs(m) for m in models])


def _log_prob_counts(enum: CountVectorEnumeration, probs: np.ndarray) -> np.ndarray:
    """Log-probability of each count vector under i.i.d. sampling from ``probs``."""
    return enum.log_multiplicity + xlogy(enum.counts, probs[None, :]).sum(axis=1)


def _predictive_table(enum, models_p, beta) -> np.ndarray:
    """Estimated distribution for every count vector, shape ``(V, K)``."""
    if beta == 0:
        lw = np.zeros((len(enum), models_p.shape[0]))
    else:
        ll = xlogy(enum.counts[:, None, :], models_p[None, :, :]).sum(axis=2)
        lw = (beta / enum.n) * ll
    with np.errstate(invalid="ignore"):
        lw = lw - logsumexp(lw, axis=1, keepdims=True)
    return np.exp(lw) @ models_p


def _expected_kl(enum, gt_p, pred) -> float:
    log_pr = _log_prob_counts(enum, gt_p)
    reach = np.isfinite(log_pr)
    kl = rel_entr(gt_p[None, :], pred[reach]).sum(axis=1)
    # no model supports a reachable count vector
    kl = np.where(np.isnan(kl), np.inf, kl)
    return float(np.sum(np.exp(log_pr[reach]) * kl))


def exact_expected_predictive_kl(models, gt, n: int, beta) -> float:
    """``<D[gt, P_hat_beta]>_data`` by exact enumeration of the sample counts."""
    models_p = _prob_matrix(models)
    gt_p = _as_probs(gt)
    if gt_p.size != models_p.shape[1]:
        raise DomainError("ground truth and models use different alphabets")
    enum = enumerate_count_vectors(gt_p.size, n)
    return _expected_kl(enum, gt_p, _predictive_table(enum, models_p, float(beta)))


@dataclass(frozen=True)
class BetaSweepResult:
    betas: np.ndarray
    expected_kl: np.ndarray
    argmin_beta: float
    stderr: Optional[np.ndarray] = None
    exact: bool = True
    per_gt: Optional[np.ndarray] = None

    def rows(self):
        se = self.stderr if self.stderr is not None else np.zeros_like(self.expected_kl)
        for b, v, s in zip(self.betas, self.expected_kl, se):
            yield float(b), float(v), float(s)


def beta_sweep_model_averaged(models, n: int, beta_grid: Sequence[float]) -> BetaSweepResult:
    """Expected predictive KL over a beta grid, ground truth uniform on the set.

    ``per_gt[g, j]`` keeps the curve for each fixed ground truth so that the
    fixed-truth behaviour can be inspected separately.
    """
    betas = np.asarray(beta_grid, dtype=float)
    if not np.any(betas == n):
        raise DomainError(f"beta grid must contain beta = n = {n}")
    models_p = _prob_matrix(models)
    enum = enumerate_count_vectors(models_p.shape[1], n)
    per_gt = np.empty((models_p.shape[0], betas.size))
    for j, beta in enumerate(betas):
        pred = _predictive_table(enum, models_p, float(beta))
        for g, gt_p in enumerate(models_p):
            per_gt[g, j] = _expected_kl(enum, gt_p, pred)
    curve = per_gt.mean(axis=0)
    return BetaSweepResult(
        betas, curve, float(betas[int(np.argmin(curve))]), None, True, per_gt
    )


class IdentityReport(NamedTuple):
    lhs: float
    rhs: float
    gap: float


def _empirical_divergences(enum, models_p) -> np.ndarray:
    """``D[P_emp(c), P_j]`` for every count vector ``c`` and model ``j``."""
    emp = enum.counts / enum.n
    return rel_entr(emp[:, None, :], models_p[None, :, :]).sum(axis=2)


def fixed_gt_internal_energy(models, gt, n: int, beta=None) -> float:
    """``<< D[P_emp, P] >>`` for one fixed ground truth (not model-averaged)."""
    models_p = _prob_matrix(models)
    gt_p = _as_probs(gt)
    beta = float(n) if beta is None else float(beta)
    enum = enumerate_count_vectors(models_p.shape[1], n)
    div = _empirical_divergences(enum, models_p)
    lw = -beta * div
    w = np.exp(lw - logsumexp(lw, axis=1, keepdims=True))
    gibbs = (w * div).sum(axis=1)
    return float(np.sum(np.exp(_log_prob_counts(enum, gt_p)) * gibbs))


def internal_energy_identity_check(models, n: int) -> IdentityReport:
    """Both sides of the internal-energy identity at ``beta = n``.

    ``lhs`` averages the Gibbs-averaged divergence over data drawn from each
    ground truth in the set; ``rhs`` averages each model's expected
    divergence to its own empirical distribution.
    """
    models_p = _prob_matrix(models)
    if np.any(models_p <= 0):
        raise DomainError("the identity check needs strictly positive models")
    enum = enumerate_count_vectors(models_p.shape[1], n)
    div = _empirical_divergences(enum, models_p)
    lw = -float(n) * div
    w = np.exp(lw - logsumexp(lw, axis=1, keepdims=True))
    gibbs = (w * div).sum(axis=1)
    lhs_terms = []
    rhs_terms = []
    for j, p in enumerate(models_p):
        pr = np.exp(_log_prob_counts(enum, p))
        lhs_terms.append(float(np.sum(pr * gibbs)))
        rhs_terms.append(float(np.sum(pr * div[:, j])))
    lhs = math.fsum(lhs_terms) / len(lhs_terms)
    rhs = math.fsum(rhs_terms) / len(rhs_terms)
    return IdentityReport(lhs, rhs, abs(lhs - rhs))


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


class MCEstimate(NamedTuple):
    estimate: float
    stderr: float
    failures: int


def _replicate_kls(model_set, gt, n, betas, replicates, seed, eval_draws):
    if gt.sampler is None:
        raise DomainError("the ground-truth model needs a sampler")
    children = np.random.SeedSequence(seed).spawn(replicates)
    out = np.empty((replicates, len(betas)))
    for r, child in enumerate(children):
        rng = np.random.default_rng(child)
        sample = DataSample(gt.sample(rng, n))
        ev = gt.sample(rng, eval_draws)
        with np.errstate(divide="ignore"):
            log_gt = np.asarray(gt.log_density(ev), dtype=float)
        ld = model_set.log_density_matrix(ev)
        for j, beta in enumerate(betas):
            try:
                mix = PredictiveMixture(model_set, posterior_log_weights(model_set, sample, beta))
            except EstimationError:
                out[r, j] = math.nan
                continue
            with np.errstate(invalid="ignore", divide="ignore"):
                log_hat = logsumexp(mix.weights.log_weights[:, None] + ld, axis=0)
                out[r, j] = np.mean(log_gt - log_hat)
    return out


def _summarize(column):
    ok = np.isfinite(column)
    failures = int((~ok).sum())
    vals = column[ok]
    if vals.size == 0:
        return MCEstimate(math.nan, math.nan, failures)
    se = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
    return MCEstimate(float(np.mean(vals)), se, failures)


def mc_expected_predictive_kl(
    model_set: ModelSet,
    gt: DensityModel,
    n: int,
    beta=None,
    replicates: int = 500,
    seed: int = 0,
    eval_draws: int = 10_000,
) -> MCEstimate:
    """Monte Carlo ``<D[gt, P_hat_beta]>_data``.

    Each replicate draws ``n`` data points from ``gt``, forms the weighted
    mixture and estimates ``E_gt[log gt - log P_hat]`` from ``eval_draws``
    fresh draws.  Non-finite replicates are counted in ``failures``.
    """
    if replicates < 100:
        raise DomainError(f"need at least 100 replicates, got {replicates}")
    if eval_draws < 10_000:
        raise DomainError(f"need at least 10^4 evaluation draws, got {eval_draws}")
    beta = float(n) if beta is None else float(beta)
    kls = _replicate_kls(model_set, gt, n, [beta], replicates, seed, eval_draws)
    return _summarize(kls[:, 0])


def mc_beta_sweep(
    model_set: ModelSet,
    gt: DensityModel,
    n: int,
    beta_grid: Sequence[float],
    replicates: int = 500,
    seed: int = 0,
    eval_draws: int = 10_000,
) -> BetaSweepResult:
    """Paired Monte Carlo sweep: every beta sees the same replicate datasets."""
    if replicates < 100:
        raise DomainError(f"need at least 100 replicates, got {replicates}")
    betas = np.asarray(beta_grid, dtype=float)
    kls = _replicate_kls(model_set, gt, n, list(betas), replicates, seed, eval_draws)
    summaries = [_summarize(kls[:, j]) for j in range(betas.size)]
    est = np.array([s.estimate for s in summaries])
    se = np.array([s.stderr for s in summaries])
    return BetaSweepResult(betas, est, float(betas[int(np.nanargmin(est))]), se, False)


def discrete_model_set(models: Sequence) -> ModelSet:
    """Finite model set of categorical models, usable by the Monte Carlo path."""
    return ModelSet.finite(
        [DiscreteDistribution(_as_probs(m)).as_model(f"m{j}") for j, m in enumerate(models)]
    )
