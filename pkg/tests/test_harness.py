import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from nishimori_mle import DomainError, SizeError, normal_model
from nishimori_mle.core import ModelSet
from nishimori_mle.gaussian import TwoGaussianConfig, two_gaussian_model_set
from nishimori_mle.harness import (
    beta_sweep_model_averaged,
    discrete_model_set,
    enumerate_count_vectors,
    exact_expected_predictive_kl,
    fixed_gt_internal_energy,
    internal_energy_identity_check,
    mc_beta_sweep,
    mc_expected_predictive_kl,
)


def kl(p, q):
    return sum(pi * math.log(pi / qi) for pi, qi in zip(p, q) if pi > 0)


def ordered_expected_kl(models, gt, n, beta):
    """Average over all K^n ordered sequences, one at a time."""
    k = len(gt)
    total = 0.0
    for seq in itertools.product(range(k), repeat=n):
        pr = math.prod(gt[s] for s in seq)
        logw = [beta / n * sum(math.log(m[s]) for s in seq) for m in models]
        top = max(logw)
        w = [math.exp(v - top) for v in logw]
        z = sum(w)
        pred = [sum(wj * m[c] for wj, m in zip(w, models)) / z for c in range(k)]
        total += pr * kl(gt, pred)
    return total


def dirichlet_models(rng, k, m):
    return [tuple(row) for row in rng.dirichlet(np.ones(k), size=m)]


# -- enumeration ---------------------------------------------------------------------


def test_enumeration_k2_n2():
    assert enumerate_count_vectors(2, 2).as_dict() == {(2, 0): 1, (1, 1): 2, (0, 2): 1}


def test_enumeration_counts_and_multiplicities():
    e = enumerate_count_vectors(3, 5)
    assert sum(e.multiplicity) == 3**5
    assert np.all(e.counts.sum(axis=1) == 5)
    assert len(enumerate_count_vectors(4, 8)) == math.comb(11, 3) == 165


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(1, 12))
def test_enumeration_invariants(k, n):
    e = enumerate_count_vectors(k, n)
    assert len(e) == math.comb(n + k - 1, k - 1)
    assert len({tuple(c) for c in e.counts}) == len(e)
    assert sum(e.multiplicity) == k**n
    np.testing.assert_allclose(np.exp(e.log_multiplicity), e.multiplicity, rtol=1e-12)


def test_enumeration_large_n_keeps_log_domain_only():
    e = enumerate_count_vectors(2, 40)
    assert e.multiplicity is None
    assert math.isclose(np.logaddexp.reduce(e.log_multiplicity), 40 * math.log(2), rel_tol=1e-13)
    with pytest.raises(DomainError):
        e.as_dict()


def test_enumeration_guards():
    with pytest.raises(SizeError):
        enumerate_count_vectors(6, 300)
    with pytest.raises(DomainError):
        enumerate_count_vectors(1, 3)
    with pytest.raises(DomainError):
        enumerate_count_vectors(3, 0)


# -- exact expected KL ----------------------------------------------------------------


def test_single_correct_model_has_zero_kl():
    for beta in (0.0, 1.0, 4.0, 50.0):
        assert exact_expected_predictive_kl([(0.2, 0.5, 0.3)], (0.2, 0.5, 0.3), 4, beta) == 0.0


def test_beta_zero_is_the_fixed_mixture():
    p, q, gt = (0.2, 0.8), (0.6, 0.4), (0.5, 0.5)
    mix = [0.5 * (a + b) for a, b in zip(p, q)]
    for n in (1, 3, 7):
        assert exact_expected_predictive_kl([p, q], gt, n, 0.0) == pytest.approx(kl(gt, mix), rel=1e-13)


def test_count_vector_path_matches_ordered_sequences_example():
    models = [(0.3, 0.7), (0.7, 0.3)]
    got = exact_expected_predictive_kl(models, (0.3, 0.7), 4, 4.0)
    assert got == pytest.approx(ordered_expected_kl(models, (0.3, 0.7), 4, 4.0), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 4), st.floats(0.0, 20.0))
def test_count_vector_path_matches_ordered_sequences(seed, n, m, beta):
    rng = np.random.default_rng(seed)
    models = dirichlet_models(rng, 2, m)
    gt = tuple(rng.dirichlet([1.0, 1.0]))
    got = exact_expected_predictive_kl(models, gt, n, beta)
    assert got == pytest.approx(ordered_expected_kl(models, gt, n, beta), rel=1e-11, abs=1e-14)


def test_alphabet_mismatch():
    with pytest.raises(DomainError):
        exact_expected_predictive_kl([(0.5, 0.5)], (0.2, 0.3, 0.5), 2, 1.0)


# -- beta sweep ---------------------------------------------------------------------


def test_sweep_minimum_at_n(rng):
    n = 5
    models = dirichlet_models(rng, 3, 4)
    res = beta_sweep_model_averaged(models, n, [n / 2, n, 2 * n])
    assert res.argmin_beta == n
    # refined grid around n
    grid = np.append(np.linspace(0.9 * n, 1.1 * n, 21), n)
    res = beta_sweep_model_averaged(models, n, grid)
    at_n = res.expected_kl[list(res.betas).index(n)]
    assert np.all(at_n <= res.expected_kl + 1e-12)


def test_sweep_single_model_is_flat_zero():
    res = beta_sweep_model_averaged([(0.1, 0.9)], 3, [1.0, 3.0, 9.0])
    np.testing.assert_array_equal(res.expected_kl, 0.0)


def test_sweep_curve_is_mean_of_per_gt(rng):
    models = dirichlet_models(rng, 3, 3)
    res = beta_sweep_model_averaged(models, 4, [2.0, 4.0, 8.0])
    for j, beta in enumerate(res.betas):
        direct = np.mean([exact_expected_predictive_kl(models, g, 4, beta) for g in models])
        assert res.expected_kl[j] == pytest.approx(direct, rel=1e-13)
        np.testing.assert_allclose(res.per_gt[:, j], [exact_expected_predictive_kl(models, g, 4, beta) for g in models])


def test_sweep_needs_beta_equal_n():
    with pytest.raises(DomainError):
        beta_sweep_model_averaged([(0.5, 0.5), (0.2, 0.8)], 4, [1.0, 2.0])


# -- internal-energy identity ---------------------------------------------------------


def test_identity_single_model():
    r = internal_energy_identity_check([(0.25, 0.25, 0.5)], 4)
    assert r.gap < 1e-15


def test_identity_examples(rng):
    assert internal_energy_identity_check([(0.3, 0.7), (0.6, 0.4)], 3).gap < 1e-12
    models = dirichlet_models(rng, 3, 3)
    assert internal_energy_identity_check(models, 4).gap < 1e-12


def test_identity_rhs_matches_direct_sum():
    models = [(0.3, 0.7), (0.6, 0.4)]
    n = 3
    rhs = 0.0
    for p in models:
        for seq in itertools.product(range(2), repeat=n):
            emp = [seq.count(c) / n for c in range(2)]
            rhs += math.prod(p[s] for s in seq) * kl(emp, p)
    r = internal_energy_identity_check(models, n)
    assert r.rhs == pytest.approx(rhs / 2, rel=1e-13)


def test_identity_needs_positive_models():
    with pytest.raises(DomainError):
        internal_energy_identity_check([(0.0, 1.0), (0.5, 0.5)], 3)


def test_fixed_gt_energy_is_reported_not_constant():
    # the gt-averaged identity holds; individual ground truths differ
    models = [(0.2, 0.8), (0.7, 0.3)]
    a = fixed_gt_internal_energy(models, models[0], 4)
    b = fixed_gt_internal_energy(models, models[1], 4)
    r = internal_energy_identity_check(models, 4)
    assert (a + b) / 2 == pytest.approx(r.lhs, rel=1e-13)


# -- Monte Carlo ------------------------------------------------------------------------


def test_mc_perfect_model():
    gt = normal_model(0.0, 1.0, "gt")
    est = mc_expected_predictive_kl(ModelSet.finite([gt]), gt, 5, replicates=100, seed=1)
    assert abs(est.estimate) <= 3 * est.stderr + 1e-15
    assert est.failures == 0


def two_gaussian_expected_kl(a, n, beta):
    """Oracle: nested quadrature over the sample mean and the evaluation point."""
    from scipy import integrate

    def given_mean(m):
        lr = -2 * a * beta * m

        def f(x):
            return stats.norm.pdf(x, a) * (np.logaddexp(0, lr) - np.logaddexp(0, lr - 2 * a * x))

        return integrate.quad(f, -12, 14, epsabs=1e-14)[0]

    sd = 1 / math.sqrt(n)
    return integrate.quad(
        lambda m: stats.norm.pdf(m, a, sd) * given_mean(m), a - 10 * sd, a + 10 * sd, epsabs=1e-14, limit=400, points=[0.0]
    )[0]


def test_mc_two_gaussian_sweep_minimum_at_n():
    # a = 0.5: at a = 1 the gap between beta = 10 and 100 comes from samples
    # with a negative mean (probability ~1e-3) that 500 replicates rarely see
    a, n = 0.5, 10
    models = two_gaussian_model_set(TwoGaussianConfig(a))
    res = mc_beta_sweep(models, models.models[0], n, [1.0, 10.0, 100.0], replicates=500, seed=7)
    for j in (0, 2):
        assert res.expected_kl[1] <= res.expected_kl[j] + 3 * res.stderr[j]
    truth = [two_gaussian_expected_kl(a, n, b) for b in res.betas]
    assert truth[1] < min(truth[0], truth[2])
    assert np.all(np.abs(res.expected_kl - truth) < 3 * res.stderr)
    assert not res.exact


def test_mc_is_deterministic():
    models = two_gaussian_model_set(TwoGaussianConfig(0.5))
    gt = normal_model(0.2, 1.0)
    a = mc_expected_predictive_kl(models, gt, 6, replicates=100, seed=42)
    b = mc_expected_predictive_kl(models, gt, 6, replicates=100, seed=42)
    assert a == b


def test_mc_agrees_with_exact_on_discrete_models():
    probs = [(0.2, 0.5, 0.3), (0.5, 0.25, 0.25), (0.1, 0.1, 0.8)]
    gt = (0.3, 0.4, 0.3)
    n = 4
    exact = exact_expected_predictive_kl(probs, gt, n, n)
    gt_model = discrete_model_set([gt]).models[0]
    est = mc_expected_predictive_kl(discrete_model_set(probs), gt_model, n, replicates=400, seed=3)
    assert abs(est.estimate - exact) < 3 * est.stderr


def test_mc_counts_failures():
    # the only model misses the gt's support: every replicate is non-finite
    gt = discrete_model_set([(0.5, 0.5)]).models[0]
    est = mc_expected_predictive_kl(discrete_model_set([(1.0, 0.0)]), gt, 1, replicates=100, seed=0)
    assert est.failures == 100 and math.isnan(est.estimate)


def test_mc_preconditions():
    gt = normal_model(0.0, 1.0)
    with pytest.raises(DomainError):
        mc_expected_predictive_kl(ModelSet.finite([gt]), gt, 3, replicates=99)
    with pytest.raises(DomainError):
        mc_expected_predictive_kl(ModelSet.finite([gt]), gt, 3, eval_draws=100)
