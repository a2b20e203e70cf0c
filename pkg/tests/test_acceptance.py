"""Acceptance criteria, one test and one PASS/FAIL line each.

The lines are collected into an "acceptance criteria" section at the end of
the pytest run.  Run only this file with ``pytest tests/test_acceptance.py``.
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner
from scenarios import halving_error_ratio
from scipy import integrate, stats

from nishimori_mle import DataSample, ModelSet, normal_model
from nishimori_mle.bayes import full_data_sweep_update, sequential_posterior, uniform_prior
from nishimori_mle.cli import main
from nishimori_mle.core import posterior_log_weights, predictive_mixture, total_log_likelihoods
from nishimori_mle.gaussian import (
    NormalFamilyPosterior,
    SampleStats,
    TwoGaussianConfig,
    all_normal_limit,
    all_normal_predictive,
    grid_quadrature_predictive,
    normal_family_grid,
    sample_stats,
    synthetic_sample,
    two_gaussian_limit,
    two_gaussian_model_set,
    two_gaussian_predictive,
)
from nishimori_mle.harness import beta_sweep_model_averaged, internal_energy_identity_check

GOLDEN = Path(__file__).parent / "golden"
X5 = np.linspace(-5, 5, 1001)


def discrete_instances(count=24, seed=2024):
    """Random (models, n) pairs cycling through K in {2,3,4}, n in 2..8, |M| in 1..6."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        k = (2, 3, 4)[i % 3]
        n = 2 + i % 7
        m = 1 + i % 6
        out.append((rng.dirichlet(np.ones(k), size=m), n))
    return out


def geometric_grid(n):
    grid = n * 4.0 ** np.linspace(-1.0, 1.0, 21)
    grid[10] = float(n)
    return grid


def test_criterion_1_internal_energy_identity(acceptance_report):
    start = time.perf_counter()
    gaps = [internal_energy_identity_check(models, n).gap for models, n in discrete_instances()]
    elapsed = time.perf_counter() - start
    worst = max(gaps)
    ok = worst < 1e-12 and elapsed < 10
    acceptance_report(1, ok, f"identity gap max {worst:.2e} over {len(gaps)} instances, {elapsed:.2f} s")
    assert ok


def test_criterion_2_nishimori_optimality(acceptance_report):
    start = time.perf_counter()
    worst = -math.inf
    for models, n in discrete_instances():
        res = beta_sweep_model_averaged(models, n, geometric_grid(n))
        at_n = res.expected_kl[10]
        worst = max(worst, float(np.max(at_n - res.expected_kl)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 60
    acceptance_report(
        2, ok, f"max of KL(beta=n) - KL(beta) over 21-point grids {worst:.2e} (slack 1e-12), {elapsed:.2f} s"
    )
    assert ok


def test_criterion_3_two_gaussian_closed_form(acceptance_report):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(10):
        a = rng.uniform(0.2, 2.5)
        n = int(rng.integers(1, 200))
        sample = DataSample(rng.normal(rng.uniform(-1, 1), 1.0, n))
        models = two_gaussian_model_set(TwoGaussianConfig(a))
        engine = predictive_mixture(models, sample).density(X5)
        closed = two_gaussian_predictive(TwoGaussianConfig(a), sample_stats(sample), X5)
        worst = max(worst, float(np.max(np.abs(engine - closed))))
    ok = worst < 1e-12
    acceptance_report(3, ok, f"sup |closed form - engine| {worst:.2e} over 10 triples")
    assert ok


def test_criterion_4_all_normal_vs_quadrature(acceptance_report):
    x = np.linspace(-4, 4, 401)
    errs, masses = {}, {}
    for n in (3, 10, 50):
        sample = synthetic_sample(0.0, 1.0, n)
        post = NormalFamilyPosterior(SampleStats(0.0, 1.0, n))
        grid = normal_family_grid(sample_stats(sample), 200, 200)
        errs[n] = float(np.max(np.abs(grid_quadrature_predictive(grid, sample, x) - all_normal_predictive(post, x))))
        masses[n] = sum(
            integrate.quad(lambda t: all_normal_predictive(post, t), lo, hi, epsabs=1e-13, epsrel=1e-13)[0]
            for lo, hi in [(-np.inf, 0.0), (0.0, np.inf)]
        )
    mass_gap = max(abs(m - 1) for m in masses.values())
    ok = max(errs.values()) < 5e-3 and mass_gap < 1e-8
    detail = ", ".join(f"n={n} {e:.1e}" for n, e in errs.items())
    acceptance_report(4, ok, f"quadrature sup error {detail}; |mass - 1| max {mass_gap:.1e}")
    assert ok


def _figure(name):
    res = CliRunner().invoke(main, [name])
    body = [ln for ln in res.stdout.splitlines() if not ln.startswith("#")]
    return np.array([[float(v) for v in ln.split(",")] for ln in body[1:]])


def _golden(name):
    lines = [ln for ln in (GOLDEN / f"{name}.csv").read_text().splitlines() if not ln.startswith("#")]
    return np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])


def test_criterion_5_figure_reproduction(acceptance_report):
    fig1, fig2 = _figure("fig1"), _figure("fig2")
    d1 = float(np.max(np.abs(fig1[:, 3] - fig1[:, 4])))
    d2 = float(np.max(np.abs(fig2[:, 3] - stats.norm.pdf(fig2[:, 0]))))
    g = max(float(np.max(np.abs(fig1 - _golden("fig1")))), float(np.max(np.abs(fig2 - _golden("fig2")))))
    parts = [d1 < 1e-3, d2 < 0.01, g <= 1e-10]
    ok = all(parts)
    acceptance_report(
        5,
        ok,
        f"fig1 n=50 vs P_+ {d1:.2e} (<1e-3 {'ok' if parts[0] else 'no'}); "
        f"fig2 n=50 vs N(0,1) {d2:.4f} (<0.01 {'ok' if parts[1] else 'no'}); "
        f"golden diff {g:.1e} (<=1e-10 {'ok' if parts[2] else 'no'})",
    )
    assert ok


def test_criterion_6_limits(acceptance_report):
    cfg = TwoGaussianConfig(1.0)
    two = float(np.max(np.abs(two_gaussian_predictive(cfg, SampleStats(0.1, 0.0, 200), X5) - two_gaussian_limit(cfg, 1, X5))))
    dists = []
    for n in (3, 10, 50, 200):
        dens = all_normal_predictive(NormalFamilyPosterior(SampleStats(0.0, 1.0, n)), X5)
        dists.append(float(np.max(np.abs(dens - all_normal_limit(SampleStats(0.0, 1.0, n), X5)))))
    monotone = all(b < a for a, b in zip(dists, dists[1:]))
    ok = two < 1e-8 and monotone
    acceptance_report(
        6, ok, f"two-Gaussian n=200 gap {two:.1e}; all-normal distances {', '.join(f'{d:.4f}' for d in dists)}"
    )
    assert ok


def test_criterion_7_extension_order(acceptance_report):
    ratios = [halving_error_ratio(seed)[2] for seed in range(5)]
    ok = all(3.0 <= q <= 5.0 for q in ratios)
    acceptance_report(7, ok, f"error ratios under ratio halving {', '.join(f'{q:.3f}' for q in ratios)}")
    assert ok


def test_criterion_8_bayes_equivalence(acceptance_report):
    rng = np.random.default_rng(8)
    seq_gap = perm_gap = sweep_gap = 0.0
    for _ in range(20):
        m = int(rng.integers(1, 7))
        models = ModelSet.finite([normal_model(rng.normal(), rng.uniform(0.5, 2.0), f"m{j}") for j in range(m)])
        sample = DataSample(rng.normal(size=int(rng.integers(1, 40))))
        seq = sequential_posterior(models, sample).probabilities
        seq_gap = max(seq_gap, float(np.max(np.abs(seq - posterior_log_weights(models, sample).weights))))
        perm = sequential_posterior(models, DataSample(rng.permutation(sample.points))).probabilities
        perm_gap = max(perm_gap, float(np.max(np.abs(seq - perm))))
        ll = total_log_likelihoods(models, sample)
        post = uniform_prior(models)
        for k in range(1, 5):
            post = full_data_sweep_update(post, sample)
            lw = post.weights.log_weights
            want = k * (ll - ll[0])
            rel = np.max(np.abs((lw - lw[0]) - want)) / max(1.0, np.max(np.abs(want)))
            sweep_gap = max(sweep_gap, float(rel))
    ok = seq_gap < 1e-12 and perm_gap < 1e-12 and sweep_gap < 1e-12
    acceptance_report(
        8, ok, f"sequential-batch {seq_gap:.1e}, permutation {perm_gap:.1e}, sweep law (relative, log) {sweep_gap:.1e}"
    )
    assert ok


DETERMINISM_CONFIGS = {
    "estimate": "[models]\nfamily = two_gaussian\na = 1\n[sample]\ngenerator = normal\nn = 30\nmean = 0.5\n[run]\nx_points = 101\n",
    "beta-sweep": "[models]\nfamily = two_gaussian\na = 0.5\n[run]\nn = 5\nmode = mc\nreplicates = 100\nbeta_grid = 1 5 25\n",
    "nishimori-check": "[models]\nfamily = discrete\nprobs = 0.2 0.8; 0.7 0.3; 0.5 0.5\n[run]\nn = 6\n",
    "extend": "[models]\nfamily = gaussians\nmeans = -1\n[sample]\ngenerator = normal\nn = 20\n[run]\ncandidate_means = -2 0 0.5\ngt_mean = 0\n",
    "bayes-demo": "[models]\nfamily = gaussians\nmeans = -0.5 0 0.5\n[sample]\ngenerator = normal\nn = 15\nmean = 0.2\n[run]\nsweeps = 4\n",
    "fig1": None,
    "fig2": None,
}


def _cli_body(command, config, tmp_path):
    args = [sys.executable, "-m", "nishimori_mle.cli", command]
    if config is not None:
        path = tmp_path / f"{command}.ini"
        path.write_text(config)
        args += ["--config", str(path), "--seed", "20241015"]
    proc = subprocess.run(args, capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    return proc.stdout


def test_criterion_9_determinism(acceptance_report, tmp_path):
    differing = [
        cmd
        for cmd, cfg in DETERMINISM_CONFIGS.items()
        if _cli_body(cmd, cfg, tmp_path) != _cli_body(cmd, cfg, tmp_path)
    ]
    ok = not differing
    acceptance_report(
        9, ok, f"{len(DETERMINISM_CONFIGS)} commands, two processes each; differing: {differing or 'none'}"
    )
    assert ok
