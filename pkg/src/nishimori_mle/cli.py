"""Command-line front end.

Exit codes: 0 success, 1 a verification check failed, 2 usage/config
error, 3 estimation error (e.g. every model dead), 4 enumeration size guard.
"""

from __future__ import annotations

import functools
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import __version__
from .bayes import full_data_sweep_update, iterate_updates, single_point_update, uniform_prior
from .config import NISHIMORI, RunConfig, parse_config, serialize_config
from .core import DataSample, DiscreteDistribution, ModelSet, normal_model, predictive_mixture
from .errors import ConfigurationError, DomainError, EstimationError, SizeError, UsageError
from .extension import candidate_score, extension_ratio
from .gaussian import (
    NormalFamilyPosterior,
    SampleStats,
    TwoGaussianConfig,
    all_normal_predictive,
    normal_family_grid,
    sample_stats,
    two_gaussian_limit,
    two_gaussian_model_set,
    two_gaussian_predictive,
)
from .harness import (
    beta_sweep_model_averaged,
    internal_energy_identity_check,
    mc_beta_sweep,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_ESTIMATION = 3
EXIT_SIZE = 4

IDENTITY_TOLERANCE = 1e-10

FIG_X = (-5.0, 5.0, 1001)
FIG1_A, FIG1_XBAR, FIG1_NS = 1.0, 0.1, (2, 10, 50)
FIG2_XBAR, FIG2_V, FIG2_NS = 0.0, 1.0, (3, 10, 50)

DEFAULT_CHECK_MODELS = ((0.2, 0.3, 0.5), (0.6, 0.3, 0.1), (0.1, 0.8, 0.1))
DEFAULT_CHECK_N = 4


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@dataclass
class ResultRecord:
    command: str
    columns: list
    rows: list
    seed: object = None
    meta: dict = field(default_factory=dict)
    config: RunConfig = None
    version: str = __version__

    def to_csv(self) -> str:
        lines = [f"# command: {self.command}", f"# version: {self.version}"]
        lines.append(f"# seed: {'none' if self.seed is None else self.seed}")
        lines.extend(f"# {k}: {_cell(v)}" for k, v in self.meta.items())
        if self.config is not None:
            lines.extend(f"# config: {ln}" for ln in serialize_config(self.config).splitlines() if ln)
        lines.append(",".join(self.columns))
        lines.extend(",".join(_cell(v) for v in row) for row in self.rows)
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        def plain(v):
            if isinstance(v, (np.integer, bool, np.bool_)):
                return int(v)
            if isinstance(v, np.floating):
                return float(v)
            return v

        doc = {
            "command": self.command,
            "version": self.version,
            "seed": self.seed,
            "meta": {k: plain(v) for k, v in self.meta.items()},
            "config": None if self.config is None else serialize_config(self.config),
            "columns": list(self.columns),
            "rows": [[plain(v) for v in row] for row in self.rows],
        }
        return json.dumps(doc, indent=2) + "\n"


def _emit(record: ResultRecord, fmt: str, out):
    text = record.to_csv() if fmt == "csv" else record.to_json()
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


# ---------------------------------------------------------------------------
# Config resolution
# ---------------------------------------------------------------------------


def _require(cfg: RunConfig, section: str, key: str):
    try:
        return cfg.section(section)[key]
    except KeyError:
        raise UsageError(f"missing required key in [{section}]", key=key) from None


def _rng(seed, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


def _family(cfg: RunConfig) -> str:
    return _require(cfg, "models", "family")


def _discrete_models(cfg: RunConfig):
    rows = _require(cfg, "models", "probs")
    try:
        dists = [DiscreteDistribution(np.array(r)) for r in rows]
    except DomainError as exc:
        raise UsageError(str(exc), key="probs") from None
    if len({d.k for d in dists}) != 1:
        raise UsageError("all probability vectors need the same alphabet size", key="probs")
    return dists


def _ids(cfg, count, prefix="m"):
    ids = cfg.models.get("ids")
    if ids is None:
        return [f"{prefix}{j}" for j in range(count)]
    if len(ids) != count:
        raise UsageError(f"expected {count} ids", key="ids")
    return list(ids)


def _finite_model_set(cfg: RunConfig) -> ModelSet:
    family = _family(cfg)
    if family == "two_gaussian":
        return two_gaussian_model_set(TwoGaussianConfig(_require(cfg, "models", "a")))
    if family == "gaussians":
        means = _require(cfg, "models", "means")
        sds = cfg.models.get("sds", (1.0,) * len(means))
        if len(sds) != len(means):
            raise UsageError("sds and means differ in length", key="sds")
        ids = _ids(cfg, len(means))
        return ModelSet.finite([normal_model(m, s, i) for m, s, i in zip(means, sds, ids)])
    if family == "discrete":
        dists = _discrete_models(cfg)
        ids = _ids(cfg, len(dists))
        return ModelSet.finite([d.as_model(i) for d, i in zip(dists, ids)])
    raise UsageError(f"family {family!r} is not a finite model set", key="family")


def _load_sample(cfg: RunConfig) -> DataSample:
    s = cfg.sample
    if "values" in s:
        return DataSample(np.array(s["values"]))
    if "file" in s:
        try:
            data = np.loadtxt(s["file"], comments="#", ndmin=1)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read sample file: {exc}", key="file") from None
        if data.size == 0:
            raise UsageError("sample file is empty", key="file")
        return DataSample(data)
    if "generator" in s:
        n = _require(cfg, "sample", "n")
        if n < 1:
            raise UsageError("sample size must be >= 1", key="n")
        rng = _rng(cfg.seed, 0)
        if s["generator"] == "normal":
            return DataSample(rng.normal(s.get("mean", 0.0), s.get("sd", 1.0), n))
        probs = _require(cfg, "sample", "probs")
        return DataSample(rng.choice(len(probs), size=n, p=DiscreteDistribution(np.array(probs)).probs))
    raise UsageError("no sample source: set one of values, file or generator in [sample]")


def _resolve_beta(cfg: RunConfig, n: int) -> float:
    beta = cfg.run.get("beta", NISHIMORI)
    return float(n) if beta == NISHIMORI else float(beta)


def _x_grid(cfg: RunConfig) -> np.ndarray:
    lo = cfg.run.get("x_min", -5.0)
    hi = cfg.run.get("x_max", 5.0)
    pts = cfg.run.get("x_points", 1001)
    if pts < 1 or not hi >= lo:
        raise UsageError("bad x grid", key="x_points")
    return np.linspace(lo, hi, pts)


def _load(config_path, strict, seed) -> RunConfig:
    if config_path is None:
        raise UsageError("this command needs --config")
    try:
        text = Path(config_path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    warn = functools.partial(click.echo, err=True)
    return parse_config(text, strict=strict, seed=seed, warn=lambda m: warn(f"warning: {m}"))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _guarded(fn):
    """Map library exceptions onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            code = fn(*args, **kwargs)
        except UsageError as exc:
            click.echo(f"usage error: {exc}", err=True)
            sys.exit(EXIT_USAGE)
        except (DomainError, ConfigurationError) as exc:
            click.echo(f"usage error: {exc}", err=True)
            sys.exit(EXIT_USAGE)
        except EstimationError as exc:
            click.echo(f"estimation error: {exc}", err=True)
            sys.exit(EXIT_ESTIMATION)
        except SizeError as exc:
            click.echo(f"size error: {exc}", err=True)
            sys.exit(EXIT_SIZE)
        sys.exit(code or EXIT_OK)

    return wrapper


def common_options(fn):
    fn = click.option("--strict/--no-strict", default=False, help="Reject unknown config keys.")(fn)
    fn = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")(fn)
    fn = click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output file.")(fn)
    fn = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Overrides [run] seed.")(fn)
    fn = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)(fn)
    return fn


@click.group()
@click.version_option(__version__, prog_name="nishimori-mle")
def main():
    """Boltzmann-weighted model averaging at beta = n."""


@main.command()
@common_options
@_guarded
def estimate(config_path, seed, out, fmt, strict):
    """Predictive density table (x, density) for a model set and a sample."""
    cfg = _load(config_path, strict, seed)
    family = _family(cfg)
    sample = _load_sample(cfg)
    n = sample.n
    beta = _resolve_beta(cfg, n)
    meta = {}
    if family == "discrete":
        k = _discrete_models(cfg)[0].k
        xs = np.arange(k)
        dens = predictive_mixture(_finite_model_set(cfg), sample, beta).density(xs)
    else:
        xs = _x_grid(cfg)
        st = sample_stats(sample)
        meta.update(xbar=st.mean, V=st.variance)
        if family == "normal_family":
            if beta != n:
                raise UsageError("the closed form exists only at beta = n", key="beta")
            dens = all_normal_predictive(NormalFamilyPosterior(st), xs)
        elif family == "normal_grid":
            nodes = cfg.models.get("grid_nodes", 200)
            grid = normal_family_grid(st, nodes, nodes)
            dens = predictive_mixture(grid, sample, beta).density(xs)
        else:
            dens = predictive_mixture(_finite_model_set(cfg), sample, beta).density(xs)
    meta.update(n=n, beta=beta)
    rows = [(x, d) for x, d in zip(xs.tolist(), np.atleast_1d(dens).tolist())]
    _emit(ResultRecord("estimate", ["x", "density"], rows, cfg.seed, meta, cfg), fmt, out)


def _default_beta_grid(n):
    grid = n * 4.0 ** np.linspace(-1.0, 1.0, 21)
    grid[10] = float(n)
    return grid


@main.command("beta-sweep")
@common_options
@_guarded
def beta_sweep(config_path, seed, out, fmt, strict):
    """Expected predictive KL across inverse temperatures."""
    cfg = _load(config_path, strict, seed)
    n = _require(cfg, "run", "n")
    if n < 1:
        raise UsageError("n must be >= 1", key="n")
    grid = np.asarray(cfg.run.get("beta_grid", _default_beta_grid(n)), dtype=float)
    if not np.any(grid == n):
        click.echo(f"warning: beta grid lacks beta = n = {n}; appending it", err=True)
        grid = np.sort(np.append(grid, float(n)))
    mode = cfg.run.get("mode", "exact")
    family = _family(cfg)
    meta = {"n": n, "mode": mode}
    if mode == "exact":
        if family != "discrete":
            raise UsageError("exact sweeps need a discrete model set", key="family")
        result = beta_sweep_model_averaged(_discrete_models(cfg), n, grid)
    else:
        models = _finite_model_set(cfg)
        if family == "discrete":
            idx = cfg.run.get("gt_index", 0)
            if not 0 <= idx < len(models):
                raise UsageError("gt_index out of range", key="gt_index")
            gt = models.models[idx]
        elif "gt_mean" in cfg.run:
            gt = normal_model(cfg.run["gt_mean"], cfg.run.get("gt_sd", 1.0), "gt")
        else:
            gt = models.models[0]
        meta["gt"] = gt.id
        result = mc_beta_sweep(
            models,
            gt,
            n,
            grid,
            replicates=cfg.run.get("replicates", 500),
            seed=cfg.seed,
            eval_draws=cfg.run.get("eval_draws", 10_000),
        )
    meta["argmin_beta"] = result.argmin_beta
    columns = ["beta", "expected_kl", "stderr", "exact_flag", "is_argmin"]
    per_gt = result.per_gt
    if per_gt is not None:
        columns += [f"kl_gt{g}" for g in range(per_gt.shape[0])]
    rows = []
    for j, (b, v, s) in enumerate(result.rows()):
        row = [b, v, s, int(result.exact), int(b == result.argmin_beta)]
        if per_gt is not None:
            row += per_gt[:, j].tolist()
        rows.append(tuple(row))
    _emit(ResultRecord("beta-sweep", columns, rows, cfg.seed, meta, cfg), fmt, out)


@main.command("nishimori-check")
@common_options
@click.option("--perturb", is_flag=True, help="Self-test: perturb the right-hand side; must fail.")
@_guarded
def nishimori_check(config_path, seed, out, fmt, strict, perturb):
    """Exact check of the internal-energy identity at beta = n."""
    if config_path is None:
        cfg = None
        models = [DiscreteDistribution(np.array(p)) for p in DEFAULT_CHECK_MODELS]
        n = DEFAULT_CHECK_N
    else:
        cfg = _load(config_path, strict, seed)
        models = _discrete_models(cfg)
        n = _require(cfg, "run", "n")
    lhs, rhs, gap = internal_energy_identity_check(models, n)
    if perturb:
        rhs = rhs + 1e-6
        gap = abs(lhs - rhs)
    passed = gap < IDENTITY_TOLERANCE
    meta = {"n": n, "models": len(models), "tolerance": IDENTITY_TOLERANCE}
    record = ResultRecord(
        "nishimori-check", ["lhs", "rhs", "gap", "passed"], [(lhs, rhs, gap, int(passed))],
        None if cfg is None else cfg.seed, meta, cfg,
    )
    _emit(record, fmt, out)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def _candidates(cfg: RunConfig):
    if _family(cfg) == "discrete":
        rows = _require(cfg, "run", "candidate_probs")
        return [DiscreteDistribution(np.array(r)).as_model(f"c{j}") for j, r in enumerate(rows)]
    means = _require(cfg, "run", "candidate_means")
    sds = cfg.run.get("candidate_sds", (1.0,) * len(means))
    if len(sds) != len(means):
        raise UsageError("candidate_sds and candidate_means differ in length", key="candidate_sds")
    return [normal_model(m, s, f"c{j}") for j, (m, s) in enumerate(zip(means, sds))]


@main.command()
@common_options
@_guarded
def extend(config_path, seed, out, fmt, strict):
    """Rank candidate models for addition to the set."""
    cfg = _load(config_path, strict, seed)
    models = _finite_model_set(cfg)
    sample = _load_sample(cfg)
    pool = _candidates(cfg)
    run = cfg.run
    if "holdout" in run:
        reference = np.array(run["holdout"])
        ref_name = "holdout"
    elif "gt_mean" in run or "gt_probs" in run:
        if cfg.seed is None:
            raise UsageError("a seed is required to sample the reference model", key="seed")
        if "gt_probs" in run:
            reference = DiscreteDistribution(np.array(run["gt_probs"])).as_model("gt")
        else:
            reference = normal_model(run["gt_mean"], run.get("gt_sd", 1.0), "gt")
        ref_name = "synthetic"
    else:
        raise UsageError("extend needs a holdout sample or a synthetic reference", key="holdout")
    draws = run.get("draws", 10_000)
    scored = []
    for j, cand in enumerate(pool):
        rng = _rng(cfg.seed, 1) if cfg.seed is not None else None
        ratio = extension_ratio(cand, sample, models)
        score = candidate_score(models, sample, cand, reference, rng=rng, draws=draws)
        scored.append((-score, j, cand.id, ratio, score))
    scored.sort()
    rows = [(rank + 1, cid, ratio, score) for rank, (_, _, cid, ratio, score) in enumerate(scored)]
    meta = {"n": sample.n, "reference": ref_name}
    _emit(ResultRecord("extend", ["rank", "candidate_id", "ratio", "score"], rows, cfg.seed, meta, cfg), fmt, out)


@main.command("bayes-demo")
@common_options
@_guarded
def bayes_demo(config_path, seed, out, fmt, strict):
    """Per-step model weights under sequential Bayesian updating.

    Steps 1..n absorb one sample point each; steps n+1..n+sweeps re-apply
    the whole sample.
    """
    cfg = _load(config_path, strict, seed)
    models = _finite_model_set(cfg)
    sample = _load_sample(cfg)
    sweeps = cfg.run.get("sweeps", 0)
    if sweeps < 0:
        raise UsageError("sweeps must be >= 0", key="sweeps")
    trail = [uniform_prior(models)]
    for k in range(sample.n):
        trail.append(single_point_update(trail[-1], sample.points[k]))
    for _ in range(sweeps):
        trail.append(full_data_sweep_update(trail[-1], sample))
    meta = {"n": sample.n, "sweeps": sweeps}
    if sweeps:
        meta["sweep_status"] = iterate_updates(trail[sample.n], sample, sweeps).status
    rows = [
        (step, mid, w)
        for step, post in enumerate(trail)
        for mid, w in zip(models.ids, post.probabilities.tolist())
    ]
    _emit(ResultRecord("bayes-demo", ["step", "model_id", "weight"], rows, cfg.seed, meta, cfg), fmt, out)


def fig1_rows():
    cfg = TwoGaussianConfig(FIG1_A)
    xs = np.linspace(*FIG_X)
    cols = [two_gaussian_predictive(cfg, SampleStats(FIG1_XBAR, 0.0, n), xs) for n in FIG1_NS]
    cols.append(two_gaussian_limit(cfg, 1, xs))
    return list(zip(xs.tolist(), *(c.tolist() for c in cols)))


def fig2_rows():
    xs = np.linspace(*FIG_X)
    cols = [
        all_normal_predictive(NormalFamilyPosterior(SampleStats(FIG2_XBAR, FIG2_V, n)), xs)
        for n in FIG2_NS
    ]
    cols.append(np.exp(-0.5 * xs**2) / math.sqrt(2 * math.pi))
    return list(zip(xs.tolist(), *(c.tolist() for c in cols)))


@main.command()
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@_guarded
def fig1(out, fmt):
    """Two-Gaussian estimate for n = 2, 10, 50 (a = 1, xbar = 0.1) and P_+."""
    columns = ["x"] + [f"n={n}" for n in FIG1_NS] + ["P_plus"]
    meta = {"a": FIG1_A, "xbar": FIG1_XBAR}
    _emit(ResultRecord("fig1", columns, fig1_rows(), None, meta), fmt, out)


@main.command()
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@_guarded
def fig2(out, fmt):
    """All-normal estimate for n = 3, 10, 50 (xbar = 0, V = 1) and N(0, 1)."""
    columns = ["x"] + [f"n={n}" for n in FIG2_NS] + ["normal"]
    meta = {"xbar": FIG2_XBAR, "V": FIG2_V}
    _emit(ResultRecord("fig2", columns, fig2_rows(), None, meta), fmt, out)


if __name__ == "__main__":
    main()
