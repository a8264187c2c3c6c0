"""Command-line entry points.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 bound
comparison failure under --strict.
"""
from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from .harness import (
    ConfigError,
    EnsembleFailure,
    compare_with_bound,
    config_from_yaml,
    resolve_gamma,
    run_ensemble,
    _build_context,
)
from .nonlinearity import ResolventError
from .noise import c_star as compute_c_star
from .operators import estimate_gamma, norm_hm1
from .stepper import ImplicitStepError, PathFailedError, convergence_study, run_path
from .theory import BoundInputs, extinction_bound

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_COMPARISON = 4

_NUMERICAL_ERRORS = (EnsembleFailure, PathFailedError, ResolventError, ImplicitStepError)


def _load_config(path, seed):
    cfg = config_from_yaml(path)
    if seed is not None:
        cfg = replace(cfg, master_seed=seed)
    return cfg


def _outdir(out) -> Path:
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def common_options(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(exists=True, dir_okay=False),
                      help="experiment config (YAML)")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="override master_seed from the config")(fn)
    fn = click.option("--out", default=".", type=click.Path(file_okay=False),
                      help="output directory")(fn)
    return fn


@click.group()
def main():
    """Numerical laboratory for stochastic fast-diffusion extinction."""


@main.command()
@common_options
def simulate(config_path, seed, out):
    """Run a single path and write its trajectory CSV."""
    try:
        cfg = _load_config(config_path, seed)
    except (ConfigError, OSError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    try:
        _, noise, x0 = _build_context(cfg)
        res = run_path(x0, cfg.solver, cfg.model, noise, seed=(cfg.master_seed, 0))
        if res.failed:
            click.echo(f"path failed: {res.failure_reason}", err=True)
            sys.exit(EXIT_NUMERICAL)
    except _NUMERICAL_ERRORS as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)
    path = _outdir(out) / "trajectory.csv"
    res.trajectory.to_csv(path)
    tau = "none" if res.tau_hat is None else f"{res.tau_hat:.6g}"
    click.echo(f"wrote {path} (extinct={res.extinct}, tau_hat={tau})")


@main.command()
@common_options
@click.option("--workers", type=int, default=1, help="parallel path workers")
@click.option("--strict", is_flag=True,
              help="exit 4 if the empirical CDF fails the theoretical bound")
def ensemble(config_path, seed, out, workers, strict):
    """Run a Monte Carlo ensemble; write summary JSON and tau CSV."""
    try:
        cfg = _load_config(config_path, seed)
    except (ConfigError, OSError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    try:
        summary = run_ensemble(cfg, workers=workers)
    except _NUMERICAL_ERRORS as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)
    inputs = summary.bound_inputs(cfg.model.diffusion.alpha, cfg.model.diffusion.rho)
    summary.comparison = compare_with_bound(summary, inputs)
    d = _outdir(out)
    (d / "summary.json").write_text(summary.to_json() + "\n")
    with open(d / "tau.csv", "w") as fh:
        fh.write("path_index,tau_hat\n")
        for i, tau in enumerate(summary.tau_hats):
            fh.write(f"{i},{'' if tau is None else repr(tau)}\n")
    click.echo(
        f"wrote {d / 'summary.json'} (extinct_fraction={summary.extinct_fraction:.3f}, "
        f"bound_pass={summary.comparison.overall_pass})"
    )
    if strict and not summary.comparison.overall_pass:
        click.echo("bound comparison FAILED", err=True)
        sys.exit(EXIT_COMPARISON)


@main.command()
@common_options
def bound(config_path, seed, out):
    """Write the theoretical extinction-probability bound curve as CSV."""
    try:
        cfg = _load_config(config_path, seed)
    except (ConfigError, OSError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    _, noise, x0 = _build_context(cfg)
    gamma = resolve_gamma(cfg)
    inputs = BoundInputs(
        x_norm_hm1=norm_hm1(x0),
        alpha=cfg.model.diffusion.alpha,
        rho=cfg.model.diffusion.rho,
        gamma=gamma,
        c_star=compute_c_star(noise),
    )
    ts = np.linspace(cfg.solver.t_final / 200, cfg.solver.t_final, 200)
    path = _outdir(out) / "bound.csv"
    with open(path, "w") as fh:
        fh.write("t,bound\n")
        for t in ts:
            fh.write(f"{t!r},{extinction_bound(float(t), inputs)!r}\n")
    click.echo(f"wrote {path} (gamma={gamma:.6g}, c_star={inputs.c_star:.6g})")


@main.command()
@common_options
def gamma(config_path, seed, out):
    """Estimate the embedding coercivity constant and write it as JSON."""
    try:
        cfg = _load_config(config_path, seed)
    except (ConfigError, OSError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    est = estimate_gamma(
        cfg.grid, cfg.model.diffusion.alpha,
        n_starts=cfg.gamma_n_starts, seed=cfg.master_seed,
    )
    path = _outdir(out) / "gamma.json"
    path.write_text(json.dumps(
        {
            "value": est.value,
            "alpha": est.alpha,
            "n_starts": est.n_starts,
            "minimizer": est.minimizer.values.tolist(),
        },
        indent=2,
    ) + "\n")
    click.echo(f"wrote {path} (gamma={est.value:.6g})")


@main.command()
@common_options
def convergence(config_path, seed, out):
    """Regularization-parameter convergence study on a shared Brownian path."""
    try:
        cfg = _load_config(config_path, seed)
    except (ConfigError, OSError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    try:
        _, noise, x0 = _build_context(cfg)
        report = convergence_study(
            x0, cfg.solver, cfg.model, noise,
            cfg.convergence_lambdas, seed=(cfg.master_seed, 0),
        )
    except _NUMERICAL_ERRORS as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)
    path = _outdir(out) / "convergence.csv"
    report.to_csv(path)
    click.echo(f"wrote {path} ({len(report.rows)} pairs)")


if __name__ == "__main__":
    main()
