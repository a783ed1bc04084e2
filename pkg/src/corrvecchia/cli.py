"""Command-line experiment driver.

Subcommands run one experiment family each from a JSON config (with paper
and smoke scales), writing long-format CSV results plus a manifest into the
output directory.
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import __version__, experiments


def _resolve_config(config, smoke):
    cfg = experiments.load_config(config, smoke=smoke)
    return cfg


def _run(kind, config, out, seed, threads, smoke):
    cfg = _resolve_config(config, smoke)
    if cfg["experiment"] != kind:
        raise click.ClickException(
            f"config is for experiment {cfg['experiment']!r}, not {kind!r}"
        )
    out_dir = Path(out)
    records = experiments.RUNNERS[kind](cfg, base_seed=seed, threads=threads)
    csv_path = out_dir / "results.csv"
    experiments.write_records(records, csv_path)
    seeds = sorted({r.seed for r in records})
    experiments.write_manifest(cfg, out_dir, seeds, extra={"experiment": kind})
    n_failed = sum(1 for r in records if r.value == "failed")
    click.echo(f"wrote {len(records)} records to {csv_path} ({n_failed} failed cells)")


def _common(f):
    f = click.option("--smoke", is_flag=True, help="Use the reduced-size scale.")(f)
    f = click.option("--threads", type=int, default=1, show_default=True)(f)
    f = click.option("--seed", type=int, default=0, show_default=True)(f)
    f = click.option("--out", type=click.Path(), required=True)(f)
    f = click.option("--config", type=click.Path(exists=True), required=True)(f)
    return f


@click.group()
@click.version_option(version=__version__)
def main():
    """Correlation-based Vecchia approximation experiment driver."""


@main.command()
@_common
def generate(config, out, seed, threads, smoke):
    """Export generated scenario inputs (and optional ordering dump) as CSV."""
    cfg = _resolve_config(config, smoke)
    rows = experiments.export_inputs(cfg, base_seed=seed)
    out_dir = Path(out)
    experiments.write_input_rows(rows, out_dir / "inputs.csv")
    experiments.write_manifest(cfg, out_dir, [seed], extra={"experiment": "generate"})
    click.echo(f"wrote {len(rows)} inputs to {out_dir / 'inputs.csv'}")


@main.command("kl-sweep")
@_common
def kl_sweep(config, out, seed, threads, smoke):
    """KL divergence of the approximation versus the exact model over a sweep."""
    _run("kl-sweep", config, out, seed, threads, smoke)


@main.command()
@_common
def estimate(config, out, seed, threads, smoke):
    """Fisher-scoring parameter estimation replicates."""
    _run("estimate", config, out, seed, threads, smoke)


@main.command()
@_common
def predict(config, out, seed, threads, smoke):
    """Posterior prediction on held-out data: log scores and RMSPE."""
    _run("predict", config, out, seed, threads, smoke)


@main.command()
@_common
def posterior(config, out, seed, threads, smoke):
    """Posterior parameter density over a grid, per strategy and noise path."""
    _run("posterior", config, out, seed, threads, smoke)


@main.command("fit-predict")
@_common
def fit_predict(config, out, seed, threads, smoke):
    """Fit to an external CSV dataset and predict on a holdout."""
    _run("fit-predict", config, out, seed, threads, smoke)


@main.command()
@click.option("--config", type=click.Path(exists=True), required=True)
@click.option("--smoke", is_flag=True)
def manifest(config, smoke):
    """Echo the resolved configuration and library version as JSON."""
    cfg = _resolve_config(config, smoke)
    click.echo(json.dumps(
        {"library_version": __version__, "config": cfg}, indent=2, sort_keys=True
    ))


if __name__ == "__main__":
    main()
