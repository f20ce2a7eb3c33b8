"""Command-line interface.

Exit codes: 0 success, 1 protocol/validation error, 2 configuration error.
"""

from __future__ import annotations

import dataclasses
import sys
from pathlib import Path

import click

from . import datagen, ledger as ledger_mod, report as report_mod
from .annealing import AnnealingSchedule
from .errors import ChoicefedError, ConfigError, SizeMismatchError
from .experiment import (ExperimentConfig, centralized_oracle, run_experiment)
from .model import BetaVector, FitStatistics, rho_square


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
def main():
    """Federated binary-logit estimation by distributed simulated annealing."""


@main.command("gen-data")
@click.option("--n", default=246, show_default=True, help="Number of observations.")
@click.option("--beta", nargs=3, type=float, default=(0.35, -0.006, -0.001),
              show_default=True, help="True parameters (asc, cost, time).")
@click.option("--seed", default=1, show_default=True)
@click.option("--cost-range", nargs=2, type=float, default=datagen.DEFAULT_COST_RANGE,
              show_default=True)
@click.option("--time-range", nargs=2, type=float, default=datagen.DEFAULT_TIME_RANGE,
              show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def gen_data_cmd(n, beta, seed, cost_range, time_range, out_path):
    """Generate a synthetic survey CSV with known true parameters."""
    try:
        survey = datagen.gen_data(n, BetaVector(*beta), seed,
                                  tuple(cost_range), tuple(time_range))
    except ValueError as exc:
        _fail(str(exc), 2)
    datagen.write_csv(survey.data, out_path)
    click.echo(f"wrote {n} observations to {out_path} "
               f"(true beta {beta}, seed {seed})")


@main.command("partition")
@click.argument("input_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--sizes", required=True,
              help="Comma-separated part sizes, e.g. 61,61,61,63.")
@click.option("--seed", default=2, show_default=True)
@click.option("--out-prefix", required=True,
              help="Part i is written to <prefix><i>.csv.")
def partition_cmd(input_csv, sizes, seed, out_prefix):
    """Split a survey CSV into per-worker files by seeded permutation."""
    try:
        size_list = [int(s) for s in sizes.split(",")]
    except ValueError:
        _fail(f"bad --sizes value {sizes!r}", 2)
    try:
        dataset = datagen.read_csv(input_csv)
        parts = datagen.partition(dataset, size_list, seed)
    except (ValueError, SizeMismatchError) as exc:
        _fail(str(exc), 1)
    for i, part in enumerate(parts, start=1):
        path = f"{out_prefix}{i}.csv"
        datagen.write_csv(part, path)
        click.echo(f"wrote {len(part)} rows to {path}")


def _apply_overrides(config: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    fields = {k: v for k, v in overrides.items() if v is not None}
    return dataclasses.replace(config, **fields)


@main.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Canonical-JSON experiment config; flags override.")
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--fast", is_flag=True, default=None,
              help="Short schedule (inner=100, temp_min=1e-3) for quick runs.")
@click.option("--transport", type=click.Choice(["inproc", "tcp"]), default=None)
@click.option("--insecure", is_flag=True, default=None,
              help="Plaintext channels (debugging only).")
@click.option("--ledger-sample", type=int, default=None,
              help="Record every Nth data transaction (default 1 = all).")
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Survey CSV; otherwise synthetic data.")
@click.option("--outdir", type=click.Path(file_okay=False), default=None)
def run_cmd(config_path, seed, workers, fast, transport, insecure,
            ledger_sample, data_path, outdir):
    """Run the full distributed estimation and write the report + ledger."""
    try:
        config = (ExperimentConfig.from_json(config_path)
                  if config_path else ExperimentConfig())
        config = _apply_overrides(config, {
            "seed": seed, "workers": workers, "fast": fast,
            "transport": transport, "insecure": insecure,
            "ledger_sample": ledger_sample, "data_path": data_path,
            "outdir": outdir})
    except ConfigError as exc:
        _fail(str(exc), 2)
    try:
        rep = run_experiment(config)
    except ConfigError as exc:
        _fail(str(exc), 2)
    except ChoicefedError as exc:
        _fail(str(exc), 1)
    click.echo(report_mod.format_text(rep))
    click.echo(f"report written to {config.outdir}")


@main.command("centralized")
@click.option("--data", "data_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=3, show_default=True)
@click.option("--fast", is_flag=True, default=False)
@click.option("--outdir", type=click.Path(file_okay=False), default="runs/centralized")
def centralized_cmd(data_path, seed, fast, outdir):
    """Non-distributed annealing over the pooled data (the oracle path)."""
    try:
        dataset = datagen.read_csv(data_path)
    except ValueError as exc:
        _fail(str(exc), 1)
    schedule = AnnealingSchedule.fast() if fast else AnnealingSchedule()
    result = centralized_oracle(dataset, schedule, seed)
    fit = FitStatistics.compute(result.beta, dataset, result.ll)
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    report_mod.write_trajectory_csv(result, out / "trajectory.csv")
    click.echo(f"beta = {result.beta.as_tuple()}")
    click.echo(f"final ll = {result.ll:.4f}  null ll = {fit.null_ll:.4f}  "
               f"rho square = {fit.rho_square:.4f}")
    if fit.std_errors:
        click.echo(f"std errors = {fit.std_errors}")
    click.echo(f"trajectory written to {out / 'trajectory.csv'}")


@main.command("verify-ledger")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
def verify_ledger_cmd(path):
    """Check the hash chain and summarize the ledger contents."""
    try:
        valid, first_bad = ledger_mod.verify_chain(path)
        counts = ledger_mod.counts_by_type(path)
        who = ledger_mod.parties(path)
    except ledger_mod.MalformedEntryError as exc:
        _fail(f"malformed ledger: {exc}", 1)
    click.echo(f"chain valid: {valid}")
    if not valid:
        click.echo(f"first bad index: {first_bad}")
    click.echo("entries by type:")
    for tx_type in sorted(counts):
        click.echo(f"  {tx_type}: {counts[tx_type]}")
    click.echo(f"parties: {', '.join(sorted(who))}")
    sys.exit(0 if valid else 1)


@main.command("report")
@click.option("--run-dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Directory holding report.json and trajectory.csv.")
@click.option("--figures/--no-figures", default=True, show_default=True)
def report_cmd(run_dir, figures):
    """Re-render tables (and figures) from a finished run directory."""
    run_dir = Path(run_dir)
    try:
        rep = report_mod.RunReport.from_json(
            (run_dir / "report.json").read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        _fail(f"cannot load report: {exc}", 1)
    if not rep.is_self_consistent():
        _fail("report is not self-consistent: rho square does not match "
              "its own likelihood fields", 1)
    recomputed = rho_square(rep.null_ll, rep.final_ll)
    assert abs(recomputed - rep.rho_square) <= 1e-12
    click.echo(report_mod.format_text(rep))
    if figures:
        trajectory = report_mod.read_trajectory_csv(run_dir / "trajectory.csv")
        written = report_mod.write_figures(rep, trajectory, run_dir)
        for p in written:
            click.echo(f"wrote {p}")


if __name__ == "__main__":
    main()
