#!/usr/bin/env python3
"""
pimsbo - Bayesian optimization with Thompson sampling and PIMS
A CLI application to run regret benchmarks and check the ingredients of their regret bounds.
"""

import functools
import json
import logging
import sys

import click

from pimsbo import __version__
from pimsbo.config import Config, default_output_dir, load_config_file
from pimsbo.errors import ConfigError, PimsboError
from pimsbo.experiment import compute_mig, run_experiment, run_verifiers
from pimsbo.report import ReportGenerator
from pimsbo.storage import ArtifactStorage

EXIT_FAILURE = 1
EXIT_USAGE = 2

# Per-user default experiment document
user_config = Config()


def exit_codes(command):
    """Map errors to the exit-code contract: config errors 2, anything else 1"""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ConfigError as e:
            click.echo(f"Configuration error: {e}", err=True)
            sys.exit(EXIT_USAGE)
        except (PimsboError, OSError) as e:
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_FAILURE)

    return wrapper


def common_options(command):
    command = click.option('--jobs', '-j', type=click.IntRange(min=1),
                           help='Parallel workers')(command)
    command = click.option('--out', '-o', 'out', type=click.Path(file_okay=False),
                           help='Output directory')(command)
    command = click.option('--seed', type=click.IntRange(0, 2 ** 64 - 1),
                           help='Master seed')(command)
    command = click.option('--config', '-c', 'config_path',
                           type=click.Path(exists=True, dir_okay=False),
                           help='JSON experiment document (default: per-user config)')(command)
    return command


def load_experiment_config(config_path, seed=None, out=None, jobs=None):
    """Read the experiment document and apply command-line overrides"""
    if config_path:
        config = load_config_file(config_path)
    else:
        user_config.ensure_config_exists()
        config = user_config.experiment_config()
    return config.with_overrides(seed=seed, output_dir=out, jobs=jobs)


@click.group()
@click.version_option(version=__version__)
@click.option('--verbose', '-v', is_flag=True, help='Log progress to stderr')
def cli(verbose):
    """
    pimsbo - Bayesian optimization with Thompson sampling and PIMS

    Run regret benchmarks of TS, PIMS and GP-UCB style policies on synthetic
    GP objectives, and check the inequalities behind their regret bounds.
    """
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command('run')
@common_options
@exit_codes
def run_command(config_path, seed, out, jobs):
    """
    Run the configured policies for every trial.

    Writes regret_<policy>_<trial>.csv per trace, summary.json and manifest.json.
    """
    config = load_experiment_config(config_path, seed, out, jobs)
    result = run_experiment(config, storage=ArtifactStorage(config.output_dir))

    click.echo(f"\n{'='*30}")
    click.echo(f"REGRET AT T={config.T} OVER {config.trials} TRIALS")
    click.echo(f"{'='*30}")
    for name, entry in result.summary["policies"].items():
        simple = entry["simple_regret"]
        cumulative = entry["cumulative_regret"]
        click.echo(f"{name:<22} simple {simple['mean'][-1]:.4g} ± {simple['stderr'][-1]:.2g}"
                   f"  cumulative {cumulative['mean'][-1]:.4g}")
    if "bcr_bound" in result.summary:
        click.echo(f"{'-'*40}")
        click.echo(f"TS/PIMS cumulative regret bound: {result.summary['bcr_bound']:.4g}")
    click.echo(f"\nArtifacts written to {result.output_dir}")


@cli.command('verify')
@common_options
@exit_codes
def verify_command(config_path, seed, out, jobs):
    """
    Run the verifier suite and write verify.json.

    Exits with status 1 naming every failed check.
    """
    config = load_experiment_config(config_path, seed, out, jobs)
    result = run_verifiers(config, storage=ArtifactStorage(config.output_dir))
    for report in result.reports:
        status = "PASS" if report.passed else "FAIL"
        click.echo(f"{status}  {report.name:<28} {report.empirical:.6g} <= {report.bound:.6g}")
    if not result.reports:
        click.echo("No checks selected.")
    if result.path is not None:
        click.echo(f"Report written to {result.path}")
    if not result.passed:
        click.echo(f"Failed checks: {', '.join(result.failures)}", err=True)
        sys.exit(EXIT_FAILURE)


@cli.command('mig')
@common_options
@click.option('--T', 'T', type=click.IntRange(min=1), help='Number of queries (default: config T)')
@click.option('--mode', type=click.Choice(['exact', 'greedy']), default='greedy', show_default=True)
@click.option('--repeats', is_flag=True, help='Allow repeated queries (multiset)')
@exit_codes
def mig_command(config_path, seed, out, jobs, T, mode, repeats):
    """
    Maximum information gain over the configured grid.

    Prints the value and, for greedy mode, the upper bound value / (1 - 1/e).
    """
    config = load_experiment_config(config_path, seed, out, jobs)
    T = T or config.T
    try:
        result = compute_mig(config, T, mode, repeats)
    except ValueError as e:
        raise ConfigError("T", str(e)) from e
    click.echo(json.dumps(dict(result.to_dict(), T=T), sort_keys=True))
    if out:
        storage = ArtifactStorage(out)
        storage.ensure_output_exists()
        storage.write_mig_result(result, T)


@cli.command('report')
@click.option('--out', '-o', 'out', type=click.Path(exists=True, file_okay=False),
              help='Run directory (default: per-user runs directory)')
@click.option('--output', default='summary.pdf', show_default=True, help='Output PDF filename')
@exit_codes
def report_command(out, output):
    """
    Render the summary of a finished run as a PDF.
    """
    storage = ArtifactStorage(out or default_output_dir())
    output_path = ReportGenerator(storage).generate_report(output)
    click.echo(f"Report generated successfully: {output_path}")


@cli.command('init-config')
@exit_codes
def init_config_command():
    """
    Create the per-user default experiment document if it does not exist.
    """
    if user_config.ensure_config_exists():
        click.echo(f"Created default configuration at {user_config.config_file}")
    else:
        click.echo(f"Configuration already exists at {user_config.config_file}")
