"""Command line entry point: ``desot gen-data | train | calibrate | eval | ood | sweep | run``.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""
from __future__ import annotations

import logging
import sys

import click

from . import pipeline
from .data.io import DatasetFormatError
from .nn import TrainingDivergedError
from .ood import SplitRoleError

VALIDATION_ERRORS = (pipeline.ConfigError, DatasetFormatError, SplitRoleError, ValueError)


def _parse_seeds(ctx, param, value):
    if value is None:
        return None
    try:
        return [int(s) for s in value.split(",") if s.strip()]
    except ValueError:
        raise click.BadParameter("expected comma-separated integers, e.g. 0,100,200")


def _load_config(config, out, members, seeds, temp_scaled, mode=None):
    overrides = {"out_dir": out, "members": members, "seeds": seeds}
    if temp_scaled is not None:
        overrides["temp_scaled"] = temp_scaled == "on"
    if config is None:
        values = {k: v for k, v in overrides.items() if v is not None}
        cfg = pipeline.RunConfig.from_dict(values)
    else:
        cfg = pipeline.RunConfig.load(config, **overrides)
    if mode is not None:
        cfg.strategies = [mode]
        cfg.sweep_strategies = [mode]
    return cfg


def run_options(fn):
    fn = click.option("--config", type=click.Path(dir_okay=False), help="JSON run config.")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False), help="Output directory.")(fn)
    fn = click.option("--members", type=int, help="Ensemble size M.")(fn)
    fn = click.option("--seeds", callback=_parse_seeds, help="Run seeds, e.g. 0,100,200.")(fn)
    fn = click.option("--temp-scaled", type=click.Choice(["on", "off"]),
                      help="Apply fitted temperatures.")(fn)
    return fn


mode_option = click.option("--mode", type=click.Choice(pipeline.STRATEGIES),
                           help="Restrict to one strategy.")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    """Sequence classifier ensembles: train, calibrate, evaluate."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command("gen-data")
@click.option("--classes", type=int, default=None, help="Class count [default: 23, or the length of --class-names].")
@click.option("--tail-exponent", type=float, default=0.8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--max-per-class", type=int, default=4000, show_default=True)
@click.option("--min-per-class", type=int, default=20, show_default=True)
@click.option("--size", type=int, default=16, show_default=True)
@click.option("--class-names", help="Comma-separated <color>_<shape> names, most frequent first.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output .dset file.")
def gen_data(classes, tail_exponent, seed, max_per_class, min_per_class, size, class_names, out):
    """Write a synthetic long-tailed glyph dataset."""
    names = [n.strip() for n in class_names.split(",")] if class_names else None
    if classes is None and names is None:
        classes = 23
    ds = pipeline.cmd_gen_data(out, classes, tail_exponent, seed, max_per_class, min_per_class,
                               size, names)
    click.echo(f"wrote {ds.n} frames, {ds.n_classes} classes -> {out}")


@cli.command()
@run_options
def train(config, out, members, seeds, temp_scaled):
    """Split the data and train ensemble members for every seed."""
    cfg = _load_config(config, out, members, seeds, temp_scaled)
    manifest = pipeline.cmd_train(cfg)
    click.echo(f"trained {sum(len(v) for v in manifest['models'].values())} models -> {cfg.out}")


@cli.command()
@run_options
def calibrate(config, out, members, seeds, temp_scaled):
    """Fit temperatures on the validation split."""
    cfg = _load_config(config, out, members, seeds, temp_scaled)
    manifest = pipeline.cmd_calibrate(cfg)
    for seed, temps in manifest["temperatures"].items():
        values = ", ".join(f"{k}={v['value']:.4f}" for k, v in temps.items())
        click.echo(f"seed {seed}: {values}")


@cli.command("eval")
@run_options
@mode_option
def eval_(config, out, members, seeds, temp_scaled, mode):
    """Evaluate strategies on test sequences -> metrics.csv."""
    cfg = _load_config(config, out, members, seeds, temp_scaled, mode)
    rows = pipeline.cmd_eval(cfg)
    for row in rows:
        if row["seed"] == "mean" and row["dataset"] == "test":
            click.echo(f"{row['strategy']:>16}  acc {row['accuracy']:.2f}  "
                       f"f1 {row['macro_f1']:.2f}  ece {row['ece']:.2f}  "
                       f"passes {row['forward_passes']:.0f}")


@cli.command()
@run_options
@mode_option
def ood(config, out, members, seeds, temp_scaled, mode):
    """Entropy-threshold OOD detection -> ood.csv, entropy_hist_<mode>.csv."""
    cfg = _load_config(config, out, members, seeds, temp_scaled, mode)
    pipeline.cmd_ood(cfg)
    manifest = pipeline.Manifest(cfg.out / "manifest.json")
    for key, summary in manifest["ood_summary"].items():
        click.echo(f"{key:>16}  f1 {summary['f1']:.3f}  "
                   f"H_in {summary['mean_entropy_in']:.3f}  H_ood {summary['mean_entropy_ood']:.3f}")


@cli.command()
@run_options
@mode_option
def sweep(config, out, members, seeds, temp_scaled, mode):
    """Augmentation severity sweep -> sweep.csv."""
    cfg = _load_config(config, out, members, seeds, temp_scaled, mode)
    rows = pipeline.cmd_sweep(cfg)
    click.echo(f"wrote {len(rows)} sweep rows -> {cfg.out / 'sweep.csv'}")


@cli.command()
@run_options
@click.option("--skip-gen", is_flag=True, help="Reuse the existing data file.")
def run(config, out, members, seeds, temp_scaled, skip_gen):
    """Full pipeline: gen-data, train, calibrate, eval, ood, sweep."""
    cfg = _load_config(config, out, members, seeds, temp_scaled)
    pipeline.run_all(cfg, generate=not skip_gen)
    click.echo(f"done -> {cfg.out}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="desot", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 2
    except click.ClickException as exc:
        exc.show()
        return 1
    except VALIDATION_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except (TrainingDivergedError, OSError, RuntimeError) as exc:
        click.echo(f"failed: {exc}", err=True)
        return 2
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
