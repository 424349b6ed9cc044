"""Command-line entry point: dataset generation, training, evaluation,
experiment suites and feature export.

Every command is reproducible from (config file, seed) alone and writes the
fully resolved configuration next to its outputs. Exit codes: 2 for
configuration problems, 3 for data/simulation problems, 4 for training
failures. Log verbosity comes from the QFD_LOG_LEVEL environment variable.
"""

from __future__ import annotations

import functools
import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import config as cfgmod
from . import dataset as dsmod
from . import pipeline
from .errors import ConfigError, ContainerError, DegenerateLogError, EpisodeDivergedError, \
    InputDomainError, QuadFaultError, TrainingError

log = logging.getLogger("quadfault")

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAINING = 4


def _setup_logging():
    level = os.environ.get("QFD_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(message)s", stream=sys.stderr)


def _exit_code(exc: QuadFaultError) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, TrainingError):
        return EXIT_TRAINING
    if isinstance(exc, (ContainerError, EpisodeDivergedError, DegenerateLogError,
                        InputDomainError)):
        return EXIT_DATA
    return EXIT_DATA


def _wrap(func):
    @functools.wraps(func)
    def inner(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except QuadFaultError as exc:
            log.error("%s", exc)
            sys.exit(_exit_code(exc))
    return inner


@click.group()
def main():
    """Sim-to-real quadrotor propeller fault diagnosis."""
    _setup_logging()


config_opt = click.option("--config", "config_path", type=click.Path(), default=None,
                          help="YAML config; defaults are used when omitted.")
seed_opt = click.option("--seed", type=int, default=None, help="Override the config seed.")
jobs_opt = click.option("--jobs", type=int, default=None,
                        help="Worker processes (default: available cores).")


def _jobs(jobs):
    return max(1, os.cpu_count() or 1) if jobs is None else max(1, jobs)


def _build_source_domain(cfg, seed):
    """The calibration flow: healthy target flight -> estimated ratios -> adjusted source."""
    params = cfgmod.quad_params(cfg)
    source0 = cfgmod.domain_config(cfg, "source")
    target = cfgmod.domain_config(cfg, "target")
    source, model, _ = dsmod.calibrate_source(
        params, source0, target, seed=seed,
        duration=cfg["episode"]["calibration_duration"],
        trim_seconds=cfg["episode"]["calibration_trim"])
    log.info("calibrated unbalance ratios: %s (ref %.1f rad/s)",
             [round(r, 5) for r in model.rho], model.omega_ref_max)
    derived = {"estimated_unbalance": {"rho": list(model.rho),
                                       "omega_ref_max": model.omega_ref_max}}
    return params, source, derived


@main.command("gen")
@config_opt
@click.option("--domain", type=click.Choice(["source", "target"]), required=True)
@click.option("--variant", type=click.Choice(["nif", "cf"]), default="nif", show_default=True)
@click.option("--per-class", type=int, default=None)
@seed_opt
@click.option("--out", type=click.Path(), required=True)
@jobs_opt
@_wrap
def cmd_gen(config_path, domain, variant, per_class, seed, out, jobs):
    """Generate a labeled window dataset for one domain."""
    cfg = cfgmod.apply_overrides(cfgmod.load_config(config_path), seed=seed,
                                 per_class=per_class)
    run_seed = cfg["seed"]
    derived = {}
    if domain == "source":
        params, dom, derived = _build_source_domain(cfg, run_seed)
    else:
        params = cfgmod.quad_params(cfg)
        dom = cfgmod.domain_config(cfg, "target")
    ds = dsmod.generate(params, dom, cfg["experiment"]["per_class"],
                        cfgmod.feature_config(cfg, variant), seed=run_seed,
                        fault_thrust_eff=cfg["fault"]["thrust_eff"],
                        fault_torque_eff=cfg["fault"]["torque_eff"],
                        episode_duration=cfg["episode"]["duration"], jobs=_jobs(jobs))
    ds.config_sha256 = dsmod.config_hash(cfg)
    dsmod.save(ds, out)
    cfgmod.dump_resolved(cfg, out, extra=derived or None)
    for label, count in sorted(ds.class_counts().items()):
        click.echo(f"label {label}: {count} windows")
    click.echo(f"wrote {len(ds)} {variant} windows ({domain}) to {out}")


@main.command("train")
@config_opt
@click.option("--source", "source_path", type=click.Path(), required=True,
              help="Source-domain training dataset.")
@click.option("--target", "target_path", type=click.Path(), default=None,
              help="Target dataset; its healthy windows feed the MMD term.")
@click.option("--da/--no-da", default=False, show_default=True)
@seed_opt
@click.option("--out", type=click.Path(), required=True)
@_wrap
def cmd_train(config_path, source_path, target_path, da, seed, out):
    """Train one classifier and write a checkpoint."""
    cfg = cfgmod.apply_overrides(cfgmod.load_config(config_path), seed=seed)
    source = dsmod.load(source_path)
    target_healthy = None
    if target_path is not None:
        target_healthy = dsmod.healthy_subset(dsmod.load(target_path))
    if da and target_healthy is None:
        raise ConfigError("--da requires --target for its healthy windows")
    tc = cfgmod.train_config(cfg, da_enabled=da)
    clf, report = pipeline.train(source, target_healthy if da else None, tc)
    acc, _ = pipeline.evaluate(clf, source)
    report.source_accuracy = acc
    pipeline.save_checkpoint(clf, out)
    cfgmod.dump_resolved(cfg, out)
    click.echo(f"trained {report.epochs_run} epochs (best {report.best_epoch}); "
               f"source accuracy {acc:.4f}; checkpoint at {out}")


@main.command("eval")
@click.option("--checkpoint", type=click.Path(), required=True)
@click.option("--data", "data_path", type=click.Path(), required=True)
@_wrap
def cmd_eval(checkpoint, data_path):
    """Evaluate a checkpoint on a dataset; prints accuracy and confusion matrix."""
    clf = pipeline.load_checkpoint(checkpoint)
    ds = dsmod.load(data_path)
    acc, confusion = pipeline.evaluate(clf, ds)
    click.echo(f"accuracy: {acc:.4f}")
    click.echo("confusion (rows true 1..5, columns predicted):")
    for row in confusion:
        click.echo("  " + " ".join(f"{v:5d}" for v in row))


@main.command("experiment")
@config_opt
@click.option("--per-class", type=int, default=None)
@click.option("--runs", type=int, default=None)
@seed_opt
@click.option("--out", type=click.Path(), required=True)
@jobs_opt
@_wrap
def cmd_experiment(config_path, per_class, runs, seed, out, jobs):
    """Full three-suite comparison: generate datasets, train, aggregate."""
    cfg = cfgmod.apply_overrides(cfgmod.load_config(config_path), seed=seed,
                                 per_class=per_class, runs=runs)
    run_seed = cfg["seed"]
    jobs = _jobs(jobs)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    params, source_dom, derived = _build_source_domain(cfg, run_seed)
    target_dom = cfgmod.domain_config(cfg, "target")
    paths = {}
    for variant in ("nif", "cf"):
        fc = cfgmod.feature_config(cfg, variant)
        for name, dom in (("source", source_dom), ("target", target_dom)):
            ds = dsmod.generate(params, dom, cfg["experiment"]["per_class"], fc,
                                seed=run_seed, fault_thrust_eff=cfg["fault"]["thrust_eff"],
                                fault_torque_eff=cfg["fault"]["torque_eff"],
                                episode_duration=cfg["episode"]["duration"], jobs=jobs)
            ds.config_sha256 = dsmod.config_hash(cfg)
            path = out / f"dataset_{variant}_{name}"
            dsmod.save(ds, path)
            paths[(variant, name)] = path
            log.info("dataset %s/%s: %d windows", variant, name, len(ds))
    tc = cfgmod.train_config(cfg, da_enabled=False)
    summary = pipeline.run_experiment_from_paths(paths, tc, n_runs=cfg["experiment"]["runs"],
                                                 base_seed=run_seed, jobs=jobs)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    cfgmod.dump_resolved(cfg, out, extra=derived)
    lines = [f"{'suite':8s} {'domain':7s} {'mean':>7s} {'std':>7s}  runs"]
    for suite, agg in summary["aggregates"].items():
        for domain in ("source", "target"):
            a = agg[domain]
            lines.append(f"{suite:8s} {domain:7s} {a['mean']:7.4f} {a['std']:7.4f}  "
                         + " ".join(f"{v:.4f}" for v in a["runs"]))
    table = "\n".join(lines)
    (out / "summary.txt").write_text(table + "\n")
    click.echo(table)


@main.command("export-features")
@click.option("--checkpoint", type=click.Path(), required=True)
@click.option("--data", "data_paths", type=click.Path(), multiple=True, required=True)
@click.option("--out", type=click.Path(), required=True)
@_wrap
def cmd_export_features(checkpoint, data_paths, out):
    """Write dense-layer features (with labels and domain tags) for embedding."""
    clf = pipeline.load_checkpoint(checkpoint)
    datasets = [dsmod.load(p) for p in data_paths]
    pipeline.export_features(clf, datasets, out)
    total = sum(len(d) for d in datasets)
    click.echo(f"exported {total} feature rows to {out}")


if __name__ == "__main__":
    main()
