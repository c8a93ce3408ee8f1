"""Command-line front end for the simulation / attack / detection pipeline."""
from __future__ import annotations

import sys
from pathlib import Path

import click

from .attacks import apply_attack
from .runner import (DETECTORS, StageError, load_models, run_scenario,
                     run_suite, simulate_scenario, train_models)
from .scenarios import ScenarioConfig, suite_scenarios, training_scenarios
from .trace import read_trace, write_trace


def _fail(stage: str, err: Exception) -> None:
    click.echo(f"error [{stage}]: {err}", err=True)
    sys.exit(1)


def _load_config(path: str, seed: int | None) -> ScenarioConfig:
    cfg = ScenarioConfig.load(path)
    if seed is not None:
        d = cfg.to_dict()
        d["sim"]["seed"] = seed
        if "attack" in d:
            d["attack"]["seed"] = seed
        cfg = ScenarioConfig.from_dict(d)
    return cfg


@click.group()
def main():
    """Grid measurement simulation, injection attacks, and anomaly detection."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="override the simulation seed")
@click.option("--out", "out_dir", required=True, type=click.Path())
def simulate(config_path, seed, out_dir):
    """Simulate a scenario and write the measured trace as CSV."""
    try:
        cfg = _load_config(config_path, seed)
        trace, _ = simulate_scenario(cfg)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trace(trace, out / "trace.csv")
        click.echo(f"wrote {out / 'trace.csv'} ({trace.n_samples} samples)")
    except StageError as e:
        _fail(e.stage, e.cause)
    except Exception as e:
        _fail("simulate", e)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="scenario config holding the attack block")
@click.option("--trace", "trace_path", required=True, type=click.Path(exists=True),
              help="trace CSV to falsify")
@click.option("--out", "out_path", required=True, type=click.Path())
def attack(config_path, trace_path, out_path):
    """Apply the configured injection attack to an existing trace CSV."""
    try:
        cfg = _load_config(config_path, None)
        if cfg.attack is None:
            raise click.ClickException(f"{config_path} has no attack block")
        trace = read_trace(trace_path)
        attacked = apply_attack(trace, cfg.attack)
        write_trace(attacked, out_path)
        click.echo(f"wrote {out_path}")
    except StageError as e:
        _fail(e.stage, e.cause)
    except Exception as e:
        _fail("attack", e)


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="directory for model checkpoints")
@click.option("--seed", type=int, default=0)
def train(out_dir, seed):
    """Train the graph detectors and calibrate thresholds on the
    attack-free scenario catalog."""
    try:
        models = train_models(out_dir, seed=seed)
        click.echo(f"wrote gat.npz / gdn.npz / normalization.npz / "
                   f"ae_threshold.json to {out_dir}")
        click.echo(f"gdn threshold {models['gdn'].threshold:.4f}, "
                   f"gat threshold {models['gat'].threshold:.4f}, "
                   f"autoencoder error threshold {models['ae_threshold']:.2f}")
    except Exception as e:
        _fail("train", e)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--models", "models_dir", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--detector", "detector_names", multiple=True,
              type=click.Choice(DETECTORS), help="restrict to these detectors")
def detect(config_path, models_dir, seed, out_dir, detector_names):
    """Run detectors on one scenario and write verdicts and score series."""
    _evaluate(config_path, models_dir, seed, out_dir, detector_names)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--models", "models_dir", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--detector", "detector_names", multiple=True,
              type=click.Choice(DETECTORS))
def evaluate(config_path, models_dir, seed, out_dir, detector_names):
    """Full pipeline on one scenario: detect, score, and report metrics."""
    _evaluate(config_path, models_dir, seed, out_dir, detector_names)


def _evaluate(config_path, models_dir, seed, out_dir, detector_names):
    try:
        cfg = _load_config(config_path, seed)
        models = load_models(models_dir) if models_dir else None
        names = tuple(detector_names) if detector_names else DETECTORS
        if models is None:
            names = tuple(n for n in names if n in ("kmeans", "autoencoder"))
        bundle = run_scenario(cfg, models=models, out_dir=out_dir, detectors=names)
        for det, entry in sorted(bundle.report["detectors"].items()):
            click.echo(f"{det}: P={entry['precision']:.3f} "
                       f"R={entry['recall']:.3f} F1={entry['f1']:.3f}")
        click.echo(f"report: {Path(out_dir) / 'report.json'}")
    except StageError as e:
        _fail(e.stage, e.cause)
    except Exception as e:
        _fail("evaluate", e)


@main.command()
@click.option("--models", "models_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=0)
@click.option("--workers", type=int, default=1, help="parallel scenario workers")
def suite(models_dir, out_dir, seed, workers):
    """Run the full attack-kind x magnitude x placement benchmark grid."""
    try:
        scenarios = suite_scenarios(seed=seed)
        results = run_suite(scenarios, models_dir, out_dir, workers=workers)
        failed = [n for n, r in results.items() if "error" in r]
        click.echo(f"{len(results) - len(failed)}/{len(results)} scenarios ok; "
                   f"tables in {out_dir}")
        if failed:
            click.echo(f"failed: {', '.join(failed)}", err=True)
            sys.exit(1)
    except Exception as e:
        _fail("suite", e)


@main.command("export-configs")
@click.option("--out", "out_dir", required=True, type=click.Path())
def export_configs(out_dir):
    """Write the shipped scenario catalog as YAML files."""
    try:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        from .scenarios import holdout_scenario
        for sc in training_scenarios() + [holdout_scenario()] + suite_scenarios():
            sc.save(out / f"{sc.name}.yaml")
        click.echo(f"wrote {len(training_scenarios()) + 1 + len(suite_scenarios())} "
                   f"configs to {out}")
    except Exception as e:
        _fail("export-configs", e)


if __name__ == "__main__":
    main()
