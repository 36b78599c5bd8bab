"""Single executable exposing the full pipeline as subcommands."""
from __future__ import annotations

import datetime
import json
from pathlib import Path

import click

from . import __version__
from .config import ToolConfig, load_config
from .labeler import class_balance_report, write_labeled_csv
from .learners import BACKEND_KINDS


def _write_manifest(out_dir: Path, subcommand: str, ctx_obj: dict, parameters: dict) -> None:
    manifest = {
        "tool": "vitalpolicy",
        "version": __version__,
        "subcommand": subcommand,
        "config": str(ctx_obj.get("config_path")) if ctx_obj.get("config_path") else "builtin",
        "seed": ctx_obj.get("seed"),
        "jobs": ctx_obj.get("jobs"),
        "out": str(out_dir),
        "parameters": parameters,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _out_dir(ctx_obj: dict) -> Path:
    out = ctx_obj.get("out")
    if out is None:
        raise click.ClickException("--out is required (pass it before the subcommand)")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cfg(ctx_obj: dict) -> ToolConfig:
    try:
        return load_config(ctx_obj.get("config_path"))
    except (ValueError, OSError) as exc:
        raise click.ClickException(f"config error: {exc}") from None


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="YAML configuration file; omitted sections keep defaults.")
@click.option("--seed", type=int, default=None,
              help="Seed override for simulation and training.")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Output directory (created if missing).")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Parallel worker processes for fold evaluation.")
@click.version_option(__version__)
@click.pass_context
def main(ctx, config_path, seed, out, jobs):
    """Offline imitation learning for bedside knob adjustments."""
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, seed=seed, out=out, jobs=max(1, jobs))


@main.command()
@click.pass_context
def simulate(ctx):
    """Generate a synthetic cohort with a known clinician policy."""
    from .simulator import simulate as run_simulate, write_simulation
    from dataclasses import replace

    cfg = _cfg(ctx.obj)
    out = _out_dir(ctx.obj)
    sim_cfg = cfg.simulator
    if ctx.obj.get("seed") is not None:
        sim_cfg = replace(sim_cfg, seed=int(ctx.obj["seed"]))
    try:
        result = run_simulate(sim_cfg, cfg.registry, cfg.knobs)
    except ValueError as exc:
        raise click.ClickException(f"simulator config error: {exc}") from None
    paths = write_simulation(result, out)
    _write_manifest(out, "simulate", ctx.obj, {
        "n_patients": sim_cfg.n_patients,
        "hours_mean": sim_cfg.hours_mean,
        "hours_jitter": sim_cfg.hours_jitter,
        "sim_seed": sim_cfg.seed,
        "label_noise": sim_cfg.label_noise,
        "ground_truth_actions": len(result.actions),
    })
    click.echo(f"simulated {sim_cfg.n_patients} patients "
               f"({len(result.actions)} ground-truth actions) -> {out}")
    for p in paths.values():
        click.echo(f"  {p}")


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Dataset directory holding trajectories.csv and patients.csv.")
@click.pass_context
def label(ctx, data_dir):
    """Ingest, featurize, and derive per-knob action labels."""
    from .ingest import IngestError, ingestion_report
    from .pipeline import label_cohort, load_dataset_dir
    from .reports import write_class_balance_figure

    cfg = _cfg(ctx.obj)
    out = _out_dir(ctx.obj)
    try:
        cohort = load_dataset_dir(data_dir, cfg)
        dataset, stats = label_cohort(cohort, cfg)
    except (IngestError, FileNotFoundError, ValueError) as exc:
        raise click.ClickException(f"{data_dir}: {exc}") from None
    if not dataset.samples:
        raise click.ClickException(f"{data_dir}: no labelable samples (patients need >= 3 windows)")
    write_labeled_csv(out / "labeled.csv", dataset)
    (out / "class_balance.txt").write_text(class_balance_report(dataset.samples), encoding="utf-8")
    (out / "ingestion_report.txt").write_text(ingestion_report(cohort, stats), encoding="utf-8")
    fig_dir = out / "figures"
    fig_dir.mkdir(exist_ok=True)
    write_class_balance_figure(dataset, fig_dir / "class_balance.png")
    _write_manifest(out, "label", ctx.obj, {
        "data": str(data_dir),
        "patients": len(cohort),
        "samples": len(dataset.samples),
        "knobs": dataset.knob_names,
    })
    click.echo(f"labeled {len(dataset.samples)} samples from {len(cohort)} patients -> {out}")


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Dataset directory holding trajectories.csv and patients.csv. "
                   "Evaluation re-ingests per fold so imputation statistics never "
                   "leak from held-out patients.")
@click.option("--backends", default="logistic,boosted_trees,mlp", show_default=True,
              help="Comma-separated backend kinds to compare on identical folds.")
@click.pass_context
def evaluate(ctx, data_dir, backends):
    """Leave-one-out evaluation plus disagreement mining for each backend."""
    from .disagreement import mine_regions, split_frequency, targets_from_predictions
    from .evaluation import run_evaluation
    from .ingest import IngestError
    from .pipeline import load_dataset_dir
    from .reports import (
        render_disagreement_report,
        render_evaluation_report,
        write_evaluation_figures,
        write_fold_metrics_csv,
        write_split_frequency_csv,
    )

    cfg = _cfg(ctx.obj)
    out = _out_dir(ctx.obj)
    kinds = [k.strip() for k in backends.split(",") if k.strip()]
    for kind in kinds:
        if kind not in BACKEND_KINDS:
            raise click.ClickException(f"unknown backend {kind!r}; choose from {BACKEND_KINDS}")
    seed = int(ctx.obj["seed"]) if ctx.obj.get("seed") is not None else 0
    specs = [cfg.backend_spec(kind, seed) for kind in kinds]
    try:
        cohort = load_dataset_dir(data_dir, cfg)
        run = run_evaluation(cohort, specs, cfg.knobs, cfg.registry, cfg.age_table,
                             ece_bins=cfg.ece_bins, jobs=ctx.obj["jobs"])
    except (IngestError, FileNotFoundError, ValueError) as exc:
        raise click.ClickException(f"evaluation failed: {exc}") from None

    (out / "evaluation_report.txt").write_text(render_evaluation_report(run), encoding="utf-8")
    write_fold_metrics_csv(run, out / "fold_metrics.csv")
    write_evaluation_figures(run, out / "figures")

    regions_by = {}
    trees = {}
    for backend in run.backends:
        for knob in run.knob_names:
            preds = backend.heldout[knob]
            d = targets_from_predictions(preds.truth, preds.p_change)
            regions, tree = mine_regions(
                run.features, d, run.feature_names, knob,
                max_depth=cfg.disagreement_max_depth, min_leaf=cfg.disagreement_min_leaf,
            )
            regions_by[(backend.name, knob)] = regions
            trees[(backend.name, knob)] = tree
    (out / "disagreement_report.txt").write_text(
        render_disagreement_report(regions_by), encoding="utf-8")
    models, rows = split_frequency(trees, run.feature_names)
    write_split_frequency_csv(models, rows, out / "split_frequency.csv")

    _write_manifest(out, "evaluate", ctx.obj, {
        "data": str(data_dir),
        "backends": kinds,
        "patients": len(cohort),
        "samples": run.backends[0].summary.sample_count,
    })
    click.echo(render_evaluation_report(run))
    click.echo(f"reports written to {out}")


@main.command()
@click.option("--data", "labeled_csv", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Labeled dataset CSV produced by the label subcommand.")
@click.option("--backend", default="boosted_trees", show_default=True,
              help="Backend kind for the deployed policy.")
@click.pass_context
def train(ctx, labeled_csv, backend):
    """Train a deployable policy artifact on every patient."""
    from .ingest import IngestError
    from .labeler import KnobSpec, read_labeled_csv
    from .policy import save_artifact, train_policy

    cfg = _cfg(ctx.obj)
    out = _out_dir(ctx.obj)
    if backend not in BACKEND_KINDS:
        raise click.ClickException(f"unknown backend {backend!r}; choose from {BACKEND_KINDS}")
    try:
        dataset = read_labeled_csv(labeled_csv)
    except (IngestError, ValueError) as exc:
        raise click.ClickException(f"{labeled_csv}: {exc}") from None
    if not dataset.samples:
        raise click.ClickException(f"{labeled_csv}: no samples to train on")
    knob_by_name = {k.name: k for k in cfg.knobs}
    knobs = [knob_by_name.get(name, KnobSpec(name, 1.0)) for name in dataset.knob_names]
    seed = int(ctx.obj["seed"]) if ctx.obj.get("seed") is not None else 0
    spec = cfg.backend_spec(backend, seed)
    artifact = train_policy(dataset.samples, spec, knobs, fold_id="full")
    path = out / "artifact.json"
    save_artifact(artifact, path)
    _write_manifest(out, "train", ctx.obj, {
        "data": str(labeled_csv),
        "backend": backend,
        "samples": len(dataset.samples),
        "taus": {name: head.tau for name, head in artifact.heads.items()},
        "per_knob": artifact.fingerprint["per_knob"],
    })
    click.echo(f"trained {backend} policy on {len(dataset.samples)} samples -> {path}")
    for name, head in artifact.heads.items():
        click.echo(f"  {name}: tau={head.tau:.2f} "
                   f"direction_model={'yes' if head.direction_model else 'absent'}")


@main.command()
@click.option("--artifact", "artifact_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Policy artifact JSON produced by the train subcommand.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.pass_context
def serve(ctx, artifact_path, host, port):
    """Serve the policy and simulator sessions over HTTP."""
    import uvicorn

    from .policy import ArtifactError, load_artifact
    from .service import create_app

    cfg = _cfg(ctx.obj)
    try:
        artifact = load_artifact(artifact_path)
    except ArtifactError as exc:
        raise click.ClickException(str(exc)) from None
    app = create_app(artifact, cfg)
    click.echo(f"serving policy from {artifact_path} on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
