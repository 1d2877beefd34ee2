"""Command-line entry points tying the pipeline together."""
from __future__ import annotations

import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click
import numpy as np
import yaml

from . import __version__
from .classifier import (
    TrainConfig,
    build_classifier,
    load_checkpoint,
    save_checkpoint,
    save_history,
    train_classifier,
)
from .dataio import (
    load_manifest,
    load_patch_cache,
    save_manifest,
    save_patch_cache,
)
from .errors import ZoomshiftError
from .experiments import (
    Augmentation,
    ExperimentConfig,
    ExperimentRunner,
    RunnerSettings,
    default_shift_grid,
)
from .metrics import default_sifid_extractor, sifid
from .patches import lesion_patches
from .phantom import generate_phantom_dataset
from .records import BiopsyLabel, ClassLabel, ZoomGroup
from .sampling import weighted_sampler_weights
from .singan import SinGANConfig, load_model, save_model, train_singan
from .splits import make_splits

CACHE_ROOT_ENV = "ZOOMSHIFT_CACHE"


def cache_root() -> Path:
    return Path(os.environ.get(CACHE_ROOT_ENV, Path.home() / ".cache" / "zoomshift"))


@dataclass
class RunManifest:
    """Append-only record of one CLI invocation."""

    command: str
    config: dict
    seeds: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    version: str = __version__
    duration_s: float = 0.0


def write_manifest(out_dir, manifest: RunManifest) -> None:
    path = Path(out_dir) / "run_manifests.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        fh.write(json.dumps(asdict(manifest), sort_keys=True, default=str) + "\n")


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return yaml.safe_load(fh) or {}


def _resolve(defaults: dict, file_cfg: dict, flags: dict) -> dict:
    """Precedence: explicit flags > config file > built-in defaults."""
    out = dict(defaults)
    out.update({k: v for k, v in file_cfg.items() if k in defaults})
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


@click.group()
@click.version_option(__version__)
def main():
    """Zoom-shift study pipeline: phantoms, patches, generative models, grids."""


@main.command("make-phantom")
@click.option("--n", "n_patients", type=int, default=20, show_default=True)
@click.option("--prevalence", type=float, default=0.6, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def cmd_make_phantom(n_patients, prevalence, seed, out_dir):
    """Generate a synthetic mammogram-like dataset with exact lesion masks."""
    started = time.monotonic()
    records = generate_phantom_dataset(n_patients, lesion_prevalence=prevalence, rng_seed=seed)
    manifest = save_manifest(records, out_dir)
    click.echo(f"wrote {len(records)} images to {manifest}")
    write_manifest(
        out_dir,
        RunManifest(
            "make-phantom",
            {"n": n_patients, "prevalence": prevalence, "seed": seed},
            seeds=[seed],
            outputs=[str(manifest)],
            duration_s=time.monotonic() - started,
        ),
    )


@main.command("extract-patches")
@click.option("--manifest", "manifest_csv", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--groups", default="G1:G2:G3", show_default=True)
def cmd_extract_patches(manifest_csv, out_dir, groups):
    """Extract the zoom-group lesion patches listed in a dataset manifest."""
    started = time.monotonic()
    wanted = tuple(ZoomGroup(g) for g in groups.split(":"))
    try:
        records = load_manifest(manifest_csv)
    except (ZoomshiftError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    patches, failures = [], []
    for record in records:
        if record.biopsy_label == BiopsyLabel.NONE:
            continue
        try:
            patches.extend(lesion_patches(record, wanted))
        except ZoomshiftError as exc:
            failures.append(f"{record.image_id}: {exc}")
    index = save_patch_cache(patches, out_dir)
    counts = {g.value: sum(p.zoom_group == g for p in patches) for g in wanted}
    if not patches:
        click.echo("warning: no lesion patches extracted", err=True)
    click.echo(f"extracted {len(patches)} patches {counts} -> {index}")
    for line in failures:
        click.echo(f"error: {line}", err=True)
    write_manifest(
        out_dir,
        RunManifest(
            "extract-patches",
            {"groups": groups},
            inputs=[str(manifest_csv)],
            outputs=[str(index)],
            duration_s=time.monotonic() - started,
        ),
    )
    if failures:
        sys.exit(1)


def _singan_config(file_cfg: dict, flags: dict) -> SinGANConfig:
    resolved = _resolve(asdict(SinGANConfig()), file_cfg.get("singan", file_cfg), flags)
    return SinGANConfig(**resolved)


@main.command("train-singan")
@click.option("--patches", "cache_dir", type=click.Path(exists=True), required=True)
@click.option("--patch-id", required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--max-dim", type=int, default=None)
@click.option("--allow-any-group", is_flag=True)
def cmd_train_singan(cache_dir, patch_id, out_dir, config_file, seed, epochs, max_dim, allow_any_group):
    """Train a single-image generative model on one lesion patch."""
    started = time.monotonic()
    cache = load_patch_cache(cache_dir)
    if patch_id not in cache:
        click.echo(f"error: patch {patch_id!r} not found in {cache_dir}", err=True)
        sys.exit(1)
    patch = cache[patch_id]
    if patch.zoom_group != ZoomGroup.G1 and not allow_any_group:
        click.echo(
            f"error: patch {patch_id} is {patch.zoom_group.value}; generative training "
            "expects tight (G1) patches. Pass --allow-any-group to proceed anyway.",
            err=True,
        )
        sys.exit(1)
    config = _singan_config(
        _load_config_file(config_file), {"seed": seed, "epochs": epochs, "max_dim": max_dim}
    )
    try:
        model = train_singan(patch.pixels, config, image_id=patch.source_image_id)
    except ZoomshiftError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    path = save_model(model, out_dir)
    extractor = default_sifid_extractor()
    samples = model.sample(10, rng_seed=config.seed + 1)
    scores = [sifid(patch.pixels, s, extractor) for s in samples]
    click.echo(f"checkpoint: {path}")
    click.echo(f"sample SiFID vs training patch: mean={np.mean(scores):.4f} sd={np.std(scores):.4f}")
    write_manifest(
        out_dir,
        RunManifest(
            "train-singan",
            asdict(config) | {"patch_id": patch_id},
            seeds=[config.seed],
            inputs=[str(cache_dir)],
            outputs=[str(path)],
            duration_s=time.monotonic() - started,
        ),
    )


@main.command("sample-singan")
@click.option("--model", "model_dir", type=click.Path(exists=True), required=True)
@click.option("--count", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def cmd_sample_singan(model_dir, count, seed, out_dir):
    """Draw fresh samples from a trained single-image model."""
    import cv2

    started = time.monotonic()
    model = load_model(model_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, sample in enumerate(model.sample(count, rng_seed=seed)):
        path = out / f"sample_{i:04d}.png"
        cv2.imwrite(str(path), (np.clip(sample, 0, 1) * 65535).astype(np.uint16))
        written.append(str(path))
    click.echo(f"wrote {count} samples to {out}")
    write_manifest(
        out_dir,
        RunManifest(
            "sample-singan",
            {"count": count},
            seeds=[seed],
            inputs=[str(model_dir)],
            outputs=written,
            duration_s=time.monotonic() - started,
        ),
    )


@main.command("sifid")
@click.option("--real", type=click.Path(exists=True), required=True)
@click.option("--synthetic", type=click.Path(exists=True), required=True)
def cmd_sifid(real, synthetic):
    """Single-image Fréchet distance between two grayscale images."""
    import cv2

    def read01(path):
        img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED).astype(np.float64)
        peak = np.max(img)
        return img / peak if peak > 0 else img

    value = sifid(read01(real), read01(synthetic), default_sifid_extractor())
    click.echo(f"{value:.6f}")


@main.command("train-classifier")
@click.option("--patches", "cache_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--groups", default="G1:G2:G3", show_default=True)
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--weights", default="auto", show_default=True)
def cmd_train_classifier(cache_dir, out_dir, groups, config_file, epochs, seed, weights):
    """Train the frozen-backbone probe on cached patches (single split)."""
    started = time.monotonic()
    wanted = {ZoomGroup(g) for g in groups.split(":")}
    patches = [p for p in load_patch_cache(cache_dir).values() if p.zoom_group in wanted]
    if not patches:
        click.echo("error: no patches match the requested groups", err=True)
        sys.exit(1)
    resolved = _resolve(asdict(TrainConfig()), _load_config_file(config_file), {"epochs": epochs})
    config = TrainConfig(**resolved)
    record_ids = sorted({p.patient_id for p in patches})
    pseudo = [type("R", (), {"patient_id": pid, "image_id": pid})() for pid in record_ids]
    split = make_splits(pseudo, n_folds=3, rng_seed=seed)[0]
    train = [p for p in patches if split.assignment.get(p.patient_id) == "train"]
    val = [p for p in patches if split.assignment.get(p.patient_id) == "val"]
    model = build_classifier(3, weights=weights, head_seed=seed)
    try:
        model, history = train_classifier(
            model,
            train,
            val,
            config,
            sampler_weights=weighted_sampler_weights([p.class_label for p in train]),
            val_sampler_weights=weighted_sampler_weights([p.class_label for p in val]),
            rng_seed=seed,
        )
    except ZoomshiftError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, config, out / "classifier.pt")
    save_history(history, out / "history.csv")
    best = min(history, key=lambda e: e.val_loss)
    click.echo(f"best val loss {best.val_loss:.4f} at epoch {best.epoch}")
    write_manifest(
        out_dir,
        RunManifest(
            "train-classifier",
            asdict(config) | {"groups": groups, "weights": weights},
            seeds=[seed],
            inputs=[str(cache_dir)],
            outputs=[str(out / "classifier.pt")],
            duration_s=time.monotonic() - started,
        ),
    )


def _parse_groups(value) -> tuple:
    if isinstance(value, str):
        value = value.split(":")
    return tuple(ZoomGroup(g) for g in value)


def _grid_from_config(cfg: dict) -> tuple:
    """Build (configs, settings) from a YAML grid description."""
    train_cfg = TrainConfig(**_resolve(asdict(TrainConfig()), cfg.get("train", {}), {}))
    seeds = tuple(cfg.get("seeds", [0]))
    split_mode = cfg.get("split_mode", "rotating_test")
    settings_cfg = cfg.get("runner", {})
    singan_cfg = SinGANConfig(
        **_resolve(asdict(RunnerSettings().singan_config), cfg.get("singan", {}), {})
    )
    settings = RunnerSettings(
        n_folds=settings_cfg.get("n_folds", 3),
        healthy_per_record=settings_cfg.get("healthy_per_record", 3),
        split_seed=settings_cfg.get("split_seed", 0),
        weights=settings_cfg.get("weights", "auto"),
        singan_config=singan_cfg,
        singan_source_seed=settings_cfg.get("singan_source_seed", 7),
    )
    if "cells" not in cfg:
        return default_shift_grid(train_cfg, seeds, split_mode), settings
    configs = []
    for cell in cfg["cells"]:
        aug_cfg = cell.get("augmentation", {})
        configs.append(
            ExperimentConfig(
                name=cell["name"],
                train_groups=_parse_groups(cell.get("train_groups", "G1")),
                test_groups=_parse_groups(cell.get("test_groups", "G1")),
                augmentation=Augmentation(
                    kind=aug_cfg.get("kind", "none"),
                    n_models=aug_cfg.get("n_models", 0),
                    source_image_ids=tuple(aug_cfg.get("source_image_ids", ())),
                ),
                crop_probe=cell.get("crop_probe", False),
                split_mode=cell.get("split_mode", split_mode),
                seeds=tuple(cell.get("seeds", seeds)),
                train_config=train_cfg,
            )
        )
    return configs, settings


@main.command("run-experiment")
@click.option("--manifest", "manifest_csv", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
@click.option("--workers", type=int, default=1, show_default=True)
def cmd_run_experiment(manifest_csv, out_dir, config_file, workers):
    """Run (or resume) a grid of train/test cells and write results.csv."""
    started = time.monotonic()
    records = load_manifest(manifest_csv)
    configs, settings = _grid_from_config(_load_config_file(config_file))
    runner = ExperimentRunner(records, out_dir, settings=settings)
    failures = []
    reports = []
    for config in configs:
        try:
            reports.append(runner.run_cell(config))
        except ZoomshiftError as exc:
            failures.append(f"{config.name}: {exc}")
    runner.write_results_csv(reports)
    for report in reports:
        acc = report.overall_accuracy
        auc = report.auc_per_class[ClassLabel.MALIGNANT]
        click.echo(
            f"{report.cell.get('name', ''):>16}  acc={acc.mean:.3f}±{acc.sd:.3f}  "
            f"auc_malignant={auc.mean:.3f}±{auc.sd:.3f}"
        )
    for line in failures:
        click.echo(f"failed cell: {line}", err=True)
    write_manifest(
        out_dir,
        RunManifest(
            "run-experiment",
            {"config_file": str(config_file), "workers": workers, "cells": len(configs)},
            seeds=sorted({s for c in configs for s in c.seeds}),
            inputs=[str(manifest_csv)],
            outputs=[str(Path(out_dir) / "results.csv")],
            duration_s=time.monotonic() - started,
        ),
    )
    if failures:
        sys.exit(1)


@main.command("report")
@click.option("--results", "results_csv", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def cmd_report(results_csv, out_dir):
    """Render the results table and a malignant-AUC bar plot."""
    import csv as _csv

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(results_csv) as fh:
        rows = list(_csv.DictReader(fh))
    if not rows:
        click.echo("error: empty results file", err=True)
        sys.exit(1)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    widths = {"cell": 18, "train_groups": 12, "test_groups": 12}
    click.echo(f"{'cell':>18} {'train':>12} {'test':>12} {'acc':>7} {'auc_mal':>8}")
    for row in rows:
        click.echo(
            f"{row['cell']:>18} {row['train_groups']:>12} {row['test_groups']:>12} "
            f"{float(row['accuracy_mean']):7.3f} {float(row['auc_malignant_mean']):8.3f}"
        )
    names = [r["cell"] for r in rows]
    means = [float(r["auc_malignant_mean"]) for r in rows]
    sds = [float(r["auc_malignant_sd"]) for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, 0.8 * len(rows)), 4))
    ax.bar(range(len(rows)), means, yerr=sds, capsize=3)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(names, rotation=45, ha="right")
    ax.set_ylabel("malignant OvR AUC")
    ax.set_ylim(0, 1.05)
    fig.tight_layout()
    plot_path = out / "auc_malignant.png"
    fig.savefig(plot_path, dpi=120)
    plt.close(fig)
    click.echo(f"plot: {plot_path}")


if __name__ == "__main__":
    main()
