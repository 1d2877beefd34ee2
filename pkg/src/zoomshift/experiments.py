"""Experiment orchestration: shift grids, augmentation studies and ensembles."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .backbone import load_backbone
from .classifier import (
    TrainConfig,
    build_classifier,
    predict_labels,
    predict_proba,
    train_classifier,
)
from .errors import ConfigError, IncompatibleMembers, NothingToBalance
from .metrics import (
    RESULTS_CSV_HEADER,
    FoldAggregate,
    MetricsReport,
    accuracy,
    aggregate_folds,
    report_csv_row,
    roc_auc_ovr,
)
from .patches import lesion_patches, patch_from_array, sample_healthy_patches
from .records import (
    PATCH_SIZE,
    BiopsyLabel,
    CLASS_ORDER,
    ClassLabel,
    LesionPatch,
    MammogramRecord,
    ZoomGroup,
    synthetic_provenance,
)
from .sampling import weighted_sampler_weights
from .singan import SinGANConfig, train_singan
from .splits import make_splits


@dataclass(frozen=True)
class Augmentation:
    kind: str = "none"  # none | singan | oversample | combined
    n_models: int = 0
    source_image_ids: tuple = ()

    def __post_init__(self):
        if self.kind not in ("none", "singan", "oversample", "combined"):
            raise ConfigError(f"unknown augmentation kind {self.kind!r}")


@dataclass
class ExperimentConfig:
    """One train/test/augmentation cell of the result grids."""

    name: str
    train_groups: tuple = (ZoomGroup.G1,)
    test_groups: tuple = (ZoomGroup.G1,)
    augmentation: Augmentation = field(default_factory=Augmentation)
    target_balance: bool = True
    crop_probe: bool = False
    split_mode: str = "rotating_test"
    seeds: tuple = (0,)
    train_config: TrainConfig = field(default_factory=TrainConfig)

    def fingerprint(self) -> str:
        payload = {
            "train_groups": [g.value for g in self.train_groups],
            "test_groups": [g.value for g in self.test_groups],
            "augmentation": asdict(self.augmentation),
            "target_balance": self.target_balance,
            "crop_probe": self.crop_probe,
            "split_mode": self.split_mode,
            "seeds": list(self.seeds),
            "train_config": asdict(self.train_config),
        }
        blob = json.dumps(payload, sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()

    def describe(self) -> dict:
        return {
            "name": self.name,
            "train_groups": ":".join(g.value for g in self.train_groups),
            "test_groups": ":".join(g.value for g in self.test_groups),
            "augmentation": self.augmentation.kind,
            "n_models": self.augmentation.n_models,
            "crop_probe": self.crop_probe,
            "split_mode": self.split_mode,
        }


def assemble_augmented_trainset(
    base_patches: Sequence[LesionPatch],
    singan_models: Sequence[tuple],
    target_class: ClassLabel = ClassLabel.MALIGNANT,
    rng_seed: int = 0,
) -> list[LesionPatch]:
    """Balance the lesion classes with synthetic samples from n single-image models.

    Each (model_id, model) pair contributes an equal share (earlier models by
    id order take the remainder). Synthetic patches carry zoom group G1 and a
    synthetic provenance; a non-minority target class is a warned no-op.
    """
    if len(singan_models) == 0:
        raise ValueError("at least one trained single-image model is required")
    counts = {cls: 0 for cls in (ClassLabel.BENIGN, ClassLabel.MALIGNANT)}
    for patch in base_patches:
        if patch.class_label in counts:
            counts[patch.class_label] += 1
    deficit = max(counts.values()) - counts[target_class]
    if deficit <= 0:
        warnings.warn(
            f"target class {target_class.value} is not the minority; nothing to balance",
            NothingToBalance,
        )
        return list(base_patches)

    ordered = sorted(singan_models, key=lambda pair: pair[0])
    n_models = len(ordered)
    share = deficit // n_models
    remainder = deficit % n_models
    out = list(base_patches)
    for position, (model_id, model) in enumerate(ordered):
        contribution = share + (1 if position < remainder else 0)
        if contribution == 0:
            continue
        samples = model.sample(contribution, rng_seed=rng_seed * 100003 + position)
        for sample in samples:
            out.append(
                patch_from_array(
                    sample,
                    ZoomGroup.G1,
                    target_class,
                    source_image_id=model.training_image_id or model_id,
                    patient_id=f"synthetic:{model_id}",
                    provenance=synthetic_provenance(model_id),
                )
            )
    return out


def oversample_images(
    image_ids: Sequence[str],
    base_patches: Sequence[LesionPatch],
    target_class: ClassLabel = ClassLabel.MALIGNANT,
    pool: Optional[Sequence[LesionPatch]] = None,
) -> list[LesionPatch]:
    """Duplicate the listed real patches round-robin until the classes balance.

    `pool` holds the candidate patches to duplicate (defaults to matching
    patches in the base set); one patch per listed image id is used.
    """
    if len(image_ids) == 0:
        raise ValueError("image_ids must be nonempty")
    source = pool if pool is not None else base_patches
    by_image = {}
    for patch in source:
        if patch.class_label == target_class and patch.source_image_id in image_ids:
            by_image.setdefault(patch.source_image_id, patch)
    missing = [i for i in image_ids if i not in by_image]
    if missing:
        raise ValueError(f"no {target_class.value} patches found for images: {missing}")

    counts = {cls: 0 for cls in (ClassLabel.BENIGN, ClassLabel.MALIGNANT)}
    for patch in base_patches:
        if patch.class_label in counts:
            counts[patch.class_label] += 1
    deficit = max(counts.values()) - counts[target_class]
    if deficit <= 0:
        warnings.warn(
            f"target class {target_class.value} is not the minority; nothing to balance",
            NothingToBalance,
        )
        return list(base_patches)

    out = list(base_patches)
    ids = list(image_ids)
    for k in range(deficit):
        template = by_image[ids[k % len(ids)]]
        out.append(
            LesionPatch(
                pixels=template.pixels,
                zoom_group=template.zoom_group,
                class_label=template.class_label,
                source_image_id=template.source_image_id,
                patient_id=template.patient_id,
                provenance=f"oversample:{template.source_image_id}",
            )
        )
    return out


def random_resized_crop(
    patch: LesionPatch,
    scale_range: tuple = (0.5, 1.0),
    aspect_range: tuple = (3.0 / 4.0, 4.0 / 3.0),
    rng_seed: int = 0,
    return_geometry: bool = False,
):
    """Random sub-rectangle with area fraction and aspect ratio in the given
    ranges, resized back to 224x224; deterministic per seed."""
    s_lo, s_hi = scale_range
    a_lo, a_hi = aspect_range
    if not (0.0 < s_lo <= s_hi <= 1.0) or not (0.0 < a_lo <= a_hi):
        raise ConfigError(f"infeasible crop ranges scale={scale_range} aspect={aspect_range}")
    rng = np.random.default_rng(rng_seed)
    n_rows, n_cols = patch.pixels.shape
    area = n_rows * n_cols
    height = width = None
    for _ in range(20):
        frac = rng.uniform(s_lo, s_hi)
        aspect = math.exp(rng.uniform(math.log(a_lo), math.log(a_hi)))
        h = int(round(math.sqrt(frac * area / aspect)))
        w = int(round(math.sqrt(frac * area * aspect)))
        if 0 < h <= n_rows and 0 < w <= n_cols and s_lo <= (h * w) / area <= s_hi:
            height, width = h, w
            break
    if height is None:
        side = int(math.floor(math.sqrt(s_hi * area)))
        height = width = min(side, n_rows, n_cols)
        if not (s_lo <= (height * width) / area <= s_hi):
            raise ConfigError(f"crop ranges scale={scale_range} aspect={aspect_range} infeasible")
    top = int(rng.integers(0, n_rows - height + 1))
    left = int(rng.integers(0, n_cols - width + 1))
    crop = patch.pixels[top : top + height, left : left + width]
    cropped = patch_from_array(
        crop,
        patch.zoom_group,
        patch.class_label,
        patch.source_image_id,
        patch.patient_id,
        provenance=patch.provenance,
    )
    if return_geometry:
        return cropped, (top, left, height, width)
    return cropped


class EnsemblePredictor:
    """Mean-of-scores ensemble over independently trained classifiers."""

    def __init__(self, members: Sequence):
        if len(members) == 0:
            raise ValueError("ensemble needs at least one member")
        first = members[0].class_order
        for member in members:
            if member.class_order != first:
                raise IncompatibleMembers("members disagree on class order")
        self.members = list(members)
        self.class_order = first

    def predict_proba(self, patches, feature_cache: Optional[dict] = None) -> np.ndarray:
        return ensemble_predict(self, patches, feature_cache=feature_cache)


def ensemble_predict(
    ensemble: EnsemblePredictor, patches, feature_cache: Optional[dict] = None
) -> np.ndarray:
    """Arithmetic mean of the members' score vectors.

    Accumulated in float64 so the result is member-order invariant well below
    any decision-relevant scale.
    """
    scores = [
        predict_proba(member, patches, feature_cache=feature_cache).astype(np.float64)
        for member in ensemble.members
    ]
    return np.mean(scores, axis=0)


@dataclass
class RunnerSettings:
    n_folds: int = 3
    healthy_per_record: int = 3
    split_seed: int = 0
    healthy_seed: int = 101
    weights: str = "auto"  # backbone weights mode
    # Reduced-size generators for augmentation: smaller pyramids train an
    # order of magnitude faster, and the softer reconstruction anchor
    # (alpha=10) keeps samples diverse enough to help the balanced classes.
    singan_config: SinGANConfig = field(
        default_factory=lambda: SinGANConfig(
            max_dim=48, epochs=10, steps_per_epoch=25, alpha=10.0, lr=5e-4
        )
    )
    singan_source_seed: int = 7


class ExperimentRunner:
    """Shared data, splits, features and generative models for a grid of cells."""

    def __init__(
        self,
        records: Sequence[MammogramRecord],
        workdir,
        settings: Optional[RunnerSettings] = None,
        backbone=None,
    ):
        self.records = list(records)
        self.workdir = Path(workdir)
        (self.workdir / "cells").mkdir(parents=True, exist_ok=True)
        self.settings = settings or RunnerSettings()
        self.backbone = backbone if backbone is not None else load_backbone(self.settings.weights)
        self.feature_cache: dict = {}
        self._patches: Optional[list] = None
        self._splits: dict = {}
        self._singan_models: dict = {}

    # ---------- data preparation ----------

    @property
    def patches(self) -> list[LesionPatch]:
        if self._patches is None:
            out = []
            for idx, record in enumerate(sorted(self.records, key=lambda r: r.image_id)):
                if record.biopsy_label != BiopsyLabel.NONE:
                    out.extend(lesion_patches(record))
                else:
                    out.extend(
                        sample_healthy_patches(
                            record,
                            self.settings.healthy_per_record,
                            rng_seed=self.settings.healthy_seed + idx,
                        )
                    )
            self._patches = out
        return self._patches

    def splits(self, mode: str):
        if mode not in self._splits:
            counts: dict = {}
            for patch in self.patches:
                counts[patch.patient_id] = counts.get(patch.patient_id, 0) + 1
            self._splits[mode] = make_splits(
                self.records,
                n_folds=self.settings.n_folds,
                mode=mode,
                rng_seed=self.settings.split_seed,
                sample_counts=counts,
            )
        return self._splits[mode]

    def select_singan_sources(self, n_models: int, mode: str) -> list[LesionPatch]:
        """Uniform seeded draw of malignant G1 patches from never-test patients."""
        test_patients = set()
        for split in self.splits(mode):
            test_patients |= split.patients("test")
        eligible = [
            p
            for p in self.patches
            if p.class_label == ClassLabel.MALIGNANT
            and p.zoom_group == ZoomGroup.G1
            and p.provenance == "real"
            and p.patient_id not in test_patients
        ]
        eligible.sort(key=lambda p: p.source_image_id)
        if len(eligible) < n_models:
            raise ValueError(f"only {len(eligible)} eligible source patches for {n_models} models")
        rng = np.random.default_rng(self.settings.singan_source_seed)
        chosen = rng.choice(len(eligible), size=n_models, replace=False)
        return [eligible[i] for i in sorted(chosen)]

    def singan_model(self, source: LesionPatch):
        model_id = source.source_image_id
        if model_id not in self._singan_models:
            self._singan_models[model_id] = train_singan(
                source.pixels, self.settings.singan_config, image_id=model_id
            )
        return model_id, self._singan_models[model_id]

    # ---------- cell execution ----------

    def _cell_path(self, config: ExperimentConfig) -> Path:
        return self.workdir / "cells" / f"{config.fingerprint()}.json"

    def run_cell(self, config: ExperimentConfig) -> MetricsReport:
        """Execute one grid cell (or load its cached report)."""
        path = self._cell_path(config)
        if path.is_file():
            report = MetricsReport.from_json_dict(json.loads(path.read_text()))
            report.cell = config.describe()
            return report

        accs, aucs = [], {cls: [] for cls in CLASS_ORDER}
        for seed in config.seeds:
            for split in self.splits(config.split_mode):
                acc, auc = self._run_one(config, split, seed)
                accs.append(acc)
                for cls in CLASS_ORDER:
                    aucs[cls].append(auc[cls])
        report = MetricsReport(
            overall_accuracy=aggregate_folds(accs),
            auc_per_class={cls: aggregate_folds(vals) for cls, vals in aucs.items()},
            n_folds=len(accs),
            config_fingerprint=config.fingerprint(),
            cell=config.describe(),
        )
        path.write_text(json.dumps(report.to_json_dict(), indent=2, sort_keys=True))
        return report

    def _run_one(self, config: ExperimentConfig, split, seed: int):
        part = split.assignment
        train_set = [
            p
            for p in self.patches
            if part.get(p.patient_id) == "train" and p.zoom_group in config.train_groups
        ]
        val_set = [
            p
            for p in self.patches
            if part.get(p.patient_id) == "val" and p.zoom_group in config.train_groups
        ]
        test_set = [
            p
            for p in self.patches
            if part.get(p.patient_id) == "test" and p.zoom_group in config.test_groups
        ]

        aug = config.augmentation
        augmented = list(train_set)
        if aug.kind in ("singan", "combined") and config.target_balance:
            sources = self._resolve_sources(aug, config.split_mode)
            models = [self.singan_model(src) for src in sources]
            augmented = assemble_augmented_trainset(
                augmented, models, rng_seed=seed * 10007 + split.fold_id
            )
        if aug.kind in ("oversample", "combined") and config.target_balance:
            sources = self._resolve_sources(aug, config.split_mode)
            pool = [src for src in sources]
            augmented = oversample_images(
                [src.source_image_id for src in sources], augmented, pool=pool
            )

        train_labels = [p.class_label for p in augmented]
        val_labels = [p.class_label for p in val_set]
        if aug.kind == "none":
            train_w = weighted_sampler_weights(train_labels)
        else:
            train_w = None
        val_w = weighted_sampler_weights(val_labels)

        model = build_classifier(
            3, backbone=self.backbone, head_seed=seed * 7919 + split.fold_id
        )
        model, _ = train_classifier(
            model,
            augmented,
            val_set,
            config.train_config,
            sampler_weights=train_w,
            val_sampler_weights=val_w,
            rng_seed=seed * 104729 + split.fold_id,
            feature_cache=self.feature_cache,
        )

        eval_set = test_set
        if config.crop_probe:
            eval_set = [
                random_resized_crop(p, rng_seed=seed * 31337 + split.fold_id * 1009 + i)
                for i, p in enumerate(test_set)
            ]
        scores = predict_proba(model, eval_set, feature_cache=self.feature_cache)
        true = [p.class_label for p in eval_set]
        acc = accuracy(predict_labels(scores, model.class_order), true)
        auc = roc_auc_ovr(scores, true, model.class_order)
        return acc, auc

    def _resolve_sources(self, aug: Augmentation, mode: str) -> list[LesionPatch]:
        if aug.source_image_ids:
            by_id = {}
            for p in self.patches:
                if (
                    p.zoom_group == ZoomGroup.G1
                    and p.class_label == ClassLabel.MALIGNANT
                    and p.provenance == "real"
                ):
                    by_id.setdefault(p.source_image_id, p)
            missing = [i for i in aug.source_image_ids if i not in by_id]
            if missing:
                raise ValueError(f"unknown source image ids: {missing}")
            return [by_id[i] for i in aug.source_image_ids]
        n = max(aug.n_models, 1)
        return self.select_singan_sources(n, mode)

    # ---------- grids ----------

    def run_grid(self, configs: Sequence[ExperimentConfig], workers: int = 1):
        """Run every cell (resuming from cached reports) and write results.csv."""
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                reports = list(pool.map(self.run_cell, configs))
        else:
            reports = [self.run_cell(c) for c in configs]
        self.write_results_csv(reports)
        return reports

    def write_results_csv(self, reports: Sequence[MetricsReport]) -> Path:
        path = self.workdir / "results.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RESULTS_CSV_HEADER)
            for report in reports:
                writer.writerow(report_csv_row(report))
        return path

    # ---------- ensembles ----------

    def ensemble_members(self, config: ExperimentConfig) -> list:
        """One trained classifier per fold; singan + oversample regimes for combined."""
        if config.augmentation.kind == "combined":
            kinds = ("singan", "oversample")
        else:
            kinds = (config.augmentation.kind,)
        members = []
        for kind in kinds:
            sub = ExperimentConfig(
                name=f"{config.name}-{kind}",
                train_groups=config.train_groups,
                test_groups=config.test_groups,
                augmentation=Augmentation(
                    kind=kind,
                    n_models=config.augmentation.n_models,
                    source_image_ids=config.augmentation.source_image_ids,
                ),
                target_balance=config.target_balance,
                crop_probe=config.crop_probe,
                split_mode=config.split_mode,
                seeds=config.seeds,
                train_config=config.train_config,
            )
            for split in self.splits(config.split_mode):
                members.append(self._train_member(sub, split, config.seeds[0]))
        return members

    def _train_member(self, config: ExperimentConfig, split, seed: int):
        part = split.assignment
        train_set = [
            p
            for p in self.patches
            if part.get(p.patient_id) == "train" and p.zoom_group in config.train_groups
        ]
        val_set = [
            p
            for p in self.patches
            if part.get(p.patient_id) == "val" and p.zoom_group in config.train_groups
        ]
        aug = config.augmentation
        augmented = list(train_set)
        if aug.kind == "singan" and config.target_balance:
            sources = self._resolve_sources(aug, config.split_mode)
            models = [self.singan_model(src) for src in sources]
            augmented = assemble_augmented_trainset(
                augmented, models, rng_seed=seed * 10007 + split.fold_id
            )
        elif aug.kind == "oversample" and config.target_balance:
            sources = self._resolve_sources(aug, config.split_mode)
            augmented = oversample_images(
                [src.source_image_id for src in sources], augmented, pool=sources
            )
        train_labels = [p.class_label for p in augmented]
        train_w = weighted_sampler_weights(train_labels) if aug.kind == "none" else None
        val_w = weighted_sampler_weights([p.class_label for p in val_set])
        model = build_classifier(3, backbone=self.backbone, head_seed=seed * 7919 + split.fold_id)
        model, _ = train_classifier(
            model,
            augmented,
            val_set,
            config.train_config,
            sampler_weights=train_w,
            val_sampler_weights=val_w,
            rng_seed=seed * 104729 + split.fold_id,
            feature_cache=self.feature_cache,
        )
        return model

    def build_ensemble(self, config: ExperimentConfig) -> EnsemblePredictor:
        return EnsemblePredictor(self.ensemble_members(config))


# ---------- canonical grids ----------


def default_shift_grid(
    train_config: Optional[TrainConfig] = None,
    seeds: tuple = (0,),
    split_mode: str = "rotating_test",
) -> list[ExperimentConfig]:
    """The seven specific train/test pairs plus the four mixed-test rows."""
    train_config = train_config or TrainConfig()
    all_groups = tuple(ZoomGroup)
    cells = []

    def cell(name, train, test):
        cells.append(
            ExperimentConfig(
                name=name,
                train_groups=train,
                test_groups=test,
                split_mode=split_mode,
                seeds=seeds,
                train_config=train_config,
            )
        )

    cell("mixed_all_all", all_groups, all_groups)
    cell("mixed_g1_all", (ZoomGroup.G1,), all_groups)
    cell("mixed_g2_all", (ZoomGroup.G2,), all_groups)
    cell("mixed_g3_all", (ZoomGroup.G3,), all_groups)
    cell("pair_g1_g1", (ZoomGroup.G1,), (ZoomGroup.G1,))
    cell("pair_g2_g2", (ZoomGroup.G2,), (ZoomGroup.G2,))
    cell("pair_g3_g3", (ZoomGroup.G3,), (ZoomGroup.G3,))
    cell("pair_g3_g1", (ZoomGroup.G3,), (ZoomGroup.G1,))
    cell("pair_g2_g1", (ZoomGroup.G2,), (ZoomGroup.G1,))
    cell("pair_g1_g3", (ZoomGroup.G1,), (ZoomGroup.G3,))
    cell("pair_g2_g3", (ZoomGroup.G2,), (ZoomGroup.G3,))
    return cells


def augmentation_study_grid(
    n_models_list: Sequence[int] = (0, 1, 2, 4),
    source_image_ids: tuple = (),
    train_config: Optional[TrainConfig] = None,
    seeds: tuple = (0,),
    split_mode: str = "rotating_test",
) -> list[ExperimentConfig]:
    """Classifier trained on G3, tested on G1, with 0/1/2/4-model augmentation."""
    train_config = train_config or TrainConfig()
    cells = []
    for n in n_models_list:
        if n == 0:
            aug = Augmentation(kind="none")
        else:
            aug = Augmentation(
                kind="singan", n_models=n, source_image_ids=tuple(source_image_ids[:n])
            )
        cells.append(
            ExperimentConfig(
                name=f"aug_singan_{n}",
                train_groups=(ZoomGroup.G3,),
                test_groups=(ZoomGroup.G1,),
                augmentation=aug,
                split_mode=split_mode,
                seeds=seeds,
                train_config=train_config,
            )
        )
    return cells


def run_shift_grid(
    runner: ExperimentRunner, configs: Optional[Sequence[ExperimentConfig]] = None, workers: int = 1
) -> list[MetricsReport]:
    return runner.run_grid(list(configs) if configs else default_shift_grid(), workers=workers)


def run_augmentation_study(
    runner: ExperimentRunner,
    n_models_list: Sequence[int] = (0, 1, 2, 4),
    train_config: Optional[TrainConfig] = None,
    seeds: tuple = (0,),
    split_mode: str = "rotating_test",
    workers: int = 1,
) -> list[MetricsReport]:
    """Table-3 style study; sources drawn once so synthetic totals match across n."""
    n_max = max(n for n in n_models_list if n > 0)
    sources = runner.select_singan_sources(n_max, split_mode)
    source_ids = tuple(p.source_image_id for p in sources)
    configs = augmentation_study_grid(
        n_models_list, source_ids, train_config, seeds, split_mode
    )
    return runner.run_grid(configs, workers=workers)
