"""Patient-wise train/val/test splitting."""
from __future__ import annotations

from collections import Counter
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import TooFewPatients
from .records import MammogramRecord, SplitAssignment


def make_splits(
    records: Sequence[MammogramRecord],
    n_folds: int = 3,
    fractions: tuple[float, float, float] = (0.63, 0.27, 0.10),
    mode: str = "rotating_test",
    rng_seed: int = 0,
    sample_counts: Optional[Mapping[str, int]] = None,
) -> list[SplitAssignment]:
    """Greedy patient-level bin packing toward (train, val, test) fractions.

    ``rotating_test`` carves n_folds disjoint test chunks (each patient tests
    in at most one fold); ``fixed_test`` reuses a single test chunk in every
    fold while reshuffling train/val. Fractions are weighted by per-patient
    sample counts (defaults to the number of records per patient).
    """
    if mode not in ("rotating_test", "fixed_test"):
        raise ValueError(f"unknown split mode {mode!r}")
    for record in records:
        if not record.patient_id:
            raise ValueError("every record needs a patient_id")
    weights = dict(sample_counts) if sample_counts is not None else dict(
        Counter(r.patient_id for r in records)
    )
    patients = sorted(weights)
    if len(patients) < max(n_folds, 3):
        raise TooFewPatients(f"{len(patients)} patients cannot fill {n_folds} folds")

    strata = _patient_strata(records)
    rng = np.random.default_rng(rng_seed)
    order = _stratified_order(patients, strata, rng)
    total = sum(weights[p] for p in order)
    frac_train, frac_val, frac_test = fractions
    test_target = frac_test * total

    if mode == "rotating_test":
        chunks, rest = _carve_chunks(order, weights, n_folds, test_target)
    else:
        chunks_one, rest = _carve_chunks(order, weights, 1, test_target)
        chunks = [chunks_one[0]] * n_folds
    _ensure_chunk_coverage(chunks[: 1 if mode == "fixed_test" else n_folds], rest, strata)

    splits = []
    for fold in range(n_folds):
        test_patients = set(chunks[fold])
        if mode == "rotating_test":
            pool = rest + [p for i, c in enumerate(chunks) if i != fold for p in c]
        else:
            pool = list(rest)
        fold_rng = np.random.default_rng(rng_seed + 1000 * (fold + 1))
        pool = _stratified_order(sorted(pool), strata, fold_rng)
        pool_weight = sum(weights[p] for p in pool)
        val_target = pool_weight * frac_val / (frac_train + frac_val)
        val_patients, train_patients = _greedy_take(pool, weights, val_target)
        assignment = {p: "test" for p in test_patients}
        assignment.update({p: "val" for p in val_patients})
        assignment.update({p: "train" for p in train_patients})
        splits.append(SplitAssignment(fold_id=fold, assignment=assignment))
    return splits


_STRATUM_PRIORITY = {"malignant": 2, "benign": 1}


def _patient_strata(records: Iterable) -> dict:
    """Worst biopsy label per patient, used to stratify the shuffle order."""
    strata: dict = {}
    for record in records:
        label = getattr(record, "biopsy_label", None)
        value = getattr(label, "value", "none")
        prio = _STRATUM_PRIORITY.get(value, 0)
        pid = record.patient_id
        if prio >= _STRATUM_PRIORITY.get(strata.get(pid, "none"), 0):
            strata[pid] = value if prio else strata.get(pid, "none")
    return strata


def _stratified_order(patients: list, strata: Mapping, rng: np.random.Generator) -> list:
    """Shuffle within each class stratum, then interleave the strata evenly so
    any contiguous chunk of the order is approximately class-proportional."""
    groups: dict = {}
    for patient in patients:
        groups.setdefault(strata.get(patient, "none"), []).append(patient)
    keyed = []
    for name in sorted(groups):
        members = groups[name]
        members = [members[i] for i in rng.permutation(len(members))]
        # centered stride keeps small strata evenly spaced through the order
        for i, patient in enumerate(members):
            keyed.append(((i + 0.5) / len(members), patient))
    return [patient for _, patient in sorted(keyed)]


def _ensure_chunk_coverage(chunks: list, rest: list, strata: Mapping) -> None:
    """Swap patients between each test chunk and the train/val pool so every
    chunk contains each class stratum, whenever the pool has spares."""
    for chunk in chunks:
        present = {strata.get(p, "none") for p in chunk}
        pool_counts = Counter(strata.get(p, "none") for p in rest)
        for name in sorted(set(strata.values()) - present):
            if pool_counts[name] <= 1:
                continue  # keep at least one in train/val
            donor = next(p for p in rest if strata.get(p, "none") == name)
            surplus = Counter(strata.get(p, "none") for p in chunk).most_common(1)[0][0]
            out = next(p for p in chunk if strata.get(p, "none") == surplus)
            chunk[chunk.index(out)] = donor
            rest[rest.index(donor)] = out
            pool_counts[name] -= 1
            pool_counts[surplus] += 1


def _greedy_take(order: list, weights: Mapping, target: float) -> tuple[list, list]:
    """Walk the shuffled order, taking patients while closer to target than stopping."""
    taken, remainder, acc = [], [], 0.0
    for patient in order:
        w = weights[patient]
        if not taken or abs(acc + w - target) <= abs(acc - target):
            taken.append(patient)
            acc += w
        else:
            remainder.append(patient)
    # never swallow the whole pool
    if not remainder and len(taken) > 1:
        remainder.append(taken.pop())
    return taken, remainder


def _carve_chunks(order, weights, n_chunks, target):
    chunks = []
    rest = list(order)
    for _ in range(n_chunks):
        taken, rest = _greedy_take(rest, weights, target)
        chunks.append(taken)
    return chunks, rest


def partition_fractions(
    split: SplitAssignment, sample_counts: Mapping[str, int]
) -> dict[str, float]:
    """Observed sample fraction per partition under the given per-patient counts."""
    totals = {"train": 0, "val": 0, "test": 0}
    for patient, part in split.assignment.items():
        totals[part] += sample_counts.get(patient, 0)
    grand = sum(totals.values())
    return {k: v / grand for k, v in totals.items()} if grand else totals
