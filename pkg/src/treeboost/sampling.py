"""Resampling transforms that move a training set toward a target class ratio.

Every output row is a copy of a real input row; over-sampling duplicates
rows uniformly with replacement, never synthesizing cells.  The
size-preserving strategy under-samples the majority and over-samples the
minority at once so the output row count equals the input's.  These
transforms are meant for training partitions only; evaluation data must
keep its original distribution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset

UNDER = "under"
OVER = "over"
COMBINED_PRESERVE_SIZE = "combined_preserve_size"


class SamplingError(ValueError):
    """Raised for invalid sampling inputs."""


@dataclass(frozen=True)
class SamplingPlan:
    strategy: str = COMBINED_PRESERVE_SIZE
    target_pos_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in (UNDER, OVER, COMBINED_PRESERVE_SIZE):
            raise SamplingError(f"unknown strategy {self.strategy!r}")
        if not 0.0 < self.target_pos_fraction < 1.0:
            raise SamplingError("target_pos_fraction must be in (0, 1)")


def _class_indices(data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    pos = np.flatnonzero(data.labels == 1)
    neg = np.flatnonzero(data.labels == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise SamplingError("sampling requires both classes present")
    return pos, neg


def plan_indices(data: Dataset, plan: SamplingPlan) -> np.ndarray:
    """Source row indices realizing the plan, in original row order.

    Duplicated rows repeat their source index; sorting by source position
    keeps copies adjacent to their originals so a time index stays sorted.
    """
    pos, neg = _class_indices(data)
    f = plan.target_pos_fraction
    rng = np.random.default_rng(plan.seed)

    if plan.strategy == UNDER:
        # shrink whichever class is over target, keep the other whole
        if len(pos) / data.n_rows > f:
            n_pos = int(round(len(neg) * f / (1.0 - f)))
            pos = rng.choice(pos, size=min(n_pos, len(pos)), replace=False)
        else:
            n_neg = int(round(len(pos) * (1.0 - f) / f))
            neg = rng.choice(neg, size=min(n_neg, len(neg)), replace=False)
        chosen = np.concatenate([pos, neg])
    elif plan.strategy == OVER:
        # duplicate whichever class is under target until the ratio holds
        if len(pos) / data.n_rows < f:
            n_pos = int(round(len(neg) * f / (1.0 - f)))
            extra = rng.choice(pos, size=max(0, n_pos - len(pos)), replace=True)
            chosen = np.concatenate([pos, extra, neg])
        else:
            n_neg = int(round(len(pos) * (1.0 - f) / f))
            extra = rng.choice(neg, size=max(0, n_neg - len(neg)), replace=True)
            chosen = np.concatenate([pos, neg, extra])
    else:  # combined, size preserved
        n = data.n_rows
        n_pos = int(round(n * f))
        n_neg = n - n_pos
        chosen_pos = _resize_class(pos, n_pos, rng)
        chosen_neg = _resize_class(neg, n_neg, rng)
        chosen = np.concatenate([chosen_pos, chosen_neg])

    return np.sort(chosen, kind="stable")


def _resize_class(idx: np.ndarray, wanted: int, rng: np.random.Generator) -> np.ndarray:
    """Under-sample without replacement or top up with real-row duplicates."""
    if wanted <= len(idx):
        return rng.choice(idx, size=wanted, replace=False)
    extra = rng.choice(idx, size=wanted - len(idx), replace=True)
    return np.concatenate([idx, extra])


def resample(data: Dataset, plan: SamplingPlan) -> Dataset:
    return data.take(plan_indices(data, plan))


def random_under_sample(train: Dataset, plan: SamplingPlan) -> Dataset:
    return resample(train, SamplingPlan(UNDER, plan.target_pos_fraction, plan.seed))


def random_over_sample(train: Dataset, plan: SamplingPlan) -> Dataset:
    return resample(train, SamplingPlan(OVER, plan.target_pos_fraction, plan.seed))


def balance_preserve_size(train: Dataset, plan: SamplingPlan) -> Dataset:
    return resample(
        train, SamplingPlan(COMBINED_PRESERVE_SIZE, plan.target_pos_fraction, plan.seed)
    )


def multiplicities(indices: np.ndarray, n_rows: int) -> np.ndarray:
    """How many times each original row appears in a sampled index list."""
    return np.bincount(indices, minlength=n_rows)


def write_audit_log(indices: np.ndarray, n_rows: int, path: str | Path) -> None:
    """CSV of original row id -> multiplicity for a sampling run."""
    counts = multiplicities(indices, n_rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row_id", "multiplicity"])
        for row_id, count in enumerate(counts):
            writer.writerow([row_id, int(count)])
