"""Synthetic labeled tabular streams with controllable difficulty.

Numeric features are class-conditional Gaussians whose means differ by a
configurable separation (Euclidean distance between class centers).
Categorical features draw tokens whose frequencies tilt with the class
by an amount that also scales with the separation, so a separation of 0
carries no signal anywhere.  Rows get a sequential time index; an
optional drift shifts every numeric mean from a given onset onward.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import CATEGORICAL, Dataset, FeatureSchema, NUMERIC


class SynthError(ValueError):
    """Raised for invalid generator specs."""

CATEGORY_TOKENS = ("a", "b", "c", "d", "e")


@dataclass(frozen=True)
class SynthSpec:
    n_rows: int
    n_numeric: int = 8
    n_categorical: int = 2
    pos_fraction: float = 0.5
    class_separation: float = 2.0
    missing_rate: float = 0.0
    drift_onset: Optional[int] = None
    drift_magnitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_rows < 1:
            raise SynthError("n_rows must be positive")
        if self.n_numeric + self.n_categorical < 1:
            raise SynthError("need at least one feature column")
        if not 0.0 < self.pos_fraction < 1.0:
            raise SynthError("pos_fraction must be in (0, 1)")
        if self.class_separation < 0.0:
            raise SynthError("class_separation must be >= 0")
        if not 0.0 <= self.missing_rate <= 1.0:
            raise SynthError("missing_rate must be in [0, 1]")


def synth_schema(spec: SynthSpec) -> FeatureSchema:
    cols = [(f"num{j}", NUMERIC) for j in range(spec.n_numeric)]
    cols += [(f"cat{j}", CATEGORICAL) for j in range(spec.n_categorical)]
    return FeatureSchema(tuple(cols), "label", "t")


def _token_probs(skew: float) -> np.ndarray:
    """Geometric-ish tilt over the token alphabet; skew 0 is uniform."""
    ranks = np.arange(len(CATEGORY_TOKENS), dtype=np.float64)
    weights = np.exp(-skew * ranks)
    return weights / weights.sum()


def synth_generate(spec: SynthSpec) -> Dataset:
    """Deterministic dataset for a spec; same spec, same bytes."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_rows
    n_pos = int(round(n * spec.pos_fraction))

    labels = np.zeros(n, dtype=np.int8)
    pos_rows = rng.choice(n, size=n_pos, replace=False)
    labels[pos_rows] = 1

    # numeric class centers a fixed Euclidean distance apart
    if spec.n_numeric > 0:
        shift = spec.class_separation / np.sqrt(spec.n_numeric)
    columns: list[np.ndarray] = []
    for _ in range(spec.n_numeric):
        col = rng.normal(size=n)
        col[labels == 1] += shift
        columns.append(col)

    # categorical tokens: negatives uniform, positives tilted with separation
    pos_probs = _token_probs(0.3 * spec.class_separation)
    neg_probs = _token_probs(0.0)
    tokens = np.asarray(CATEGORY_TOKENS, dtype=object)
    for _ in range(spec.n_categorical):
        col = np.empty(n, dtype=object)
        pos_mask = labels == 1
        col[pos_mask] = rng.choice(tokens, size=int(pos_mask.sum()), p=pos_probs)
        col[~pos_mask] = rng.choice(tokens, size=int((~pos_mask).sum()), p=neg_probs)
        columns.append(col)

    if spec.drift_onset is not None and spec.drift_magnitude != 0.0:
        for j in range(spec.n_numeric):
            columns[j][spec.drift_onset:] += spec.drift_magnitude

    if spec.missing_rate > 0.0:
        for j, col in enumerate(columns):
            holes = rng.random(n) < spec.missing_rate
            if j < spec.n_numeric:
                col[holes] = np.nan
            else:
                col[holes] = None

    return Dataset(
        synth_schema(spec),
        columns,
        labels,
        np.arange(n, dtype=np.int64),
    )
