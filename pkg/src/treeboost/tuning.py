"""Random-search hyper-parameter tuning in k-fold cross-validation.

Trials are drawn uniformly without repetition from a finite grid's cross
product, scored by held-out AUC-PR, and reported as F1 mean (std) of the
winner.  Column transforms are fitted inside each fold's training split
only, so no statistics leak from validation rows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .boosting import Ensemble, TrainConfig, fit
from .data import (
    Dataset,
    TransformState,
    apply_transforms,
    fit_transforms,
    MISSING_FILL,
)
from .metrics import confusion, pr_curve, report


class TuningError(ValueError):
    """Raised for invalid tuning requests."""


@dataclass(frozen=True)
class SearchSpace:
    """Finite per-parameter value lists searched over their cross product."""

    params: dict[str, tuple]

    def __post_init__(self):
        if not self.params:
            raise TuningError("search space needs at least one parameter")
        for name, values in self.params.items():
            if len(values) == 0:
                raise TuningError(f"empty value list for {name!r}")

    @property
    def size(self) -> int:
        return math.prod(len(v) for v in self.params.values())

    def config_at(self, index: int, base: TrainConfig) -> TrainConfig:
        """Decode a cross-product index (mixed radix, last parameter fastest)."""
        if not 0 <= index < self.size:
            raise TuningError("configuration index out of range")
        chosen = {}
        for name, values in reversed(self.params.items()):
            index, pos = divmod(index, len(values))
            chosen[name] = values[pos]
        return base.with_params(**chosen)

    def enumerate_param(self, name: str) -> tuple:
        return self.params[name]


RS_GRID = SearchSpace(
    {
        "max_depth": (3, 6, 12, 20),
        "learning_rate": (0.02, 0.1, 0.2),
        "subsample": (0.4, 0.8, 1.0),
        "colsample_bytree": (0.4, 0.6, 1.0),
        "n_trees": (100, 1000, 5000),
    }
)

SCALE_GRID = SearchSpace(
    {"scale_pos_weight": (1.0, float(75 // 25), float(95 // 5), 100.0, 1000.0, float(95 * 100 // 5))}
)


def kfold_split(
    data: Dataset, k: int, seed: int, stratified: bool = True
) -> list[np.ndarray]:
    """Disjoint, exhaustive validation folds; stratified folds keep the
    class ratio within one sample per fold."""
    if k < 2:
        raise TuningError("k must be >= 2")
    if k > data.n_rows:
        raise TuningError("k exceeds the number of rows")
    rng = np.random.default_rng(seed)
    if stratified:
        pos = np.flatnonzero(data.labels == 1)
        neg = np.flatnonzero(data.labels == 0)
        if min(len(pos), len(neg)) < k:
            raise TuningError("each class needs at least k rows for stratified folds")
        folds = [[] for _ in range(k)]
        for cls_idx in (pos, neg):
            shuffled = rng.permutation(cls_idx)
            for i, chunk in enumerate(np.array_split(shuffled, k)):
                folds[i].append(chunk)
        return [np.sort(np.concatenate(parts)) for parts in folds]
    shuffled = rng.permutation(data.n_rows)
    return [np.sort(chunk) for chunk in np.array_split(shuffled, k)]


@dataclass
class TrialRecord:
    index: int
    config: TrainConfig
    fold_auc_pr: list[float]
    fold_f1: list[float]

    @property
    def mean_auc_pr(self) -> float:
        return float(np.mean(self.fold_auc_pr))

    @property
    def mean_f1(self) -> float:
        return float(np.mean(self.fold_f1))

    @property
    def std_f1(self) -> float:
        return float(np.std(self.fold_f1))  # population std over folds


@dataclass
class CVResult:
    trials: list[TrialRecord]
    winner: TrialRecord
    k: int

    @property
    def best_config(self) -> TrainConfig:
        return self.winner.config

    def summary(self) -> str:
        return f"{self.winner.mean_f1:.2f} ({self.winner.std_f1:.2f})"

    def save_trial_log(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            param_names = sorted(
                {"max_depth", "learning_rate", "subsample", "colsample_bytree",
                 "n_trees", "scale_pos_weight", "weighted_alpha", "focal_gamma"}
            )
            writer.writerow(
                ["trial", *param_names]
                + [f"auc_pr_fold{i}" for i in range(self.k)]
                + [f"f1_fold{i}" for i in range(self.k)]
                + ["auc_pr_mean", "f1_mean", "f1_std", "winner"]
            )
            for t in self.trials:
                cfg = t.config.to_dict()
                writer.writerow(
                    [t.index, *[cfg[p] for p in param_names]]
                    + [repr(v) for v in t.fold_auc_pr]
                    + [repr(v) for v in t.fold_f1]
                    + [repr(t.mean_auc_pr), repr(t.mean_f1), repr(t.std_f1),
                       int(t is self.winner)]
                )


def f1_or_zero(labels: Sequence[int], predicted: Sequence[int]) -> float:
    """F1 at the fixed label threshold; degenerate folds count as 0."""
    rep = report(confusion(labels, predicted))
    return 0.0 if rep.f1 is None else rep.f1


def evaluate_config(
    data: Dataset,
    config: TrainConfig,
    folds: list[np.ndarray],
    missing_policy: str = MISSING_FILL,
) -> tuple[list[float], list[float]]:
    """Train on k-1 folds, score AUC-PR and F1 on the held-out fold.

    Transforms are refit on each fold's training rows, never on the
    held-out rows.
    """
    n = data.n_rows
    fold_auc: list[float] = []
    fold_f1: list[float] = []
    for val_idx in folds:
        mask = np.ones(n, dtype=bool)
        mask[val_idx] = False
        train_raw = data.take(np.flatnonzero(mask))
        val_raw = data.take(val_idx)
        state = fit_transforms(train_raw, missing_policy)
        train = apply_transforms(state, train_raw)
        val = apply_transforms(state, val_raw)
        model = fit(train, config)
        scores = model.predict_margin(val)
        fold_auc.append(pr_curve(val.labels, scores).auc)
        fold_f1.append(f1_or_zero(val.labels, model.predict_label(val)))
    return fold_auc, fold_f1


def random_search(
    data: Dataset,
    space: SearchSpace,
    n_trials: int,
    k: int,
    seed: int,
    base: Optional[TrainConfig] = None,
    missing_policy: str = MISSING_FILL,
) -> CVResult:
    """Search n_trials distinct configurations; best mean AUC-PR wins.

    Ties go to the earlier trial.  The same folds serve every trial so
    scores are comparable.
    """
    if n_trials < 1:
        raise TuningError("n_trials must be >= 1")
    if n_trials > space.size:
        raise TuningError(
            f"n_trials {n_trials} exceeds the space's {space.size} configurations"
        )
    base = base if base is not None else TrainConfig(seed=seed)
    rng = np.random.default_rng(seed)
    picks = rng.choice(space.size, size=n_trials, replace=False)
    folds = kfold_split(data, k, seed, stratified=True)

    trials: list[TrialRecord] = []
    winner: Optional[TrialRecord] = None
    for t, pick in enumerate(picks):
        config = space.config_at(int(pick), base)
        fold_auc, fold_f1 = evaluate_config(data, config, folds, missing_policy)
        record = TrialRecord(t, config, fold_auc, fold_f1)
        trials.append(record)
        if winner is None or record.mean_auc_pr > winner.mean_auc_pr:
            winner = record
    return CVResult(trials=trials, winner=winner, k=k)


@dataclass
class PipelineModel:
    """A fitted transform state plus the ensemble trained on top of it."""

    transforms: TransformState
    ensemble: Ensemble

    def predict_margin(self, raw: Dataset) -> np.ndarray:
        return self.ensemble.predict_margin(apply_transforms(self.transforms, raw))

    def predict_proba(self, raw: Dataset) -> np.ndarray:
        return self.ensemble.predict_proba(apply_transforms(self.transforms, raw))

    def predict_label(self, raw: Dataset, threshold: float = 0.5) -> np.ndarray:
        return self.ensemble.predict_label(
            apply_transforms(self.transforms, raw), threshold
        )


def fit_pipeline(
    data: Dataset, config: TrainConfig, missing_policy: str = MISSING_FILL
) -> PipelineModel:
    """Fit transforms on all given rows, then the ensemble on top."""
    state = fit_transforms(data, missing_policy)
    prepared = apply_transforms(state, data)
    return PipelineModel(state, fit(prepared, config))


def fit_best(
    data: Dataset, result: CVResult, missing_policy: str = MISSING_FILL
) -> PipelineModel:
    """Refit the winning configuration on the full provided dataset."""
    if result.winner is None:
        raise TuningError("no winner: empty trial log")
    return fit_pipeline(data, result.best_config, missing_policy)
