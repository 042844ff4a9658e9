"""Experiment harness: size/distribution grid, sampling comparison,
imbalance objectives, and moving-window drift evaluation.

Preprocessing is always fitted inside training partitions; test
partitions keep their class distribution and are never resampled.  Cell
seeds derive from the cell identity, so results do not depend on
execution order.
"""

from __future__ import annotations

import csv
import json
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .boosting import TrainConfig
from .data import Dataset, stratified_subset, time_split_fraction
from .metrics import PRCurve, confusion, pr_curve, report
from .sampling import (
    COMBINED_PRESERVE_SIZE,
    SamplingPlan,
    multiplicities,
    plan_indices,
)
from .stats import TTestResult, ttest_unpaired
from .tuning import (
    RS_GRID,
    SCALE_GRID,
    SearchSpace,
    evaluate_config,
    fit_best,
    fit_pipeline,
    f1_or_zero,
    kfold_split,
    random_search,
)

VANILLA = "vanilla"
RS_TUNED = "rs_tuned"
RS_SCALE = "rs_scale"
APPROACHES = (VANILLA, RS_TUNED, RS_SCALE)

DEFAULT_SIZES = (1_000, 10_000, 100_000)
DEFAULT_DISTRIBUTIONS = (0.50, 0.45, 0.25, 0.05)

MOVING_WINDOW = "moving_window"
TRAIN_ONCE = "train_once"

TRAIN_WINDOW = 10_000
TEST_WINDOW = 2_500
N_SECTIONS = 5


class ExperimentError(ValueError):
    """Raised for invalid experiment requests."""


def fmt_mean_std(mean: float, std: float) -> str:
    return f"{mean:.2f} ({std:.2f})"


def cv_folds_for_size(size: int) -> int:
    """Five folds for small and medium cells, two folds at 100K and above."""
    return 2 if size >= 100_000 else 5


def cell_seed(base_seed: int, *parts) -> int:
    """Stable per-cell seed independent of execution order."""
    key = "|".join(str(p) for p in (base_seed, *parts))
    return zlib.crc32(key.encode())


@dataclass
class GridCell:
    f1_mean: float
    f1_std: float
    auc_pr_mean: float
    baseline_prc: float
    seconds: float
    fold_f1: list[float]

    def formatted(self) -> str:
        return fmt_mean_std(self.f1_mean, self.f1_std)


@dataclass
class SamplingCell:
    f1: float
    precision: float
    recall: float


@dataclass
class DriftRun:
    mode: str
    chunk_f1: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.chunk_f1))

    @property
    def std(self) -> float:
        return float(np.std(self.chunk_f1))

    def formatted(self) -> str:
        return fmt_mean_std(self.mean, self.std)


@dataclass
class ExperimentResult:
    """Container for whichever experiment sections were run."""

    grid: dict[tuple[int, float, str], GridCell] = field(default_factory=dict)
    sampling: dict[tuple[float, str], SamplingCell] = field(default_factory=dict)
    imbalance: dict[str, tuple[float, float]] = field(default_factory=dict)
    drift: dict[str, DriftRun] = field(default_factory=dict)
    pr_curves: dict[str, PRCurve] = field(default_factory=dict)
    sampling_audit: dict[float, np.ndarray] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not (self.grid or self.sampling or self.imbalance or self.drift)

    def merge(self, other: "ExperimentResult") -> "ExperimentResult":
        self.grid.update(other.grid)
        self.sampling.update(other.sampling)
        self.imbalance.update(other.imbalance)
        self.drift.update(other.drift)
        self.pr_curves.update(other.pr_curves)
        self.sampling_audit.update(other.sampling_audit)
        return self


# ---------------------------------------------------------------------------
# size x distribution grid


def run_grid(
    source: Dataset,
    sizes: Sequence[int] = DEFAULT_SIZES,
    distributions: Sequence[float] = DEFAULT_DISTRIBUTIONS,
    approaches: Sequence[str] = APPROACHES,
    seed: int = 0,
    rs_trials: int = 25,
    rs_space: SearchSpace = RS_GRID,
    scale_space: SearchSpace = SCALE_GRID,
) -> ExperimentResult:
    """Cross-validated F1 per (size, distribution, approach) cell."""
    for approach in approaches:
        if approach not in APPROACHES:
            raise ExperimentError(f"unknown approach {approach!r}")
    result = ExperimentResult()
    for size in sizes:
        k = cv_folds_for_size(size)
        for dist in distributions:
            sub_seed = cell_seed(seed, "grid", size, dist)
            cell_data = stratified_subset(source, size, dist, sub_seed)
            base = TrainConfig(seed=sub_seed)
            for approach in approaches:
                t0 = time.perf_counter()
                if approach == VANILLA:
                    folds = kfold_split(cell_data, k, sub_seed, stratified=True)
                    fold_auc, fold_f1 = evaluate_config(cell_data, base, folds)
                elif approach == RS_TUNED:
                    cv = random_search(
                        cell_data, rs_space, rs_trials, k, sub_seed, base=base
                    )
                    fold_auc, fold_f1 = cv.winner.fold_auc_pr, cv.winner.fold_f1
                else:
                    cv = random_search(
                        cell_data, scale_space, scale_space.size, k, sub_seed, base=base
                    )
                    fold_auc, fold_f1 = cv.winner.fold_auc_pr, cv.winner.fold_f1
                result.grid[(size, dist, approach)] = GridCell(
                    f1_mean=float(np.mean(fold_f1)),
                    f1_std=float(np.std(fold_f1)),
                    auc_pr_mean=float(np.mean(fold_auc)),
                    baseline_prc=cell_data.n_positive / cell_data.n_rows,
                    seconds=time.perf_counter() - t0,
                    fold_f1=list(fold_f1),
                )
    return result


def grid_baseline_ttest(
    result: ExperimentResult, size: int, distribution: float
) -> TTestResult:
    """Fold F1 scores of a cell against its constant baseline PRC."""
    cells = [
        cell
        for (sz, dist, approach), cell in result.grid.items()
        if sz == size and dist == distribution
    ]
    if not cells:
        raise ExperimentError("no grid cells for the requested size/distribution")
    scores: list[float] = []
    for cell in cells:
        scores.extend(cell.fold_f1)
    baseline = cells[0].baseline_prc
    return ttest_unpaired(scores, [baseline] * len(scores))


# ---------------------------------------------------------------------------
# sampling-to-balance comparison


SAMPLING_ARMS = ("vanilla", "sampling_vanilla", "rs_tuned", "sampling_rs_tuned")


def sampling_experiment(
    data: Dataset,
    distributions: Sequence[float] = DEFAULT_DISTRIBUTIONS,
    size: int = 10_000,
    seed: int = 0,
    rs_trials: int = 25,
    rs_space: SearchSpace = RS_GRID,
    arms: Sequence[str] = SAMPLING_ARMS,
    train_fraction: float = 0.8,
) -> ExperimentResult:
    """Train-set balancing comparison on a time-split; test sets untouched."""
    if data.time_index is None:
        raise ExperimentError("sampling experiment requires a time index")
    result = ExperimentResult()
    for dist in distributions:
        sub_seed = cell_seed(seed, "sampling", dist)
        subset = stratified_subset(data, size, dist, sub_seed)
        train_raw, test_raw = time_split_fraction(subset, train_fraction)
        plan = SamplingPlan(COMBINED_PRESERVE_SIZE, 0.5, sub_seed)
        config = TrainConfig(seed=sub_seed)

        def eval_arm(model) -> SamplingCell:
            rep = report(confusion(test_raw.labels, model.predict_label(test_raw)))
            return SamplingCell(
                f1=0.0 if rep.f1 is None else rep.f1,
                precision=0.0 if rep.precision is None else rep.precision,
                recall=0.0 if rep.recall is None else rep.recall,
            )

        sampled_idx = plan_indices(train_raw, plan)
        result.sampling_audit[dist] = multiplicities(sampled_idx, train_raw.n_rows)
        for arm in arms:
            train_arm = train_raw
            if arm.startswith("sampling"):
                train_arm = train_raw.take(sampled_idx)
            if arm.endswith("rs_tuned"):
                cv = random_search(
                    train_arm, rs_space, rs_trials, 5, sub_seed,
                    base=TrainConfig(seed=sub_seed),
                )
                model = fit_best(train_arm, cv)
            else:
                model = fit_pipeline(train_arm, config)
            result.sampling[(dist, arm)] = eval_arm(model)
            if arm == "vanilla":
                result.pr_curves[f"sampling_test_{dist:g}"] = pr_curve(
                    test_raw.labels, model.predict_margin(test_raw)
                )
    return result


# ---------------------------------------------------------------------------
# imbalance objective comparison


def imbalance_objective_experiment(
    data: Dataset,
    seed: int = 0,
    k: int = 5,
    gammas: Sequence[float] = (1.0, 2.0, 3.0),
    alphas: Sequence[float] = (1.0, 2.0, 3.0, 4.0),
) -> ExperimentResult:
    """Cross-validated F1 of the focal and positive-weighted losses
    against the plain objective, plus the best of each family."""
    result = ExperimentResult()
    folds = kfold_split(data, k, seed, stratified=True)

    def run(config: TrainConfig) -> tuple[float, float]:
        _, fold_f1 = evaluate_config(data, config, folds)
        return float(np.mean(fold_f1)), float(np.std(fold_f1))

    base = TrainConfig(seed=seed)
    result.imbalance["vanilla"] = run(base)
    focal_rows = {}
    for gamma in gammas:
        key = f"focal_gamma={gamma:g}"
        focal_rows[key] = run(base.with_params(focal_gamma=gamma))
        result.imbalance[key] = focal_rows[key]
    weighted_rows = {}
    for alpha in alphas:
        key = f"weighted_alpha={alpha:g}"
        weighted_rows[key] = run(base.with_params(weighted_alpha=alpha))
        result.imbalance[key] = weighted_rows[key]
    result.imbalance["best_focal"] = max(focal_rows.values(), key=lambda ms: ms[0])
    result.imbalance["best_weighted"] = max(weighted_rows.values(), key=lambda ms: ms[0])
    return result


# ---------------------------------------------------------------------------
# drift protocol


def drift_experiment(
    stream: Dataset,
    mode: str,
    space: Optional[SearchSpace] = None,
    n_trials: int = 6,
    seed: int = 0,
    train_window: int = TRAIN_WINDOW,
    test_window: int = TEST_WINDOW,
    n_sections: int = N_SECTIONS,
) -> DriftRun:
    """Per-section F1 under a retrain-per-window or train-once protocol.

    Test sections are consecutive blocks after the first training window;
    each moving-window model trains on the rows immediately preceding its
    section.  Models are tuned by random search in 5-fold CV on their
    training window before the final fit.
    """
    if mode not in (MOVING_WINDOW, TRAIN_ONCE):
        raise ExperimentError(f"unknown drift mode {mode!r}")
    needed = train_window + n_sections * test_window
    if stream.n_rows < needed:
        raise ExperimentError(
            f"stream too short: {stream.n_rows} rows, need {needed}"
        )
    if space is None:
        space = SCALE_GRID
        n_trials = min(n_trials, space.size)
    if n_trials > space.size:
        n_trials = space.size

    def tune_and_fit(window: Dataset):
        cv = random_search(
            window, space, n_trials, 5, seed, base=TrainConfig(seed=seed)
        )
        return fit_best(window, cv)

    rows = np.arange(stream.n_rows)
    chunk_f1: list[float] = []
    model = None
    for i in range(n_sections):
        test_lo = train_window + i * test_window
        section = stream.take(rows[test_lo : test_lo + test_window])
        if mode == MOVING_WINDOW or model is None:
            window = stream.take(rows[test_lo - train_window : test_lo])
            model = tune_and_fit(window)
        chunk_f1.append(f1_or_zero(section.labels, model.predict_label(section)))
    return DriftRun(mode=mode, chunk_f1=chunk_f1)


# ---------------------------------------------------------------------------
# reporting


def emit_report(results: ExperimentResult, out_dir: str | Path) -> list[Path]:
    """Write per-experiment CSVs, a combined JSON document, human-readable
    tables, and two-column plot data files; returns the written paths."""
    if results.is_empty():
        raise ExperimentError("nothing to report: empty results")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    tables: list[str] = []
    combined: dict = {}

    if results.grid:
        path = out / "grid.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["size", "distribution", "approach", "f1_mean", "f1_std",
                 "auc_pr_mean", "baseline_prc", "seconds"]
            )
            for (size, dist, approach), cell in sorted(results.grid.items()):
                writer.writerow(
                    [size, dist, approach, repr(cell.f1_mean), repr(cell.f1_std),
                     repr(cell.auc_pr_mean), repr(cell.baseline_prc),
                     f"{cell.seconds:.3f}"]
                )
        written.append(path)
        combined["grid"] = {
            f"{size}|{dist}|{approach}": {
                "f1_mean": cell.f1_mean,
                "f1_std": cell.f1_std,
                "auc_pr_mean": cell.auc_pr_mean,
                "baseline_prc": cell.baseline_prc,
                "fold_f1": cell.fold_f1,
            }
            for (size, dist, approach), cell in sorted(results.grid.items())
        }
        sizes = sorted({key[0] for key in results.grid})
        dists = sorted({key[1] for key in results.grid}, reverse=True)
        approaches = sorted({key[2] for key in results.grid})
        lines = ["F1 by size and distribution"]
        for approach in approaches:
            lines.append(f"  [{approach}]")
            header = "  distribution  baseline" + "".join(
                f"  {size:>12}" for size in sizes
            )
            lines.append(header)
            for dist in dists:
                row = f"  {dist:>12.2f}  {dist:>8.2f}"
                for size in sizes:
                    cell = results.grid.get((size, dist, approach))
                    row += f"  {cell.formatted() if cell else '-':>12}"
                lines.append(row)
        tables.append("\n".join(lines))

    if results.sampling:
        path = out / "sampling.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["distribution", "arm", "f1", "precision", "recall"])
            for (dist, arm), cell in sorted(results.sampling.items()):
                writer.writerow(
                    [dist, arm, repr(cell.f1), repr(cell.precision), repr(cell.recall)]
                )
        written.append(path)
        combined["sampling"] = {
            f"{dist}|{arm}": {"f1": c.f1, "precision": c.precision, "recall": c.recall}
            for (dist, arm), c in sorted(results.sampling.items())
        }
        dists = sorted({key[0] for key in results.sampling}, reverse=True)
        arms = [a for a in SAMPLING_ARMS
                if any(key[1] == a for key in results.sampling)]
        lines = ["F1 on the untouched test split, by training-set treatment"]
        lines.append("  positive%  " + "".join(f"  {arm:>18}" for arm in arms))
        for dist in dists:
            row = f"  {dist * 100:>8.0f}%  "
            for arm in arms:
                cell = results.sampling.get((dist, arm))
                row += f"  {cell.f1 if cell else float('nan'):>18.4f}"
            lines.append(row)
        tables.append("\n".join(lines))

    if results.imbalance:
        path = out / "imbalance.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["objective", "f1_mean", "f1_std"])
            for name, (mean, std) in results.imbalance.items():
                writer.writerow([name, repr(mean), repr(std)])
        written.append(path)
        combined["imbalance"] = {
            name: {"f1_mean": m, "f1_std": s}
            for name, (m, s) in results.imbalance.items()
        }
        lines = ["Cross-validated F1 by objective"]
        for name, (mean, std) in results.imbalance.items():
            lines.append(f"  {name:>22}: {fmt_mean_std(mean, std)}")
        tables.append("\n".join(lines))

    if results.drift:
        path = out / "drift.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["mode", "chunk", "f1"])
            for mode, run in sorted(results.drift.items()):
                for i, score in enumerate(run.chunk_f1):
                    writer.writerow([mode, i, repr(score)])
        written.append(path)
        path = out / "drift_summary.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["mode", "f1_mean", "f1_std"])
            for mode, run in sorted(results.drift.items()):
                writer.writerow([mode, repr(run.mean), repr(run.std)])
        written.append(path)
        combined["drift"] = {
            mode: {"chunk_f1": run.chunk_f1, "mean": run.mean, "std": run.std}
            for mode, run in sorted(results.drift.items())
        }
        lines = ["F1 over test sections"]
        for mode, run in sorted(results.drift.items()):
            chunks = "  ".join(f"{v:.4f}" for v in run.chunk_f1)
            lines.append(f"  {mode:>14}: {chunks}  ->  {run.formatted()}")
        tables.append("\n".join(lines))
        for mode, run in sorted(results.drift.items()):
            path = out / f"f1_chunks_{mode}.csv"
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["chunk", "f1"])
                for i, score in enumerate(run.chunk_f1):
                    writer.writerow([i, repr(score)])
            written.append(path)

    for dist, counts in results.sampling_audit.items():
        path = out / f"sampling_audit_{dist:g}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row_id", "multiplicity"])
            for row_id, count in enumerate(counts):
                writer.writerow([row_id, int(count)])
        written.append(path)

    for name, curve in results.pr_curves.items():
        path = out / f"pr_curve_{name}.csv"
        curve.save_csv(path)
        written.append(path)

    path = out / "results.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(combined, fh, indent=2)
        fh.write("\n")
    written.append(path)

    path = out / "tables.txt"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n\n".join(tables))
        fh.write("\n")
    written.append(path)
    return written
