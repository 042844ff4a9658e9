"""Second-order boosting of regression trees on a logistic-family loss.

Each round fits one tree to the current gradients and hessians, with
optional row subsampling per round and column subsampling per tree.
Margins accumulate additively from a base margin of 0 (prior
probability one half); probability is the sigmoid of the margin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .data import FORMAT_VERSION, Dataset, FeatureSchema
from .metrics import pr_curve
from .objectives import Objective, grad_hess, loss_values, sigmoid
from .trees import FlatForest, TreeGrower, TreeNode


class TrainError(ValueError):
    """Raised for invalid training inputs or configuration."""


@dataclass(frozen=True)
class TrainConfig:
    """Vanilla defaults: depth 6, learning rate 0.3, 100 trees, full sampling."""

    objective: str = "logistic"
    scale_pos_weight: float = 1.0
    weighted_alpha: Optional[float] = None
    focal_gamma: Optional[float] = None
    max_depth: int = 6
    learning_rate: float = 0.3
    subsample: float = 1.0
    colsample_bytree: float = 1.0
    n_trees: int = 100
    l2_lambda: float = 1.0
    min_split_loss: float = 0.0
    min_child_hessian: float = 1.0
    seed: int = 0
    eval_metric: str = "aucpr"

    def __post_init__(self):
        if self.objective != "logistic":
            raise TrainError(f"unsupported objective {self.objective!r}")
        if not 0.0 < self.subsample <= 1.0:
            raise TrainError("subsample must be in (0, 1]")
        if not 0.0 < self.colsample_bytree <= 1.0:
            raise TrainError("colsample_bytree must be in (0, 1]")
        if self.n_trees < 1:
            raise TrainError("n_trees must be >= 1")
        if self.max_depth < 0:
            raise TrainError("max_depth must be >= 0")
        if self.learning_rate <= 0.0:
            raise TrainError("learning_rate must be positive")
        if self.eval_metric != "aucpr":
            raise TrainError(f"unsupported eval metric {self.eval_metric!r}")
        self.loss()  # validates the loss parameter combination

    def loss(self) -> Objective:
        return Objective(
            scale_pos_weight=self.scale_pos_weight,
            weighted_alpha=self.weighted_alpha,
            focal_gamma=self.focal_gamma,
        )

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "scale_pos_weight": self.scale_pos_weight,
            "weighted_alpha": self.weighted_alpha,
            "focal_gamma": self.focal_gamma,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "subsample": self.subsample,
            "colsample_bytree": self.colsample_bytree,
            "n_trees": self.n_trees,
            "l2_lambda": self.l2_lambda,
            "min_split_loss": self.min_split_loss,
            "min_child_hessian": self.min_child_hessian,
            "seed": self.seed,
            "eval_metric": self.eval_metric,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        return cls(**obj)

    def with_params(self, **kwargs) -> "TrainConfig":
        return replace(self, **kwargs)


@dataclass
class FitLog:
    """Per-round training loss and, when an eval set is given, eval AUC-PR."""

    train_loss: list[float] = field(default_factory=list)
    eval_auc_pr: Optional[list[float]] = None


@dataclass
class Ensemble:
    """Additive trees: margin(x) = base_margin + sum of per-tree leaf scores."""

    trees: list[TreeNode]
    base_margin: float
    objective_tag: dict
    schema_fingerprint: str
    config: TrainConfig
    schema: Optional[FeatureSchema] = None
    fit_log: Optional[FitLog] = None
    _forest: Optional[FlatForest] = field(default=None, repr=False)

    def forest(self) -> FlatForest:
        if self._forest is None or self._forest.tree_starts.size != len(self.trees) + 1:
            self._forest = FlatForest.from_nodes(self.trees)
        return self._forest

    # -- prediction ---------------------------------------------------------

    def margins_for_matrix(self, X: np.ndarray) -> np.ndarray:
        out = np.full(X.shape[0], self.base_margin, dtype=np.float64)
        if self.trees:
            self.forest().add_margins(np.ascontiguousarray(X, dtype=np.float64), out)
        return out

    def predict_margin(self, rows: Dataset) -> np.ndarray:
        if rows.schema.fingerprint() != self.schema_fingerprint:
            raise TrainError("schema mismatch between model and data")
        return self.margins_for_matrix(rows.feature_matrix())

    def predict_proba(self, rows: Dataset) -> np.ndarray:
        return sigmoid(self.predict_margin(rows))

    def predict_label(self, rows: Dataset, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(rows) >= threshold).astype(np.int8)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "treeboost-model",
            "base_margin": self.base_margin,
            "objective": self.objective_tag,
            "schema_fingerprint": self.schema_fingerprint,
            "config": self.config.to_dict(),
            "schema": None if self.schema is None else self.schema.to_dict(),
            "trees": [t.to_dict() for t in self.trees],
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_dict(cls, obj: dict) -> "Ensemble":
        if obj.get("format_version") != FORMAT_VERSION:
            raise TrainError(f"unsupported model file version: {obj.get('format_version')}")
        return cls(
            trees=[TreeNode.from_dict(t) for t in obj["trees"]],
            base_margin=float(obj["base_margin"]),
            objective_tag=obj["objective"],
            schema_fingerprint=obj["schema_fingerprint"],
            config=TrainConfig.from_dict(obj["config"]),
            schema=None if obj["schema"] is None else FeatureSchema.from_dict(obj["schema"]),
        )

    @classmethod
    def load(cls, path: str | Path) -> "Ensemble":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit(
    train: Dataset, config: TrainConfig, eval_set: Optional[Dataset] = None
) -> Ensemble:
    """Boost config.n_trees rounds on a prepared dataset.

    The dataset must already be scaled, encoded and missing-handled per
    the pipeline mode; NaN cells are allowed and routed natively.
    """
    if train.n_rows == 0:
        raise TrainError("empty training dataset")
    y = train.labels.astype(np.float64)
    if train.n_positive == 0 or train.n_positive == train.n_rows:
        raise TrainError("training labels contain a single class")
    if eval_set is not None and eval_set.n_positive == 0:
        raise TrainError("eval set needs at least one positive for AUC-PR")

    X = np.ascontiguousarray(train.feature_matrix())
    n, d = X.shape
    X_cols = np.asfortranarray(X)
    objective = config.loss()
    rng = np.random.default_rng(config.seed)

    # presort every feature once; NaN rows sort last and are dropped
    full_order: list[np.ndarray] = []
    for j in range(d):
        order = np.argsort(X_cols[:, j], kind="stable").astype(np.int32)
        n_valid = n - int(np.isnan(X_cols[:, j]).sum())
        full_order.append(np.ascontiguousarray(order[:n_valid]))

    plain_sampling = config.subsample >= 1.0 and config.colsample_bytree >= 1.0
    all_rows = np.arange(n, dtype=np.int32)
    all_feats = np.arange(d, dtype=np.int64)
    if plain_sampling:
        base_concat = np.concatenate(full_order)
        ends = np.cumsum([len(o) for o in full_order], dtype=np.int64)
        base_starts = ends - [len(o) for o in full_order]
        base_ends = ends

    margins = np.zeros(n, dtype=np.float64)
    gh = np.empty((n, 2), dtype=np.float64)
    log = FitLog(eval_auc_pr=None if eval_set is None else [])
    if eval_set is not None:
        X_eval = np.ascontiguousarray(eval_set.feature_matrix())
        eval_margins = np.zeros(len(X_eval), dtype=np.float64)

    n_sampled_rows = max(1, int(round(n * config.subsample)))
    n_sampled_cols = max(1, int(round(d * config.colsample_bytree)))

    trees: list[TreeNode] = []
    in_sample = np.ones(n, dtype=bool)
    for _ in range(config.n_trees):
        g, h = grad_hess(objective, y, margins)
        gh[:, 0] = g
        gh[:, 1] = h

        if config.subsample < 1.0:
            chosen = np.sort(rng.choice(n, size=n_sampled_rows, replace=False))
            in_sample[:] = False
            in_sample[chosen] = True
            rows = chosen.astype(np.int32)
        else:
            rows = all_rows

        if config.colsample_bytree < 1.0:
            feat_ids = np.sort(rng.choice(d, size=n_sampled_cols, replace=False)).astype(np.int64)
        else:
            feat_ids = all_feats

        if plain_sampling:
            concat, starts, ends = base_concat, base_starts, base_ends
        else:
            lists = []
            for j in feat_ids:
                order = full_order[j]
                if config.subsample < 1.0:
                    order = order[in_sample[order]]
                lists.append(order)
            concat = np.concatenate(lists)
            sizes = np.asarray([len(o) for o in lists], dtype=np.int64)
            ends = np.cumsum(sizes)
            starts = ends - sizes

        grower = TreeGrower(
            X_cols, gh,
            config.max_depth, config.learning_rate, config.l2_lambda,
            config.min_split_loss, config.min_child_hessian,
        )
        root = grower.grow(rows, concat, starts, ends, feat_ids)
        trees.append(root)

        # sampled rows get margin updates from their recorded leaves;
        # out-of-sample rows are routed through the finished tree
        for w, leaf_rows in grower.leaf_rows:
            margins[leaf_rows] += w
        if config.subsample < 1.0:
            single = FlatForest.from_nodes([root])
            out_rows = np.flatnonzero(~in_sample).astype(np.int32)
            single.add_margins_rows(X, out_rows, margins)
        log.train_loss.append(float(loss_values(objective, y, margins).sum()))

        if eval_set is not None:
            FlatForest.from_nodes([root]).add_margins(X_eval, eval_margins)
            log.eval_auc_pr.append(pr_curve(eval_set.labels, eval_margins).auc)

    return Ensemble(
        trees=trees,
        base_margin=0.0,
        objective_tag=objective.tag(),
        schema_fingerprint=train.schema.fingerprint(),
        config=config,
        schema=train.schema,
        fit_log=log,
    )


def predict_margin(model: Ensemble, rows: Dataset) -> np.ndarray:
    return model.predict_margin(rows)


def predict_proba(model: Ensemble, rows: Dataset) -> np.ndarray:
    return model.predict_proba(rows)


def predict_label(model: Ensemble, rows: Dataset, threshold: float = 0.5) -> np.ndarray:
    return model.predict_label(rows, threshold)
