import json

import numpy as np
import pytest

from treeboost.boosting import Ensemble, TrainConfig, TrainError, fit
from treeboost.data import Dataset, FeatureSchema, NUMERIC
from treeboost.objectives import sigmoid
from treeboost.trees import TreeNode


def numeric_dataset(X, y, names=None) -> Dataset:
    d = X.shape[1]
    names = names or [f"f{j}" for j in range(d)]
    schema = FeatureSchema(tuple((n, NUMERIC) for n in names), "label")
    return Dataset(
        schema,
        [np.ascontiguousarray(X[:, j]) for j in range(d)],
        np.asarray(y, dtype=np.int8),
    )


def blob_data(n=400, d=4, sep=2.0, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = rng.integers(0, 2, size=n)
    X[y == 1, :2] += sep
    return numeric_dataset(X, y)


class TestTrainConfig:
    def test_defaults_match_vanilla_setup(self):
        cfg = TrainConfig()
        assert cfg.max_depth == 6
        assert cfg.learning_rate == 0.3
        assert cfg.n_trees == 100
        assert cfg.subsample == 1.0
        assert cfg.colsample_bytree == 1.0
        assert cfg.l2_lambda == 1.0
        assert cfg.eval_metric == "aucpr"

    def test_validation(self):
        with pytest.raises(TrainError):
            TrainConfig(subsample=0.0)
        with pytest.raises(TrainError):
            TrainConfig(colsample_bytree=1.5)
        with pytest.raises(TrainError):
            TrainConfig(n_trees=0)
        with pytest.raises(TrainError):
            TrainConfig(objective="squared")

    def test_roundtrip(self):
        cfg = TrainConfig(focal_gamma=2.0, n_trees=7)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg


class TestFitBasics:
    def test_two_point_separable(self):
        ds = numeric_dataset(np.array([[0.0], [1.0]]), [0, 1])
        model = fit(ds, TrainConfig(n_trees=10, min_child_hessian=0.0))
        proba = model.predict_proba(ds)
        assert proba[0] < 0.5 < proba[1]

    def test_single_class_rejected(self):
        ds = numeric_dataset(np.zeros((5, 1)), [1, 1, 1, 1, 1])
        with pytest.raises(TrainError, match="single class"):
            fit(ds, TrainConfig(n_trees=1))

    def test_empty_rejected(self):
        ds = numeric_dataset(np.zeros((0, 1)), [])
        with pytest.raises(TrainError, match="empty"):
            fit(ds, TrainConfig(n_trees=1))

    def test_training_loss_non_increasing_all_objectives(self):
        ds = blob_data(seed=3)
        for params in (
            {},
            {"scale_pos_weight": 19.0},
            {"weighted_alpha": 3.0},
            {"focal_gamma": 2.0},
        ):
            model = fit(ds, TrainConfig(n_trees=40, **params))
            losses = model.fit_log.train_loss
            assert all(a >= b - 1e-9 for a, b in zip(losses, losses[1:])), params

    def test_forced_single_leaf_weight_formula(self):
        X = np.array([[0.0], [1.0]])
        y = [0, 1]
        ds = numeric_dataset(X, y)
        cfg = TrainConfig(max_depth=0, n_trees=1, learning_rate=0.3)
        model = fit(ds, cfg)
        root = model.trees[0]
        assert root.is_leaf
        # margins start at zero: g = (0.5 - y), h = 0.25 per row
        G = (0.5 - 0.0) + (0.5 - 1.0)
        H = 0.25 + 0.25
        assert root.weight == -G / (H + cfg.l2_lambda) * cfg.learning_rate

    def test_depth_respected(self):
        ds = blob_data(n=300, seed=5)
        model = fit(ds, TrainConfig(n_trees=3, max_depth=2, min_child_hessian=0.0))
        for tree in model.trees:
            assert tree.max_depth() <= 2


class TestDeterminism:
    def test_same_seed_bit_identical_model_files(self, tmp_path):
        ds = blob_data(seed=1)
        cfg = TrainConfig(n_trees=20, seed=42)
        a, b = fit(ds, cfg), fit(ds, cfg)
        pa, pb = tmp_path / "a.json", tmp_path / "b.json"
        a.save(pa)
        b.save(pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_subsampled_runs_reproduce(self):
        ds = blob_data(seed=2)
        cfg = TrainConfig(n_trees=15, subsample=0.7, colsample_bytree=0.5, seed=9)
        a, b = fit(ds, cfg), fit(ds, cfg)
        assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())

    def test_different_seed_differs_under_subsampling(self):
        ds = blob_data(seed=2)
        a = fit(ds, TrainConfig(n_trees=5, subsample=0.6, seed=1))
        b = fit(ds, TrainConfig(n_trees=5, subsample=0.6, seed=2))
        assert json.dumps(a.to_dict()) != json.dumps(b.to_dict())

    def test_identity_parameters_reduce_to_plain_path(self):
        ds = blob_data(seed=7)
        base = fit(ds, TrainConfig(n_trees=10, seed=3))
        base_dump = json.dumps([t.to_dict() for t in base.trees])
        for params in (
            {"scale_pos_weight": 1.0},
            {"weighted_alpha": 1.0},
            {"focal_gamma": 0.0},
        ):
            other = fit(ds, TrainConfig(n_trees=10, seed=3, **params))
            assert json.dumps([t.to_dict() for t in other.trees]) == base_dump

    def test_scale_weight_changes_scores(self):
        ds = blob_data(seed=7)
        base = fit(ds, TrainConfig(n_trees=10, seed=3))
        scaled = fit(ds, TrainConfig(n_trees=10, seed=3, scale_pos_weight=19.0))
        assert not np.array_equal(base.predict_margin(ds), scaled.predict_margin(ds))


class TestPrediction:
    def test_margins_sum_hand_built_trees(self):
        # two stacked trees contributing -1.1 and 1.0 give margin -0.1
        schema = FeatureSchema((("x1", NUMERIC), ("x3", NUMERIC)), "label")
        t1 = TreeNode(
            feature=0, threshold=0.5, default_left=True,
            left=TreeNode(weight=0.9), right=TreeNode(weight=-1.1),
        )
        t2 = TreeNode(
            feature=1, threshold=0.5, default_left=True,
            left=TreeNode(weight=-0.3), right=TreeNode(weight=1.0),
        )
        model = Ensemble(
            trees=[t1, t2], base_margin=0.0, objective_tag={},
            schema_fingerprint=schema.fingerprint(), config=TrainConfig(),
            schema=schema,
        )
        rows = Dataset(
            schema,
            [np.array([1.0]), np.array([1.0])],  # x1 > A and x3 > B
            np.array([1], dtype=np.int8),
        )
        assert model.predict_margin(rows)[0] == pytest.approx(-0.1)

    def test_empty_ensemble_predicts_half(self):
        schema = FeatureSchema((("x", NUMERIC),), "label")
        model = Ensemble(
            trees=[], base_margin=0.0, objective_tag={},
            schema_fingerprint=schema.fingerprint(), config=TrainConfig(),
            schema=schema,
        )
        rows = Dataset(schema, [np.array([3.0])], np.array([0], dtype=np.int8))
        assert model.predict_proba(rows)[0] == 0.5

    def test_missing_routes_by_default_direction(self):
        schema = FeatureSchema((("x", NUMERIC),), "label")
        tree = TreeNode(
            feature=0, threshold=0.5, default_left=False,
            left=TreeNode(weight=-1.0), right=TreeNode(weight=2.0),
        )
        model = Ensemble(
            trees=[tree], base_margin=0.0, objective_tag={},
            schema_fingerprint=schema.fingerprint(), config=TrainConfig(),
            schema=schema,
        )
        rows = Dataset(schema, [np.array([np.nan])], np.array([0], dtype=np.int8))
        assert model.predict_margin(rows)[0] == 2.0

    def test_schema_mismatch_rejected(self):
        ds = blob_data(n=100)
        model = fit(ds, TrainConfig(n_trees=2))
        other = numeric_dataset(np.zeros((2, 4)), [0, 1], names=list("abcd"))
        with pytest.raises(TrainError, match="schema mismatch"):
            model.predict_margin(other)

    def test_margin_equals_sigmoid_inverse_of_proba(self):
        ds = blob_data(n=150, seed=8)
        model = fit(ds, TrainConfig(n_trees=5))
        margins = model.predict_margin(ds)
        assert model.predict_proba(ds) == pytest.approx(sigmoid(margins))

    def test_train_margins_match_fresh_prediction(self):
        # the incremental leaf-row updates must agree with a full walk
        ds = blob_data(n=250, seed=12)
        cfg = TrainConfig(n_trees=8, subsample=0.8, seed=4)
        model = fit(ds, cfg)
        margins = model.predict_margin(ds)
        refit_loss = float(
            np.sum(
                np.log1p(np.exp(-np.where(ds.labels == 1, margins, -margins)))
            )
        )
        assert refit_loss == pytest.approx(model.fit_log.train_loss[-1], rel=1e-9)


class TestMissingNative:
    def test_nan_in_training_data(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(300, 3))
        y = (X[:, 0] > 0).astype(int)
        X[rng.random(size=X.shape) < 0.15] = np.nan
        ds = numeric_dataset(X, y)
        model = fit(ds, TrainConfig(n_trees=10))
        proba = model.predict_proba(ds)
        assert np.all(np.isfinite(proba))
        # the informative feature still dominates
        clean = ~np.isnan(X[:, 0])
        acc = np.mean((proba[clean] >= 0.5) == (y[clean] == 1))
        assert acc > 0.8


class TestSerialization:
    def test_roundtrip_identical_predictions(self, tmp_path):
        ds = blob_data(n=200, seed=6)
        model = fit(ds, TrainConfig(n_trees=12, seed=5))
        path = tmp_path / "model.json"
        model.save(path)
        back = Ensemble.load(path)
        assert np.array_equal(model.predict_margin(ds), back.predict_margin(ds))

    def test_roundtrip_bit_identical_file(self, tmp_path):
        ds = blob_data(n=120, seed=6)
        model = fit(ds, TrainConfig(n_trees=4, seed=5))
        p1, p2 = tmp_path / "m1.json", tmp_path / "m2.json"
        model.save(p1)
        Ensemble.load(p1).save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_unknown_version(self, tmp_path):
        ds = blob_data(n=100)
        model = fit(ds, TrainConfig(n_trees=1))
        obj = model.to_dict()
        obj["format_version"] = 99
        with pytest.raises(TrainError, match="version"):
            Ensemble.from_dict(obj)

    def test_objective_tag_recorded(self):
        ds = blob_data(n=100)
        model = fit(ds, TrainConfig(n_trees=1, scale_pos_weight=3.0))
        assert model.objective_tag["scale_pos_weight"] == 3.0


class TestEvalLog:
    def test_eval_auc_recorded_per_round(self):
        train = blob_data(n=300, seed=1)
        holdout = blob_data(n=100, seed=2)
        model = fit(train, TrainConfig(n_trees=7), eval_set=holdout)
        assert len(model.fit_log.eval_auc_pr) == 7
        assert all(0.0 <= v <= 1.0 for v in model.fit_log.eval_auc_pr)

    def test_no_eval_set_no_eval_log(self):
        model = fit(blob_data(n=100), TrainConfig(n_trees=2))
        assert model.fit_log.eval_auc_pr is None

    def test_eval_set_without_positives_rejected(self):
        holdout = numeric_dataset(np.zeros((4, 4)), [0, 0, 0, 0])
        with pytest.raises(TrainError, match="positive"):
            fit(blob_data(n=100), TrainConfig(n_trees=2), eval_set=holdout)
