import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treeboost.data import (
    CATEGORICAL,
    DataError,
    Dataset,
    FeatureSchema,
    NUMERIC,
    apply_encoder,
    apply_scaler,
    apply_transforms,
    fit_encoder,
    fit_scaler,
    fit_transforms,
    load_csv,
    load_schema,
    replace_missing,
    save_csv,
    save_schema,
    stratified_subset,
    time_split,
    time_split_fraction,
    TransformState,
)

SCHEMA = FeatureSchema(
    (("amount", NUMERIC), ("kind", CATEGORICAL)), "label", "t"
)


def make_dataset(amounts, kinds, labels, times=None) -> Dataset:
    return Dataset(
        SCHEMA,
        [np.array(amounts, dtype=np.float64), np.array(kinds, dtype=object)],
        np.array(labels, dtype=np.int8),
        None if times is None else np.array(times, dtype=np.int64),
    )


class TestSchema:
    def test_rejects_duplicate_columns(self):
        with pytest.raises(DataError):
            FeatureSchema((("a", NUMERIC), ("a", NUMERIC)), "y")

    def test_rejects_label_among_features(self):
        with pytest.raises(DataError):
            FeatureSchema((("a", NUMERIC),), "a")

    def test_rejects_empty(self):
        with pytest.raises(DataError):
            FeatureSchema((), "y")

    def test_rejects_unknown_kind(self):
        with pytest.raises(DataError):
            FeatureSchema((("a", "weird"),), "y")

    def test_fingerprint_ignores_time_column(self):
        a = FeatureSchema((("a", NUMERIC),), "y", "t")
        b = FeatureSchema((("a", NUMERIC),), "y")
        assert a.fingerprint() == b.fingerprint()

    def test_roundtrip(self, tmp_path):
        path = tmp_path / "schema.json"
        save_schema(SCHEMA, path)
        assert load_schema(path) == SCHEMA


class TestLoadCsv:
    def write(self, tmp_path, text):
        path = tmp_path / "data.csv"
        path.write_text(text)
        return path

    def test_missing_cell_becomes_nan(self, tmp_path):
        path = self.write(tmp_path, "amount,kind,label,t\n1.5,x,0,0\n,y,1,1\n2.0,x,0,2\n")
        ds = load_csv(path, SCHEMA)
        assert ds.n_rows == 3
        assert math.isnan(ds.columns[0][1])
        assert ds.columns[1][1] == "y"
        assert list(ds.labels) == [0, 1, 0]

    def test_missing_categorical_becomes_none(self, tmp_path):
        path = self.write(tmp_path, "amount,kind,label,t\n1.0,,0,0\n")
        ds = load_csv(path, SCHEMA)
        assert ds.columns[1][0] is None

    def test_non_binary_label(self, tmp_path):
        path = self.write(tmp_path, "amount,kind,label,t\n1.0,x,2,0\n")
        with pytest.raises(DataError, match="non-binary label"):
            load_csv(path, SCHEMA)

    def test_header_order_mismatch(self, tmp_path):
        path = self.write(tmp_path, "kind,amount,label,t\nx,1.0,0,0\n")
        with pytest.raises(DataError, match="header mismatch"):
            load_csv(path, SCHEMA)

    def test_numeric_parse_failure(self, tmp_path):
        path = self.write(tmp_path, "amount,kind,label,t\noops,x,0,0\n")
        with pytest.raises(DataError, match="numeric parse failure"):
            load_csv(path, SCHEMA)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="missing file"):
            load_csv(tmp_path / "absent.csv", SCHEMA)

    def test_unsorted_time_index(self, tmp_path):
        path = self.write(tmp_path, "amount,kind,label,t\n1.0,x,0,5\n2.0,x,1,1\n")
        with pytest.raises(DataError, match="sorted"):
            load_csv(path, SCHEMA)

    def test_roundtrip_exact(self, tmp_path):
        ds = make_dataset([0.1, math.nan, 2.5], ["x", None, "y"], [0, 1, 0], [0, 1, 2])
        path = tmp_path / "out.csv"
        save_csv(ds, path)
        back = load_csv(path, SCHEMA)
        assert np.array_equal(back.columns[0], ds.columns[0], equal_nan=True)
        assert list(back.columns[1]) == list(ds.columns[1])
        assert np.array_equal(back.labels, ds.labels)
        assert np.array_equal(back.time_index, ds.time_index)


class TestScaler:
    def test_fit_records_min_max(self):
        ds = make_dataset([2.0, 4.0, 10.0], ["x", "x", "x"], [0, 1, 0])
        state = fit_scaler(ds)
        assert state.bounds["amount"] == (2.0, 10.0)
        assert "amount" not in state.degenerate

    def test_constant_column_degenerate(self):
        ds = make_dataset([7.0, 7.0], ["x", "x"], [0, 1])
        state = fit_scaler(ds)
        assert state.bounds["amount"] == (7.0, 7.0)
        assert "amount" in state.degenerate

    def test_negative_range(self):
        ds = make_dataset([-5.0, 5.0], ["x", "x"], [0, 1])
        assert fit_scaler(ds).bounds["amount"] == (-5.0, 5.0)

    def test_all_missing_column_degenerate(self):
        ds = make_dataset([math.nan, math.nan], ["x", "x"], [0, 1])
        state = fit_scaler(ds)
        assert "amount" in state.degenerate
        scaled = apply_scaler(state, ds)
        assert np.all(np.isnan(scaled.columns[0]))

    def test_apply_formula_and_clipping(self):
        train = make_dataset([2.0, 4.0, 10.0], ["x", "x", "x"], [0, 1, 0])
        state = fit_scaler(train)
        scaled = apply_scaler(state, train)
        assert scaled.columns[0] == pytest.approx([0.0, 0.25, 1.0])
        test = make_dataset([12.0, 1.0], ["x", "x"], [0, 1])
        clipped = apply_scaler(state, test)
        assert clipped.columns[0] == pytest.approx([1.0, 0.0])

    def test_degenerate_maps_to_zero(self):
        train = make_dataset([7.0, 7.0], ["x", "x"], [0, 1])
        scaled = apply_scaler(fit_scaler(train), train)
        assert scaled.columns[0] == pytest.approx([0.0, 0.0])

    def test_missing_stays_missing(self):
        train = make_dataset([1.0, 3.0, math.nan], ["x", "x", "x"], [0, 1, 0])
        scaled = apply_scaler(fit_scaler(train), train)
        assert math.isnan(scaled.columns[0][2])

    def test_column_mismatch(self):
        train = make_dataset([1.0, 2.0], ["x", "x"], [0, 1])
        state = fit_scaler(train)
        state.bounds["other"] = state.bounds.pop("amount")
        with pytest.raises(DataError):
            apply_scaler(state, train)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
    @settings(max_examples=100, deadline=None)
    def test_output_always_in_unit_interval(self, values):
        train = make_dataset([1.0, 5.0], ["x", "x"], [0, 1])
        state = fit_scaler(train)
        test = make_dataset(values, ["x"] * len(values), [0] * len(values))
        scaled = apply_scaler(state, test)
        assert np.all((scaled.columns[0] >= 0.0) & (scaled.columns[0] <= 1.0))

    def test_train_min_max_map_to_unit_ends(self):
        rng = np.random.default_rng(3)
        values = rng.normal(size=40)
        ds = make_dataset(values, ["x"] * 40, [0, 1] * 20)
        scaled = apply_scaler(fit_scaler(ds), ds)
        assert scaled.columns[0].min() == 0.0
        assert scaled.columns[0].max() == 1.0


class TestEncoder:
    def test_lexicographic_codes(self):
        ds = make_dataset([1.0, 2.0], ["B", "A"], [0, 1])
        state = fit_encoder(ds)
        assert state.mappings["kind"] == {"A": 0, "B": 1}

    def test_singleton(self):
        ds = make_dataset([1.0], ["X"], [0])
        assert fit_encoder(ds).mappings["kind"] == {"X": 0}

    def test_three_tokens(self):
        ds = make_dataset([1.0, 2.0, 3.0], ["c", "a", "b"], [0, 1, 0])
        assert fit_encoder(ds).mappings["kind"] == {"a": 0, "b": 1, "c": 2}

    def test_unseen_token_gets_reserved_code(self):
        train = make_dataset([1.0, 2.0], ["A", "B"], [0, 1])
        state = fit_encoder(train)
        test = make_dataset([1.0], ["C"], [0])
        encoded = apply_encoder(state, test)
        assert encoded.columns[1][0] == -1.0

    def test_known_token_lookup(self):
        train = make_dataset([1.0, 2.0], ["A", "B"], [0, 1])
        encoded = apply_encoder(fit_encoder(train), train)
        assert list(encoded.columns[1]) == [0.0, 1.0]

    def test_missing_token_gets_reserved_code(self):
        train = make_dataset([1.0, 2.0], ["A", "B"], [0, 1])
        state = fit_encoder(train)
        test = make_dataset([1.0], [None], [0])
        assert apply_encoder(state, test).columns[1][0] == -1.0

    @given(st.lists(st.text(alphabet="abcxyz", min_size=1, max_size=4),
                    min_size=1, max_size=30))
    @settings(max_examples=100, deadline=None)
    def test_roundtrip_on_training_never_reserved(self, tokens):
        n = len(tokens)
        ds = make_dataset([1.0] * n, tokens, [i % 2 for i in range(n)])
        encoded = apply_encoder(fit_encoder(ds), ds)
        codes = encoded.columns[1]
        assert np.all(codes >= 0)
        k = len(set(tokens))
        assert set(codes) == set(range(k))


class TestReplaceMissing:
    def test_default_fill_is_one(self):
        ds = make_dataset([math.nan, 0.5], ["x", "y"], [0, 1])
        filled = replace_missing(ds)
        assert filled.columns[0][0] == 1.0
        assert filled.columns[0][1] == 0.5

    def test_identity_without_missing(self):
        ds = make_dataset([0.25, 0.5], ["x", "y"], [0, 1])
        filled = replace_missing(ds)
        assert np.array_equal(filled.columns[0], ds.columns[0])

    def test_custom_fill(self):
        ds = make_dataset([math.nan], ["x"], [0])
        assert replace_missing(ds, fill=0.0).columns[0][0] == 0.0


class TestTimeSplit:
    def test_counts(self):
        ds = make_dataset(
            list(range(10)), ["x"] * 10, [0, 1] * 5, times=list(range(10))
        )
        train, test = time_split(ds, 8)
        assert (train.n_rows, test.n_rows) == (8, 2)

    def test_split_at_minimum_is_empty_train(self):
        ds = make_dataset([1.0, 2.0], ["x", "y"], [0, 1], times=[0, 1])
        with pytest.raises(DataError, match="empty train"):
            time_split(ds, 0)

    def test_fraction_80_20(self):
        n = 10_000
        ds = make_dataset(
            np.arange(n, dtype=float), ["x"] * n, [0, 1] * (n // 2),
            times=list(range(n)),
        )
        train, test = time_split_fraction(ds, 0.8)
        assert (train.n_rows, test.n_rows) == (8000, 2000)

    def test_partition_properties(self):
        rng = np.random.default_rng(0)
        n = 500
        times = np.sort(rng.integers(0, 100, size=n))
        ds = make_dataset(
            rng.normal(size=n), ["x"] * n, rng.integers(0, 2, size=n), times=times
        )
        train, test = time_split(ds, 50)
        assert train.n_rows + test.n_rows == n
        assert train.time_index.max() < test.time_index.min()

    def test_requires_time_index(self):
        ds = make_dataset([1.0], ["x"], [0])
        with pytest.raises(DataError, match="time"):
            time_split(ds, 0)


class TestStratifiedSubset:
    def big(self, n=2000, pos=0.5, seed=0):
        rng = np.random.default_rng(seed)
        labels = np.zeros(n, dtype=np.int8)
        labels[: int(n * pos)] = 1
        rng.shuffle(labels)
        return make_dataset(
            rng.normal(size=n), ["x"] * n, labels, times=list(range(n))
        )

    def test_exact_class_counts(self):
        ds = self.big()
        sub = stratified_subset(ds, 1000, 0.05, seed=1)
        assert sub.n_rows == 1000
        assert sub.n_positive == 50

    def test_45_percent(self):
        ds = self.big(n=20_000, pos=0.5)
        sub = stratified_subset(ds, 10_000, 0.45, seed=2)
        assert sub.n_positive == 4500

    def test_insufficient_positives(self):
        ds = self.big(n=100, pos=0.1)
        with pytest.raises(DataError, match="positives"):
            stratified_subset(ds, 100, 0.5, seed=0)

    def test_reproducible(self):
        ds = self.big()
        a = stratified_subset(ds, 500, 0.25, seed=9)
        b = stratified_subset(ds, 500, 0.25, seed=9)
        assert np.array_equal(a.columns[0], b.columns[0])
        assert np.array_equal(a.labels, b.labels)

    def test_time_order_preserved(self):
        ds = self.big()
        sub = stratified_subset(ds, 500, 0.5, seed=4)
        assert np.all(np.diff(sub.time_index) >= 0)


class TestTransformBundle:
    def test_fold_preparation_fits_on_train_only(self):
        train = make_dataset([0.0, 10.0], ["A", "B"], [0, 1])
        test = make_dataset([20.0, math.nan], ["C", "A"], [1, 0])
        state = fit_transforms(train)
        prepared_train = apply_transforms(state, train)
        prepared_test = apply_transforms(state, test)
        assert prepared_train.columns[0] == pytest.approx([0.0, 1.0])
        # 20 clips to the training max, missing fills with 1
        assert prepared_test.columns[0] == pytest.approx([1.0, 1.0])
        # unseen token C gets the reserved code
        assert prepared_test.columns[1] == pytest.approx([-1.0, 0.0])
        # prepared data carries the all-numeric schema
        assert prepared_test.schema.kind_of(1) == NUMERIC

    def test_native_policy_keeps_nan(self):
        train = make_dataset([0.0, 10.0], ["A", "B"], [0, 1])
        state = fit_transforms(train, missing_policy="native")
        test = make_dataset([math.nan], ["A"], [1])
        assert math.isnan(apply_transforms(state, test).columns[0][0])

    def test_state_roundtrip(self, tmp_path):
        train = make_dataset([0.0, 10.0, math.nan], ["A", "B", None], [0, 1, 0])
        state = fit_transforms(train)
        path = tmp_path / "state.json"
        state.save(path)
        back = TransformState.load(path)
        assert back.schema == state.schema
        assert back.scaler.bounds == state.scaler.bounds
        assert back.encoder.mappings == state.encoder.mappings
        assert back.missing_policy == state.missing_policy
        assert back.missing_fill == state.missing_fill


def test_feature_matrix_requires_encoding():
    ds = make_dataset([1.0], ["x"], [0])
    with pytest.raises(DataError, match="not encoded"):
        ds.feature_matrix()


def test_dataset_validates_lengths():
    with pytest.raises(DataError):
        Dataset(
            SCHEMA,
            [np.array([1.0]), np.array(["x"], dtype=object)],
            np.array([0, 1], dtype=np.int8),
        )
