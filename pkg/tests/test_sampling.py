import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treeboost.data import Dataset, FeatureSchema, NUMERIC
from treeboost.sampling import (
    SamplingError,
    SamplingPlan,
    balance_preserve_size,
    multiplicities,
    plan_indices,
    random_over_sample,
    random_under_sample,
    write_audit_log,
)


def labeled(n_neg: int, n_pos: int, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    labels = np.array([0] * n_neg + [1] * n_pos, dtype=np.int8)
    rng.shuffle(labels)
    schema = FeatureSchema((("x", NUMERIC),), "label", "t")
    n = n_neg + n_pos
    return Dataset(
        schema, [rng.normal(size=n)], labels, np.arange(n, dtype=np.int64)
    )


def row_set(ds: Dataset) -> set:
    return {(float(ds.columns[0][i]), int(ds.labels[i])) for i in range(ds.n_rows)}


class TestUnderSample:
    def test_900_100_to_balance(self):
        ds = labeled(900, 100)
        out = random_under_sample(ds, SamplingPlan(seed=1))
        assert out.n_rows == 200
        assert out.n_positive == 100

    def test_balanced_input_unchanged(self):
        ds = labeled(50, 50)
        out = random_under_sample(ds, SamplingPlan(seed=1))
        assert out.n_rows == 100
        assert np.array_equal(out.labels, ds.labels)
        assert np.array_equal(out.columns[0], ds.columns[0])

    def test_55_45_to_balance(self):
        ds = labeled(550, 450)
        out = random_under_sample(ds, SamplingPlan(seed=2))
        assert out.n_positive == 450
        assert out.n_rows == 900

    def test_single_class_rejected(self):
        ds = labeled(10, 0)
        with pytest.raises(SamplingError):
            random_under_sample(ds, SamplingPlan(seed=0))


class TestOverSample:
    def test_900_100_duplicates(self):
        ds = labeled(900, 100)
        out = random_over_sample(ds, SamplingPlan(seed=3))
        assert out.n_rows == 1800
        assert out.n_positive == 900

    def test_every_row_is_a_real_copy(self):
        ds = labeled(90, 10)
        out = random_over_sample(ds, SamplingPlan(seed=4))
        assert row_set(out) <= row_set(ds)

    def test_balanced_input_unchanged(self):
        ds = labeled(40, 40)
        out = random_over_sample(ds, SamplingPlan(seed=5))
        assert out.n_rows == 80
        assert np.array_equal(out.columns[0], ds.columns[0])


class TestBalancePreserveSize:
    def test_900_100_to_500_500(self):
        ds = labeled(900, 100)
        out = balance_preserve_size(ds, SamplingPlan(seed=6))
        assert out.n_rows == 1000
        assert out.n_positive == 500

    def test_550_450_needs_only_50_duplicates(self):
        ds = labeled(550, 450)
        out = balance_preserve_size(ds, SamplingPlan(seed=7))
        assert out.n_rows == 1000
        assert out.n_positive == 500
        idx = plan_indices(ds, SamplingPlan(seed=7))
        counts = multiplicities(idx, ds.n_rows)
        assert int(np.sum(counts[counts > 1] - 1)) == 50

    def test_balanced_input_unchanged(self):
        ds = labeled(30, 30)
        out = balance_preserve_size(ds, SamplingPlan(seed=8))
        assert np.array_equal(out.columns[0], ds.columns[0])

    @given(
        n_neg=st.integers(min_value=2, max_value=300),
        n_pos=st.integers(min_value=2, max_value=300),
        target=st.floats(min_value=0.1, max_value=0.9),
        seed=st.integers(min_value=0, max_value=1000),
    )
    @settings(max_examples=60, deadline=None)
    def test_size_and_count_invariants(self, n_neg, n_pos, target, seed):
        ds = labeled(n_neg, n_pos, seed=seed)
        plan = SamplingPlan(target_pos_fraction=target, seed=seed)
        out = balance_preserve_size(ds, plan)
        assert out.n_rows == ds.n_rows
        assert out.n_positive == round(ds.n_rows * target)
        assert row_set(out) <= row_set(ds)


class TestPlanMechanics:
    def test_seeded_reproducibility(self):
        ds = labeled(500, 100)
        for maker in (random_under_sample, random_over_sample, balance_preserve_size):
            a = maker(ds, SamplingPlan(seed=11))
            b = maker(ds, SamplingPlan(seed=11))
            assert np.array_equal(a.columns[0], b.columns[0]), maker

    def test_time_order_preserved(self):
        ds = labeled(300, 60)
        out = balance_preserve_size(ds, SamplingPlan(seed=12))
        assert np.all(np.diff(out.time_index) >= 0)

    def test_invalid_plan(self):
        with pytest.raises(SamplingError):
            SamplingPlan(strategy="smote")
        with pytest.raises(SamplingError):
            SamplingPlan(target_pos_fraction=0.0)

    def test_audit_log(self, tmp_path):
        ds = labeled(20, 5)
        idx = plan_indices(ds, SamplingPlan(seed=13))
        path = tmp_path / "audit.csv"
        write_audit_log(idx, ds.n_rows, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "row_id,multiplicity"
        assert len(lines) == 1 + ds.n_rows
        total = sum(int(line.split(",")[1]) for line in lines[1:])
        assert total == len(idx)
