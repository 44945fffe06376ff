import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privlabel.central import laplace_accuracy_bound, pipeline_aggregate, sample_laplace
from privlabel.core import (
    PrivacyModel,
    PrivacyParams,
    count_gap,
    degenerate_buckets,
    empirical_accuracy,
    exact_aggregate,
    hard_label,
    hard_labels,
    label_vector,
    per_bucket_failure_rates,
    soft_label,
)
from conftest import random_queries, random_record_set, swap_one_record


class TestExactAggregate:
    def test_elementwise_sum(self):
        a1 = np.array([[1, 0], [0, 0]])
        a2 = np.array([[1, 0], [0, 1]])
        assert np.array_equal(exact_aggregate([a1, a2]), [[2, 0], [0, 1]])

    def test_single_input_identity(self):
        a = np.array([[3, 1], [2, 5]])
        assert np.array_equal(exact_aggregate([a]), a)

    def test_empty_with_declared_shape(self):
        assert np.array_equal(exact_aggregate([], shape=(2, 2)), np.zeros((2, 2)))

    def test_empty_without_shape_rejected(self):
        with pytest.raises(ValueError):
            exact_aggregate([])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            exact_aggregate([np.zeros((2, 2)), np.zeros((3, 2))])

    def test_l1_norm_adds_up(self, rng):
        mats = [rng.integers(0, 5, size=(3, 4)) for _ in range(6)]
        total = exact_aggregate(mats)
        assert total.sum() == sum(m.sum() for m in mats)

    @given(st.lists(st.integers(0, 5), min_size=8, max_size=8), st.permutations(range(3)))
    def test_order_invariant(self, flat, order):
        mats = [np.array(flat).reshape(2, 4), np.ones((2, 4), dtype=int), np.arange(8).reshape(2, 4)]
        expected = exact_aggregate(mats)
        assert np.array_equal(exact_aggregate([mats[i] for i in order]), expected)


class TestLabels:
    def test_hard_label_max(self):
        assert hard_label(np.array([2, 0])) == 0

    def test_hard_label_tie_smallest_index(self):
        assert hard_label(np.array([1, 1])) == 0

    def test_hard_label_noisy_reals(self):
        assert hard_label(np.array([0.3, 5.1, -2.0])) == 1

    def test_all_zero_row_flagged_degenerate(self):
        counts = np.array([[0.0, 0.0], [1.0, 0.0]])
        assert hard_label(counts[0]) == 0
        assert list(degenerate_buckets(counts)) == [0]

    def test_soft_label_normalizes(self):
        assert np.allclose(soft_label(np.array([2, 2])), [0.5, 0.5])
        assert np.allclose(soft_label(np.array([3, 0, 1])), [0.75, 0.0, 0.25])

    def test_soft_label_clamps_negatives(self):
        assert np.allclose(soft_label(np.array([-1.0, 2.0])), [0.0, 1.0])

    def test_soft_label_degenerate_uniform(self):
        assert np.allclose(soft_label(np.array([-3.0, -1.0])), [0.5, 0.5])

    @given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=6))
    def test_soft_sums_to_one(self, row):
        probs = soft_label(np.array(row))
        assert probs.min() >= 0
        assert abs(probs.sum() - 1.0) < 1e-12

    @given(
        st.lists(st.integers(0, 100), min_size=2, max_size=8).filter(
            lambda row: sorted(row)[-1] != sorted(row)[-2]
        )
    )
    def test_hard_soft_agree_without_ties_or_clamping(self, row):
        counts = np.array(row, dtype=float)
        assert hard_label(counts) == int(np.argmax(soft_label(counts)))


class TestCountGap:
    def test_examples(self):
        assert count_gap(np.array([5, 2, 1]), 0) == 3
        assert count_gap(np.array([1, 1]), 0) == 0
        assert count_gap(np.array([0, 4]), 0) == -4

    def test_needs_two_labels(self):
        with pytest.raises(ValueError):
            count_gap(np.array([1.0]), 0)

    def test_wide_gap_survives_bounded_perturbation(self, rng):
        # buckets whose gap is at least 2*alpha keep their hard label under
        # any perturbation below alpha, so an (alpha, beta)-accurate oracle
        # labels them correctly with probability >= 1 - beta
        alpha = 3.0
        row = np.array([10.0, 4.0, 1.0])  # gap 6 = 2*alpha
        for _ in range(200):
            noise = rng.uniform(-alpha, alpha, size=3) * 0.999
            assert hard_label(row + noise) == 0


class TestEmpiricalAccuracy:
    def test_below_eta_passes(self):
        trials = [(np.array([[2.0, 0.0]]), np.array([[2.5, -0.4]]))]
        assert empirical_accuracy(trials, eta=1.0) == 0.0

    def test_at_eta_fails(self):
        trials = [(np.array([[2.0, 0.0]]), np.array([[2.5, -0.4]]))]
        assert empirical_accuracy(trials, eta=0.4) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            empirical_accuracy([], eta=1.0)

    def test_laplace_trials_respect_prop_bound(self, rng):
        # Monte-Carlo against the Laplace tail: with b = 20 (k=r=1, eps=0.1)
        # and eta at the stated bound, per-bucket failure must stay near beta
        params = PrivacyParams(0.1, PrivacyModel.CENTRAL, k=1, r=1, s=1, label_count=10)
        beta = 0.05
        eta = laplace_accuracy_bound(params, beta)
        assert eta == pytest.approx(2 * math.log(10 / beta) / 0.1, rel=1e-12)
        exact = np.zeros((1, 10))
        trials = []
        for _ in range(10_000):
            trials.append((exact, exact + sample_laplace(20.0, rng, size=(1, 10))))
        assert empirical_accuracy(trials, eta) <= beta + 0.02

    def test_per_bucket_rates_separate_from_max(self, rng):
        exact = np.zeros((3, 2))
        trials = []
        for _ in range(500):
            noisy = exact.copy()
            noisy[0, 0] = 10.0  # only bucket 0 ever fails
            trials.append((exact, noisy))
        rates = per_bucket_failure_rates(trials, eta=5.0)
        assert rates[0] == 1.0 and rates[1] == 0.0 and rates[2] == 0.0
        assert empirical_accuracy(trials, eta=5.0) == 1.0


class TestSensitivity:
    def test_random_swaps_stay_below_2kr(self, rng):
        for k, r in ((1, 1), (2, 1), (2, 2), (3, 2)):
            bound = 2 * k * r
            for _ in range(40):
                records = random_record_set(rng, m=8, dim=3, label_count=4, r=r)
                neighbor = swap_one_record(records, rng, r)
                queries = random_queries(rng, s=6, dim=3)
                diff = np.abs(
                    pipeline_aggregate(records, queries, k)
                    - pipeline_aggregate(neighbor, queries, k)
                ).sum()
                assert diff <= bound


class TestPrivacyParams:
    def test_pure_models_require_zero_delta(self):
        with pytest.raises(ValueError, match="delta"):
            PrivacyParams(1.0, PrivacyModel.CENTRAL, 1, 1, 2, 2, delta=0.1)
        with pytest.raises(ValueError, match="delta"):
            PrivacyParams(1.0, PrivacyModel.LOCAL, 1, 1, 2, 2, delta=1e-6)

    def test_shuffle_models_require_positive_delta(self):
        with pytest.raises(ValueError, match="delta"):
            PrivacyParams(1.0, PrivacyModel.SHUFFLE_MULTI, 1, 1, 2, 2, delta=0.0)
        PrivacyParams(1.0, PrivacyModel.SHUFFLE_SINGLE, 1, 1, 2, 2, delta=1e-6)

    def test_sensitivity_and_budget_split(self):
        params = PrivacyParams(0.3, PrivacyModel.CENTRAL, k=2, r=3, s=4, label_count=5)
        assert params.sensitivity == 12
        assert params.per_iteration(3).epsilon == pytest.approx(0.1)

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            PrivacyParams(1.0, PrivacyModel.CENTRAL, 0, 1, 2, 2)
        with pytest.raises(ValueError):
            PrivacyParams(-1.0, PrivacyModel.CENTRAL, 1, 1, 2, 2)
        with pytest.raises(ValueError):
            PrivacyParams(1.0, PrivacyModel.CENTRAL, 1, 3, 2, 2)


class TestLabelVector:
    def test_multi_hot(self):
        bits = label_vector([3, 7], 10)
        assert bits.sum() == 2 and bits[3] == 1 and bits[7] == 1

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            label_vector([10], 10)

    @given(st.sets(st.integers(0, 9), min_size=1, max_size=5))
    def test_cardinality_matches(self, indices):
        assert label_vector(indices, 10).sum() == len(indices)


def test_hard_labels_vectorized():
    counts = np.array([[1, 2], [5, 0], [3, 3]])
    assert np.array_equal(hard_labels(counts), [1, 0, 0])


class TestAccuracySpecAndRecords:
    def test_accuracy_spec_validation(self):
        from privlabel.core import AccuracySpec, Record, RecordSet

        spec = AccuracySpec(eta=2.0, beta=0.05)
        assert spec.eta == 2.0
        with pytest.raises(ValueError):
            AccuracySpec(eta=0.0, beta=0.05)
        with pytest.raises(ValueError):
            AccuracySpec(eta=1.0, beta=1.0)

    def test_record_set_from_records(self):
        from privlabel.core import Record, RecordSet

        records = [
            Record(np.array([0.0, 1.0]), label_vector([0], 3), record_id="a"),
            Record(np.array([2.0, 3.0]), label_vector([2], 3), record_id="b"),
        ]
        stacked = RecordSet.from_records(records)
        assert stacked.m == 2 and stacked.dim == 2 and stacked.r == 1
        assert stacked.ids.tolist() == ["a", "b"]
        with pytest.raises(ValueError):
            RecordSet.from_records([])

    def test_mixed_cardinality_rejected(self):
        from privlabel.core import RecordSet

        labels = np.array([[1, 0, 0], [1, 1, 0]], dtype=np.uint8)
        with pytest.raises(ValueError, match="cardinality"):
            RecordSet(np.zeros((2, 2)), labels)
