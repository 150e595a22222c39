import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surgbench.errors import DomainError, EmptyAggregateError
from surgbench.masks import BinaryMask, pixel_counts
from surgbench.metrics import (
    ClassSummary,
    ExampleMetrics,
    PixelCounts,
    aggregate,
    class_mean,
    dice,
    iou,
    precision,
    recall,
)


def naive_counts(pred, gt):
    """Independent oracle: nested-loop pixel counting."""
    inter = union = psum = gsum = 0
    h, w = pred.shape
    for r in range(h):
        for c in range(w):
            p, g = bool(pred[r, c]), bool(gt[r, c])
            inter += p and g
            union += p or g
            psum += p
            gsum += g
    return inter, union, psum, gsum


OFFSET_BLOCK_COUNTS = PixelCounts(intersection=1, union=7, predicted_sum=4, ground_truth_sum=4)


class TestPerExampleMetrics:
    def test_identity_pair(self):
        counts = PixelCounts(intersection=5, union=5, predicted_sum=5, ground_truth_sum=5)
        assert iou(counts) == 1.0
        assert dice(counts) == 1.0
        assert precision(counts) == 1.0
        assert recall(counts) == 1.0

    def test_offset_blocks(self):
        assert iou(OFFSET_BLOCK_COUNTS) == pytest.approx(1 / 7)
        assert dice(OFFSET_BLOCK_COUNTS) == 0.25
        assert precision(OFFSET_BLOCK_COUNTS) == 0.25
        assert recall(OFFSET_BLOCK_COUNTS) == 0.25

    def test_zero_denominator_conventions(self):
        empty = PixelCounts(intersection=0, union=0, predicted_sum=0, ground_truth_sum=0)
        assert iou(empty) == 0.0
        assert dice(empty) == 0.0
        assert precision(empty) == 0.0
        assert recall(empty) == 0.0

    def test_empty_prediction_nonempty_gt(self):
        counts = PixelCounts(intersection=0, union=4, predicted_sum=0, ground_truth_sum=4)
        assert precision(counts) == 0.0
        assert recall(counts) == 0.0
        assert iou(counts) == 0.0
        assert dice(counts) == 0.0

    def test_counts_validation(self):
        with pytest.raises(DomainError):
            PixelCounts(intersection=5, union=5, predicted_sum=4, ground_truth_sum=5)
        with pytest.raises(DomainError):
            PixelCounts(intersection=1, union=9, predicted_sum=4, ground_truth_sum=4)

    def test_oracle_equivalence_random_pairs(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            pred = rng.random((16, 16)) < 0.4
            gt = rng.random((16, 16)) < 0.4
            counts = pixel_counts(BinaryMask.from_array(pred), BinaryMask.from_array(gt))
            inter, union, psum, gsum = naive_counts(pred, gt)
            assert (counts.intersection, counts.union, counts.predicted_sum, counts.ground_truth_sum) == (inter, union, psum, gsum)
            expected_iou = inter / union if union else 0.0
            expected_dice = 2 * inter / (psum + gsum) if psum + gsum else 0.0
            assert abs(iou(counts) - expected_iou) <= 1e-12
            assert abs(dice(counts) - expected_dice) <= 1e-12

    @given(
        st.integers(0, 50), st.integers(0, 50), st.integers(0, 50)
    )
    @settings(max_examples=200, deadline=None)
    def test_dice_iou_relation(self, inter, extra_p, extra_g):
        counts = PixelCounts(
            intersection=inter,
            union=inter + extra_p + extra_g,
            predicted_sum=inter + extra_p,
            ground_truth_sum=inter + extra_g,
        )
        if counts.union > 0:
            j = iou(counts)
            assert dice(counts) == pytest.approx(2 * j / (1 + j), abs=1e-12)

    def test_all_ones_iff_equal_nonempty(self):
        equal = PixelCounts(intersection=3, union=3, predicted_sum=3, ground_truth_sum=3)
        assert {iou(equal), dice(equal), precision(equal), recall(equal)} == {1.0}
        unequal = PixelCounts(intersection=3, union=4, predicted_sum=4, ground_truth_sum=3)
        assert dice(unequal) < 1.0


def make_example(dice_value, class_id="c", example_id="e"):
    return ExampleMetrics(
        example_id=example_id,
        class_id=class_id,
        iou=dice_value,
        dice=dice_value,
        precision=dice_value,
        recall=dice_value,
    )


class TestClassMean:
    def test_single_example(self):
        summary = class_mean([make_example(0.7)])
        assert summary.mean_dice == 0.7
        assert summary.n == 1

    def test_symmetric_pair(self):
        summary = class_mean([make_example(1.0, example_id="a"), make_example(0.0, example_id="b")])
        assert summary.mean_dice == 0.5

    def test_three_values(self):
        summary = class_mean([make_example(v, example_id=str(v)) for v in (0.8, 0.9, 0.7)])
        assert summary.mean_dice == pytest.approx(0.8)

    def test_empty_list(self):
        summary = class_mean([], class_id="empty")
        assert summary.n == 0
        assert summary.mean_dice is None

    def test_mixed_classes_rejected(self):
        with pytest.raises(DomainError):
            class_mean([make_example(0.5, class_id="a"), make_example(0.5, class_id="b")])


class TestAggregate:
    def test_weighted_example(self):
        summaries = [
            ClassSummary(class_id="A", n=3, mean_dice=0.8),
            ClassSummary(class_id="B", n=1, mean_dice=0.4),
        ]
        agg = aggregate(summaries)
        assert agg.wmdc == pytest.approx(0.7)
        assert agg.mdc == pytest.approx(0.6)
        assert (agg.N, agg.C) == (4, 2)

    def test_single_class(self):
        agg = aggregate([ClassSummary(class_id="A", n=5, mean_dice=0.62)])
        assert agg.wmdc == agg.mdc == 0.62

    def test_include_filter(self):
        summaries = [
            ClassSummary(class_id="tissue", n=2, mean_dice=0.9),
            ClassSummary(class_id="instrument", n=10, mean_dice=0.1),
        ]
        agg = aggregate(summaries, include=["tissue"])
        assert agg.wmdc == 0.9
        assert agg.C == 1

    def test_empty_after_filter(self):
        with pytest.raises(EmptyAggregateError):
            aggregate([ClassSummary(class_id="A", n=0)])

    def test_order_and_merge_invariance(self):
        a = [make_example(v, class_id="A", example_id=str(i)) for i, v in enumerate((0.2, 0.4, 0.9))]
        merged = aggregate([class_mean(a), ClassSummary(class_id="B", n=2, mean_dice=0.5)])
        # split class A's examples across two calls, re-merge by weighted mean
        s1, s2 = class_mean(a[:1]), class_mean(a[1:])
        recombined = ClassSummary(
            class_id="A",
            n=s1.n + s2.n,
            mean_dice=(s1.n * s1.mean_dice + s2.n * s2.mean_dice) / (s1.n + s2.n),
        )
        remerged = aggregate([ClassSummary(class_id="B", n=2, mean_dice=0.5), recombined])
        assert remerged.wmdc == pytest.approx(merged.wmdc)
        assert remerged.mdc == pytest.approx(merged.mdc)

    @given(st.lists(st.tuples(st.integers(1, 20), st.floats(0, 1)), min_size=1, max_size=8))
    @settings(max_examples=100, deadline=None)
    def test_wmdc_bounded_by_class_means(self, class_data):
        summaries = [
            ClassSummary(class_id=f"c{i}", n=n, mean_dice=d)
            for i, (n, d) in enumerate(class_data)
        ]
        agg = aggregate(summaries)
        dices = [s.mean_dice for s in summaries]
        assert min(dices) - 1e-12 <= agg.wmdc <= max(dices) + 1e-12
