import numpy as np
import pytest

from liftseg.errors import ValidationError
from liftseg.metrics import (
    PALETTE,
    connected_components,
    evaluate,
    extract_labels,
    render_overlay,
)


def _pixel(*values):
    """Soft labels for a single-pixel-per-channel 1x1 grid... expanded to 3x3."""
    k = len(values)
    u = np.zeros((k, 3, 3))
    for i, v in enumerate(values):
        u[i, 1, 1] = v
    return u


class TestExtractLabels:
    def test_dominant_channel_wins(self):
        u = _pixel(0.7, 0.1, 0.1)
        assert extract_labels(u)[1, 1] == 1

    def test_residual_dominates_uniform_channels(self):
        u = _pixel(0.2, 0.2, 0.2)  # residual 0.4
        assert extract_labels(u)[1, 1] == 0

    def test_tie_goes_to_smallest_index(self):
        u = _pixel(0.5, 0.5, 0.0)  # residual 0, tie between 1 and 2
        assert extract_labels(u)[1, 1] == 1

    def test_argmax_invariance_under_monotone_transform(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            u = rng.uniform(0, 1, (3, 4, 4))
            u /= np.maximum(1.0, u.sum(axis=0)) + 0.05
            base = extract_labels(u)
            residual = 1.0 - u.sum(axis=0)
            stacked = np.concatenate([residual[None], u])
            transformed = np.exp(2.0 * stacked) - 0.5  # strictly increasing
            assert np.array_equal(base, np.argmax(transformed, axis=0))


class TestEvaluate:
    def test_identical_maps_perfect_scores(self):
        labels = np.random.default_rng(1).integers(0, 3, (8, 8))
        rep = evaluate(labels, labels, "fixed")
        assert all(d == 1.0 for d in rep.per_class_dice)
        assert rep.pixel_accuracy == 1.0

    def test_disjoint_masks_zero_dice(self):
        pred = np.zeros((4, 4), dtype=int)
        pred[:2] = 1
        truth = np.zeros((4, 4), dtype=int)
        truth[2:] = 1
        rep = evaluate(pred, truth, "fixed")
        assert rep.per_class_dice[1] == 0.0

    def test_four_pixel_hand_count(self):
        pred = np.array([[0, 0, 1, 1]])
        truth = np.array([[0, 1, 1, 1]])
        rep = evaluate(pred, truth, "fixed")
        assert rep.per_class_dice[0] == pytest.approx(2 / 3)
        assert rep.per_class_dice[1] == pytest.approx(4 / 5)

    def test_both_empty_class_scores_one(self):
        pred = np.zeros((3, 3), dtype=int)
        truth = np.zeros((3, 3), dtype=int)
        truth[0, 0] = 2  # class 1 empty in both
        rep = evaluate(pred, truth, "fixed")
        assert rep.per_class_dice[1] == 1.0
        assert rep.per_class_iou[1] == 1.0

    def test_best_permutation_recovers_relabeling(self):
        rng = np.random.default_rng(2)
        truth = rng.integers(0, 4, (10, 10))
        perm = np.array([2, 0, 3, 1])
        pred = perm[truth]
        rep = evaluate(pred, truth, "best-permutation")
        assert all(d == 1.0 for d in rep.per_class_dice)

    def test_best_permutation_invariant_to_pred_relabeling(self):
        rng = np.random.default_rng(3)
        truth = rng.integers(0, 3, (12, 12))
        pred = rng.integers(0, 3, (12, 12))
        base = evaluate(pred, truth, "best-permutation")
        shuffled = np.array([1, 2, 0])[pred]
        again = evaluate(shuffled, truth, "best-permutation")
        assert base.per_class_dice == again.per_class_dice
        assert base.pixel_accuracy == again.pixel_accuracy

    def test_iou_dice_relation(self):
        rng = np.random.default_rng(4)
        pred = rng.integers(0, 3, (15, 15))
        truth = rng.integers(0, 3, (15, 15))
        rep = evaluate(pred, truth, "fixed")
        for d, i in zip(rep.per_class_dice, rep.per_class_iou):
            assert i == pytest.approx(d / (2.0 - d), abs=1e-12)

    def test_confusion_row_column_sums(self):
        rng = np.random.default_rng(5)
        pred = rng.integers(0, 3, (9, 9))
        truth = rng.integers(0, 3, (9, 9))
        rep = evaluate(pred, truth, "fixed")
        for c in range(3):
            assert rep.confusion[c].sum() == (truth == c).sum()
            assert rep.confusion[:, c].sum() == (pred == c).sum()
        trace = np.trace(rep.confusion)
        assert rep.pixel_accuracy == pytest.approx(trace / truth.size)

    def test_size_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            evaluate(np.zeros((3, 3), int), np.zeros((3, 4), int))


class TestRenderOverlay:
    def test_all_background_is_plain_grayscale(self):
        rng = np.random.default_rng(6)
        f = rng.uniform(0, 1, (6, 6))
        out = render_overlay(f, np.zeros((6, 6), dtype=int))
        expected = np.round(255.0 * f).astype(np.uint8)
        assert np.array_equal(out[:, :, 0], expected)
        assert np.array_equal(out[:, :, 1], expected)
        assert np.array_equal(out[:, :, 2], expected)

    def test_full_cover_single_class_blend(self):
        f = np.full((5, 5), 0.4)
        out = render_overlay(f, np.ones((5, 5), dtype=int))
        color = np.asarray(PALETTE[0]) / 255.0
        expected = np.round(255.0 * (0.5 * 0.4 + 0.5 * color)).astype(np.uint8)
        assert np.all(out.reshape(-1, 3) == expected)

    def test_boundary_pixels_full_saturation(self):
        f = np.zeros((4, 4))
        labels = np.zeros((4, 4), dtype=int)
        labels[:, 2:] = 1
        out = render_overlay(f, labels)
        # the class-1 column adjacent to class 0 carries the pure palette color
        assert tuple(out[0, 2]) == PALETTE[0]
        # class-0 boundary pixels stay grayscale
        assert tuple(out[0, 1]) == (0, 0, 0)


class TestConnectedComponents:
    def test_bands(self):
        labels = np.zeros((4, 9), dtype=int)
        labels[:, 3:6] = 1
        labels[:, 6:] = 0
        comp, count = connected_components(labels)
        assert count == 3
        assert len(np.unique(comp)) == 3

    def test_single_component(self):
        comp, count = connected_components(np.full((5, 5), 7, dtype=int))
        assert count == 1
        assert np.all(comp == 0)

    def test_diagonal_not_connected(self):
        labels = np.zeros((2, 2), dtype=int)
        labels[0, 0] = 1
        labels[1, 1] = 1
        _, count = connected_components(labels)
        assert count == 4
