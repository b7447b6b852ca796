import math

import numpy as np
import pytest
import torch

from src.core.errors import ArgumentError, ShapeError
from src.core.models import DiceReduction, LossConfig
from src.objectives import (
    accuracy,
    cce_loss,
    classwise_report,
    confusion_matrix,
    dice_coefficient,
    hard_dice,
    hybrid_loss,
    iou,
    metrics_report,
)

EPS = 1e-6


def onehot(labels, num_classes=8):
    return torch.nn.functional.one_hot(torch.as_tensor(labels), num_classes).double()


class TestLosses:
    def test_cce_perfect(self):
        y = onehot([[0, 3], [7, 7]])
        assert cce_loss(y, y).item() == pytest.approx(0.0, abs=1e-6)

    def test_cce_uniform(self):
        y = onehot([[0, 3], [5, 1]])
        assert cce_loss(y, torch.full_like(y, 1 / 8)).item() == pytest.approx(math.log(8))

    def test_cce_single_pixel(self):
        y = onehot([[2]])
        pred = torch.full((1, 1, 8), 0.75 / 7, dtype=torch.float64)
        pred[0, 0, 2] = 0.25
        assert cce_loss(y, pred).item() == pytest.approx(1.3863, abs=1e-4)

    def test_cce_shape_mismatch(self):
        with pytest.raises(ShapeError):
            cce_loss(onehot([[0]]), torch.ones(1, 2, 8))

    @pytest.mark.parametrize("reduction", list(DiceReduction))
    def test_dice_identical(self, reduction):
        y = onehot(np.random.default_rng(0).integers(0, 8, (4, 4)))
        assert dice_coefficient(y, y, EPS, reduction).item() == pytest.approx(1.0)

    def test_dice_disjoint_global(self):
        y_true = onehot([[0, 0], [1, 1]], 2)
        y_pred = onehot([[1, 1], [0, 0]], 2)
        n = 8.0
        assert dice_coefficient(y_true, y_pred, EPS, DiceReduction.GLOBAL).item() == pytest.approx(EPS / (n + EPS), rel=1e-9)

    def test_dice_half_overlap(self):
        a = torch.tensor([[1.0, 1.0], [0.0, 0.0]]).unsqueeze(-1)
        b = torch.tensor([[1.0, 0.0], [1.0, 0.0]]).unsqueeze(-1)
        assert dice_coefficient(a, b, EPS, DiceReduction.GLOBAL).item() == pytest.approx(0.5, abs=1e-6)

    def test_dice_reductions_differ(self):
        y_true = onehot([[0, 0, 0, 1]], 2)
        y_pred = onehot([[0, 0, 0, 0]], 2)
        # global: 2*3 / (4 + 4); per class: (6/7 + eps-only) / 2
        assert dice_coefficient(y_true, y_pred, EPS, DiceReduction.GLOBAL).item() == pytest.approx(0.75, abs=1e-6)
        expected = (6 / 7 + EPS / (1 + EPS)) / 2
        assert dice_coefficient(y_true, y_pred, EPS, DiceReduction.MEAN_OVER_CLASSES).item() == pytest.approx(expected, abs=1e-6)

    def test_hybrid_perfect(self):
        y = onehot([[1, 2], [3, 4]])
        assert hybrid_loss(y, y).item() == pytest.approx(0.0, abs=1e-6)

    def test_hybrid_composes(self):
        y = onehot([[2]])
        pred = torch.full((1, 1, 8), 0.75 / 7, dtype=torch.float64)
        pred[0, 0, 2] = 0.25
        config = LossConfig()
        expected = cce_loss(y, pred) + 0.5 * (1 - dice_coefficient(y, pred, config.smoothing, config.dice_reduction))
        assert hybrid_loss(y, pred, config).item() == pytest.approx(expected.item(), rel=1e-12)
        assert hybrid_loss(y, pred, config).item() > 0

    @pytest.mark.parametrize("reduction", list(DiceReduction))
    def test_gradient_matches_finite_differences(self, reduction):
        rng = np.random.default_rng(1234)
        config = LossConfig(dice_reduction=reduction)
        step = 1e-4
        trials = 100 if reduction == DiceReduction.MEAN_OVER_CLASSES else 20
        for _ in range(trials):
            y_true = onehot(rng.integers(0, 8, (4, 4)))
            y_pred = torch.softmax(torch.as_tensor(rng.normal(size=(4, 4, 8))), dim=-1).requires_grad_(True)
            (analytic,) = torch.autograd.grad(hybrid_loss(y_true, y_pred, config), y_pred)

            numeric = torch.zeros_like(analytic)
            base = y_pred.detach()
            with torch.no_grad():
                for index in np.ndindex(*base.shape):
                    plus, minus = base.clone(), base.clone()
                    plus[index] += step
                    minus[index] -= step
                    numeric[index] = (hybrid_loss(y_true, plus, config) - hybrid_loss(y_true, minus, config)) / (2 * step)
            rel = torch.linalg.norm(analytic - numeric) / torch.linalg.norm(numeric)
            assert rel.item() < 1e-4


class TestMetrics:
    def test_accuracy(self):
        a = np.array([[0, 1], [2, 3]])
        assert accuracy(a, a) == 1.0
        assert accuracy(a, np.array([[0, 1], [2, 4]])) == 0.75

    def test_accuracy_shape(self):
        with pytest.raises(ShapeError):
            accuracy(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_binary_iou_and_dice(self):
        truth = np.array([[1, 1], [0, 0]])
        pred = np.array([[1, 0], [1, 0]])
        assert iou(truth, pred, 1) == pytest.approx(1 / 3)
        assert hard_dice(truth, pred, 1) == pytest.approx(0.5)

    def test_absent_class(self):
        mask = np.zeros((3, 3), dtype=int)
        assert iou(mask, mask, 5) == 1.0
        report = metrics_report(mask, mask)
        assert report.absent_classes == [1, 2, 3, 4, 5, 6, 7]
        assert report.per_class_accuracy[5] == 1.0
        assert report.iou == report.dice == report.accuracy == 1.0

    def test_false_positive_only_class_scores_zero(self):
        truth = np.zeros((2, 2), dtype=int)
        pred = np.array([[0, 0], [0, 4]])
        scores = classwise_report(truth, pred)
        assert scores["iou"][4] == 0.0 and scores["accuracy"][4] == 0.0
        assert scores["present"][4]

    def test_invalid_class(self):
        with pytest.raises(ArgumentError):
            iou(np.zeros((2, 2)), np.zeros((2, 2)), 8)

    def test_confusion_matrix_by_hand(self):
        truth = np.array([[0, 0, 1], [1, 2, 2], [2, 2, 0]])
        pred = np.array([[0, 1, 1], [1, 2, 0], [2, 2, 0]])
        cm = confusion_matrix(truth, pred, 3)
        np.testing.assert_array_equal(cm, [[2, 1, 0], [0, 2, 0], [1, 0, 3]])
        assert cm.sum() == 9

    def test_oracle_equivalence(self):
        rng = np.random.default_rng(2024)
        for trial in range(1200):
            size = 8 if trial < 1000 else 4
            # restricting the label range leaves some classes absent
            high = rng.integers(2, 9)
            truth = rng.integers(0, high, (size, size))
            pred = rng.integers(0, high, (size, size))

            counts = np.zeros((8, 8), dtype=np.int64)
            for t, p in zip(truth.ravel(), pred.ravel()):
                counts[t, p] += 1
            ious, dices = {}, {}
            for c in range(8):
                tp = counts[c, c]
                fp = counts[:, c].sum() - tp
                fn = counts[c, :].sum() - tp
                if tp + fp + fn:
                    ious[c] = tp / (tp + fp + fn)
                    dices[c] = 2 * tp / (2 * tp + fp + fn)

            report = metrics_report(truth, pred)
            assert report.accuracy == pytest.approx(np.trace(counts) / counts.sum(), abs=1e-12)
            assert report.iou == pytest.approx(np.mean(list(ious.values())), abs=1e-12)
            assert report.dice == pytest.approx(np.mean(list(dices.values())), abs=1e-12)
            assert accuracy(truth, pred) == pytest.approx(report.accuracy, abs=1e-12)
            for c, value in ious.items():
                assert iou(truth, pred, c) == pytest.approx(value, abs=1e-12)
                assert hard_dice(truth, pred, c) == pytest.approx(dices[c], abs=1e-12)
                assert report.per_class_dice[c] == pytest.approx(2 * value / (1 + value), abs=1e-9)

    def test_class_permutation_invariance(self):
        rng = np.random.default_rng(7)
        truth = rng.integers(0, 8, (8, 8))
        pred = rng.integers(0, 8, (8, 8))
        perm = rng.permutation(8)
        a, b = metrics_report(truth, pred), metrics_report(perm[truth], perm[pred])
        assert (a.accuracy, a.iou) == pytest.approx((b.accuracy, b.iou))
        assert a.dice == pytest.approx(b.dice)

    def test_report_tables(self):
        truth = np.array([[0, 1], [2, 3]])
        report = metrics_report(truth, truth, loss=0.125)
        table = report.summary_table()
        assert list(table["Metric"]) == ["Accuracy", "Dice Coefficient", "Jaccard Index (IoU)", "Loss"]
        assert list(table["Value"]) == [1.0, 1.0, 1.0, 0.125]
        classwise = report.classwise_table()
        assert list(classwise.index) == ["IoU Score", "Segmentation Accuracy (%)"]
        assert classwise.loc["Segmentation Accuracy (%)", "0"] == 100.0
