import numpy as np
import pytest

from fedsentry.metrics import (
    RoundRecord,
    UNDETECTED,
    attack_success_rate,
    confusion_matrix,
    earliest_detection,
    evaluate,
)
from fedsentry.training import SoftmaxClassifier


class ConstantPredictor:
    """Always predicts class 0; enough for metric plumbing tests."""

    num_classes = 2

    def predict(self, params, x):
        return np.zeros(len(x), dtype=np.int64)


class TestEvaluate:
    def test_perfect_predictions(self):
        model = SoftmaxClassifier(2, 3)
        # weights that trivially pick the argmax of the 2 features against 3 classes
        x = np.array([[5.0, 0.0], [0.0, 5.0], [-5.0, -5.0]])
        y = np.array([0, 1, 2])
        params = np.zeros(model.num_params)
        w = np.array([[4.0, 0.0, -4.0], [0.0, 4.0, -4.0]])
        params[: w.size] = w.ravel()
        accuracy, macro_f1, confusion = evaluate(model, params, x, y)
        assert accuracy == 1.0
        assert macro_f1 == 1.0
        assert np.array_equal(confusion, np.eye(3, dtype=np.int64))

    def test_constant_predictor_on_balanced_pair(self):
        x = np.zeros((10, 2))
        y = np.array([0] * 5 + [1] * 5)
        accuracy, macro_f1, confusion = evaluate(ConstantPredictor(), None, x, y)
        assert accuracy == 0.5
        # class 0: precision .5 recall 1 -> f1 2/3; class 1: undefined -> 0
        assert macro_f1 == pytest.approx((2 / 3) / 2)
        assert confusion[0, 0] == 5 and confusion[1, 0] == 5

    def test_hand_computed_fixture(self):
        y_true = np.array([0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 2])
        y_pred = np.array([0, 0, 0, 0, 1, 2, 1, 1, 1, 1, 1, 0, 0, 2, 2, 2, 2, 2, 0, 1])

        class Fixed:
            num_classes = 3

            def predict(self, params, x):
                return y_pred

        accuracy, macro_f1, confusion = evaluate(Fixed(), None, np.zeros((20, 1)), y_true)
        assert accuracy == pytest.approx(14 / 20)
        # per-class F1 from the confusion counts, worked out by hand
        f1_0 = 2 * 4 / (2 * 4 + 3 + 2)
        f1_1 = 2 * 5 / (2 * 5 + 2 + 2)
        f1_2 = 2 * 5 / (2 * 5 + 1 + 2)
        assert macro_f1 == pytest.approx((f1_0 + f1_1 + f1_2) / 3)
        assert confusion.sum() == 20
        assert np.trace(confusion) == 14

    def test_empty_test_set_rejected(self):
        with pytest.raises(ValueError):
            evaluate(ConstantPredictor(), None, np.zeros((0, 2)), np.array([], dtype=int))


class TestAttackSuccessRate:
    def test_zero_when_targeted_correct(self):
        confusion = np.diag([10, 10, 10])
        assert attack_success_rate(confusion, (0, 1)) == 0.0

    def test_counts_any_error_on_targeted(self):
        confusion = np.array([[3, 1, 1], [0, 4, 1], [0, 0, 10]])
        # 2 of 5 true-0 wrong, 1 of 5 true-1 wrong -> 3/10
        assert attack_success_rate(confusion, (0, 1)) == pytest.approx(0.3)

    def test_flip_direction_only_mode(self):
        confusion = np.array([[3, 1, 1], [0, 4, 1], [0, 0, 10]])
        assert attack_success_rate(confusion, (0, 1), mode="flip_direction_only") == (
            pytest.approx(0.1)
        )

    def test_two_path_equivalence(self, rng):
        for _ in range(20):
            num_classes = int(rng.integers(3, 6))
            y_true = rng.integers(0, num_classes, size=200)
            y_pred = rng.integers(0, num_classes, size=200)
            confusion = confusion_matrix(y_true, y_pred, num_classes)
            pair = (0, 1)
            targeted = (y_true == pair[0]) | (y_true == pair[1])
            direct = float(
                (targeted & (y_pred != y_true)).sum() / max(targeted.sum(), 1)
            )
            assert attack_success_rate(confusion, pair) == pytest.approx(direct)

    def test_zero_targeted_rejected(self):
        confusion = np.zeros((3, 3), dtype=np.int64)
        confusion[2, 2] = 4
        with pytest.raises(ValueError):
            attack_success_rate(confusion, (0, 1))

    def test_bad_mode_rejected(self):
        with pytest.raises(ValueError):
            attack_success_rate(np.diag([1, 1]), (0, 1), mode="strictest")


class TestEarliestDetection:
    def test_first_true_index(self):
        assert earliest_detection([False, False, True, False, True]) == 3

    def test_never_detected(self):
        assert earliest_detection([False] * 30) is UNDETECTED

    def test_immediate(self):
        assert earliest_detection([True, True]) == 1

    def test_monotone_under_prefixing(self, rng):
        for _ in range(20):
            flags = rng.random(12) < 0.4
            base = earliest_detection(list(flags))
            k = int(rng.integers(1, 5))
            prefixed = earliest_detection([False] * k + list(flags))
            if base is UNDETECTED:
                assert prefixed is UNDETECTED
            else:
                assert prefixed == base + k


class TestRoundRecord:
    def test_confusion_consistency(self):
        confusion = np.array([[5, 1], [2, 4]])
        record = RoundRecord(
            round=1, train_loss=0.5, test_accuracy=9 / 12, macro_f1=0.7,
            asr=0.25, detection_exact=True, n_excluded=2, confusion=confusion,
        )
        assert record.confusion.sum() == 12
        assert record.test_accuracy == pytest.approx(np.trace(confusion) / confusion.sum())

    def test_rounds_are_one_based(self):
        with pytest.raises(ValueError):
            RoundRecord(
                round=0, train_loss=0.0, test_accuracy=0.0, macro_f1=0.0,
                asr=0.0, detection_exact=False, n_excluded=0,
                confusion=np.zeros((2, 2), dtype=np.int64),
            )
