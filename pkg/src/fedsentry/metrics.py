"""Evaluation metrics: accuracy, macro F1, confusion matrices, attack
success rate, and the earliest-exact-detection round."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# rendered "*" in reports: the flagged set never matched the attacker set
UNDETECTED = None


@dataclass(frozen=True)
class RoundRecord:
    """Per-round metrics bundle emitted by the experiment harness."""

    round: int
    train_loss: float
    test_accuracy: float
    macro_f1: float
    asr: float
    detection_exact: bool
    n_excluded: int
    confusion: np.ndarray

    def __post_init__(self):
        if self.round < 1:
            raise ValueError("rounds are 1-based")


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int) -> np.ndarray:
    """Count matrix with true classes on rows and predictions on columns."""
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return counts


def _per_class_f1(confusion: np.ndarray, c: int) -> float:
    tp = confusion[c, c]
    fp = confusion[:, c].sum() - tp
    fn = confusion[c, :].sum() - tp
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 2.0 * tp / denom


def evaluate(model, params: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Accuracy, macro F1, and confusion matrix of argmax predictions.

    Macro F1 is the unweighted mean of per-class F1, with an absent
    class's 0/0 counted as 0.
    """
    if len(y) == 0:
        raise ValueError("test set is empty")
    pred = model.predict(params, x)
    confusion = confusion_matrix(y, pred, model.num_classes)
    accuracy = float(np.trace(confusion)) / len(y)
    macro_f1 = float(
        np.mean([_per_class_f1(confusion, c) for c in range(model.num_classes)])
    )
    return accuracy, macro_f1, confusion


def attack_success_rate(
    confusion: np.ndarray,
    flip_pair: tuple[int, int],
    mode: str = "any_error",
) -> float:
    """Fraction of targeted-class test samples the model got wrong.

    The targeted samples are those whose true class is either side of the
    flip pair. Mode "any_error" counts every misclassification of a
    targeted sample; "flip_direction_only" counts only confusions between
    the two flipped classes.
    """
    a, b = flip_pair
    num_classes = confusion.shape[0]
    if not (0 <= a < num_classes and 0 <= b < num_classes) or a == b:
        raise ValueError(f"invalid flip pair ({a}, {b}) for {num_classes} classes")
    targeted = int(confusion[a].sum() + confusion[b].sum())
    if targeted == 0:
        raise ValueError("no targeted-class samples in the test set")
    if mode == "any_error":
        wrong = targeted - int(confusion[a, a] + confusion[b, b])
    elif mode == "flip_direction_only":
        wrong = int(confusion[a, b] + confusion[b, a])
    else:
        raise ValueError(f"unknown asr mode {mode!r}")
    return wrong / targeted


def earliest_detection(per_round_exactness: list[bool]):
    """1-based index of the first round with an exact detection.

    Returns UNDETECTED (rendered "*") when no round matched.
    """
    for i, exact in enumerate(per_round_exactness):
        if exact:
            return i + 1
    return UNDETECTED
