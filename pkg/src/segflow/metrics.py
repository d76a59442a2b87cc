#!/usr/bin/env python3

"""Segmentation scores after optimal label alignment.

Sampled state labels are arbitrary, so a prediction is first matched to the
ground truth by maximum agreement on the confusion matrix, then scored with
accuracy and the support-weighted F1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import linear_sum_assignment
from sklearn.metrics import f1_score

from segflow.errors import DataFormatError

UNMATCHED = -1
"""Label given to predicted classes left without a true class."""


@dataclass
class Alignment:
    """Injective matching of predicted to true labels.

    Attributes:
        matching (dict): Predicted label -> true label.
        aligned (numpy.ndarray): Prediction relabeled through `matching`;
            unmatched classes become `UNMATCHED`.
    """
    matching: Dict[int, int]
    aligned: np.ndarray


@dataclass
class SegmentationScore:
    accuracy: float
    weighted_f1: float
    n_switches: int
    matching: Dict[int, int] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, Any]:
        matching = ' '.join(f'{p}:{t}' for p, t in sorted(self.matching.items()))
        return {'accuracy': self.accuracy, 'weighted_f1': self.weighted_f1,
                'n_switches': self.n_switches, 'matching': matching}


def _check_lengths(predicted: np.ndarray, truth: np.ndarray):
    if predicted.shape != truth.shape:
        raise DataFormatError(f'prediction has {predicted.size} timesteps, truth has {truth.size}')


def confusion(predicted: ArrayLike, truth: ArrayLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Confusion counts between the distinct predicted and true labels.

    Returns:
        tuple: (P, C) counts, predicted labels, true labels.
    """
    predicted = np.asarray(predicted, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    _check_lengths(predicted, truth)
    pred_labels, pred_idx = np.unique(predicted, return_inverse=True)
    true_labels, true_idx = np.unique(truth, return_inverse=True)
    counts = np.zeros((pred_labels.size, true_labels.size), dtype=np.int64)
    np.add.at(counts, (pred_idx, true_idx), 1)
    return counts, pred_labels, true_labels


def align_labels(predicted: ArrayLike, truth: ArrayLike) -> Alignment:
    """Maximum-agreement injective matching, solved as an assignment problem.

    Predicted classes beyond the number of true classes stay unmatched and
    count as errors.
    """
    predicted = np.asarray(predicted, dtype=np.int64)
    counts, pred_labels, true_labels = confusion(predicted, truth)
    if counts.size == 0:
        return Alignment({}, predicted.copy())
    rows, cols = linear_sum_assignment(counts, maximize=True)
    matching = {int(pred_labels[r]): int(true_labels[c]) for r, c in zip(rows, cols)}
    lookup = np.full(pred_labels.size, UNMATCHED, dtype=np.int64)
    lookup[rows] = true_labels[cols]
    aligned = lookup[np.searchsorted(pred_labels, predicted)]
    return Alignment(matching, aligned)


def count_switches(labels: ArrayLike) -> int:
    labels = np.asarray(labels)
    return int(np.count_nonzero(labels[1:] != labels[:-1]))


def score(aligned: ArrayLike, truth: ArrayLike, matching: Dict[int, int] = None) -> SegmentationScore:
    """Accuracy and support-weighted F1 of an aligned prediction.

    The F1 average runs over the true classes only, so unmatched predictions
    lower recall without adding classes of their own.
    """
    aligned = np.asarray(aligned, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    _check_lengths(aligned, truth)
    if truth.size == 0:
        raise DataFormatError('cannot score an empty sequence')
    weighted_f1 = f1_score(truth, aligned, labels=np.unique(truth), average='weighted', zero_division=0)
    return SegmentationScore(
        accuracy=float(np.mean(aligned == truth)),
        weighted_f1=float(weighted_f1),
        n_switches=count_switches(aligned),
        matching=dict(matching or {}),
    )


def evaluate_segmentation(predicted: ArrayLike, truth: ArrayLike) -> SegmentationScore:
    """Align, then score."""
    alignment = align_labels(predicted, truth)
    return score(alignment.aligned, truth, alignment.matching)
