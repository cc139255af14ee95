"""Hard label extraction, evaluation metrics, and overlay rendering."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from liftseg.errors import ValidationError

# 10-color cycle for classes 1..K (class 0 stays uncolored); RGB bytes.
PALETTE = (
    (31, 119, 180),
    (255, 127, 14),
    (44, 160, 44),
    (214, 39, 40),
    (148, 103, 189),
    (140, 86, 75),
    (227, 119, 194),
    (127, 127, 127),
    (188, 189, 34),
    (23, 190, 207),
)

MAX_PERMUTATION_CLASSES = 6  # (K+1)! search is capped at K = 5


def extract_labels(u):
    """Hard partition from soft labels.

    The residual background channel is u_0 = 1 - sum_k u_k; each pixel
    takes the argmax over (u_0, u_1, .., u_K), ties resolved to the
    smallest index. Labels 1..K correspond to the feature channels,
    label 0 to the residual.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 3:
        raise ValidationError(f"soft labels must be (K, H, W), got {u.shape}")
    residual = 1.0 - u.sum(axis=0)
    stacked = np.concatenate([residual[None], u], axis=0)
    return np.argmax(stacked, axis=0).astype(np.int64)


@dataclass(frozen=True)
class EvaluationReport:
    """Per-class Dice/IoU, pixel accuracy, and the confusion matrix.

    confusion[t, p] counts pixels with truth label t and predicted label
    p (after permutation when best-permutation matching is used);
    permutation[c] is the original predicted label mapped onto class c.
    """

    per_class_dice: tuple
    per_class_iou: tuple
    pixel_accuracy: float
    confusion: np.ndarray
    permutation: tuple

    def to_dict(self):
        return {
            "per_class_dice": list(self.per_class_dice),
            "per_class_iou": list(self.per_class_iou),
            "pixel_accuracy": self.pixel_accuracy,
            "confusion": self.confusion.tolist(),
            "permutation": list(self.permutation),
        }


def _scores_for_perm(conf, perm):
    """Dice per class when predicted label perm[c] is mapped onto class c."""
    n = conf.shape[0]
    pred_counts = conf.sum(axis=0)
    truth_counts = conf.sum(axis=1)
    dice = np.empty(n)
    for c in range(n):
        tp = conf[c, perm[c]]
        denom = pred_counts[perm[c]] + truth_counts[c]
        dice[c] = 1.0 if denom == 0 else 2.0 * tp / denom
    return dice


def evaluate(pred, truth, class_matching="best-permutation"):
    """Compare a predicted label map against ground truth.

    class_matching "best-permutation" (alias "best") searches all label
    permutations of the prediction and reports metrics under the one
    maximizing mean Dice; "fixed" compares labels as-is. Dice and IoU of
    a class that is empty in both maps are defined as 1.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValidationError(f"label map sizes differ: {pred.shape} vs {truth.shape}")
    if pred.min() < 0 or truth.min() < 0:
        raise ValidationError("label maps must be nonnegative integers")
    if class_matching == "best":
        class_matching = "best-permutation"
    if class_matching not in ("fixed", "best-permutation"):
        raise ValidationError(f"unknown class matching {class_matching!r}")

    n = int(max(pred.max(), truth.max())) + 1
    conf = np.zeros((n, n), dtype=np.int64)
    np.add.at(conf, (truth.ravel().astype(np.int64), pred.ravel().astype(np.int64)), 1)

    if class_matching == "fixed":
        best_perm = tuple(range(n))
    else:
        if n > MAX_PERMUTATION_CLASSES:
            raise ValidationError(
                f"best-permutation matching supports at most "
                f"{MAX_PERMUTATION_CLASSES} classes, got {n}"
            )
        best_perm = None
        best_mean = -1.0
        for perm in itertools.permutations(range(n)):
            mean = _scores_for_perm(conf, perm).mean()
            if mean > best_mean:
                best_mean = mean
                best_perm = perm

    conf_out = conf[:, list(best_perm)]
    dice = _scores_for_perm(conf, best_perm)
    pred_counts = conf_out.sum(axis=0)
    truth_counts = conf_out.sum(axis=1)
    iou = np.empty(n)
    for c in range(n):
        tp = conf_out[c, c]
        union = pred_counts[c] + truth_counts[c] - tp
        iou[c] = 1.0 if union == 0 else tp / union
    accuracy = float(np.trace(conf_out) / conf.sum())

    return EvaluationReport(
        per_class_dice=tuple(float(d) for d in dice),
        per_class_iou=tuple(float(v) for v in iou),
        pixel_accuracy=accuracy,
        confusion=conf_out,
        permutation=tuple(int(c) for c in best_perm),
    )


def _boundary_mask(labels):
    """Pixels with any 4-neighbor carrying a different label."""
    b = np.zeros(labels.shape, dtype=bool)
    b[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    b[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    b[:-1, :] |= labels[:-1, :] != labels[1:, :]
    b[1:, :] |= labels[1:, :] != labels[:-1, :]
    return b


def render_overlay(f, labels):
    """Color overlay: 50% class tint on the grayscale base, class
    boundaries in full palette color, class 0 left uncolored. Returns an
    (H, W, 3) uint8 array."""
    f = np.asarray(f, dtype=np.float64)
    labels = np.asarray(labels)
    if f.shape != labels.shape:
        raise ValidationError(f"image/label sizes differ: {f.shape} vs {labels.shape}")
    rgb = np.repeat(f[:, :, None], 3, axis=2)
    boundary = _boundary_mask(labels)
    for c in range(1, int(labels.max()) + 1):
        color = np.asarray(PALETTE[(c - 1) % len(PALETTE)], dtype=np.float64) / 255.0
        mask = labels == c
        fill = mask & ~boundary
        rgb[fill] = 0.5 * f[fill][:, None] + 0.5 * color
        rgb[mask & boundary] = color
    return np.round(255.0 * rgb).astype(np.uint8)


def connected_components(labels):
    """Label 4-connected components of equal values.

    Returns (components, count) where components is an (H, W) int array
    of component ids in 0..count-1.
    """
    labels = np.asarray(labels)
    h, w = labels.shape
    comp = -np.ones((h, w), dtype=np.int64)
    count = 0
    stack = []
    for si in range(h):
        for sj in range(w):
            if comp[si, sj] >= 0:
                continue
            value = labels[si, sj]
            comp[si, sj] = count
            stack.append((si, sj))
            while stack:
                i, j = stack.pop()
                if i > 0 and comp[i - 1, j] < 0 and labels[i - 1, j] == value:
                    comp[i - 1, j] = count
                    stack.append((i - 1, j))
                if i < h - 1 and comp[i + 1, j] < 0 and labels[i + 1, j] == value:
                    comp[i + 1, j] = count
                    stack.append((i + 1, j))
                if j > 0 and comp[i, j - 1] < 0 and labels[i, j - 1] == value:
                    comp[i, j - 1] = count
                    stack.append((i, j - 1))
                if j < w - 1 and comp[i, j + 1] < 0 and labels[i, j + 1] == value:
                    comp[i, j + 1] = count
                    stack.append((i, j + 1))
            count += 1
    return comp, count
