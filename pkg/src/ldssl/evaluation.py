"""Classification metrics, latent-space diagnostics, and the 2-D export.

Label convention: class 0 is the positive class, class 1 the negative
class, and model probabilities estimate the target value (so p >= threshold
predicts class 1).  Precision/recall/F1 are macro-averaged over the two
classes; F1 is the harmonic mean of the macro precision and macro recall,
which keeps the usual F1 identity exact.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    ClassTooSmall,
    DegenerateCovariance,
    EmptyInput,
    LengthMismatch,
)


@dataclass
class MetricsReport:
    """Confusion counts plus the four headline metrics.

    tp/fp/tn/fn treat class 0 (positive) as the detection target.
    """

    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: dict

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
        }


def _safe_div(num, den):
    return num / den if den > 0 else 0.0


def compute_metrics(truth, probabilities, threshold=0.5) -> MetricsReport:
    """Threshold probabilities and score them against 0/1 truth labels."""
    truth = np.asarray(truth, dtype=np.int64).ravel()
    probabilities = np.asarray(probabilities, dtype=np.float64).ravel()
    if truth.shape[0] != probabilities.shape[0]:
        raise LengthMismatch(
            f"truth ({truth.shape[0]}) and probabilities "
            f"({probabilities.shape[0]}) differ in length"
        )
    if truth.shape[0] == 0:
        raise EmptyInput("no samples to score")
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")

    predicted = (probabilities >= threshold).astype(np.int64)
    tp = int(np.sum((truth == 0) & (predicted == 0)))
    fp = int(np.sum((truth == 1) & (predicted == 0)))
    tn = int(np.sum((truth == 1) & (predicted == 1)))
    fn = int(np.sum((truth == 0) & (predicted == 1)))

    precision_pos = _safe_div(tp, tp + fp)
    recall_pos = _safe_div(tp, tp + fn)
    precision_neg = _safe_div(tn, tn + fn)
    recall_neg = _safe_div(tn, tn + fp)
    f1_pos = _safe_div(2 * precision_pos * recall_pos, precision_pos + recall_pos)
    f1_neg = _safe_div(2 * precision_neg * recall_neg, precision_neg + recall_neg)

    precision = (precision_pos + precision_neg) / 2.0
    recall = (recall_pos + recall_neg) / 2.0
    return MetricsReport(
        tp=tp, fp=fp, tn=tn, fn=fn,
        accuracy=(tp + tn) / truth.shape[0],
        precision=precision,
        recall=recall,
        f1=_safe_div(2 * precision * recall, precision + recall),
        per_class={
            "positive": {"precision": precision_pos, "recall": recall_pos,
                         "f1": f1_pos},
            "negative": {"precision": precision_neg, "recall": recall_neg,
                         "f1": f1_neg},
        },
    )


@dataclass
class SeparabilityReport:
    intra: float
    inter: float

    @property
    def ratio(self):
        return self.inter / max(self.intra, 1e-12)


def latent_separability(latents, labels, max_pairs=2_000_000,
                        seed=0) -> SeparabilityReport:
    """Mean angular distance within and across classes.

    Exhaustive over all pairs unless that exceeds ``max_pairs``, in which
    case a seeded subsample of at least 10^4 pairs per bucket is used.
    """
    latents = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    labels = np.asarray(labels).ravel()
    if latents.shape[0] != labels.shape[0]:
        raise LengthMismatch("latents and labels differ in length")
    for label in (0, 1):
        if int(np.sum(labels == label)) < 2:
            raise ClassTooSmall(label, int(np.sum(labels == label)))

    n = latents.shape[0]
    if n * n <= max_pairs:
        dist = _kernels.pairwise_angular(latents, latents)
        same = labels[:, None] == labels[None, :]
        upper = np.triu(np.ones((n, n), dtype=bool), k=1)
        intra = float(np.mean(dist[same & upper]))
        inter = float(np.mean(dist[~same & upper]))
        return SeparabilityReport(intra, inter)

    rng = np.random.default_rng(seed)
    n_samples = max(10_000, min(max_pairs, 100_000))
    left = rng.integers(0, n, size=4 * n_samples)
    right = rng.integers(0, n, size=4 * n_samples)
    keep = left != right
    left, right = left[keep], right[keep]
    same = labels[left] == labels[right]
    cos = np.sum(latents[left] * latents[right], axis=1)
    cos /= np.linalg.norm(latents[left], axis=1) * np.linalg.norm(latents[right], axis=1)
    dist = np.arccos(np.clip(cos, -1.0, 1.0)) / np.pi
    return SeparabilityReport(float(np.mean(dist[same])), float(np.mean(dist[~same])))


def project_2d(latents) -> np.ndarray:
    """Project onto the top-2 principal components of the centered latents.

    Component signs are fixed so the largest-magnitude loading is
    positive.  A rank-1 cloud gets a zero second column; a rank-0 cloud
    has no principal direction at all and raises DegenerateCovariance.
    """
    latents = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    n = latents.shape[0]
    if n < 3:
        raise EmptyInput(f"need at least 3 points to project, got {n}")
    centered = latents - latents.mean(axis=0)
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    if singular.shape[0] == 0 or singular[0] <= 0.0:
        raise DegenerateCovariance("all points coincide")
    tol = singular[0] * max(latents.shape) * np.finfo(np.float64).eps
    rank = int(np.sum(singular > tol))

    coords = np.zeros((n, 2))
    for comp in range(min(2, rank, vt.shape[0])):
        direction = vt[comp]
        anchor = np.argmax(np.abs(direction))
        if direction[anchor] < 0:
            direction = -direction
        coords[:, comp] = centered @ direction
    return coords


def metrics_json(dataset_name, seed, m_fraction, k, repetitions) -> dict:
    """Assemble the metrics document for a finished run.

    ``repetitions`` is a list of (MetricsReport, timings-dict) in fold
    order; timing values are the only non-reproducible fields.
    """
    folds = []
    for report, timings in repetitions:
        entry = report.to_dict()
        entry["encoder_seconds"] = timings.get("encoder_seconds", 0.0)
        entry["classifier_seconds"] = timings.get("classifier_seconds", 0.0)
        folds.append(entry)
    names = ("accuracy", "precision", "recall", "f1")
    values = {name: [f[name] for f in folds] for name in names}
    return {
        "dataset": dataset_name,
        "seed": int(seed),
        "m_fraction": m_fraction,
        "k": int(k),
        "folds": folds,
        "mean": {name: float(np.mean(vals)) for name, vals in values.items()},
        "std": {
            name: float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            for name, vals in values.items()
        },
    }
