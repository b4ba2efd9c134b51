"""Angular-distance math over latent vectors.

Scalar reference implementations of cosine similarity, angular distance,
the normalized cross-distance, and the on-the-fly label vote, plus the
batched label assignment used by the training loop (which dispatches to
the kernel backends).  All functions are pure given their inputs and an
RNG, so they are safe to call concurrently with independent generators.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InsufficientAnchors, ShapeMismatch, ZeroNormVector

ZERO_NORM_EPS = 1e-12
DEGENERATE_EPS = 1e-12


def _as_vector(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64).ravel()


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between a and b, clamped to [-1, 1].

    Raises ZeroNormVector when either norm is below 1e-12; a zero vector
    has no direction.
    """
    a = _as_vector(a)
    b = _as_vector(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"vector dimensions differ: {a.shape[0]} vs {b.shape[0]}")
    norm_a = math.sqrt(float(a @ a))
    norm_b = math.sqrt(float(b @ b))
    if norm_a < ZERO_NORM_EPS or norm_b < ZERO_NORM_EPS:
        raise ZeroNormVector("cosine similarity undefined for (near-)zero vectors")
    cos = float(a @ b) / (norm_a * norm_b)
    return min(1.0, max(-1.0, cos))


def angular_distance(a, b) -> float:
    """Normalized angle arccos(cos(a, b)) / pi, in [0, 1]."""
    return math.acos(cosine_similarity(a, b)) / math.pi


def normalized_cross_distance(z, same, other) -> float:
    """d(z, same) / (d(z, same) + d(z, other)), in [0, 1].

    When both distances vanish (z coincides with both reference points)
    the ratio is taken as the equidistant 0.5.
    """
    d_same = angular_distance(z, same)
    d_other = angular_distance(z, other)
    if d_same < DEGENERATE_EPS and d_other < DEGENERATE_EPS:
        return 0.5
    return d_same / (d_same + d_other)


@dataclass
class AnchorSet:
    """Labeled latents a vote draws its k per-class anchors from."""

    positives: np.ndarray  # [n_pos, q]
    negatives: np.ndarray  # [n_neg, q]
    k: int

    def __post_init__(self):
        self.positives = np.atleast_2d(np.asarray(self.positives, dtype=np.float64))
        self.negatives = np.atleast_2d(np.asarray(self.negatives, dtype=np.float64))
        if self.k < 1:
            raise InsufficientAnchors(f"k must be >= 1, got {self.k}")
        self.require(self.k)

    def require(self, k: int):
        n_pos = self.positives.shape[0]
        n_neg = self.negatives.shape[0]
        if n_pos < k or n_neg < k:
            raise InsufficientAnchors(
                f"need k={k} anchors per class, have {n_pos} positive / "
                f"{n_neg} negative"
            )


def label_from_anchors(z, pos_anchors, neg_anchors) -> int:
    """Cross-distance vote over already-drawn anchor rows.

    Pairs the j-th positive anchor with the j-th negative anchor, sums the
    normalized cross-distances per class, and labels positive (0) when the
    positive-side sum is smaller or equal.
    """
    z = _as_vector(z)
    pos_anchors = np.atleast_2d(pos_anchors)
    neg_anchors = np.atleast_2d(neg_anchors)
    vote_pos = 0.0
    vote_neg = 0.0
    for p_row, n_row in zip(pos_anchors, neg_anchors):
        d_p = angular_distance(z, p_row)
        d_n = angular_distance(z, n_row)
        if d_p < DEGENERATE_EPS and d_n < DEGENERATE_EPS:
            vote_pos += 0.5
            vote_neg += 0.5
        else:
            total = d_p + d_n
            vote_pos += d_p / total
            vote_neg += d_n / total
    return 0 if vote_pos <= vote_neg else 1


def on_the_fly_label(z, anchors: AnchorSet, rng: np.random.Generator) -> int:
    """Label one latent by drawing k anchors per class and voting.

    Draws are without replacement, positives before negatives: the first k
    entries of a uniform permutation of each class pool.
    """
    anchors.require(anchors.k)
    pos_sel = rng.permutation(anchors.positives.shape[0])[: anchors.k]
    neg_sel = rng.permutation(anchors.negatives.shape[0])[: anchors.k]
    return label_from_anchors(
        z, anchors.positives[pos_sel], anchors.negatives[neg_sel]
    )


def draw_anchor_indices(rng, n_pos, n_neg, k, count):
    """Per-row anchor draws for ``count`` latents at once.

    Each row is the first k entries of an independent uniform permutation,
    positives drawn before negatives (same contract as on_the_fly_label).
    Returns ([count, k], [count, k]) int64 index arrays.
    """
    if n_pos < k or n_neg < k:
        raise InsufficientAnchors(
            f"need k={k} anchors per class, have {n_pos} positive / {n_neg} negative"
        )
    pos_idx = rng.permuted(
        np.tile(np.arange(n_pos, dtype=np.int64), (count, 1)), axis=1
    )[:, :k]
    neg_idx = rng.permuted(
        np.tile(np.arange(n_neg, dtype=np.int64), (count, 1)), axis=1
    )[:, :k]
    return np.ascontiguousarray(pos_idx), np.ascontiguousarray(neg_idx)


def assign_on_the_fly_labels(latents, pos_latents, neg_latents, k, rng):
    """Vectorized on-the-fly labels for every row of ``latents``.

    Anchor draws are refreshed per row; the distance math runs on the
    active kernel backend.
    """
    latents = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    count = latents.shape[0]
    if count == 0:
        return np.zeros(0, dtype=np.uint8)
    pos_idx, neg_idx = draw_anchor_indices(
        rng, np.atleast_2d(pos_latents).shape[0], np.atleast_2d(neg_latents).shape[0],
        k, count,
    )
    return _kernels.on_the_fly_labels(latents, pos_latents, neg_latents, pos_idx, neg_idx)
