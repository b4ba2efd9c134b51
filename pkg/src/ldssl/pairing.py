"""Pair construction for the metric-learning stage.

Every labeled sample becomes the left element of exactly two pairs: one
with a random same-class partner (target distance 0) and one with a random
opposite-class partner (target distance 1), doubling the labeled set.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ClassTooSmall


@dataclass
class PairSet:
    """Index pairs into the labeled subset with target distances."""

    pairs: np.ndarray    # [2m, 2] int64, (left, right) positions
    targets: np.ndarray  # [2m] uint8, 0 = matching pair, 1 = non-matching

    @property
    def left(self):
        return self.pairs[:, 0]

    @property
    def right(self):
        return self.pairs[:, 1]

    def __len__(self):
        return self.pairs.shape[0]


def build_pairs(labeled, rng: np.random.Generator) -> PairSet:
    """Draw one matching and one non-matching partner per labeled sample.

    ``labeled`` is a LabeledDataset; positions index its labeled subset in
    row order.  Partner draws are uniform over the eligible class with the
    sample itself excluded, which matches rejection sampling without the
    retry loop.
    """
    targets_by_pos = labeled.labeled_targets()
    m = targets_by_pos.shape[0]
    class_positions = {}
    for label in (0, 1):
        positions = np.flatnonzero(targets_by_pos == label)
        if positions.shape[0] < 2:
            raise ClassTooSmall(label, int(positions.shape[0]))
        class_positions[label] = positions

    pairs = np.empty((2 * m, 2), dtype=np.int64)
    targets = np.empty(2 * m, dtype=np.uint8)
    for i in range(m):
        own = int(targets_by_pos[i])
        same_pool = class_positions[own]
        same_pool = same_pool[same_pool != i]
        other_pool = class_positions[1 - own]
        pairs[2 * i] = (i, same_pool[rng.integers(same_pool.shape[0])])
        targets[2 * i] = 0
        pairs[2 * i + 1] = (i, other_pool[rng.integers(other_pool.shape[0])])
        targets[2 * i + 1] = 1
    return PairSet(pairs, targets)
