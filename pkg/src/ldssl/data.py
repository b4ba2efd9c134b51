"""Dataset construction: synthetic generators, CSV ingestion, label
masking, stratified splits, and the fold plan for cross-validated runs.

Label states are int8 codes: 0 = positive class, 1 = negative class,
-1 = unlabeled.  The positive class is code 0 throughout the package.
Ground truth for masked rows lives in a separate evaluation-only channel
(``ground_truth()``), which counts its reads so tests can assert training
never touched it.
"""

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadParam,
    ClassTooSmall,
    EmptyDataset,
    ParseError,
    TooFewSamples,
    UnknownLabelToken,
)

POSITIVE = 0
NEGATIVE = 1
UNLABELED = -1


class LabeledDataset:
    """Feature matrix with a per-row label state and a hidden truth channel."""

    def __init__(self, features, label_state, truth=None, provenance=""):
        self.features = np.ascontiguousarray(features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[1] < 1:
            raise BadParam("features must be a 2-d matrix with >= 1 column")
        if not np.all(np.isfinite(self.features)):
            raise BadParam("features must be finite")
        self.label_state = np.asarray(label_state, dtype=np.int8)
        if self.label_state.shape != (self.features.shape[0],):
            raise BadParam("label_state length must match the row count")
        if not np.all(np.isin(self.label_state, (POSITIVE, NEGATIVE, UNLABELED))):
            raise BadParam("label_state entries must be 0, 1, or -1")
        if truth is None:
            truth = self.label_state.copy()
        self._truth = np.asarray(truth, dtype=np.int8)
        if self._truth.shape != self.label_state.shape:
            raise BadParam("truth length must match the row count")
        self.provenance = provenance
        self.truth_reads = 0

    # -- basic facts ----------------------------------------------------

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def p(self):
        return self.features.shape[1]

    @property
    def m(self):
        """Number of labeled rows."""
        return int(np.sum(self.label_state != UNLABELED))

    def is_fully_labeled(self):
        return bool(np.all(self.label_state != UNLABELED))

    def class_count(self, label):
        return int(np.sum(self.label_state == label))

    # -- training-visible views ------------------------------------------

    def labeled_indices(self):
        return np.flatnonzero(self.label_state != UNLABELED)

    def unlabeled_indices(self):
        return np.flatnonzero(self.label_state == UNLABELED)

    def labeled_features(self):
        return self.features[self.labeled_indices()]

    def labeled_targets(self):
        """0/1 targets of the labeled rows, in row order."""
        return self.label_state[self.labeled_indices()].astype(np.float64)

    def unlabeled_features(self):
        return self.features[self.unlabeled_indices()]

    # -- evaluation-only channel ------------------------------------------

    def ground_truth(self):
        """Full truth labels (-1 where unknown). Evaluation only; counted."""
        self.truth_reads += 1
        return self._truth.copy()

    def truth_known(self):
        return self._truth != UNLABELED

    # -- derived datasets --------------------------------------------------

    def subset(self, indices):
        indices = np.asarray(indices)
        sub = LabeledDataset(
            self.features[indices],
            self.label_state[indices],
            self._truth[indices],
            self.provenance,
        )
        return sub

    def with_features(self, features):
        return LabeledDataset(
            features, self.label_state.copy(), self._truth.copy(), self.provenance
        )

    def content_equal(self, other):
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.label_state, other.label_state)
            and np.array_equal(self._truth, other._truth)
        )


# -- synthetic generators ----------------------------------------------


def generate_two_gaussians(n, separation, seed) -> LabeledDataset:
    """Two isotropic unit-variance 2-d Gaussians at +-separation/2 on x."""
    if n < 2 or n % 2 != 0:
        raise BadParam(f"n must be even and >= 2, got {n}")
    if separation <= 0:
        raise BadParam(f"separation must be > 0, got {separation}")
    rng = np.random.default_rng(seed)
    half = n // 2
    features = rng.standard_normal((n, 2))
    features[:half, 0] -= separation / 2.0
    features[half:, 0] += separation / 2.0
    labels = np.concatenate(
        [np.full(half, POSITIVE, dtype=np.int8), np.full(half, NEGATIVE, dtype=np.int8)]
    )
    return LabeledDataset(features, labels, provenance=f"two-gaussians(n={n},sep={separation})")


def generate_two_moons(n, noise, seed) -> LabeledDataset:
    """Interleaved half-circles with Gaussian coordinate noise.

    Class 0 is the upper unit half-circle, class 1 the lower one shifted
    to interleave; noise=0 keeps the points exactly on the arcs.
    """
    if n < 2 or n % 2 != 0:
        raise BadParam(f"n must be even and >= 2, got {n}")
    if noise < 0:
        raise BadParam(f"noise must be >= 0, got {noise}")
    rng = np.random.default_rng(seed)
    half = n // 2
    t = np.linspace(0.0, np.pi, half)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    features = np.vstack([upper, lower])
    if noise > 0:
        features = features + rng.normal(0.0, noise, size=features.shape)
    labels = np.concatenate(
        [np.full(half, POSITIVE, dtype=np.int8), np.full(half, NEGATIVE, dtype=np.int8)]
    )
    return LabeledDataset(features, labels, provenance=f"two-moons(n={n},noise={noise})")


# -- CSV ingestion -------------------------------------------------------


def load_csv(path, label_column="label", positive_token="pos",
             negative_token="neg", unlabeled_token="?") -> LabeledDataset:
    """Read a header-ed CSV of real-valued features plus one label column.

    Line and column numbers in errors are 1-based and count the header as
    line 1.
    """
    token_map = {
        positive_token: POSITIVE,
        negative_token: NEGATIVE,
        unlabeled_token: UNLABELED,
    }
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset(f"{path} has no header row") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise BadParam(f"label column {label_column!r} not in header {header}")
        label_idx = header.index(label_column)

        rows = []
        states = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(line_no, len(row) + 1,
                                 f"expected {len(header)} cells, got {len(row)}")
            token = row[label_idx].strip()
            if token not in token_map:
                raise UnknownLabelToken(
                    f"line {line_no}: unknown label token {token!r}"
                )
            states.append(token_map[token])
            values = []
            for col_no, cell in enumerate(row, start=1):
                if col_no - 1 == label_idx:
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ParseError(
                        line_no, col_no, f"cannot parse {cell.strip()!r} as a real"
                    ) from None
            rows.append(values)

    if not rows:
        raise EmptyDataset(f"{path} contains a header but no data rows")
    return LabeledDataset(
        np.asarray(rows, dtype=np.float64),
        np.asarray(states, dtype=np.int8),
        provenance=str(path),
    )


def save_csv(dataset: LabeledDataset, path, label_column="label",
             positive_token="pos", negative_token="neg", unlabeled_token="?"):
    """Write a dataset in the format load_csv reads (bit-exact floats)."""
    token_of = {POSITIVE: positive_token, NEGATIVE: negative_token,
                UNLABELED: unlabeled_token}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{i}" for i in range(dataset.p)] + [label_column])
        for row, state in zip(dataset.features, dataset.label_state):
            writer.writerow([repr(float(v)) for v in row] + [token_of[int(state)]])


# -- label masking and splits ---------------------------------------------


def mask_labels(dataset: LabeledDataset, m_fraction, seed) -> LabeledDataset:
    """Hide all but a stratified random ceil(m_fraction * n) of the labels.

    Per-class quotas follow largest-remainder apportionment, so class
    proportions are preserved within one sample.  Ground truth stays in
    the evaluation-only channel of the returned dataset.
    """
    if not 0 < m_fraction <= 1:
        raise BadParam(f"m_fraction must be in (0, 1], got {m_fraction}")
    if not dataset.is_fully_labeled():
        raise BadParam("mask_labels needs a fully labeled dataset")
    if m_fraction == 1.0:
        return LabeledDataset(
            dataset.features.copy(), dataset.label_state.copy(),
            dataset.label_state.copy(), dataset.provenance,
        )

    target = math.ceil(m_fraction * dataset.n)
    class_indices = {c: np.flatnonzero(dataset.label_state == c) for c in (0, 1)}
    quotas = {c: m_fraction * idx.shape[0] for c, idx in class_indices.items()}
    keep_counts = {c: int(math.floor(q)) for c, q in quotas.items()}
    leftover = target - sum(keep_counts.values())
    by_remainder = sorted(quotas, key=lambda c: quotas[c] - keep_counts[c], reverse=True)
    for c in by_remainder[:leftover]:
        keep_counts[c] += 1

    for c, kept in keep_counts.items():
        if kept < 2:
            raise ClassTooSmall(c, kept)
    if target > dataset.n - target:
        warnings.warn(
            f"labeled rows ({target}) exceed unlabeled rows "
            f"({dataset.n - target}); not a semi-supervised regime",
            stacklevel=2,
        )

    rng = np.random.default_rng(seed)
    state = np.full(dataset.n, UNLABELED, dtype=np.int8)
    for c in (0, 1):
        picked = rng.permutation(class_indices[c])[: keep_counts[c]]
        state[picked] = c
    return LabeledDataset(
        dataset.features.copy(), state, dataset.label_state.copy(), dataset.provenance
    )


@dataclass
class FoldPlan:
    """Stratified fold ids; a repetition tests two adjacent folds (20%)."""

    fold_ids: np.ndarray
    n_folds: int = 10

    @property
    def n_repetitions(self):
        return self.n_folds

    def test_indices(self, rep):
        picked = {rep % self.n_folds, (rep + 1) % self.n_folds}
        return np.flatnonzero(np.isin(self.fold_ids, list(picked)))

    def train_indices(self, rep):
        picked = {rep % self.n_folds, (rep + 1) % self.n_folds}
        return np.flatnonzero(~np.isin(self.fold_ids, list(picked)))


def make_folds(dataset: LabeledDataset, seed, n_folds=10) -> FoldPlan:
    """Deal each label-state group round-robin into shuffled folds."""
    if dataset.n < n_folds:
        raise TooFewSamples(f"need at least {n_folds} rows, have {dataset.n}")
    for c in (POSITIVE, NEGATIVE):
        if 0 < dataset.class_count(c) < n_folds:
            raise TooFewSamples(
                f"class {c} has {dataset.class_count(c)} rows; need >= {n_folds}"
            )
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    fold_ids = np.empty(dataset.n, dtype=np.int64)
    for state in (POSITIVE, NEGATIVE, UNLABELED):
        group = np.flatnonzero(dataset.label_state == state)
        if group.shape[0] == 0:
            continue
        shuffled = rng.permutation(group)
        fold_ids[shuffled] = np.arange(shuffled.shape[0]) % n_folds
    return FoldPlan(fold_ids, n_folds)


def split_validation(dataset: LabeledDataset, fraction, seed):
    """Carve a stratified validation subset out of a training dataset.

    Stratifies over label state (positive / negative / unlabeled) so the
    labeled classes stay proportionally represented; labeled classes with
    at least 4 members contribute at least 2 validation rows so pair-based
    validation stays possible.  Returns (train, validation) datasets.
    """
    if not 0 < fraction < 1:
        raise BadParam(f"validation fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    val_mask = np.zeros(dataset.n, dtype=bool)
    for state in (POSITIVE, NEGATIVE, UNLABELED):
        group = np.flatnonzero(dataset.label_state == state)
        size = group.shape[0]
        if size == 0:
            continue
        n_val = int(round(fraction * size))
        if state != UNLABELED:
            if size >= 4:
                n_val = min(max(n_val, 2), size - 2)
            else:
                n_val = 0
        val_mask[rng.permutation(group)[:n_val]] = True
    return (
        dataset.subset(np.flatnonzero(~val_mask)),
        dataset.subset(np.flatnonzero(val_mask)),
    )


@dataclass
class Standardizer:
    """Per-column zero-mean unit-variance transform, fitted on train rows."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features):
        features = np.asarray(features, dtype=np.float64)
        mean = features.mean(axis=0)
        std = features.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        return cls(mean, std)

    def transform(self, features):
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.std
