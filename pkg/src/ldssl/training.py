"""Training loops and the cross-validated experiment runner.

Stage 1 (``train_bal``) fits the encoder on labeled pairs so same-class
latents approach angular distance 0 and cross-class latents approach 1.
Stage 2 (``train_sbc``) freezes that encoder and fits the classifier: each
epoch it first steps on the labeled latents, then on the unlabeled latents
with freshly drawn on-the-fly labels, strictly in that order.  The
labeled-only baseline trains encoder + classifier end-to-end for paired
comparisons.  ``run_experiment`` drives all of it across folds and emits
the run manifest.
"""

import math
import time
import warnings
from dataclasses import dataclass, field, fields

import numpy as np

from . import _kernels
from .data import (
    LabeledDataset,
    Standardizer,
    make_folds,
    mask_labels,
    split_validation,
)
from .errors import BadParam, ClassTooSmall, DivergedTraining, InsufficientAnchors
from .evaluation import MetricsReport, compute_metrics, latent_separability
from .geometry import assign_on_the_fly_labels
from .network import (
    Mlp,
    OptimizerState,
    bce_loss,
    build_classifier,
    build_encoder,
    optimizer_step,
    pair_distance_backward,
    pair_distance_forward,
)
from .pairing import build_pairs
from .seeding import derive_rng


@dataclass
class TrainConfig:
    """Optimizer choice and hyperparameters for both stages."""

    epochs: int = 30
    batch_size: int = 32
    encoder_lr: float = 0.01
    encoder_momentum: float = 0.9
    encoder_clipnorm: float | None = 1.0
    classifier_lr: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-7
    k: int = 11
    seed: int = 0
    hidden_dims: tuple = (64, 64)
    latent_dim: int = 16
    classifier_dims: tuple = (80, 20)
    l2_penalty: float = 1e-4
    refresh_pairs: bool = True
    early_stop_patience: int | None = None
    validation_fraction: float = 0.2

    def __post_init__(self):
        if self.epochs < 0:
            raise BadParam("epochs must be >= 0")
        if self.batch_size < 1:
            raise BadParam("batch_size must be >= 1")
        if self.k < 1:
            raise BadParam("k must be >= 1")
        if not 0 <= self.encoder_momentum < 1:
            raise BadParam("encoder_momentum must be in [0, 1)")
        if not 0 < self.validation_fraction < 1:
            raise BadParam("validation_fraction must be in (0, 1)")
        self.hidden_dims = tuple(self.hidden_dims)
        self.classifier_dims = tuple(self.classifier_dims)

    def to_dict(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise BadParam(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def encoder_optimizer(self):
        return OptimizerState.sgd(
            self.encoder_lr, self.encoder_momentum, self.encoder_clipnorm
        )

    def classifier_optimizer(self):
        return OptimizerState.adam(
            self.classifier_lr, self.adam_beta1, self.adam_beta2, self.adam_eps
        )


@dataclass
class BalHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1


@dataclass
class SbcHistory:
    labeled_loss: list = field(default_factory=list)
    unlabeled_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    best_epoch: int = -1
    step_log: list = field(default_factory=list)   # (epoch, "B1"|"B2") per step
    pseudo_labels: list = field(default_factory=list)
    label_seconds: float = 0.0


@dataclass
class BaselineHistory:
    train_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    best_epoch: int = -1


@dataclass
class BalResult:
    encoder: Mlp
    history: BalHistory
    seconds: float


@dataclass
class SbcResult:
    classifier: Mlp
    history: SbcHistory
    seconds: float


@dataclass
class BaselineResult:
    encoder: Mlp
    classifier: Mlp
    history: BaselineHistory
    seconds: float


def _require_finite(value, what):
    if not math.isfinite(value):
        raise DivergedTraining(f"{what} became non-finite")


def _pair_loss(encoder, x_left, x_right, targets):
    dist, _ = pair_distance_forward(
        encoder.predict(x_left), encoder.predict(x_right)
    )
    return bce_loss(targets, dist).value


def _ensure_validation(train, config, validation, seed_path):
    if validation is not None:
        return train, validation
    return split_validation(
        train, config.validation_fraction,
        derive_rng(config.seed, *seed_path, "val-split"),
    )


def train_bal(train: LabeledDataset, config: TrainConfig, validation=None,
              seed_path=()) -> BalResult:
    """Fit the encoder on matched/unmatched pairs of labeled samples.

    Pairs are rebuilt each epoch unless ``config.refresh_pairs`` is off.
    The returned encoder carries the parameters with the lowest validation
    pair loss across epochs.
    """
    started = time.perf_counter()
    train, validation = _ensure_validation(train, config, validation, seed_path)
    features = train.labeled_features()
    m = features.shape[0]
    if m == 0:
        raise BadParam("no labeled samples to build pairs from")
    if config.batch_size > m:
        raise BadParam(
            f"batch_size {config.batch_size} exceeds labeled sample count {m}"
        )
    if validation.m < 4:
        raise ClassTooSmall("validation", validation.m)

    encoder = build_encoder(
        train.p, config.hidden_dims, config.latent_dim, config.l2_penalty,
        rng=derive_rng(config.seed, *seed_path, "encoder-init"),
    )
    optimizer = config.encoder_optimizer()

    val_pairs = build_pairs(
        validation, derive_rng(config.seed, *seed_path, "bal-val-pairs")
    )
    val_features = validation.labeled_features()
    val_left = val_features[val_pairs.left]
    val_right = val_features[val_pairs.right]
    val_targets = val_pairs.targets.astype(np.float64)

    history = BalHistory()
    best_params = encoder.copy_parameters()
    best_val = math.inf

    for epoch in range(config.epochs):
        pair_epoch = epoch if config.refresh_pairs else 0
        pairs = build_pairs(
            train, derive_rng(config.seed, *seed_path, "pairs", pair_epoch)
        )
        order = derive_rng(
            config.seed, *seed_path, "bal-shuffle", epoch
        ).permutation(len(pairs))
        batch_losses = []
        for start in range(0, order.shape[0], config.batch_size):
            batch = order[start:start + config.batch_size]
            x_left = features[pairs.left[batch]]
            x_right = features[pairs.right[batch]]
            targets = pairs.targets[batch].astype(np.float64)

            z_left = encoder.forward(x_left)
            cache_left = encoder.take_cache()
            z_right = encoder.forward(x_right)
            cache_right = encoder.take_cache()
            dist, ctx = pair_distance_forward(z_left, z_right)
            loss = bce_loss(targets, dist)
            _require_finite(loss.value, "pair loss")

            grad_left, grad_right = pair_distance_backward(loss.grad, ctx)
            # shared encoder: both sides contribute, the L2 term only once
            grads_left, _ = encoder.backward(grad_left, cache=cache_left,
                                             include_l2=False)
            grads_right, _ = encoder.backward(grad_right, cache=cache_right,
                                              include_l2=False)
            grads = [
                gl + gr + gp
                for gl, gr, gp in zip(grads_left, grads_right,
                                      encoder.l2_gradients())
            ]
            optimizer_step(optimizer, encoder.parameters(), grads)
            batch_losses.append(loss.value)

        history.train_loss.append(float(np.mean(batch_losses)))
        val_loss = _pair_loss(encoder, val_left, val_right, val_targets)
        _require_finite(val_loss, "validation pair loss")
        history.val_loss.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            history.best_epoch = epoch
            best_params = encoder.copy_parameters()
        if (config.early_stop_patience is not None
                and epoch - history.best_epoch >= config.early_stop_patience):
            break

    encoder.set_parameters(best_params)
    return BalResult(encoder, history, time.perf_counter() - started)


def _classifier_phase(classifier, optimizer, latents, targets, config, rng,
                      step_log, epoch, phase):
    if latents.shape[0] == 0:
        return None
    order = rng.permutation(latents.shape[0])
    batch_losses = []
    for start in range(0, order.shape[0], config.batch_size):
        batch = order[start:start + config.batch_size]
        probs = classifier.forward(latents[batch])
        loss = bce_loss(targets[batch], probs.ravel())
        _require_finite(loss.value, f"{phase} loss")
        grads, _ = classifier.backward(loss.grad.reshape(-1, 1))
        optimizer_step(optimizer, classifier.parameters(), grads)
        step_log.append((epoch, phase))
        batch_losses.append(loss.value)
    return float(np.mean(batch_losses))


def _accuracy(probs, targets):
    predictions = (probs >= 0.5).astype(np.float64)
    return float(np.mean(predictions == targets))


def train_sbc(train: LabeledDataset, encoder: Mlp, config: TrainConfig,
              validation=None, seed_path=()) -> SbcResult:
    """Fit the classifier on labeled plus pseudo-labeled latents.

    The encoder stays frozen.  Each epoch recomputes the latents, draws
    fresh anchors to label every unlabeled latent, then runs the labeled
    phase before the unlabeled phase.  The returned classifier carries the
    parameters with the best validation accuracy.
    """
    started = time.perf_counter()
    train, validation = _ensure_validation(train, config, validation, seed_path)
    x_labeled = train.labeled_features()
    y_labeled = train.labeled_targets()
    x_unlabeled = train.unlabeled_features()
    n_pos = int(np.sum(y_labeled == 0))
    n_neg = int(np.sum(y_labeled == 1))
    if config.k > min(n_pos, n_neg):
        raise InsufficientAnchors(
            f"k={config.k} exceeds labeled class counts "
            f"({n_pos} positive / {n_neg} negative)"
        )
    if validation.m == 0:
        raise BadParam("validation split has no labeled rows")

    classifier = build_classifier(
        encoder.output_dim, config.classifier_dims, config.l2_penalty,
        rng=derive_rng(config.seed, *seed_path, "classifier-init"),
    )
    optimizer = config.classifier_optimizer()

    # the encoder is frozen, so validation latents never change
    val_latents = encoder.predict(validation.labeled_features())
    val_targets = validation.labeled_targets()

    history = SbcHistory()
    best_params = classifier.copy_parameters()
    best_val = -math.inf

    for epoch in range(config.epochs):
        z_labeled = encoder.predict(x_labeled)
        z_unlabeled = (
            encoder.predict(x_unlabeled)
            if x_unlabeled.shape[0]
            else np.zeros((0, encoder.output_dim))
        )

        label_start = time.perf_counter()
        if z_unlabeled.shape[0]:
            pseudo = assign_on_the_fly_labels(
                z_unlabeled,
                z_labeled[y_labeled == 0],
                z_labeled[y_labeled == 1],
                config.k,
                derive_rng(config.seed, *seed_path, "anchors", epoch),
            )
        else:
            pseudo = np.zeros(0, dtype=np.uint8)
        history.label_seconds += time.perf_counter() - label_start
        history.pseudo_labels.append(pseudo)

        # labeled targets first: ground truth steers before pseudo-labels do
        labeled_loss = _classifier_phase(
            classifier, optimizer, z_labeled, y_labeled, config,
            derive_rng(config.seed, *seed_path, "sbc-shuffle-labeled", epoch),
            history.step_log, epoch, "B1",
        )
        unlabeled_loss = _classifier_phase(
            classifier, optimizer, z_unlabeled, pseudo.astype(np.float64), config,
            derive_rng(config.seed, *seed_path, "sbc-shuffle-unlabeled", epoch),
            history.step_log, epoch, "B2",
        )
        history.labeled_loss.append(labeled_loss)
        history.unlabeled_loss.append(unlabeled_loss)

        val_acc = _accuracy(classifier.predict(val_latents).ravel(), val_targets)
        history.val_accuracy.append(val_acc)
        if val_acc > best_val:
            best_val = val_acc
            history.best_epoch = epoch
            best_params = classifier.copy_parameters()
        if (config.early_stop_patience is not None
                and epoch - history.best_epoch >= config.early_stop_patience):
            break

    classifier.set_parameters(best_params)
    return SbcResult(classifier, history, time.perf_counter() - started)


def train_entropy_baseline(train: LabeledDataset, config: TrainConfig,
                           validation=None, seed_path=()) -> BaselineResult:
    """Labeled-only baseline: encoder + classifier end-to-end with BCE.

    Uses the same architectures, initialization streams, and optimizers as
    the two-stage pipeline; unlabeled rows are never touched.
    """
    started = time.perf_counter()
    train, validation = _ensure_validation(train, config, validation, seed_path)
    features = train.labeled_features()
    targets = train.labeled_targets()
    if features.shape[0] == 0:
        raise BadParam("no labeled samples")
    for label in (0, 1):
        count = int(np.sum(targets == label))
        if count == 0:
            raise ClassTooSmall(label, count)
    if validation.m == 0:
        raise BadParam("validation split has no labeled rows")

    encoder = build_encoder(
        train.p, config.hidden_dims, config.latent_dim, config.l2_penalty,
        rng=derive_rng(config.seed, *seed_path, "encoder-init"),
    )
    classifier = build_classifier(
        encoder.output_dim, config.classifier_dims, config.l2_penalty,
        rng=derive_rng(config.seed, *seed_path, "classifier-init"),
    )
    encoder_opt = config.encoder_optimizer()
    classifier_opt = config.classifier_optimizer()

    val_features = validation.labeled_features()
    val_targets = validation.labeled_targets()

    history = BaselineHistory()
    best_params = (encoder.copy_parameters(), classifier.copy_parameters())
    best_val = -math.inf

    for epoch in range(config.epochs):
        order = derive_rng(
            config.seed, *seed_path, "baseline-shuffle", epoch
        ).permutation(features.shape[0])
        batch_losses = []
        for start in range(0, order.shape[0], config.batch_size):
            batch = order[start:start + config.batch_size]
            latents = encoder.forward(features[batch])
            encoder_cache = encoder.take_cache()
            probs = classifier.forward(latents)
            loss = bce_loss(targets[batch], probs.ravel())
            _require_finite(loss.value, "baseline loss")
            classifier_grads, grad_latents = classifier.backward(
                loss.grad.reshape(-1, 1)
            )
            encoder_grads, _ = encoder.backward(grad_latents, cache=encoder_cache)
            optimizer_step(classifier_opt, classifier.parameters(), classifier_grads)
            optimizer_step(encoder_opt, encoder.parameters(), encoder_grads)
            batch_losses.append(loss.value)
        history.train_loss.append(float(np.mean(batch_losses)))

        val_probs = classifier.predict(encoder.predict(val_features)).ravel()
        val_acc = _accuracy(val_probs, val_targets)
        history.val_accuracy.append(val_acc)
        if val_acc > best_val:
            best_val = val_acc
            history.best_epoch = epoch
            best_params = (encoder.copy_parameters(), classifier.copy_parameters())
        if (config.early_stop_patience is not None
                and epoch - history.best_epoch >= config.early_stop_patience):
            break

    encoder.set_parameters(best_params[0])
    classifier.set_parameters(best_params[1])
    return BaselineResult(encoder, classifier, history,
                          time.perf_counter() - started)


def train_full_supervised(train: LabeledDataset, config: TrainConfig,
                          validation=None, seed_path=()) -> BaselineResult:
    """The labeled-only baseline with every label available."""
    if not train.is_fully_labeled():
        raise BadParam("full-supervision baseline needs a fully labeled dataset")
    return train_entropy_baseline(train, config, validation, seed_path)


# -- cross-validated experiment runner -------------------------------------


@dataclass
class RepetitionData:
    """One repetition's prepared train/validation/test views."""

    train: LabeledDataset
    validation: LabeledDataset
    test_features: np.ndarray
    test_truth: np.ndarray
    scaler: Standardizer | None
    labeled_row_mask: np.ndarray  # over the full dataset: labeled in training


def prepare_repetition(dataset: LabeledDataset, config: TrainConfig,
                       m_fraction, folds, rep, standardize=True) -> RepetitionData:
    """Split, mask, carve validation, and standardize one repetition.

    Masking happens after the fold split so the test rows keep their
    labels for evaluation; standardization statistics come from the
    training rows only.
    """
    train_idx = folds.train_indices(rep)
    test_idx = folds.test_indices(rep)
    train_full = dataset.subset(train_idx)

    if dataset.is_fully_labeled() and m_fraction < 1.0:
        masked = mask_labels(
            train_full, m_fraction, derive_rng(config.seed, "mask", rep)
        )
    else:
        if not dataset.is_fully_labeled() and m_fraction < 1.0:
            warnings.warn(
                "dataset is already partially labeled; m_fraction ignored",
                stacklevel=2,
            )
        masked = train_full

    labeled_row_mask = np.zeros(dataset.n, dtype=bool)
    labeled_row_mask[train_idx[masked.label_state != -1]] = True

    train_ds, val_ds = split_validation(
        masked, config.validation_fraction,
        derive_rng(config.seed, "val-split", rep),
    )

    scaler = None
    test_features = dataset.features[test_idx]
    if standardize:
        scaler = Standardizer.fit(train_ds.features)
        train_ds = train_ds.with_features(scaler.transform(train_ds.features))
        val_ds = val_ds.with_features(scaler.transform(val_ds.features))
        test_features = scaler.transform(test_features)

    test_truth = dataset.ground_truth()[test_idx]
    return RepetitionData(train_ds, val_ds, test_features, test_truth, scaler,
                          labeled_row_mask)


@dataclass
class RepetitionResult:
    rep: int
    encoder: Mlp
    classifier: Mlp
    metrics: MetricsReport
    separability: dict | None
    timings: dict
    bal_history: BalHistory | None = None
    sbc_history: SbcHistory | None = None
    baseline_history: BaselineHistory | None = None


@dataclass
class ExperimentResult:
    manifest: dict
    repetitions: list


def run_repetition(dataset, config, method, m_fraction, folds, rep,
                   standardize=True) -> RepetitionResult:
    """Train and evaluate one repetition of the chosen method."""
    prep = prepare_repetition(dataset, config, m_fraction, folds, rep, standardize)
    seed_path = ("rep", rep)

    if method == "sembc":
        bal = train_bal(prep.train, config, validation=prep.validation,
                        seed_path=seed_path)
        sbc = train_sbc(prep.train, bal.encoder, config,
                        validation=prep.validation, seed_path=seed_path)
        encoder, classifier = bal.encoder, sbc.classifier
        timings = {
            "encoder_seconds": bal.seconds,
            "classifier_seconds": sbc.seconds,
            "label_generation_seconds": sbc.history.label_seconds,
        }
        histories = {"bal_history": bal.history, "sbc_history": sbc.history}
    elif method in ("entropy", "full"):
        trainer = train_full_supervised if method == "full" else train_entropy_baseline
        base = trainer(prep.train, config, validation=prep.validation,
                       seed_path=seed_path)
        encoder, classifier = base.encoder, base.classifier
        timings = {
            "encoder_seconds": base.seconds,
            "classifier_seconds": 0.0,
            "label_generation_seconds": 0.0,
        }
        histories = {"baseline_history": base.history}
    else:
        raise BadParam(f"unknown method {method!r}")

    known = prep.test_truth != -1
    test_latents = encoder.predict(prep.test_features[known])
    probs = classifier.predict(test_latents).ravel()
    metrics = compute_metrics(prep.test_truth[known], probs)

    separability = None
    truth = prep.test_truth[known]
    if np.sum(truth == 0) >= 2 and np.sum(truth == 1) >= 2:
        sep = latent_separability(test_latents, truth)
        separability = {"intra": sep.intra, "inter": sep.inter, "ratio": sep.ratio}

    return RepetitionResult(rep, encoder, classifier, metrics, separability,
                            timings, **histories)


def run_experiment(dataset: LabeledDataset, config: TrainConfig, *,
                   method="sembc", m_fraction=0.1, n_repetitions=10,
                   standardize=True, dataset_spec=None) -> ExperimentResult:
    """Run every repetition and assemble the manifest."""
    if method == "full":
        m_fraction = 1.0
    folds = make_folds(dataset, derive_rng(config.seed, "folds"))
    if n_repetitions > folds.n_repetitions:
        raise BadParam(
            f"n_repetitions {n_repetitions} exceeds fold count {folds.n_repetitions}"
        )

    repetitions = [
        run_repetition(dataset, config, method, m_fraction, folds, rep, standardize)
        for rep in range(n_repetitions)
    ]
    manifest = build_manifest(dataset, config, method, m_fraction, repetitions,
                              standardize, dataset_spec)
    return ExperimentResult(manifest, repetitions)


def _history_dict(rep: RepetitionResult):
    out = {}
    if rep.bal_history is not None:
        out["bal"] = {
            "train_loss": rep.bal_history.train_loss,
            "val_loss": rep.bal_history.val_loss,
            "best_epoch": rep.bal_history.best_epoch,
        }
    if rep.sbc_history is not None:
        out["sbc"] = {
            "labeled_loss": rep.sbc_history.labeled_loss,
            "unlabeled_loss": rep.sbc_history.unlabeled_loss,
            "val_accuracy": rep.sbc_history.val_accuracy,
            "best_epoch": rep.sbc_history.best_epoch,
        }
    if rep.baseline_history is not None:
        out["baseline"] = {
            "train_loss": rep.baseline_history.train_loss,
            "val_accuracy": rep.baseline_history.val_accuracy,
            "best_epoch": rep.baseline_history.best_epoch,
        }
    return out


def build_manifest(dataset, config, method, m_fraction, repetitions,
                   standardize, dataset_spec):
    metric_names = ("accuracy", "precision", "recall", "f1")
    by_metric = {
        name: [getattr(rep.metrics, name) for rep in repetitions]
        for name in metric_names
    }
    summary = {
        "mean": {name: float(np.mean(vals)) for name, vals in by_metric.items()},
        "std": {
            name: float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            for name, vals in by_metric.items()
        },
    }
    return {
        "format": "ldssl-manifest-1",
        "method": method,
        "dataset": dataset_spec if dataset_spec is not None else {
            "provenance": dataset.provenance
        },
        "m_fraction": m_fraction,
        "standardize": bool(standardize),
        "config": config.to_dict(),
        "kernel_backend": _kernels.backend_name(),
        "repetitions": [
            {
                "rep": rep.rep,
                "metrics": rep.metrics.to_dict(),
                "separability": rep.separability,
                "timings": rep.timings,
                "history": _history_dict(rep),
            }
            for rep in repetitions
        ],
        "summary": summary,
    }
