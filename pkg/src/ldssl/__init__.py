"""Semi-supervised binary classification with latent angular distances.

Two stages: an encoder trained on labeled pairs so same-class latents end
up close and cross-class latents far apart in angular distance, then a
classifier trained on labeled latents plus unlabeled latents with
epoch-fresh pseudo-labels from k-pair cross-distance votes.
"""

__version__ = "0.1.0"

from ._kernels import backend_name
from .data import (
    LabeledDataset,
    generate_two_gaussians,
    generate_two_moons,
    load_csv,
    make_folds,
    mask_labels,
)
from .evaluation import compute_metrics, latent_separability, project_2d
from .geometry import (
    AnchorSet,
    angular_distance,
    assign_on_the_fly_labels,
    cosine_similarity,
    normalized_cross_distance,
    on_the_fly_label,
)
from .network import Mlp, bce_loss, load_checkpoint, optimizer_step, save_checkpoint
from .pairing import build_pairs
from .training import (
    TrainConfig,
    run_experiment,
    train_bal,
    train_entropy_baseline,
    train_full_supervised,
    train_sbc,
)

__all__ = [
    "AnchorSet",
    "LabeledDataset",
    "Mlp",
    "TrainConfig",
    "angular_distance",
    "assign_on_the_fly_labels",
    "backend_name",
    "bce_loss",
    "build_pairs",
    "compute_metrics",
    "cosine_similarity",
    "generate_two_gaussians",
    "generate_two_moons",
    "latent_separability",
    "load_checkpoint",
    "load_csv",
    "make_folds",
    "mask_labels",
    "normalized_cross_distance",
    "on_the_fly_label",
    "optimizer_step",
    "project_2d",
    "run_experiment",
    "save_checkpoint",
    "train_bal",
    "train_entropy_baseline",
    "train_full_supervised",
    "train_sbc",
]
