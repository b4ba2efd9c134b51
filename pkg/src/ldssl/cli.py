"""Command-line harness: train, sweeps, baselines, eval, and projection.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
divergence.  Flag values override config-file values, which override
defaults.  Every run directory is self-describing: spec.json reproduces
the run, manifest.json holds the full record, metrics.json the schema'd
per-fold metrics.
"""

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .data import (
    generate_two_gaussians,
    generate_two_moons,
    load_csv,
    make_folds,
)
from .errors import BadParam, ConfigError, DivergedTraining, LdsslError
from .evaluation import metrics_json, project_2d
from .network import load_checkpoint, save_checkpoint
from .seeding import derive_rng
from .training import (
    TrainConfig,
    build_manifest,
    prepare_repetition,
    run_repetition,
)

DEFAULT_M_LIST = (0.10, 0.30, 0.50)
DEFAULT_K_LIST = (3, 11, 19)


@dataclass
class RunSpec:
    """Everything a run needs; serializable, and runs are reconstructible
    from the copy embedded in their manifest."""

    method: str = "sembc"
    dataset: dict = field(default_factory=lambda: {
        "generator": "two-moons", "n": 2000, "noise": 0.1,
    })
    m_fraction: float = 0.1
    n_repetitions: int = 10
    standardize: bool = True
    config: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self):
        return {
            "method": self.method,
            "dataset": dict(self.dataset),
            "m_fraction": self.m_fraction,
            "n_repetitions": self.n_repetitions,
            "standardize": self.standardize,
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        known = {"method", "dataset", "m_fraction", "n_repetitions",
                 "standardize", "config"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown spec fields: {sorted(unknown)}")
        spec = cls(
            method=data.get("method", "sembc"),
            dataset=dict(data.get("dataset", cls().dataset)),
            m_fraction=data.get("m_fraction", 0.1),
            n_repetitions=data.get("n_repetitions", 10),
            standardize=data.get("standardize", True),
            config=TrainConfig.from_dict(data.get("config", {})),
        )
        return spec


def load_dataset(spec: RunSpec):
    """Materialize the dataset a spec describes."""
    source = spec.dataset
    if "csv" in source:
        return load_csv(
            source["csv"],
            label_column=source.get("label_column", "label"),
            positive_token=source.get("positive_token", "pos"),
            negative_token=source.get("negative_token", "neg"),
            unlabeled_token=source.get("unlabeled_token", "?"),
        )
    generator = source.get("generator")
    seed = source.get("seed", spec.config.seed)
    if generator == "two-moons":
        return generate_two_moons(source.get("n", 2000),
                                  source.get("noise", 0.1), seed)
    if generator == "two-gaussians":
        return generate_two_gaussians(source.get("n", 2000),
                                      source.get("separation", 4.0), seed)
    raise ConfigError(f"unknown dataset source {source!r}")


def _repetition_worker(spec_dict, rep):
    # re-derives everything from the spec so parallel workers stay
    # bit-identical to the serial path
    spec = RunSpec.from_dict(spec_dict)
    dataset = load_dataset(spec)
    folds = make_folds(dataset, derive_rng(spec.config.seed, "folds"))
    return run_repetition(dataset, spec.config, spec.method, spec.m_fraction,
                          folds, rep, spec.standardize)


def execute_spec(spec: RunSpec, jobs=1):
    """Run all repetitions (optionally in parallel) and build the manifest."""
    dataset = load_dataset(spec)
    folds = make_folds(dataset, derive_rng(spec.config.seed, "folds"))
    if spec.n_repetitions > folds.n_repetitions:
        raise BadParam(
            f"n_repetitions {spec.n_repetitions} exceeds fold count "
            f"{folds.n_repetitions}"
        )
    m_fraction = 1.0 if spec.method == "full" else spec.m_fraction
    if jobs > 1:
        spec_dict = spec.to_dict()
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_repetition_worker, spec_dict, rep)
                for rep in range(spec.n_repetitions)
            ]
            repetitions = [f.result() for f in futures]  # deterministic order
    else:
        repetitions = [
            run_repetition(dataset, spec.config, spec.method, m_fraction,
                           folds, rep, spec.standardize)
            for rep in range(spec.n_repetitions)
        ]
    manifest = build_manifest(dataset, spec.config, spec.method, m_fraction,
                              repetitions, spec.standardize, dict(spec.dataset))
    manifest["spec"] = spec.to_dict()
    return dataset, repetitions, manifest


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _dataset_name(spec):
    if "csv" in spec.dataset:
        return str(spec.dataset["csv"])
    return spec.dataset.get("generator", "unknown")


def write_run_outputs(out_dir: Path, spec, dataset, repetitions, manifest):
    """spec.json, manifest.json, metrics.json, checkpoints/, projection.csv."""
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "spec.json", spec.to_dict())
    _write_json(out_dir / "manifest.json", manifest)
    _write_json(out_dir / "metrics.json", metrics_json(
        _dataset_name(spec), spec.config.seed, manifest["m_fraction"],
        spec.config.k, [(rep.metrics, rep.timings) for rep in repetitions],
    ))

    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    for rep in repetitions:
        save_checkpoint(ckpt_dir / f"encoder_rep{rep.rep}.npz",
                        rep.encoder, spec.config.seed)
        save_checkpoint(ckpt_dir / f"classifier_rep{rep.rep}.npz",
                        rep.classifier, spec.config.seed)

    write_projection(out_dir / "projection.csv", spec, dataset, repetitions[0])


def write_projection(path, spec, dataset, repetition):
    """2-D PCA of the whole dataset's latents under one repetition's encoder."""
    folds = make_folds(dataset, derive_rng(spec.config.seed, "folds"))
    m_fraction = 1.0 if spec.method == "full" else spec.m_fraction
    prep = prepare_repetition(dataset, spec.config, m_fraction, folds,
                              repetition.rep, spec.standardize)
    features = (prep.scaler.transform(dataset.features)
                if prep.scaler is not None else dataset.features)
    latents = repetition.encoder.predict(features)
    coords = project_2d(latents)
    probs = repetition.classifier.predict(latents).ravel()
    predicted = (probs >= 0.5).astype(int)
    truth = dataset.ground_truth()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "true_label", "labeled_flag",
                         "predicted_label"])
        for i in range(dataset.n):
            writer.writerow([
                repr(float(coords[i, 0])), repr(float(coords[i, 1])),
                int(truth[i]), int(prep.labeled_row_mask[i]), int(predicted[i]),
            ])


def _print_summary(manifest):
    for rep in manifest["repetitions"]:
        metrics = rep["metrics"]
        print(
            f"rep {rep['rep']}: accuracy={metrics['accuracy']:.4f} "
            f"precision={metrics['precision']:.4f} "
            f"recall={metrics['recall']:.4f} f1={metrics['f1']:.4f}"
        )
    mean, std = manifest["summary"]["mean"], manifest["summary"]["std"]
    for name in ("accuracy", "precision", "recall", "f1"):
        print(f"{name}: {mean[name]:.4f} +/- {std[name]:.4f}")


# -- commands -----------------------------------------------------------


def cmd_train(args):
    spec = build_spec(args)
    dataset, repetitions, manifest = execute_spec(spec, jobs=args.jobs)
    out_dir = resolve_out_dir(args, spec, "train")
    write_run_outputs(out_dir, spec, dataset, repetitions, manifest)
    _print_summary(manifest)
    print(f"run written to {out_dir}")
    return 0


def cmd_baseline(args):
    spec = build_spec(args)
    spec.method = args.which
    dataset, repetitions, manifest = execute_spec(spec, jobs=args.jobs)
    out_dir = resolve_out_dir(args, spec, f"baseline-{args.which}")
    write_run_outputs(out_dir, spec, dataset, repetitions, manifest)
    if args.compare_to:
        with open(args.compare_to, "r", encoding="utf-8") as fh:
            other = json.load(fh)
        rows = paired_comparison(manifest, other)
        with open(out_dir / "comparison.csv", "w", encoding="utf-8",
                  newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["rep", "baseline_accuracy", "sembc_accuracy",
                             "delta"])
            writer.writerows(rows)
    _print_summary(manifest)
    print(f"run written to {out_dir}")
    return 0


def paired_comparison(baseline_manifest, sembc_manifest):
    sembc_by_rep = {
        rep["rep"]: rep["metrics"]["accuracy"]
        for rep in sembc_manifest["repetitions"]
    }
    rows = []
    for rep in baseline_manifest["repetitions"]:
        rep_id = rep["rep"]
        if rep_id not in sembc_by_rep:
            continue
        base_acc = rep["metrics"]["accuracy"]
        sembc_acc = sembc_by_rep[rep_id]
        rows.append([rep_id, repr(base_acc), repr(sembc_acc),
                     repr(sembc_acc - base_acc)])
    return rows


def _sweep(args, values, subdir_fmt, override):
    spec = build_spec(args)
    out_dir = resolve_out_dir(args, spec, "sweep")
    results = []
    for value in values:
        sub_spec = RunSpec.from_dict(spec.to_dict())
        override(sub_spec, value)
        dataset, repetitions, manifest = execute_spec(sub_spec, jobs=args.jobs)
        sub_dir = out_dir / subdir_fmt.format(value)
        write_run_outputs(sub_dir, sub_spec, dataset, repetitions, manifest)
        results.append((value, manifest))
    return out_dir, results


def cmd_sweep_m(args):
    values = parse_float_list(args.m_list) if args.m_list else DEFAULT_M_LIST
    out_dir, results = _sweep(
        args, values, "m-{:.2f}",
        lambda spec, m: setattr(spec, "m_fraction", m),
    )
    with open(out_dir / "sweep_m.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["m_fraction", "metric", "mean", "std"])
        for m, manifest in results:
            for name in ("accuracy", "precision", "recall", "f1"):
                writer.writerow([
                    m, name,
                    repr(manifest["summary"]["mean"][name]),
                    repr(manifest["summary"]["std"][name]),
                ])
    for m, manifest in results:
        print(f"m={m}: accuracy={manifest['summary']['mean']['accuracy']:.4f}")
    print(f"sweep written to {out_dir}")
    return 0


def cmd_sweep_k(args):
    values = parse_int_list(args.k_list) if args.k_list else DEFAULT_K_LIST

    def override(spec, k):
        spec.config.k = k

    out_dir, results = _sweep(args, values, "k-{}", override)
    with open(out_dir / "sweep_k.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "accuracy_mean", "accuracy_std",
                         "label_generation_seconds"])
        for k, manifest in results:
            seconds = sum(
                rep["timings"]["label_generation_seconds"]
                for rep in manifest["repetitions"]
            )
            writer.writerow([
                k,
                repr(manifest["summary"]["mean"]["accuracy"]),
                repr(manifest["summary"]["std"]["accuracy"]),
                repr(seconds),
            ])
    for k, manifest in results:
        print(f"k={k}: accuracy={manifest['summary']['mean']['accuracy']:.4f}")
    print(f"sweep written to {out_dir}")
    return 0


def cmd_eval(args):
    manifest_path = Path(args.run_dir) / "manifest.json"
    if not manifest_path.exists():
        raise BadParam(f"no manifest.json under {args.run_dir}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    print(f"method: {manifest['method']}  dataset: {manifest['dataset']}")
    print(f"m_fraction: {manifest['m_fraction']}  "
          f"k: {manifest['config']['k']}  seed: {manifest['config']['seed']}")
    _print_summary(manifest)
    return 0


def cmd_project(args):
    run_dir = Path(args.run_dir)
    spec_path = run_dir / "spec.json"
    if not spec_path.exists():
        raise BadParam(f"no spec.json under {args.run_dir}")
    with open(spec_path, "r", encoding="utf-8") as fh:
        spec = RunSpec.from_dict(json.load(fh))
    dataset = load_dataset(spec)
    encoder, _ = load_checkpoint(run_dir / "checkpoints" /
                                 f"encoder_rep{args.rep}.npz")
    classifier, _ = load_checkpoint(run_dir / "checkpoints" /
                                    f"classifier_rep{args.rep}.npz")

    @dataclass
    class _Loaded:
        rep: int
        encoder: object
        classifier: object

    out_path = run_dir / f"projection-rep{args.rep}.csv"
    write_projection(out_path, spec, dataset,
                     _Loaded(args.rep, encoder, classifier))
    print(f"projection written to {out_path}")
    return 0


# -- argument plumbing ---------------------------------------------------


def parse_float_list(text):
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse float list {text!r}") from None


def parse_int_list(text):
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse int list {text!r}") from None


def resolve_out_dir(args, spec, kind) -> Path:
    if args.out:
        return Path(args.out)
    root = os.environ.get("LDSSL_OUT", "runs")
    dataset = _dataset_name(spec).replace("/", "_")
    return Path(root) / f"{kind}-{dataset}-seed{spec.config.seed}"


_CONFIG_FLAGS = {
    "epochs": "epochs",
    "batch_size": "batch_size",
    "k": "k",
    "seed": "seed",
    "encoder_lr": "encoder_lr",
    "classifier_lr": "classifier_lr",
    "latent_dim": "latent_dim",
}


def build_spec(args) -> RunSpec:
    """Merge defaults < config file < command-line flags into a RunSpec."""
    data = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")

    dataset = dict(data.get("dataset", {}))
    if getattr(args, "csv", None):
        dataset = {"csv": args.csv}
        for flag in ("label_column", "positive_token", "negative_token",
                     "unlabeled_token"):
            value = getattr(args, flag, None)
            if value is not None:
                dataset[flag] = value
    elif getattr(args, "generator", None):
        dataset = {"generator": args.generator}
    if dataset.get("generator") or "csv" not in dataset:
        for flag in ("n", "noise", "separation"):
            value = getattr(args, flag, None)
            if value is not None:
                dataset[flag] = value

    config_dict = dict(data.get("config", {}))
    for flag, name in _CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            config_dict[name] = value
    if getattr(args, "hidden", None):
        config_dict["hidden_dims"] = parse_int_list(args.hidden)
    if getattr(args, "freeze_pairs", False):
        config_dict["refresh_pairs"] = False

    try:
        config = TrainConfig.from_dict(config_dict)
    except (BadParam, TypeError) as exc:
        raise ConfigError(f"bad training config: {exc}") from None

    spec = RunSpec(
        method=data.get("method", "sembc"),
        dataset=dataset or RunSpec().dataset,
        m_fraction=args.m if args.m is not None else data.get("m_fraction", 0.1),
        n_repetitions=(args.reps if getattr(args, "reps", None) is not None
                       else data.get("n_repetitions", 10)),
        standardize=(False if getattr(args, "no_standardize", False)
                     else data.get("standardize", True)),
        config=config,
    )
    if not 0 < spec.m_fraction <= 1:
        raise ConfigError(f"m must be in (0, 1], got {spec.m_fraction}")
    return spec


def _add_shared_flags(parser):
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--config", default=None, help="JSON spec file")
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel repetition workers")
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--batch-size", dest="batch_size", type=int,
                        default=None)
    parser.add_argument("--k", type=int, default=None)
    parser.add_argument("--m", type=float, default=None,
                        help="fraction of training labels kept")


def _add_dataset_flags(parser):
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--generator", choices=["two-moons", "two-gaussians"])
    source.add_argument("--csv", default=None)
    parser.add_argument("--n", type=int, default=None)
    parser.add_argument("--noise", type=float, default=None)
    parser.add_argument("--separation", type=float, default=None)
    parser.add_argument("--label-column", dest="label_column", default=None)
    parser.add_argument("--positive-token", dest="positive_token", default=None)
    parser.add_argument("--negative-token", dest="negative_token", default=None)
    parser.add_argument("--unlabeled-token", dest="unlabeled_token", default=None)
    parser.add_argument("--reps", type=int, default=None,
                        help="number of repetitions (max 10)")
    parser.add_argument("--no-standardize", dest="no_standardize",
                        action="store_true")
    parser.add_argument("--encoder-lr", dest="encoder_lr", type=float,
                        default=None)
    parser.add_argument("--classifier-lr", dest="classifier_lr", type=float,
                        default=None)
    parser.add_argument("--hidden", default=None,
                        help="encoder hidden widths, e.g. 64,64")
    parser.add_argument("--latent-dim", dest="latent_dim", type=int,
                        default=None)
    parser.add_argument("--freeze-pairs", dest="freeze_pairs",
                        action="store_true",
                        help="build the pair set once instead of per epoch")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ldssl",
        description="semi-supervised binary classification with latent "
                    "angular distances",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run the two-stage pipeline")
    _add_shared_flags(train)
    _add_dataset_flags(train)
    train.set_defaults(func=cmd_train)

    sweep_m = sub.add_parser("sweep-m", help="sweep the label fraction")
    _add_shared_flags(sweep_m)
    _add_dataset_flags(sweep_m)
    sweep_m.add_argument("--m-list", dest="m_list", default=None,
                         help="comma-separated fractions, default 0.1,0.3,0.5")
    sweep_m.set_defaults(func=cmd_sweep_m)

    sweep_k = sub.add_parser("sweep-k", help="sweep the anchor count")
    _add_shared_flags(sweep_k)
    _add_dataset_flags(sweep_k)
    sweep_k.add_argument("--k-list", dest="k_list", default=None,
                         help="comma-separated counts, default 3,11,19")
    sweep_k.set_defaults(func=cmd_sweep_k)

    baseline = sub.add_parser("baseline", help="labeled-only baselines")
    _add_shared_flags(baseline)
    _add_dataset_flags(baseline)
    baseline.add_argument("--which", choices=["entropy", "full"],
                          default="entropy")
    baseline.add_argument("--compare-to", dest="compare_to", default=None,
                          help="path to a pipeline manifest.json for a "
                               "paired-fold comparison")
    baseline.set_defaults(func=cmd_baseline)

    evaluate = sub.add_parser("eval", help="print metrics from a run directory")
    evaluate.add_argument("--run-dir", dest="run_dir", required=True)
    evaluate.set_defaults(func=cmd_eval)

    project = sub.add_parser("project", help="export a 2-D latent projection")
    project.add_argument("--run-dir", dest="run_dir", required=True)
    project.add_argument("--rep", type=int, default=0)
    project.set_defaults(func=cmd_project)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergedTraining as exc:
        print(f"ldssl.training: {exc}", file=sys.stderr)
        return 4
    except LdsslError as exc:
        code = 3 if exc.module in ("data", "pairing") else 2
        print(f"ldssl.{exc.module}: {exc}", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"ldssl.data: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
