# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import argparse
import sys
from os import makedirs
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import imageio.v3 as iio

from .analytics import Analytics
from .checkpoint import load_checkpoint
from .dataset import Dataset, load_manifest, split, write_split
from .errors import ConfigError, NumericalAbort, UCloudNetError
from .etc import EXIT_ERROR, EXIT_NUMERICAL, EXIT_OK, close_loggers, setup_loggers
from .evaluation import binarize, evaluate, predict_image, to_gray8
from .gradCheck import CHECKS, COMPOSED, PRIMITIVES, failed_checks, run_suite, tolerance_for
from .inputImages import InputImages, read_image
from .layers import count_parameters
from .metrics import write_pr_curve, write_report
from .runConfig import CliConfig, RunConfig, parse_values, read_config_file, resolve, run_name, write_config
from .synthetic import synth_dataset
from .tensor import set_default_dtype
from .training import Trainer

__progName__ = "ucloudnet"
__progVersion__ = "1.0"

SYNTHETIC_SIZE = (64, 64)


class CliParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _target_size(raw:str) -> Tuple[int, int]:
    try:
        h, w = raw.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {raw!r}")


def add_run_args(parser:argparse.ArgumentParser):
    # unset flags stay None so config file values survive
    parser.add_argument('-c', '--config',
        action='store',
        help="Run config file with key=value lines; flags override its values")

    parser.add_argument('-d', '--dataset',
        action='store',
        help="Dataset root containing images/ and GTmaps/")

    parser.add_argument('--subset',
        choices=["day", "night", "all"],
        help="Dataset subset (default all)")

    parser.add_argument('--subset-list',
        action='store',
        dest="subset_list",
        help="File of 'id<TAB>day|night' lines overriding the filename convention")

    parser.add_argument('-k', '--k',
        type=int,
        help="Channel width hyperparameter (default 4)")

    parser.add_argument('--aux',
        action='store_true',
        default=None,
        dest="aux_enabled",
        help="Train with the two auxiliary deep-supervision losses")

    parser.add_argument('--lr-decay',
        action='store_true',
        default=None,
        dest="lr_decay_enabled",
        help="Decay the learning rate by gamma after each epoch")

    parser.add_argument('-e', '--epochs',
        type=int,
        help="Number of epochs (default 100)")

    parser.add_argument('-bs', '--batch-size',
        type=int,
        dest="batch_size",
        help="Batch size (default 16)")

    parser.add_argument('--lr',
        type=float,
        help="Initial learning rate (default 0.001)")

    parser.add_argument('--gamma',
        type=float,
        help="Per-epoch learning rate decay factor (default 0.95)")

    parser.add_argument('-s', '--seed',
        type=int,
        help="Seed for initialization, split and shuffling (default 0)")

    parser.add_argument('--target-size',
        type=_target_size,
        dest="target_size",
        help="Network input size HxW, divisible by 16 (default 320x320, 64x64 for synthetic data)")

    parser.add_argument('--split-ratio',
        type=float,
        dest="split_ratio",
        help="Fraction of samples used for training (default 0.8)")

    parser.add_argument('--synthetic',
        type=int,
        metavar="N",
        help="Use N generated cloud images instead of a dataset folder")

    parser.add_argument('--f64',
        action='store_const',
        const="float64",
        dest="dtype",
        help="Compute in 64-bit floating point")

    parser.add_argument('-ckpt', '--checkpoint',
        action='store',
        help="Checkpoint file")

    parser.add_argument('-o', '--out',
        action='store',
        help="Output directory; each run writes into <out>/<run name>/ (default ./runs/)")

    parser.add_argument('-cd', '--cache-dir',
        action='store',
        dest="cache_dir",
        help="Image cache directory (default ./cache/)")

    parser.add_argument('-ic', '--ignore-cache',
        action='store_true',
        default=None,
        dest="ignore_cache",
        help="Decode images again even if they exist in the cache")

    parser.add_argument('-w', '--workers',
        type=int,
        help="Background image loading threads; batch order is unaffected (default 0)")

    parser.add_argument('-t', '--threshold',
        type=float,
        help="Probability threshold for a cloud pixel (default 0.5)")


CONFIG_KEYS = ["dataset", "subset", "subset_list", "k", "aux_enabled", "lr_decay_enabled", "epochs", "batch_size",
    "lr", "gamma", "seed", "target_size", "split_ratio", "synthetic", "dtype", "checkpoint", "out", "cache_dir",
    "ignore_cache", "workers", "threshold"]


def resolve_args(args:argparse.Namespace, extra:Optional[Dict]=None) -> CliConfig:
    overrides = {k: getattr(args, k, None) for k in CONFIG_KEYS}
    overrides.update(extra or {})
    file_values = {}
    if args.config:
        file_values = parse_values(read_config_file(Path(args.config)))
    if overrides.get("target_size") is None and "target_size" not in file_values:
        synthetic = overrides.get("synthetic") or file_values.get("synthetic")
        if synthetic:
            overrides["target_size"] = SYNTHETIC_SIZE
    return resolve(Path(args.config) if args.config else None, overrides)


def load_data(cfg:RunConfig, dataset_root:Optional[str], analytics:Optional[Analytics], cli:Optional[CliConfig]=None
        ) -> Tuple[Dataset, List[str], List[str]]:
    """Dataset plus (train ids, test ids).

    Generated datasets are used whole for both training and evaluation.
    """
    if cfg.synthetic:
        dataset = Dataset(samples=synth_dataset(cfg.synthetic, cfg.target_size, cfg.seed))
        if analytics:
            analytics.dictSamplesPerSubset.increment("synthetic", len(dataset))
        return dataset, list(dataset.ids), list(dataset.ids)

    if dataset_root is None:
        raise ConfigError("A dataset root (--dataset) or --synthetic N is required")
    cli = cli or CliConfig()
    manifest = load_manifest(Path(dataset_root), cfg.subset, Path(cli.subset_list) if cli.subset_list else None,
        cfg.seed)
    inputImages = InputImages(analytics, Path(cli.cache_dir), cfg.target_size, cli.ignore_cache)
    dataset = Dataset(manifest=manifest, inputImages=inputImages, workers=cli.workers)
    train_ids, test_ids = split(manifest.ids(), cfg.split_ratio, cfg.seed)
    if analytics:
        for kind, n in dataset.subset_counts(manifest.ids()).items():
            analytics.dictSamplesPerSubset.increment(kind, n)
    return dataset, train_ids, test_ids


def cmd_train(args:argparse.Namespace) -> int:
    cfg = resolve_args(args, {"checkpoint_every": args.checkpoint_every})
    set_default_dtype(cfg.dtype)

    resume = None
    if args.resume:
        resume = load_checkpoint(Path(args.resume))
        print("Resuming from", args.resume, f"(epoch {resume.epoch}, iteration {resume.iteration})")

    name = run_name(cfg)
    run_dir = Path(cfg.out) / name
    makedirs(run_dir, exist_ok=True)
    setup_loggers(run_dir / "logs")
    try:
        write_config(cfg, run_dir / "run_config.txt")

        analytics = Analytics(run_dir)
        dataset, train_ids, test_ids = load_data(cfg, cfg.dataset, analytics, cfg)
        if not cfg.synthetic:
            write_split(train_ids, test_ids, run_dir / "split.tsv")
        print(f"Run {name}: {len(train_ids)} training samples, {len(test_ids)} test samples")

        trainer = Trainer(cfg.run_config(), dataset, train_ids, run_dir, analytics, cfg.checkpoint_every, resume)
        print(f"Parameters: {count_parameters(trainer.model)} trainable, "
            f"{count_parameters(trainer.model, include_buffers=True)} with batch norm statistics")

        try:
            _, history = trainer.fit()
        finally:
            analytics.save(name)
    finally:
        close_loggers()

    analytics.printAnalytics(title=name + " Analytics")
    if len(history):
        print(f"Final total loss: {history[-1].total:.6f}")
    print("Checkpoint:", run_dir / "last.ckpt")

    if args.plot:
        from .visualization.loss_curve_diagram import LossCurveDiagram
        LossCurveDiagram(run_dir).create_diagram(run_dir / "loss_history.csv", title=name)
    return EXIT_OK


def _checkpoint_and_data(cfg:CliConfig):
    if cfg.checkpoint is None:
        raise ConfigError("--checkpoint is required")
    ckpt = load_checkpoint(Path(cfg.checkpoint))
    dataset, train_ids, test_ids = load_data(ckpt.config, cfg.dataset, None, cfg)
    return ckpt, dataset, train_ids, test_ids


def cmd_eval(args:argparse.Namespace) -> int:
    cfg = resolve_args(args)
    ckpt, dataset, train_ids, test_ids = _checkpoint_and_data(cfg)
    ids = train_ids if args.on_train else test_ids

    out_dir = Path(cfg.out) / run_name(ckpt.config)
    makedirs(out_dir, exist_ok=True)
    report = evaluate(ckpt.model, dataset, ids, cfg.threshold, ckpt.config.batch_size, progress=True)
    write_report(report, out_dir / "eval_report.txt")
    write_pr_curve(report.pr_curve, out_dir / "pr_curve.csv")
    if not ckpt.config.synthetic:
        write_split(train_ids, test_ids, out_dir / "split.tsv")

    c = report.confusion
    print(f"{run_name(ckpt.config)} on {len(ids)} samples:")
    print(f"precision={report.precision:.4f} recall={report.recall:.4f} f_measure={report.f_measure:.4f} "
        f"error_rate={report.error_rate:.4f} auc_pr={report.auc:.4f}")
    print(f"tp={c.tp} fp={c.fp} fn={c.fn} tn={c.tn}")
    print("Report:", out_dir / "eval_report.txt")
    return EXIT_OK


def cmd_predict(args:argparse.Namespace) -> int:
    if not 0 <= args.threshold <= 1:
        raise ConfigError(f"threshold must lie in [0,1], got {args.threshold}")
    ckpt = load_checkpoint(Path(args.checkpoint))
    image = read_image(Path(args.image))
    prob = predict_image(ckpt.model, image, ckpt.config.target_size)

    out = Path(args.out) if args.out else Path(Path(args.image).stem + "_mask.png")
    iio.imwrite(out, binarize(prob, args.threshold))
    print("Mask:", out)
    if args.prob:
        iio.imwrite(Path(args.prob), to_gray8(prob))
        print("Probability map:", args.prob)
    return EXIT_OK


def cmd_gradcheck(args:argparse.Namespace) -> int:
    names = args.only or None
    if names:
        unknown = [n for n in names if n not in CHECKS]
        if unknown:
            raise ConfigError(f"Unknown check {unknown[0]!r}, use one of {list(CHECKS)}")
    if args.log_dir:
        setup_loggers(Path(args.log_dir))
    try:
        results = run_suite(args.seeds, args.model_seeds, names)
    finally:
        close_loggers()
    for name, err in results.items():
        status = "ok" if err < tolerance_for(name) else "FAILED"
        print(f"{name:12s} {err:.3e} {status}")

    failed = failed_checks(results)
    if failed:
        print("Gradient check failed for:", ", ".join(failed))
        return EXIT_NUMERICAL
    print(f"All {len(results)} gradient checks passed")
    return EXIT_OK


def cmd_pr_curve(args:argparse.Namespace) -> int:
    if args.compare:
        from .visualization.pr_curve_diagram import PrCurveDiagram
        out = Path(args.out) if args.out else Path(".")
        path = PrCurveDiagram(out).create_diagram([Path(d) for d in args.compare])
        print("Diagram:", path)
        return EXIT_OK

    cfg = resolve_args(args)
    ckpt, dataset, _, test_ids = _checkpoint_and_data(cfg)
    report = evaluate(ckpt.model, dataset, test_ids, cfg.threshold, ckpt.config.batch_size, progress=True)
    out_dir = Path(cfg.out) / run_name(ckpt.config)
    makedirs(out_dir, exist_ok=True)
    write_pr_curve(report.pr_curve, out_dir / "pr_curve.csv")
    print(f"AUC-PR: {report.auc:.6f}")
    print("Curve:", out_dir / "pr_curve.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog=__progName__, formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        fromfile_prefix_chars='!')
    parser.add_argument('--version', action='version', version=f"{__progName__} {__progVersion__}")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="Train a model", formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        fromfile_prefix_chars='!')
    add_run_args(train)
    train.add_argument('-r', '--resume',
        action='store',
        help="Continue training from this checkpoint")
    train.add_argument('-ce', '--checkpoint-every',
        type=int,
        dest="checkpoint_every",
        default=0,
        help="Also write epoch_<e>.ckpt every N epochs (0 disables)")
    train.add_argument('-p', '--plot',
        action='store_true',
        help="Render the loss curve diagram after training")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="Evaluate a checkpoint on the test split",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter, fromfile_prefix_chars='!')
    add_run_args(ev)
    ev.add_argument('--on-train',
        action='store_true',
        dest="on_train",
        help="Evaluate on the training split instead")
    ev.set_defaults(func=cmd_eval)

    pred = sub.add_parser("predict", help="Write the cloud mask of one image",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter, fromfile_prefix_chars='!')
    pred.add_argument('-i', '--image', required=True, help="Input sky image")
    pred.add_argument('-ckpt', '--checkpoint', required=True, help="Checkpoint file")
    pred.add_argument('-t', '--threshold', type=float, default=0.5, help="Probability threshold")
    pred.add_argument('-o', '--out', help="Output mask file (default <image name>_mask.png)")
    pred.add_argument('--prob', help="Also write the probability map as 8-bit grayscale to this file")
    pred.set_defaults(func=cmd_predict)

    gc = sub.add_parser("gradcheck", help="Compare analytic and numerical gradients",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter, fromfile_prefix_chars='!')
    gc.add_argument('--seeds', type=int, default=20, help="Random cases per primitive")
    gc.add_argument('--model-seeds', type=int, default=20, dest="model_seeds",
        help="Random cases for the composed block and the full model")
    gc.add_argument('--only', nargs="+", help=f"Run only these checks of {PRIMITIVES + COMPOSED}")
    gc.add_argument('--log-dir', dest="log_dir", help="Write per-check results to a log file in this directory")
    gc.set_defaults(func=cmd_gradcheck)

    pr = sub.add_parser("pr-curve", help="Export the PR curve of a checkpoint or plot several runs",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter, fromfile_prefix_chars='!')
    add_run_args(pr)
    pr.add_argument('--compare', nargs="+", metavar="DIR", help="Run directories with pr_curve.csv to overlay")
    pr.set_defaults(func=cmd_pr_curve)
    return parser


def main(argv:Optional[List[str]]=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except NumericalAbort as e:
        print("Numerical abort:", e, file=sys.stderr)
        return EXIT_NUMERICAL
    except (UCloudNetError, OSError) as e:
        print("Error:", e, file=sys.stderr)
        return EXIT_ERROR
    finally:
        set_default_dtype("float32")


if __name__ == '__main__':
    sys.exit(main())
