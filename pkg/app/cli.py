"""Command-line entry point: ``python -m app.cli <command> [flags]``.

Exit codes: 0 success, 1 runtime failure (``ERROR:<code>:<message>`` on
stderr), 2 usage error (``ERROR:usage:<message>``).
"""

import argparse
import json
import logging
import sys
import tempfile
from pathlib import Path
from typing import List, Optional

from app.config import TrainerConfig, config as process_config, load_trainer_config
from app.data.manifest import DatasetManifest, load_manifest
from app.data.split import load_split, make_split, save_split
from app.data.synthetic import write_synthetic_dataset
from app.errors import ConfigurationError, ResMatchError
from app.models.checkpoint import load_checkpoint
from app.preview import preview_augmentations
from app.trainer import evaluate, run_experiment, run_sweep

logger = logging.getLogger(__name__)


class CliParser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(f"ERROR:usage:{message}\n")
        sys.exit(2)


def _add_dataset_flags(p: argparse.ArgumentParser):
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--dataset", help="directory holding manifest.jsonl and images/")
    source.add_argument("--synthetic", type=int, metavar="N", help="generate N synthetic train samples in a temp directory")
    p.add_argument("--synthetic-size", type=int, default=64, help="synthetic image side in pixels")
    p.add_argument("--synthetic-val", type=int, default=None, help="synthetic val samples (default: N // 4, at least 1)")


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat JSON trainer config (default: built-in defaults)")
    p.add_argument("--mode", choices=["supervised", "fixmatch", "resmatch"], help="training mode (config default: resmatch)")
    p.add_argument("--epochs", type=int, help="training epochs (config default: 40)")
    p.add_argument("--image-size", type=int, help="square model input size (config default: 480)")
    p.add_argument("--seed", type=int, help="root random seed (config default: 0)")
    p.add_argument("--tau", type=float, help="pixel confidence threshold (config default: 0.7)")
    p.add_argument("--lambda-u", type=float, help="unsupervised loss weight (config default: 2)")
    p.add_argument("--lr", type=float, help="learning rate (config default: 1e-5)")
    p.add_argument("--batch-size", type=int, help="labeled and unlabeled batch size (config default: 2)")
    p.add_argument("--max-steps", type=int, help="cap on steps per epoch (config default: none)")
    p.add_argument("--embedder", choices=["hash", "remote"], help="text embedder kind (config default: hash)")
    p.add_argument("--embedder-endpoint", help="remote embedder URL (default: RESMATCH_EMBEDDER_URL)")
    p.add_argument("--out", type=Path, help="output directory (default: RESMATCH_OUT or ./runs)")


def build_parser() -> CliParser:
    parser = CliParser(prog="resmatch", description="Semi-supervised referring expression segmentation")
    parser.add_argument("--log-level", default=None, help="logging level (default: LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("train", help="train a model", formatter_class=fmt)
    _add_dataset_flags(p)
    _add_config_flags(p)
    p.add_argument("--split", help="split file from make-split (default: derived from --ratio and --seed)")
    p.add_argument("--ratio", type=float, default=0.1, help="labeled fraction of the train split")
    p.add_argument("--resume", action="store_true", help="resume from <out>/last.pt if present")

    p = sub.add_parser("eval", help="evaluate a checkpoint", formatter_class=fmt)
    _add_dataset_flags(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint written by train")
    p.add_argument("--eval-split", default="val", choices=["train", "val", "testA", "testB"], help="split to evaluate")
    p.add_argument("--seed", type=int, default=0, help="seed for synthetic generation")
    p.add_argument("--out", type=Path, default=None, help="optional JSON file for per-sample IoUs")

    p = sub.add_parser("gen-data", help="write a synthetic shapes dataset", formatter_class=fmt)
    p.add_argument("--out", type=Path, required=True, help="dataset directory to create")
    p.add_argument("--train", type=int, default=512, help="train samples")
    p.add_argument("--val", type=int, default=128, help="val samples")
    p.add_argument("--size", type=int, default=64, help="image side in pixels")
    p.add_argument("--seed", type=int, default=0, help="generation seed")

    p = sub.add_parser("make-split", help="write a labeled/unlabeled split file", formatter_class=fmt)
    p.add_argument("--dataset", required=True, help="directory holding manifest.jsonl")
    p.add_argument("--ratio", type=float, default=0.1, help="labeled fraction of the train split")
    p.add_argument("--seed", type=int, default=0, help="split seed")
    p.add_argument("--out", type=Path, required=True, help="split JSON file to write")

    p = sub.add_parser("preview-aug", help="write augmentation previews", formatter_class=fmt)
    _add_dataset_flags(p)
    p.add_argument("--n", type=int, default=4, help="number of samples to preview")
    p.add_argument("--seed", type=int, default=0, help="preview seed")
    p.add_argument("--config", help="flat JSON trainer config (default: built-in defaults)")
    p.add_argument("--image-size", type=int, default=None, help="augmentation size (default: config image_size)")
    p.add_argument("--out", type=Path, default=None, help="output directory (default: <RESMATCH_OUT>/preview)")

    p = sub.add_parser("sweep", help="train over label ratios x seeds", formatter_class=fmt)
    _add_dataset_flags(p)
    _add_config_flags(p)
    p.add_argument("--ratios", type=float, nargs="+", required=True, help="labeled fractions")
    p.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3], help="split and training seeds")
    return parser


def _manifest(args, seed: int) -> DatasetManifest:
    if args.dataset:
        return load_manifest(args.dataset)
    if args.synthetic < 1:
        raise ConfigurationError("--synthetic needs a positive sample count")
    root = Path(tempfile.mkdtemp(prefix="resmatch-synthetic-"))
    val = args.synthetic_val if args.synthetic_val is not None else max(1, args.synthetic // 4)
    logger.info("Generating %d+%d synthetic samples in %s", args.synthetic, val, root)
    return write_synthetic_dataset(root, args.synthetic, val, args.synthetic_size, seed)


def _trainer_config(args) -> TrainerConfig:
    batch = getattr(args, "batch_size", None)
    return load_trainer_config(args.config).with_overrides(
        mode=args.mode,
        epochs=args.epochs,
        image_size=args.image_size,
        seed=args.seed,
        tau=args.tau,
        lambda_u=args.lambda_u,
        learning_rate=args.lr,
        batch_size_labeled=batch,
        batch_size_unlabeled=batch,
        max_steps_per_epoch=args.max_steps,
        embedder_kind=args.embedder,
        embedder_endpoint=args.embedder_endpoint or (process_config.embedder_url if args.embedder == "remote" else None),
    )


def cmd_train(args) -> int:
    cfg = _trainer_config(args)
    manifest = _manifest(args, cfg.seed)
    split = load_split(args.split, manifest) if args.split else make_split(manifest, args.ratio, cfg.seed)
    out = args.out or process_config.out_dir
    result = run_experiment(cfg, manifest, split, out, resume=args.resume)
    print(json.dumps({"out": str(result.out_dir), "oIoU": result.final_oiou, "flagged_steps": result.flagged_steps}))
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    manifest = _manifest(args, args.seed)
    result = evaluate(ckpt.model, manifest, args.eval_split, ckpt.config)
    summary = {"split": result.split, "oIoU": result.oiou, "count": result.count}
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps({**summary, "per_sample": result.per_sample}, indent=2), encoding="utf-8")
    print(json.dumps(summary))
    return 0


def cmd_gen_data(args) -> int:
    manifest = write_synthetic_dataset(args.out, args.train, args.val, args.size, args.seed)
    print(json.dumps({"dataset": str(args.out), "records": len(manifest)}))
    return 0


def cmd_make_split(args) -> int:
    split = make_split(load_manifest(args.dataset), args.ratio, args.seed)
    save_split(split, args.out)
    print(json.dumps({"split": str(args.out), "labeled": len(split.labeled_ids), "unlabeled": len(split.unlabeled_ids)}))
    return 0


def cmd_preview_aug(args) -> int:
    cfg = load_trainer_config(args.config).with_overrides(image_size=args.image_size)
    manifest = _manifest(args, args.seed)
    out = args.out or process_config.out_dir / "preview"
    texts = preview_augmentations(manifest, args.n, args.seed, out, cfg)
    print(json.dumps({"preview": str(out), "texts": str(texts)}))
    return 0


def cmd_sweep(args) -> int:
    cfg = _trainer_config(args)
    manifest = _manifest(args, cfg.seed)
    out = args.out or process_config.out_dir / "sweep"
    summary = run_sweep(cfg, manifest, args.ratios, args.seeds, out)
    print(summary.to_string(index=False))
    return 0


HANDLERS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "gen-data": cmd_gen_data,
    "make-split": cmd_make_split,
    "preview-aug": cmd_preview_aug,
    "sweep": cmd_sweep,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or process_config.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return HANDLERS[args.command](args)
    except ResMatchError as e:
        sys.stderr.write(f"ERROR:{e.code}:{e.message}\n")
        return 1
    except Exception as e:
        logger.exception("%s failed", args.command)
        sys.stderr.write(f"ERROR:runtime:{e}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
