"""Command line entry points for the tenet package."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

from . import experiment
from .config import ExperimentConfig, HyperParams, load_config, save_config
from .dataset import CLASS_NAMES, MultiLabelDataset, load_image
from .metrics import evaluate as evaluate_model
from .metrics import summary_line
from .model import available_backbones, load_checkpoint
from .predictor import decode, predict, write_predictions_jsonl
from .vocab import (Vocabulary, build_vocabulary, corpus_stats, count_corpus,
                    merge_tables, read_captions, write_stats_json)

logger = logging.getLogger(__name__)

# Flags that land on HyperParams (flag dest -> field name is identity).
_HP_INT_FLAGS = ("num_classes", "vocab_size", "num_epochs", "batch_size",
                 "height", "width", "top_c", "top_w")
_DATA_PATH_FLAGS = ("train_instances", "train_captions", "train_images",
                    "val_instances", "val_captions", "val_images")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    """Config file plus per-field override flags.  Flags win over the file."""
    parser.add_argument("--config", type=Path, default=None,
                        help="YAML experiment config to start from")
    group = parser.add_argument_group("overrides")
    for name in _HP_INT_FLAGS:
        group.add_argument("--" + name.replace("_", "-"), dest=name, type=int,
                           default=argparse.SUPPRESS)
    group.add_argument("--epochs", dest="num_epochs", type=int,
                       default=argparse.SUPPRESS, help="alias for --num-epochs")
    group.add_argument("--lr", "--learning-rate", dest="learning_rate", type=float,
                       default=argparse.SUPPRESS)
    group.add_argument("--weight-decay", dest="weight_decay", type=float,
                       default=argparse.SUPPRESS)
    group.add_argument("--optimizer", choices=("adamw", "adam", "sgd"),
                       default=argparse.SUPPRESS)
    group.add_argument("--backbone", choices=available_backbones(),
                       default=argparse.SUPPRESS)
    group.add_argument("--pretrained", action=argparse.BooleanOptionalAction,
                       default=argparse.SUPPRESS)
    group.add_argument("--freeze-backbone", dest="freeze_backbone",
                       action=argparse.BooleanOptionalAction,
                       default=argparse.SUPPRESS)
    group.add_argument("--loss-weight", dest="loss_weight", type=float,
                       default=argparse.SUPPRESS,
                       help="weight on the word-loss term (1.0 = plain sum)")
    group.add_argument("--min-count", dest="min_count", type=int,
                       default=argparse.SUPPRESS)
    group.add_argument("--min-length", dest="min_length", type=int,
                       default=argparse.SUPPRESS)
    group.add_argument("--out-dir", dest="out_dir", type=Path,
                       default=argparse.SUPPRESS)
    group.add_argument("--fixture", action=argparse.BooleanOptionalAction,
                       default=argparse.SUPPRESS,
                       help="use the generated synthetic dataset instead of COCO")
    group.add_argument("--fixture-images", dest="fixture_images", type=int,
                       default=argparse.SUPPRESS)
    group.add_argument("--fixture-val-images", dest="fixture_val_images", type=int,
                       default=argparse.SUPPRESS)
    group.add_argument("--fixture-seed", dest="fixture_seed", type=int,
                       default=argparse.SUPPRESS)
    for name in _DATA_PATH_FLAGS:
        group.add_argument("--" + name.replace("_", "-"), dest=name, type=Path,
                           default=argparse.SUPPRESS)


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Resolve file + flag overrides into one ExperimentConfig."""
    chosen = dict(vars(args))
    if chosen.get("config") is not None:
        config = load_config(chosen["config"])
    elif chosen.get("fixture"):
        config = experiment.fixture_config(chosen.get("out_dir", Path("runs")))
    else:
        config = ExperimentConfig()
    hp_fields = {f.name for f in dataclasses.fields(HyperParams)}
    cfg_fields = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"hp"}
    for key, value in chosen.items():
        if key in ("seed", "seeds"):
            continue  # handled below; their argparse default is None, not SUPPRESS
        if key in hp_fields:
            setattr(config.hp, key, value)
        elif key in cfg_fields:
            setattr(config, key, value)
    if chosen.get("seed") is not None and "seed" in chosen:
        config.seeds = [chosen["seed"]]
        config.hp.seed = chosen["seed"]
    if chosen.get("seeds"):
        config.seeds = list(chosen["seeds"])
    return config


def _merged_table(caption_paths):
    return merge_tables(count_corpus(read_captions(p)) for p in caption_paths)


def _cmd_build_vocab(args: argparse.Namespace) -> int:
    table = _merged_table(args.captions)
    vocab = build_vocabulary(table, min_count=args.min_count,
                             min_length=args.min_length,
                             vocab_size=args.vocab_size)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    vocab.save_tsv(out)
    print(f"kept {len(vocab)} of {table.total_raw_words} distinct words -> {out}")
    if args.stats_json:
        write_stats_json(corpus_stats(table), args.stats_json)
    return 0


def _cmd_vocab_stats(args: argparse.Namespace) -> int:
    stats = corpus_stats(_merged_table(args.captions))
    for key, value in stats.items():
        print(f"{key}: {value}")
    if args.json:
        write_stats_json(stats, args.json)
    return 0


def _cmd_prepare_data(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    info = experiment.prepare_data(config)
    print(json.dumps(info, indent=2))
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    if getattr(args, "seed", None) is None and not getattr(args, "seeds", None):
        config.seeds = config.seeds[:1]
    rows = experiment.run_experiment(config)
    for row in rows:
        print(row)
    return 0 if all(r["status"] == "ok" for r in rows) else 1


def _cmd_run_experiment(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    if args.dump_config:
        save_config(config, args.dump_config)
    rows = experiment.run_experiment(config)
    _print_rows(rows)
    return 0 if all(r["status"] == "ok" for r in rows) else 1


def _load_vocab_for(config: ExperimentConfig, vocab_arg) -> Vocabulary:
    vocab_path = Path(vocab_arg) if vocab_arg else Path(config.out_dir) / "vocab.tsv"
    if not vocab_path.is_file():
        raise FileNotFoundError(
            f"no vocabulary at {vocab_path}; pass --vocab or run build-vocab first")
    return Vocabulary.load_tsv(vocab_path, min_count=config.min_count,
                               min_length=config.min_length)


def _cmd_evaluate(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    model, _meta = load_checkpoint(args.checkpoint)
    # The data pipeline must feed the model at its trained geometry.
    config.hp.num_classes = model.num_classes
    config.hp.height = model.input_height
    config.hp.width = model.input_width
    bundle = experiment.resolve_data(config)
    vocab = _load_vocab_for(config, args.vocab)
    val_data = MultiLabelDataset(bundle.val_samples, vocab, config.hp,
                                 augment=False)
    report = evaluate_model(model, val_data, vocab, config.hp)
    print(summary_line(model.backbone_name, report))
    if args.report_json:
        report.save_json(args.report_json)
        print(f"wrote {args.report_json}")
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    model, _meta = load_checkpoint(args.checkpoint)
    vocab = Vocabulary.load_tsv(args.vocab)
    hp = HyperParams(num_classes=model.num_classes, vocab_size=model.vocab_size,
                     height=model.input_height, width=model.input_width,
                     top_c=args.top_c, top_w=args.top_w)
    predictions = []
    for image_path in args.images:
        tensor = load_image(image_path, hp.height, hp.width)
        prediction = predict(model, tensor, vocab, hp)
        predictions.append(prediction)
        record = decode(prediction, CLASS_NAMES, vocab)
        record["image"] = str(image_path)
        print(json.dumps(record))
    if args.out:
        write_predictions_jsonl(predictions, CLASS_NAMES, vocab, args.out)
    return 0


def _print_rows(rows) -> None:
    header = f"{'backbone':<20} {'seed':>5} {'overall':>8} {'task':>8} {'explanation':>12} {'status':>7}"
    print(header)
    print("-" * len(header))
    for row in rows:
        print(f"{row['backbone']:<20} {row['seed']:>5} {row['overall']:>8} "
              f"{row['task']:>8} {row['explanation']:>12} {row['status']:>7}")


def _cmd_report(args: argparse.Namespace) -> int:
    rows = experiment.read_results_csv(args.results)
    if not rows:
        print(f"no result rows in {args.results}")
        return 1
    _print_rows(rows)
    by_backbone: dict[str, list[float]] = {}
    for row in rows:
        if row["status"] == "ok":
            by_backbone.setdefault(row["backbone"], []).append(float(row["overall"]))
    for name in sorted(by_backbone):
        values = by_backbone[name]
        mean = math.fsum(values) / len(values)
        print(f"{name}: mean overall {mean:.4f} over {len(values)} runs")
    if args.qualitative_ids:
        if not args.checkpoint:
            raise SystemExit("--qualitative-ids requires --checkpoint")
        config = _config_from_args(args)
        model, _meta = load_checkpoint(args.checkpoint)
        config.hp.num_classes = model.num_classes
        config.hp.height = model.input_height
        config.hp.width = model.input_width
        bundle = experiment.resolve_data(config)
        vocab = _load_vocab_for(config, args.vocab)
        page = experiment.emit_qualitative(model, bundle.val_samples,
                                           args.qualitative_ids, vocab,
                                           config.hp, config.out_dir)
        print(f"wrote {page}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tenet",
        description="Joint multi-label classification and explanation-word "
                    "prediction on COCO-style data.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-vocab", help="build the explanation vocabulary")
    p.add_argument("--captions", nargs="+", required=True, type=Path,
                   help="caption sources (COCO captions JSON or text lines)")
    p.add_argument("--out", required=True, type=Path, help="output TSV path")
    p.add_argument("--min-count", type=int, default=4)
    p.add_argument("--min-length", type=int, default=3)
    p.add_argument("--vocab-size", type=int, default=1000)
    p.add_argument("--stats-json", type=Path, default=None,
                   help="also write corpus statistics as JSON")
    p.set_defaults(func=_cmd_build_vocab)

    p = sub.add_parser("prepare-data", help="index data and cache targets")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_prepare_data)

    p = sub.add_parser("train", help="train once (first seed unless --seed)")
    _add_config_flags(p)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on the val split")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--vocab", type=Path, default=None,
                   help="vocabulary TSV (default: <out-dir>/vocab.tsv)")
    p.add_argument("--report-json", type=Path, default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("predict", help="predict classes and words for images")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--vocab", required=True, type=Path)
    p.add_argument("images", nargs="+", type=Path)
    p.add_argument("--top-c", type=int, default=3)
    p.add_argument("--top-w", type=int, default=10)
    p.add_argument("--out", type=Path, default=None, help="write JSONL here too")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("report", help="print a results table; optionally emit "
                                      "a qualitative HTML page")
    _add_config_flags(p)
    p.add_argument("--results", type=Path, default=Path("runs/results.csv"))
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--vocab", type=Path, default=None)
    p.add_argument("--qualitative-ids", nargs="*", type=int, default=None,
                   help="validation image ids to render with predictions")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("run-experiment", help="train+evaluate for every seed")
    _add_config_flags(p)
    p.add_argument("--seed", type=int, default=None, help="single seed shorthand")
    p.add_argument("--seeds", nargs="+", type=int, default=None)
    p.add_argument("--dump-config", type=Path, default=None,
                   help="write the resolved config before running")
    p.set_defaults(func=_cmd_run_experiment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        logger.error("%s", exc)
        return 2


def console_main() -> None:
    sys.exit(main())


def build_vocab_parser() -> argparse.ArgumentParser:
    """Small standalone front end: `vocab build ...` / `vocab stats ...`."""
    parser = argparse.ArgumentParser(
        prog="vocab", description="Caption vocabulary utilities.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build and save a vocabulary TSV")
    p.add_argument("--captions", nargs="+", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--min-count", type=int, default=4)
    p.add_argument("--min-length", type=int, default=3)
    p.add_argument("--vocab-size", type=int, default=1000)
    p.add_argument("--stats-json", type=Path, default=None)
    p.set_defaults(func=_cmd_build_vocab)

    p = sub.add_parser("stats", help="print corpus frequency statistics")
    p.add_argument("--captions", nargs="+", required=True, type=Path)
    p.add_argument("--json", type=Path, default=None)
    p.set_defaults(func=_cmd_vocab_stats)

    return parser


def vocab_main(argv=None) -> int:
    args = build_vocab_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        logger.error("%s", exc)
        return 2


def vocab_console_main() -> None:
    sys.exit(vocab_main())
