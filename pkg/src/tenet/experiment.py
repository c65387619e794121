"""End-to-end experiment orchestration: data, vocab, training, result tables."""

from __future__ import annotations

import base64
import csv
import dataclasses
import html
import logging
import mimetypes
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .config import ExperimentConfig, HyperParams
from .dataset import (CLASS_NAMES, MultiLabelDataset, RawSample,
                      assert_split_disjoint, encode, filter_decodable, index_coco,
                      save_target_cache)
from .fixture import generate_fixture
from .metrics import evaluate, summary_line
from .model import BackboneSpec, build_model
from .predictor import decode, predict
from .training import set_seed, train, write_loss_log
from .vocab import Vocabulary, build_vocabulary, count_corpus

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ("backbone", "seed", "overall", "task", "explanation", "status")


def fixture_config(out_dir: Path | str, **overrides) -> ExperimentConfig:
    """Desk-scale defaults: tiny backbone, small images, quick schedule.

    Any ExperimentConfig or HyperParams field can be overridden by name.
    """
    hp = HyperParams(vocab_size=100, num_epochs=3, batch_size=16, height=64,
                     width=64, learning_rate=5e-3)
    config = ExperimentConfig(hp=hp, backbone="tiny", pretrained=False,
                              fixture=True, out_dir=Path(out_dir))
    hp_fields = {f.name for f in dataclasses.fields(HyperParams)}
    for key, value in overrides.items():
        if key in hp_fields:
            setattr(config.hp, key, value)
        elif hasattr(config, key):
            setattr(config, key, value)
        else:
            raise ValueError(f"unknown config field '{key}'")
    return config


@dataclass
class DataBundle:
    """Indexed samples for both splits plus where they came from."""

    train_samples: list[RawSample]
    val_samples: list[RawSample]


def resolve_data(config: ExperimentConfig) -> DataBundle:
    """Index the configured dataset, generating the synthetic one if asked."""
    if config.fixture:
        paths = generate_fixture(Path(config.out_dir) / "fixture",
                                 n_train=config.fixture_images,
                                 n_val=config.fixture_val_images,
                                 seed=config.fixture_seed)
        train_samples = index_coco(paths.train_instances, paths.train_captions,
                                   paths.train_images)
        val_samples = index_coco(paths.val_instances, paths.val_captions,
                                 paths.val_images)
    else:
        train_samples = index_coco(config.train_instances, config.train_captions,
                                   config.train_images)
        val_samples = index_coco(config.val_instances, config.val_captions,
                                 config.val_images)
    train_samples, _ = filter_decodable(train_samples)
    val_samples, _ = filter_decodable(val_samples)
    assert_split_disjoint(train_samples, val_samples)
    return DataBundle(train_samples=train_samples, val_samples=val_samples)


def build_or_load_vocab(config: ExperimentConfig,
                        train_samples: Sequence[RawSample]) -> Vocabulary:
    """Load out_dir/vocab.tsv when present, otherwise build and save it."""
    vocab_path = Path(config.out_dir) / "vocab.tsv"
    if vocab_path.is_file():
        logger.info("loading vocabulary from %s", vocab_path)
        return Vocabulary.load_tsv(vocab_path, min_count=config.min_count,
                                   min_length=config.min_length)
    captions = (caption for sample in train_samples for caption in sample.captions)
    vocab = build_vocabulary(count_corpus(captions), min_count=config.min_count,
                             min_length=config.min_length,
                             vocab_size=config.hp.vocab_size)
    if len(vocab) == 0:
        raise ValueError("vocabulary came out empty; relax min_count/min_length "
                         "or check the caption data")
    vocab_path.parent.mkdir(parents=True, exist_ok=True)
    vocab.save_tsv(vocab_path)
    logger.info("built vocabulary of %d words -> %s", len(vocab), vocab_path)
    return vocab


def prepare_data(config: ExperimentConfig) -> dict:
    """Index, build the vocabulary, and cache encoded targets for both splits."""
    config.validate()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = resolve_data(config)
    vocab = build_or_load_vocab(config, bundle.train_samples)
    train_cache = out_dir / "targets_train.npz"
    val_cache = out_dir / "targets_val.npz"
    save_target_cache(bundle.train_samples, vocab, config.hp, train_cache)
    save_target_cache(bundle.val_samples, vocab, config.hp, val_cache)
    return {"n_train": len(bundle.train_samples), "n_val": len(bundle.val_samples),
            "vocab_size": len(vocab), "train_cache": str(train_cache),
            "val_cache": str(val_cache)}


def _run_single_seed(config: ExperimentConfig, seed: int, bundle: DataBundle,
                     vocab: Vocabulary, run_dir: Path) -> dict:
    run_dir.mkdir(parents=True, exist_ok=True)
    set_seed(seed)
    hp = dataclasses.replace(config.hp, seed=seed)

    spec = BackboneSpec(name=config.backbone, pretrained=config.pretrained)
    model = build_model(spec, num_classes=hp.num_classes, vocab_size=len(vocab),
                        height=hp.height, width=hp.width,
                        freeze_backbone=config.freeze_backbone)

    train_data = MultiLabelDataset(bundle.train_samples, vocab, hp, augment=True)
    val_data = MultiLabelDataset(bundle.val_samples, vocab, hp, augment=False)

    model, records = train(model, train_data, hp,
                           checkpoint_dir=run_dir / "checkpoints",
                           val_data=val_data, vocab=vocab,
                           word_loss_weight=config.loss_weight,
                           vocab_sha256=vocab.sha256())
    write_loss_log(records, run_dir / "loss_log.csv")

    report = evaluate(model, val_data, vocab, hp)
    report.save_json(run_dir / "eval_report.json")
    logger.info("seed %d: %s", seed, summary_line(config.backbone, report))
    return {"backbone": config.backbone, "seed": seed,
            "overall": f"{report.mean_overall:.3f}",
            "task": f"{report.mean_acc_t:.3f}",
            "explanation": f"{report.mean_acc_e:.3f}",
            "status": "ok"}


def run_experiment(config: ExperimentConfig) -> list[dict]:
    """Train and evaluate once per seed; returns the sorted result rows.

    A failing seed is recorded as a failed row and the remaining seeds
    still run. Rows are sorted by overall accuracy, best first, within
    each backbone.
    """
    config.validate()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = resolve_data(config)
    vocab = build_or_load_vocab(config, bundle.train_samples)

    rows = []
    for seed in config.seeds:
        run_dir = out_dir / config.backbone / f"seed_{seed}"
        try:
            rows.append(_run_single_seed(config, seed, bundle, vocab, run_dir))
        except Exception:
            logger.exception("seed %d failed", seed)
            rows.append({"backbone": config.backbone, "seed": seed, "overall": "",
                         "task": "", "explanation": "", "status": "failed"})

    rows.sort(key=lambda r: (r["backbone"], r["status"] != "ok",
                             -(float(r["overall"]) if r["overall"] else 0.0)))
    write_results_csv(rows, out_dir / "results.csv")
    return rows


def write_results_csv(rows: Sequence[dict], path: Path | str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def read_results_csv(path: Path | str) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _panel_html(image_path: Path, classes: list[str], words: list[str]) -> str:
    mime = mimetypes.guess_type(str(image_path))[0] or "image/png"
    data = base64.b64encode(image_path.read_bytes()).decode("ascii")
    return (
        '<div class="panel">'
        f'<img src="data:{mime};base64,{data}" alt="{html.escape(image_path.name)}">'
        f"<p><b>Classes</b>: {html.escape(', '.join(classes))}.</p>"
        f"<p><b>Words</b>: {html.escape(', '.join(words))}.</p>"
        "</div>"
    )


def emit_qualitative(model, samples: Sequence[RawSample], sample_ids: Sequence[int],
                     vocab: Vocabulary, params: HyperParams,
                     out_dir: Path | str) -> Path:
    """Write an HTML page showing each requested image with its predictions.

    Unknown ids are listed as missing; an empty id list produces an empty
    page with a warning.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_id = {s.image_id: s for s in samples}
    missing = [i for i in sample_ids if i not in by_id]
    found = [i for i in sample_ids if i in by_id]
    if missing:
        logger.warning("sample ids not found: %s", missing)
    if not sample_ids:
        logger.warning("no sample ids requested; writing an empty report")

    panels = []
    for image_id in found:
        sample = by_id[image_id]
        encoded = encode(sample, vocab, params)
        prediction = predict(model, encoded, vocab, params)
        record = decode(prediction, CLASS_NAMES, vocab)
        panels.append(_panel_html(sample.image_path, record["classes"],
                                  record["words"]))

    missing_note = ""
    if missing:
        missing_note = f"<p>Missing ids: {html.escape(str(missing))}</p>"
    page = (
        "<!doctype html><html><head><meta charset='utf-8'>"
        "<title>Qualitative predictions</title><style>"
        ".panel{display:inline-block;margin:12px;max-width:320px;vertical-align:top}"
        ".panel img{max-width:100%}"
        "</style></head><body><h1>Qualitative predictions</h1>"
        + missing_note + "".join(panels) + "</body></html>"
    )
    out_path = out_dir / "qualitative.html"
    out_path.write_text(page, encoding="utf-8")
    return out_path
