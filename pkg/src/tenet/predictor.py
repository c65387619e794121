"""Ranking-based prediction: the top classes and top words by raw logit."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .config import HyperParams
from .dataset import EncodedSample
from .vocab import Vocabulary


@dataclass
class Prediction:
    image_id: int
    top_class_indices: list[int]
    top_class_scores: list[float]
    top_word_indices: list[int]
    top_word_scores: list[float]


def top_k(logits, k: int) -> tuple[list[int], list[float]]:
    """Indices and scores of the k largest values, scores descending.

    Ties break toward the lower index, so the result is deterministic.
    """
    values = np.asarray(logits, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError(f"expected a 1-D score vector, got shape {values.shape}")
    if not 1 <= k <= values.size:
        raise ValueError(f"k must be in [1, {values.size}], got {k}")
    order = np.argsort(-values, kind="stable")[:k]
    return [int(i) for i in order], [float(values[i]) for i in order]


def _check_widths(class_width: int, word_width: int, vocab: Vocabulary | None,
                  params: HyperParams) -> None:
    if params.top_c > class_width:
        raise ValueError(f"top_c={params.top_c} exceeds class output width {class_width}")
    if params.top_w > word_width:
        raise ValueError(f"top_w={params.top_w} exceeds word output width {word_width}")
    if vocab is not None and len(vocab) != word_width:
        raise ValueError(f"vocabulary size {len(vocab)} does not match "
                         f"word output width {word_width}")


def predict(model, sample, vocab: Vocabulary | None, params: HyperParams) -> Prediction:
    """One forward pass, then top_c / top_w ranking per head.

    Accepts an EncodedSample or a bare (3, H, W) image tensor; a bare
    tensor yields image_id -1. Puts the model in eval mode.
    """
    if isinstance(sample, EncodedSample):
        image, image_id = sample.image, sample.image_id
    else:
        image, image_id = sample, -1
    model.eval()
    with torch.no_grad():
        class_logits, word_logits = model(image.unsqueeze(0))
    _check_widths(class_logits.size(1), word_logits.size(1), vocab, params)
    class_idx, class_scores = top_k(class_logits[0].cpu().numpy(), params.top_c)
    word_idx, word_scores = top_k(word_logits[0].cpu().numpy(), params.top_w)
    return Prediction(image_id=image_id, top_class_indices=class_idx,
                      top_class_scores=class_scores, top_word_indices=word_idx,
                      top_word_scores=word_scores)


def predict_batch(model, samples: Sequence[EncodedSample], vocab: Vocabulary | None,
                  params: HyperParams) -> list[Prediction]:
    """Batched forward over encoded samples; same results as per-image predict."""
    model.eval()
    predictions = []
    batch_size = params.batch_size
    for start in range(0, len(samples), batch_size):
        chunk = [samples[i] for i in range(start, min(start + batch_size, len(samples)))]
        images = torch.stack([s.image for s in chunk])
        with torch.no_grad():
            class_logits, word_logits = model(images)
        _check_widths(class_logits.size(1), word_logits.size(1), vocab, params)
        for row, sample in enumerate(chunk):
            class_idx, class_scores = top_k(class_logits[row].cpu().numpy(), params.top_c)
            word_idx, word_scores = top_k(word_logits[row].cpu().numpy(), params.top_w)
            predictions.append(Prediction(
                image_id=sample.image_id, top_class_indices=class_idx,
                top_class_scores=class_scores, top_word_indices=word_idx,
                top_word_scores=word_scores))
    return predictions


def decode(prediction: Prediction, class_names: Sequence[str],
           vocab: Vocabulary) -> dict:
    """Map index-level prediction to category names and vocabulary words."""
    for index in prediction.top_class_indices:
        if not 0 <= index < len(class_names):
            raise ValueError(f"class index {index} out of range [0, {len(class_names)})")
    for index in prediction.top_word_indices:
        if not 0 <= index < len(vocab):
            raise ValueError(f"word index {index} out of range [0, {len(vocab)})")
    return {
        "image_id": prediction.image_id,
        "classes": [class_names[i] for i in prediction.top_class_indices],
        "class_scores": prediction.top_class_scores,
        "words": [vocab.words[i] for i in prediction.top_word_indices],
        "word_scores": prediction.top_word_scores,
    }


def write_predictions_jsonl(predictions: Sequence[Prediction],
                            class_names: Sequence[str], vocab: Vocabulary,
                            path: Path | str) -> None:
    """One decoded prediction per line, JSON."""
    with open(path, "w", encoding="utf-8") as fh:
        for prediction in predictions:
            record = decode(prediction, class_names, vocab)
            record["indices"] = asdict(prediction)
            fh.write(json.dumps(record) + "\n")
