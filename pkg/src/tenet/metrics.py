"""Per-image ranking accuracies and validation-set aggregation.

Task accuracy is the fraction of the predicted top classes that are
ground-truth positives; explanation accuracy is the same fraction over
the predicted top words. The per-image overall score is their plain
average, and set-level numbers are arithmetic means over images.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import HyperParams
from .predictor import predict_batch
from .vocab import Vocabulary


def _hit_fraction(indices: Sequence[int], target, k: int, kind: str) -> float:
    if len(indices) != k:
        raise ValueError(f"expected {k} {kind} indices, got {len(indices)}")
    if len(set(indices)) != len(indices):
        raise ValueError(f"duplicate {kind} indices: {list(indices)}")
    values = np.asarray(target, dtype=np.float64).ravel()
    for index in indices:
        if not 0 <= index < values.size:
            raise ValueError(f"{kind} index {index} out of range [0, {values.size})")
    hits = sum(values[i] for i in indices)
    return float(hits) / k


def task_accuracy(top_class_indices: Sequence[int], class_target, top_c: int) -> float:
    """Fraction of the top_c predicted classes that are truly present."""
    return _hit_fraction(top_class_indices, class_target, top_c, "class")


def explanation_accuracy(top_word_indices: Sequence[int], word_target, top_w: int) -> float:
    """Fraction of the top_w predicted words that occur in the captions."""
    return _hit_fraction(top_word_indices, word_target, top_w, "word")


@dataclass
class EvalReport:
    per_image: list[dict]
    mean_acc_t: float
    mean_acc_e: float
    mean_overall: float
    n_images: int

    def to_dict(self) -> dict:
        return asdict(self)

    def save_json(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n",
                              encoding="utf-8")

    @classmethod
    def load_json(cls, path: Path | str) -> "EvalReport":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def evaluate(model, samples, vocab: Vocabulary | None, params: HyperParams) -> EvalReport:
    """Predict every sample in eval mode and average the per-image accuracies.

    Accepts anything indexable that yields EncodedSample (a list or a
    dataset). Means use exact summation, so sample order cannot change
    the result.
    """
    n = len(samples)
    if n == 0:
        raise ValueError("validation set is empty")
    predictions = predict_batch(model, samples, vocab, params)
    per_image = []
    for i, prediction in enumerate(predictions):
        sample = samples[i]
        acc_t = task_accuracy(prediction.top_class_indices, sample.class_target,
                              params.top_c)
        acc_e = explanation_accuracy(prediction.top_word_indices, sample.word_target,
                                     params.top_w)
        per_image.append({"image_id": sample.image_id, "acc_t": acc_t,
                          "acc_e": acc_e, "overall": (acc_t + acc_e) / 2.0})
    return EvalReport(
        per_image=per_image,
        mean_acc_t=math.fsum(r["acc_t"] for r in per_image) / n,
        mean_acc_e=math.fsum(r["acc_e"] for r in per_image) / n,
        mean_overall=math.fsum(r["overall"] for r in per_image) / n,
        n_images=n,
    )


def summary_line(backbone: str, report: EvalReport) -> str:
    """Fixed-width result line: backbone, overall, task, explanation."""
    return (f"{backbone}  overall={report.mean_overall:.3f}  "
            f"task={report.mean_acc_t:.3f}  explanation={report.mean_acc_e:.3f}  "
            f"n={report.n_images}")
