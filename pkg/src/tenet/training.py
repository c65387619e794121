"""Training loop: one binary cross entropy per head, summed, backpropagated."""

from __future__ import annotations

import csv
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader

from .config import HyperParams
from .model import TENet, save_checkpoint

logger = logging.getLogger(__name__)


class NonFiniteLossError(RuntimeError):
    """Training hit a NaN/inf total loss; carries the offending batch position."""

    def __init__(self, epoch: int, step: int):
        super().__init__(f"non-finite total loss at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


def set_seed(seed: int) -> None:
    """Seed python, numpy and torch RNGs in one place."""
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def bce_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean binary cross entropy over every element, from raw logits.

    Uses the numerically stable with-logits form, so huge logits saturate
    instead of overflowing.
    """
    if logits.shape != targets.shape:
        raise ValueError(f"shape mismatch: logits {tuple(logits.shape)} "
                         f"vs targets {tuple(targets.shape)}")
    return F.binary_cross_entropy_with_logits(logits, targets)


def total_loss(class_logits: torch.Tensor, class_targets: torch.Tensor,
               word_logits: torch.Tensor, word_targets: torch.Tensor,
               word_weight: float = 1.0) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(total, class_part, word_part) with total = class_part + word_weight*word_part.

    Each part is a mean over its own batch x label grid, so the two stay
    scale-comparable even though the label counts differ.
    """
    class_part = bce_loss(class_logits, class_targets)
    word_part = bce_loss(word_logits, word_targets)
    return class_part + word_weight * word_part, class_part, word_part


@dataclass
class LossRecord:
    epoch: int
    step: int
    class_loss: float
    word_loss: float
    total_loss: float


def write_loss_log(records: Sequence[LossRecord], path: Path | str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "step", "class_loss", "word_loss", "total_loss"])
        for r in records:
            writer.writerow([r.epoch, r.step, repr(r.class_loss), repr(r.word_loss),
                             repr(r.total_loss)])


def build_optimizer(model: torch.nn.Module, params: HyperParams) -> torch.optim.Optimizer:
    trainable = [p for p in model.parameters() if p.requires_grad]
    if params.optimizer == "adamw":
        return torch.optim.AdamW(trainable, lr=params.learning_rate,
                                 weight_decay=params.weight_decay)
    if params.optimizer == "adam":
        return torch.optim.Adam(trainable, lr=params.learning_rate,
                                weight_decay=params.weight_decay)
    if params.optimizer == "sgd":
        return torch.optim.SGD(trainable, lr=params.learning_rate, momentum=0.9,
                               weight_decay=params.weight_decay)
    raise ValueError(f"unknown optimizer '{params.optimizer}'")


def train(model: TENet, train_data, params: HyperParams,
          checkpoint_dir: Path | str | None = None, *,
          val_data=None, vocab=None, word_loss_weight: float = 1.0,
          vocab_sha256: str = "") -> tuple[TENet, list[LossRecord]]:
    """Run the full training loop; returns the model and one record per step.

    Shuffled mini-batches, every trainable parameter updated each step.
    Deterministic for a fixed params.seed. When checkpoint_dir is given,
    last.pt is written every epoch; when val_data is also given, best.pt
    tracks the highest validation overall accuracy.
    """
    params.validate()
    records: list[LossRecord] = []
    if params.num_epochs == 0:
        return model, records
    if len(train_data) == 0:
        raise ValueError("training set is empty")

    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    generator = torch.Generator()
    generator.manual_seed(params.seed)
    loader = DataLoader(train_data, batch_size=params.batch_size, shuffle=True,
                        generator=generator)
    optimizer = build_optimizer(model, params)
    best_overall = float("-inf")

    for epoch in range(params.num_epochs):
        model.train()
        epoch_total = 0.0
        for step, batch in enumerate(loader):
            optimizer.zero_grad(set_to_none=True)
            class_logits, word_logits = model(batch.image)
            total, class_part, word_part = total_loss(
                class_logits, batch.class_target, word_logits, batch.word_target,
                word_weight=word_loss_weight)
            if not torch.isfinite(total):
                raise NonFiniteLossError(epoch, step)
            total.backward()
            optimizer.step()
            records.append(LossRecord(epoch=epoch, step=step,
                                      class_loss=class_part.detach().item(),
                                      word_loss=word_part.detach().item(),
                                      total_loss=total.detach().item()))
            epoch_total += records[-1].total_loss
        steps = sum(1 for r in records if r.epoch == epoch)
        logger.info("epoch %d: mean total loss %.4f over %d steps",
                    epoch, epoch_total / max(steps, 1), steps)

        if checkpoint_dir is not None:
            hp_dict = params.to_dict()
            save_checkpoint(model, checkpoint_dir / "last.pt",
                            vocab_sha256=vocab_sha256, hyperparams=hp_dict,
                            extra={"epoch": epoch})
            if val_data is not None:
                from .metrics import evaluate  # local import, keeps module load light
                report = evaluate(model, val_data, vocab, params)
                if report.mean_overall > best_overall:
                    best_overall = report.mean_overall
                    save_checkpoint(model, checkpoint_dir / "best.pt",
                                    vocab_sha256=vocab_sha256, hyperparams=hp_dict,
                                    extra={"epoch": epoch,
                                           "val_overall": report.mean_overall})
    return model, records
