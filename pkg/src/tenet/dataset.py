"""COCO ingestion and joint class/word target encoding.

Each sample pairs one image with two binary target vectors: category
presence over the 91 COCO class slots, and vocabulary-word presence over
the caption text. Images are resized, scaled to [0, 1] and normalized
with ImageNet channel statistics.
"""

from __future__ import annotations

import json
import logging
import random
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import torch
from PIL import Image

from .config import HyperParams
from .vocab import Vocabulary, tokenize

logger = logging.getLogger(__name__)

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

# The original 91-category COCO id/name table, ascending id order. The 2017
# annotation files populate only 80 of these ids; the rest stay valid label
# slots that are simply never positive.
COCO_CATEGORIES: tuple[tuple[int, str], ...] = (
    (1, "person"), (2, "bicycle"), (3, "car"), (4, "motorcycle"), (5, "airplane"),
    (6, "bus"), (7, "train"), (8, "truck"), (9, "boat"), (10, "traffic light"),
    (11, "fire hydrant"), (12, "street sign"), (13, "stop sign"), (14, "parking meter"),
    (15, "bench"), (16, "bird"), (17, "cat"), (18, "dog"), (19, "horse"), (20, "sheep"),
    (21, "cow"), (22, "elephant"), (23, "bear"), (24, "zebra"), (25, "giraffe"),
    (26, "hat"), (27, "backpack"), (28, "umbrella"), (29, "shoe"), (30, "eye glasses"),
    (31, "handbag"), (32, "tie"), (33, "suitcase"), (34, "frisbee"), (35, "skis"),
    (36, "snowboard"), (37, "sports ball"), (38, "kite"), (39, "baseball bat"),
    (40, "baseball glove"), (41, "skateboard"), (42, "surfboard"), (43, "tennis racket"),
    (44, "bottle"), (45, "plate"), (46, "wine glass"), (47, "cup"), (48, "fork"),
    (49, "knife"), (50, "spoon"), (51, "bowl"), (52, "banana"), (53, "apple"),
    (54, "sandwich"), (55, "orange"), (56, "broccoli"), (57, "carrot"), (58, "hot dog"),
    (59, "pizza"), (60, "donut"), (61, "cake"), (62, "chair"), (63, "couch"),
    (64, "potted plant"), (65, "bed"), (66, "mirror"), (67, "dining table"),
    (68, "window"), (69, "desk"), (70, "toilet"), (71, "door"), (72, "tv"),
    (73, "laptop"), (74, "mouse"), (75, "remote"), (76, "keyboard"), (77, "cell phone"),
    (78, "microwave"), (79, "oven"), (80, "toaster"), (81, "sink"), (82, "refrigerator"),
    (83, "blender"), (84, "book"), (85, "clock"), (86, "vase"), (87, "scissors"),
    (88, "teddy bear"), (89, "hair drier"), (90, "toothbrush"), (91, "hair brush"),
)

CLASS_IDS: tuple[int, ...] = tuple(cid for cid, _ in COCO_CATEGORIES)
CLASS_NAMES: tuple[str, ...] = tuple(name for _, name in COCO_CATEGORIES)
CATEGORY_NAME_BY_ID: dict[int, str] = dict(COCO_CATEGORIES)


def class_index_map() -> dict[int, int]:
    """Bijection from COCO category id to a contiguous class index."""
    return {cid: index for index, cid in enumerate(CLASS_IDS)}


class SampleDecodeError(RuntimeError):
    """An image file exists but cannot be decoded."""


@dataclass
class RawSample:
    """One image with its category ids and caption strings."""

    image_id: int
    image_path: Path
    category_ids: set[int]
    captions: list[str]


class EncodedSample(NamedTuple):
    """Model-ready sample; NamedTuple so the default collate keeps fields."""

    image: torch.Tensor        # (3, H, W) float32, normalized
    class_target: torch.Tensor  # (num_classes,) float32 in {0, 1}
    word_target: torch.Tensor   # (len(vocab),) float32 in {0, 1}
    image_id: int


def _load_json(path: Path | str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed JSON in {path}: {exc}") from exc


def index_coco(instances_file: Path | str, captions_file: Path | str,
               images_dir: Path | str) -> list[RawSample]:
    """Join instance and caption annotations into one sample per image id.

    Images listed in the instances file but missing on disk are skipped
    with a warning. Caption entries whose image id is unknown to the
    instances file are dropped with a warning. Images without instance
    annotations are kept (their class target is all zero).
    """
    images_dir = Path(images_dir)
    instances = _load_json(instances_file)
    captions = _load_json(captions_file)

    file_names = {img["id"]: img["file_name"] for img in instances.get("images", [])}

    cats_by_image: dict[int, set[int]] = defaultdict(set)
    for ann in instances.get("annotations", []):
        cats_by_image[ann["image_id"]].add(ann["category_id"])

    caps_by_image: dict[int, list[str]] = defaultdict(list)
    orphan_captions = 0
    for ann in captions.get("annotations", []):
        image_id = ann["image_id"]
        if image_id not in file_names:
            orphan_captions += 1
            continue
        caps_by_image[image_id].append(ann["caption"])
    if orphan_captions:
        logger.warning("%d caption annotations reference image ids absent from %s; skipped",
                       orphan_captions, instances_file)

    samples = []
    missing_files = 0
    for image_id in sorted(file_names):
        path = images_dir / file_names[image_id]
        if not path.is_file():
            missing_files += 1
            logger.warning("image file missing, skipping: %s", path)
            continue
        samples.append(RawSample(image_id=image_id, image_path=path,
                                 category_ids=cats_by_image.get(image_id, set()),
                                 captions=caps_by_image.get(image_id, [])))
    logger.info("indexed %d samples (%d missing files, %d orphan captions)",
                len(samples), missing_files, orphan_captions)
    return samples


def load_image(path: Path | str, height: int, width: int) -> torch.Tensor:
    """Decode, resize and normalize one image to a (3, H, W) float tensor."""
    try:
        with Image.open(path) as img:
            img = img.convert("RGB").resize((width, height), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float32) / 255.0
    except (OSError, SyntaxError, ValueError) as exc:
        raise SampleDecodeError(f"cannot decode image {path}: {exc}") from exc
    tensor = torch.from_numpy(arr).permute(2, 0, 1).contiguous()
    mean = torch.tensor(IMAGENET_MEAN).view(3, 1, 1)
    std = torch.tensor(IMAGENET_STD).view(3, 1, 1)
    return (tensor - mean) / std


def encode_targets(sample: RawSample, vocab: Vocabulary,
                   num_classes: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Build the binary class and word target vectors for one sample."""
    index_map = class_index_map()
    class_target = torch.zeros(num_classes, dtype=torch.float32)
    for category_id in sample.category_ids:
        index = index_map.get(category_id)
        if index is None or index >= num_classes:
            raise KeyError(
                f"category id {category_id} has no class index below {num_classes}; "
                "the class index map and the annotations disagree")
        class_target[index] = 1.0

    word_target = torch.zeros(len(vocab), dtype=torch.float32)
    seen: set[str] = set()
    for caption in sample.captions:
        seen.update(tokenize(caption))
    for word in seen:
        rank = vocab.rank_of(word)
        if rank is not None:
            word_target[rank] = 1.0
    return class_target, word_target


def encode(sample: RawSample, vocab: Vocabulary, params: HyperParams,
           flip: bool = False) -> EncodedSample:
    """Encode one raw sample; pure given (sample, vocab, params, flip)."""
    image = load_image(sample.image_path, params.height, params.width)
    if flip:
        image = torch.flip(image, dims=[2])
    class_target, word_target = encode_targets(sample, vocab, params.num_classes)
    return EncodedSample(image=image, class_target=class_target,
                         word_target=word_target, image_id=sample.image_id)


class MultiLabelDataset(torch.utils.data.Dataset):
    """Torch dataset over raw samples; optional horizontal-flip augmentation.

    Flips happen after target encoding; both target vectors are
    flip-invariant. The flip stream is seeded, so iteration is
    reproducible for a fixed seed and access order.
    """

    def __init__(self, samples: Sequence[RawSample], vocab: Vocabulary,
                 params: HyperParams, augment: bool = False,
                 flip_prob: float = 0.5, seed: int | None = None):
        self.samples = list(samples)
        self.vocab = vocab
        self.params = params
        self.augment = augment
        self.flip_prob = flip_prob
        self._rng = random.Random(params.seed if seed is None else seed)

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, index: int) -> EncodedSample:
        flip = self.augment and self._rng.random() < self.flip_prob
        return encode(self.samples[index], self.vocab, self.params, flip=flip)


def filter_decodable(samples: Sequence[RawSample]) -> tuple[list[RawSample], int]:
    """Drop samples whose image file fails a decode check; returns (kept, dropped)."""
    kept = []
    dropped = 0
    for sample in samples:
        try:
            with Image.open(sample.image_path) as img:
                img.verify()
            kept.append(sample)
        except (OSError, SyntaxError, ValueError) as exc:
            dropped += 1
            logger.warning("undecodable image, skipping %s: %s", sample.image_path, exc)
    if dropped:
        logger.info("dropped %d undecodable images, kept %d", dropped, len(kept))
    return kept, dropped


def assert_split_disjoint(train_samples: Sequence[RawSample],
                          val_samples: Sequence[RawSample]) -> None:
    """Fail if any image id appears in both splits."""
    overlap = {s.image_id for s in train_samples} & {s.image_id for s in val_samples}
    if overlap:
        raise ValueError(f"image ids present in both splits: {sorted(overlap)[:10]}"
                         f"{'...' if len(overlap) > 10 else ''}")


def save_target_cache(samples: Sequence[RawSample], vocab: Vocabulary,
                      params: HyperParams, path: Path | str) -> None:
    """Write encoded targets for all samples to a compressed .npz file.

    Arrays: image_ids (N,) int64, class_targets (N, num_classes) uint8,
    word_targets (N, len(vocab)) uint8, plus the vocabulary hash for a
    consistency check on load.
    """
    n = len(samples)
    image_ids = np.zeros(n, dtype=np.int64)
    class_targets = np.zeros((n, params.num_classes), dtype=np.uint8)
    word_targets = np.zeros((n, len(vocab)), dtype=np.uint8)
    for i, sample in enumerate(samples):
        class_t, word_t = encode_targets(sample, vocab, params.num_classes)
        image_ids[i] = sample.image_id
        class_targets[i] = class_t.numpy().astype(np.uint8)
        word_targets[i] = word_t.numpy().astype(np.uint8)
    np.savez_compressed(path, image_ids=image_ids, class_targets=class_targets,
                        word_targets=word_targets,
                        vocab_sha256=np.array(vocab.sha256()))


def load_target_cache(path: Path | str) -> dict[str, np.ndarray]:
    with np.load(path) as data:
        return {key: data[key] for key in data.files}
