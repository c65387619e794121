"""Synthetic desk-scale dataset: solid-color images with planted labels.

Every generated image carries exactly `classes_per_image` category labels
and captions that mention all of its category names plus a fixed set of
filler words. Each planted word occurs at least four times inside the
image's own captions, so it survives the default vocabulary filters no
matter how small the corpus is. That guarantees every image has at least
3 positive classes and at least 11 positive vocabulary words, which makes
a perfect ranking score attainable with the default top-3 / top-10
prediction sizes.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

from .dataset import CATEGORY_NAME_BY_ID

# Populated COCO ids only, so fixture annotations look like real ones.
CATEGORY_POOL: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 13)

FILLER_WORDS: tuple[str, ...] = (
    "standing", "sitting", "large", "small", "bright", "shiny", "parked",
    "moving", "green", "yellow", "orange", "purple", "white", "black",
    "field", "road", "water", "grass", "corner", "sunny",
)


@dataclass
class FixturePaths:
    root: Path
    train_instances: Path
    train_captions: Path
    train_images: Path
    val_instances: Path
    val_captions: Path
    val_images: Path


def _captions_for(names: list[str], fillers: list[str]) -> list[str]:
    base = f"a {names[0]} and a {names[1]} near a {names[2]}"
    captions = []
    for k in range(4):
        rotated = fillers[k:] + fillers[:k]
        captions.append(f"{base} looking {' '.join(rotated)}")
    captions.append(f"a picture of a {names[0]} with a {names[1]} and a {names[2]}")
    return captions


def _write_split(images_dir: Path, instances_path: Path, captions_path: Path,
                 image_ids: list[int], rng: random.Random, used_colors: set,
                 image_size: int, classes_per_image: int, fillers_per_image: int) -> None:
    images_dir.mkdir(parents=True, exist_ok=True)
    images = []
    instance_anns = []
    caption_anns = []
    ann_id = 1
    cap_id = 1
    for image_id in image_ids:
        color = (rng.randrange(256), rng.randrange(256), rng.randrange(256))
        while color in used_colors:
            color = (rng.randrange(256), rng.randrange(256), rng.randrange(256))
        used_colors.add(color)

        file_name = f"{image_id:012d}.png"
        Image.new("RGB", (image_size, image_size), color).save(images_dir / file_name)
        images.append({"id": image_id, "file_name": file_name,
                       "width": image_size, "height": image_size})

        category_ids = sorted(rng.sample(CATEGORY_POOL, classes_per_image))
        for category_id in category_ids:
            instance_anns.append({"id": ann_id, "image_id": image_id,
                                  "category_id": category_id})
            ann_id += 1

        names = [CATEGORY_NAME_BY_ID[cid] for cid in category_ids]
        fillers = rng.sample(FILLER_WORDS, fillers_per_image)
        for caption in _captions_for(names, fillers):
            caption_anns.append({"id": cap_id, "image_id": image_id, "caption": caption})
            cap_id += 1

    categories = [{"id": cid, "name": CATEGORY_NAME_BY_ID[cid]} for cid in CATEGORY_POOL]
    instances_path.write_text(json.dumps(
        {"images": images, "annotations": instance_anns, "categories": categories}),
        encoding="utf-8")
    captions_path.write_text(json.dumps(
        {"images": images, "annotations": caption_anns}), encoding="utf-8")


def generate_fixture(out_dir: Path | str, n_train: int = 20, n_val: int = 5,
                     seed: int = 7, image_size: int = 64,
                     classes_per_image: int = 3,
                     fillers_per_image: int = 8) -> FixturePaths:
    """Write a complete COCO-shaped dataset under out_dir and return its paths.

    Deterministic: the same arguments always produce byte-identical files.
    Train and validation image ids are disjoint by construction.
    """
    root = Path(out_dir)
    rng = random.Random(seed)
    used_colors: set[tuple[int, int, int]] = set()
    paths = FixturePaths(
        root=root,
        train_instances=root / "instances_train.json",
        train_captions=root / "captions_train.json",
        train_images=root / "images" / "train",
        val_instances=root / "instances_val.json",
        val_captions=root / "captions_val.json",
        val_images=root / "images" / "val",
    )
    train_ids = list(range(1, n_train + 1))
    val_ids = list(range(10001, 10001 + n_val))
    _write_split(paths.train_images, paths.train_instances, paths.train_captions,
                 train_ids, rng, used_colors, image_size, classes_per_image,
                 fillers_per_image)
    _write_split(paths.val_images, paths.val_instances, paths.val_captions,
                 val_ids, rng, used_colors, image_size, classes_per_image,
                 fillers_per_image)
    return paths
