"""Shared fixtures: the generated dataset, stub backbones, hyperparameters."""

from __future__ import annotations

import pytest
import torch
from hypothesis import settings
from torch import nn

from tenet.config import HyperParams
from tenet.dataset import index_coco
from tenet.fixture import generate_fixture
from tenet.model import TENet
from tenet.vocab import build_vocabulary, count_corpus

settings.register_profile("suite", deadline=None)
settings.load_profile("suite")


def tiny_hp(**overrides) -> HyperParams:
    """Desk-scale hyperparameters; override any field by name."""
    base = dict(num_classes=91, vocab_size=100, num_epochs=1, batch_size=4,
                height=64, width=64, top_c=3, top_w=10, optimizer="adamw",
                learning_rate=5e-3, weight_decay=1e-4, seed=0)
    base.update(overrides)
    return HyperParams(**base)


@pytest.fixture(scope="session")
def fixture_paths(tmp_path_factory):
    """The standard synthetic dataset: 20 train / 5 val solid-color images."""
    return generate_fixture(tmp_path_factory.mktemp("fixture"),
                            n_train=20, n_val=5, seed=7)


@pytest.fixture(scope="session")
def train_samples(fixture_paths):
    return index_coco(fixture_paths.train_instances,
                      fixture_paths.train_captions, fixture_paths.train_images)


@pytest.fixture(scope="session")
def val_samples(fixture_paths):
    return index_coco(fixture_paths.val_instances,
                      fixture_paths.val_captions, fixture_paths.val_images)


@pytest.fixture(scope="session")
def fixture_vocab(train_samples):
    captions = [c for s in train_samples for c in s.captions]
    return build_vocabulary(count_corpus(captions), min_count=4, min_length=3,
                            vocab_size=100)


class StubBackbone(nn.Module):
    """Mean-pools the image and projects the 3 channel means to features."""

    def __init__(self, feature_dim: int = 6):
        super().__init__()
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.proj = nn.Linear(3, feature_dim)

    def forward(self, x):
        return self.proj(self.pool(x).flatten(1))


class CountingBackbone(StubBackbone):
    """StubBackbone that counts forward invocations."""

    def __init__(self, feature_dim: int = 6):
        super().__init__(feature_dim)
        self.calls = 0

    def forward(self, x):
        self.calls += 1
        return super().forward(x)


def stub_model(num_classes: int = 5, vocab_size: int = 7, feature_dim: int = 6,
               height: int = 4, width: int = 4, seed: int = 0,
               backbone: nn.Module | None = None) -> TENet:
    """A fully deterministic miniature model for numeric tests."""
    torch.manual_seed(seed)
    backbone = backbone if backbone is not None else StubBackbone(feature_dim)
    return TENet(backbone, num_classes=num_classes, vocab_size=vocab_size,
                 height=height, width=width, backbone_name="stub")
