"""Shared-backbone network with a classification head and a caption-word head.

One backbone forward pass feeds both heads, so every backbone weight
serves the class prediction and the word prediction at the same time.
The backbone's own classifier layer is replaced with an identity and the
feature width is discovered by probing, never configured by hand.
"""

from __future__ import annotations

import logging
import os
import tempfile
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
from torchvision import models as tv_models

logger = logging.getLogger(__name__)


class TinyConvNet(nn.Module):
    """Small conv feature extractor for fixtures and fast CPU tests.

    No normalization layers, so train and eval behavior are identical.
    """

    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 16, kernel_size=5, stride=4, padding=2)
        self.conv2 = nn.Conv2d(16, 32, kernel_size=3, stride=2, padding=1)
        self.pool = nn.AdaptiveAvgPool2d(1)

    def forward(self, x):
        x = F.relu(self.conv1(x))
        x = F.relu(self.conv2(x))
        return torch.flatten(self.pool(x), 1)  # (B, 32)


def _weights(pretrained: bool):
    return "DEFAULT" if pretrained else None


def _resnet50(pretrained, height, width):
    m = tv_models.resnet50(weights=_weights(pretrained))
    m.fc = nn.Identity()
    return m


def _mobilenet_v3_small(pretrained, height, width):
    m = tv_models.mobilenet_v3_small(weights=_weights(pretrained))
    m.classifier = nn.Identity()
    return m


def _regnet_y_400mf(pretrained, height, width):
    m = tv_models.regnet_y_400mf(weights=_weights(pretrained))
    m.fc = nn.Identity()
    return m


def _convnext_small(pretrained, height, width):
    m = tv_models.convnext_small(weights=_weights(pretrained))
    m.classifier[2] = nn.Identity()  # keep the norm+flatten, drop the linear
    return m


def _swin_v2_b(pretrained, height, width):
    m = tv_models.swin_v2_b(weights=_weights(pretrained))
    m.head = nn.Identity()
    return m


def _vit_b_16(pretrained, height, width):
    if height != width:
        raise ValueError(f"vit_b_16 needs a square input, got {height}x{width}")
    if pretrained and height != 224:
        raise ValueError(
            "vit_b_16 pretrained weights are defined for 224x224 input; "
            "set height=width=224 or use pretrained=false")
    m = tv_models.vit_b_16(weights=_weights(pretrained), image_size=height)
    m.heads = nn.Identity()
    return m


def _tiny(pretrained, height, width):
    if pretrained:
        logger.debug("tiny backbone has no pretrained weights; starting from scratch")
    return TinyConvNet()


BACKBONE_BUILDERS = {
    "resnet50": _resnet50,
    "mobilenet_v3_small": _mobilenet_v3_small,
    "regnet_y_400mf": _regnet_y_400mf,
    "convnext_small": _convnext_small,
    "swin_v2_b": _swin_v2_b,
    "vit_b_16": _vit_b_16,
    "tiny": _tiny,
}


def available_backbones() -> list[str]:
    return sorted(BACKBONE_BUILDERS)


@dataclass
class BackboneSpec:
    """Names a backbone; feature_dim is filled in by build_model after probing."""

    name: str
    pretrained: bool = True
    feature_dim: int | None = None


def probe_feature_dim(backbone: nn.Module, height: int, width: int) -> int:
    """Run one dummy image through the backbone and read its feature width.

    Probes in eval mode under no_grad so normalization statistics are
    untouched; restores the previous train/eval mode afterwards.
    """
    was_training = backbone.training
    backbone.eval()
    with torch.no_grad():
        out = backbone(torch.randn(1, 3, height, width))
    backbone.train(was_training)
    if out.dim() != 2:
        raise ValueError(
            f"backbone output must be rank-2 (batch, features), got shape {tuple(out.shape)}")
    return int(out.size(1))


class TENet(nn.Module):
    """Backbone plus two affine heads over one shared feature vector."""

    def __init__(self, backbone: nn.Module, num_classes: int, vocab_size: int,
                 height: int, width: int, backbone_name: str = "custom",
                 pretrained: bool = False):
        super().__init__()
        self.backbone = backbone
        self.feature_dim = probe_feature_dim(backbone, height, width)
        self.classification_head = nn.Linear(self.feature_dim, num_classes)
        self.caption_head = nn.Linear(self.feature_dim, vocab_size)
        # default fan-in uniform weights, biases zeroed
        nn.init.zeros_(self.classification_head.bias)
        nn.init.zeros_(self.caption_head.bias)
        self.num_classes = num_classes
        self.vocab_size = vocab_size
        self.input_height = height
        self.input_width = width
        self.backbone_name = backbone_name
        self.backbone_pretrained = pretrained

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        features = self.backbone(images)            # (B, feature_dim), one pass
        classification_output = self.classification_head(features)
        caption_output = self.caption_head(features)
        return classification_output, caption_output


def build_model(spec: BackboneSpec, num_classes: int, vocab_size: int,
                height: int, width: int, freeze_backbone: bool = False) -> TENet:
    """Construct a TENet from a registry backbone name."""
    builder = BACKBONE_BUILDERS.get(spec.name)
    if builder is None:
        raise ValueError(f"unknown backbone '{spec.name}'; "
                         f"supported: {', '.join(available_backbones())}")
    backbone = builder(spec.pretrained, height, width)
    model = TENet(backbone, num_classes=num_classes, vocab_size=vocab_size,
                  height=height, width=width, backbone_name=spec.name,
                  pretrained=spec.pretrained)
    spec.feature_dim = model.feature_dim
    if freeze_backbone:
        for param in model.backbone.parameters():
            param.requires_grad_(False)
    logger.info("built %s backbone, feature_dim=%d, heads %d->%d and %d->%d",
                spec.name, model.feature_dim, model.feature_dim, num_classes,
                model.feature_dim, vocab_size)
    return model


def save_checkpoint(model: TENet, path, *, vocab_sha256: str = "",
                    hyperparams: dict | None = None, extra: dict | None = None) -> None:
    """Write a self-contained checkpoint (atomic: temp file then rename)."""
    payload = {
        "backbone": model.backbone_name,
        "pretrained": model.backbone_pretrained,
        "feature_dim": model.feature_dim,
        "num_classes": model.num_classes,
        "vocab_size": model.vocab_size,
        "height": model.input_height,
        "width": model.input_width,
        "state_dict": model.state_dict(),
        "vocab_sha256": vocab_sha256,
        "hyperparams": hyperparams or {},
        "extra": extra or {},
    }
    path = os.fspath(path)
    fd, tmp_path = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            torch.save(payload, fh)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def load_checkpoint(path, map_location="cpu") -> tuple[TENet, dict]:
    """Rebuild a model from a checkpoint; returns (model, metadata).

    The backbone is always constructed without downloaded weights; every
    parameter comes from the stored state dict.
    """
    payload = torch.load(path, map_location=map_location, weights_only=False)
    spec = BackboneSpec(name=payload["backbone"], pretrained=False)
    model = build_model(spec, num_classes=payload["num_classes"],
                        vocab_size=payload["vocab_size"],
                        height=payload["height"], width=payload["width"])
    if model.feature_dim != payload["feature_dim"]:
        raise ValueError(f"probed feature_dim {model.feature_dim} does not match "
                         f"checkpoint feature_dim {payload['feature_dim']}")
    model.load_state_dict(payload["state_dict"])
    model.backbone_pretrained = payload["pretrained"]
    meta = {k: v for k, v in payload.items() if k != "state_dict"}
    return model, meta
