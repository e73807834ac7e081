"""Backbone registry.

Every backbone is an ``nn.Module`` mapping a B x 3 x H x W input to a
B x K x H' x W' activation volume; the classification head (global average
pooling + dense) is attached elsewhere. The layer named by
``ModelConfig.target_layer`` must be resolvable inside the backbone so that
activation maps can be captured there.

The ``toy-cnn`` backbone ships with deterministic "pretrained" weights: a small
convolutional net trained on a seeded synthetic corpus of outline shapes and
stripe/cross patterns. That stands in for an ImageNet-pretrained network in
tests and benchmarks without any download.
"""
from __future__ import annotations

import copy
import logging
import os
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import UnknownBackbone, UnknownLayer

log = logging.getLogger(__name__)

TOY_WIDTH = 32
TOY_PRETRAIN_SEED = 99
_toy_cache: dict[int, "nn.Module"] = {}


class ToyBackbone(nn.Module):
    """Three conv/BN/ReLU stages; final activation is the target layer ``act3``."""

    feature_channels = TOY_WIDTH

    def __init__(self, width: int = TOY_WIDTH):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 16, 5, stride=2, padding=2)
        self.bn1 = nn.BatchNorm2d(16)
        self.act1 = nn.ReLU()
        self.conv2 = nn.Conv2d(16, width, 3, stride=2, padding=1)
        self.bn2 = nn.BatchNorm2d(width)
        self.act2 = nn.ReLU()
        self.conv3 = nn.Conv2d(width, width, 3, stride=2, padding=1)
        self.bn3 = nn.BatchNorm2d(width)
        self.act3 = nn.ReLU()

    def forward(self, x):
        x = self.act1(self.bn1(self.conv1(x)))
        x = self.act2(self.bn2(self.conv2(x)))
        return self.act3(self.bn3(self.conv3(x)))


def _render_pretrain_pattern(rng, cls: int, size: int) -> np.ndarray:
    """One image of the synthetic pretraining corpus, in [-1, +1]."""
    img = np.zeros((size, size), np.float32)
    yy, xx = np.mgrid[0:size, 0:size]
    lo, hi = max(10, size // 7), max(14, size // 3)
    s = int(rng.integers(lo, hi))
    cx = int(rng.integers(s + 2, size - s - 2))
    cy = int(rng.integers(s + 2, size - s - 2))
    r2 = (xx - cx) ** 2 + (yy - cy) ** 2
    if cls == 0:  # ring
        img[(r2 <= s * s) & (r2 >= (s - 5) ** 2)] = 1
    elif cls == 1:  # square outline
        cheb = np.maximum(np.abs(xx - cx), np.abs(yy - cy))
        img[(cheb <= s) & (cheb >= s - 5)] = 1
    elif cls == 2:  # triangle outline
        outer = (np.abs(xx - cx) <= (yy - (cy - s)) * 0.6) & (yy >= cy - s) & (yy <= cy + s)
        inner = (np.abs(xx - cx) <= (yy - (cy - s + 8)) * 0.6) & (yy >= cy - s + 8) & (yy <= cy + s - 5)
        img[outer & ~inner] = 1
    elif cls == 3:  # cross
        img[(np.abs(xx - cx) <= 4) & (np.abs(yy - cy) <= s)] = 1
        img[(np.abs(yy - cy) <= 4) & (np.abs(xx - cx) <= s)] = 1
    elif cls == 4:  # filled square
        img[cy - s:cy + s, cx - s:cx + s] = 1
    else:  # diagonal stripe
        img[np.abs((xx - cx) - (yy - cy)) <= 5] = 1
    img += rng.normal(0, 0.05, img.shape).astype(np.float32)
    img = np.clip(img, 0, 1)
    return np.stack([img] * 3, axis=-1) * 2 - 1


def _pretrain_toy(size: int) -> ToyBackbone:
    """Train the toy backbone on the seeded pattern corpus. Fully deterministic."""
    log.info("pretraining toy backbone at input size %d", size)
    torch.manual_seed(13)
    rng = np.random.default_rng(TOY_PRETRAIN_SEED)
    n_per, n_cls = 120, 6
    images = np.stack([_render_pretrain_pattern(rng, c, size)
                       for c in range(n_cls) for _ in range(n_per)])
    labels = torch.from_numpy(np.repeat(np.arange(n_cls), n_per))

    backbone = ToyBackbone()
    head = nn.Linear(TOY_WIDTH, n_cls)
    opt = torch.optim.Adam(list(backbone.parameters()) + list(head.parameters()), lr=1e-3)
    idx = np.arange(len(labels))
    shuffle_rng = np.random.default_rng(7)
    for _ in range(15):
        shuffle_rng.shuffle(idx)
        for i in range(0, len(idx), 64):
            b = idx[i:i + 64]
            x = torch.from_numpy(images[b]).permute(0, 3, 1, 2)
            logits = head(backbone(x).mean((2, 3)))
            loss = nn.functional.cross_entropy(logits, labels[b])
            opt.zero_grad()
            loss.backward()
            opt.step()
    backbone.eval()
    return backbone


def _toy_cache_path(size: int) -> Path:
    base = os.environ.get("EVENTCAM_CACHE_DIR",
                          os.path.join(os.path.expanduser("~"), ".cache", "eventcam"))
    return Path(base) / f"toy_backbone_{size}.pt"


def pretrained_toy_backbone(input_size: int) -> ToyBackbone:
    """Return a fresh copy of the pretrained toy backbone for this input size."""
    if input_size not in _toy_cache:
        path = _toy_cache_path(input_size)
        if path.is_file():
            backbone = ToyBackbone()
            backbone.load_state_dict(torch.load(path, weights_only=True))
            backbone.eval()
        else:
            backbone = _pretrain_toy(input_size)
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                torch.save(backbone.state_dict(), path)
            except OSError:
                pass  # cache is best-effort
        _toy_cache[input_size] = backbone
    return copy.deepcopy(_toy_cache[input_size])


def _torchvision_backbone(name: str, pretrained: bool):
    try:
        from torchvision import models
    except ImportError as exc:
        raise UnknownBackbone(f"backbone {name!r} needs torchvision") from exc
    if name == "resnet18":
        net = models.resnet18(weights=models.ResNet18_Weights.DEFAULT if pretrained else None)
    elif name == "resnet50":
        net = models.resnet50(weights=models.ResNet50_Weights.DEFAULT if pretrained else None)
    else:
        raise UnknownBackbone(name)
    backbone = nn.Sequential()
    for child_name, child in net.named_children():
        if child_name in ("avgpool", "fc"):
            break
        backbone.add_module(child_name, child)
    backbone.feature_channels = net.fc.in_features
    backbone.eval()
    return backbone


KNOWN_BACKBONES = ("toy-cnn", "resnet18", "resnet50")
DEFAULT_TARGET_LAYERS = {"toy-cnn": "act3", "resnet18": "layer4", "resnet50": "layer4"}


def create_backbone(backbone_id: str, input_size: int, pretrained: bool = True) -> nn.Module:
    if backbone_id == "toy-cnn":
        return pretrained_toy_backbone(input_size) if pretrained else ToyBackbone()
    if backbone_id in ("resnet18", "resnet50"):
        return _torchvision_backbone(backbone_id, pretrained)
    raise UnknownBackbone(
        f"unknown backbone {backbone_id!r}; known: {', '.join(KNOWN_BACKBONES)}")


def resolve_layer(module: nn.Module, layer_name: str) -> nn.Module:
    """Find a named submodule, raising UnknownLayer with the available names."""
    named = dict(module.named_modules())
    named.pop("", None)
    if layer_name not in named:
        raise UnknownLayer(layer_name, sorted(named))
    return named[layer_name]
