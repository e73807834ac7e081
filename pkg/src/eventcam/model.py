"""Model bundle: pretrained backbone + GAP/dense head, differential-LR
fine-tuning, prediction, and checkpointing."""
from __future__ import annotations

import copy
import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import backbones
from .data import DatasetManifest, load_batch
from .errors import ClassCountMismatch, ConfigError, DivergedLoss, ShapeMismatch
from .metrics import weighted_f1

DEFAULT_SEED = 13


@dataclass
class ModelConfig:
    backbone_id: str = "toy-cnn"
    input_size: int = 299
    num_classes: int = 2
    target_layer: str = ""
    lr_backbone: float = 1e-5
    lr_head: float = 1e-3
    epochs: int = 10
    batch_size: int = 120
    pretrained: bool = True

    def __post_init__(self):
        if not self.target_layer:
            self.target_layer = backbones.DEFAULT_TARGET_LAYERS.get(self.backbone_id, "")
        self.validate()

    def validate(self):
        if self.num_classes < 1:
            raise ConfigError("num_classes must be positive")
        if self.epochs <= 0:
            raise ConfigError("epochs must be positive")
        if self.batch_size <= 0:
            raise ConfigError("batch_size must be positive")
        if not self.lr_backbone < self.lr_head:
            raise ConfigError("lr_backbone must be lower than lr_head "
                              "(the backbone learns slowly, the fresh head fast)")


class GapDenseHead(nn.Module):
    """Global average pooling over the activation volume, then one dense layer."""

    def __init__(self, in_channels: int, num_classes: int):
        super().__init__()
        self.dense = nn.Linear(in_channels, num_classes)

    def forward(self, volume):  # volume: B x K x H' x W'
        return self.dense(volume.mean(dim=(2, 3)))


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_weighted_f1: float
    seconds: float


@dataclass
class TrainRecord:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_val_f1: float = 0.0

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(dataclasses.asdict(e)) for e in self.epochs)


class ModelBundle:
    """The trainable/explainable unit: backbone, head, and target-layer handle."""

    def __init__(self, config: ModelConfig, backbone: nn.Module, head: nn.Module,
                 class_names: list[str] | None = None):
        self.config = config
        self.backbone = backbone
        self.head = head
        self.class_names = class_names
        self.target_layer_module = backbones.resolve_layer(backbone, config.target_layer)

    def parameters_dtype(self):
        return next(self.head.parameters()).dtype

    def to_tensor(self, images) -> torch.Tensor:
        """Accept B x H x W x 3 (or a single H x W x 3) array/tensor, return NCHW."""
        if isinstance(images, np.ndarray):
            images = torch.from_numpy(images)
        if images.dim() == 3:
            images = images.unsqueeze(0)
        if images.dim() != 4 or images.shape[-1] != 3:
            raise ShapeMismatch(f"expected B x H x W x 3 images, got {tuple(images.shape)}")
        return images.permute(0, 3, 1, 2).to(self.parameters_dtype())

    def forward(self, images) -> torch.Tensor:
        return self.head(self.backbone(self.to_tensor(images)))

    def forward_with_activations(self, images):
        """Forward pass that also returns the target-layer activation volume,
        with autograd history intact so gradients can flow back to it."""
        captured = []

        def hook(_module, _inputs, output):
            captured.append(output)

        handle = self.target_layer_module.register_forward_hook(hook)
        try:
            logits = self.forward(images)
        finally:
            handle.remove()
        return logits, captured[-1]

    def predict(self, images):
        """Predicted class ids and softmax probabilities. Ties break toward the
        lower class id (argmax returns the first maximum)."""
        self.eval()
        with torch.no_grad():
            logits = self.forward(images)
            probs = torch.softmax(logits, dim=1)
        probs = probs.cpu().numpy()
        return probs.argmax(axis=1), probs

    def train(self):
        self.backbone.train()
        self.head.train()

    def eval(self):
        self.backbone.eval()
        self.head.eval()

    def state_dict(self):
        return {"backbone": self.backbone.state_dict(), "head": self.head.state_dict()}

    def load_state_dict(self, state):
        self.backbone.load_state_dict(state["backbone"])
        self.head.load_state_dict(state["head"])

    def save(self, path) -> None:
        torch.save({
            "state_dict": self.state_dict(),
            "config": dataclasses.asdict(self.config),
            "class_names": self.class_names,
        }, path)

    @classmethod
    def load(cls, path) -> "ModelBundle":
        doc = torch.load(Path(path), weights_only=True)
        config = ModelConfig(**doc["config"])
        bundle = build(config, _load_pretrained=False)
        bundle.load_state_dict(doc["state_dict"])
        bundle.class_names = doc["class_names"]
        bundle.eval()
        return bundle


def build(config: ModelConfig, seed: int = DEFAULT_SEED,
          _load_pretrained: bool = True) -> ModelBundle:
    """Create a bundle with pretrained backbone weights and a fresh head."""
    config.validate()
    torch.manual_seed(seed)
    pretrained = config.pretrained and _load_pretrained
    backbone = backbones.create_backbone(config.backbone_id, config.input_size, pretrained)
    head = GapDenseHead(backbone.feature_channels, config.num_classes)
    return ModelBundle(config, backbone, head)


def finetune(bundle: ModelBundle, manifest: DatasetManifest,
             seed: int | None = None) -> TrainRecord:
    """Fine-tune with Adam: backbone at lr_backbone, head at lr_head. Keeps the
    weights of the epoch with the best validation weighted F1 (later epochs win
    ties, so a saturated run keeps its final weights)."""
    cfg = bundle.config
    cfg.validate()
    if len(manifest.classes) != cfg.num_classes:
        raise ClassCountMismatch(
            f"manifest has {len(manifest.classes)} classes, model expects {cfg.num_classes}")
    if seed is None:
        seed = manifest.seed
    torch.manual_seed(seed)
    shuffle_rng = np.random.default_rng(seed)

    optimizer = torch.optim.Adam([
        {"params": bundle.backbone.parameters(), "lr": cfg.lr_backbone},
        {"params": bundle.head.parameters(), "lr": cfg.lr_head},
    ])
    n_train = len(manifest.split_samples("train"))
    order = np.arange(n_train)
    record = TrainRecord()
    best_state = None

    for epoch in range(cfg.epochs):
        start = time.time()
        bundle.train()
        shuffle_rng.shuffle(order)
        losses = []
        for i in range(0, n_train, cfg.batch_size):
            images, labels = load_batch(manifest, "train", order[i:i + cfg.batch_size],
                                        cfg.input_size)
            logits = bundle.forward(images)
            loss = nn.functional.cross_entropy(logits, torch.tensor(labels))
            if not torch.isfinite(loss):
                raise DivergedLoss(epoch)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))

        val_f1 = _validation_f1(bundle, manifest)
        record.epochs.append(EpochRecord(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            val_weighted_f1=val_f1,
            seconds=time.time() - start,
        ))
        if val_f1 >= record.best_val_f1 or best_state is None:
            record.best_val_f1 = val_f1
            record.best_epoch = epoch
            best_state = copy.deepcopy(bundle.state_dict())

    bundle.load_state_dict(best_state)
    bundle.class_names = manifest.class_names()
    bundle.eval()
    return record


def _validation_f1(bundle: ModelBundle, manifest: DatasetManifest,
                   batch_size: int = 64) -> float:
    n_val = len(manifest.split_samples("val"))
    true_ids, pred_ids = [], []
    for i in range(0, n_val, batch_size):
        images, labels = load_batch(manifest, "val", range(i, min(i + batch_size, n_val)),
                                    bundle.config.input_size)
        ids, _ = bundle.predict(images)
        true_ids.extend(labels)
        pred_ids.extend(int(x) for x in ids)
    return weighted_f1(true_ids, pred_ids, bundle.config.num_classes)
