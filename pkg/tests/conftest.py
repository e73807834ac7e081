import numpy as np
import pytest
import torch
from PIL import Image

from eventcam import data, metrics, model, toydata


@pytest.fixture(scope="session")
def shapes_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("shapes")
    toydata.write_dataset(root, seed=13, per_class=100)
    return root


@pytest.fixture(scope="session")
def shapes_manifest(shapes_root):
    return data.scan(shapes_root, seed=13)


TOY_CONFIG = dict(
    backbone_id="toy-cnn",
    input_size=toydata.TOY_IMAGE_SIZE,
    num_classes=3,
    lr_backbone=1e-5,
    lr_head=1e-2,
    epochs=10,
    batch_size=32,
)


@pytest.fixture(scope="session")
def toy_run(shapes_root, shapes_manifest):
    """One fine-tuned toy model shared by every test that needs a trained bundle."""
    torch.manual_seed(13)
    config = model.ModelConfig(**TOY_CONFIG)
    bundle = model.build(config, seed=13)
    record = model.finetune(bundle, shapes_manifest, seed=13)
    report = metrics.evaluate(bundle, shapes_manifest, "test")
    return {
        "root": shapes_root,
        "manifest": shapes_manifest,
        "bundle": bundle,
        "record": record,
        "report": report,
        "bboxes": toydata.load_bboxes(shapes_root),
    }


@pytest.fixture()
def small_dataset(tmp_path):
    """Two tiny classes of solid-color PNGs plus one non-image file."""
    for name, color in (("red", (255, 0, 0)), ("blue", (0, 0, 255))):
        d = tmp_path / name
        d.mkdir()
        for i in range(10):
            Image.new("RGB", (8, 8), color).save(d / f"{name}_{i}.png")
    (tmp_path / "red" / "notes.txt").write_text("not an image")
    return tmp_path


def random_gap_dense_bundle(seed, num_classes=3, channels=6, size=32, dtype=torch.float64):
    """Small random conv backbone + GAP/dense head, for oracle tests."""
    torch.manual_seed(seed)
    backbone = torch.nn.Sequential(
        torch.nn.Conv2d(3, 4, 3, stride=2, padding=1),
        torch.nn.Tanh(),
        torch.nn.Conv2d(4, channels, 3, stride=2, padding=1),
        torch.nn.Tanh(),
    )
    backbone.feature_channels = channels
    config = model.ModelConfig(backbone_id="toy-cnn", input_size=size,
                               num_classes=num_classes, target_layer="3")
    head = model.GapDenseHead(channels, num_classes)
    bundle = model.ModelBundle(config, backbone.to(dtype), head.to(dtype))
    bundle.eval()
    return bundle


def random_image(seed, size=32, dtype=np.float64):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1, 1, (size, size, 3)).astype(dtype)
