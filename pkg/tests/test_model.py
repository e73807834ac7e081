import numpy as np
import pytest
import torch

from eventcam import data, model
from eventcam.errors import (ClassCountMismatch, ConfigError, ShapeMismatch,
                             UnknownBackbone, UnknownLayer)

from conftest import TOY_CONFIG


def toy_config(**overrides):
    cfg = dict(TOY_CONFIG)
    cfg.update(overrides)
    return model.ModelConfig(**cfg)


class TestConfig:
    def test_zero_epochs_rejected(self):
        with pytest.raises(ConfigError):
            toy_config(epochs=0)

    def test_lr_ordering_enforced(self):
        with pytest.raises(ConfigError):
            toy_config(lr_backbone=1e-3, lr_head=1e-5)
        with pytest.raises(ConfigError):
            toy_config(lr_backbone=1e-3, lr_head=1e-3)

    def test_default_target_layer_filled_in(self):
        assert toy_config().target_layer == "act3"


class TestBuild:
    @pytest.mark.parametrize("num_classes", [4, 10])
    def test_logits_width(self, num_classes):
        bundle = model.build(toy_config(num_classes=num_classes, pretrained=False))
        logits = bundle.forward(np.zeros((1, 96, 96, 3), np.float32))
        assert logits.shape == (1, num_classes)

    def test_zero_batch_smoke(self):
        bundle = model.build(toy_config(pretrained=False))
        logits = bundle.forward(np.zeros((1, 96, 96, 3), np.float32))
        assert torch.isfinite(logits).all()

    def test_unknown_backbone(self):
        with pytest.raises(UnknownBackbone):
            model.build(toy_config(backbone_id="vgg-nope"))

    def test_unknown_layer_lists_available(self):
        with pytest.raises(UnknownLayer) as err:
            model.build(toy_config(target_layer="block99", pretrained=False))
        assert "act3" in err.value.available

    def test_bad_input_shape_rejected(self):
        bundle = model.build(toy_config(pretrained=False))
        with pytest.raises(ShapeMismatch):
            bundle.forward(np.zeros((1, 96, 96), np.float32))


class TestPredict:
    def test_softmax_rows_sum_to_one(self):
        bundle = model.build(toy_config(pretrained=False))
        rng = np.random.default_rng(0)
        images = rng.uniform(-1, 1, (8, 96, 96, 3)).astype(np.float32)
        _, probs = bundle.predict(images)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-5)

    def test_tie_breaks_toward_lower_id(self):
        probs = torch.softmax(torch.tensor([[2.0, 2.0, -1.0]]), dim=1).numpy()
        assert probs.argmax(axis=1)[0] == 0

    def test_trained_model_predicts_heldout_class(self, toy_run):
        manifest, bundle = toy_run["manifest"], toy_run["bundle"]
        pool = manifest.split_samples("test")
        circle_idx = next(i for i, s in enumerate(pool) if s.class_id == 0)
        images, labels = data.load_batch(manifest, "test", [circle_idx], 96)
        ids, _ = bundle.predict(images)
        assert ids[0] == labels[0] == 0


class TestFinetune:
    def test_class_count_mismatch(self, shapes_manifest):
        bundle = model.build(toy_config(num_classes=5, pretrained=False))
        with pytest.raises(ClassCountMismatch):
            model.finetune(bundle, shapes_manifest)

    def test_one_record_per_epoch(self, toy_run):
        record = toy_run["record"]
        assert [e.epoch for e in record.epochs] == list(range(10))
        assert all(e.train_loss >= 0 for e in record.epochs)
        assert all(0 <= e.val_weighted_f1 <= 1 for e in record.epochs)
        assert all(e.seconds > 0 for e in record.epochs)

    def test_differential_lr_displacement(self):
        # one Adam step with gradients of equal magnitude everywhere: the head
        # must move farther than the backbone
        bundle = model.build(toy_config(pretrained=False))
        optimizer = torch.optim.Adam([
            {"params": bundle.backbone.parameters(), "lr": bundle.config.lr_backbone},
            {"params": bundle.head.parameters(), "lr": bundle.config.lr_head},
        ])
        before = {n: p.detach().clone() for n, p in
                  list(bundle.backbone.named_parameters()) + list(bundle.head.named_parameters())}
        for p in list(bundle.backbone.parameters()) + list(bundle.head.parameters()):
            p.grad = torch.ones_like(p)
        optimizer.step()
        back_disp = max((p - before[n]).abs().max().item()
                        for n, p in bundle.backbone.named_parameters())
        head_disp = min((p - before[n]).abs().max().item()
                        for n, p in bundle.head.named_parameters())
        assert head_disp > back_disp


class TestCheckpoint:
    def test_roundtrip_reproduces_logits(self, toy_run, tmp_path):
        bundle = toy_run["bundle"]
        path = tmp_path / "ckpt.pt"
        bundle.save(path)
        loaded = model.ModelBundle.load(path)
        rng = np.random.default_rng(3)
        images = rng.uniform(-1, 1, (4, 96, 96, 3)).astype(np.float32)
        with torch.no_grad():
            a = bundle.forward(images)
            b = loaded.forward(images)
        assert torch.allclose(a, b, atol=1e-6)
        assert loaded.class_names == ["circle", "diamond", "triangle"]
        assert loaded.config.lr_backbone == bundle.config.lr_backbone
