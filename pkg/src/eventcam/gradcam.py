"""Grad-CAM and CAM activation maps plus heatmap overlay rendering.

Grad-CAM weights each feature map of the target layer by the spatial mean of
the gradient of the target class's pre-softmax logit w.r.t. that map, sums,
rectifies, min-max normalizes, and upsamples to input resolution. CAM is the
special case for a GAP + dense head that reads the dense weights directly; the
two agree after normalization because the gradient route differs only by the
positive pooling constant.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from matplotlib import colormaps
from PIL import Image

from .errors import (NonFiniteGradient, ParamError, SizeMismatch, UnknownClass,
                     UnsupportedHead)
from .model import GapDenseHead, ModelBundle

DEFAULT_BLEND_ALPHA = 0.4
COLORMAP = "jet"  # blue -> red


@dataclass
class ActivationMap:
    grid: np.ndarray  # H x W in [0, 1], input resolution
    target_class: int
    method: str  # "gradcam" or "cam"
    layer_name: str
    raw_max: float  # pre-normalization maximum of the rectified map

    def save_png(self, path) -> None:
        """8-bit grayscale PNG plus a JSON sidecar next to it."""
        path = Path(path)
        gray = np.clip(np.rint(self.grid * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(gray, mode="L").save(path)
        sidecar = path.with_suffix(path.suffix + ".json")
        sidecar.write_text(json.dumps({
            "method": self.method,
            "target_class": self.target_class,
            "layer_name": self.layer_name,
            "raw_max": self.raw_max,
        }, indent=2, sort_keys=True))


def _check_target_class(bundle: ModelBundle, target_class: int) -> None:
    if not 0 <= target_class < bundle.config.num_classes:
        raise UnknownClass(
            f"class id {target_class} outside [0, {bundle.config.num_classes})")


def _normalize_and_upsample(raw: torch.Tensor, input_size: int) -> np.ndarray:
    """ReLU'd raw map -> [0, 1] grid at input resolution.

    Upsampling happens before the min-max normalization so the maximum entry of
    the final grid is exactly 1 (bilinear resampling would otherwise shave the
    peak); the two orders differ only by a positive affine map, which the
    normalization erases. An identically-zero map stays zero; a constant
    positive map becomes all ones (its maximum is its minimum).
    """
    up = upsample_map(raw, input_size)
    lo, hi = float(up.min()), float(up.max())
    if hi <= 0.0:
        norm = torch.zeros_like(up)
    elif hi == lo:
        norm = torch.ones_like(up)
    else:
        norm = (up - lo) / (hi - lo)
    return norm.clamp(0.0, 1.0).cpu().numpy()


def upsample_map(grid: torch.Tensor, size: int) -> torch.Tensor:
    """Bilinear upsampling of one H' x W' map to size x size. Identity when the
    map is already at the requested resolution."""
    if tuple(grid.shape) == (size, size):
        return grid
    return torch.nn.functional.interpolate(
        grid[None, None], size=(size, size), mode="bilinear", align_corners=False)[0, 0]


def gradcam_channel_weights(bundle: ModelBundle, image, target_class: int,
                            use_loss_gradient: bool = False):
    """Per-channel weights (spatial mean of the gradient at the target layer)
    along with the detached activation volume.

    By default the gradient of the pre-softmax class logit is used. The
    cross-entropy-loss gradient is available behind ``use_loss_gradient`` for
    comparison; it is not the mode the maps are defined with.
    """
    _check_target_class(bundle, target_class)
    bundle.eval()
    logits, activations = bundle.forward_with_activations(image)
    if logits.shape[0] != 1:
        raise SizeMismatch("activation maps are computed one image at a time")
    if use_loss_gradient:
        objective = torch.nn.functional.cross_entropy(
            logits, torch.tensor([target_class]))
    else:
        objective = logits[0, target_class]
    grads = torch.autograd.grad(objective, activations)[0]
    if not torch.isfinite(grads).all():
        raise NonFiniteGradient(f"gradient at layer {bundle.config.target_layer!r}")
    alpha = grads[0].mean(dim=(1, 2))  # K
    return alpha, activations[0].detach()


def grad_cam(bundle: ModelBundle, image, target_class: int,
             use_loss_gradient: bool = False) -> ActivationMap:
    """Gradient-weighted activation map for one (image, class) pair."""
    alpha, volume = gradcam_channel_weights(bundle, image, target_class,
                                            use_loss_gradient=use_loss_gradient)
    raw = torch.relu((alpha[:, None, None] * volume).sum(dim=0))
    return ActivationMap(
        grid=_normalize_and_upsample(raw, bundle.config.input_size),
        target_class=target_class,
        method="gradcam",
        layer_name=bundle.config.target_layer,
        raw_max=float(raw.max()),
    )


def cam(bundle: ModelBundle, image, target_class: int) -> ActivationMap:
    """Class activation map read directly from the dense-layer weights.

    Requires the GAP + dense head fed straight by the target layer; otherwise
    the dense weights do not correspond to the captured activation channels.
    """
    _check_target_class(bundle, target_class)
    if not isinstance(bundle.head, GapDenseHead):
        raise UnsupportedHead("CAM needs a global-average-pooling + dense head")
    bundle.eval()
    with torch.no_grad():
        tensor = bundle.to_tensor(image)
        captured = []
        handle = bundle.target_layer_module.register_forward_hook(
            lambda _m, _i, out: captured.append(out))
        try:
            backbone_out = bundle.backbone(tensor)
        finally:
            handle.remove()
        volume = captured[-1]
        if volume.shape != backbone_out.shape or not torch.equal(volume, backbone_out):
            raise UnsupportedHead(
                "CAM needs the target layer to be the backbone output feeding the head; "
                f"layer {bundle.config.target_layer!r} is not terminal")
        weights = bundle.head.dense.weight[target_class]  # K
        raw = torch.relu((weights[:, None, None] * volume[0]).sum(dim=0))
    return ActivationMap(
        grid=_normalize_and_upsample(raw, bundle.config.input_size),
        target_class=target_class,
        method="cam",
        layer_name=bundle.config.target_layer,
        raw_max=float(raw.max()),
    )


def render_overlay(image: np.ndarray, activation_map: ActivationMap,
                   blend_alpha: float = DEFAULT_BLEND_ALPHA) -> np.ndarray:
    """Blend a colormapped heatmap over the original RGB image.

    ``image`` is H x W x 3 uint8; the result has the same shape and dtype:
    (1 - blend_alpha) * image + blend_alpha * colormap(map).
    """
    if not 0.0 < blend_alpha < 1.0:
        raise ParamError(f"blend_alpha must be in (0, 1), got {blend_alpha}")
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise SizeMismatch(f"expected H x W x 3 RGB image, got {image.shape}")
    if activation_map.grid.shape != image.shape[:2]:
        raise SizeMismatch(
            f"map {activation_map.grid.shape} does not match image {image.shape[:2]}")
    heat = colormaps[COLORMAP](activation_map.grid)[:, :, :3] * 255.0
    blended = (1.0 - blend_alpha) * image.astype(np.float64) + blend_alpha * heat
    return np.clip(np.rint(blended), 0, 255).astype(np.uint8)


def save_overlay_png(overlay: np.ndarray, path) -> None:
    Image.fromarray(overlay, mode="RGB").save(path)
