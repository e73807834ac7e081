"""Synthetic 3-class shape dataset for end-to-end benchmarks.

Writes a class-per-directory PNG tree (circle / diamond / triangle on a noisy
dark background) plus a JSON sidecar with the ground-truth bounding box of each
shape, so activation-map localization can be scored.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

SHAPE_NAMES = ("circle", "diamond", "triangle")
TOY_IMAGE_SIZE = 96


def render_shape(rng: np.random.Generator, shape: int, size: int = TOY_IMAGE_SIZE):
    """One uint8 RGB image and the shape's bounding box (x0, y0, x1, y1)."""
    img = np.zeros((size, size), np.float32)
    s = int(rng.integers(size * 3 // 16, size * 5 // 16))
    cx = int(rng.integers(s + 2, size - s - 2))
    cy = int(rng.integers(s + 2, size - s - 2))
    yy, xx = np.mgrid[0:size, 0:size]
    if shape == 0:  # circle
        img[(xx - cx) ** 2 + (yy - cy) ** 2 <= s * s] = 1.0
    elif shape == 1:  # diamond
        img[np.abs(xx - cx) + np.abs(yy - cy) <= s] = 1.0
    elif shape == 2:  # triangle
        m = (np.abs(xx - cx) <= (yy - (cy - s)) * 0.6) & (yy >= cy - s) & (yy <= cy + s)
        img[m] = 1.0
    else:
        raise ValueError(f"shape must be 0..2, got {shape}")
    img += rng.normal(0, 0.05, img.shape).astype(np.float32)
    img = np.clip(img, 0, 1)
    rgb = (np.stack([img] * 3, axis=-1) * 255).astype(np.uint8)
    return rgb, (cx - s, cy - s, cx + s, cy + s)


def write_dataset(root, seed: int = 13, per_class: int = 100,
                  size: int = TOY_IMAGE_SIZE) -> dict[str, tuple[int, int, int, int]]:
    """Write the shape dataset under ``root`` and return sample_id -> bbox.

    The bbox map is also saved to ``<root>/bboxes.json`` (skipped by dataset
    scanning, which only picks up image files inside class directories).
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    bboxes = {}
    for class_id, name in enumerate(SHAPE_NAMES):
        cdir = root / name
        cdir.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            rgb, bbox = render_shape(rng, class_id, size)
            sample_id = f"{name}/{name}_{i:04d}.png"
            Image.fromarray(rgb).save(root / sample_id)
            bboxes[sample_id] = bbox
    (root / "bboxes.json").write_text(json.dumps(bboxes, indent=2, sort_keys=True))
    return bboxes


def load_bboxes(root) -> dict[str, tuple[int, int, int, int]]:
    doc = json.loads((Path(root) / "bboxes.json").read_text())
    return {k: tuple(v) for k, v in doc.items()}


def peak_in_bbox(activation_grid: np.ndarray, bbox) -> bool:
    """Whether the argmax of a map falls inside the (x0, y0, x1, y1) box."""
    flat = int(np.argmax(activation_grid))
    py, px = divmod(flat, activation_grid.shape[1])
    x0, y0, x1, y1 = bbox
    return x0 <= px <= x1 and y0 <= py <= y1
