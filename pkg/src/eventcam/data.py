"""Dataset discovery, stratified splitting, and normalized batch loading.

Datasets are laid out class-per-directory: ``<root>/<class_name>/<image files>``.
A scan produces an immutable manifest that pins the split assignment; batches are
decoded, resized and mapped linearly to [-1, +1] on demand.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import CorruptImage, EmptyDataset, EmptySplit, UnreadableRoot

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg"}
SPLITS = ("train", "val", "test")
DEFAULT_SEED = 13
DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)
RESIZE_METHOD = "bilinear"


@dataclass(frozen=True)
class EventClass:
    id: int
    name: str


@dataclass(frozen=True)
class Sample:
    sample_id: str  # path relative to the dataset root
    class_id: int
    split: str


@dataclass
class DatasetManifest:
    root: str
    classes: list[EventClass]
    samples: list[Sample]
    seed: int
    split_fractions: tuple[float, float, float]
    skipped_files: int = 0
    resize_method: str = RESIZE_METHOD
    _by_split: dict = field(default_factory=dict, repr=False, compare=False)

    def class_names(self) -> list[str]:
        return [c.name for c in self.classes]

    def split_samples(self, split: str) -> list[Sample]:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        if split not in self._by_split:
            self._by_split[split] = [s for s in self.samples if s.split == split]
        return self._by_split[split]

    def to_json(self) -> str:
        doc = {
            "root": self.root,
            "seed": self.seed,
            "split_fractions": list(self.split_fractions),
            "skipped_files": self.skipped_files,
            "resize_method": self.resize_method,
            "classes": [{"id": c.id, "name": c.name} for c in self.classes],
            "samples": [
                {"sample_id": s.sample_id, "class_id": s.class_id, "split": s.split}
                for s in self.samples
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        doc = json.loads(text)
        return cls(
            root=doc["root"],
            classes=[EventClass(c["id"], c["name"]) for c in doc["classes"]],
            samples=[Sample(s["sample_id"], s["class_id"], s["split"]) for s in doc["samples"]],
            seed=doc["seed"],
            split_fractions=tuple(doc["split_fractions"]),
            skipped_files=doc.get("skipped_files", 0),
            resize_method=doc.get("resize_method", RESIZE_METHOD),
        )

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text())


def _is_decodable(path: Path) -> bool:
    try:
        with Image.open(path) as im:
            im.verify()
        return True
    except Exception:
        return False


def _split_counts(n: int, fractions: tuple[float, float, float]) -> list[int]:
    """Largest-remainder apportionment of n samples over the three splits."""
    exact = [n * f for f in fractions]
    counts = [int(x) for x in exact]
    remainders = [x - c for x, c in zip(exact, counts)]
    for _ in range(n - sum(counts)):
        i = int(np.argmax(remainders))
        counts[i] += 1
        remainders[i] = -1.0
    return counts


def scan(root, seed: int = DEFAULT_SEED,
         split_fractions: tuple[float, float, float] = DEFAULT_FRACTIONS) -> DatasetManifest:
    """Discover a class-per-directory image tree and assign a stratified split.

    The split is deterministic given (seed, file listing): listings are sorted
    lexicographically before the seeded shuffle, so filesystem enumeration
    order never matters.
    """
    root = Path(root)
    if not root.is_dir():
        raise UnreadableRoot(f"dataset root {str(root)!r} is not a readable directory")
    if len(split_fractions) != 3 or any(f < 0 for f in split_fractions):
        raise ValueError("split_fractions must be three non-negative reals")
    if abs(sum(split_fractions) - 1.0) > 1e-9:
        raise ValueError("split_fractions must sum to 1")

    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    classes, samples = [], []
    skipped = 0
    for cdir in class_dirs:
        files = sorted(p for p in cdir.iterdir() if p.is_file())
        kept = []
        for p in files:
            if p.suffix.lower() in IMAGE_EXTENSIONS and _is_decodable(p):
                kept.append(p.relative_to(root).as_posix())
            else:
                skipped += 1
        if not kept:
            continue
        cls = EventClass(id=len(classes), name=cdir.name)
        classes.append(cls)

        rng = np.random.default_rng([seed, cls.id])
        order = list(rng.permutation(len(kept)))
        n_train, n_val, _ = _split_counts(len(kept), tuple(split_fractions))
        for rank, idx in enumerate(order):
            if rank < n_train:
                split = "train"
            elif rank < n_train + n_val:
                split = "val"
            else:
                split = "test"
            samples.append(Sample(sample_id=kept[idx], class_id=cls.id, split=split))

    if len(classes) < 2:
        raise EmptyDataset(
            f"need at least 2 class directories with decodable images under {str(root)!r}, "
            f"found {len(classes)}")
    if skipped:
        log.warning("skipped %d non-image or undecodable file(s) under %s", skipped, root)

    samples.sort(key=lambda s: s.sample_id)
    return DatasetManifest(
        root=str(root),
        classes=classes,
        samples=samples,
        seed=seed,
        split_fractions=tuple(split_fractions),
        skipped_files=skipped,
    )


def load_image(manifest: DatasetManifest, sample_id: str, input_size: int) -> np.ndarray:
    """Decode one sample to a float32 H x W x 3 array in [-1, +1]."""
    path = Path(manifest.root) / sample_id
    try:
        with Image.open(path) as im:
            im = im.convert("RGB").resize((input_size, input_size), Image.BILINEAR)
            arr = np.asarray(im, dtype=np.float32)
    except Exception as exc:
        raise CorruptImage(sample_id, str(exc)) from exc
    return arr / 127.5 - 1.0


def load_batch(manifest: DatasetManifest, split: str, indices, input_size: int):
    """Load a batch of samples from one split.

    Returns (images, labels) where images is float32 of shape B x H x W x 3 in
    [-1, +1] and labels[i] is the class id of images[i].
    """
    pool = manifest.split_samples(split)
    if not pool:
        raise EmptySplit(f"split {split!r} has no samples")
    chosen = [pool[i] for i in indices]
    images = np.stack([load_image(manifest, s.sample_id, input_size) for s in chosen])
    labels = [s.class_id for s in chosen]
    return images, labels
