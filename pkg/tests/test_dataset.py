import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from eventcam import data
from eventcam.errors import CorruptImage, EmptyDataset, UnreadableRoot


def test_scan_finds_all_samples(small_dataset):
    manifest = data.scan(small_dataset)
    assert [c.name for c in manifest.classes] == ["blue", "red"]
    assert [c.id for c in manifest.classes] == [0, 1]
    assert len(manifest.samples) == 20
    assert manifest.skipped_files == 1  # the notes.txt


def test_scan_is_deterministic(small_dataset):
    a = data.scan(small_dataset, seed=7).to_json()
    b = data.scan(small_dataset, seed=7).to_json()
    assert a == b


def test_different_seed_changes_split(small_dataset):
    a = data.scan(small_dataset, seed=1)
    b = data.scan(small_dataset, seed=2)
    assert a.to_json() != b.to_json()


def test_split_partition_and_disjointness(shapes_manifest):
    ids = [s.sample_id for s in shapes_manifest.samples]
    assert len(ids) == len(set(ids)) == 300
    by_split = {sp: {s.sample_id for s in shapes_manifest.split_samples(sp)}
                for sp in data.SPLITS}
    assert by_split["train"] | by_split["val"] | by_split["test"] == set(ids)
    assert not (by_split["train"] & by_split["val"])
    assert not (by_split["train"] & by_split["test"])
    assert not (by_split["val"] & by_split["test"])


def test_stratified_70_15_15(shapes_manifest):
    for cls in shapes_manifest.classes:
        counts = {sp: sum(1 for s in shapes_manifest.samples
                          if s.class_id == cls.id and s.split == sp)
                  for sp in data.SPLITS}
        assert counts == {"train": 70, "val": 15, "test": 15}


def test_manifest_roundtrip(shapes_manifest, tmp_path):
    path = tmp_path / "m.json"
    shapes_manifest.save(path)
    loaded = data.DatasetManifest.load(path)
    assert loaded.to_json() == shapes_manifest.to_json()


def test_scan_rejects_missing_root(tmp_path):
    with pytest.raises(UnreadableRoot):
        data.scan(tmp_path / "nope")


def test_scan_rejects_single_class(tmp_path):
    d = tmp_path / "only"
    d.mkdir()
    Image.new("RGB", (8, 8)).save(d / "a.png")
    with pytest.raises(EmptyDataset):
        data.scan(tmp_path)


def test_load_batch_normalization_endpoints(tmp_path):
    for name, value in (("black", 0), ("white", 255), ("mid", 128)):
        d = tmp_path / name
        d.mkdir()
        Image.new("RGB", (8, 8), (value, value, value)).save(d / "x.png")
    manifest = data.scan(tmp_path)
    for cls in manifest.classes:
        sample = [s for s in manifest.samples if s.class_id == cls.id][0]
        arr = data.load_image(manifest, sample.sample_id, 8)
        expected = {"black": -1.0, "white": 1.0, "mid": 128 / 127.5 - 1.0}[cls.name]
        assert np.allclose(arr, expected, atol=1e-6)


def test_load_batch_shape_and_range(shapes_manifest):
    images, labels = data.load_batch(shapes_manifest, "train", range(12), 96)
    assert images.shape == (12, 96, 96, 3)
    assert images.dtype == np.float32
    assert images.min() >= -1.0 and images.max() <= 1.0
    assert len(labels) == 12


def test_load_batch_labels_align(shapes_manifest):
    pool = shapes_manifest.split_samples("test")
    images, labels = data.load_batch(shapes_manifest, "test", [0, 5, 30], 96)
    assert labels == [pool[0].class_id, pool[5].class_id, pool[30].class_id]


def test_corrupt_image_identified(tmp_path):
    for name in ("a", "b"):
        d = tmp_path / name
        d.mkdir()
        Image.new("RGB", (8, 8)).save(d / "ok.png")
    manifest = data.scan(tmp_path)
    # corrupt a file after scanning so decoding fails at load time
    victim = manifest.samples[0]
    (tmp_path / victim.sample_id).write_bytes(b"\x89PNG broken")
    with pytest.raises(CorruptImage) as err:
        data.load_image(manifest, victim.sample_id, 8)
    assert victim.sample_id in str(err.value)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 400),
       fracs=st.tuples(st.floats(0.1, 0.8), st.floats(0.05, 0.45), st.floats(0.05, 0.45)))
def test_split_counts_property(n, fracs):
    total = sum(fracs)
    fracs = tuple(f / total for f in fracs)
    counts = data._split_counts(n, fracs)
    assert sum(counts) == n
    assert all(c >= 0 for c in counts)
    for c, f in zip(counts, fracs):
        assert abs(c / n - f) <= 1.0 / n + 1e-9
