import json

import numpy as np
import pytest

from lassoviz import flowergen as F


@pytest.fixture(scope="module")
def mini():
    return F.mini_profile(F.FlowerSpec("single-6c"))


def test_class_names():
    assert F.FlowerSpec("single-6c").n_classes == 6
    assert F.FlowerSpec("double-12c").class_names[6] == "stem_red"
    assert F.FlowerSpec("part-2c").class_names == ["balls", "thorns"]
    with pytest.raises(ValueError):
        F.FlowerSpec("triple")


@pytest.mark.parametrize("variant", F.VARIANTS)
def test_mask_is_exactly_the_discriminative_colour(variant):
    spec = F.mini_profile(F.FlowerSpec(variant))
    for label in range(spec.n_classes):
        img, mask = F.render_frame(spec, label, 1)
        assert 0.01 < mask.mean() < 0.1
        colours = {tuple(c) for c in img[mask]}
        assert len(colours) == 1  # a single flat colour inside the mask
        assert not np.any(np.all(img[~mask] == img[mask][0], axis=-1))


def test_render_is_deterministic(mini):
    a = F.render_frame(mini, 2, 3)
    b = F.render_frame(mini, 2, 3)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_augmentation_counts(mini):
    img, mask = F.render_frame(mini, 0, 0)
    samples = F.augment(mini, img, mask, 0, 0)
    assert len(samples) == F.N_CROPS * len(F.ANGLES) == 25
    assert all(s.image.shape == (64, 64, 3) and s.mask.any() for s in samples)
    assert mini.per_class == 100


def test_rotate_zero_is_identity(rng):
    a = rng.random((9, 9))
    np.testing.assert_allclose(F.rotate(a, 0, 1), a, atol=1e-12)


def test_folds_are_stratified():
    labels = np.repeat(np.arange(3), 10)
    folds = F.assign_folds(labels, 3)
    for c in range(3):
        assert np.bincount(folds[labels == c], minlength=5).tolist() == [2] * 5
    assert np.array_equal(folds, F.assign_folds(labels, 3))
    assert not np.array_equal(folds, F.assign_folds(labels, 4))


def test_crop_shift_aligns_scene(mini):
    a = F.render_sample(mini, 1, 2, 4, 15)
    b = F.render_sample(mini, 1, 2, 0, 15)
    dy, dx = F.crop_shift(mini, 4, 0, 15)
    n = 64
    ya, yb = max(0, -dy), min(n, n - dy)
    xa, xb = max(0, -dx), min(n, n - dx)
    pa = a.image[ya:yb, xa:xb].astype(float)
    pb = b.image[ya + dy:yb + dy, xa + dx:xb + dx].astype(float)
    assert np.abs(pa - pb).mean() < 0.25 * np.abs(a.image.astype(float) - b.image).mean()


def test_generate_dataset_tree_is_reproducible(tmp_path):
    spec = F.FlowerSpec("part-2c", raw_side=40, crop_side=32, frames=1, profile="mini")
    m1 = F.generate_dataset(spec, tmp_path / "a", seed=5)
    m2 = F.generate_dataset(spec, tmp_path / "b", seed=5)
    assert F.tree_checksum(m1.root) == F.tree_checksum(m2.root)
    man = json.loads((tmp_path / "a" / "part-2c" / "manifest.json").read_text())
    assert man["seed"] == 5 and len(man["samples"]) == 50
    s = man["samples"][0]
    assert s["image"] == "balls/img_000_0_05.png" and s["mask"] == "masks/balls/img_000_0_05.png"
    F.generate_dataset(spec, tmp_path / "c", seed=6)
    assert F.tree_checksum(m1.root) != F.tree_checksum(tmp_path / "c" / "part-2c")
