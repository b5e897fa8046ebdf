import numpy as np
import pytest

from app.augment.image import (
    FIXMATCH_STRONG,
    RESMATCH_STRONG,
    STRONG_OPS,
    AugmentationProfile,
    get_profile,
    hflip,
    mag_blend,
    strong_augment,
    weak_augment,
)
from app.core import Image, Mask
from app.errors import ConfigurationError, StructuralError
from app.seeding import rng_for


def _image(rng, h=4, w=5):
    return Image(rng.random((h, w, 3)))


def _flipping_seed(profile, image, mask=None, want=True):
    for seed in range(64):
        _, _, record = weak_augment(image, mask, profile, rng_for(seed, "t"))
        if record.horizontal_flipped == want:
            return seed
    raise AssertionError("no seed produced the requested flip outcome")


def test_flip_is_an_involution(rng):
    pixels = rng.random((3, 7, 3))
    assert np.array_equal(hflip(hflip(pixels)), pixels)


def test_weak_flip_mirrors_image_and_mask_together(rng):
    image = _image(rng, 4, 4)
    mask = Mask(np.array([[1, 0, 0, 0]] * 4))
    profile = get_profile("resmatch", image_size=4)
    seed = _flipping_seed(profile, image, mask, want=True)

    out, out_mask, record = weak_augment(image, mask, profile, rng_for(seed, "t"))
    assert record.horizontal_flipped
    assert np.array_equal(out.pixels, image.pixels[:, ::-1])
    assert np.array_equal(out_mask.values, np.array([[0, 0, 0, 1]] * 4))


def test_weak_without_flip_only_resizes(rng):
    image = _image(rng, 4, 4)
    profile = get_profile("resmatch", image_size=4)
    seed = _flipping_seed(profile, image, want=False)

    out, out_mask, record = weak_augment(image, None, profile, rng_for(seed, "t"))
    assert not record.horizontal_flipped
    assert out_mask is None
    assert np.array_equal(out.pixels, image.pixels)
    assert record.op_names == ("resize",)


def test_weak_resizes_to_profile_size(rng):
    image = _image(rng, 9, 13)
    mask = Mask(rng.integers(0, 2, (9, 13)))
    out, out_mask, _ = weak_augment(image, mask, get_profile("resmatch", image_size=6), rng_for(0, "t"))
    assert out.pixels.shape == (6, 6, 3)
    assert out_mask.values.shape == (6, 6)
    assert set(np.unique(out_mask.values)) <= {0, 1}


def test_weak_rejects_mismatched_mask(rng):
    with pytest.raises(StructuralError):
        weak_augment(_image(rng, 4, 4), Mask(np.zeros((3, 4))), get_profile("resmatch", 4), rng_for(0, "t"))


def test_fixmatch_weak_output_is_square_at_profile_size(rng):
    image = _image(rng, 10, 14)
    mask = Mask(rng.integers(0, 2, (10, 14)))
    profile = get_profile("fixmatch_baseline", image_size=8)
    for seed in range(5):
        out, out_mask, record = weak_augment(image, mask, profile, rng_for(seed, "t"))
        assert out.pixels.shape == (8, 8, 3)
        assert out_mask.values.shape == (8, 8)
        assert "random_crop" in record.op_names


def test_identity_pool_returns_the_image(rng):
    image = _image(rng)
    profile = AugmentationProfile("id", ("resize",), ("identity",), strong_ops_per_sample=3, image_size=4)
    out, record = strong_augment(image, profile, rng_for(0, "t"))
    assert np.array_equal(out.pixels, image.pixels)
    assert record.op_names == ("identity", "identity", "identity")


def test_brightness_zero_gives_black_image():
    pixels = np.array([[[0.2, 0.4, 0.6], [1.0, 0.5, 0.0]], [[0.3, 0.3, 0.3], [0.9, 0.1, 0.7]]])
    assert np.array_equal(STRONG_OPS["brightness"](pixels, 0.0), np.zeros((2, 2, 3)))


def test_posterize_four_bits_keeps_high_nibble():
    # 0.5 -> 128 (0b1000_0000) already sits on the 4-bit grid
    out = STRONG_OPS["posterize"](np.full((1, 1, 3), 0.5), 4)
    assert np.allclose(out, 128 / 255)
    out = STRONG_OPS["posterize"](np.full((1, 1, 3), 200 / 255), 4)
    assert np.allclose(out, 192 / 255)


def test_resmatch_pool_excludes_color_and_geometry_changing_ops():
    profile = get_profile("resmatch")
    assert set(profile.strong_ops) == set(RESMATCH_STRONG)
    assert not {"invert", "hue", "solarize"} & set(profile.strong_ops)
    assert {"invert", "hue", "solarize"} <= set(FIXMATCH_STRONG)
    assert profile.weak_ops == ("resize", "hflip")


def test_unknown_profile():
    with pytest.raises(ConfigurationError):
        get_profile("randaugment")


def test_strong_preserves_dimensions_and_range(rng):
    image = _image(rng, 6, 6)
    profile = get_profile("fixmatch_baseline", image_size=6, strong_ops_per_sample=2)
    for seed in range(20):
        out, record = strong_augment(image, profile, rng_for(seed, "t"))
        assert out.pixels.shape == (6, 6, 3)
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0
        assert len(record.ops) == 2


def test_augmentation_is_seed_deterministic(rng):
    image = _image(rng, 6, 6)
    profile = get_profile("resmatch", image_size=6)
    a = strong_augment(weak_augment(image, None, profile, rng_for(3, "w"))[0], profile, rng_for(3, "s"))
    b = strong_augment(weak_augment(image, None, profile, rng_for(3, "w"))[0], profile, rng_for(3, "s"))
    assert np.array_equal(a[0].pixels, b[0].pixels)
    assert a[1] == b[1]


def test_mag_blend_endpoints_and_midpoint():
    strong = Image(np.full((2, 2, 3), 0.2))
    weak = Image(np.full((2, 2, 3), 0.6))
    assert np.array_equal(mag_blend(strong, weak, 1.0).pixels, strong.pixels)
    assert np.array_equal(mag_blend(strong, weak, 0.0).pixels, weak.pixels)
    assert np.allclose(mag_blend(strong, weak, 0.5).pixels, 0.4)


def test_mag_blend_rejects_mismatch_and_bad_score():
    with pytest.raises(StructuralError):
        mag_blend(Image(np.zeros((2, 2, 3))), Image(np.zeros((2, 3, 3))), 0.5)
    with pytest.raises(StructuralError):
        mag_blend(Image(np.zeros((2, 2, 3))), Image(np.zeros((2, 2, 3))), 1.5)


def test_mag_blend_of_identical_images_is_identity(rng):
    a = _image(rng)
    for s in (0.0, 0.3, 1.0):
        assert np.allclose(mag_blend(a, a, s).pixels, a.pixels, atol=1e-12)
