"""Image validation, color conversion, geometry, and parallel-map helpers."""

import numpy as np
import pytest

from wmlab import (
    LUMA_WEIGHTS,
    clip01,
    lab_to_srgb,
    load_image,
    luminance,
    luminance_stats,
    make_rng,
    restore_frame,
    restore_left_columns,
    save_image,
    srgb_to_lab,
    translate_right,
    validate_image,
)
from wmlab.imagecore import index_map


def random_image(seed, h=32, w=32):
    return make_rng(seed).random((h, w, 3))


class TestValidateImage:
    def test_accepts_well_formed(self):
        img = random_image(0)
        out = validate_image(img)
        assert out.shape == img.shape
        assert out.dtype == np.float64

    def test_rejects_2d(self):
        with pytest.raises(ValueError):
            validate_image(np.zeros((32, 32)))

    def test_rejects_wrong_channel_count(self):
        with pytest.raises(ValueError):
            validate_image(np.zeros((32, 32, 4)))

    def test_rejects_too_small(self):
        with pytest.raises(ValueError):
            validate_image(np.zeros((8, 8, 3)))

    def test_rejects_nan(self):
        img = random_image(1)
        img[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            validate_image(img)

    def test_rejects_values_far_outside_range(self):
        img = random_image(2)
        img[0, 0, 0] = 1.5
        with pytest.raises(ValueError):
            validate_image(img)

    def test_clips_tiny_float_excursions(self):
        img = np.full((16, 16, 3), 0.5)
        img[0, 0, 0] = 1.0 + 5e-10
        img[0, 0, 1] = -5e-10
        out = validate_image(img)
        assert out[0, 0, 0] == 1.0
        assert out[0, 0, 1] == 0.0


class TestLuminance:
    def test_weights_sum_to_one(self):
        assert abs(sum(LUMA_WEIGHTS) - 1.0) < 1e-12

    def test_constant_image(self):
        img = np.full((16, 16, 3), 0.25)
        assert np.allclose(luminance(img), 0.25)

    def test_single_channel_weights(self):
        for c, w in enumerate(LUMA_WEIGHTS):
            img = np.zeros((16, 16, 3))
            img[..., c] = 1.0
            assert np.allclose(luminance(img), w)

    def test_shape(self):
        assert luminance(random_image(3, 20, 24)).shape == (20, 24)


def test_clip01():
    x = np.array([-0.5, 0.0, 0.3, 1.0, 1.7])
    assert np.array_equal(clip01(x), [0.0, 0.0, 0.3, 1.0, 1.0])


class TestRng:
    def test_same_seed_same_stream(self):
        a = make_rng(42).random(10)
        b = make_rng(42).random(10)
        assert np.array_equal(a, b)

    def test_different_seeds_differ(self):
        assert not np.array_equal(make_rng(1).random(10), make_rng(2).random(10))

    def test_tuple_seed(self):
        a = make_rng((3, 7)).random(10)
        b = make_rng((3, 8)).random(10)
        c = make_rng((3, 7)).random(10)
        assert np.array_equal(a, c)
        assert not np.array_equal(a, b)


class TestLabConversion:
    def test_known_srgb_triple(self):
        # D65 reference value for sRGB (64, 128, 192).
        img = np.full((16, 16, 3), [64 / 255, 128 / 255, 192 / 255])
        lab = srgb_to_lab(img)
        assert abs(lab[0, 0, 0] - 52.2104851) < 0.05
        assert abs(lab[0, 0, 1] - 0.09534228) < 0.05
        assert abs(lab[0, 0, 2] - (-39.48433168)) < 0.05

    def test_white_and_black(self):
        white = srgb_to_lab(np.ones((16, 16, 3)))
        assert abs(white[0, 0, 0] - 100.0) < 0.05
        assert np.all(np.abs(white[0, 0, 1:]) < 0.05)
        black = srgb_to_lab(np.zeros((16, 16, 3)))
        assert np.all(np.abs(black[0, 0]) < 0.05)

    def test_round_trip_within_one_level(self):
        for seed in range(5):
            img = random_image(seed, 24, 24)
            back = lab_to_srgb(srgb_to_lab(img))
            assert np.abs(back - img).max() <= 1.0 / 255.0


class TestLuminanceStats:
    def test_constant(self):
        mu, sd = luminance_stats(srgb_to_lab(np.full((16, 16, 3), 0.5)))
        assert sd == 0.0
        assert mu > 0.0

    def test_matches_population_moments(self):
        lab = srgb_to_lab(random_image(9, 20, 20))
        mu, sd = luminance_stats(lab)
        assert abs(mu - lab[..., 0].mean()) < 1e-12
        assert abs(sd - lab[..., 0].std()) < 1e-12


class TestTranslateRight:
    def test_piecewise_content(self):
        img = random_image(4, 16, 20)
        out = translate_right(img, 5)
        assert np.array_equal(out[:, 5:], img[:, :-5])
        # Vacated columns replicate the pre-shift leftmost column.
        for j in range(5):
            assert np.array_equal(out[:, j], img[:, 0])

    def test_zero_shift_is_identity(self):
        img = random_image(5)
        assert np.array_equal(translate_right(img, 0), img)

    def test_shift_bounds(self):
        img = random_image(6, 16, 16)
        with pytest.raises(ValueError):
            translate_right(img, 16)
        with pytest.raises(ValueError):
            translate_right(img, -1)


def test_restore_left_columns():
    original = random_image(7, 16, 20)
    shifted = translate_right(original, 4)
    out = restore_left_columns(shifted, original, 4)
    assert np.array_equal(out[:, :4], original[:, :4])
    assert np.array_equal(out[:, 4:], shifted[:, 4:])


class TestRestoreFrame:
    def test_border_from_original_interior_kept(self):
        original = random_image(8, 20, 24)
        processed = random_image(9, 20, 24)
        out = restore_frame(processed, original, 3)
        assert np.array_equal(out[:3], original[:3])
        assert np.array_equal(out[-3:], original[-3:])
        assert np.array_equal(out[:, :3], original[:, :3])
        assert np.array_equal(out[:, -3:], original[:, -3:])
        assert np.array_equal(out[3:-3, 3:-3], processed[3:-3, 3:-3])

    def test_width_validation(self):
        img = random_image(10, 16, 16)
        with pytest.raises(ValueError):
            restore_frame(img, img, 0)
        with pytest.raises(ValueError):
            restore_frame(img, img, 9)


class TestImageIO:
    def test_png_round_trip(self, tmp_path):
        img = random_image(11, 24, 24)
        path = tmp_path / "img.png"
        save_image(img, path)
        back = load_image(path)
        assert back.shape == img.shape
        # 8-bit quantization: half a level of error at most.
        assert np.abs(back - img).max() <= 0.5 / 255.0 + 1e-9

    def test_non_rgb_rejected(self, tmp_path):
        from PIL import Image

        path = tmp_path / "gray.png"
        Image.new("L", (32, 32)).save(path)
        with pytest.raises(ValueError):
            load_image(path)


class TestIndexMap:
    def test_preserves_order(self):
        items = list(range(20))
        serial = index_map(lambda i, x: (i, x * x), items, workers=1)
        parallel = index_map(lambda i, x: (i, x * x), items, workers=4)
        assert serial == parallel == [(i, i * i) for i in items]

    def test_empty(self):
        assert index_map(lambda i, x: x, [], workers=3) == []

    def test_exceptions_propagate(self):
        def boom(i, x):
            if x == 2:
                raise RuntimeError("boom")
            return x

        with pytest.raises(RuntimeError):
            index_map(boom, [1, 2, 3], workers=2)
