"""Removal attacks: translation, learned spectral filter, regeneration,
refinement, color transfer, and the cluster-dispatch pipeline."""

import warnings

import numpy as np
import pytest

from wmlab import (
    BOUNDARY_FRAME_WIDTH,
    CLUSTER_BOUNDARY,
    CLUSTER_FOURIER_RING,
    CLUSTER_FOURIER_SQUARE,
    CLUSTER_NO_ARTIFACT,
    ContrastSkippedWarning,
    PipelineConfig,
    RefineConfig,
    RegenConfig,
    SpectralFilter,
    WatermarkKey,
    apply_spectral_filter,
    blackbox_pipeline,
    boundary_embed,
    color_contrast_transfer,
    gen_corpus,
    luminance_stats,
    make_rng,
    match_moments,
    psnr,
    refine,
    refine_objective,
    regenerate,
    ring_embed,
    square_embed,
    srgb_to_lab,
    ssim,
    train_spectral_filter,
    translate_right,
    translation_attack,
)
from wmlab import attacks as attacks_module
from wmlab.harness import ARTIFACT_BOUNDARY_AMPLITUDE, ARTIFACT_RING_AMPLITUDE
from wmlab.watermarkers import FAMILY_BOUNDARY, FAMILY_FOURIER_RING, FAMILY_SQUARE


class TestTranslationAttack:
    def test_left_columns_restored_rest_shifted(self):
        img = gen_corpus(1, 64, seed=800)[0]
        out = translation_attack(img, 7)
        shifted = translate_right(img, 7)
        assert np.array_equal(out[:, :7], img[:, :7])
        assert np.array_equal(out[:, 7:], shifted[:, 7:])

    def test_default_shift_is_seven(self):
        img = gen_corpus(1, 64, seed=801)[0]
        assert np.array_equal(translation_attack(img), translation_attack(img, 7))


def cosine_pairs(n_pairs=16, size=32, amplitude=0.02, freq=(5, 3)):
    """Covers plus the same covers carrying a single luminance cosine."""
    u0, v0 = freq
    yy, xx = np.mgrid[0:size, 0:size]
    tone = amplitude * np.cos(2 * np.pi * (u0 * yy / size + v0 * xx / size))
    pairs = []
    for i, cover in enumerate(gen_corpus(n_pairs, size, seed=810)):
        cover = 0.2 + 0.6 * cover  # headroom so the tone never clips
        pairs.append((np.clip(cover + tone[..., None], 0, 1), cover))
    return pairs


class TestTrainSpectralFilter:
    def test_single_tone_notched_others_passed(self):
        size, amp, n_pairs = 32, 0.02, 16
        pairs = cosine_pairs(n_pairs, size, amp)
        # Ridge sized to the tone's total spectral energy across the
        # dataset: strong enough to keep the notch partial (magnitude
        # comfortably below one) without touching clean bins.
        tone_energy = n_pairs * (amp * size * size / 2) ** 2
        filt = train_spectral_filter(pairs, ridge=2.0 * tone_energy)
        gains = filt.gains
        k0, k0c = (5, 3), (32 - 5, 32 - 3)
        assert abs(gains[k0]) < 0.5
        assert abs(gains[k0c]) < 0.5
        mask = np.ones(gains.shape, dtype=bool)
        mask[k0] = mask[k0c] = False
        assert np.abs(gains[mask] - 1.0).max() < 0.05

    def test_matches_per_bin_least_squares(self):
        pairs = cosine_pairs(8)
        ridge = 100.0
        filt = train_spectral_filter(pairs, ridge=ridge)
        num = np.zeros(filt.gains.shape, dtype=complex)
        den = np.zeros(filt.gains.shape)
        for marked, cover in pairs:
            xw = np.fft.fft2(marked @ np.array([0.299, 0.587, 0.114]))
            xc = np.fft.fft2(cover @ np.array([0.299, 0.587, 0.114]))
            num += np.conj(xw) * xc
            den += np.abs(xw) ** 2
        expected = (num + ridge) / (den + ridge)
        assert np.abs(filt.gains - expected).max() < 1e-10

    def test_small_ridge_flips_the_tone(self):
        # With negligible regularization the optimum overshoots straight
        # through zero: the learned gain at the tone bin inverts its sign.
        filt = train_spectral_filter(cosine_pairs(), ridge=1.0)
        assert filt.gains[5, 3].real < -0.9

    def test_identical_pairs_learn_identity(self):
        covers = gen_corpus(4, 32, seed=811)
        filt = train_spectral_filter([(c, c) for c in covers], ridge=1.0)
        assert np.abs(filt.gains - 1.0).max() < 1e-12

    def test_huge_ridge_learns_identity(self):
        filt = train_spectral_filter(cosine_pairs(4), ridge=1e12)
        assert np.abs(filt.gains - 1.0).max() < 1e-3

    def test_validation(self):
        with pytest.raises(ValueError):
            train_spectral_filter(cosine_pairs(2), ridge=-1.0)
        with pytest.raises(ValueError):
            train_spectral_filter([])

    def test_records_ridge(self):
        filt = train_spectral_filter(cosine_pairs(2), ridge=3.5)
        assert isinstance(filt, SpectralFilter)
        assert filt.ridge == 3.5


class TestApplySpectralFilter:
    def test_identity_filter_is_identity(self):
        img = gen_corpus(1, 32, seed=820)[0]
        filt = SpectralFilter(gains=np.ones((32, 32), dtype=complex), ridge=1.0)
        assert np.abs(apply_spectral_filter(img, filt) - img).max() < 1e-12

    def test_luminance_delta_equal_across_channels(self):
        img = 0.3 + 0.4 * gen_corpus(1, 32, seed=821)[0]
        gains = 1.0 + 0.1 * make_rng(822).standard_normal((32, 32))
        filt = SpectralFilter(gains=gains.astype(complex), ridge=1.0)
        out = apply_spectral_filter(img, filt)
        delta = out - img
        assert np.allclose(delta[..., 0], delta[..., 1], atol=1e-12)
        assert np.allclose(delta[..., 0], delta[..., 2], atol=1e-12)

    def test_shape_mismatch_rejected(self):
        img = gen_corpus(1, 32, seed=823)[0]
        filt = SpectralFilter(gains=np.ones((16, 16), dtype=complex), ridge=1.0)
        with pytest.raises(ValueError):
            apply_spectral_filter(img, filt)


class TestRegenerate:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            RegenConfig(strength=1.5)
        with pytest.raises(ValueError):
            RegenConfig(strength=-0.1)
        with pytest.raises(ValueError):
            RegenConfig(passes=0)
        with pytest.raises(ValueError):
            RegenConfig(threshold_scale=0.0)

    def test_zero_strength_is_a_copy(self):
        img = gen_corpus(1, 64, seed=830)[0]
        out = regenerate(img, RegenConfig(strength=0.0))
        assert np.array_equal(out, img)
        assert out is not img

    def test_deterministic_per_seed(self):
        img = gen_corpus(1, 64, seed=831)[0]
        a = regenerate(img, RegenConfig(strength=0.1, seed=4))
        b = regenerate(img, RegenConfig(strength=0.1, seed=4))
        c = regenerate(img, RegenConfig(strength=0.1, seed=5))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_stronger_noise_costs_more_fidelity(self):
        img = gen_corpus(1, 128, seed=832)[0]
        mild = regenerate(img, RegenConfig(strength=0.04, seed=0))
        harsh = regenerate(img, RegenConfig(strength=0.25, seed=0))
        assert psnr(img, mild) > psnr(img, harsh)

    def test_odd_shapes_and_extra_passes(self):
        img = make_rng(833).random((65, 67, 3))
        out = regenerate(img, RegenConfig(strength=0.1, passes=2, seed=1))
        assert out.shape == img.shape
        assert out.min() >= 0.0 and out.max() <= 1.0


def test_haar_rinse_zero_threshold_round_trip():
    for shape in [(64, 64), (65, 67), (33, 48)]:
        field = make_rng(shape).random(shape)
        out = attacks_module._haar_denoise(field, tau=0.0)
        assert np.abs(out - field).max() < 1e-12


class TestRefine:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            RefineConfig(steps=0)
        with pytest.raises(ValueError):
            RefineConfig(step_size=0.0)
        with pytest.raises(ValueError):
            RefineConfig(ssim_weight=-1.0)
        with pytest.raises(ValueError):
            RefineConfig(proximity_weight=-0.5)

    def test_objective_formula(self):
        rng = make_rng(840)
        x = 0.2 + 0.6 * rng.random((16, 16, 3))
        x_att = 0.2 + 0.6 * rng.random((16, 16, 3))
        x_w = 0.2 + 0.6 * rng.random((16, 16, 3))
        cfg = RefineConfig(ssim_weight=0.7, proximity_weight=1.3)
        expected = (
            np.sum((x - x_w) ** 2)
            + 0.7 * (1.0 - ssim(x, x_w))
            + 1.3 * np.sum((x - x_att) ** 2)
        )
        assert abs(refine_objective(x, x_att, x_w, cfg) - expected) < 1e-12

    def test_already_optimal_input_is_untouched(self):
        img = gen_corpus(1, 32, seed=841)[0]
        out = refine(img, img, RefineConfig(steps=5))
        assert np.array_equal(out, img)

    def test_never_worse_than_the_input(self):
        img = gen_corpus(1, 32, seed=842)[0]
        noisy = np.clip(img + 0.1 * make_rng(843).standard_normal(img.shape), 0, 1)
        out = refine(noisy, img, RefineConfig(steps=10))
        assert refine_objective(out, noisy, img) <= refine_objective(noisy, noisy, img)

    def test_restores_fidelity_on_noisy_inputs(self):
        improved = 0
        for i, img in enumerate(gen_corpus(20, 64, seed=844)):
            noisy = np.clip(
                img + 0.08 * make_rng((845, i)).standard_normal(img.shape), 0, 1
            )
            out = refine(noisy, img, RefineConfig(steps=15))
            if psnr(out, img) >= psnr(noisy, img):
                improved += 1
        assert improved >= 19  # at least 95 percent


class TestMatchMoments:
    def test_exact_population_moments(self):
        plane = make_rng(850).random((32, 32)) * 40 + 30
        out = match_moments(plane, 55.0, 7.0)
        assert abs(out.mean() - 55.0) < 1e-9
        assert abs(out.std() - 7.0) < 1e-9

    def test_flat_plane_matches_mean_only_with_warning(self):
        plane = np.full((16, 16), 42.0)
        with pytest.warns(ContrastSkippedWarning):
            out = match_moments(plane, 50.0, 5.0)
        assert abs(out.mean() - 50.0) < 1e-9
        assert out.std() == 0.0


class TestColorContrastTransfer:
    def test_luminance_moments_match_reference(self):
        x_opt = gen_corpus(1, 64, seed=860)[0]
        x_w = gen_corpus(1, 64, seed=861)[0]
        out = color_contrast_transfer(x_opt, x_w)
        mu_w, sd_w = luminance_stats(srgb_to_lab(x_w))
        mu_o, sd_o = luminance_stats(srgb_to_lab(out))
        # Post-conversion clipping can nudge the realized moments a touch.
        assert abs(mu_o - mu_w) < 0.5
        assert abs(sd_o - sd_w) < 0.5

    def test_chroma_comes_from_the_reference(self):
        x_w = gen_corpus(1, 64, seed=862)[0]
        x_opt = np.clip(
            x_w + 0.02 * make_rng(863).standard_normal(x_w.shape), 0, 1
        )
        out = color_contrast_transfer(x_opt, x_w)
        diff = np.abs(srgb_to_lab(out)[..., 1:] - srgb_to_lab(x_w)[..., 1:])
        assert np.quantile(diff, 0.99) <= 0.5

    def test_transfer_to_itself_is_nearly_identity(self):
        img = gen_corpus(1, 64, seed=864)[0]
        out = color_contrast_transfer(img, img)
        assert np.abs(out - img).max() <= 2.0 / 255.0

    def test_shape_mismatch_rejected(self):
        a = gen_corpus(1, 64, seed=865)[0]
        b = gen_corpus(1, 32, seed=866)[0]
        with pytest.raises(ValueError):
            color_contrast_transfer(a, b)


def dressed_quartet(size=128, seed=870):
    """One image per cluster: clean, boundary, ring, square."""
    covers = gen_corpus(4, size, seed=seed)
    boundary = boundary_embed(
        covers[1],
        WatermarkKey(
            seed=seed + 1, family=FAMILY_BOUNDARY, amplitude=ARTIFACT_BOUNDARY_AMPLITUDE
        ),
    )
    ring = ring_embed(
        covers[2],
        WatermarkKey(
            seed=seed + 2, family=FAMILY_FOURIER_RING, amplitude=ARTIFACT_RING_AMPLITUDE
        ),
    )
    square = square_embed(
        covers[3], WatermarkKey(seed=seed + 3, family=FAMILY_SQUARE)
    )
    return [covers[0], boundary, ring, square]


class TestBlackboxPipeline:
    def test_empty_input(self):
        attacked, records = blackbox_pipeline([], PipelineConfig())
        assert attacked == [] and records == []

    def test_routing_labels_and_route_strings(self):
        images = dressed_quartet()
        attacked, records = blackbox_pipeline(images, PipelineConfig(train_pairs=8))
        labels = [r.label for r in records]
        assert labels == [
            CLUSTER_NO_ARTIFACT,
            CLUSTER_BOUNDARY,
            CLUSTER_FOURIER_RING,
            CLUSTER_FOURIER_SQUARE,
        ]
        assert records[0].route == "regenerate(s=0.16)"
        assert records[1].route == "filter+refine+colorxfer+frame_restore"
        assert records[2].route == "filter+refine+colorxfer"
        assert records[3].route == "regenerate(s=0.04)+translate(7)"
        assert all(r.error is None for r in records)
        for img, out in zip(images, attacked):
            assert out.shape == img.shape
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_boundary_route_restores_the_frame(self):
        images = dressed_quartet()
        attacked, records = blackbox_pipeline(images, PipelineConfig(train_pairs=8))
        w = BOUNDARY_FRAME_WIDTH
        src, out = images[1], attacked[1]
        assert np.array_equal(out[:w], src[:w])
        assert np.array_equal(out[-w:], src[-w:])
        assert np.array_equal(out[:, :w], src[:, :w])
        assert np.array_equal(out[:, -w:], src[:, -w:])

    def test_worker_counts_agree_exactly(self):
        images = dressed_quartet(seed=871)
        cfg = PipelineConfig(train_pairs=8)
        serial, _ = blackbox_pipeline(images, cfg, workers=1)
        threaded, _ = blackbox_pipeline(images, cfg, workers=3)
        for a, b in zip(serial, threaded):
            assert np.array_equal(a, b)

    def test_per_image_failures_are_isolated(self, monkeypatch):
        images = dressed_quartet(seed=872)

        real_regenerate = attacks_module.regenerate

        def flaky(img, cfg=RegenConfig()):
            if cfg.strength == 0.16:
                raise RuntimeError("synthetic failure")
            return real_regenerate(img, cfg)

        monkeypatch.setattr(attacks_module, "regenerate", flaky)
        attacked, records = blackbox_pipeline(images, PipelineConfig(train_pairs=8))
        assert records[0].error is not None
        assert "synthetic failure" in records[0].error
        # The failed image passes through untouched; the rest still run.
        assert np.array_equal(attacked[0], images[0])
        assert all(records[i].error is None for i in range(1, 4))

    def test_records_carry_scores(self):
        images = dressed_quartet(seed=873)
        _, records = blackbox_pipeline(images, PipelineConfig(train_pairs=8))
        for r in records:
            assert set(r.scores) == {"boundary", "ring", "square"}
