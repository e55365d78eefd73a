"""Watermark removal attacks and the cluster-dispatch pipeline.

Implemented attacks:

* translation with selective column restoration (breaks phase-sensitive
  Fourier detectors at near-zero fidelity cost),
* a learned per-frequency spectral filter trained on paired
  message/inverse-message examples (closed-form ridge regression; the
  watermark band is attenuated or sign-flipped, clean content passes),
* regeneration: inject Gaussian noise at strength s, denoise with
  orthonormal Haar wavelet soft-thresholding, rescale; optionally for
  several rinse passes,
* test-time refinement: gradient descent pulling the attacked image back
  toward the watermarked original under an MSE + SSIM objective with a
  proximity term that prevents full watermark reintroduction,
* color/contrast transfer in CIELAB: keep the attacked lightness
  (moment-matched to the original) and take chroma verbatim from the
  original,
* the black-box pipeline: classify each image's artifact cluster and route
  it to the matching attack.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .imagecore import (
    clip01,
    index_map,
    lab_to_srgb,
    luminance,
    make_rng,
    restore_frame,
    restore_left_columns,
    srgb_to_lab,
    translate_right,
    validate_image,
)
from .metrics import ssim, ssim_grad
from .spectral import (
    CLUSTER_BOUNDARY,
    CLUSTER_FOURIER_RING,
    CLUSTER_FOURIER_SQUARE,
    CLUSTER_NO_ARTIFACT,
    DEFAULT_THRESHOLDS,
    artifact_scores,
    classify_cluster,
)
from .watermarkers import (
    BOUNDARY_FRAME_WIDTH,
    FAMILY_FOURIER_RING,
    FAMILY_SPREAD_SPECTRUM,
    WatermarkKey,
    make_paired_dataset,
    ring_embed,
)


class ContrastSkippedWarning(UserWarning):
    """Raised when the source lightness is flat and contrast matching is skipped."""


# ---------------------------------------------------------------------------
# Translation

def translation_attack(x_w, dx=7):
    """Shift right by dx and restore the leftmost dx columns from x_w."""
    return restore_left_columns(translate_right(x_w, dx), x_w, dx)


# ---------------------------------------------------------------------------
# Learned spectral filter

@dataclass(frozen=True)
class SpectralFilter:
    """Per-frequency complex gains applied to the luminance spectrum."""

    gains: np.ndarray
    ridge: float
    training_seed: int = None


def train_spectral_filter(pairs, ridge=1.0):
    """Fit per-frequency gains mapping watermarked to inverse-watermarked.

    For each frequency k the closed-form ridge solution of
    sum_pairs |H X_w - X_i|^2 + ridge |H - 1|^2 is

        H[k] = (sum conj(X_w) X_i + ridge) / (sum |X_w|^2 + ridge).

    Where watermark energy dominates the pair difference H approaches -1
    (sign flip); where the shared cover dominates H approaches +1.

    Args:
        pairs: PairedDataset or iterable of (x_w, x_i) image pairs.
        ridge: regularization toward the identity gain.

    Returns:
        SpectralFilter.
    """
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    seed = None
    if hasattr(pairs, "pairs"):
        seed = pairs.key.seed
        pairs = pairs.pairs
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot train a spectral filter on an empty dataset")
    num = None
    den = None
    for x_w, x_i in pairs:
        fw = np.fft.fft2(luminance(validate_image(x_w)))
        fi = np.fft.fft2(luminance(validate_image(x_i)))
        if num is None:
            num = np.zeros_like(fw)
            den = np.zeros(fw.shape)
        num += np.conj(fw) * fi
        den += np.abs(fw) ** 2
    gains = (num + ridge) / (den + ridge)
    return SpectralFilter(gains=gains, ridge=float(ridge), training_seed=seed)


def apply_spectral_filter(img, filt):
    """Filter the luminance spectrum; chroma offsets are untouched.

    The filtered luminance delta is added equally to all three channels,
    which leaves the per-channel color differences intact.
    """
    img = validate_image(img)
    y = luminance(img)
    if filt.gains.shape != y.shape:
        raise ValueError(f"filter shape {filt.gains.shape} does not match image {y.shape}")
    y_new = np.fft.ifft2(filt.gains * np.fft.fft2(y)).real
    return clip01(img + (y_new - y)[..., None])


# ---------------------------------------------------------------------------
# Regeneration (noise + wavelet denoise), with rinsing

@dataclass(frozen=True)
class RegenConfig:
    """Noise strength s in [0, 1], rinse pass count, soft-threshold scale."""

    strength: float = 0.16
    passes: int = 1
    threshold_scale: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.strength <= 1.0:
            raise ValueError("strength must lie in [0, 1]")
        if self.passes < 1:
            raise ValueError("passes must be >= 1")
        if self.threshold_scale <= 0:
            raise ValueError("threshold_scale must be positive")


def _haar_forward(x):
    """One orthonormal Haar level: (approx, (horizontal, vertical, diagonal))."""
    a = (x[0::2, :] + x[1::2, :]) / np.sqrt(2.0)
    d = (x[0::2, :] - x[1::2, :]) / np.sqrt(2.0)
    aa = (a[:, 0::2] + a[:, 1::2]) / np.sqrt(2.0)
    av = (a[:, 0::2] - a[:, 1::2]) / np.sqrt(2.0)
    da = (d[:, 0::2] + d[:, 1::2]) / np.sqrt(2.0)
    dd = (d[:, 0::2] - d[:, 1::2]) / np.sqrt(2.0)
    return aa, (av, da, dd)


def _haar_inverse(approx, details):
    av, da, dd = details
    a = np.empty((approx.shape[0], approx.shape[1] * 2))
    d = np.empty_like(a)
    a[:, 0::2] = (approx + av) / np.sqrt(2.0)
    a[:, 1::2] = (approx - av) / np.sqrt(2.0)
    d[:, 0::2] = (da + dd) / np.sqrt(2.0)
    d[:, 1::2] = (da - dd) / np.sqrt(2.0)
    x = np.empty((a.shape[0] * 2, a.shape[1]))
    x[0::2, :] = (a + d) / np.sqrt(2.0)
    x[1::2, :] = (a - d) / np.sqrt(2.0)
    return x


def _soft(x, tau):
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def _haar_denoise(plane, tau, levels=2):
    """Soft-threshold the detail coefficients of a 2-level Haar transform.

    Odd extents are edge-padded to even before each level and cropped after
    reconstruction, so the round trip at tau=0 is exact.
    """
    h, w = plane.shape
    ph, pw = h % 2, w % 2
    if ph or pw:
        plane = np.pad(plane, ((0, ph), (0, pw)), mode="edge")
    approx, details = _haar_forward(plane)
    if levels > 1:
        approx = _haar_denoise(approx, tau, levels - 1)
    details = tuple(_soft(d, tau) for d in details)
    out = _haar_inverse(approx, details)
    return out[:h, :w]


def regenerate(img, cfg=RegenConfig()):
    """Noise-inject and denoise, possibly repeatedly (rinsing).

    Each pass applies x <- sqrt(1-s) x + sqrt(s) eps with fresh seeded
    standard-normal noise, denoises every channel by 2-level Haar
    soft-thresholding with threshold tau = threshold_scale * sqrt(s),
    rescales by 1/sqrt(1-s), and clamps.

    Args:
        img: (H, W, 3) image.
        cfg: RegenConfig; strength 0 returns the input unchanged.

    Returns:
        Regenerated image. Deterministic given cfg.seed.
    """
    img = validate_image(img)
    s = cfg.strength
    if s == 0.0:
        return img.copy()
    x = img
    tau = cfg.threshold_scale * np.sqrt(s)
    for p in range(cfg.passes):
        rng = make_rng((cfg.seed, 0xD1FF, p))
        noisy = np.sqrt(1.0 - s) * x + np.sqrt(s) * rng.standard_normal(x.shape)
        den = np.empty_like(noisy)
        for c in range(3):
            den[..., c] = _haar_denoise(noisy[..., c], tau)
        x = clip01(den / np.sqrt(1.0 - s))
    return x


# ---------------------------------------------------------------------------
# Test-time refinement

@dataclass(frozen=True)
class RefineConfig:
    """Gradient-descent parameters for the refinement objective."""

    steps: int = 50
    step_size: float = 0.05
    ssim_weight: float = 0.5
    proximity_weight: float = 1.0

    def __post_init__(self):
        if self.steps <= 0 or self.step_size <= 0:
            raise ValueError("steps and step_size must be positive")
        if self.ssim_weight < 0 or self.proximity_weight < 0:
            raise ValueError("weights must be non-negative")


def refine_objective(x, x_att, x_w, cfg=RefineConfig()):
    """sum(x-x_w)^2 + ssim_weight (1 - SSIM(x, x_w)) + gamma sum(x-x_att)^2.

    The quadratic terms are plain sums, not means: together with the
    default step size this makes descent a contraction toward the
    weighted average of x_w and x_att, reaching it well within the step
    budget.
    """
    fid = np.sum((x - x_w) ** 2)
    prox = np.sum((x - x_att) ** 2)
    return float(fid + cfg.ssim_weight * (1.0 - ssim(x, x_w)) + cfg.proximity_weight * prox)


def _refine_gradient(x, x_att, x_w, cfg):
    grad = 2.0 * (x - x_w) + 2.0 * cfg.proximity_weight * (x - x_att)
    grad -= cfg.ssim_weight * ssim_grad(x, x_w)
    return grad


def refine(x_att, x_w, cfg=RefineConfig()):
    """Pull an attacked image back toward the watermarked original.

    Descends the objective from x_att with step halving on any increase
    (at most 5 halvings, then the loop stops). The proximity term keeps the
    iterate near the attacked image, so the watermark is only partially
    reintroduced: at the default weights the unconstrained optimum sits at
    the midpoint of x_att and x_w.

    Args:
        x_att: attacked image (starting point).
        x_w: watermarked original (fidelity target).
        cfg: RefineConfig.

    Returns:
        Refined image; the objective is non-increasing across accepted steps.
    """
    x_att = validate_image(x_att)
    x_w = validate_image(x_w)
    if x_att.shape != x_w.shape:
        raise ValueError(f"shape mismatch: {x_att.shape} vs {x_w.shape}")
    x = x_att.copy()
    current = refine_objective(x, x_att, x_w, cfg)
    for _ in range(cfg.steps):
        grad = _refine_gradient(x, x_att, x_w, cfg)
        step = cfg.step_size
        for _halving in range(6):
            candidate = clip01(x - step * grad)
            value = refine_objective(candidate, x_att, x_w, cfg)
            if value <= current:
                break
            step *= 0.5
        else:
            break
        x, current = candidate, value
    return x


# ---------------------------------------------------------------------------
# CIELAB color/contrast transfer

def match_moments(plane, target_mean, target_std, eps=1e-6):
    """Affinely map a plane to the target population mean and std.

    When the plane's own std is below eps the contrast step is skipped
    (only the mean is matched) and a ContrastSkippedWarning is emitted.
    """
    mean = plane.mean()
    std = plane.std()
    if std <= eps:
        warnings.warn(
            "flat lightness plane; contrast matching skipped", ContrastSkippedWarning
        )
        return plane - mean + target_mean
    return (target_std / std) * (plane - mean) + target_mean


def color_contrast_transfer(x_opt, x_w):
    """Recombine attacked lightness with the original's chroma and contrast.

    In CIELAB: L comes from x_opt moment-matched to x_w's L statistics;
    a and b come from x_w verbatim. The result is converted back to sRGB
    and clipped.
    """
    x_opt = validate_image(x_opt)
    x_w = validate_image(x_w)
    if x_opt.shape != x_w.shape:
        raise ValueError(f"shape mismatch: {x_opt.shape} vs {x_w.shape}")
    lab_opt = srgb_to_lab(x_opt)
    lab_w = srgb_to_lab(x_w)
    l_final = match_moments(lab_opt[..., 0], lab_w[..., 0].mean(), lab_w[..., 0].std())
    lab_out = np.stack([l_final, lab_w[..., 1], lab_w[..., 2]], axis=-1)
    return lab_to_srgb(lab_out)


# ---------------------------------------------------------------------------
# Black-box cluster dispatch

@dataclass(frozen=True)
class PipelineConfig:
    """Knobs of the black-box pipeline's internal stages."""

    thresholds: tuple = DEFAULT_THRESHOLDS
    seed: int = 0
    train_pairs: int = 64
    train_ridge: float = 1.0
    regen_full: float = 0.16
    regen_mild: float = 0.04
    translation_dx: int = 7
    # Overweighting proximity makes the refine optimum overshoot the
    # filter's sign flip slightly instead of landing on the midpoint,
    # where a sign decoder would read the half-restored watermark again.
    # 25 steps suffice here: descent contracts the gap by ~0.77 per step,
    # so the iterate is within 0.2% of the optimum at half the budget.
    refine: RefineConfig = field(
        default_factory=lambda: RefineConfig(steps=25, proximity_weight=1.3)
    )
    training_key: WatermarkKey = None


@dataclass
class PipelineRecord:
    """Per-image outcome of the black-box pipeline."""

    index: int
    label: str
    scores: dict
    route: str
    error: str = None


def train_pipeline_filter(cfg, shape):
    """Train the removal filter once per image shape, on self-generated pairs.

    The covers are dressed with ring signatures (varied seeds) before the
    pairs are embedded.  That counts the annulus bands as cover energy, so
    the learned gains pass rings through instead of flipping them; without
    this the filter strips the very artifact a ring cluster was identified
    by, and the output is scored against an original that still carries it.
    Rings are the only signature taught this way: they are narrowband, so
    the payload flip elsewhere is untouched.  A border frame would smear
    across the spectrum (a few rows of stripes window into broad ridges)
    and blunt the flip globally; frames are repaired spatially instead.
    """
    from .harness import ARTIFACT_RING_AMPLITUDE, gen_corpus

    key = cfg.training_key
    if key is None:
        key = WatermarkKey(seed=cfg.seed ^ 0xA77AC4, family=FAMILY_SPREAD_SPECTRUM)
    covers = gen_corpus(cfg.train_pairs, shape, seed=cfg.seed ^ 0xC0FFEE)
    dressed = []
    for i, cover in enumerate(covers):
        sig = WatermarkKey(
            seed=(cfg.seed ^ 0x5D2E55) + i,
            family=FAMILY_FOURIER_RING,
            amplitude=ARTIFACT_RING_AMPLITUDE,
        )
        dressed.append(ring_embed(cover, sig))
    dataset = make_paired_dataset(dressed, key)
    return train_spectral_filter(dataset, ridge=cfg.train_ridge)


def blackbox_pipeline(images, cfg=PipelineConfig(), workers=1):
    """Classify each image's artifact cluster and run the matching attack.

    Routes: NoArtifact -> regeneration at full strength; Boundary and
    FourierRing -> learned spectral filter, then refinement, then
    color/contrast transfer (Boundary additionally gets its border frame
    restored); FourierSquare -> mild regeneration followed by the
    translation attack. The filter is trained once per batch on
    self-generated pairs carrying the pipeline's own key.

    Every per-image random stream is derived from (cfg.seed, index), so
    the output is identical at any worker count.

    Args:
        images: list of (H, W, 3) images.
        cfg: PipelineConfig.
        workers: thread count for the classify and route phases.

    Returns:
        (attacked_images, records): attacked list in input order plus one
        PipelineRecord per image. Per-image failures are recorded and
        processing continues.
    """
    images = [validate_image(im) for im in images]

    def classify(idx, img):
        scores = artifact_scores(img)
        return scores, classify_cluster(scores, cfg.thresholds)

    classified = index_map(classify, images, workers)

    # Train filters up front, in index order, so routing tasks only read.
    filters = {}
    for img, (_, label) in zip(images, classified):
        shape = img.shape[:2]
        if label in (CLUSTER_BOUNDARY, CLUSTER_FOURIER_RING) and shape not in filters:
            filters[shape] = train_pipeline_filter(cfg, shape)

    def route(idx, img):
        scores, label = classified[idx]
        record = PipelineRecord(
            index=idx,
            label=label,
            scores={
                "boundary": scores.boundary,
                "ring": scores.ring,
                "square": scores.square,
            },
            route="",
        )
        try:
            if label == CLUSTER_NO_ARTIFACT:
                record.route = f"regenerate(s={cfg.regen_full})"
                out = regenerate(
                    img, RegenConfig(strength=cfg.regen_full, seed=cfg.seed ^ idx)
                )
            elif label in (CLUSTER_BOUNDARY, CLUSTER_FOURIER_RING):
                record.route = "filter+refine+colorxfer"
                out = apply_spectral_filter(img, filters[img.shape[:2]])
                out = refine(out, img, cfg.refine)
                out = color_contrast_transfer(out, img)
                if label == CLUSTER_BOUNDARY:
                    # The frame signature is spatially confined, so repair
                    # it by copying the border back; the payload bits kept
                    # alive there are outvoted block by block by the
                    # flipped interior.
                    record.route += "+frame_restore"
                    out = restore_frame(out, img, BOUNDARY_FRAME_WIDTH)
            else:  # CLUSTER_FOURIER_SQUARE
                record.route = f"regenerate(s={cfg.regen_mild})+translate({cfg.translation_dx})"
                out = regenerate(
                    img, RegenConfig(strength=cfg.regen_mild, seed=cfg.seed ^ idx)
                )
                out = translation_attack(out, cfg.translation_dx)
        except Exception as exc:  # per-image isolation
            record.error = f"{type(exc).__name__}: {exc}"
            out = img
        return out, record

    routed = index_map(route, images, workers)
    attacked = [out for out, _ in routed]
    records = [record for _, record in routed]
    return attacked, records
