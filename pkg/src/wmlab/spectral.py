"""2D Fourier analysis of images and the artifact detectors used to sort
unknown images into processing clusters.

Spectra are plain complex ndarrays in numpy FFT layout (DC at [0, 0]),
computed from the Rec. 601 luminance plane. The artifact scores quantify
three visual signatures: frame-like spatial noise at the image border,
circular ridges in the magnitude spectrum, and axis-aligned spike grids
in the magnitude spectrum.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d

from .imagecore import luminance, validate_image

CLUSTER_NO_ARTIFACT = "NoArtifact"
CLUSTER_BOUNDARY = "Boundary"
CLUSTER_FOURIER_RING = "FourierRing"
CLUSTER_FOURIER_SQUARE = "FourierSquare"
CLUSTER_LABELS = (
    CLUSTER_NO_ARTIFACT,
    CLUSTER_BOUNDARY,
    CLUSTER_FOURIER_RING,
    CLUSTER_FOURIER_SQUARE,
)

# (boundary, ring, square) score thresholds; calibrated on synthetic injections.
DEFAULT_THRESHOLDS = (0.5, 6.0, 6.0)


@dataclass(frozen=True)
class ArtifactScores:
    boundary: float
    ring: float
    square: float


def fft2(img):
    """Unnormalized forward DFT of the luminance plane.

    Args:
        img: (H, W, 3) image.

    Returns:
        (H, W) complex spectrum, DC at index (0, 0).
    """
    img = validate_image(img)
    return np.fft.fft2(luminance(img))


def ifft2(spec):
    """Inverse DFT back to a real luminance plane (imaginary part discarded)."""
    return np.fft.ifft2(spec).real


def centered_log_magnitude(spec):
    """log(1+|X|) with DC moved to the array center, for display and profiles."""
    return np.log1p(np.abs(np.fft.fftshift(spec)))


def _radius_map(shape):
    h, w = shape
    cy, cx = h // 2, w // 2
    yy, xx = np.ogrid[:h, :w]
    return np.hypot(yy - cy, xx - cx)


def radial_profile(spec):
    """Mean log-magnitude per integer radius ring, DC excluded.

    Entry r averages log(1+|X|) over all bins whose centered radius rounds
    to r. Entry 0 holds only the DC bin, which is excluded, so it is set
    to the log-magnitude floor 0.0.

    Args:
        spec: complex spectrum, DC at (0, 0).

    Returns:
        1-D float array of length max_radius + 1.
    """
    mag = centered_log_magnitude(spec)
    radii = np.rint(_radius_map(mag.shape)).astype(np.intp)
    n = radii.max() + 1
    sums = np.bincount(radii.ravel(), weights=mag.ravel(), minlength=n)
    counts = np.bincount(radii.ravel(), minlength=n)
    # Exclude DC: radius 0 has no other members.
    sums[0] = 0.0
    counts[0] = 1
    return sums / np.maximum(counts, 1)


def _detrended_prominence(values, window=5, eps=1e-9):
    """Peak prominence (max - median)/(MAD + floor) of the residual after
    subtracting a moving-average baseline.

    Detrending keeps the 1/f decay of natural spectra from registering as
    a peak; the scale floor (a hundredth of the profile's robust range)
    keeps near-linear profiles, whose residual MAD degenerates to zero,
    from producing unbounded scores.
    """
    v = np.asarray(values, dtype=np.float64)
    trim = window // 2
    if v.size < 2 * window:
        return 0.0
    baseline = uniform_filter1d(v, window, mode="nearest")
    resid = (v - baseline)[trim:-trim]
    med = np.median(resid)
    mad = np.median(np.abs(resid - med))
    # The detrended series is so smooth on natural spectra that its MAD
    # alone would score sub-log-unit wiggles as peaks; the floor ties the
    # scale to the series' overall dynamic range instead.
    spread = np.percentile(v, 95) - np.percentile(v, 5)
    scale = mad + 0.05 * max(spread, 0.0) + eps
    return float(max(0.0, (resid.max() - med) / scale))


def _cross_mask(shape, half_width=1):
    """True outside the 3-bin DC cross of a centered spectrum.

    The cross is the union of the horizontal and vertical 3-bin bands
    through DC.  Those bands also collect the energy of the image's
    wrap-around border discontinuities, so statistics over the kept bins
    are insensitive to border content.
    """
    h, w = shape
    cy, cx = h // 2, w // 2
    yy, xx = np.ogrid[:h, :w]
    return (np.abs(yy - cy) > half_width) & (np.abs(xx - cx) > half_width)


# Natural images concentrate spectral energy in a smooth peak around DC;
# profile samples this close to the center are excluded from the peak
# statistics (an extension of the DC-cross exclusion to a guard band).
_DC_GUARD = 6


def _projection_prominence(proj, center, guard=_DC_GUARD):
    """Max prominence over the two outward halves of an axis projection.

    Each half is scored separately so the excluded central region does not
    splice a false step into the series.
    """
    after = proj[center + guard + 1:]
    before = proj[:center - guard][::-1]
    return max(_detrended_prominence(after, window=9), _detrended_prominence(before, window=9))


def artifact_scores(img):
    """Score the three artifact signatures of an image.

    boundary: mean gradient magnitude over the outer 8-pixel frame divided
    by the interior mean, minus 1, floored at 0. ring: detrended peak
    prominence of the radial spectrum profile. square: detrended peak
    prominence of the row/column max-projections of the centered
    log-magnitude. The DC bin and a 3-bin DC cross are excluded from the
    spectral statistics.

    Args:
        img: (H, W, 3) image.

    Returns:
        ArtifactScores with all fields finite and >= 0.
    """
    img = validate_image(img)
    y = luminance(img)

    gy, gx = np.gradient(y)
    gm = np.hypot(gy, gx)
    frame = np.ones(y.shape, dtype=bool)
    frame[8:-8, 8:-8] = False
    interior_mean = gm[~frame].mean() if (~frame).any() else 0.0
    frame_mean = gm[frame].mean()
    boundary = max(0.0, frame_mean / (interior_mean + 1e-9) - 1.0)

    spec = np.fft.fft2(y)
    mag = centered_log_magnitude(spec)
    keep = _cross_mask(mag.shape)

    radii = np.rint(_radius_map(mag.shape)).astype(np.intp)
    n = radii.max() + 1
    sums = np.bincount(radii[keep], weights=mag[keep], minlength=n)
    counts = np.bincount(radii[keep], minlength=n)
    profile = sums / np.maximum(counts, 1)
    # Radius 1 is entirely inside the excluded cross; start at the first
    # ring with surviving members.  The detrend window drops the smallest
    # radii, which carry the steep natural roll-off around DC.
    valid = counts > 0
    ring = _detrended_prominence(profile[valid], window=9)

    masked = np.where(keep, mag, 0.0)
    cy, cx = mag.shape[0] // 2, mag.shape[1] // 2
    square = max(
        _projection_prominence(masked.max(axis=1), cy),
        _projection_prominence(masked.max(axis=0), cx),
    )

    return ArtifactScores(boundary=float(boundary), ring=float(ring), square=float(square))


def classify_cluster(scores, thresholds=DEFAULT_THRESHOLDS):
    """Map artifact scores to a cluster label.

    Priority when several thresholds are exceeded:
    Boundary > FourierRing > FourierSquare > NoArtifact.

    Args:
        scores: ArtifactScores.
        thresholds: (boundary, ring, square) cutoffs.

    Returns:
        One of CLUSTER_LABELS.
    """
    tb, tr, ts = thresholds
    if scores.boundary > tb:
        return CLUSTER_BOUNDARY
    if scores.ring > tr:
        return CLUSTER_FOURIER_RING
    if scores.square > ts:
        return CLUSTER_FOURIER_SQUARE
    return CLUSTER_NO_ARTIFACT
