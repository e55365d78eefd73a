"""Image quality metrics and the evaluation scoring rules.

PSNR, SSIM (with the exact analytic gradient needed by the refinement
attack), normalized mutual information of intensity histograms, the
weighted quality aggregate (0 = perfect fidelity), and the total score
combining detection and quality.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .imagecore import LUMA_WEIGHTS, luminance, validate_image

PSNR_CAP = 100.0

_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_SIGMA = 1.5
_SSIM_WIN = 11


@dataclass(frozen=True)
class QualityVector:
    psnr: float
    ssim: float
    nmi: float


@dataclass(frozen=True)
class QualityConfig:
    """Weights and (best, worst) reference ranges for the quality aggregate."""

    weights: tuple = (1 / 3, 1 / 3, 1 / 3)
    psnr_range: tuple = (45.0, 15.0)
    ssim_range: tuple = (1.0, 0.5)
    nmi_range: tuple = (1.0, 0.1)

    def __post_init__(self):
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        for best, worst in (self.psnr_range, self.ssim_range, self.nmi_range):
            if best == worst:
                raise ValueError("metric range must have best != worst")


def _check_same_shape(a, b):
    a = validate_image(a)
    b = validate_image(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b):
    """Peak signal-to-noise ratio in dB on unit-interval pixels.

    MSE is taken over all pixels and channels; identical (or numerically
    indistinguishable) images are capped at 100 dB.
    """
    a, b = _check_same_shape(a, b)
    mse = np.mean((a - b) ** 2)
    if mse <= 0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(1.0 / mse)))


def _gaussian_window(size=_SSIM_WIN, sigma=_SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


_WINDOW = _gaussian_window()


def _ssim_fields(x, y):
    """Per-window SSIM ingredients on luminance planes (valid windows only)."""
    w = _WINDOW
    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2
    mx = fftconvolve(x, w, mode="valid")
    my = fftconvolve(y, w, mode="valid")
    sxx = fftconvolve(x * x, w, mode="valid") - mx * mx
    syy = fftconvolve(y * y, w, mode="valid") - my * my
    sxy = fftconvolve(x * y, w, mode="valid") - mx * my
    a1 = 2 * mx * my + c1
    a2 = 2 * sxy + c2
    b1 = mx * mx + my * my + c1
    b2 = sxx + syy + c2
    return mx, my, a1, a2, b1, b2


def ssim(a, b):
    """Mean structural similarity on luminance.

    Gaussian 11x11 window (sigma 1.5), K1=0.01, K2=0.03, dynamic range 1,
    averaged over all fully interior windows.
    """
    a, b = _check_same_shape(a, b)
    if a.shape[0] < _SSIM_WIN or a.shape[1] < _SSIM_WIN:
        raise ValueError(f"images must be at least {_SSIM_WIN}x{_SSIM_WIN} for SSIM")
    x = luminance(a)
    y = luminance(b)
    _, _, a1, a2, b1, b2 = _ssim_fields(x, y)
    return float(np.mean(a1 * a2 / (b1 * b2)))


def ssim_grad(a, b):
    """Analytic gradient of ssim(a, b) with respect to image a.

    Derivative of the window mean propagated through the local means,
    variances, and covariance, then through the luminance weights.

    Returns:
        (H, W, 3) gradient array.
    """
    a, b = _check_same_shape(a, b)
    if a.shape[0] < _SSIM_WIN or a.shape[1] < _SSIM_WIN:
        raise ValueError(f"images must be at least {_SSIM_WIN}x{_SSIM_WIN} for SSIM")
    x = luminance(a)
    y = luminance(b)
    w = _WINDOW
    mx, my, a1, a2, b1, b2 = _ssim_fields(x, y)
    n_windows = a1.size
    # Partials of the per-window score S = a1*a2/(b1*b2).
    u1 = 2.0 * (my * a2 * b1 - mx * a1 * a2) / (b1 * b1 * b2)  # dS/d mu_x
    u2 = -a1 * a2 / (b1 * b2 * b2)  # dS/d sigma_x^2
    u3 = 2.0 * a1 / (b1 * b2)  # dS/d sigma_xy
    # Adjoint of the valid-mode windowing: full-mode convolution (the
    # Gaussian window is symmetric, so convolution equals correlation).
    back = lambda f: fftconvolve(f, w, mode="full")
    grad_lum = (
        back(u1)
        + 2.0 * x * back(u2)
        - 2.0 * back(u2 * mx)
        + y * back(u3)
        - back(u3 * my)
    ) / n_windows
    return grad_lum[..., None] * LUMA_WEIGHTS


def nmi(a, b):
    """Normalized mutual information of 256-bin luminance histograms.

    NMI = 2 I(A;B) / (H(A) + H(B)); empty bins contribute zero. Returns
    1.0 for the degenerate case of two constant images (both entropies 0).
    """
    a, b = _check_same_shape(a, b)
    ya = np.clip((luminance(a) * 256).astype(np.intp), 0, 255).ravel()
    yb = np.clip((luminance(b) * 256).astype(np.intp), 0, 255).ravel()
    joint = np.zeros((256, 256))
    np.add.at(joint, (ya, yb), 1.0)
    joint /= joint.sum()
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    nz = joint > 0
    h_joint = -np.sum(joint[nz] * np.log(joint[nz]))
    h_a = -np.sum(pa[pa > 0] * np.log(pa[pa > 0]))
    h_b = -np.sum(pb[pb > 0] * np.log(pb[pb > 0]))
    if h_a + h_b <= 0:
        return 1.0
    mutual = h_a + h_b - h_joint
    return float(2.0 * mutual / (h_a + h_b))


def quality_vector(reference, candidate):
    """All three fidelity metrics of candidate against reference."""
    return QualityVector(
        psnr=psnr(reference, candidate),
        ssim=ssim(reference, candidate),
        nmi=nmi(reference, candidate),
    )


def quality_aggregate(q, cfg=QualityConfig()):
    """Weighted normalized quality degradation in [0, 1]; 0 = perfect.

    Each metric m with reference range (best, worst) contributes
    weight * clamp((best - m) / (best - worst), 0, 1).
    """
    total = 0.0
    for weight, value, (best, worst) in zip(
        cfg.weights,
        (q.psnr, q.ssim, q.nmi),
        (cfg.psnr_range, cfg.ssim_range, cfg.nmi_range),
    ):
        total += weight * float(np.clip((best - value) / (best - worst), 0.0, 1.0))
    return total


def total_score(detection, quality):
    """Combined score sqrt(detection^2 + quality^2); lower is better."""
    if detection < 0 or quality < 0:
        raise ValueError("detection and quality scores must be non-negative")
    return float(np.hypot(detection, quality))
