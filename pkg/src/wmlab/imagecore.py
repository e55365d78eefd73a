"""Core image representation: float RGB arrays, luminance, color space
conversion, PNG I/O, and deterministic random number generation.

Images are numpy arrays of shape (H, W, 3), dtype float64, values in
[0, 1]. Every public function in the package assumes this layout and
the helpers here enforce it at the boundaries.
"""

from concurrent.futures import ThreadPoolExecutor, as_completed

import numpy as np
from PIL import Image

# Rec. 601 luma weights.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

# sRGB <-> XYZ matrices (D65 white, 2 degree observer).
_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_XYZ_TO_RGB = np.array([
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
])
_WHITE = np.array([0.95047, 1.0, 1.08883])


def validate_image(x, name="image"):
    """Check that ``x`` is a float (H, W, 3) array with values in [0, 1].

    Args:
        x: candidate array.
        name: label used in error messages.

    Returns:
        The array, converted to float64 if needed.

    Raises:
        ValueError: wrong shape, non-finite entries, or out-of-range values.
    """
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[2] != 3:
        raise ValueError(f"{name}: expected shape (H, W, 3), got {x.shape}")
    if x.shape[0] < 16 or x.shape[1] < 16:
        raise ValueError(f"{name}: spatial size must be at least 16x16, got {x.shape[:2]}")
    x = x.astype(np.float64, copy=False)
    if not np.isfinite(x).all():
        raise ValueError(f"{name}: contains non-finite values")
    # Tiny excursions from float arithmetic are tolerated, real range errors are not.
    if x.min() < -1e-9 or x.max() > 1 + 1e-9:
        raise ValueError(
            f"{name}: values must lie in [0, 1], got range [{x.min():.4g}, {x.max():.4g}]"
        )
    return np.clip(x, 0.0, 1.0)


def luminance(x):
    """Rec. 601 luminance of an RGB image, shape (H, W)."""
    return x @ LUMA_WEIGHTS


def clip01(x):
    """Clamp to the valid pixel range."""
    return np.clip(x, 0.0, 1.0)


def make_rng(seed):
    """Counter-based generator so seeds give identical streams everywhere.

    Args:
        seed: int or sequence of ints keying the stream.

    Returns:
        np.random.Generator backed by Philox.
    """
    return np.random.Generator(np.random.Philox(seed))


def _srgb_linearize(c):
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _srgb_delinearize(c):
    c = np.clip(c, 0.0, None)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * c ** (1 / 2.4) - 0.055)


def srgb_to_lab(x):
    """Convert sRGB in [0, 1] to CIELAB (D65 white point).

    Args:
        x: (H, W, 3) sRGB image.

    Returns:
        (H, W, 3) array of (L, a, b); L in [0, 100].
    """
    xyz = _srgb_linearize(np.asarray(x, dtype=np.float64)) @ _RGB_TO_XYZ.T
    t = xyz / _WHITE
    eps = (6 / 29) ** 3
    f = np.where(t > eps, np.cbrt(t), t / (3 * (6 / 29) ** 2) + 4 / 29)
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    return np.stack([116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)], axis=-1)


def lab_to_srgb(lab):
    """Invert :func:`srgb_to_lab`. Output is clipped to [0, 1]."""
    lab = np.asarray(lab, dtype=np.float64)
    L, a, b = lab[..., 0], lab[..., 1], lab[..., 2]
    fy = (L + 16) / 116
    fx = fy + a / 500
    fz = fy - b / 200
    f = np.stack([fx, fy, fz], axis=-1)
    delta = 6 / 29
    t = np.where(f > delta, f ** 3, 3 * delta ** 2 * (f - 4 / 29))
    rgb = _srgb_delinearize((t * _WHITE) @ _XYZ_TO_RGB.T)
    return np.clip(rgb, 0.0, 1.0)


def luminance_stats(lab):
    """Population mean and std of the CIELAB lightness channel.

    Args:
        lab: (H, W, 3) Lab array from srgb_to_lab.

    Returns:
        (mean, std) of the L channel.
    """
    plane = np.asarray(lab, dtype=np.float64)[..., 0]
    return float(plane.mean()), float(plane.std())


def translate_right(img, dx):
    """Shift content right by dx columns.

    The vacated leftmost dx columns are filled with the pre-shift column 0
    (placeholder values; callers restore them from the original).
    """
    img = validate_image(img)
    if not 0 <= dx < img.shape[1]:
        raise ValueError(f"shift {dx} out of range for width {img.shape[1]}")
    if dx == 0:
        return img.copy()
    out = np.empty_like(img)
    out[:, dx:] = img[:, :-dx]
    out[:, :dx] = img[:, :1]
    return out


def restore_left_columns(shifted, original, dx):
    """Piecewise composition: original's columns j < dx, shifted's j >= dx."""
    shifted = validate_image(shifted)
    original = validate_image(original)
    if shifted.shape != original.shape:
        raise ValueError(f"shape mismatch: {shifted.shape} vs {original.shape}")
    if not 0 <= dx < shifted.shape[1]:
        raise ValueError(f"shift {dx} out of range for width {shifted.shape[1]}")
    out = shifted.copy()
    out[:, :dx] = original[:, :dx]
    return out


def restore_frame(processed, original, width):
    """Copy the original's outer border of the given width back in."""
    processed = validate_image(processed)
    original = validate_image(original)
    if processed.shape != original.shape:
        raise ValueError(f"shape mismatch: {processed.shape} vs {original.shape}")
    h, w = processed.shape[:2]
    if not 0 < 2 * width <= min(h, w):
        raise ValueError(f"frame width {width} out of range for {h}x{w}")
    out = original.copy()
    out[width:-width, width:-width] = processed[width:-width, width:-width]
    return out


def load_image(path):
    """Load an 8-bit RGB PNG as a float image.

    Rejects palette, grayscale, and alpha files instead of converting
    silently: the pipelines here assume true three-channel input.
    """
    with Image.open(path) as im:
        if im.mode != "RGB":
            raise ValueError(f"{path}: expected an RGB image, got mode {im.mode!r}")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return validate_image(arr, name=str(path))


def save_image(path, x):
    """Write a float image to an 8-bit RGB PNG."""
    x = validate_image(x)
    arr = np.rint(x * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def index_map(fn, items, workers=1):
    """Map fn(index, item) over items, optionally on a thread pool.

    Results come back in input order regardless of completion order, so
    any fn whose output depends only on (index, item) produces identical
    results at every worker count. Exceptions propagate.
    """
    items = list(items)
    if workers <= 1:
        return [fn(i, item) for i, item in enumerate(items)]
    out = [None] * len(items)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(fn, i, item): i for i, item in enumerate(items)}
        for fut in as_completed(futures):
            out[futures[fut]] = fut.result()
    return out
