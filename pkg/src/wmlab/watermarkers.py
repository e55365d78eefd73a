"""Watermark embedders and detectors, plus the synthetic artifact injectors
used to exercise the cluster classifier.

Two message-free artifact injectors (boundary frame, Fourier square grid)
and two message-carrying families:

* spread-spectrum: each bit of the message flips the sign of a key-derived
  +-1 pattern confined to its own 8x8 block; decoding correlates a
  high-passed residual against the same patterns.
* Fourier ring: a conjugate-symmetric random-phase pattern is added to the
  luminance spectrum on a fixed set of radii; detection is the normalized
  complex correlation against the key pattern, which makes it sensitive to
  spatial translation (the phase carries the evidence).

All pattern expansion is driven by counter-based generators, so a key is
a pure function from (seed, family, parameters) to patterns.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .imagecore import clip01, luminance, make_rng, validate_image

FAMILY_SPREAD_SPECTRUM = "SpreadSpectrum"
FAMILY_FOURIER_RING = "FourierRing"
FAMILY_BOUNDARY = "BoundaryFrame"
FAMILY_SQUARE = "FourierSquare"
FAMILIES = (
    FAMILY_SPREAD_SPECTRUM,
    FAMILY_FOURIER_RING,
    FAMILY_BOUNDARY,
    FAMILY_SQUARE,
)

DEFAULT_AMPLITUDES = {
    FAMILY_SPREAD_SPECTRUM: 0.02,
    FAMILY_FOURIER_RING: 0.015,
    FAMILY_BOUNDARY: 0.03,
    FAMILY_SQUARE: 0.012,
}
DEFAULT_RING_RADII = (8, 12, 16, 20)
# Declared spectral support of the spread-spectrum patterns, as fractions
# of the Nyquist radius. The 2x2 sign-balanced tiles concentrate energy in
# the upper band; recorded in the key for provenance and serialization.
DEFAULT_SS_BAND = (0.25, 1.0)
DEFAULT_MESSAGE_BITS = 100

# Salts separating the independent random streams derived from one seed.
_SALT_ORDER = 0x5EED0001
_SALT_TILE = 0x5EED0002
_SALT_PHASE = 0x5EED0003
_SALT_FRAME = 0x5EED0004
_SALT_COMB = 0x5EED0005
_SALT_MESSAGES = 0x5EED0006

_BLOCK = 8
# Ring pattern scale: per-bin magnitude = amplitude * H * W * k / sqrt(nbins),
# which makes the spatial perturbation std equal amplitude * k.
_RING_SCALE = 0.83
_SQUARE_FREQS = (12, 24, 36)

# Width of the noisy border frame the boundary injector writes; attack
# routes that repair the frame region need the same number.
BOUNDARY_FRAME_WIDTH = 4


@dataclass(frozen=True)
class WatermarkKey:
    """Deterministic generator of one watermark family's patterns.

    Attributes:
        seed: 64-bit integer keying every derived stream.
        family: one of FAMILIES.
        amplitude: embedding strength (family-specific default if omitted).
        band: (low, high) spectral support fractions, spread-spectrum only.
        radii: ring radii in spectrum bins, Fourier-ring only.
    """

    seed: int
    family: str
    amplitude: float = None
    band: tuple = None
    radii: tuple = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown watermark family {self.family!r}")
        if self.amplitude is None:
            object.__setattr__(self, "amplitude", DEFAULT_AMPLITUDES[self.family])
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if self.family == FAMILY_SPREAD_SPECTRUM:
            band = DEFAULT_SS_BAND if self.band is None else tuple(self.band)
            if not 0.0 <= band[0] < band[1] <= 1.0:
                raise ValueError(f"band fractions must satisfy 0 <= lo < hi <= 1, got {band}")
            object.__setattr__(self, "band", band)
        if self.family == FAMILY_FOURIER_RING:
            radii = DEFAULT_RING_RADII if self.radii is None else tuple(int(r) for r in self.radii)
            if any(r < 1 for r in radii):
                raise ValueError("ring radii must be positive")
            object.__setattr__(self, "radii", radii)


def save_key(path, key):
    """Write a key to JSON ({seed, family, amplitude, band/radii})."""
    doc = {"seed": int(key.seed), "family": key.family, "amplitude": key.amplitude}
    if key.band is not None:
        doc["band"] = list(key.band)
    if key.radii is not None:
        doc["radii"] = list(key.radii)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_key(path):
    """Read a key written by save_key."""
    with open(path) as f:
        doc = json.load(f)
    return WatermarkKey(
        seed=int(doc["seed"]),
        family=doc["family"],
        amplitude=doc.get("amplitude"),
        band=tuple(doc["band"]) if "band" in doc else None,
        radii=tuple(doc["radii"]) if "radii" in doc else None,
    )


# ---------------------------------------------------------------------------
# Bit messages

def random_message(n_bits=DEFAULT_MESSAGE_BITS, rng=None):
    """Draw a uniform random bit message as a uint8 0/1 array."""
    if rng is None:
        rng = make_rng(0)
    return rng.integers(0, 2, size=n_bits).astype(np.uint8)


def inverse_message(msg):
    """Flip every bit."""
    return (1 - np.asarray(msg, dtype=np.uint8)).astype(np.uint8)


def message_distance(a, b):
    """Fractional Hamming distance between two equal-length messages."""
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape != b.shape:
        raise ValueError(f"message length mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(a != b))


def message_to_hex(msg):
    """Hex-encode a bit message, 4 bits per character (length must divide by 4)."""
    msg = np.asarray(msg, dtype=np.uint8)
    if msg.size % 4 != 0:
        raise ValueError("message length must be a multiple of 4 for hex encoding")
    nibbles = msg.reshape(-1, 4)
    vals = nibbles @ np.array([8, 4, 2, 1], dtype=np.uint8)
    return "".join(f"{v:x}" for v in vals)


def message_from_hex(s):
    """Decode a hex string back to a bit message of length 4*len(s)."""
    s = s.strip()
    if not s:
        raise ValueError("empty message string")
    vals = [int(c, 16) for c in s]
    bits = [(v >> shift) & 1 for v in vals for shift in (3, 2, 1, 0)]
    return np.array(bits, dtype=np.uint8)


# ---------------------------------------------------------------------------
# Spread-spectrum family

def _require_family(key, family):
    if key.family != family:
        raise ValueError(f"key family {key.family!r} does not match {family!r}")


def ss_capacity(shape):
    """Number of message bits an image of this spatial shape can carry."""
    return (shape[0] // _BLOCK) * (shape[1] // _BLOCK)


def _block_order(key, n_blocks):
    return make_rng((key.seed, _SALT_ORDER)).permutation(n_blocks)


def _bit_tile(key, i):
    """The +-1 8x8 tile owned by bit i: every 2x2 quad sums to zero, so the
    tile has exact zero mean and only high-frequency energy."""
    rng = make_rng((key.seed, _SALT_TILE, i))
    quads = np.tile(np.array([1.0, 1.0, -1.0, -1.0]), (16, 1))
    quads = rng.permuted(quads, axis=1)
    return quads.reshape(4, 4, 2, 2).transpose(0, 2, 1, 3).reshape(8, 8)


def _ss_pattern_field(key, n_bits, shape, signs):
    """Sum of per-bit tiles placed in their key-shuffled blocks, scaled by signs."""
    h, w = shape
    bw = w // _BLOCK
    field_ = np.zeros((h, w))
    order = _block_order(key, ss_capacity(shape))
    for i in range(n_bits):
        b = order[i]
        r, c = (b // bw) * _BLOCK, (b % bw) * _BLOCK
        field_[r:r + _BLOCK, c:c + _BLOCK] = signs[i] * _bit_tile(key, i)
    return field_


def ss_embed(cover, key, msg):
    """Embed a bit message with the spread-spectrum family.

    The luminance perturbation is amplitude * sum_i s_i P_i with
    s_i = +1 for bit 1 and -1 for bit 0; each P_i is a +-1 zero-mean tile
    confined to its own 8x8 block, so patterns are exactly orthogonal and
    the embed/inverse-embed pair averages back to the cover in float.

    Args:
        cover: (H, W, 3) image, at least 64x64.
        key: SpreadSpectrum key.
        msg: bit array; length must not exceed ss_capacity(cover shape).

    Returns:
        Watermarked image, clamped to [0, 1].
    """
    _require_family(key, FAMILY_SPREAD_SPECTRUM)
    cover = validate_image(cover)
    if cover.shape[0] < 64 or cover.shape[1] < 64:
        raise ValueError(f"cover must be at least 64x64, got {cover.shape[:2]}")
    msg = np.asarray(msg, dtype=np.uint8)
    cap = ss_capacity(cover.shape[:2])
    if msg.size > cap:
        raise ValueError(f"message of {msg.size} bits exceeds capacity {cap}")
    signs = np.where(msg == 1, 1.0, -1.0)
    delta = key.amplitude * _ss_pattern_field(key, msg.size, cover.shape[:2], signs)
    return clip01(cover + delta[..., None])


def ss_decode(img, key, reference=None, n_bits=None):
    """Decode a spread-spectrum message by per-block correlation.

    The correlation runs against a high-passed residual (luminance minus
    a Gaussian blur) so smooth cover content does not bias the bit signs.

    Args:
        img: (H, W, 3) image.
        key: SpreadSpectrum key.
        reference: optional reference message; when given, the second
            return value is the fractional Hamming distance to it.
        n_bits: message length to decode; defaults to the reference length
            or DEFAULT_MESSAGE_BITS.

    Returns:
        (message, distance) when reference is given, else
        (message, correlations).
    """
    _require_family(key, FAMILY_SPREAD_SPECTRUM)
    img = validate_image(img)
    if n_bits is None:
        n_bits = DEFAULT_MESSAGE_BITS if reference is None else np.asarray(reference).size
    cap = ss_capacity(img.shape[:2])
    if n_bits > cap:
        raise ValueError(f"cannot decode {n_bits} bits from capacity {cap}")
    y = luminance(img)
    resid = y - gaussian_filter(y, sigma=2.0)
    bw = img.shape[1] // _BLOCK
    order = _block_order(key, cap)
    corr = np.empty(n_bits)
    for i in range(n_bits):
        b = order[i]
        r, c = (b // bw) * _BLOCK, (b % bw) * _BLOCK
        corr[i] = np.sum(resid[r:r + _BLOCK, c:c + _BLOCK] * _bit_tile(key, i))
    decoded = (corr > 0).astype(np.uint8)
    if reference is not None:
        return decoded, message_distance(decoded, reference)
    return decoded, corr


# ---------------------------------------------------------------------------
# Fourier ring family

def _ring_bins(shape, radii):
    """Boolean mask of the centered-spectrum bins on the given integer radii.

    Bins on the 3-bin DC cross are left out: image borders wrap
    discontinuously under the DFT, which dumps cover energy onto the two
    frequency axes, and keeping the pattern off them roughly halves the
    cover noise the detector integrates.
    """
    h, w = shape
    cy, cx = h // 2, w // 2
    yy, xx = np.ogrid[:h, :w]
    r = np.rint(np.hypot(yy - cy, xx - cx)).astype(np.intp)
    mask = np.zeros((h, w), dtype=bool)
    for radius in radii:
        mask |= r == radius
    mask &= (np.abs(yy - cy) > 1) & (np.abs(xx - cx) > 1)
    return mask


def _ring_pattern(key, shape):
    """Conjugate-symmetric complex pattern on the key's radii (centered layout).

    Random phases are drawn for a canonical half-plane and mirrored with
    conjugation so the spatial-domain pattern is exactly real.
    """
    h, w = shape
    if max(key.radii) >= min(h, w) / 2:
        raise ValueError(
            f"ring radius {max(key.radii)} does not fit a {h}x{w} spectrum"
        )
    mask = _ring_bins(shape, key.radii)
    nbins = int(mask.sum())
    cy, cx = h // 2, w // 2
    yy, xx = np.indices(shape)
    u, v = yy - cy, xx - cx
    upper = mask & ((u > 0) | ((u == 0) & (v > 0)))
    idx_u = np.flatnonzero(upper.ravel())
    phases = make_rng((key.seed, _SALT_PHASE)).uniform(0.0, 2 * np.pi, size=idx_u.size)
    mag = key.amplitude * h * w * _RING_SCALE / np.sqrt(nbins)
    pattern = np.zeros(shape, dtype=np.complex128)
    flat = pattern.ravel()
    flat[idx_u] = mag * np.exp(1j * phases)
    pattern = flat.reshape(shape)
    # Mirror partner of centered bin (u, v) is (-u, -v); for even sizes that
    # is index (2*cy - i) % h, (2*cx - j) % w.
    iu, ju = np.divmod(idx_u, w)
    mi = (2 * cy - iu) % h
    mj = (2 * cx - ju) % w
    pattern[mi, mj] = np.conj(pattern[iu, ju])
    return pattern, mask


def ring_embed(cover, key):
    """Add the key's Fourier-ring pattern to the luminance spectrum.

    Args:
        cover: (H, W, 3) image.
        key: FourierRing key.

    Returns:
        Watermarked image, clamped. The pre-clamp residual spectrum is
        confined exactly to the key's radii.
    """
    _require_family(key, FAMILY_FOURIER_RING)
    cover = validate_image(cover)
    pattern, _ = _ring_pattern(key, cover.shape[:2])
    delta = np.fft.ifft2(np.fft.ifftshift(pattern)).real
    return clip01(cover + delta[..., None])


def ring_detect(img, key):
    """Normalized complex correlation against the key's ring pattern.

    Args:
        img: (H, W, 3) image.
        key: FourierRing key.

    Returns:
        rho in [-1, 1]; distance for thresholding is 1 - rho.
    """
    _require_family(key, FAMILY_FOURIER_RING)
    img = validate_image(img)
    pattern, mask = _ring_pattern(key, img.shape[:2])
    spec = np.fft.fftshift(np.fft.fft2(luminance(img)))
    x = spec[mask]
    k = pattern[mask]
    denom = np.linalg.norm(x) * np.linalg.norm(k)
    if denom < 1e-12:
        return 0.0
    rho = float(np.sum(x * np.conj(k)).real / denom)
    return float(np.clip(rho, -1.0, 1.0))


def ring_distance(img, key):
    """Detection distance 1 - rho (small means watermark present)."""
    return 1.0 - ring_detect(img, key)


# ---------------------------------------------------------------------------
# Artifact injectors

def boundary_embed(cover, key):
    """Inject a noisy frame over the outer 4-pixel border (cluster signature).

    The frame is diagonal stripes of period 4 with key-random magnitudes.
    Period 4 matters: the boundary score uses central differences, which
    are blind to anything alternating every pixel.
    """
    _require_family(key, FAMILY_BOUNDARY)
    cover = validate_image(cover)
    h, w = cover.shape[:2]
    rng = make_rng((key.seed, _SALT_FRAME))
    yy, xx = np.indices((h, w))
    stripes = np.where(((yy + xx) // 2) % 2 == 0, 1.0, -1.0)
    noise = stripes * rng.uniform(0.8, 1.2, size=(h, w))
    b = BOUNDARY_FRAME_WIDTH
    frame = np.ones((h, w), dtype=bool)
    frame[b:-b, b:-b] = False
    delta = np.where(frame, key.amplitude * noise, 0.0)
    return clip01(cover + delta[..., None])


def square_embed(cover, key):
    """Inject an axis-aligned spike grid in the spectrum (cluster signature).

    The spatial pattern is a sum of separable cosine products, which puts
    four spikes at (+-f, +-f) per frequency: a square dot lattice off the
    DC cross.
    """
    _require_family(key, FAMILY_SQUARE)
    cover = validate_image(cover)
    h, w = cover.shape[:2]
    rng = make_rng((key.seed, _SALT_COMB))
    yy, xx = np.indices((h, w)).astype(np.float64)
    delta = np.zeros((h, w))
    for f in _SQUARE_FREQS:
        ph_x, ph_y = rng.uniform(0.0, 2 * np.pi, size=2)
        delta += np.cos(2 * np.pi * f * xx / w + ph_x) * np.cos(2 * np.pi * f * yy / h + ph_y)
    delta *= key.amplitude
    return clip01(cover + delta[..., None])


def embed(cover, key, msg=None):
    """Family dispatch: embed with whatever family the key declares."""
    if key.family == FAMILY_SPREAD_SPECTRUM:
        if msg is None:
            raise ValueError("spread-spectrum embedding requires a message")
        return ss_embed(cover, key, msg)
    if key.family == FAMILY_FOURIER_RING:
        return ring_embed(cover, key)
    if key.family == FAMILY_BOUNDARY:
        return boundary_embed(cover, key)
    return square_embed(cover, key)


# ---------------------------------------------------------------------------
# Paired dataset

@dataclass(frozen=True)
class PairedDataset:
    """Pairs (x_w, x_i) of one cover carrying a message and its inverse."""

    pairs: tuple
    key: WatermarkKey
    messages: tuple = field(default=())


def make_paired_dataset(covers, key, n=None, n_bits=DEFAULT_MESSAGE_BITS):
    """Embed each cover with a fresh random message and with its inverse.

    Args:
        covers: list of cover images.
        key: SpreadSpectrum key; its seed also drives the message stream.
        n: number of pairs (default: all covers). Must not exceed len(covers).
        n_bits: message length.

    Returns:
        PairedDataset of n (x_w, x_i) pairs. Deterministic given the key.
    """
    _require_family(key, FAMILY_SPREAD_SPECTRUM)
    covers = list(covers)
    if not covers:
        raise ValueError("covers list is empty")
    if n is None:
        n = len(covers)
    if n > len(covers):
        raise ValueError(f"requested {n} pairs from {len(covers)} covers")
    rng = make_rng((key.seed, _SALT_MESSAGES))
    pairs = []
    messages = []
    for i in range(n):
        msg = random_message(n_bits, rng)
        pairs.append((ss_embed(covers[i], key, msg), ss_embed(covers[i], key, inverse_message(msg))))
        messages.append(msg)
    return PairedDataset(pairs=tuple(pairs), key=key, messages=tuple(messages))
