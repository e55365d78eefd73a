"""Evaluation harness: procedural cover corpus, detector threshold
calibration at a fixed false-positive rate, detection scoring, and
end-to-end experiment orchestration with JSON/CSV reports.

The detection protocol: a detector's distance statistic is computed on a
large corpus of unwatermarked images, the threshold is the fpr-quantile of
those distances, and an image counts as flagged iff its distance falls
strictly below the threshold. The detection score of an attacked set is
the fraction still flagged.
"""

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from . import attacks
from .imagecore import index_map, make_rng
from .metrics import (
    QualityConfig,
    QualityVector,
    quality_aggregate,
    quality_vector,
    total_score,
)
from .spectral import (
    CLUSTER_BOUNDARY,
    CLUSTER_FOURIER_RING,
    CLUSTER_FOURIER_SQUARE,
    CLUSTER_NO_ARTIFACT,
    DEFAULT_THRESHOLDS,
)
from .watermarkers import (
    FAMILY_BOUNDARY,
    FAMILY_FOURIER_RING,
    FAMILY_SPREAD_SPECTRUM,
    FAMILY_SQUARE,
    WatermarkKey,
    boundary_embed,
    random_message,
    ring_distance,
    ring_embed,
    square_embed,
    ss_decode,
    ss_embed,
)

# Amplitudes used when a pattern serves as a visible cluster signature
# rather than a covert watermark.  Both sit well above the family
# defaults so the signature survives on top of a payload watermark.
ARTIFACT_RING_AMPLITUDE = 0.08
ARTIFACT_BOUNDARY_AMPLITUDE = 0.06

_SALT_MESSAGE = 0x9E5501
_SALT_KEY = 0x9E5502
_SALT_CAL = 0x9E5503
_SALT_DRESS = 0x9E5504


# ---------------------------------------------------------------------------
# Procedural corpus

def _shape_of(size):
    if np.isscalar(size):
        return int(size), int(size)
    return int(size[0]), int(size[1])


def _value_noise(rng, shape, scale):
    """Smooth tileable value noise: a coarse random grid interpolated to
    full size, with the lattice wrapping so the layer is periodic.

    Periodicity matters twice over: the layer adds no discontinuity at
    the image border (which the boundary artifact score would see), and
    frequency-domain smoothing of it is free of edge effects.
    """
    h, w = shape
    gh, gw = max(1, h // scale), max(1, w // scale)
    grid = rng.random((gh, gw))
    yy = np.linspace(0.0, gh, h, endpoint=False)
    xx = np.linspace(0.0, gw, w, endpoint=False)
    y0 = yy.astype(np.intp)
    x0 = xx.astype(np.intp)
    y1 = (y0 + 1) % gh
    x1 = (x0 + 1) % gw
    fy = (yy - y0)[:, None]
    fx = (xx - x0)[None, :]
    # smoothstep fade keeps the grid seams out of the spectrum
    fy = fy * fy * (3.0 - 2.0 * fy)
    fx = fx * fx * (3.0 - 2.0 * fx)
    g00 = grid[y0[:, None], x0[None, :]]
    g01 = grid[y0[:, None], x1[None, :]]
    g10 = grid[y1[:, None], x0[None, :]]
    g11 = grid[y1[:, None], x1[None, :]]
    top = g00 * (1 - fx) + g01 * fx
    bot = g10 * (1 - fx) + g11 * fx
    return top * (1 - fy) + bot * fy


def _gen_one(rng, shape):
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    gx = xx / max(w - 1, 1)
    gy = yy / max(h - 1, 1)

    theta = rng.uniform(0.0, 2 * np.pi)
    # a floor on the slope keeps every cover from being near-flat, which
    # would otherwise be stretched hard by the final normalization
    slope = rng.choice((-1.0, 1.0)) * rng.uniform(0.35, 0.55)
    base = rng.uniform(0.25, 0.75) + slope * (np.cos(theta) * gx + np.sin(theta) * gy)

    # Mid-frequency weights are kept small: value noise at cell sizes 16
    # and 8 lands right in the radius band the ring detector correlates
    # over, and cover energy there is detector noise.  The big octave is
    # blurred for the same reason; its interpolation sidelobes otherwise
    # leak into that band.
    octaves = ((32, 0.60), (16, 0.03), (8, 0.025), (4, 0.012))
    noise = np.zeros(shape)
    for scale, weight in octaves:
        layer = _value_noise(rng, shape, scale) - 0.5
        if scale >= 32:
            # wrap mode is circular convolution, so the attenuation is
            # exact per frequency bin; nearest-edge padding would bleed
            # border energy back into the band being suppressed
            layer = gaussian_filter(layer, 3.5, mode="wrap")
        noise += weight * layer

    for _ in range(rng.integers(2, 6)):
        cx, cy = rng.uniform(0.1, 0.9, size=2)
        sig = rng.uniform(0.07, 0.25)
        amp = rng.uniform(-0.4, 0.4)
        base += amp * np.exp(-((gx - cx) ** 2 + (gy - cy) ** 2) / (2 * sig ** 2))

    for _ in range(rng.integers(1, 4)):
        cx, cy = rng.uniform(0.15, 0.85, size=2)
        amp = rng.uniform(-0.2, 0.2)
        soft = rng.uniform(0.08, 0.14)
        if rng.random() < 0.5:
            d = np.hypot(gx - cx, gy - cy) - rng.uniform(0.08, 0.3)
        else:
            rw, rh = rng.uniform(0.08, 0.3, size=2)
            d = np.maximum(np.abs(gx - cx) - rw, np.abs(gy - cy) - rh)
        t = np.clip(0.5 - d / (2 * soft), 0.0, 1.0)
        base += amp * t * t * t * (t * (6.0 * t - 15.0) + 10.0)

    v = base + noise
    tint = rng.uniform(0.75, 1.0, size=3)
    offset = rng.uniform(-0.06, 0.06, size=3)
    img = v[..., None] * tint + offset
    lo, hi = img.min(), img.max()
    if hi - lo < 1e-9:
        hi = lo + 1.0
    # Margin keeps default-amplitude embeddings clip-free, so linear
    # identities (pair cancellation) hold exactly in float.
    return 0.03 + 0.94 * (img - lo) / (hi - lo)


def iter_corpus(n, size=128, seed=0):
    """Yield n procedural cover images one at a time (constant memory).

    The per-image generator is keyed by seed XOR index, so any image can
    be regenerated independently of batch order or partitioning.
    """
    if n < 1:
        raise ValueError("corpus size must be >= 1")
    shape = _shape_of(size)
    for i in range(n):
        yield _gen_one(make_rng(seed ^ i), shape)


def gen_corpus(n, size=128, seed=0):
    """Materialized list form of iter_corpus."""
    return list(iter_corpus(n, size, seed))


# ---------------------------------------------------------------------------
# Detectors and calibration

class SpreadSpectrumDetector:
    """Distance = fractional Hamming between the decoded and reference message."""

    def __init__(self, key, message):
        self.key = key
        self.message = np.asarray(message, dtype=np.uint8)

    def distance(self, img):
        _, dist = ss_decode(img, self.key, reference=self.message)
        return dist


class RingDetector:
    """Distance = 1 - normalized ring correlation."""

    def __init__(self, key):
        self.key = key

    def distance(self, img):
        return ring_distance(img, self.key)


def make_detector(key, message=None):
    """Build the detector matching a key's family."""
    if key.family == FAMILY_SPREAD_SPECTRUM:
        if message is None:
            raise ValueError("spread-spectrum detection requires a reference message")
        return SpreadSpectrumDetector(key, message)
    if key.family == FAMILY_FOURIER_RING:
        return RingDetector(key)
    raise ValueError(f"no detector for family {key.family!r}")


@dataclass(frozen=True)
class DetectionThreshold:
    value: float
    fpr_target: float
    calibration_n: int
    family: str

    def __post_init__(self):
        if not 0.0 < self.fpr_target < 1.0:
            raise ValueError("fpr_target must lie strictly between 0 and 1")


def calibrate_threshold(detector, n=10000, fpr=0.001, size=128, seed=0):
    """Set the detection threshold from unwatermarked-image distances.

    The threshold is the empirical fpr-quantile (inverted CDF convention)
    of the detector distance over n fresh procedural images; an image is
    flagged iff its distance is strictly below it.

    Args:
        detector: object with a distance(img) method and a key attribute.
        n: calibration corpus size (>= 100).
        fpr: target false-positive rate.
        size: image size for the calibration corpus.
        seed: corpus seed.

    Returns:
        DetectionThreshold.
    """
    if n < 100:
        raise ValueError("calibration needs at least 100 images")
    if n * fpr < 1:
        warnings.warn(
            f"n*fpr = {n * fpr:.3g} < 1: the quantile rests on the sample minimum",
            stacklevel=2,
        )
    distances = np.fromiter(
        (detector.distance(img) for img in iter_corpus(n, size, seed)),
        dtype=np.float64,
        count=n,
    )
    if fpr >= 1.0:
        value = float(distances.max())
    else:
        value = float(np.quantile(distances, fpr, method="inverted_cdf"))
    return DetectionThreshold(
        value=value,
        fpr_target=fpr,
        calibration_n=n,
        family=detector.key.family,
    )


def detection_score(images, detector, threshold):
    """Fraction of images whose distance falls below the threshold."""
    images = list(images)
    if not images:
        raise ValueError("detection_score needs a non-empty image set")
    flagged = sum(1 for img in images if detector.distance(img) < threshold.value)
    return flagged / len(images)


# ---------------------------------------------------------------------------
# Experiment orchestration

_ATTACK_CHOICES = ("none", "translate", "filter", "regen", "refine", "colorxfer", "auto")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a reproducible end-to-end run needs.

    attack selects the pipeline stage depth for the learned route
    ("filter" alone, "refine" = filter+refine, "colorxfer" = all three)
    or one of the standalone attacks; "auto" dispatches per cluster.
    artifact_mix dresses watermarked images with visible cluster
    signatures, cycling through the listed labels.
    """

    n_images: int = 200
    size: int = 128
    seed: int = 0
    family: str = FAMILY_SPREAD_SPECTRUM
    message_bits: int = 100
    amplitude: float = None
    attack: str = "auto"
    attack_params: dict = field(default_factory=dict)
    artifact_mix: tuple = (CLUSTER_BOUNDARY, CLUSTER_FOURIER_RING)
    calibration_n: int = 10000
    fpr: float = 0.001
    threshold: float = None
    cluster_thresholds: tuple = DEFAULT_THRESHOLDS
    quality: QualityConfig = field(default_factory=QualityConfig)

    def __post_init__(self):
        if self.attack not in _ATTACK_CHOICES:
            raise ValueError(f"attack must be one of {_ATTACK_CHOICES}")
        if self.family not in (FAMILY_SPREAD_SPECTRUM, FAMILY_FOURIER_RING):
            raise ValueError("experiments watermark with SpreadSpectrum or FourierRing")


@dataclass
class EvalReport:
    """Scores of one experiment run plus per-image rows."""

    detection_score: float
    quality: QualityVector
    quality_aggregate: float
    total: float
    threshold: DetectionThreshold
    per_image: list
    config: dict
    seed: int
    partial_failures: int = 0


def _dress(img, label, seed):
    if label == CLUSTER_BOUNDARY:
        return boundary_embed(
            img,
            WatermarkKey(
                seed=seed, family=FAMILY_BOUNDARY, amplitude=ARTIFACT_BOUNDARY_AMPLITUDE
            ),
        )
    if label == CLUSTER_FOURIER_RING:
        return ring_embed(
            img,
            WatermarkKey(
                seed=seed, family=FAMILY_FOURIER_RING, amplitude=ARTIFACT_RING_AMPLITUDE
            ),
        )
    if label == CLUSTER_FOURIER_SQUARE:
        return square_embed(img, WatermarkKey(seed=seed, family=FAMILY_SQUARE))
    if label == CLUSTER_NO_ARTIFACT:
        return img
    raise ValueError(f"unknown artifact label {label!r}")


def _run_attack(cfg, watermarked, workers=1):
    """Apply the configured attack; returns (attacked list, records or None)."""
    params = cfg.attack_params
    if cfg.attack == "none":
        return [img.copy() for img in watermarked], None
    if cfg.attack == "translate":
        dx = int(params.get("dx", 7))

        def shift(i, img):
            return attacks.translation_attack(img, dx)

        return index_map(shift, watermarked, workers), None
    if cfg.attack == "regen":
        strength = float(params.get("strength", 0.16))
        passes = int(params.get("passes", 1))

        def regen(i, img):
            return attacks.regenerate(
                img,
                attacks.RegenConfig(strength=strength, passes=passes, seed=cfg.seed ^ i),
            )

        return index_map(regen, watermarked, workers), None
    if cfg.attack in ("filter", "refine", "colorxfer"):
        shape = watermarked[0].shape[:2]
        pipe_cfg = attacks.PipelineConfig(
            seed=cfg.seed,
            train_pairs=int(params.get("train_pairs", 64)),
            train_ridge=float(params.get("ridge", 1.0)),
        )
        filt = attacks.train_pipeline_filter(pipe_cfg, shape)

        def staged(i, img):
            att = attacks.apply_spectral_filter(img, filt)
            if cfg.attack in ("refine", "colorxfer"):
                att = attacks.refine(att, img, pipe_cfg.refine)
            if cfg.attack == "colorxfer":
                att = attacks.color_contrast_transfer(att, img)
            return att

        return index_map(staged, watermarked, workers), None
    # auto
    pipe_cfg = attacks.PipelineConfig(
        thresholds=cfg.cluster_thresholds,
        seed=cfg.seed,
        train_pairs=int(params.get("train_pairs", 64)),
        train_ridge=float(params.get("ridge", 1.0)),
    )
    attacked, records = attacks.blackbox_pipeline(watermarked, pipe_cfg, workers=workers)
    return attacked, records


def experiment_key(cfg):
    """The (key, message) pair an experiment embeds and detects with.

    Exposed so callers can calibrate or re-detect against a config's
    detector without rerunning the experiment.
    """
    key = WatermarkKey(
        seed=cfg.seed ^ _SALT_KEY, family=cfg.family, amplitude=cfg.amplitude
    )
    message = None
    if cfg.family == FAMILY_SPREAD_SPECTRUM:
        message = random_message(cfg.message_bits, make_rng((cfg.seed, _SALT_MESSAGE)))
    return key, message


def run_experiment(cfg=ExperimentConfig(), workers=1):
    """Generate, watermark, attack, and score a corpus end to end.

    Deterministic given cfg: every random stream is derived from cfg.seed
    and processing is order-independent per image, so the report (workers
    is an execution detail, not part of the config) is identical at any
    worker count.

    Returns:
        EvalReport.
    """
    key, message = experiment_key(cfg)
    detector = make_detector(key, message)

    if cfg.threshold is not None:
        threshold = DetectionThreshold(
            value=float(cfg.threshold),
            fpr_target=cfg.fpr,
            calibration_n=0,
            family=cfg.family,
        )
    else:
        threshold = calibrate_threshold(
            detector, n=cfg.calibration_n, fpr=cfg.fpr, size=cfg.size,
            seed=cfg.seed ^ _SALT_CAL,
        )

    covers = gen_corpus(cfg.n_images, cfg.size, seed=cfg.seed)
    watermarked = []
    dressings = []
    for i, cover in enumerate(covers):
        if cfg.family == FAMILY_SPREAD_SPECTRUM:
            img = ss_embed(cover, key, message)
        else:
            img = ring_embed(cover, key)
        dressing = CLUSTER_NO_ARTIFACT
        if cfg.artifact_mix:
            dressing = cfg.artifact_mix[i % len(cfg.artifact_mix)]
            img = _dress(img, dressing, seed=(cfg.seed ^ _SALT_DRESS) + i)
        watermarked.append(img)
        dressings.append(dressing)

    attacked, records = _run_attack(cfg, watermarked, workers=workers)

    def score(i, pair):
        x_w, x_a = pair
        dist = detector.distance(x_a)
        q = quality_vector(x_w, x_a)
        row = {
            "index": i,
            "dressing": dressings[i],
            "distance": float(dist),
            "flagged": bool(dist < threshold.value),
            "psnr": q.psnr,
            "ssim": q.ssim,
            "nmi": q.nmi,
            "aggregate": quality_aggregate(q, cfg.quality),
        }
        if records is not None:
            row["cluster"] = records[i].label
            row["route"] = records[i].route
            if records[i].error:
                row["error"] = records[i].error
        return row

    rows = index_map(score, zip(watermarked, attacked), workers)
    failures = sum(1 for row in rows if "error" in row)

    det = sum(row["flagged"] for row in rows) / len(rows)
    agg_mean = float(np.mean([row["aggregate"] for row in rows]))
    report = EvalReport(
        detection_score=det,
        quality=QualityVector(
            psnr=float(np.mean([row["psnr"] for row in rows])),
            ssim=float(np.mean([row["ssim"] for row in rows])),
            nmi=float(np.mean([row["nmi"] for row in rows])),
        ),
        quality_aggregate=agg_mean,
        total=total_score(det, agg_mean),
        threshold=threshold,
        per_image=rows,
        config=_config_dict(cfg),
        seed=cfg.seed,
        partial_failures=failures,
    )
    return report


def _config_dict(cfg):
    doc = asdict(cfg)
    doc["quality"] = asdict(cfg.quality)
    return doc


def report_to_dict(report):
    """JSON-ready dictionary form of an EvalReport."""
    return {
        "detection_score": report.detection_score,
        "quality": asdict(report.quality),
        "quality_aggregate": report.quality_aggregate,
        "total": report.total,
        "threshold": asdict(report.threshold),
        "seed": report.seed,
        "partial_failures": report.partial_failures,
        "config": report.config,
        "per_image": report.per_image,
    }


def write_report(report, json_path=None, csv_path=None):
    """Write an EvalReport as JSON and/or per-image CSV."""
    if json_path is not None:
        with open(json_path, "w") as f:
            json.dump(report_to_dict(report), f, indent=2, sort_keys=True)
            f.write("\n")
    if csv_path is not None:
        fieldnames = sorted({k for row in report.per_image for k in row})
        with open(csv_path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames)
            writer.writeheader()
            for row in report.per_image:
                writer.writerow(row)


def load_report(json_path):
    """Read back a JSON report written by write_report."""
    with open(json_path) as f:
        return json.load(f)


def config_from_dict(doc, base=None):
    """Build an ExperimentConfig from a plain dict (e.g. a parsed JSON file)."""
    cfg = base if base is not None else ExperimentConfig()
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    doc = dict(doc)
    if "quality" in doc and isinstance(doc["quality"], dict):
        qdoc = doc["quality"]
        qdoc = {
            k: tuple(v) if isinstance(v, list) else v for k, v in qdoc.items()
        }
        doc["quality"] = QualityConfig(**qdoc)
    for key in ("artifact_mix", "cluster_thresholds"):
        if key in doc and isinstance(doc[key], list):
            doc[key] = tuple(doc[key])
    return replace(cfg, **doc)
