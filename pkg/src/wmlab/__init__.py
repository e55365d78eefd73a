"""wmlab: watermark embedding, removal attacks, and robustness evaluation.

A desk-scale laboratory for studying invisible image watermarks: two
message-carrying watermark families with detectors, spectral artifact
forensics, a suite of removal attacks (translation, learned spectral
filtering, regeneration, refinement, color transfer, cluster dispatch),
fidelity metrics, and a TPR-at-fixed-FPR evaluation harness.
"""

from .imagecore import (
    LUMA_WEIGHTS,
    clip01,
    index_map,
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
from .spectral import (
    CLUSTER_BOUNDARY,
    CLUSTER_FOURIER_RING,
    CLUSTER_FOURIER_SQUARE,
    CLUSTER_LABELS,
    CLUSTER_NO_ARTIFACT,
    DEFAULT_THRESHOLDS,
    ArtifactScores,
    artifact_scores,
    centered_log_magnitude,
    classify_cluster,
    fft2,
    ifft2,
    radial_profile,
)
from .watermarkers import (
    BOUNDARY_FRAME_WIDTH,
    DEFAULT_AMPLITUDES,
    DEFAULT_MESSAGE_BITS,
    FAMILIES,
    FAMILY_BOUNDARY,
    FAMILY_FOURIER_RING,
    FAMILY_SPREAD_SPECTRUM,
    FAMILY_SQUARE,
    PairedDataset,
    WatermarkKey,
    boundary_embed,
    embed,
    inverse_message,
    load_key,
    make_paired_dataset,
    message_distance,
    message_from_hex,
    message_to_hex,
    random_message,
    ring_detect,
    ring_distance,
    ring_embed,
    save_key,
    square_embed,
    ss_capacity,
    ss_decode,
    ss_embed,
)
from .metrics import (
    PSNR_CAP,
    QualityConfig,
    QualityVector,
    nmi,
    psnr,
    quality_aggregate,
    quality_vector,
    ssim,
    ssim_grad,
    total_score,
)
from .attacks import (
    ContrastSkippedWarning,
    PipelineConfig,
    PipelineRecord,
    RefineConfig,
    RegenConfig,
    SpectralFilter,
    apply_spectral_filter,
    blackbox_pipeline,
    color_contrast_transfer,
    match_moments,
    refine,
    refine_objective,
    regenerate,
    train_pipeline_filter,
    train_spectral_filter,
    translation_attack,
)
from .harness import (
    DetectionThreshold,
    EvalReport,
    ExperimentConfig,
    RingDetector,
    SpreadSpectrumDetector,
    calibrate_threshold,
    config_from_dict,
    detection_score,
    experiment_key,
    gen_corpus,
    iter_corpus,
    load_report,
    make_detector,
    report_to_dict,
    run_experiment,
    write_report,
)

__version__ = "0.1.0"
