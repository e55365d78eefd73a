"""Shared fixtures for the test suite."""

import time
from dataclasses import dataclass

import pytest

from wmlab import (
    DetectionThreshold,
    ExperimentConfig,
    calibrate_threshold,
    experiment_key,
    make_detector,
)

# Corpus seed bases used across the suite. gen_corpus derives each image's
# stream from seed ^ index, so two corpora share images whenever their base
# seeds XOR to less than the larger index range. Keeping every base a
# distinct multiple of 0x100000 guarantees disjoint streams for any corpus
# of up to a million images.
CAL_SEED = 0x100000
HOLDOUT_SEED = 0x200000


@dataclass
class CalibrationResult:
    detector: object
    threshold: DetectionThreshold
    elapsed: float


@pytest.fixture(scope="session")
def ss_calibration():
    """Default-experiment detector with a 10k-image calibrated threshold.

    Computed once per session; the elapsed time is recorded so the
    calibration budget can be checked together with the holdout pass.
    """
    detector = make_detector(*experiment_key(ExperimentConfig()))
    start = time.perf_counter()
    threshold = calibrate_threshold(
        detector, n=10000, fpr=0.001, size=128, seed=CAL_SEED
    )
    elapsed = time.perf_counter() - start
    return CalibrationResult(detector=detector, threshold=threshold, elapsed=elapsed)
