"""Irredundant interest point detection.

Detect keypoints, describe them, measure their re-detection error under
known transforms, drop the points no descriptor match can use, and account
for the matching work that saves.
"""

from .calibrate import (
    CalibrationResult,
    ErrorEstimate,
    TransformSampler,
    estimate_delta_D,
    estimate_epsilon_D,
    laplacian_estimator,
    predict_learned,
    sampling_estimator,
    train_learned_estimator,
)
from .correspond import (
    CorrespondenceSet,
    DetectionErrorMap,
    detection_error,
    ground_truth_correspondences,
    match_by_descriptor,
    measure_correctness,
)
from .cost import CostReport, cost_report
from .describe import DescriptorParams, DescriptorVector, continuity_modulus, describe, distance
from .detect import DetectorParams, DetectorSpec, InterestPoint, InterestPointSet, detect_harris, detect_log_extrema
from .evaluate import RegistrationReport, approximation_error, estimate_transform, repeatability
from .image import (
    Image,
    Point,
    Transform,
    apply_transform,
    gaussian_smooth,
    gradient,
    invert,
    laplacian,
    load_image,
    save_pgm,
    warp,
)
from .irredundant import (
    PairedDetection,
    PruneResult,
    check_relation_laws,
    prune,
    verify_embedding,
    verify_equivalence,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationResult",
    "CorrespondenceSet",
    "CostReport",
    "DescriptorParams",
    "DescriptorVector",
    "DetectionErrorMap",
    "DetectorParams",
    "DetectorSpec",
    "ErrorEstimate",
    "Image",
    "InterestPoint",
    "InterestPointSet",
    "PairedDetection",
    "Point",
    "PruneResult",
    "RegistrationReport",
    "Transform",
    "TransformSampler",
    "apply_transform",
    "approximation_error",
    "check_relation_laws",
    "continuity_modulus",
    "cost_report",
    "describe",
    "detect_harris",
    "detect_log_extrema",
    "detection_error",
    "distance",
    "estimate_delta_D",
    "estimate_epsilon_D",
    "estimate_transform",
    "gaussian_smooth",
    "gradient",
    "ground_truth_correspondences",
    "invert",
    "laplacian",
    "laplacian_estimator",
    "load_image",
    "match_by_descriptor",
    "measure_correctness",
    "predict_learned",
    "prune",
    "repeatability",
    "sampling_estimator",
    "save_pgm",
    "train_learned_estimator",
    "verify_embedding",
    "verify_equivalence",
    "warp",
]
