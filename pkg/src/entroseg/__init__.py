"""Text region detection in high-entropy images.

The pipeline dilates the image, summarizes texture per fixed-grid
superpixel through a bank of oriented filters, groups superpixels with a
spatially regularized Gaussian mixture, and runs an ensemble of text
detectors on every segment, fusing their boxes with accuracy-aware
non-maximum suppression.
"""

from .detection import (
    DetBox,
    DetectorContract,
    DetectorDescriptor,
    EnsembleConfig,
    EnsembleResult,
    ReferenceDetector,
    ReferenceDetectorParams,
    iou,
    nms,
    reference_detector,
    run_ensemble,
    selective_nms,
    to_image_coords,
)
from .evaluation import (
    GroundTruthBox,
    Metrics,
    aggregate,
    load_ground_truth,
    match_detections,
)
from .external import DetectorError, ExternalDetector
from .filterbank import (
    FilterBank,
    ResponseStack,
    apply_filterbank,
    build_lm_filterbank,
    compute_response_stack,
    convolve,
    max_over_orientations,
)
from .image import (
    ENTROPY_THRESHOLD_BITS,
    DilationKernel,
    EntropyClass,
    GrayImage,
    RasterImage,
    classify_entropy,
    dilate,
    dilate_gray,
    shannon_entropy,
    to_grayscale,
)
from .pipeline import (
    DetectorSpec,
    PipelineConfig,
    SegmentationOutput,
    build_detectors,
    detect_text,
    segment_image,
)
from .segmentation import (
    LabelField,
    MixtureParams,
    Segment,
    SegmentSet,
    SpatialGaussianMixture,
    em_fit,
    init_params,
    labeling_objective,
    map_labels,
    merge_segments,
    select_k,
)
from .superpixel import (
    AdjacencyGraph,
    SuperPixelFeatures,
    SuperPixelGrid,
    build_adjacency,
    compute_features,
    edge_weight,
    grid_edges,
    partition,
    standardize,
)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyGraph",
    "DetBox",
    "DetectorContract",
    "DetectorDescriptor",
    "DetectorError",
    "DetectorSpec",
    "DilationKernel",
    "ENTROPY_THRESHOLD_BITS",
    "EnsembleConfig",
    "EnsembleResult",
    "EntropyClass",
    "ExternalDetector",
    "FilterBank",
    "GrayImage",
    "GroundTruthBox",
    "LabelField",
    "Metrics",
    "MixtureParams",
    "PipelineConfig",
    "RasterImage",
    "ReferenceDetector",
    "ReferenceDetectorParams",
    "ResponseStack",
    "Segment",
    "SegmentSet",
    "SegmentationOutput",
    "SpatialGaussianMixture",
    "SuperPixelFeatures",
    "SuperPixelGrid",
    "aggregate",
    "apply_filterbank",
    "build_adjacency",
    "build_detectors",
    "build_lm_filterbank",
    "classify_entropy",
    "compute_features",
    "compute_response_stack",
    "convolve",
    "detect_text",
    "dilate",
    "dilate_gray",
    "edge_weight",
    "em_fit",
    "grid_edges",
    "init_params",
    "iou",
    "labeling_objective",
    "load_ground_truth",
    "map_labels",
    "match_detections",
    "max_over_orientations",
    "merge_segments",
    "nms",
    "partition",
    "reference_detector",
    "run_ensemble",
    "segment_image",
    "select_k",
    "selective_nms",
    "shannon_entropy",
    "standardize",
    "to_grayscale",
    "to_image_coords",
]
