"""End-to-end orchestration: dilation, features, mixture segmentation,
ensemble detection.

The stages are deliberately thin wrappers over the per-module APIs so the
CLI, tests, and library callers all drive the same code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .detection import (
    DetectorContract,
    DetectorDescriptor,
    EnsembleConfig,
    EnsembleResult,
    ReferenceDetector,
    run_ensemble,
)
from .filterbank import FilterBank, build_lm_filterbank, compute_response_stack
from .image import DilationKernel, RasterImage, dilate
from .segmentation import (
    LabelField,
    MixtureParams,
    em_fit,
    merge_segments,
    select_k,
    SegmentSet,
)
from .superpixel import (
    SuperPixelGrid,
    build_adjacency,
    compute_features,
    partition,
    standardize,
)

BUILTIN_ENDPOINT = "builtin"
DEFAULT_ACCURACY = 0.8


@dataclass(frozen=True)
class DetectorSpec:
    """Roster entry: where the detector lives and how much to trust it."""

    endpoint: str  # "builtin" or "tcp://host:port"
    accuracy: float = DEFAULT_ACCURACY

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")


@dataclass(frozen=True)
class PipelineConfig:
    """All knobs of the pipeline, with the documented defaults."""

    cell_size: int = 16
    dilation_sigma: float = 2.0
    dilation_radius: int = 5
    n_components: int = 4
    k_range: tuple[int, ...] | None = None  # overrides n_components when set
    beta: float = 1.0
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    entropy_threshold: float = 6.5
    padding: int = 8
    seed: int = 0
    detectors: tuple[DetectorSpec, ...] = (DetectorSpec(BUILTIN_ENDPOINT),)
    include_full_image: bool = False
    connectivity: int = 4
    max_iter: int = 100
    tol: float = 1e-6
    dilate_for_features: bool = True  # compute texture features on the dilated image

    def __post_init__(self):
        if self.cell_size < 2:
            raise ValueError("cell_size must be >= 2")
        if self.entropy_threshold < 0:
            raise ValueError("entropy_threshold must be >= 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.padding < 0:
            raise ValueError("padding must be >= 0")


@dataclass
class SegmentationOutput:
    """Everything the segmentation stage produced, for reuse downstream."""

    segments: SegmentSet
    labels: LabelField
    params: MixtureParams
    grid: SuperPixelGrid
    n_components: int
    dilated: RasterImage


def build_detectors(
    config: PipelineConfig,
) -> list[tuple[DetectorContract, DetectorDescriptor]]:
    """Instantiate the configured roster; model ids follow roster order."""
    from .external import ExternalDetector  # deferred: keeps core import light

    if not config.detectors:
        raise ValueError("detector roster is empty")
    out: list[tuple[DetectorContract, DetectorDescriptor]] = []
    for i, spec in enumerate(config.detectors):
        if spec.endpoint == BUILTIN_ENDPOINT:
            det: DetectorContract = ReferenceDetector()
            kind = "builtin"
        else:
            det = ExternalDetector(spec.endpoint)
            kind = "external"
        out.append((det, DetectorDescriptor(model_id=i, accuracy=spec.accuracy, kind=kind)))
    return out


def segment_image(
    img: RasterImage, config: PipelineConfig, bank: FilterBank | None = None
) -> SegmentationOutput:
    """Dilate, extract superpixel texture features, fit, label, merge."""
    kernel = DilationKernel(radius=config.dilation_radius, sigma=config.dilation_sigma)
    dilated = dilate(img, kernel)
    feature_img = dilated if config.dilate_for_features else img

    if bank is None:
        bank = build_lm_filterbank()
    stacks = [
        compute_response_stack(feature_img.channel(c), bank, channel_index=c)
        for c in range(feature_img.channels)
    ]
    grid = partition(img.width, img.height, config.cell_size)
    features = compute_features(feature_img, stacks, grid)
    standardized, _, _ = standardize(features)
    graph = build_adjacency(grid, standardized, connectivity=config.connectivity)

    if config.k_range:
        k = select_k(standardized, graph, config.k_range, beta=config.beta, seed=config.seed)
    else:
        k = config.n_components
    params, labels = em_fit(
        standardized,
        graph,
        k,
        beta=config.beta,
        max_iter=config.max_iter,
        tol=config.tol,
        seed=config.seed,
    )
    segments = merge_segments(labels, grid, padding=config.padding)
    return SegmentationOutput(
        segments=segments,
        labels=labels,
        params=params,
        grid=grid,
        n_components=k,
        dilated=dilated,
    )


def detect_text(
    img: RasterImage,
    config: PipelineConfig,
    detectors: list[tuple[DetectorContract, DetectorDescriptor]] | None = None,
    bank: FilterBank | None = None,
    workers: int = 1,
) -> tuple[EnsembleResult, SegmentationOutput]:
    """Full pipeline: segmentation followed by the fused ensemble."""
    if detectors is None:
        detectors = build_detectors(config)
    seg = segment_image(img, config, bank=bank)
    result = run_ensemble(
        img,
        seg.segments,
        detectors,
        config=config.ensemble,
        include_full_image=config.include_full_image,
        workers=workers,
    )
    return result, seg


def config_from_mapping(data: dict) -> PipelineConfig:
    """Build a config from a parsed mapping (the config file format)."""
    known = dict(data)
    kwargs: dict = {}
    dilation = known.pop("dilation", None)
    if dilation is not None:
        kwargs["dilation_sigma"] = float(dilation.get("sigma", 2.0))
        kwargs["dilation_radius"] = int(dilation.get("radius", 5))
    ensemble = known.pop("ensemble", None)
    if ensemble is not None:
        kwargs["ensemble"] = EnsembleConfig(
            p_th=float(ensemble.get("p_th", 0.9)),
            p_tl=float(ensemble.get("p_tl", 0.8)),
            nms_threshold=float(ensemble.get("nms_threshold", 0.95)),
        )
    dets = known.pop("detectors", None)
    if dets is not None:
        kwargs["detectors"] = tuple(
            DetectorSpec(
                endpoint=str(d["endpoint"]),
                accuracy=float(d.get("accuracy", DEFAULT_ACCURACY)),
            )
            for d in dets
        )
    if "k" in known:
        kwargs["n_components"] = int(known.pop("k"))
    if "k_range" in known:
        rng = known.pop("k_range")
        kwargs["k_range"] = tuple(int(v) for v in rng) if rng else None

    simple = {
        "cell_size": int,
        "beta": float,
        "entropy_threshold": float,
        "padding": int,
        "seed": int,
        "include_full_image": bool,
        "connectivity": int,
        "max_iter": int,
        "tol": float,
        "dilate_for_features": bool,
    }
    for key, cast in simple.items():
        if key in known:
            kwargs[key] = cast(known.pop(key))
    if known:
        raise ValueError(f"unknown config keys: {sorted(known)}")
    return PipelineConfig(**kwargs)


def apply_overrides(config: PipelineConfig, **overrides) -> PipelineConfig:
    """Return a copy with non-None overrides applied (CLI flags win)."""
    updates = {}
    ensemble_updates = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("p_th", "p_tl", "nms_threshold"):
            ensemble_updates[key] = value
        else:
            updates[key] = value
    if ensemble_updates:
        updates["ensemble"] = replace(config.ensemble, **ensemble_updates)
    return replace(config, **updates) if updates else config


def label_map_array(seg: SegmentationOutput) -> np.ndarray:
    """Pixel-resolution class labels, for rendering."""
    return seg.labels.labels[seg.grid.membership()]
