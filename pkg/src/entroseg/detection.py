"""Box fusion and the per-segment detector ensemble.

Detectors run independently on each segment crop; their boxes are mapped
back to image coordinates and fused once, globally: the most accurate
model keeps only its high-confidence boxes (boosted to probability 1 so
they win every overlap duel), the other models are thresholded lower, and
plain non-maximum suppression resolves the rest.
"""

from __future__ import annotations

import threading
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .image import RasterImage, to_grayscale
from .segmentation import SegmentSet

FRAME_IMAGE = "image"
FRAME_REGION = "region"


@dataclass(frozen=True)
class DetBox:
    """Axis-aligned detection with end-exclusive pixel bounds."""

    x1: float
    y1: float
    x2: float
    y2: float
    prob: float
    model_id: int = 0
    frame: str = FRAME_IMAGE

    def __post_init__(self):
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError("box corners out of order")
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError("prob must lie in [0, 1]")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class DetectorDescriptor:
    """Identity and trust level of one ensemble member."""

    model_id: int
    accuracy: float  # validation F-score, drives fusion priority
    kind: str = "builtin"  # builtin | external

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")
        if self.kind not in ("builtin", "external"):
            raise ValueError(f"unknown detector kind: {self.kind}")


@dataclass(frozen=True)
class EnsembleConfig:
    """Fusion thresholds; the high cut applies to the best model only."""

    p_th: float = 0.9
    p_tl: float = 0.8
    nms_threshold: float = 0.95

    def __post_init__(self):
        for name in ("p_th", "p_tl", "nms_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.p_tl > self.p_th:
            raise ValueError("p_tl must not exceed p_th")


class DetectorContract(ABC):
    """A text detector usable inside the ensemble.

    Implementations must be deterministic for identical input and must
    return boxes lying within the region extent, in region-local
    coordinates.  ``concurrent_safe`` declares whether distinct regions may
    be processed on concurrent threads; when False the orchestrator
    serializes calls.
    """

    concurrent_safe: bool = True

    @abstractmethod
    def detect(self, region: RasterImage, segment_id: str = "seg-0") -> list[DetBox]:
        """Detect text in one region crop.

        ``segment_id`` identifies the crop for detectors that care (the
        wire protocol forwards it); most implementations ignore it.
        """


def iou(a: DetBox, b: DetBox) -> float:
    """Intersection-over-union of two boxes; 0 when the union is empty."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _fusion_order(boxes: list[DetBox]) -> list[DetBox]:
    # stable: prob desc, then model_id, then input position
    return [
        boxes[i]
        for i in sorted(
            range(len(boxes)), key=lambda i: (-boxes[i].prob, boxes[i].model_id, i)
        )
    ]


def nms(boxes: list[DetBox], nms_threshold: float) -> list[DetBox]:
    """Greedy non-maximum suppression.

    Boxes are ranked by probability descending (ties by model_id, then
    input order); each survivor suppresses every later box overlapping it
    with IOU strictly above the threshold.  Survivors keep rank order.
    """
    if not 0.0 <= nms_threshold <= 1.0:
        raise ValueError("nms_threshold must lie in [0, 1]")
    ordered = _fusion_order(boxes)
    kept: list[DetBox] = []
    for cand in ordered:
        if all(iou(cand, k) <= nms_threshold for k in kept):
            kept.append(cand)
    return kept


def selective_nms(
    boxes_by_model: dict[int, list[DetBox]],
    descriptors: list[DetectorDescriptor],
    config: EnsembleConfig,
) -> list[DetBox]:
    """Accuracy-aware fusion.

    The model with the highest accuracy (ties to the smallest model_id)
    keeps only boxes with prob >= p_th and those are boosted to prob 1.0;
    every other model keeps boxes with prob >= p_tl.  The pooled survivors
    then go through plain NMS, so a confident best-model box always
    outranks overlapping rivals.
    """
    by_id = {d.model_id: d for d in descriptors}
    if len(by_id) != len(descriptors):
        raise ValueError("duplicate model_id in descriptors")
    for mid in boxes_by_model:
        if mid not in by_id:
            raise ValueError(f"boxes reference unknown model_id {mid}")
    if not by_id:
        return []

    best = min(by_id.values(), key=lambda d: (-d.accuracy, d.model_id))

    pooled: list[DetBox] = []
    for mid in sorted(boxes_by_model):
        for box in boxes_by_model[mid]:
            if box.model_id != mid:
                raise ValueError("box filed under a foreign model_id")
            if mid == best.model_id:
                if box.prob >= config.p_th:
                    pooled.append(replace(box, prob=1.0))
            elif box.prob >= config.p_tl:
                pooled.append(box)
    return nms(pooled, config.nms_threshold)


def to_image_coords(
    box: DetBox,
    segment_origin: tuple[float, float],
    image_size: tuple[int, int] | None = None,
    diagnostics: list[str] | None = None,
) -> DetBox:
    """Translate a region-local box into the image frame.

    When ``image_size`` (width, height) is given, boxes reaching past the
    image are clipped and the event is appended to ``diagnostics``.
    """
    ox, oy = segment_origin
    x1, y1, x2, y2 = box.x1 + ox, box.y1 + oy, box.x2 + ox, box.y2 + oy
    if image_size is not None:
        w, h = image_size
        cx1, cy1 = min(max(x1, 0), w), min(max(y1, 0), h)
        cx2, cy2 = min(max(x2, 0), w), min(max(y2, 0), h)
        if (cx1, cy1, cx2, cy2) != (x1, y1, x2, y2):
            if diagnostics is not None:
                diagnostics.append(
                    f"box ({x1},{y1},{x2},{y2}) exceeded image bounds; clipped"
                )
            x1, y1, x2, y2 = cx1, cy1, cx2, cy2
    return replace(box, x1=x1, y1=y1, x2=x2, y2=y2, frame=FRAME_IMAGE)


@dataclass(frozen=True)
class ReferenceDetectorParams:
    """Knobs of the built-in connected-component detector."""

    window: int = 15  # local-mean window, px
    ink_offset: float = 0.05  # darker-than-local-mean margin
    gap_factor: float = 0.8  # merge gap as a fraction of median height
    min_overlap: float = 0.5  # required vertical overlap fraction for merging
    min_aspect: float = 0.2
    max_aspect: float = 20.0
    min_height: int = 6  # px
    max_height_frac: float = 0.9  # of the region height
    edge_threshold: float = 0.1  # gradient magnitude counted as edge
    density_norm: float = 1.0  # edge pixels per ink pixel mapped to prob 1.0


_EIGHT_CONN = np.ones((3, 3), dtype=np.int8)


def reference_detector(
    region: RasterImage, params: ReferenceDetectorParams | None = None
) -> list[DetBox]:
    """Detect dark text lines by adaptive binarization and merging.

    Pixels darker than their local mean become ink; 8-connected ink
    components are merged left-to-right into lines when the horizontal gap
    is under ``gap_factor`` times the median component height and the
    vertical ranges overlap.  Lines are filtered by aspect ratio and
    height, and scored by edge density normalized per ink pixel: thin
    strokes are all edge, solid masses are mostly interior, so glyph lines
    score near 1 and blobs score low.
    """
    p = params or ReferenceDetectorParams()
    if region.width < 8 or region.height < 8:
        raise ValueError("region smaller than 8x8 px")
    gray = to_grayscale(region).data if region.channels == 3 else region.data[:, :, 0]

    local_mean = ndimage.uniform_filter(gray, size=p.window, mode="nearest")
    ink = gray < local_mean - p.ink_offset
    if not ink.any():
        return []

    comp, n_comp = ndimage.label(ink, structure=_EIGHT_CONN)
    slices = ndimage.find_objects(comp)
    parts: list[tuple[int, int, int, int]] = []
    for sl in slices:
        if sl is None:
            continue
        ys, xs = sl
        w, h = xs.stop - xs.start, ys.stop - ys.start
        if w * h < 2:  # single-pixel speck
            continue
        parts.append((xs.start, ys.start, xs.stop, ys.stop))
    if not parts:
        return []

    median_h = float(np.median([b[3] - b[1] for b in parts]))
    max_gap = p.gap_factor * median_h

    # left-to-right greedy line building
    parts.sort(key=lambda b: (b[0], b[1]))
    lines: list[list[int]] = []  # mutable [x1, y1, x2, y2]
    for bx1, by1, bx2, by2 in parts:
        best_line, best_ov = None, 0.0
        for line in lines:
            gap = bx1 - line[2]
            if gap >= max_gap:
                continue
            ov = min(by2, line[3]) - max(by1, line[1])
            need = p.min_overlap * min(by2 - by1, line[3] - line[1])
            if ov >= need and ov > best_ov:
                best_line, best_ov = line, ov
        if best_line is None:
            lines.append([bx1, by1, bx2, by2])
        else:
            best_line[0] = min(best_line[0], bx1)
            best_line[1] = min(best_line[1], by1)
            best_line[2] = max(best_line[2], bx2)
            best_line[3] = max(best_line[3], by2)

    gy, gx = np.gradient(gray)
    edges = np.hypot(gx, gy) > p.edge_threshold

    out: list[DetBox] = []
    for x1, y1, x2, y2 in lines:
        w, h = x2 - x1, y2 - y1
        if h <= 0 or w <= 0:
            continue
        aspect = w / h
        if not (p.min_aspect <= aspect <= p.max_aspect):
            continue
        if h < p.min_height or h > p.max_height_frac * region.height:
            continue
        n_edge = int(edges[y1:y2, x1:x2].sum())
        n_ink = int(ink[y1:y2, x1:x2].sum())
        density = n_edge / max(n_ink, 1)
        prob = float(np.clip(density / p.density_norm, 0.0, 1.0))
        out.append(DetBox(x1, y1, x2, y2, prob=prob, frame=FRAME_REGION))
    out.sort(key=lambda b: (b.y1, b.x1))
    return out


class ReferenceDetector(DetectorContract):
    """Built-in detector wrapping :func:`reference_detector`."""

    concurrent_safe = True

    def __init__(self, params: ReferenceDetectorParams | None = None):
        self.params = params or ReferenceDetectorParams()

    def detect(self, region: RasterImage, segment_id: str = "seg-0") -> list[DetBox]:
        return reference_detector(region, self.params)


@dataclass
class EnsembleResult:
    """Fused detections plus per-task failure notes."""

    boxes: list[DetBox]
    diagnostics: list[str] = field(default_factory=list)
    total_jobs: int = 0
    failed_jobs: int = 0

    @property
    def all_failed(self) -> bool:
        return self.total_jobs > 0 and self.failed_jobs == self.total_jobs


def _whole_image_bbox(img: RasterImage) -> tuple[int, int, int, int]:
    return (0, 0, img.width, img.height)


def run_ensemble(
    img: RasterImage,
    segments: SegmentSet | None,
    detectors: list[tuple[DetectorContract, DetectorDescriptor]],
    config: EnsembleConfig | None = None,
    include_full_image: bool = False,
    workers: int = 1,
) -> EnsembleResult:
    """Run every detector on every segment crop and fuse the results.

    A failing (detector, segment) pair contributes nothing but is recorded
    in the diagnostics; the run continues.  When the segment set is empty
    (or ``include_full_image`` is set) a whole-image region is added.
    Tasks may execute on ``workers`` threads; detectors that declare
    themselves serial are called under a per-detector lock.  Output order
    is independent of scheduling.
    """
    config = config or EnsembleConfig()
    if not detectors:
        raise ValueError("need at least one detector")
    ids = [desc.model_id for _, desc in detectors]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate model_id in detector roster")

    crops: list[tuple[str, tuple[int, int, int, int]]] = []
    if segments is not None:
        for i, seg in enumerate(segments.segments):
            crops.append((f"seg-{i}", seg.bbox))
    if include_full_image or not crops:
        crops.append(("seg-full", _whole_image_bbox(img)))

    locks: dict[int, threading.Lock] = {
        id(det): threading.Lock() for det, _ in detectors if not det.concurrent_safe
    }

    def task(seg_id: str, bbox: tuple[int, int, int, int], det, desc):
        region = img.crop(*bbox)
        lock = locks.get(id(det))
        if lock is not None:
            with lock:
                found = det.detect(region, segment_id=seg_id)
        else:
            found = det.detect(region, segment_id=seg_id)
        return [replace(b, model_id=desc.model_id) for b in found]

    jobs = [
        (seg_id, bbox, det, desc)
        for seg_id, bbox in crops
        for det, desc in detectors
    ]
    results: list[list[DetBox]] = [[] for _ in jobs]
    failures: list[str | None] = [None] * len(jobs)

    def run_job(idx: int):
        seg_id, bbox, det, desc = jobs[idx]
        try:
            results[idx] = task(seg_id, bbox, det, desc)
        except Exception as exc:  # noqa: BLE001 - contract: isolate failures
            failures[idx] = f"model {desc.model_id} failed on {seg_id}: {exc}"

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_job, range(len(jobs))))
    else:
        for idx in range(len(jobs)):
            run_job(idx)

    diagnostics = [msg for msg in failures if msg is not None]
    n_failed = len(diagnostics)
    by_model: dict[int, list[DetBox]] = {desc.model_id: [] for _, desc in detectors}
    for idx, (seg_id, bbox, det, desc) in enumerate(jobs):
        for box in results[idx]:
            mapped = to_image_coords(
                box, (bbox[0], bbox[1]), (img.width, img.height), diagnostics
            )
            by_model[desc.model_id].append(mapped)

    fused = selective_nms(by_model, [desc for _, desc in detectors], config)
    return EnsembleResult(
        boxes=_fusion_order(fused),
        diagnostics=diagnostics,
        total_jobs=len(jobs),
        failed_jobs=n_failed,
    )
