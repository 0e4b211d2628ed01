"""Ground-truth loading and precision/recall/F-measure scoring.

Matching is greedy one-to-one at a configurable IoU: detections are
consumed in probability order, each claiming the best unmatched truth box.
Detections whose only qualifying overlap is an ignore-marked truth box are
excluded from both the tp and fp counts, the usual ICDAR treatment of
"don't care" regions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .detection import DetBox, iou

IGNORE_MARK = "###"

# x1,y1,x2,y2,"transcription"  (transcription may contain escaped quotes)
_GT_LINE = re.compile(
    r'^\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*,\s*"(.*)"\s*$'
)


@dataclass(frozen=True)
class GroundTruthBox:
    x1: int
    y1: int
    x2: int
    y2: int
    transcription: str = ""
    ignore: bool = False

    def __post_init__(self):
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError("ground truth corners out of order")

    def as_detbox(self) -> DetBox:
        return DetBox(self.x1, self.y1, self.x2, self.y2, prob=1.0)


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        total = self.tp + self.fp
        return self.tp / total if total > 0 else 1.0

    @property
    def recall(self) -> float:
        total = self.tp + self.fn
        return self.tp / total if total > 0 else 1.0

    @property
    def f_measure(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if p + r > 0 else 0.0

    def to_record(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f_measure": self.f_measure,
        }


def load_ground_truth(path: str | Path) -> list[GroundTruthBox]:
    """Read one-box-per-line `x1,y1,x2,y2,"transcription"` ground truth.

    A transcription of ``###`` marks the box as ignored.  Blank lines are
    skipped; anything else that does not parse raises with its line number.
    """
    text = Path(path).read_text(encoding="utf-8-sig")
    boxes: list[GroundTruthBox] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        m = _GT_LINE.match(line)
        if m is None:
            raise ValueError(f"{path}: malformed ground truth at line {lineno}: {raw!r}")
        x1, y1, x2, y2 = (int(g) for g in m.groups()[:4])
        transcription = m.group(5)
        try:
            boxes.append(
                GroundTruthBox(
                    x1, y1, x2, y2,
                    transcription=transcription,
                    ignore=transcription == IGNORE_MARK,
                )
            )
        except ValueError as exc:
            raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return boxes


def match_detections(
    dets: list[DetBox],
    gts: list[GroundTruthBox],
    match_iou: float = 0.5,
) -> Metrics:
    """Score detections against truth with greedy one-to-one matching.

    Detections are visited by probability descending (ties keep input
    order); each claims the unmatched non-ignored truth box of highest
    IoU when that IoU reaches ``match_iou``.  Unclaimed detections whose
    best ignored-box overlap reaches the threshold are discarded; the rest
    are false positives.
    """
    if not 0.0 <= match_iou <= 1.0:
        raise ValueError("match_iou must lie in [0, 1]")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].prob, i))
    active = [g for g in gts if not g.ignore]
    ignored = [g for g in gts if g.ignore]
    claimed = [False] * len(active)

    tp = fp = 0
    for i in order:
        det = dets[i]
        best_j, best = -1, 0.0
        for j, gt in enumerate(active):
            if claimed[j]:
                continue
            v = iou(det, gt.as_detbox())
            if v > best:
                best_j, best = j, v
        if best_j >= 0 and best >= match_iou:
            claimed[best_j] = True
            tp += 1
            continue
        if any(iou(det, g.as_detbox()) >= match_iou for g in ignored):
            continue  # overlaps a "don't care" region only
        fp += 1

    fn = claimed.count(False)
    return Metrics(tp=tp, fp=fp, fn=fn)


def aggregate(per_image: list[Metrics], mode: str = "micro") -> Metrics | dict:
    """Combine per-image metrics.

    Micro mode sums the tp/fp/fn counts and recomputes the rates; macro
    mode averages the per-image rates and is returned as a plain record
    because the averages no longer derive from integer counts.
    """
    if not per_image:
        raise ValueError("nothing to aggregate")
    if mode == "micro":
        return Metrics(
            tp=sum(m.tp for m in per_image),
            fp=sum(m.fp for m in per_image),
            fn=sum(m.fn for m in per_image),
        )
    if mode == "macro":
        n = len(per_image)
        return {
            "tp": sum(m.tp for m in per_image),
            "fp": sum(m.fp for m in per_image),
            "fn": sum(m.fn for m in per_image),
            "precision": sum(m.precision for m in per_image) / n,
            "recall": sum(m.recall for m in per_image) / n,
            "f_measure": sum(m.f_measure for m in per_image) / n,
        }
    raise ValueError(f"unknown aggregation mode: {mode}")
