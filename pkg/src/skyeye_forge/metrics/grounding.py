"""Grounding evaluation: IoU, Acc@threshold, and multi-box P/R/F1."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..domain import PixelBox
from ..errors import ValidationError
from ..geotext import UnitBox, dequantize_box, normalize_pixel_box, parse_boxes

DEFAULT_IOU_THRESHOLD = 0.5

BoxLike = UnitBox | tuple[float, float, float, float]


def _as_tuple(box: BoxLike) -> tuple[float, float, float, float]:
    return box.as_tuple() if isinstance(box, UnitBox) else tuple(box)


def iou(a: BoxLike, b: BoxLike) -> float:
    """Intersection over union of two unit-square boxes; 0 when disjoint."""
    ax1, ay1, ax2, ay2 = _as_tuple(a)
    bx1, by1, bx2, by2 = _as_tuple(b)
    inter_w = min(ax2, bx2) - max(ax1, bx1)
    inter_h = min(ay2, by2) - max(ay1, by1)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0
    inter = inter_w * inter_h
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0:
        return 0.0
    return inter / union


@dataclass(frozen=True)
class GroundingItem:
    item_id: str
    prediction_text: str
    gt_box: PixelBox
    width: int
    height: int


@dataclass(frozen=True)
class GroundingReport:
    accuracy: float
    parse_failure_rate: float
    correct: int
    total: int
    malformed_groups: int


def grounding_accuracy(
    items: Sequence[GroundingItem], threshold: float = DEFAULT_IOU_THRESHOLD
) -> GroundingReport:
    """Fraction of items whose first parsed box reaches IoU >= threshold.

    Predictions with no parseable box count as failures; the report carries
    the parse-failure rate so grammar regressions are visible separately
    from localization quality.
    """
    if not items:
        raise ValidationError("grounding evaluation needs at least one item")
    correct = 0
    unparsed = 0
    malformed = 0
    for item in items:
        parsed = parse_boxes(item.prediction_text)
        malformed += parsed.malformed
        if not parsed.boxes:
            unparsed += 1
            continue
        predicted = dequantize_box(parsed.boxes[0])
        target = normalize_pixel_box(item.gt_box, item.width, item.height)
        if iou(predicted, target) >= threshold:
            correct += 1
    return GroundingReport(
        accuracy=correct / len(items),
        parse_failure_rate=unparsed / len(items),
        correct=correct,
        total=len(items),
        malformed_groups=malformed,
    )


@dataclass(frozen=True)
class PhraseGroundingItem:
    item_id: str
    prediction_text: str
    gt_boxes: tuple[PixelBox, ...]
    width: int
    height: int


@dataclass(frozen=True)
class PhraseGroundingReport:
    precision: float
    recall: float
    f1: float
    matched: int
    predicted: int
    expected: int


def phrase_grounding_scores(
    items: Sequence[PhraseGroundingItem], threshold: float = DEFAULT_IOU_THRESHOLD
) -> PhraseGroundingReport:
    """Greedy one-to-one matching of predicted vs ground-truth boxes."""
    if not items:
        raise ValidationError("phrase grounding evaluation needs at least one item")
    matched = 0
    predicted_total = 0
    expected_total = 0
    for item in items:
        predicted = [dequantize_box(b) for b in parse_boxes(item.prediction_text).boxes]
        targets = [normalize_pixel_box(b, item.width, item.height) for b in item.gt_boxes]
        predicted_total += len(predicted)
        expected_total += len(targets)
        candidates = sorted(
            (
                (iou(p, t), pi, ti)
                for pi, p in enumerate(predicted)
                for ti, t in enumerate(targets)
            ),
            key=lambda c: (-c[0], c[1], c[2]),
        )
        used_p: set[int] = set()
        used_t: set[int] = set()
        for value, pi, ti in candidates:
            if value < threshold:
                break
            if pi in used_p or ti in used_t:
                continue
            used_p.add(pi)
            used_t.add(ti)
            matched += 1
    precision = matched / predicted_total if predicted_total else 0.0
    recall = matched / expected_total if expected_total else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PhraseGroundingReport(
        precision=precision,
        recall=recall,
        f1=f1,
        matched=matched,
        predicted=predicted_total,
        expected=expected_total,
    )
