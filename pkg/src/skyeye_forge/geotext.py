"""Coordinate grammar: pixel boxes -> integer 0-100 space -> text and back.

A box is serialized as ``{<x1><y1><x2><y2>}`` with decimal integers
(top-left then bottom-right corner), obtained by normalizing pixel
coordinates by the image extent, multiplying by 100, and rounding to
integers. Parsing is the lenient inverse used to evaluate generated text.
This string format is a wire contract shared with templating, the
evaluation metrics, and the review UI; change it nowhere in isolation.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .domain import PixelBox, validate_pixel_box
from .errors import BoxGrammarError

DEFAULT_BOX_DELIMITER = "<delim>"

# Braced groups are the canonical form; bare <x><y><x><y> runs are accepted
# in lenient mode only. Both alternatives are anchored by finditer's
# left-to-right, non-overlapping scan.
_BRACED_RE = re.compile(r"\{<(\d+)><(\d+)><(\d+)><(\d+)>\}")
_LENIENT_RE = re.compile(r"\{<(\d+)><(\d+)><(\d+)><(\d+)>\}|<(\d+)><(\d+)><(\d+)><(\d+)>")


@dataclass(frozen=True)
class QuantizedBox:
    """Box in the integer 0-100 normalized space; thin boxes may collapse."""

    x1: int
    y1: int
    x2: int
    y2: int

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class UnitBox:
    """Box in the continuous unit square, used for IoU computation."""

    x1: float
    y1: float
    x2: float
    y2: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class ParsedBoxes:
    boxes: tuple[QuantizedBox, ...]
    malformed: int


def _valid_quantized(x1: int, y1: int, x2: int, y2: int) -> bool:
    return 0 <= x1 <= x2 <= 100 and 0 <= y1 <= y2 <= 100


def validate_quantized_box(box: QuantizedBox) -> None:
    if not _valid_quantized(*box.as_tuple()):
        raise BoxGrammarError(f"quantized box {box.as_tuple()} outside 0..100 ordering rules")


def _quantize_coord(value: float, extent: float) -> int:
    # round half away from zero; coordinates are non-negative so this is
    # floor(v + 0.5), clamped against float spill past 100
    scaled = value / extent * 100.0
    return min(100, max(0, int(math.floor(scaled + 0.5))))


def quantize_box(box: PixelBox, width: float, height: float) -> QuantizedBox:
    """Map a pixel box into the integer 0-100 space of its image extent."""
    validate_pixel_box(box, width, height)
    return QuantizedBox(
        x1=_quantize_coord(box.x1, width),
        y1=_quantize_coord(box.y1, height),
        x2=_quantize_coord(box.x2, width),
        y2=_quantize_coord(box.y2, height),
    )


def serialize_box(box: QuantizedBox) -> str:
    validate_quantized_box(box)
    return f"{{<{box.x1}><{box.y1}><{box.x2}><{box.y2}>}}"


def serialize_box_group(boxes: list[QuantizedBox] | tuple[QuantizedBox, ...],
                        delimiter: str = DEFAULT_BOX_DELIMITER) -> str:
    """Serialize one or more boxes, input order preserved."""
    if not boxes:
        raise BoxGrammarError("cannot serialize an empty box group")
    return delimiter.join(serialize_box(b) for b in boxes)


def parse_boxes(text: str, strict: bool = False) -> ParsedBoxes:
    """Extract every box group from arbitrary text, left to right.

    Lenient (default): groups failing the 0..100 / corner-ordering rules are
    counted as malformed and dropped; bare ``<x><y><x><y>`` runs without the
    surrounding braces are accepted. Never raises on arbitrary input.

    Strict: only braced groups are recognized and any malformed group raises
    :class:`BoxGrammarError`.
    """
    pattern = _BRACED_RE if strict else _LENIENT_RE
    boxes: list[QuantizedBox] = []
    malformed = 0
    for match in pattern.finditer(text):
        groups = [g for g in match.groups() if g is not None]
        try:
            coords = [int(g) for g in groups]
        except ValueError:  # digits longer than any plausible int
            coords = [101, 101, 101, 101]
        if _valid_quantized(*coords):
            boxes.append(QuantizedBox(*coords))
        elif strict:
            raise BoxGrammarError(
                f"malformed box group {match.group(0)!r}: coordinates must satisfy "
                "0 <= x1 <= x2 <= 100 and 0 <= y1 <= y2 <= 100"
            )
        else:
            malformed += 1
    return ParsedBoxes(boxes=tuple(boxes), malformed=malformed)


def dequantize_box(box: QuantizedBox) -> UnitBox:
    """Back to the unit square; inverse of quantization up to half-bin drift."""
    validate_quantized_box(box)
    return UnitBox(box.x1 / 100.0, box.y1 / 100.0, box.x2 / 100.0, box.y2 / 100.0)


def normalize_pixel_box(box: PixelBox, width: float, height: float) -> UnitBox:
    """Normalize a ground-truth pixel box by its image extent (no rounding)."""
    validate_pixel_box(box, width, height)
    return UnitBox(box.x1 / width, box.y1 / height, box.x2 / width, box.y2 / height)
