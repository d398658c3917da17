"""Adapters that parse user-supplied annotation files into SourceRecords.

Five input formats are supported: ``caption-json``, ``vqa-json``,
``grounding-json``, ``detection-json`` (each a JSON array or JSONL) and
``csv-table``. A :class:`IngestAdapterConfig` names the dataset, the task
kind, and a ``field_map`` from canonical field names to the source file's
keys or CSV columns, so no source format needs to match ours exactly.

Ingestion is a pure function of (config, file bytes): records come out in
input order, dimension lookups go through an optional sidecar index, and
media pixels are never read. Strict mode (default) fails the whole file on
the first bad unit; lenient mode skips bad units and reports each one.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO, Iterable, Mapping

from .domain import (
    CAPTION_KINDS,
    CaptionPayload,
    ClassPayload,
    GroundingPayload,
    MediaRef,
    PhrasePayload,
    PixelBox,
    SourceRecord,
    TaskKind,
    VqaPayload,
    validate_record,
)
from .errors import IngestError, ValidationError

INPUT_FORMATS = ("caption-json", "vqa-json", "grounding-json", "detection-json", "csv-table")

#: canonical field names adapters may look up through field_map
CANONICAL_FIELDS = (
    "path", "caption", "captions", "frame_paths", "width", "height", "split",
    "question", "answer", "category", "expression", "box", "phrase",
    "objects", "label", "class_label",
)

DEFAULT_SPLIT_KEY = "*"


@dataclass(frozen=True)
class IngestAdapterConfig:
    dataset_id: str
    kind: TaskKind
    input_format: str
    #: source split label -> train|val|test; "*" catches everything else
    split_map: Mapping[str, str] = field(default_factory=lambda: {DEFAULT_SPLIT_KEY: "train"})
    #: canonical name -> source key (or CSV column name)
    field_map: Mapping[str, str] = field(default_factory=dict)
    media_kind: str = "image"

    def source_key(self, canonical: str) -> str:
        return self.field_map.get(canonical, canonical)


@dataclass(frozen=True)
class IngestIssue:
    dataset_id: str
    line: int
    error: str

    def to_dict(self) -> dict:
        return {"dataset_id": self.dataset_id, "line": self.line, "error": self.error}


@dataclass(frozen=True)
class IngestResult:
    records: tuple[SourceRecord, ...]
    issues: tuple[IngestIssue, ...]


class _Unit:
    """One raw input unit: a JSON object or CSV row plus its line number."""

    __slots__ = ("data", "line")

    def __init__(self, data: Mapping[str, Any], line: int):
        self.data = data
        self.line = line


def _decode_units(config: IngestAdapterConfig, raw: bytes) -> list[_Unit]:
    text = raw.decode("utf-8")
    if config.input_format == "csv-table":
        reader = csv.DictReader(io.StringIO(text))
        return [_Unit(row, line) for line, row in enumerate(reader, start=2)]
    stripped = text.lstrip()
    if stripped.startswith("["):
        try:
            items = json.loads(text)
        except json.JSONDecodeError as exc:
            raise IngestError(f"invalid JSON array: {exc}", source=config.dataset_id) from exc
        if not isinstance(items, list):
            raise IngestError("top-level JSON value is not an array", source=config.dataset_id)
        units = []
        for index, item in enumerate(items, start=1):
            if not isinstance(item, dict):
                raise IngestError(
                    f"array item {index} is not an object", source=config.dataset_id, line=index
                )
            units.append(_Unit(item, index))
        return units
    units = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            item = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(f"malformed JSON line: {exc}", source=config.dataset_id, line=lineno) from exc
        if not isinstance(item, dict):
            raise IngestError("line is not a JSON object", source=config.dataset_id, line=lineno)
        units.append(_Unit(item, lineno))
    return units


def _unit_error(config: IngestAdapterConfig, unit: _Unit, message: str) -> IngestError:
    return IngestError(message, source=config.dataset_id, line=unit.line)


def _get(config: IngestAdapterConfig, unit: _Unit, canonical: str, required: bool = True) -> Any:
    key = config.source_key(canonical)
    value = unit.data.get(key)
    if value is None or value == "":
        if required:
            raise _unit_error(config, unit, f"missing required field {key!r} ({canonical})")
        return None
    return value


def _map_split(config: IngestAdapterConfig, unit: _Unit) -> str:
    label = _get(config, unit, "split", required=False)
    if label is None:
        mapped = config.split_map.get(DEFAULT_SPLIT_KEY)
        if mapped is None:
            raise _unit_error(
                config, unit,
                "record has no split field and split_map defines no '*' default",
            )
    else:
        label = str(label)
        mapped = config.split_map.get(label) or config.split_map.get(DEFAULT_SPLIT_KEY)
        if mapped is None:
            raise _unit_error(config, unit, f"unknown split label {label!r}")
    if mapped not in ("train", "val", "test"):
        raise _unit_error(config, unit, f"split_map target {mapped!r} is not train|val|test")
    return mapped


def _dimensions(
    config: IngestAdapterConfig,
    unit: _Unit,
    path: str,
    dimensions_index: Mapping[str, tuple[int, int]] | None,
) -> tuple[int, int]:
    width = _get(config, unit, "width", required=False)
    height = _get(config, unit, "height", required=False)
    if width is not None and height is not None:
        return int(width), int(height)
    if dimensions_index is not None and path in dimensions_index:
        w, h = dimensions_index[path]
        return int(w), int(h)
    raise _unit_error(
        config, unit, f"no dimensions for {path!r} (annotation fields or sidecar index)"
    )


def _media(
    config: IngestAdapterConfig,
    unit: _Unit,
    dimensions_index: Mapping[str, tuple[int, int]] | None,
) -> MediaRef:
    path = str(_get(config, unit, "path"))
    width, height = _dimensions(config, unit, path, dimensions_index)
    frame_paths = None
    if config.media_kind == "video":
        frames = _get(config, unit, "frame_paths")
        if isinstance(frames, str):
            frames = [f for f in frames.split(";") if f]
        frame_paths = tuple(str(f) for f in frames)
    return MediaRef(
        dataset_id=config.dataset_id,
        media_kind=config.media_kind,
        path=path,
        width=width,
        height=height,
        frame_paths=frame_paths,
    )


def _parse_box(config: IngestAdapterConfig, unit: _Unit, value: Any) -> PixelBox:
    if isinstance(value, str):
        parts = value.replace(";", " ").replace(",", " ").split()
        value = parts
    try:
        coords = [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise _unit_error(config, unit, f"box value {value!r} is not numeric") from exc
    if len(coords) == 4:
        return PixelBox(*coords)
    if len(coords) == 8:
        # rotated/polygon annotations (x1 y1 ... x4 y4): keep the
        # axis-aligned bounding box
        xs, ys = coords[0::2], coords[1::2]
        return PixelBox(min(xs), min(ys), max(xs), max(ys))
    raise _unit_error(config, unit, f"box needs 4 (or 8) coordinates, got {len(coords)}")


def _validated(config: IngestAdapterConfig, unit: _Unit, record: SourceRecord) -> SourceRecord:
    try:
        validate_record(record)
    except ValidationError as exc:
        raise _unit_error(config, unit, str(exc)) from exc
    return record


# ---------------------------------------------------------------------------
# adapters


def _caption_records(config, units, dimensions_index) -> Iterable[SourceRecord]:
    if config.kind not in CAPTION_KINDS:
        raise IngestError(
            f"caption adapter cannot ingest kind {config.kind.value}", source=config.dataset_id
        )
    grouped: dict[tuple[str, str], tuple[MediaRef, list[str], _Unit]] = {}
    order: list[tuple[str, str]] = []
    for unit in units:
        media = _media(config, unit, dimensions_index)
        split = _map_split(config, unit)
        captions = _get(config, unit, "captions", required=False)
        if captions is None:
            captions = [_get(config, unit, "caption")]
        if not isinstance(captions, list):
            raise _unit_error(config, unit, "captions field is not a list")
        texts = []
        for item in captions:
            if isinstance(item, Mapping):
                item = item.get("raw") or item.get("caption") or item.get("text")
            if not isinstance(item, str) or not item.strip():
                raise _unit_error(config, unit, "caption entry is empty or not a string")
            texts.append(item.strip())
        key = (media.path, split)
        if key not in grouped:
            grouped[key] = (media, [], unit)
            order.append(key)
        elif grouped[key][0] != media:
            raise _unit_error(config, unit, f"conflicting media metadata for {media.path!r}")
        grouped[key][1].extend(texts)
    for key in order:
        media, texts, unit = grouped[key]
        record = SourceRecord(
            media=media, kind=config.kind, split=key[1],
            payload=CaptionPayload(captions=tuple(texts)),
        )
        yield _validated(config, unit, record)


def _vqa_records(config, units, dimensions_index) -> Iterable[SourceRecord]:
    if config.kind not in (TaskKind.VQA, TaskKind.SCENE_CLASSIFICATION):
        raise IngestError(
            f"vqa adapter cannot ingest kind {config.kind.value}", source=config.dataset_id
        )
    for unit in units:
        media = _media(config, unit, dimensions_index)
        split = _map_split(config, unit)
        if config.kind is TaskKind.SCENE_CLASSIFICATION:
            label = _get(config, unit, "class_label", required=False) or _get(config, unit, "answer")
            payload: Any = ClassPayload(class_label=str(label).strip())
        else:
            category = _get(config, unit, "category", required=False)
            payload = VqaPayload(
                question=str(_get(config, unit, "question")).strip(),
                answer=str(_get(config, unit, "answer")).strip(),
                category=str(category) if category is not None else None,
            )
        record = SourceRecord(media=media, kind=config.kind, split=split, payload=payload)
        yield _validated(config, unit, record)


def _grounding_records(config, units, dimensions_index) -> Iterable[SourceRecord]:
    if config.kind not in (TaskKind.VISUAL_GROUNDING, TaskKind.REFERRING_EXPRESSION_GENERATION):
        raise IngestError(
            f"grounding adapter cannot ingest kind {config.kind.value}", source=config.dataset_id
        )
    for unit in units:
        media = _media(config, unit, dimensions_index)
        split = _map_split(config, unit)
        box = _parse_box(config, unit, _get(config, unit, "box"))
        record = SourceRecord(
            media=media, kind=config.kind, split=split,
            payload=GroundingPayload(
                expression=str(_get(config, unit, "expression")).strip(), box=box
            ),
        )
        yield _validated(config, unit, record)


def _detection_records(config, units, dimensions_index) -> Iterable[SourceRecord]:
    if config.kind is not TaskKind.PHRASE_GROUNDING:
        raise IngestError(
            f"detection adapter cannot ingest kind {config.kind.value}", source=config.dataset_id
        )
    for unit in units:
        media = _media(config, unit, dimensions_index)
        split = _map_split(config, unit)
        objects = _get(config, unit, "objects", required=False)
        if objects is None:
            # flat rows: one object per line, grouped later by the builder
            objects = [
                {"label": _get(config, unit, "label"), "box": _get(config, unit, "box")}
            ]
        if not isinstance(objects, list):
            raise _unit_error(config, unit, "objects field is not a list")
        by_label: dict[str, list[PixelBox]] = {}
        label_order: list[str] = []
        for obj in objects:
            if not isinstance(obj, Mapping):
                raise _unit_error(config, unit, "object entry is not an object")
            label = obj.get(config.source_key("label")) or obj.get("label")
            box_value = obj.get(config.source_key("box")) or obj.get("box")
            if not label or box_value is None:
                raise _unit_error(config, unit, "object entry needs label and box")
            label = str(label).strip()
            if label not in by_label:
                by_label[label] = []
                label_order.append(label)
            by_label[label].append(_parse_box(config, unit, box_value))
        for label in label_order:
            record = SourceRecord(
                media=media, kind=config.kind, split=split,
                payload=PhrasePayload(phrase=label, boxes=tuple(by_label[label])),
            )
            yield _validated(config, unit, record)


_ADAPTERS = {
    "caption-json": _caption_records,
    "vqa-json": _vqa_records,
    "grounding-json": _grounding_records,
    "detection-json": _detection_records,
}


def _adapter_for(config: IngestAdapterConfig):
    if config.input_format == "csv-table":
        # csv rows flow through the kind-appropriate JSON adapter
        if config.kind in CAPTION_KINDS:
            return _caption_records
        if config.kind in (TaskKind.VQA, TaskKind.SCENE_CLASSIFICATION):
            return _vqa_records
        if config.kind in (TaskKind.VISUAL_GROUNDING, TaskKind.REFERRING_EXPRESSION_GENERATION):
            return _grounding_records
        return _detection_records
    adapter = _ADAPTERS.get(config.input_format)
    if adapter is None:
        raise IngestError(
            f"unknown input_format {config.input_format!r}", source=config.dataset_id
        )
    return adapter


def ingest_stream(
    config: IngestAdapterConfig,
    stream: BinaryIO | bytes,
    dimensions_index: Mapping[str, tuple[int, int]] | None = None,
    lenient: bool = False,
) -> IngestResult:
    """Parse one annotation stream into validated SourceRecords.

    Strict mode raises :class:`IngestError` (with dataset and line) on the
    first bad unit. Lenient mode drops bad units and reports every one, so
    output count + issue count always reconciles with the input.
    """
    raw = stream if isinstance(stream, bytes) else stream.read()
    units = _decode_units(config, raw)
    adapter = _adapter_for(config)
    if not lenient:
        return IngestResult(records=tuple(adapter(config, units, dimensions_index)), issues=())

    # lenient: screen units one by one so grouping adapters still see the
    # surviving units as a single batch afterwards
    issues: list[IngestIssue] = []
    good_units: list[_Unit] = []
    for unit in units:
        try:
            list(adapter(config, [unit], dimensions_index))
            good_units.append(unit)
        except IngestError as exc:
            issues.append(IngestIssue(dataset_id=config.dataset_id, line=unit.line, error=str(exc)))
    while True:
        try:
            records = tuple(adapter(config, good_units, dimensions_index))
            break
        except IngestError as exc:
            # cross-unit conflict (e.g. inconsistent media metadata): drop
            # the offending unit and retry
            if exc.line is None:
                raise
            issues.append(IngestIssue(dataset_id=config.dataset_id, line=exc.line, error=str(exc)))
            good_units = [u for u in good_units if u.line != exc.line]
    return IngestResult(records=records, issues=tuple(issues))


def ingest_file(
    config: IngestAdapterConfig,
    path: str | Path,
    dimensions_index: Mapping[str, tuple[int, int]] | None = None,
    lenient: bool = False,
) -> IngestResult:
    with Path(path).open("rb") as handle:
        return ingest_stream(config, handle, dimensions_index, lenient)


def load_dimensions_index(path: str | Path) -> dict[str, tuple[int, int]]:
    """Sidecar index: JSON object mapping media path -> [width, height]."""
    with Path(path).open("r", encoding="utf-8") as handle:
        data = json.load(handle)
    return {key: (int(v[0]), int(v[1])) for key, v in data.items()}
