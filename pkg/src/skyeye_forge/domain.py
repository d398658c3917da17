"""Shared domain types, identifiers, and the canonical JSONL record schemas.

Every other module builds on the types defined here. All values are
immutable dataclasses, safe to share across threads. On-disk format is
line-delimited JSON with snake_case fields; serialization helpers keep a
fixed key order so corpus builds are byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Iterable, Mapping, Union

from .errors import ValidationError


class TaskKind(str, Enum):
    IMAGE_CAPTION = "image_caption"
    VIDEO_CAPTION = "video_caption"
    VQA = "vqa"
    VISUAL_GROUNDING = "visual_grounding"
    PHRASE_GROUNDING = "phrase_grounding"
    REFERRING_EXPRESSION_GENERATION = "referring_expression_generation"
    SCENE_CLASSIFICATION = "scene_classification"


CAPTION_KINDS = frozenset({TaskKind.IMAGE_CAPTION, TaskKind.VIDEO_CAPTION})
#: kinds whose answer text carries serialized boxes
BOX_ANSWER_KINDS = frozenset({TaskKind.VISUAL_GROUNDING, TaskKind.PHRASE_GROUNDING})

IDENTIFIER_TOKEN_RE = re.compile(r"^\[[a-z-]+\]$")

#: Default task-identifier tokens. Only the caption/vqa/refer tokens are
#: conventional; the rest are project defaults and freely configurable as
#: long as the kind -> token mapping stays a bijection.
DEFAULT_IDENTIFIER_TOKENS: dict[TaskKind, str] = {
    TaskKind.IMAGE_CAPTION: "[caption]",
    TaskKind.VIDEO_CAPTION: "[vcaption]",
    TaskKind.VQA: "[vqa]",
    TaskKind.VISUAL_GROUNDING: "[refer]",
    TaskKind.PHRASE_GROUNDING: "[detection]",
    TaskKind.REFERRING_EXPRESSION_GENERATION: "[identify]",
    TaskKind.SCENE_CLASSIFICATION: "[classify]",
}

SPLITS = ("train", "val", "test")
REVIEW_STATES = ("pending", "accepted", "rejected", "edited")
STAGE_TAGS = ("stage1", "stage2")


@dataclass(frozen=True)
class TaskIdentifier:
    token: str
    kind: TaskKind


def build_identifier_map(tokens: Mapping[TaskKind, str] | None = None) -> dict[TaskKind, TaskIdentifier]:
    """Validate a kind -> token mapping (grammar + bijection) and wrap it."""
    tokens = dict(tokens) if tokens is not None else dict(DEFAULT_IDENTIFIER_TOKENS)
    seen: dict[str, TaskKind] = {}
    for kind, token in tokens.items():
        if not IDENTIFIER_TOKEN_RE.match(token):
            raise ValidationError(f"identifier token {token!r} does not match [a-z-] grammar")
        if token in seen:
            raise ValidationError(
                f"identifier token {token!r} assigned to both {seen[token].value} and {kind.value}"
            )
        seen[token] = kind
    return {kind: TaskIdentifier(token=token, kind=kind) for kind, token in tokens.items()}


@dataclass(frozen=True)
class MediaRef:
    """Reference to one image or video; pixels are never read."""

    dataset_id: str
    media_kind: str  # "image" | "video"
    path: str
    width: int
    height: int
    frame_paths: tuple[str, ...] | None = None

    @property
    def identity(self) -> tuple[str, str]:
        """Globally unique media identity used by the leakage guard."""
        return (self.dataset_id, self.path)


@dataclass(frozen=True)
class PixelBox:
    """Axis-aligned box in image pixels, origin top-left, corners (x1,y1)-(x2,y2)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class CaptionPayload:
    captions: tuple[str, ...]


@dataclass(frozen=True)
class VqaPayload:
    question: str
    answer: str
    category: str | None = None


@dataclass(frozen=True)
class GroundingPayload:
    expression: str
    box: PixelBox


@dataclass(frozen=True)
class PhrasePayload:
    phrase: str
    boxes: tuple[PixelBox, ...]


@dataclass(frozen=True)
class ClassPayload:
    class_label: str


Payload = Union[CaptionPayload, VqaPayload, GroundingPayload, PhrasePayload, ClassPayload]

_PAYLOAD_FOR_KIND: dict[TaskKind, type] = {
    TaskKind.IMAGE_CAPTION: CaptionPayload,
    TaskKind.VIDEO_CAPTION: CaptionPayload,
    TaskKind.VQA: VqaPayload,
    TaskKind.VISUAL_GROUNDING: GroundingPayload,
    TaskKind.REFERRING_EXPRESSION_GENERATION: GroundingPayload,
    TaskKind.PHRASE_GROUNDING: PhrasePayload,
    TaskKind.SCENE_CLASSIFICATION: ClassPayload,
}


@dataclass(frozen=True)
class SourceRecord:
    """One canonicalized annotation unit from any ingested dataset."""

    media: MediaRef
    kind: TaskKind
    split: str  # "train" | "val" | "test"
    payload: Payload


@dataclass(frozen=True)
class ConversationTurn:
    kind: TaskKind
    instruction_text: str
    answer_text: str
    identifier: str | None = None  # task-identifier token, absent in ablation builds


@dataclass(frozen=True)
class InstructionSample:
    """A rendered training sample: media + ordered (instruction, answer) turns."""

    sample_id: str
    media: MediaRef
    turns: tuple[ConversationTurn, ...]
    stage_tags: frozenset[str]
    source_recipe: str
    review_state: str = "pending"
    edited_from: str | None = None


@dataclass(frozen=True)
class ManifestRow:
    dataset_id: str
    task: str
    sample_count: int


@dataclass(frozen=True)
class CorpusManifest:
    rows: tuple[ManifestRow, ...]
    stage1_total: int
    stage2_total: int
    total: int
    build_config_hash: str
    seed: int


# ---------------------------------------------------------------------------
# validation


def validate_media(media: MediaRef) -> None:
    if not media.dataset_id:
        raise ValidationError("media.dataset_id is empty")
    if not media.path:
        raise ValidationError("media.path is empty")
    if media.media_kind not in ("image", "video"):
        raise ValidationError(f"media_kind {media.media_kind!r} is not image|video")
    if media.width <= 0 or media.height <= 0:
        raise ValidationError(
            f"media {media.path!r} has non-positive dimensions {media.width}x{media.height}"
        )
    if media.media_kind == "video":
        if not media.frame_paths:
            raise ValidationError(f"video media {media.path!r} has no frame_paths")
    elif media.frame_paths is not None:
        raise ValidationError(f"image media {media.path!r} must not carry frame_paths")


def validate_pixel_box(box: PixelBox, width: float, height: float) -> None:
    if not (box.x1 < box.x2 and box.y1 < box.y2):
        raise ValidationError(f"degenerate box {box.as_tuple()}")
    if box.x1 < 0 or box.y1 < 0 or box.x2 > width or box.y2 > height:
        raise ValidationError(
            f"box {box.as_tuple()} out of bounds for {width}x{height} image"
        )


def validate_record(record: SourceRecord) -> None:
    validate_media(record.media)
    if record.split not in SPLITS:
        raise ValidationError(f"split {record.split!r} is not train|val|test")
    expected = _PAYLOAD_FOR_KIND[record.kind]
    if type(record.payload) is not expected:
        raise ValidationError(
            f"payload {type(record.payload).__name__} does not match kind {record.kind.value}"
        )
    payload = record.payload
    if isinstance(payload, CaptionPayload):
        if not payload.captions:
            raise ValidationError("caption record has no captions")
        if any(not c for c in payload.captions):
            raise ValidationError("caption record contains an empty caption")
    elif isinstance(payload, VqaPayload):
        if not payload.question:
            raise ValidationError("vqa record has an empty question")
        if not payload.answer:
            raise ValidationError("vqa record has an empty answer")
    elif isinstance(payload, GroundingPayload):
        if not payload.expression:
            raise ValidationError("grounding record has an empty expression")
        validate_pixel_box(payload.box, record.media.width, record.media.height)
    elif isinstance(payload, PhrasePayload):
        if not payload.phrase:
            raise ValidationError("phrase record has an empty phrase")
        if not payload.boxes:
            raise ValidationError("phrase record has no boxes")
        for box in payload.boxes:
            validate_pixel_box(box, record.media.width, record.media.height)
    elif isinstance(payload, ClassPayload):
        if not payload.class_label:
            raise ValidationError("classification record has an empty class_label")


def validate_turn(turn: ConversationTurn, require_identifier: bool | None = None) -> None:
    if not turn.instruction_text:
        raise ValidationError("turn has empty instruction_text")
    if not turn.answer_text:
        raise ValidationError("turn has empty answer_text")
    if turn.identifier is not None:
        if not IDENTIFIER_TOKEN_RE.match(turn.identifier):
            raise ValidationError(f"turn identifier {turn.identifier!r} violates token grammar")
        if turn.identifier not in turn.instruction_text:
            raise ValidationError(
                f"identifier {turn.identifier!r} missing from rendered instruction"
            )
    if require_identifier is True and turn.identifier is None:
        raise ValidationError("identifiers are enabled but turn has none")
    if require_identifier is False and turn.identifier is not None:
        raise ValidationError("identifiers are disabled but turn carries one")


def validate_sample(sample: InstructionSample, require_identifier: bool | None = None) -> None:
    validate_media(sample.media)
    if not sample.turns:
        raise ValidationError("sample has no turns")
    for turn in sample.turns:
        validate_turn(turn, require_identifier)
    if sample.review_state not in REVIEW_STATES:
        raise ValidationError(f"review_state {sample.review_state!r} is not a known state")
    if not sample.stage_tags or not sample.stage_tags.issubset(STAGE_TAGS):
        raise ValidationError(f"stage_tags {sorted(sample.stage_tags)} invalid")
    if sample.sample_id != compute_sample_id(sample.media, sample.turns):
        raise ValidationError(f"sample_id {sample.sample_id} does not match content hash")


# ---------------------------------------------------------------------------
# content hashing


def canonical_json(value: Any) -> str:
    """Canonical serialization: sorted keys, no insignificant whitespace."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def compute_sample_id(media: MediaRef, turns: Iterable[ConversationTurn]) -> str:
    """Deterministic content hash over media identity + ordered turns.

    Turn order matters; identical content always produces the same id.
    """
    document = {
        "media": list(media.identity),
        "turns": [
            [t.kind.value, t.identifier, t.instruction_text, t.answer_text] for t in turns
        ],
    }
    digest = hashlib.sha256(canonical_json(document).encode("utf-8"))
    return digest.hexdigest()


def make_sample(
    media: MediaRef,
    turns: Iterable[ConversationTurn],
    stage_tags: Iterable[str],
    source_recipe: str,
    review_state: str = "pending",
    edited_from: str | None = None,
) -> InstructionSample:
    turns = tuple(turns)
    return InstructionSample(
        sample_id=compute_sample_id(media, turns),
        media=media,
        turns=turns,
        stage_tags=frozenset(stage_tags),
        source_recipe=source_recipe,
        review_state=review_state,
        edited_from=edited_from,
    )


def rehash_sample(sample: InstructionSample) -> InstructionSample:
    """Recompute sample_id after a content edit, keeping provenance."""
    return replace(sample, sample_id=compute_sample_id(sample.media, sample.turns))


# ---------------------------------------------------------------------------
# dict <-> dataclass codecs (JSONL row shapes)


def media_to_dict(media: MediaRef) -> dict:
    out: dict[str, Any] = {
        "dataset_id": media.dataset_id,
        "media_kind": media.media_kind,
        "path": media.path,
        "width": media.width,
        "height": media.height,
    }
    if media.frame_paths is not None:
        out["frame_paths"] = list(media.frame_paths)
    return out


def media_from_dict(data: Mapping[str, Any]) -> MediaRef:
    frames = data.get("frame_paths")
    return MediaRef(
        dataset_id=data["dataset_id"],
        media_kind=data["media_kind"],
        path=data["path"],
        width=int(data["width"]),
        height=int(data["height"]),
        frame_paths=tuple(frames) if frames is not None else None,
    )


def box_to_list(box: PixelBox) -> list[float]:
    return [box.x1, box.y1, box.x2, box.y2]


def box_from_list(values: Iterable[float]) -> PixelBox:
    vals = [float(v) for v in values]
    if len(vals) != 4:
        raise ValidationError(f"box list must have 4 coordinates, got {len(vals)}")
    return PixelBox(*vals)


def payload_to_dict(payload: Payload) -> dict:
    if isinstance(payload, CaptionPayload):
        return {"captions": list(payload.captions)}
    if isinstance(payload, VqaPayload):
        out: dict[str, Any] = {"question": payload.question, "answer": payload.answer}
        if payload.category is not None:
            out["category"] = payload.category
        return out
    if isinstance(payload, GroundingPayload):
        return {"expression": payload.expression, "box": box_to_list(payload.box)}
    if isinstance(payload, PhrasePayload):
        return {"phrase": payload.phrase, "boxes": [box_to_list(b) for b in payload.boxes]}
    if isinstance(payload, ClassPayload):
        return {"class_label": payload.class_label}
    raise ValidationError(f"unknown payload type {type(payload).__name__}")


def payload_from_dict(kind: TaskKind, data: Mapping[str, Any]) -> Payload:
    try:
        if kind in CAPTION_KINDS:
            return CaptionPayload(captions=tuple(data["captions"]))
        if kind is TaskKind.VQA:
            return VqaPayload(
                question=data["question"],
                answer=data["answer"],
                category=data.get("category"),
            )
        if kind in (TaskKind.VISUAL_GROUNDING, TaskKind.REFERRING_EXPRESSION_GENERATION):
            return GroundingPayload(expression=data["expression"], box=box_from_list(data["box"]))
        if kind is TaskKind.PHRASE_GROUNDING:
            return PhrasePayload(
                phrase=data["phrase"],
                boxes=tuple(box_from_list(b) for b in data["boxes"]),
            )
        if kind is TaskKind.SCENE_CLASSIFICATION:
            return ClassPayload(class_label=data["class_label"])
    except KeyError as exc:
        raise ValidationError(f"payload for {kind.value} is missing field {exc.args[0]!r}") from exc
    raise ValidationError(f"unknown task kind {kind!r}")


def record_to_dict(record: SourceRecord) -> dict:
    return {
        "media": media_to_dict(record.media),
        "kind": record.kind.value,
        "split": record.split,
        "payload": payload_to_dict(record.payload),
    }


def record_from_dict(data: Mapping[str, Any], validate: bool = True) -> SourceRecord:
    try:
        kind = TaskKind(data["kind"])
        record = SourceRecord(
            media=media_from_dict(data["media"]),
            kind=kind,
            split=data["split"],
            payload=payload_from_dict(kind, data["payload"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ValidationError(f"malformed source record: {exc}") from exc
    if validate:
        validate_record(record)
    return record


def turn_to_dict(turn: ConversationTurn) -> dict:
    out: dict[str, Any] = {
        "kind": turn.kind.value,
        "instruction": turn.instruction_text,
        "answer": turn.answer_text,
    }
    if turn.identifier is not None:
        out["identifier"] = turn.identifier
    return out


def turn_from_dict(data: Mapping[str, Any]) -> ConversationTurn:
    try:
        return ConversationTurn(
            kind=TaskKind(data["kind"]),
            instruction_text=data["instruction"],
            answer_text=data["answer"],
            identifier=data.get("identifier"),
        )
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"malformed turn: {exc}") from exc


def sample_to_dict(sample: InstructionSample) -> dict:
    out: dict[str, Any] = {
        "sample_id": sample.sample_id,
        "media": media_to_dict(sample.media),
        "turns": [turn_to_dict(t) for t in sample.turns],
        "stage_tags": sorted(sample.stage_tags),
        "source_recipe": sample.source_recipe,
        "review_state": sample.review_state,
    }
    if sample.edited_from is not None:
        out["edited_from"] = sample.edited_from
    return out


def sample_from_dict(data: Mapping[str, Any], validate: bool = True) -> InstructionSample:
    try:
        sample = InstructionSample(
            sample_id=data["sample_id"],
            media=media_from_dict(data["media"]),
            turns=tuple(turn_from_dict(t) for t in data["turns"]),
            stage_tags=frozenset(data["stage_tags"]),
            source_recipe=data["source_recipe"],
            review_state=data.get("review_state", "pending"),
            edited_from=data.get("edited_from"),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ValidationError(f"malformed instruction sample: {exc}") from exc
    if validate:
        validate_sample(sample)
    return sample


def manifest_to_dict(manifest: CorpusManifest) -> dict:
    return {
        "rows": [
            {"dataset_id": r.dataset_id, "task": r.task, "sample_count": r.sample_count}
            for r in manifest.rows
        ],
        "stage1_total": manifest.stage1_total,
        "stage2_total": manifest.stage2_total,
        "total": manifest.total,
        "build_config_hash": manifest.build_config_hash,
        "seed": manifest.seed,
    }


def manifest_from_dict(data: Mapping[str, Any]) -> CorpusManifest:
    try:
        return CorpusManifest(
            rows=tuple(
                ManifestRow(r["dataset_id"], r["task"], int(r["sample_count"]))
                for r in data["rows"]
            ),
            stage1_total=int(data["stage1_total"]),
            stage2_total=int(data["stage2_total"]),
            total=int(data["total"]),
            build_config_hash=data["build_config_hash"],
            seed=int(data["seed"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ValidationError(f"malformed manifest: {exc}") from exc
