"""Instruction rendering from per-task template pools and conversation
serialization in the [INST]/[/INST] format.

Template pools are data files: JSON with ``kind``, ``templates`` and
optional ``weights``. Templates may use the placeholders ``{media}``,
``{identifier}``, ``{query}``, ``{phrase}`` and ``{expression}``.
Placeholder substitution is a single pass, so substituted values are never
re-scanned. Rendered instructions are whitespace-normalized (runs of
spaces collapse, ends trimmed), which also absorbs the hole left by a
removed identifier in ablation builds.

A conversation serializes as the concatenation over turns of
``"[INST] " + instruction + " [/INST] " + answer`` with the configured
media placeholder injected at the front of the first instruction. Later
turns therefore see every earlier instruction and answer as context.
:func:`recover_turns` is the exact inverse and doubles as the test oracle
for the serialization.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .domain import ConversationTurn, TaskKind
from .errors import RenderError, ValidationError

_PLACEHOLDER_RE = re.compile(r"\{(media|identifier|query|phrase|expression)\}")
_MARKER_RE = re.compile(r"\[/?INST\]")
INST_OPEN = "[INST]"
INST_CLOSE = "[/INST]"

#: placeholders each task kind must carry in addition to {identifier};
#: referring expression generation receives the serialized region via {query}
REQUIRED_PLACEHOLDERS: dict[TaskKind, frozenset[str]] = {
    TaskKind.IMAGE_CAPTION: frozenset(),
    TaskKind.VIDEO_CAPTION: frozenset(),
    TaskKind.VQA: frozenset({"query"}),
    TaskKind.VISUAL_GROUNDING: frozenset({"expression"}),
    TaskKind.PHRASE_GROUNDING: frozenset({"phrase"}),
    TaskKind.REFERRING_EXPRESSION_GENERATION: frozenset({"query"}),
    TaskKind.SCENE_CLASSIFICATION: frozenset(),
}


@dataclass(frozen=True)
class TemplatePool:
    kind: TaskKind
    templates: tuple[str, ...]
    weights: tuple[float, ...] | None = None


@dataclass(frozen=True)
class TurnContent:
    """The substitutable payload of one instruction turn."""

    kind: TaskKind
    query: str | None = None
    expression: str | None = None
    phrase: str | None = None


@dataclass(frozen=True)
class RenderedConversation:
    text: str
    #: per turn: ((instruction_start, instruction_end), (answer_start, answer_end))
    turn_spans: tuple[tuple[tuple[int, int], tuple[int, int]], ...]


def validate_pool(pool: TemplatePool, identifiers_enabled: bool = True) -> None:
    if not pool.templates:
        raise ValidationError(f"template pool for {pool.kind.value} is empty")
    if pool.weights is not None:
        if len(pool.weights) != len(pool.templates):
            raise ValidationError(
                f"pool for {pool.kind.value}: {len(pool.weights)} weights for "
                f"{len(pool.templates)} templates"
            )
        if any(w <= 0 for w in pool.weights):
            raise ValidationError(f"pool for {pool.kind.value} has non-positive weights")
    required = REQUIRED_PLACEHOLDERS[pool.kind]
    for template in pool.templates:
        names = [m.group(1) for m in _PLACEHOLDER_RE.finditer(template)]
        if identifiers_enabled and names.count("identifier") != 1:
            raise ValidationError(
                f"template {template!r} must contain {{identifier}} exactly once"
            )
        for name in required:
            if name not in names:
                raise ValidationError(
                    f"template {template!r} for {pool.kind.value} lacks {{{name}}}"
                )


def pool_from_dict(data: Mapping) -> TemplatePool:
    try:
        return TemplatePool(
            kind=TaskKind(data["kind"]),
            templates=tuple(data["templates"]),
            weights=tuple(data["weights"]) if data.get("weights") is not None else None,
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ValidationError(f"malformed template pool: {exc}") from exc


def load_pool_file(path: str | Path) -> TemplatePool:
    with Path(path).open("r", encoding="utf-8") as handle:
        return pool_from_dict(json.load(handle))


def load_pools_from_dir(directory: str | Path) -> dict[TaskKind, TemplatePool]:
    pools = {}
    for path in sorted(Path(directory).glob("*.json")):
        pool = load_pool_file(path)
        pools[pool.kind] = pool
    return pools


def load_default_pools() -> dict[TaskKind, TemplatePool]:
    """Built-in pools shipped as package data (editable paraphrase lists)."""
    pools = {}
    root = resources.files("skyeye_forge").joinpath("data/templates")
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".json"):
            pool = pool_from_dict(json.loads(entry.read_text(encoding="utf-8")))
            pools[pool.kind] = pool
    return pools


def derive_seed(global_seed: int, *parts: str) -> int:
    """Stable per-sample seed so parallel rendering stays reproducible."""
    digest = hashlib.blake2b(digest_size=8)
    digest.update(str(global_seed).encode("utf-8"))
    for part in parts:
        digest.update(b"\x1f")
        digest.update(part.encode("utf-8"))
    return int.from_bytes(digest.digest(), "big")


def _normalize_spaces(text: str) -> str:
    return re.sub(r" {2,}", " ", text).strip()


def render_instruction(
    content: TurnContent,
    pool: TemplatePool,
    seed: int,
    identifiers_enabled: bool = True,
    identifier_token: str | None = None,
    media_token: str = "",
) -> str:
    """Pick a template with a seeded PRNG and substitute every placeholder."""
    if pool.kind is not content.kind:
        raise RenderError(
            f"pool kind {pool.kind.value} does not match turn kind {content.kind.value}"
        )
    if identifiers_enabled and not identifier_token:
        raise RenderError(f"identifiers enabled but no token supplied for {content.kind.value}")
    rng = random.Random(seed)
    if pool.weights is not None:
        template = rng.choices(pool.templates, weights=pool.weights, k=1)[0]
    else:
        template = pool.templates[rng.randrange(len(pool.templates))]

    values = {
        "media": media_token,
        "identifier": identifier_token if identifiers_enabled else "",
        "query": content.query,
        "expression": content.expression,
        "phrase": content.phrase,
    }

    def substitute(match: re.Match) -> str:
        name = match.group(1)
        value = values[name]
        if value is None:
            raise RenderError(
                f"template {template!r} needs {{{name}}} but the record provides none"
            )
        return value

    return _normalize_spaces(_PLACEHOLDER_RE.sub(substitute, template))


def render_conversation(
    turns: Sequence[ConversationTurn], media_placeholder: str = "", preamble: str = ""
) -> RenderedConversation:
    """Serialize ordered turns; earlier turns fully precede later answers.

    An optional preamble (system text) may precede the first [INST]; by
    default there is none.
    """
    if not turns:
        raise RenderError("cannot render a conversation with no turns")
    if INST_OPEN in preamble or INST_CLOSE in preamble:
        raise RenderError("preamble contains a reserved marker")
    for turn in turns:
        for text in (turn.instruction_text, turn.answer_text):
            if INST_OPEN in text or INST_CLOSE in text:
                raise RenderError(f"turn text contains a reserved marker: {text!r}")
    pieces: list[str] = []
    spans = []
    length = 0

    def push(piece: str) -> tuple[int, int]:
        nonlocal length
        start = length
        pieces.append(piece)
        length += len(piece)
        return (start, length)

    if preamble:
        push(f"{preamble} ")
    for index, turn in enumerate(turns):
        instruction = turn.instruction_text
        if index == 0 and media_placeholder and media_placeholder not in instruction:
            instruction = f"{media_placeholder} {instruction}"
        push(f"{INST_OPEN} ")
        instruction_span = push(instruction)
        push(f" {INST_CLOSE} ")
        answer_span = push(turn.answer_text)
        spans.append((instruction_span, answer_span))
    return RenderedConversation(text="".join(pieces), turn_spans=tuple(spans))


def recover_turns(text: str, strict: bool = True) -> list[tuple[str, str]]:
    """Invert :func:`render_conversation`; strict mode rejects stray markers.

    Text before the first [INST] (a preamble) is tolerated and ignored.
    """
    markers = [(m.start(), m.group()) for m in _MARKER_RE.finditer(text)]
    if strict:
        if not markers:
            raise RenderError("no conversation markers found")
        if len(markers) % 2 != 0:
            raise RenderError("unbalanced [INST]/[/INST] markers")
        for index, (_, kind) in enumerate(markers):
            expected = INST_OPEN if index % 2 == 0 else INST_CLOSE
            if kind != expected:
                raise RenderError(f"marker {index} is {kind}, expected {expected}")

    turns: list[tuple[str, str]] = []
    position = 0
    while True:
        open_at = text.find(INST_OPEN, position)
        if open_at < 0:
            break
        close_at = text.find(INST_CLOSE, open_at)
        if close_at < 0:
            if strict:
                raise RenderError("unterminated [INST] block")
            break
        instruction = text[open_at + len(INST_OPEN) : close_at]
        next_open = text.find(INST_OPEN, close_at + len(INST_CLOSE))
        answer_end = next_open if next_open >= 0 else len(text)
        answer = text[close_at + len(INST_CLOSE) : answer_end]
        if strict:
            if not (instruction.startswith(" ") and instruction.endswith(" ")):
                raise RenderError("instruction is not single-space delimited")
            if not answer.startswith(" "):
                raise RenderError("answer is not single-space delimited")
            turns.append((instruction[1:-1], answer[1:]))
        else:
            turns.append((instruction.strip(), answer.strip()))
        position = answer_end
    if strict and not turns:
        raise RenderError("no turns recovered")
    return turns
