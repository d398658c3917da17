"""Review decisions: the append-only JSONL log and its validation rules.

A decision is one curator verdict on one sample. The log is replayable:
the latest decision per sample_id wins, and re-applying the same log to
the same corpus always reconstructs the same review state.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping

from .domain import BOX_ANSWER_KINDS, ConversationTurn, turn_from_dict, turn_to_dict, validate_turn
from .errors import BoxGrammarError, ValidationError
from .geotext import parse_boxes
from .jsonl import dump_line, iter_jsonl

VERDICTS = ("accept", "reject", "edit")


@dataclass(frozen=True)
class ReviewDecision:
    sample_id: str
    verdict: str
    reviewer: str
    timestamp: str  # RFC 3339
    edited_turns: tuple[ConversationTurn, ...] | None = None
    note: str | None = None


def utc_now_rfc3339() -> str:
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


def validate_decision(decision: ReviewDecision) -> None:
    if not decision.sample_id:
        raise ValidationError("decision has no sample_id")
    if decision.verdict not in VERDICTS:
        raise ValidationError(f"verdict {decision.verdict!r} is not accept|reject|edit")
    if not decision.reviewer:
        raise ValidationError("decision has no reviewer")
    if decision.verdict == "edit":
        if not decision.edited_turns:
            raise ValidationError("edit decision carries no edited_turns")
        for index, turn in enumerate(decision.edited_turns):
            try:
                validate_turn(turn)
                if turn.kind in BOX_ANSWER_KINDS:
                    parsed = parse_boxes(turn.answer_text, strict=True)
                    if not parsed.boxes:
                        raise BoxGrammarError("answer contains no box group")
            except ValidationError as exc:
                raise ValidationError(f"edited_turns[{index}]: {exc}") from exc
    elif decision.edited_turns:
        raise ValidationError(f"{decision.verdict} decision must not carry edited_turns")


def decision_to_dict(decision: ReviewDecision) -> dict:
    out: dict[str, Any] = {
        "sample_id": decision.sample_id,
        "verdict": decision.verdict,
        "reviewer": decision.reviewer,
        "timestamp": decision.timestamp,
    }
    if decision.edited_turns is not None:
        out["edited_turns"] = [turn_to_dict(t) for t in decision.edited_turns]
    if decision.note is not None:
        out["note"] = decision.note
    return out


def decision_from_dict(data: Mapping[str, Any], validate: bool = True) -> ReviewDecision:
    try:
        decision = ReviewDecision(
            sample_id=data["sample_id"],
            verdict=data["verdict"],
            reviewer=data["reviewer"],
            timestamp=data["timestamp"],
            edited_turns=(
                tuple(turn_from_dict(t) for t in data["edited_turns"])
                if data.get("edited_turns") is not None
                else None
            ),
            note=data.get("note"),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed review decision: {exc}") from exc
    if validate:
        validate_decision(decision)
    return decision


def read_decision_log(path: str | Path) -> list[ReviewDecision]:
    path = Path(path)
    if not path.exists():
        return []
    decisions = []
    for lineno, data in iter_jsonl(path):
        try:
            decisions.append(decision_from_dict(data))
        except ValidationError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    return decisions


def append_decision(path: str | Path, decision: ReviewDecision) -> None:
    """One atomic line per decision; the log is never rewritten."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as handle:
        handle.write(dump_line(decision_to_dict(decision)) + "\n")
        handle.flush()


def latest_decisions(decisions: Iterable[ReviewDecision]) -> dict[str, ReviewDecision]:
    """Log order resolves conflicts: the last decision per sample wins."""
    latest: dict[str, ReviewDecision] = {}
    for decision in decisions:
        latest[decision.sample_id] = decision
    return latest
