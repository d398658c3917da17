"""Loaders joining prediction files with reference files for evaluation.

Predictions: JSONL of ``{"item_id", "prediction_text"}``.
References are task-shaped JSONL rows keyed by the same item_id:

* caption:          ``{"item_id", "references": ["...", ...]}``
* vqa:              ``{"item_id", "gt_answer", "category"?}``
* grounding:        ``{"item_id", "gt_box": [x1,y1,x2,y2], "width", "height"}``
* phrase grounding: ``{"item_id", "gt_boxes": [[...], ...], "width", "height"}``

Joins are strict: every reference item must have exactly one prediction.
"""

from __future__ import annotations

from pathlib import Path

from ..domain import box_from_list
from ..errors import ValidationError
from ..jsonl import iter_jsonl
from .grounding import GroundingItem, PhraseGroundingItem
from .vqa import VqaItem


def load_predictions(path: str | Path) -> dict[str, str]:
    predictions: dict[str, str] = {}
    for lineno, row in iter_jsonl(path):
        try:
            item_id = row["item_id"]
            text = row["prediction_text"]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{path}:{lineno}: prediction row missing {exc}") from exc
        if item_id in predictions:
            raise ValidationError(f"{path}:{lineno}: duplicate prediction for {item_id!r}")
        predictions[item_id] = text
    if not predictions:
        raise ValidationError(f"{path}: no predictions found")
    return predictions


def _prediction_for(predictions: dict[str, str], item_id: str, source: str) -> str:
    if item_id not in predictions:
        raise ValidationError(f"{source}: no prediction for item {item_id!r}")
    return predictions[item_id]


def load_caption_corpus(
    references_path: str | Path, predictions: dict[str, str]
) -> list[tuple[str, list[str]]]:
    corpus = []
    for lineno, row in iter_jsonl(references_path):
        try:
            item_id = row["item_id"]
            references = list(row["references"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{references_path}:{lineno}: bad caption row ({exc})") from exc
        if not references:
            raise ValidationError(f"{references_path}:{lineno}: item has no references")
        corpus.append((_prediction_for(predictions, item_id, str(references_path)), references))
    if not corpus:
        raise ValidationError(f"{references_path}: no reference rows")
    return corpus


def load_vqa_items(references_path: str | Path, predictions: dict[str, str]) -> list[VqaItem]:
    items = []
    for lineno, row in iter_jsonl(references_path):
        try:
            item_id = row["item_id"]
            gt_answer = row["gt_answer"]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{references_path}:{lineno}: bad vqa row ({exc})") from exc
        items.append(
            VqaItem(
                item_id=item_id,
                prediction_text=_prediction_for(predictions, item_id, str(references_path)),
                gt_answer=gt_answer,
                category=row.get("category"),
            )
        )
    if not items:
        raise ValidationError(f"{references_path}: no reference rows")
    return items


def load_grounding_items(
    references_path: str | Path, predictions: dict[str, str]
) -> list[GroundingItem]:
    items = []
    for lineno, row in iter_jsonl(references_path):
        try:
            items.append(
                GroundingItem(
                    item_id=row["item_id"],
                    prediction_text=_prediction_for(
                        predictions, row["item_id"], str(references_path)
                    ),
                    gt_box=box_from_list(row["gt_box"]),
                    width=int(row["width"]),
                    height=int(row["height"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(
                f"{references_path}:{lineno}: bad grounding row ({exc})"
            ) from exc
    if not items:
        raise ValidationError(f"{references_path}: no reference rows")
    return items


def load_phrase_items(
    references_path: str | Path, predictions: dict[str, str]
) -> list[PhraseGroundingItem]:
    items = []
    for lineno, row in iter_jsonl(references_path):
        try:
            boxes = tuple(box_from_list(b) for b in row["gt_boxes"])
            items.append(
                PhraseGroundingItem(
                    item_id=row["item_id"],
                    prediction_text=_prediction_for(
                        predictions, row["item_id"], str(references_path)
                    ),
                    gt_boxes=boxes,
                    width=int(row["width"]),
                    height=int(row["height"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{references_path}:{lineno}: bad phrase row ({exc})") from exc
    if not items:
        raise ValidationError(f"{references_path}: no reference rows")
    return items


def load_judge_items(references_path: str | Path, predictions: dict[str, str]):
    """Caption-shaped references feed the judge as (generated, truths)."""
    from ..judge import JudgeItem

    items = []
    for lineno, row in iter_jsonl(references_path):
        try:
            item_id = row["item_id"]
            references = tuple(row["references"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{references_path}:{lineno}: bad caption row ({exc})") from exc
        items.append(
            JudgeItem(
                item_id=item_id,
                generated=_prediction_for(predictions, item_id, str(references_path)),
                ground_truths=references,
            )
        )
    if not items:
        raise ValidationError(f"{references_path}: no reference rows")
    return items
