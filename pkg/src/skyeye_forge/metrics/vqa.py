"""Exact-match VQA accuracy with per-category breakdown."""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Sequence

from ..errors import ValidationError

_TRAILING_PUNCT = string.punctuation + "‘’“”…"

#: category assigned to records that carry none
UNCATEGORIZED = "all"


def normalize_answer(answer: str) -> str:
    """Lowercase, trim, and strip trailing punctuation ("Yes." == "yes")."""
    return answer.strip().lower().rstrip(_TRAILING_PUNCT).strip()


@dataclass(frozen=True)
class VqaItem:
    item_id: str
    prediction_text: str
    gt_answer: str
    category: str | None = None


@dataclass(frozen=True)
class VqaReport:
    per_category: dict[str, float]
    average_acc: float  # unweighted mean of the per-category accuracies
    micro_acc: float  # plain fraction of correct items
    counts: dict[str, int]
    total: int


def vqa_accuracy(items: Sequence[VqaItem]) -> VqaReport:
    if not items:
        raise ValidationError("vqa evaluation needs at least one item")
    correct: dict[str, int] = {}
    counts: dict[str, int] = {}
    correct_total = 0
    for item in items:
        category = item.category if item.category else UNCATEGORIZED
        counts[category] = counts.get(category, 0) + 1
        if normalize_answer(item.prediction_text) == normalize_answer(item.gt_answer):
            correct[category] = correct.get(category, 0) + 1
            correct_total += 1
    per_category = {
        category: correct.get(category, 0) / count for category, count in sorted(counts.items())
    }
    return VqaReport(
        per_category=per_category,
        average_acc=sum(per_category.values()) / len(per_category),
        micro_acc=correct_total / len(items),
        counts=dict(sorted(counts.items())),
        total=len(items),
    )
