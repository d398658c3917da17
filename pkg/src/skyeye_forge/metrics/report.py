"""Per-dataset metric reports and their table-style text rendering.

Fractional metrics are reported x100 (the conventional presentation for
BLEU/ROUGE/METEOR/accuracy tables); CIDEr is likewise scaled x100.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .captioning import Corpus, bleu, cider, length_ratio, meteor_lite, rouge_l
from .grounding import (
    DEFAULT_IOU_THRESHOLD,
    GroundingItem,
    PhraseGroundingItem,
    grounding_accuracy,
    phrase_grounding_scores,
)
from .vqa import VqaItem, vqa_accuracy


@dataclass(frozen=True)
class MetricReport:
    task: str
    dataset_id: str
    scores: dict[str, float]

    def to_dict(self) -> dict:
        return {"task": self.task, "dataset_id": self.dataset_id, "scores": dict(self.scores)}


def caption_report(dataset_id: str, corpus: Corpus) -> MetricReport:
    scores = {f"BLEU-{n}": 100.0 * bleu(corpus, n) for n in range(1, 5)}
    scores["METEOR"] = 100.0 * meteor_lite(corpus)
    scores["ROUGE_L"] = 100.0 * rouge_l(corpus)
    scores["CIDEr"] = 100.0 * cider(corpus)
    scores["length_ratio"] = length_ratio(corpus)
    return MetricReport(task="caption", dataset_id=dataset_id, scores=scores)


def grounding_report(
    dataset_id: str,
    items: Sequence[GroundingItem],
    threshold: float = DEFAULT_IOU_THRESHOLD,
) -> MetricReport:
    result = grounding_accuracy(items, threshold)
    scores = {
        f"Acc@{threshold:g}": 100.0 * result.accuracy,
        "parse_failure_rate": 100.0 * result.parse_failure_rate,
    }
    return MetricReport(task="grounding", dataset_id=dataset_id, scores=scores)


def phrase_grounding_report(
    dataset_id: str,
    items: Sequence[PhraseGroundingItem],
    threshold: float = DEFAULT_IOU_THRESHOLD,
) -> MetricReport:
    result = phrase_grounding_scores(items, threshold)
    scores = {
        "Precision": 100.0 * result.precision,
        "Recall": 100.0 * result.recall,
        "F1": 100.0 * result.f1,
    }
    return MetricReport(task="phrase_grounding", dataset_id=dataset_id, scores=scores)


def vqa_report(dataset_id: str, items: Sequence[VqaItem]) -> MetricReport:
    result = vqa_accuracy(items)
    scores = {category: 100.0 * acc for category, acc in result.per_category.items()}
    scores["Average Acc"] = 100.0 * result.average_acc
    scores["Micro Acc"] = 100.0 * result.micro_acc
    return MetricReport(task="vqa", dataset_id=dataset_id, scores=scores)


def render_table(report: MetricReport) -> str:
    """One header row, one value row, fixed-width columns."""
    names = list(report.scores)
    values = [f"{report.scores[name]:.2f}" for name in names]
    widths = [max(len(n), len(v)) for n, v in zip(names, values)]
    header = "  ".join(n.ljust(w) for n, w in zip(names, widths))
    row = "  ".join(v.rjust(w) for v, w in zip(values, widths))
    title = f"{report.dataset_id} ({report.task})"
    rule = "-" * max(len(header), len(title))
    return "\n".join([title, rule, header, row])
