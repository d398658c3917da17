"""From-scratch evaluation metrics and per-dataset report generation."""

from .text import tokenize, ngram_counts
from .stemming import porter_stem
from .captioning import bleu, rouge_l, meteor_lite, cider, length_ratio
from .grounding import iou, grounding_accuracy, phrase_grounding_scores, GroundingItem, PhraseGroundingItem
from .vqa import normalize_answer, vqa_accuracy, VqaItem
from .report import MetricReport, caption_report, grounding_report, vqa_report, render_table

__all__ = [
    "tokenize",
    "ngram_counts",
    "porter_stem",
    "bleu",
    "rouge_l",
    "meteor_lite",
    "cider",
    "length_ratio",
    "iou",
    "grounding_accuracy",
    "phrase_grounding_scores",
    "GroundingItem",
    "PhraseGroundingItem",
    "normalize_answer",
    "vqa_accuracy",
    "VqaItem",
    "MetricReport",
    "caption_report",
    "grounding_report",
    "vqa_report",
    "render_table",
]
