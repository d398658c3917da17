"""In-memory sample index backed by the append-only decision log.

The corpus files are read-only inputs; the only thing this store ever
writes is the decision log. Review state is fully reconstructable by
replaying that log over the same corpus, which is also exactly what
happens on startup.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from ..domain import InstructionSample, sample_from_dict
from ..errors import ValidationError
from ..jsonl import iter_jsonl
from ..review import (
    ReviewDecision,
    append_decision,
    decision_to_dict,
    read_decision_log,
    validate_decision,
)

_VERDICT_TO_STATE = {"accept": "accepted", "reject": "rejected", "edit": "edited"}
_CURSOR_RE = re.compile(r"^[0-9a-f]{1,64}$")


class UnknownSampleError(ValidationError):
    pass


class BadCursorError(ValidationError):
    pass


@dataclass(frozen=True)
class SamplePage:
    items: tuple[InstructionSample, ...]
    next_cursor: str | None
    total_matched: int
    counts: dict[str, int]


@dataclass(frozen=True)
class ListFilter:
    state: str | None = None
    kind: str | None = None
    dataset_id: str | None = None
    recipe: str | None = None


class ReviewStore:
    def __init__(self, samples: Sequence[InstructionSample], log_path: str | Path):
        by_id: dict[str, InstructionSample] = {}
        for sample in samples:
            by_id.setdefault(sample.sample_id, sample)
        self._samples = {sid: by_id[sid] for sid in sorted(by_id)}
        self._order = list(self._samples)
        self._log_path = Path(log_path)
        self._lock = threading.Lock()
        self._latest: dict[str, ReviewDecision] = {}
        for decision in read_decision_log(self._log_path):
            self._remember(decision)

    @classmethod
    def from_corpus_file(cls, corpus_path: str | Path, log_path: str | Path) -> "ReviewStore":
        samples = [sample_from_dict(row) for _, row in iter_jsonl(corpus_path)]
        return cls(samples, log_path)

    def _remember(self, decision: ReviewDecision) -> None:
        if decision.sample_id in self._samples:
            self._latest[decision.sample_id] = decision

    # ------------------------------------------------------------------
    # queries

    def __len__(self) -> int:
        return len(self._samples)

    def state_of(self, sample_id: str) -> str:
        decision = self._latest.get(sample_id)
        if decision is None:
            return self._samples[sample_id].review_state
        return _VERDICT_TO_STATE[decision.verdict]

    def effective(self, sample_id: str) -> InstructionSample:
        sample = self._samples.get(sample_id)
        if sample is None:
            raise UnknownSampleError(f"unknown sample_id {sample_id!r}")
        return replace(sample, review_state=self.state_of(sample_id))

    def latest_decision(self, sample_id: str) -> ReviewDecision | None:
        return self._latest.get(sample_id)

    def _matches(self, sample: InstructionSample, flt: ListFilter) -> bool:
        if flt.kind is not None and flt.kind not in {t.kind.value for t in sample.turns}:
            return False
        if flt.dataset_id is not None and sample.media.dataset_id != flt.dataset_id:
            return False
        if flt.recipe is not None and sample.source_recipe != flt.recipe:
            return False
        return True

    def list_samples(
        self, flt: ListFilter = ListFilter(), cursor: str | None = None, page_size: int = 50
    ) -> SamplePage:
        """Stable sample_id ordering with cursor pagination."""
        if cursor is not None and not _CURSOR_RE.match(cursor):
            raise BadCursorError(f"cursor {cursor!r} is not a sample_id prefix")
        if page_size < 1:
            raise BadCursorError("page_size must be >= 1")
        base = [sid for sid in self._order if self._matches(self._samples[sid], ListFilter(
            kind=flt.kind, dataset_id=flt.dataset_id, recipe=flt.recipe))]
        counts: dict[str, int] = {"pending": 0, "accepted": 0, "rejected": 0, "edited": 0}
        for sid in base:
            counts[self.state_of(sid)] += 1
        matched = (
            base
            if flt.state is None
            else [sid for sid in base if self.state_of(sid) == flt.state]
        )
        start = 0
        if cursor is not None:
            # first index strictly after the cursor
            from bisect import bisect_right

            start = bisect_right(matched, cursor)
        page_ids = matched[start : start + page_size]
        next_cursor = page_ids[-1] if start + page_size < len(matched) else None
        return SamplePage(
            items=tuple(self.effective(sid) for sid in page_ids),
            next_cursor=next_cursor,
            total_matched=len(matched),
            counts=counts,
        )

    # ------------------------------------------------------------------
    # decisions

    def submit(self, decision: ReviewDecision) -> tuple[str, bool]:
        """Validate, append, and apply; returns (new state, appended?).

        Resubmitting a decision identical to the current latest one is a
        no-op, which makes retries safe.
        """
        validate_decision(decision)
        if decision.sample_id not in self._samples:
            raise UnknownSampleError(f"unknown sample_id {decision.sample_id!r}")
        with self._lock:
            current = self._latest.get(decision.sample_id)
            if current is not None and _same_content(current, decision):
                return self.state_of(decision.sample_id), False
            append_decision(self._log_path, decision)
            self._remember(decision)
            return self.state_of(decision.sample_id), True

    def export_bytes(self) -> bytes:
        with self._lock:
            if not self._log_path.exists():
                return b""
            return self._log_path.read_bytes()

    def decisions(self) -> Iterable[ReviewDecision]:
        return read_decision_log(self._log_path)


def _same_content(a: ReviewDecision, b: ReviewDecision) -> bool:
    strip = lambda d: {k: v for k, v in decision_to_dict(d).items() if k != "timestamp"}
    return strip(a) == strip(b)
