"""Chat-completion judge for caption evaluation.

Two fixed prompt variants compare a generated caption against one
reference caption: variant 1 asks whether the generation covers every
object and visual relation of the reference, variant 2 whether the
generation could serve as another caption outright. The judge model must
answer yes or no; anything else is recorded as unparseable (and scored as
no). The endpoint is any chat-completion-style HTTP JSON API; nothing
vendor-specific is assumed.

Every raw response lands in an append-only verdict log, and the summary
is a pure function of that log, so scores can be re-derived offline.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import httpx

from .errors import JudgeRunError, ValidationError
from .jsonl import dump_line, iter_jsonl
from .templating import derive_seed

import random

PROMPT_COVERAGE = (
    "There is one remote sensing image caption1 ‘{ground_truth}’, and there is "
    "another remote sensing image caption2 ‘{generated}’. Does remote sensing "
    "image caption2 cover all the objects and visual relations shown in remote sensing "
    "image caption1? Only answer yes or no without any explanation."
)

PROMPT_SUBSTITUTE = (
    "There is one remote sensing image caption1 ‘{ground_truth}’, and there is "
    "another remote sensing image caption2 ‘{generated}’. Based on remote sensing "
    "image caption1 and your understanding, do you think remote sensing image caption2 "
    "can be used as another caption? Only answer yes or no without any explanation."
)

_PROMPTS = {1: PROMPT_COVERAGE, 2: PROMPT_SUBSTITUTE}
VARIANTS = (1, 2)

_VERDICT_RE = re.compile(r"^[\s\"'‘’“”.,:;!()\[\]-]*([A-Za-z]+)")


@dataclass(frozen=True)
class JudgePrompt:
    variant: int
    ground_truth: str
    generated: str
    rendered: str


@dataclass(frozen=True)
class JudgeVerdict:
    item_id: str
    variant: int
    verdict: str  # yes | no | unparseable
    raw_response: str
    attempts: int


@dataclass(frozen=True)
class JudgeItem:
    item_id: str
    generated: str
    ground_truths: tuple[str, ...]


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    model: str
    temperature: float = 0.0
    max_retries: int = 3
    timeout_seconds: float = 30.0
    requests_per_second: float | None = None
    max_in_flight: int = 4
    api_key: str | None = None
    retry_backoff_seconds: float = 0.2


def build_prompt(
    variant: int, ground_truth: str, generated: str, template: str | None = None
) -> JudgePrompt:
    """Render one judge prompt; a user-supplied template (with the same
    two placeholders) may replace the built-in text for a variant."""
    if variant not in _PROMPTS:
        raise ValidationError(f"unknown judge prompt variant {variant}")
    if not ground_truth or not generated:
        raise ValidationError("judge prompts need non-empty captions on both sides")
    if template is not None:
        for placeholder in ("{ground_truth}", "{generated}"):
            if placeholder not in template:
                raise ValidationError(f"custom judge template lacks {placeholder}")
    else:
        template = _PROMPTS[variant]
    rendered = template.format(ground_truth=ground_truth, generated=generated)
    return JudgePrompt(
        variant=variant, ground_truth=ground_truth, generated=generated, rendered=rendered
    )


def parse_verdict(response: str) -> str:
    match = _VERDICT_RE.match(response or "")
    if match:
        token = match.group(1).lower()
        if token in ("yes", "no"):
            return token
    return "unparseable"


class _TokenBucket:
    def __init__(self, rate: float):
        self.rate = rate
        self.capacity = max(1.0, rate)
        self.tokens = self.capacity
        self.updated = time.monotonic()
        self.lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self.lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            time.sleep(wait)


def _post_chat(client: httpx.Client, config: EndpointConfig, prompt: str) -> str:
    headers = {"Content-Type": "application/json"}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    response = client.post(
        config.url,
        json={
            "model": config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": config.temperature,
        },
        headers=headers,
        timeout=config.timeout_seconds,
    )
    response.raise_for_status()
    body = response.json()
    return body["choices"][0]["message"]["content"]


def select_reference(item: JudgeItem, seed: int) -> str:
    """Seeded per-item choice of one ground-truth caption."""
    if not item.ground_truths:
        raise ValidationError(f"item {item.item_id} has no ground-truth captions")
    rng = random.Random(derive_seed(seed, "judge-ref", item.item_id))
    return rng.choice(list(item.ground_truths))


def judge_corpus(
    items: Sequence[JudgeItem],
    config: EndpointConfig,
    seed: int,
    log_path: str | Path,
    prompt_templates: Mapping[int, str] | None = None,
) -> dict:
    """Query both prompt variants for every item; returns the summary.

    Transport failures are retried up to ``max_retries`` times and then
    recorded as unparseable; the run aborts once more than half of the
    completed item-variant requests have failed at the transport level.
    """
    if not items:
        raise ValidationError("judge corpus is empty")
    log_path = Path(log_path)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    bucket = _TokenBucket(config.requests_per_second) if config.requests_per_second else None
    log_lock = threading.Lock()
    progress = {"done": 0, "transport_failures": 0}
    abort = threading.Event()

    with log_path.open("w", encoding="utf-8") as log:
        log.write(
            dump_line(
                {
                    "type": "meta",
                    "model": config.model,
                    "temperature": config.temperature,
                    "seed": seed,
                    "items": len(items),
                }
            )
            + "\n"
        )

        def run_one(task: tuple[JudgeItem, int]) -> None:
            item, variant = task
            if abort.is_set():
                return
            template = prompt_templates.get(variant) if prompt_templates else None
            prompt = build_prompt(variant, select_reference(item, seed), item.generated, template)
            verdict = "unparseable"
            raw = ""
            attempts = 0
            transport_failed = True
            with httpx.Client() as client:
                while attempts < config.max_retries:
                    attempts += 1
                    if bucket is not None:
                        bucket.acquire()
                    try:
                        raw = _post_chat(client, config, prompt.rendered)
                        transport_failed = False
                    except (httpx.HTTPError, KeyError, ValueError, json.JSONDecodeError) as exc:
                        raw = f"<transport error: {exc}>"
                        if attempts < config.max_retries:
                            time.sleep(config.retry_backoff_seconds * attempts)
                        continue
                    verdict = parse_verdict(raw)
                    if verdict != "unparseable":
                        break
            record = JudgeVerdict(
                item_id=item.item_id, variant=variant, verdict=verdict,
                raw_response=raw, attempts=attempts,
            )
            with log_lock:
                log.write(
                    dump_line(
                        {
                            "type": "verdict",
                            "item_id": record.item_id,
                            "variant": record.variant,
                            "verdict": record.verdict,
                            "raw_response": record.raw_response,
                            "attempts": record.attempts,
                        }
                    )
                    + "\n"
                )
                log.flush()
                progress["done"] += 1
                if transport_failed:
                    progress["transport_failures"] += 1
                if (
                    progress["done"] >= 8
                    and progress["transport_failures"] * 2 > progress["done"]
                ):
                    abort.set()

        tasks = [(item, variant) for item in items for variant in VARIANTS]
        if config.max_in_flight > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=config.max_in_flight) as executor:
                list(executor.map(run_one, tasks))
        else:
            for task in tasks:
                run_one(task)

    if abort.is_set():
        raise JudgeRunError(
            f"aborted: {progress['transport_failures']}/{progress['done']} "
            "item-variant requests failed at the transport level"
        )
    return aggregate_verdict_log(log_path)


def aggregate_verdicts(verdicts: Sequence[JudgeVerdict], meta: Mapping | None = None) -> dict:
    """Pure aggregation: unparseable counts as no, reported separately."""
    summary: dict = {"variants": {}}
    if meta:
        summary["model"] = meta.get("model")
        summary["temperature"] = meta.get("temperature")
        summary["seed"] = meta.get("seed")
    for variant in VARIANTS:
        rows = [v for v in verdicts if v.variant == variant]
        total = len(rows)
        yes = sum(1 for v in rows if v.verdict == "yes")
        unparseable = sum(1 for v in rows if v.verdict == "unparseable")
        summary["variants"][str(variant)] = {
            "items": total,
            "yes": yes,
            "accuracy": yes / total if total else 0.0,
            "unparseable": unparseable,
            "unparseable_rate": unparseable / total if total else 0.0,
        }
    return summary


def read_verdict_log(path: str | Path) -> tuple[dict, list[JudgeVerdict]]:
    meta: dict = {}
    verdicts = []
    for _, row in iter_jsonl(path):
        if row.get("type") == "meta":
            meta = row
        elif row.get("type") == "verdict":
            verdicts.append(
                JudgeVerdict(
                    item_id=row["item_id"],
                    variant=int(row["variant"]),
                    verdict=row["verdict"],
                    raw_response=row.get("raw_response", ""),
                    attempts=int(row.get("attempts", 1)),
                )
            )
    return meta, verdicts


def aggregate_verdict_log(path: str | Path) -> dict:
    """Recompute the summary from the persisted log; never re-queries."""
    meta, verdicts = read_verdict_log(path)
    return aggregate_verdicts(verdicts, meta)
