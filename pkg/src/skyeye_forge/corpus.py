"""Corpus assembly: single-task and multi-task conversation samples,
leakage guard, review application, stage mixing, and the manifest.

The build is deterministic end to end: per-sample seeds derive from the
global seed plus content, samples merge in sample_id order, and the
stage-2 stream draws through seeded per-source permutation cycles. Two
builds from the same records, config, seed, and decision log produce
byte-identical outputs.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .domain import (
    CaptionPayload,
    ClassPayload,
    ConversationTurn,
    CorpusManifest,
    GroundingPayload,
    InstructionSample,
    ManifestRow,
    MediaRef,
    PhrasePayload,
    SourceRecord,
    TaskIdentifier,
    TaskKind,
    VqaPayload,
    build_identifier_map,
    canonical_json,
    make_sample,
    manifest_to_dict,
    sample_to_dict,
    validate_record,
)
from .errors import CorpusBuildError, ValidationError
from .geotext import DEFAULT_BOX_DELIMITER, quantize_box, serialize_box, serialize_box_group
from .jsonl import write_jsonl
from .review import ReviewDecision, latest_decisions
from .templating import TemplatePool, TurnContent, derive_seed, render_instruction, validate_pool

CONVERSATION_TASK = "multi_task_conversation"


#: namespace for content-derived seeds (template choice, turn selection)
_CONTENT_SEED_NS = "content-v1"


@dataclass(frozen=True)
class BuildSettings:
    """Build knobs. ``seed`` only drives stage-2 stream sampling: sample
    content (template choice, conversation turn selection) is seeded from
    record content alone, so the emitted sample set is seed-invariant."""

    seed: int = 0
    identifiers_enabled: bool = True
    identifier_tokens: Mapping[TaskKind, str] | None = None
    box_delimiter: str = DEFAULT_BOX_DELIMITER
    jobs: int = 1

    def identifier_map(self) -> dict[TaskKind, TaskIdentifier]:
        return build_identifier_map(self.identifier_tokens)


@dataclass(frozen=True)
class ConversaRecipe:
    """How to join per-media annotations of several kinds into one sample."""

    name: str
    member_kinds: tuple[TaskKind, ...]
    source_dataset_ids: tuple[str, ...]
    turns_per_sample: tuple[int, int] | None = None

    def validate(self) -> None:
        if len(self.member_kinds) < 2:
            raise CorpusBuildError(f"recipe {self.name!r} needs >= 2 member kinds")
        if not self.source_dataset_ids:
            raise CorpusBuildError(f"recipe {self.name!r} names no source datasets")
        if self.turns_per_sample is not None:
            low, high = self.turns_per_sample
            if not (low <= len(self.member_kinds) <= high):
                raise CorpusBuildError(
                    f"recipe {self.name!r}: {len(self.member_kinds)} turns outside "
                    f"declared range {self.turns_per_sample}"
                )


@dataclass(frozen=True)
class StageMixConfig:
    stage: int
    single_task_weight: float
    conversation_weight: float
    seed: int
    epoch_length: int


@dataclass(frozen=True)
class LeakageViolation:
    dataset_id: str
    path: str
    sample_id: str

    def to_dict(self) -> dict:
        return {"dataset_id": self.dataset_id, "path": self.path, "sample_id": self.sample_id}


@dataclass(frozen=True)
class LeakageReport:
    violations: tuple[LeakageViolation, ...]

    @property
    def clean(self) -> bool:
        return not self.violations


@dataclass
class BuildCounters:
    candidates: int = 0
    emitted: int = 0
    split_rejected: list[dict] = field(default_factory=list)
    skipped_media: list[dict] = field(default_factory=list)
    duplicates: int = 0
    review_rejected: int = 0
    review_edited: int = 0
    review_unknown_ids: list[str] = field(default_factory=list)
    review_dropped_pending: int = 0
    leakage_violations: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "candidates": self.candidates,
            "emitted": self.emitted,
            "split_rejected": self.split_rejected,
            "skipped_media": self.skipped_media,
            "duplicates": self.duplicates,
            "review_rejected": self.review_rejected,
            "review_edited": self.review_edited,
            "review_unknown_ids": self.review_unknown_ids,
            "review_dropped_pending": self.review_dropped_pending,
            "leakage_violations": self.leakage_violations,
        }


# ---------------------------------------------------------------------------
# annotation units


@dataclass(frozen=True)
class AnnotationUnit:
    """One instruction-sized piece of a record: content + ready answer."""

    kind: TaskKind
    content: TurnContent
    answer: str
    unit_key: str  # stable discriminator for seeding


def annotation_units(record: SourceRecord, box_delimiter: str) -> list[AnnotationUnit]:
    media = record.media
    payload = record.payload
    if isinstance(payload, CaptionPayload):
        return [
            AnnotationUnit(record.kind, TurnContent(kind=record.kind), caption, f"cap{i}")
            for i, caption in enumerate(payload.captions)
        ]
    if isinstance(payload, VqaPayload):
        return [
            AnnotationUnit(
                record.kind,
                TurnContent(kind=record.kind, query=payload.question),
                payload.answer,
                f"vqa:{payload.question}",
            )
        ]
    if isinstance(payload, GroundingPayload):
        box_text = serialize_box(quantize_box(payload.box, media.width, media.height))
        if record.kind is TaskKind.REFERRING_EXPRESSION_GENERATION:
            content = TurnContent(kind=record.kind, query=box_text)
            answer = payload.expression
        else:
            content = TurnContent(kind=record.kind, expression=payload.expression)
            answer = box_text
        return [AnnotationUnit(record.kind, content, answer, f"gnd:{payload.expression}")]
    if isinstance(payload, PhrasePayload):
        boxes = [quantize_box(b, media.width, media.height) for b in payload.boxes]
        return [
            AnnotationUnit(
                record.kind,
                TurnContent(kind=record.kind, phrase=payload.phrase),
                serialize_box_group(boxes, box_delimiter),
                f"phr:{payload.phrase}",
            )
        ]
    if isinstance(payload, ClassPayload):
        return [
            AnnotationUnit(
                record.kind,
                TurnContent(kind=record.kind),
                payload.class_label,
                "cls",
            )
        ]
    raise CorpusBuildError(f"record payload {type(payload).__name__} has no unit expansion")


def _render_turn(
    unit: AnnotationUnit,
    media: MediaRef,
    pools: Mapping[TaskKind, TemplatePool],
    settings: BuildSettings,
    identifiers: Mapping[TaskKind, TaskIdentifier],
    salt: str,
) -> ConversationTurn:
    pool = pools.get(unit.kind)
    if pool is None:
        raise CorpusBuildError(f"no template pool configured for kind {unit.kind.value}")
    token = identifiers[unit.kind].token if settings.identifiers_enabled else None
    seed = derive_seed(
        0, _CONTENT_SEED_NS, media.dataset_id, media.path, unit.kind.value, unit.unit_key, salt
    )
    instruction = render_instruction(
        unit.content,
        pool,
        seed=seed,
        identifiers_enabled=settings.identifiers_enabled,
        identifier_token=token,
    )
    return ConversationTurn(
        kind=unit.kind,
        instruction_text=instruction,
        answer_text=unit.answer,
        identifier=token,
    )


# ---------------------------------------------------------------------------
# builders


def build_single_task(
    records: Sequence[SourceRecord],
    pools: Mapping[TaskKind, TemplatePool],
    settings: BuildSettings,
    counters: BuildCounters | None = None,
) -> list[InstructionSample]:
    """One 1-turn sample per annotation unit of each train-split record."""
    counters = counters if counters is not None else BuildCounters()
    identifiers = settings.identifier_map()
    for pool in pools.values():
        validate_pool(pool, settings.identifiers_enabled)

    def expand(record: SourceRecord) -> list[InstructionSample]:
        validate_record(record)
        samples = []
        for unit in annotation_units(record, settings.box_delimiter):
            turn = _render_turn(unit, record.media, pools, settings, identifiers, "single")
            samples.append(
                make_sample(
                    record.media,
                    [turn],
                    ("stage1", "stage2"),
                    f"single:{record.media.dataset_id}",
                )
            )
        return samples

    train_records = []
    for record in records:
        if record.split != "train":
            counters.split_rejected.append(
                {
                    "dataset_id": record.media.dataset_id,
                    "path": record.media.path,
                    "split": record.split,
                }
            )
            continue
        train_records.append(record)

    if settings.jobs > 1:
        with ThreadPoolExecutor(max_workers=settings.jobs) as pool_exec:
            expanded = list(pool_exec.map(expand, train_records))
    else:
        expanded = [expand(r) for r in train_records]
    counters.candidates += sum(len(group) for group in expanded)
    return [sample for group in expanded for sample in group]


def build_conversation(
    recipe: ConversaRecipe,
    records: Sequence[SourceRecord],
    pools: Mapping[TaskKind, TemplatePool],
    settings: BuildSettings,
    counters: BuildCounters | None = None,
) -> list[InstructionSample]:
    """One multi-turn sample per media item holding every member kind.

    Turn annotations are drawn per member kind by a seeded choice without
    replacement; media lacking any member kind are skipped and counted.
    """
    counters = counters if counters is not None else BuildCounters()
    recipe.validate()
    identifiers = settings.identifier_map()
    for pool in pools.values():
        validate_pool(pool, settings.identifiers_enabled)

    by_media: dict[tuple[str, str], dict] = {}
    for record in records:
        if record.media.dataset_id not in recipe.source_dataset_ids:
            continue
        if record.split != "train":
            continue
        validate_record(record)
        slot = by_media.setdefault(record.media.identity, {"media": record.media, "units": {}})
        if slot["media"] != record.media:
            raise CorpusBuildError(
                f"conflicting media metadata for {record.media.identity} in recipe {recipe.name!r}"
            )
        for unit in annotation_units(record, settings.box_delimiter):
            slot["units"].setdefault(unit.kind, []).append(unit)

    samples = []
    for identity in sorted(by_media):
        slot = by_media[identity]
        counters.candidates += 1
        units_by_kind = {kind: list(units) for kind, units in slot["units"].items()}
        needed: dict[TaskKind, int] = {}
        for kind in recipe.member_kinds:
            needed[kind] = needed.get(kind, 0) + 1
        missing = [
            kind.value
            for kind, count in needed.items()
            if len(units_by_kind.get(kind, [])) < count
        ]
        if missing:
            counters.skipped_media.append(
                {
                    "recipe": recipe.name,
                    "dataset_id": identity[0],
                    "path": identity[1],
                    "missing_kinds": sorted(missing),
                }
            )
            continue
        rng = random.Random(
            derive_seed(0, _CONTENT_SEED_NS, recipe.name, identity[0], identity[1])
        )
        turns = []
        for turn_index, kind in enumerate(recipe.member_kinds):
            pool_units = units_by_kind[kind]
            unit = pool_units.pop(rng.randrange(len(pool_units)))
            turns.append(
                _render_turn(
                    unit, slot["media"], pools, settings, identifiers, f"conv{turn_index}"
                )
            )
        samples.append(
            make_sample(slot["media"], turns, ("stage2",), f"conversa:{recipe.name}")
        )
    return samples


# ---------------------------------------------------------------------------
# leakage guard


def heldout_index(records: Iterable[SourceRecord]) -> set[tuple[str, str]]:
    """Media identities of every val/test record across all datasets."""
    return {r.media.identity for r in records if r.split in ("val", "test")}


def leakage_check(
    samples: Iterable[InstructionSample], heldout: set[tuple[str, str]]
) -> LeakageReport:
    violations = tuple(
        LeakageViolation(s.media.dataset_id, s.media.path, s.sample_id)
        for s in samples
        if s.media.identity in heldout
    )
    return LeakageReport(violations=violations)


# ---------------------------------------------------------------------------
# review application


def apply_review(
    samples: Sequence[InstructionSample],
    decisions: Sequence[ReviewDecision],
    require_accept: bool = False,
    counters: BuildCounters | None = None,
) -> list[InstructionSample]:
    """Drop rejected samples, swap in edits (re-validated, re-hashed),
    and honor ``require_accept`` (emit only accepted/edited)."""
    counters = counters if counters is not None else BuildCounters()
    latest = latest_decisions(decisions)
    known_ids = {s.sample_id for s in samples}
    counters.review_unknown_ids.extend(
        sorted(sample_id for sample_id in latest if sample_id not in known_ids)
    )

    result = []
    for sample in samples:
        decision = latest.get(sample.sample_id)
        if decision is None:
            if require_accept and sample.review_state not in ("accepted", "edited"):
                counters.review_dropped_pending += 1
                continue
            result.append(sample)
            continue
        if decision.verdict == "reject":
            counters.review_rejected += 1
            continue
        if decision.verdict == "accept":
            result.append(
                InstructionSample(
                    sample_id=sample.sample_id,
                    media=sample.media,
                    turns=sample.turns,
                    stage_tags=sample.stage_tags,
                    source_recipe=sample.source_recipe,
                    review_state="accepted",
                    edited_from=sample.edited_from,
                )
            )
            continue
        # edit: replace content, re-validate, re-hash, keep provenance
        if not decision.edited_turns:
            raise ValidationError(f"edit decision for {sample.sample_id} has no turns")
        edited = make_sample(
            sample.media,
            decision.edited_turns,
            sample.stage_tags,
            sample.source_recipe,
            review_state="edited",
            edited_from=sample.sample_id,
        )
        counters.review_edited += 1
        result.append(edited)
    return result


# ---------------------------------------------------------------------------
# stage mixing


def _permutation_cycle(items: Sequence[InstructionSample], rng: random.Random):
    while True:
        for index in rng.sample(range(len(items)), len(items)):
            yield items[index]


def mix_stream(
    config: StageMixConfig,
    single: Sequence[InstructionSample],
    conversa: Sequence[InstructionSample],
) -> list[InstructionSample]:
    """Seeded weighted interleave of the two sample pools.

    Each pool cycles through seeded permutations (no repeats within a
    cycle); the per-position pool choice is an independent weighted draw,
    so the empirical single-task fraction concentrates on the configured
    weight.
    """
    if config.stage != 2:
        raise CorpusBuildError("stream mixing is a stage-2 operation")
    weight_sum = config.single_task_weight + config.conversation_weight
    if abs(weight_sum - 1.0) > 1e-9:
        raise CorpusBuildError(f"stage-2 weights sum to {weight_sum}, expected 1.0")
    if config.single_task_weight > 0 and not single:
        raise CorpusBuildError("single-task weight > 0 but no single-task samples")
    if config.conversation_weight > 0 and not conversa:
        raise CorpusBuildError("conversation weight > 0 but no conversation samples")
    if config.epoch_length <= 0:
        raise CorpusBuildError("epoch_length must be positive")

    pick_rng = random.Random(derive_seed(config.seed, "mix", "pick"))
    single_iter = _permutation_cycle(single, random.Random(derive_seed(config.seed, "mix", "single")))
    conversa_iter = _permutation_cycle(
        conversa, random.Random(derive_seed(config.seed, "mix", "conversa"))
    )
    stream = []
    for _ in range(config.epoch_length):
        take_single = pick_rng.random() < config.single_task_weight
        stream.append(next(single_iter) if take_single else next(conversa_iter))
    return stream


# ---------------------------------------------------------------------------
# manifest


def emit_manifest(
    samples: Sequence[InstructionSample], build_config_hash: str, seed: int
) -> CorpusManifest:
    counts: dict[tuple[str, str], int] = {}
    for sample in samples:
        if sample.source_recipe.startswith("conversa:"):
            key = (sample.source_recipe.split(":", 1)[1], CONVERSATION_TASK)
        else:
            key = (sample.media.dataset_id, sample.turns[0].kind.value)
        counts[key] = counts.get(key, 0) + 1
    rows = tuple(
        ManifestRow(dataset_id=dataset, task=task, sample_count=count)
        for (dataset, task), count in sorted(counts.items())
    )
    return CorpusManifest(
        rows=rows,
        stage1_total=sum(1 for s in samples if "stage1" in s.stage_tags),
        stage2_total=sum(1 for s in samples if "stage2" in s.stage_tags),
        total=len(samples),
        build_config_hash=build_config_hash,
        seed=seed,
    )


def config_hash(config_document: Mapping) -> str:
    import hashlib

    return hashlib.sha256(canonical_json(config_document).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# full pipeline


@dataclass(frozen=True)
class BuildResult:
    samples: tuple[InstructionSample, ...]  # deduplicated set, sample_id order
    stage1: tuple[InstructionSample, ...]
    stage2_stream: tuple[InstructionSample, ...]
    manifest: CorpusManifest
    report: dict


def build_corpus(
    records: Sequence[SourceRecord],
    recipes: Sequence[ConversaRecipe],
    pools: Mapping[TaskKind, TemplatePool],
    settings: BuildSettings,
    stage_mix: StageMixConfig | None = None,
    decisions: Sequence[ReviewDecision] = (),
    require_accept: bool = False,
    strict: bool = True,
    build_config_hash: str = "",
) -> BuildResult:
    """records in, corpus out; fails loudly on leakage in strict mode."""
    counters = BuildCounters()
    train = [r for r in records if r.split == "train"]
    heldout = heldout_index(records)

    samples = build_single_task(train, pools, settings, counters)
    for recipe in recipes:
        samples.extend(build_conversation(recipe, train, pools, settings, counters))

    # deterministic merge + dedup
    by_id: dict[str, InstructionSample] = {}
    for sample in samples:
        if sample.sample_id in by_id:
            counters.duplicates += 1
            continue
        by_id[sample.sample_id] = sample
    merged = [by_id[sample_id] for sample_id in sorted(by_id)]

    if decisions or require_accept:
        merged = apply_review(merged, decisions, require_accept, counters)

    leakage = leakage_check(merged, heldout)
    counters.leakage_violations = [v.to_dict() for v in leakage.violations]
    if strict and (leakage.violations or counters.split_rejected):
        problems = [
            f"{v.dataset_id}/{v.path} (sample {v.sample_id})" for v in leakage.violations
        ] + [
            f"{r['dataset_id']}/{r['path']} ({r['split']}-split record in training input)"
            for r in counters.split_rejected
        ]
        raise CorpusBuildError("leakage guard failed: " + "; ".join(problems))

    stage1 = tuple(s for s in merged if "stage1" in s.stage_tags)
    stage2_single = [
        s for s in merged if "stage2" in s.stage_tags and not s.source_recipe.startswith("conversa:")
    ]
    stage2_conversa = [
        s for s in merged if "stage2" in s.stage_tags and s.source_recipe.startswith("conversa:")
    ]
    if stage_mix is None:
        conversa_weight = 0.2 if stage2_conversa else 0.0
        stage_mix = StageMixConfig(
            stage=2,
            single_task_weight=1.0 - conversa_weight,
            conversation_weight=conversa_weight,
            seed=settings.seed,
            epoch_length=0,
        )
    if stage_mix.epoch_length <= 0:
        # default epoch: one pass over the stage-2 sample set
        stage_mix = StageMixConfig(
            stage=stage_mix.stage,
            single_task_weight=stage_mix.single_task_weight,
            conversation_weight=stage_mix.conversation_weight,
            seed=stage_mix.seed,
            epoch_length=len(stage2_single) + len(stage2_conversa),
        )
    stream = tuple(mix_stream(stage_mix, stage2_single, stage2_conversa))

    counters.emitted = len(merged)
    manifest = emit_manifest(merged, build_config_hash, settings.seed)
    report = counters.to_dict()
    report["recipes"] = [r.name for r in recipes]
    report["stage2_stream_length"] = len(stream)
    # candidates = emitted + every accounted loss; silent shrinkage is a bug
    report["reconciliation"] = {
        "candidates": counters.candidates,
        "emitted": counters.emitted,
        "skipped": len(counters.skipped_media),
        "rejected": counters.duplicates
        + counters.review_rejected
        + counters.review_dropped_pending,
        "balanced": counters.candidates
        == counters.emitted
        + len(counters.skipped_media)
        + counters.duplicates
        + counters.review_rejected
        + counters.review_dropped_pending,
    }
    return BuildResult(
        samples=tuple(merged),
        stage1=stage1,
        stage2_stream=stream,
        manifest=manifest,
        report=report,
    )


def write_corpus(result: BuildResult, out_dir: str | Path) -> dict[str, Path]:
    """Write the five build artifacts; byte-stable for identical builds."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "samples": out / "corpus.samples.jsonl",
        "stage1": out / "corpus.stage1.jsonl",
        "stage2": out / "corpus.stage2.jsonl",
        "manifest": out / "manifest.json",
        "report": out / "build_report.json",
    }
    write_jsonl(paths["samples"], (sample_to_dict(s) for s in result.samples))
    write_jsonl(paths["stage1"], (sample_to_dict(s) for s in result.stage1))
    write_jsonl(paths["stage2"], (sample_to_dict(s) for s in result.stage2_stream))
    paths["manifest"].write_text(
        json.dumps(manifest_to_dict(result.manifest), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    paths["report"].write_text(
        json.dumps(result.report, indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return paths
