from __future__ import annotations

import random

import pytest

from skyeye_forge.corpus import BuildSettings, ConversaRecipe
from skyeye_forge.domain import (
    CaptionPayload,
    ClassPayload,
    GroundingPayload,
    MediaRef,
    PhrasePayload,
    PixelBox,
    SourceRecord,
    TaskKind,
    VqaPayload,
)
from skyeye_forge.templating import load_default_pools

COLORS = ["gray", "white", "green", "red", "blue"]
OBJECTS = ["plane", "ship", "car", "building", "tank"]
PLACES = ["runway", "harbor", "road", "field", "apron"]
SCENES = ["airport", "harbor", "farmland", "residential", "forest"]
CATEGORIES = ["presence", "comparison", "rural_urban"]


def _img(dataset: str, name: str, width: int, height: int) -> MediaRef:
    return MediaRef(dataset_id=dataset, media_kind="image", path=name, width=width, height=height)


def make_fixture_records() -> list[SourceRecord]:
    """Deterministic 200-train-record corpus plus heldout val/test records.

    parkfield: 20 caption records (5 captions each) + 30 vqa records
    airbase:   25 grounding + 20 detection + 15 referring-expression records
    skyvid:    5 video caption records
    landuse:   85 scene classification records
    heldout:   5 parkfield val caption records + 3 airbase test grounding
    """
    rng = random.Random(1234)
    records: list[SourceRecord] = []

    def phrase() -> str:
        return f"a {rng.choice(COLORS)} {rng.choice(OBJECTS)} near the {rng.choice(PLACES)}"

    # parkfield captions: p000..p019, 5 captions each (640x480); the index
    # suffix keeps captions unique within a record so sample counts are exact
    for i in range(20):
        media = _img("parkfield", f"p{i:03d}.jpg", 640, 480)
        captions = tuple(f"{phrase()} in view {j}" for j in range(5))
        records.append(SourceRecord(media=media, kind=TaskKind.IMAGE_CAPTION, split="train",
                                    payload=CaptionPayload(captions=captions)))

    # parkfield vqa: 3 QA pairs on each of p000..p009
    for i in range(10):
        media = _img("parkfield", f"p{i:03d}.jpg", 640, 480)
        for q in range(3):
            records.append(SourceRecord(
                media=media, kind=TaskKind.VQA, split="train",
                payload=VqaPayload(
                    question=f"is there a {rng.choice(OBJECTS)} in zone {q}?",
                    answer=rng.choice(["yes", "no"]),
                    category=CATEGORIES[q % len(CATEGORIES)],
                ),
            ))

    def rand_box(width: int, height: int) -> PixelBox:
        x1 = rng.uniform(0, width * 0.6)
        y1 = rng.uniform(0, height * 0.6)
        x2 = rng.uniform(x1 + width * 0.15, width)
        y2 = rng.uniform(y1 + height * 0.15, height)
        return PixelBox(round(x1, 1), round(y1, 1), round(x2, 1), round(y2, 1))

    # airbase grounding: a000..a024 (800x600)
    for i in range(25):
        media = _img("airbase", f"a{i:03d}.jpg", 800, 600)
        records.append(SourceRecord(
            media=media, kind=TaskKind.VISUAL_GROUNDING, split="train",
            payload=GroundingPayload(expression=phrase(), box=rand_box(800, 600)),
        ))

    # airbase detection: a000..a019
    for i in range(20):
        media = _img("airbase", f"a{i:03d}.jpg", 800, 600)
        label = rng.choice(OBJECTS)
        boxes = tuple(rand_box(800, 600) for _ in range(rng.randint(1, 3)))
        records.append(SourceRecord(
            media=media, kind=TaskKind.PHRASE_GROUNDING, split="train",
            payload=PhrasePayload(phrase=label, boxes=boxes),
        ))

    # airbase referring expression generation: a000..a014
    for i in range(15):
        media = _img("airbase", f"a{i:03d}.jpg", 800, 600)
        records.append(SourceRecord(
            media=media, kind=TaskKind.REFERRING_EXPRESSION_GENERATION, split="train",
            payload=GroundingPayload(expression=phrase(), box=rand_box(800, 600)),
        ))

    # skyvid video captions: v000..v004 (1280x720, 3 frames each)
    for i in range(5):
        media = MediaRef(
            dataset_id="skyvid", media_kind="video", path=f"v{i:03d}.mp4",
            width=1280, height=720,
            frame_paths=tuple(f"v{i:03d}_f{j}.jpg" for j in range(3)),
        )
        records.append(SourceRecord(
            media=media, kind=TaskKind.VIDEO_CAPTION, split="train",
            payload=CaptionPayload(
                captions=(f"{phrase()} at the start", f"{phrase()} at the end")
            ),
        ))

    # landuse scene classification: c000..c084 (256x256)
    for i in range(85):
        media = _img("landuse", f"c{i:03d}.jpg", 256, 256)
        records.append(SourceRecord(
            media=media, kind=TaskKind.SCENE_CLASSIFICATION, split="train",
            payload=ClassPayload(class_label=SCENES[i % len(SCENES)]),
        ))

    assert len(records) == 200

    # heldout val/test records feed the leakage index only
    for i in range(5):
        media = _img("parkfield", f"pv{i:02d}.jpg", 640, 480)
        records.append(SourceRecord(media=media, kind=TaskKind.IMAGE_CAPTION, split="val",
                                    payload=CaptionPayload(captions=(phrase(),))))
    for i in range(3):
        media = _img("airbase", f"at{i:02d}.jpg", 800, 600)
        records.append(SourceRecord(
            media=media, kind=TaskKind.VISUAL_GROUNDING, split="test",
            payload=GroundingPayload(expression=phrase(), box=PixelBox(10, 10, 400, 300)),
        ))
    return records


FIXTURE_RECIPES = (
    ConversaRecipe(
        name="park-conversa",
        member_kinds=(TaskKind.IMAGE_CAPTION, TaskKind.VQA),
        source_dataset_ids=("parkfield",),
    ),
    ConversaRecipe(
        name="airbase-conversa",
        member_kinds=(
            TaskKind.VISUAL_GROUNDING,
            TaskKind.PHRASE_GROUNDING,
            TaskKind.REFERRING_EXPRESSION_GENERATION,
        ),
        source_dataset_ids=("airbase",),
    ),
)


@pytest.fixture(scope="session")
def fixture_records() -> list[SourceRecord]:
    return make_fixture_records()


@pytest.fixture(scope="session")
def fixture_recipes() -> tuple[ConversaRecipe, ...]:
    return FIXTURE_RECIPES


@pytest.fixture(scope="session")
def default_pools():
    return load_default_pools()


@pytest.fixture()
def settings() -> BuildSettings:
    return BuildSettings(seed=7)
