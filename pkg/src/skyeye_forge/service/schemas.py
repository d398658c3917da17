"""Pydantic request/response models for the review API."""

from __future__ import annotations

from pydantic import BaseModel, Field


class TurnModel(BaseModel):
    kind: str
    instruction: str
    answer: str
    identifier: str | None = None


class BoxModel(BaseModel):
    x1: float
    y1: float
    x2: float
    y2: float


class TurnDetail(TurnModel):
    boxes: list[BoxModel] = Field(default_factory=list)


class MediaModel(BaseModel):
    dataset_id: str
    media_kind: str
    path: str
    width: int
    height: int
    frame_paths: list[str] | None = None


class SampleSummary(BaseModel):
    sample_id: str
    dataset_id: str
    path: str
    kinds: list[str]
    source_recipe: str
    review_state: str
    turn_count: int
    first_instruction: str


class SampleListResponse(BaseModel):
    items: list[SampleSummary]
    next_cursor: str | None
    total_matched: int
    counts: dict[str, int]


class DecisionModel(BaseModel):
    verdict: str
    reviewer: str
    timestamp: str
    note: str | None = None


class SampleDetail(BaseModel):
    sample_id: str
    media: MediaModel
    media_url: str
    turns: list[TurnDetail]
    conversation_text: str
    stage_tags: list[str]
    source_recipe: str
    review_state: str
    edited_from: str | None = None
    latest_decision: DecisionModel | None = None


class DecisionRequest(BaseModel):
    sample_id: str
    verdict: str
    reviewer: str
    edited_turns: list[TurnModel] | None = None
    note: str | None = None


class DecisionResponse(BaseModel):
    sample_id: str
    review_state: str
    appended: bool


class HealthResponse(BaseModel):
    status: str
    samples: int


class ErrorBody(BaseModel):
    code: str
    message: str
    details: dict | list | None = None
