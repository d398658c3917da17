"""FastAPI application for human-in-the-loop sample review.

Versioned JSON API under /v1, optional static review UI under /ui, media
served read-only from a configured root. All error bodies share the
``{code, message, details}`` shape. Authentication, when configured, is a
single shared bearer token; /v1/healthz stays open for probes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from fastapi import Depends, FastAPI, Header, HTTPException, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from ..domain import InstructionSample, TaskKind, turn_from_dict
from ..errors import ValidationError
from ..geotext import dequantize_box, parse_boxes
from ..review import ReviewDecision, utc_now_rfc3339
from ..templating import render_conversation
from .schemas import (
    BoxModel,
    DecisionModel,
    DecisionRequest,
    DecisionResponse,
    HealthResponse,
    MediaModel,
    SampleDetail,
    SampleListResponse,
    SampleSummary,
    TurnDetail,
)
from .store import BadCursorError, ListFilter, ReviewStore, UnknownSampleError

DEFAULT_MEDIA_PLACEHOLDER = "<Img><ImageHere></Img>"


@dataclass(frozen=True)
class ServiceSettings:
    auth_token: str | None = None
    media_root: str | Path | None = None
    ui_dir: str | Path | None = None
    media_placeholder: str = DEFAULT_MEDIA_PLACEHOLDER


def _error(status: int, code: str, message: str, details=None) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "message": message,
                                                     "details": details})


def _summary(sample: InstructionSample) -> SampleSummary:
    return SampleSummary(
        sample_id=sample.sample_id,
        dataset_id=sample.media.dataset_id,
        path=sample.media.path,
        kinds=sorted({t.kind.value for t in sample.turns}),
        source_recipe=sample.source_recipe,
        review_state=sample.review_state,
        turn_count=len(sample.turns),
        first_instruction=sample.turns[0].instruction_text,
    )


def create_app(store: ReviewStore, settings: ServiceSettings = ServiceSettings()) -> FastAPI:
    app = FastAPI(title="skyeye-forge review service", version="1")

    def require_auth(authorization: str | None = Header(default=None)) -> None:
        if settings.auth_token is None:
            return
        expected = f"Bearer {settings.auth_token}"
        if authorization != expected:
            raise _error(401, "unauthorized", "missing or invalid bearer token")

    @app.exception_handler(HTTPException)
    async def http_error_handler(request: Request, exc: HTTPException):
        detail = exc.detail
        if not isinstance(detail, dict) or "code" not in detail:
            detail = {"code": "error", "message": str(detail), "details": None}
        return JSONResponse(status_code=exc.status_code, content=detail)

    @app.exception_handler(RequestValidationError)
    async def request_validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={"code": "invalid_request", "message": "request body failed validation",
                     "details": exc.errors()},
        )

    @app.get("/v1/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        return HealthResponse(status="ok", samples=len(store))

    @app.get("/v1/samples", response_model=SampleListResponse,
             dependencies=[Depends(require_auth)])
    def list_samples(
        state: str | None = Query(default=None),
        kind: str | None = Query(default=None),
        dataset_id: str | None = Query(default=None),
        recipe: str | None = Query(default=None),
        cursor: str | None = Query(default=None),
        page_size: int = Query(default=50, ge=1, le=500),
    ) -> SampleListResponse:
        if state is not None and state not in ("pending", "accepted", "rejected", "edited"):
            raise _error(400, "bad_filter", f"unknown review state {state!r}")
        if kind is not None:
            try:
                TaskKind(kind)
            except ValueError:
                raise _error(400, "bad_filter", f"unknown task kind {kind!r}")
        try:
            page = store.list_samples(
                ListFilter(state=state, kind=kind, dataset_id=dataset_id, recipe=recipe),
                cursor=cursor,
                page_size=page_size,
            )
        except BadCursorError as exc:
            raise _error(400, "bad_cursor", str(exc))
        return SampleListResponse(
            items=[_summary(s) for s in page.items],
            next_cursor=page.next_cursor,
            total_matched=page.total_matched,
            counts=page.counts,
        )

    @app.get("/v1/samples/{sample_id}", response_model=SampleDetail,
             dependencies=[Depends(require_auth)])
    def get_sample(sample_id: str) -> SampleDetail:
        try:
            sample = store.effective(sample_id)
        except UnknownSampleError as exc:
            raise _error(404, "not_found", str(exc))
        turns = []
        for turn in sample.turns:
            boxes = [
                BoxModel(**dict(zip("x1 y1 x2 y2".split(), dequantize_box(b).as_tuple())))
                for b in parse_boxes(turn.answer_text).boxes
            ]
            turns.append(
                TurnDetail(
                    kind=turn.kind.value,
                    instruction=turn.instruction_text,
                    answer=turn.answer_text,
                    identifier=turn.identifier,
                    boxes=boxes,
                )
            )
        decision = store.latest_decision(sample_id)
        return SampleDetail(
            sample_id=sample.sample_id,
            media=MediaModel(
                dataset_id=sample.media.dataset_id,
                media_kind=sample.media.media_kind,
                path=sample.media.path,
                width=sample.media.width,
                height=sample.media.height,
                frame_paths=list(sample.media.frame_paths) if sample.media.frame_paths else None,
            ),
            media_url=f"/v1/media/{sample.media.dataset_id}/{sample.media.path}",
            turns=turns,
            conversation_text=render_conversation(
                sample.turns, settings.media_placeholder
            ).text,
            stage_tags=sorted(sample.stage_tags),
            source_recipe=sample.source_recipe,
            review_state=sample.review_state,
            edited_from=sample.edited_from,
            latest_decision=(
                DecisionModel(
                    verdict=decision.verdict,
                    reviewer=decision.reviewer,
                    timestamp=decision.timestamp,
                    note=decision.note,
                )
                if decision
                else None
            ),
        )

    @app.post("/v1/decisions", response_model=DecisionResponse,
              dependencies=[Depends(require_auth)])
    def submit_decision(body: DecisionRequest) -> DecisionResponse:
        edited_turns = None
        if body.edited_turns is not None:
            try:
                edited_turns = tuple(
                    turn_from_dict(t.model_dump(exclude_none=True)) for t in body.edited_turns
                )
            except ValidationError as exc:
                raise _error(422, "invalid_edit", str(exc))
        decision = ReviewDecision(
            sample_id=body.sample_id,
            verdict=body.verdict,
            reviewer=body.reviewer,
            timestamp=utc_now_rfc3339(),
            edited_turns=edited_turns,
            note=body.note,
        )
        try:
            state, appended = store.submit(decision)
        except UnknownSampleError as exc:
            raise _error(404, "not_found", str(exc))
        except ValidationError as exc:
            raise _error(422, "invalid_decision", str(exc))
        return DecisionResponse(sample_id=body.sample_id, review_state=state, appended=appended)

    @app.get("/v1/export", dependencies=[Depends(require_auth)])
    def export_decisions() -> Response:
        return Response(content=store.export_bytes(), media_type="application/x-ndjson")

    if settings.media_root is not None:
        media_root = Path(settings.media_root).resolve()

        @app.get("/v1/media/{dataset_id}/{media_path:path}",
                 dependencies=[Depends(require_auth)])
        def serve_media(dataset_id: str, media_path: str) -> FileResponse:
            candidate = (media_root / dataset_id / media_path).resolve()
            if not str(candidate).startswith(str(media_root) + "/"):
                raise _error(400, "bad_path", "path escapes the media root")
            if not candidate.is_file():
                raise _error(404, "not_found", f"no media at {dataset_id}/{media_path}")
            return FileResponse(candidate)

    ui_dir = Path(settings.ui_dir) if settings.ui_dir else None
    if ui_dir and ui_dir.is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
