"""HTTP API for the proctor console.

Read-mostly JSON over HTTP. Every response carries the config revision it
was computed under; a config update recomputes the whole exam off the
request path and swaps in the new snapshot atomically, so readers holding
an older revision keep seeing a self-consistent result set. Updates are
serialized per exam; reads take no locks.

Error bodies are ``{"error": {"code": ..., "message": ...}}`` with codes
not_found, invalid_config, ingest_failed and invalid_request.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Optional

from msgspec.structs import replace

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .analytics import (
    ExamAnalysis,
    analyze_exam,
    behavior_timeline,
    boxstats_to_dict,
    config_to_dict,
    counts_to_dict,
    dwell_grid,
    normalized_to_dict,
    overview_to_dict,
    peer_context,
    profile_to_dict,
)
from .ingest import IngestError, load_manifest, prepare_session
from .model import DetectionConfig, RiskWeights, SessionRecord, case_to_dict

DEFAULT_MAX_POINTS = 600


class ApiError(Exception):
    def __init__(self, code: str, message: str, status: int):
        super().__init__(message)
        self.code = code
        self.message = message
        self.status = status


def _not_found(what: str) -> ApiError:
    return ApiError("not_found", what, 404)


@dataclass(frozen=True)
class ExamSnapshot:
    """One immutable computation of an exam under one config revision."""

    revision: int
    created_at: float
    analysis: ExamAnalysis


class ExamState:
    """Mutable holder for one exam: raw sessions plus the current snapshot.

    Raw (unsampled) sessions are kept so stride/floor changes can re-derive
    the prepared sessions. The snapshot reference is replaced atomically;
    the lock only serializes writers.
    """

    def __init__(self, exam_id: str, raw_sessions: list[SessionRecord], questions: tuple[str, ...]):
        self.exam_id = exam_id
        self.raw_sessions = raw_sessions
        self.questions = questions
        self.snapshot: Optional[ExamSnapshot] = None
        self.config = DetectionConfig()
        self.lock = threading.Lock()

    def recompute(self, config: DetectionConfig, revision: int) -> ExamSnapshot:
        prepared = [prepare_session(s, config) for s in self.raw_sessions]
        analysis = analyze_exam(prepared, self.questions, config)
        return ExamSnapshot(revision=revision, created_at=time.time(), analysis=analysis)


def build_exam_state(manifest_path: str, config: DetectionConfig) -> ExamState:
    """Load a manifest into a fully computed ExamState (revision 1)."""
    from .ingest import load_exam_raw

    manifest = load_manifest(manifest_path)
    state = ExamState(manifest.exam_id, load_exam_raw(manifest), manifest.questions)
    state.config = config
    state.snapshot = state.recompute(config, revision=1)
    return state


def register_exam(app: FastAPI, manifest_path: str, config: DetectionConfig = DetectionConfig()) -> str:
    """Load a manifest and serve it under its own exam_id; returns the id."""
    state = build_exam_state(manifest_path, config)
    app.state.exams[state.exam_id] = state
    return state.exam_id


class WeightsPatch(BaseModel):
    w_f: Optional[float] = None
    w_h: Optional[float] = None
    w_c: Optional[float] = None
    w_b: Optional[float] = None


class ConfigPatch(BaseModel):
    z_threshold: Optional[float] = None
    confidence_floor: Optional[float] = None
    sample_stride: Optional[int] = None
    context_window_ms: Optional[int] = None
    weights: Optional[WeightsPatch] = None


class LoadRequest(BaseModel):
    manifest_path: str


def _merge_config(current: DetectionConfig, patch: ConfigPatch) -> DetectionConfig:
    try:
        weights = current.weights
        if patch.weights is not None:
            overrides = {
                k: v for k, v in patch.weights.model_dump().items() if v is not None
            }
            weights = replace(weights, **overrides)
        fields = {
            k: v
            for k, v in patch.model_dump(exclude={"weights"}).items()
            if v is not None
        }
        return replace(current, weights=weights, **fields)
    except ValueError as exc:
        raise ApiError("invalid_config", str(exc), 422) from exc


def create_app() -> FastAPI:
    app = FastAPI(title="proctorkit", docs_url=None, redoc_url=None)
    exams: dict[str, ExamState] = {}
    app.state.exams = exams

    @app.exception_handler(ApiError)
    async def handle_api_error(_request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"error": {"code": exc.code, "message": exc.message}},
        )

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(_request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"error": {"code": "invalid_request", "message": str(exc.errors())}},
        )

    def get_state(exam_id: str) -> ExamState:
        state = exams.get(exam_id)
        if state is None:
            raise _not_found(f"unknown exam {exam_id!r}")
        return state

    def get_snapshot(exam_id: str) -> ExamSnapshot:
        snapshot = get_state(exam_id).snapshot
        if snapshot is None:
            raise _not_found(f"exam {exam_id!r} has no computed snapshot")
        return snapshot

    def get_session(analysis: ExamAnalysis, student_id: str) -> SessionRecord:
        session = analysis.sessions.get(student_id)
        if session is None:
            raise _not_found(f"unknown student {student_id!r}")
        return session

    def question_segments(session: SessionRecord, question_id: str):
        segments = [s for s in session.segments if s.question_id == question_id]
        if not segments:
            raise _not_found(
                f"student {session.student_id} has no segment for question {question_id!r}"
            )
        return segments

    @app.post("/exams/{exam_id}/load")
    def load_exam_endpoint(exam_id: str, body: LoadRequest):
        try:
            state = build_exam_state(body.manifest_path, DetectionConfig())
            if state.exam_id != exam_id:
                raise IngestError(
                    f"manifest exam_id {state.exam_id!r} does not match path {exam_id!r}"
                )
        except IngestError as exc:
            raise ApiError("ingest_failed", str(exc), 400) from exc
        exams[exam_id] = state
        snapshot = state.snapshot
        return {
            "exam_id": exam_id,
            "revision": snapshot.revision,
            "students": len(snapshot.analysis.student_ids),
            "questions": len(snapshot.analysis.question_order),
        }

    @app.get("/exams")
    def list_exams():
        out = []
        for exam_id in sorted(exams):
            state = exams[exam_id]
            snapshot = state.snapshot
            out.append(
                {
                    "exam_id": exam_id,
                    "revision": snapshot.revision if snapshot else 0,
                    "created_at": snapshot.created_at if snapshot else None,
                    "students": len(state.raw_sessions),
                    "questions": len(state.questions),
                }
            )
        return {"exams": out}

    @app.get("/exams/{exam_id}/students")
    def student_list(exam_id: str, sort: str = "risk"):
        if sort not in ("risk", "student_id"):
            raise ApiError("invalid_request", f"unknown sort {sort!r}", 400)
        snapshot = get_snapshot(exam_id)
        analysis = snapshot.analysis
        overviews = analysis.overviews
        if sort == "student_id":
            overviews = tuple(sorted(overviews, key=lambda o: o.student_id))
        students = []
        for overview in overviews:
            entry = overview_to_dict(overview)
            entry["counts"] = counts_to_dict(analysis.session_counts[overview.student_id])
            entry["question_times_ms"] = [
                analysis.profiles[(overview.student_id, qid)].time_spent_ms
                for qid in analysis.question_order
            ]
            students.append(entry)
        return {
            "exam_id": exam_id,
            "revision": snapshot.revision,
            "sort": sort,
            "config": config_to_dict(analysis.config),
            "questions": list(analysis.question_order),
            "cohort_means": normalized_to_dict(analysis.cohort_means),
            "glyph_boxstats": {
                key: boxstats_to_dict(box) for key, box in analysis.glyph_boxstats.items()
            },
            "cohort_question_risk": [
                analysis.question_cohort[qid].mean_risk for qid in analysis.question_order
            ],
            "cohort_question_time_ms": [
                analysis.question_cohort[qid].mean_time_ms for qid in analysis.question_order
            ],
            "students": students,
        }

    @app.get("/exams/{exam_id}/students/{student_id}/questions")
    def question_list(exam_id: str, student_id: str):
        snapshot = get_snapshot(exam_id)
        analysis = snapshot.analysis
        get_session(analysis, student_id)
        questions = []
        for qid in analysis.question_order:
            profile = analysis.profiles[(student_id, qid)]
            cohort = analysis.question_cohort[qid]
            entry = profile_to_dict(profile)
            entry["cohort"] = {
                key: {**boxstats_to_dict(cohort.boxstats[key]), "mean": cohort.means[key]}
                for key in cohort.boxstats
            }
            entry["cohort_mean_risk"] = cohort.mean_risk
            questions.append(entry)
        return {
            "exam_id": exam_id,
            "revision": snapshot.revision,
            "student_id": student_id,
            "questions": questions,
        }

    @app.get("/exams/{exam_id}/students/{student_id}/questions/{question_id}/behavior")
    def behavior(
        exam_id: str,
        student_id: str,
        question_id: str,
        max_points: int = DEFAULT_MAX_POINTS,
    ):
        if max_points < 2:
            raise ApiError("invalid_request", f"max_points {max_points} must be >= 2", 400)
        snapshot = get_snapshot(exam_id)
        analysis = snapshot.analysis
        session = get_session(analysis, student_id)
        question_segments(session, question_id)
        bundle = behavior_timeline(
            session, analysis.cases[student_id], question_id, max_points
        )
        context = peer_context(analysis.sessions, student_id, question_id)

        def hist_dict(h):
            return {"source": h.source, "bin_count": h.bin_count, "frequencies": list(h.frequencies)}

        def side_dict(side):
            return {
                axis: {channel: hist_dict(h) for channel, h in channels.items()}
                for axis, channels in side.items()
            }

        return {
            "exam_id": exam_id,
            "revision": snapshot.revision,
            "student_id": student_id,
            "question_id": question_id,
            "segments": [
                {"start_ms": s.start_ms, "end_ms": s.end_ms, "correct": s.correct}
                for s in bundle.segments
            ],
            "video": {"path": session.video_path, "offset_ms": bundle.segments[0].start_ms},
            "series": {
                name: {
                    "timestamps_ms": list(series.timestamps_ms),
                    "values": list(series.values),
                }
                for name, series in bundle.series.items()
            },
            "cases": [case_to_dict(c) for c in bundle.cases],
            "peer_context": {
                "left": side_dict(context.left),
                "right": side_dict(context.right),
            },
        }

    @app.get("/exams/{exam_id}/students/{student_id}/questions/{question_id}/playback")
    def playback(exam_id: str, student_id: str, question_id: str, t_ms: int):
        snapshot = get_snapshot(exam_id)
        analysis = snapshot.analysis
        session = get_session(analysis, student_id)
        segments = question_segments(session, question_id)
        first = segments[0]
        span = segments[-1].end_ms - first.start_ms
        if not 0 <= t_ms <= span:
            raise ApiError(
                "invalid_request",
                f"t_ms {t_ms} outside the question span [0, {span}]",
                400,
            )
        cutoff = first.start_ms + t_ms
        events = [
            e
            for e in session.mouse_events
            if any(s.start_ms <= e.timestamp_ms < s.end_ms for s in segments)
        ]
        grid = dwell_grid(events, session.resolution, up_to_ms=cutoff)
        return {
            "exam_id": exam_id,
            "revision": snapshot.revision,
            "student_id": student_id,
            "question_id": question_id,
            "t_ms": t_ms,
            "video_offset_ms": cutoff,
            "grid": {
                "grid_w": grid.grid_w,
                "grid_h": grid.grid_h,
                "cell_w": grid.cell_w,
                "cell_h": grid.cell_h,
                "counts": [list(row) for row in grid.counts],
                "total": grid.total,
            },
        }

    @app.put("/exams/{exam_id}/config")
    def update_config(exam_id: str, patch: ConfigPatch):
        state = get_state(exam_id)
        with state.lock:
            merged = _merge_config(state.config, patch)
            if merged == state.config and state.snapshot is not None:
                # Identical effective config: idempotent, no recompute.
                snapshot = state.snapshot
            else:
                revision = (state.snapshot.revision if state.snapshot else 0) + 1
                snapshot = state.recompute(merged, revision)
                state.config = merged
                state.snapshot = snapshot
        return {
            "exam_id": exam_id,
            "revision": snapshot.revision,
            "config": config_to_dict(state.config),
        }

    return app
