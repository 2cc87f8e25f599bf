"""Domain types shared by ingestion, detection, analytics and the service.

Every type validates its invariants at construction and is immutable
afterwards, so instances can be shared across threads without locking.
All timestamps are integer milliseconds from session start (not wall
clock), which keeps arithmetic exact and sessions relocatable.

The types are msgspec structs rather than dataclasses: sessions carry up
to a million frame records, and struct construction plus typed JSON
decoding keeps full-exam ingestion within its latency budget without
giving up eager validation.
"""

from __future__ import annotations

import math
from typing import Optional, Union

import msgspec
from msgspec import field

# The six DOM event kinds the capture plugin records.
MOUSE_KINDS = frozenset({"blur", "focus", "copy", "paste", "mousemove", "mousewheel"})
# Kinds that carry page coordinates; blur/focus fire on the window and have none.
POSITIONED_KINDS = frozenset({"copy", "paste", "mousemove", "mousewheel"})

# Suspected-case kinds, in canonical (f, h, c, b) order.
CASE_FACE = "face_disappearance"
CASE_POSE = "abnormal_head_pose"
CASE_COPY_PASTE = "copy_paste"
CASE_BLUR_FOCUS = "blur_focus"
CASE_KINDS = (CASE_FACE, CASE_POSE, CASE_COPY_PASTE, CASE_BLUR_FOCUS)

DEFAULT_FPS = 30.0
DEFAULT_RESOLUTION = (640, 480)


def frame_timestamp_ms(frame_index: int, fps: float) -> int:
    """Timestamp of a frame: round(frame_index * 1000 / fps), round-half-even."""
    return round(frame_index * 1000 / fps)


def check_box_values(x_min: float, y_min: float, x_max: float, y_max: float) -> None:
    """Shared box invariant, also enforced on wire records before any
    model object is materialized."""
    if not (x_min < x_max and y_min < y_max):
        raise ValueError(f"degenerate bounding box ({x_min}, {y_min}, {x_max}, {y_max})")
    if not (
        math.isfinite(x_min)
        and math.isfinite(y_min)
        and math.isfinite(x_max)
        and math.isfinite(y_max)
    ):
        raise ValueError("bounding box coordinates must be finite")


def check_confidence(confidence: float) -> None:
    if not (0.0 <= confidence <= 1.0):
        raise ValueError(f"confidence {confidence!r} outside [0, 1]")


class BoundingBox(msgspec.Struct, frozen=True, gc=False):
    """Face bounding box in video pixel coordinates, origin top-left.

    Containment within the session's video resolution is checked by
    SessionRecord, which knows the resolution.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        check_box_values(self.x_min, self.y_min, self.x_max, self.y_max)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min


class HeadPose(msgspec.Struct, frozen=True, gc=False):
    """Head rotation in degrees: pitch (vertical), yaw (horizontal), roll (tilt).

    roll is stored for completeness but is never used by detection: tilting
    the head about the screen axis does not change where the student looks.
    """

    pitch: float
    yaw: float
    roll: float

    def __post_init__(self) -> None:
        # Chained range checks also reject NaN and infinities.
        if not (
            -180.0 <= self.pitch <= 180.0
            and -180.0 <= self.yaw <= 180.0
            and -180.0 <= self.roll <= 180.0
        ):
            raise ValueError(
                f"head pose ({self.pitch}, {self.yaw}, {self.roll}) outside [-180, 180]"
            )


class FaceDetection(msgspec.Struct, frozen=True, gc=False):
    """A detected face: bounding box plus the detector's confidence score."""

    box: BoundingBox
    confidence: float

    def __post_init__(self) -> None:
        check_confidence(self.confidence)


class FrameObservation(msgspec.Struct, frozen=True, gc=False):
    """One sampled video frame: optional face detection and head pose.

    pose may only be present when a face was detected (pose estimation runs
    on detected faces); a face without pose is allowed because extractor
    variants may omit pose estimation.
    """

    frame_index: int
    timestamp_ms: int
    face: Optional[FaceDetection] = None
    pose: Optional[HeadPose] = None

    def __post_init__(self) -> None:
        if self.frame_index < 0:
            raise ValueError(f"frame_index {self.frame_index} must be >= 0")
        if self.pose is not None and self.face is None:
            raise ValueError(
                f"frame {self.frame_index}: pose present without a detected face"
            )


class MouseEvent(msgspec.Struct, frozen=True, gc=False):
    """One timestamped DOM interaction record.

    x/y are page pixel coordinates, present exactly for the positioned kinds
    (mousemove, mousewheel, copy, paste); blur and focus fire on the window
    and carry no coordinates. The wire name of timestamp_ms is ts_ms.
    """

    timestamp_ms: int = field(name="ts_ms")
    kind: str = "mousemove"
    x: Optional[float] = None
    y: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in MOUSE_KINDS:
            raise ValueError(f"unknown mouse event kind {self.kind!r}")
        has_coords = self.x is not None and self.y is not None
        if self.kind in POSITIONED_KINDS:
            if not has_coords:
                raise ValueError(f"{self.kind} event at t={self.timestamp_ms} lacks coordinates")
        elif self.x is not None or self.y is not None:
            raise ValueError(f"{self.kind} event at t={self.timestamp_ms} must not carry coordinates")
        if self.timestamp_ms < 0:
            raise ValueError(f"negative event timestamp {self.timestamp_ms}")


class QuestionSegment(msgspec.Struct, frozen=True):
    """The time interval [start_ms, end_ms) a student spent on one question."""

    question_id: str
    start_ms: int
    end_ms: int
    correct: bool

    def __post_init__(self) -> None:
        if not self.start_ms < self.end_ms:
            raise ValueError(
                f"segment {self.question_id}: start {self.start_ms} >= end {self.end_ms}"
            )
        if self.start_ms < 0:
            raise ValueError(f"segment {self.question_id}: negative start_ms")

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms


def question_for_timestamp(
    segments: tuple[QuestionSegment, ...], timestamp_ms: int
) -> Optional[str]:
    """Map a timestamp to the question whose segment contains it, else None.

    Segments are closed-open intervals [start_ms, end_ms), so a timestamp
    exactly at a segment's start belongs to that segment.
    """
    for seg in segments:
        if seg.start_ms <= timestamp_ms < seg.end_ms:
            return seg.question_id
        if timestamp_ms < seg.start_ms:
            break
    return None


class SessionRecord(msgspec.Struct, frozen=True):
    """A student's complete exam session after extraction.

    observations are sorted strictly by frame_index; mouse_events sorted
    (non-strictly) by timestamp; segments sorted and non-overlapping.
    """

    student_id: str
    exam_id: str
    observations: tuple[FrameObservation, ...]
    mouse_events: tuple[MouseEvent, ...]
    segments: tuple[QuestionSegment, ...]
    score_fraction: float
    duration_ms: int
    time_limit_ms: int
    fps: float = DEFAULT_FPS
    resolution: tuple[int, int] = DEFAULT_RESOLUTION
    video_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.fps <= 0 or not math.isfinite(self.fps):
            raise ValueError(f"fps {self.fps!r} must be positive")
        width, height = self.resolution
        if width <= 0 or height <= 0:
            raise ValueError(f"resolution {self.resolution!r} must be positive")
        if not 0.0 <= self.score_fraction <= 1.0:
            raise ValueError(f"score_fraction {self.score_fraction!r} outside [0, 1]")
        if self.duration_ms > self.time_limit_ms:
            raise ValueError(
                f"duration {self.duration_ms} exceeds time limit {self.time_limit_ms}"
            )
        if self.duration_ms < 0:
            raise ValueError("negative duration_ms")

        fps = self.fps
        prev_index = -1
        for obs in self.observations:
            index = obs.frame_index
            if index <= prev_index:
                raise ValueError(f"observations not strictly increasing at frame {index}")
            prev_index = index
            if obs.timestamp_ms != round(index * 1000 / fps):
                raise ValueError(
                    f"frame {index}: timestamp {obs.timestamp_ms} != "
                    f"round(index * 1000 / fps) = {round(index * 1000 / fps)}"
                )
            face = obs.face
            if face is not None:
                box = face.box
                if box.x_min < 0 or box.y_min < 0 or box.x_max > width or box.y_max > height:
                    raise ValueError(f"frame {index}: bounding box outside {width}x{height}")

        prev_ts = -1
        for ev in self.mouse_events:
            if ev.timestamp_ms < prev_ts:
                raise ValueError(f"mouse events out of order at t={ev.timestamp_ms}")
            prev_ts = ev.timestamp_ms

        prev_end = -1
        for seg in self.segments:
            if seg.start_ms < prev_end:
                raise ValueError(f"segments overlap at question {seg.question_id}")
            prev_end = seg.end_ms

    def question_at(self, timestamp_ms: int) -> Optional[str]:
        return question_for_timestamp(self.segments, timestamp_ms)


# Kind-specific payloads of a suspected case.


class FaceDisappearanceDetail(msgspec.Struct, frozen=True, gc=False):
    frame_index: int


class AbnormalPoseDetail(msgspec.Struct, frozen=True, gc=False):
    """Which axis exceeded the threshold ('pitch', 'yaw' or 'both') and the
    larger of the two absolute z-scores."""

    axis: str
    z: float

    def __post_init__(self) -> None:
        if self.axis not in ("pitch", "yaw", "both"):
            raise ValueError(f"unknown pose axis {self.axis!r}")


class CopyPasteDetail(msgspec.Struct, frozen=True, gc=False):
    """event is 'copy' or 'paste'; off_page_context is True when a blur or
    focus event exists within the configured window around the event."""

    event: str
    off_page_context: bool


class BlurFocusDetail(msgspec.Struct, frozen=True, gc=False):
    event: str


CaseDetail = Union[
    FaceDisappearanceDetail, AbnormalPoseDetail, CopyPasteDetail, BlurFocusDetail
]

_DETAIL_TYPES = {
    CASE_FACE: FaceDisappearanceDetail,
    CASE_POSE: AbnormalPoseDetail,
    CASE_COPY_PASTE: CopyPasteDetail,
    CASE_BLUR_FOCUS: BlurFocusDetail,
}


class SuspectedCase(msgspec.Struct, frozen=True, gc=False):
    """One detected abnormal instance, attributed to a question segment.

    question_id is None exactly when the timestamp falls in no segment.
    """

    kind: str
    timestamp_ms: int
    question_id: Optional[str]
    detail: CaseDetail

    def __post_init__(self) -> None:
        expected = _DETAIL_TYPES.get(self.kind)
        if expected is None:
            raise ValueError(f"unknown case kind {self.kind!r}")
        if not isinstance(self.detail, expected):
            raise ValueError(
                f"{self.kind} case requires {expected.__name__}, got "
                f"{type(self.detail).__name__}"
            )


class TypeCounts(msgspec.Struct, frozen=True, gc=False):
    """Occurrence counts of the four suspected kinds, for a session or a
    (student, question) pair."""

    n_f: int = 0
    n_h: int = 0
    n_c: int = 0
    n_b: int = 0

    def __post_init__(self) -> None:
        if min(self.n_f, self.n_h, self.n_c, self.n_b) < 0:
            raise ValueError("counts must be non-negative")

    def __add__(self, other: "TypeCounts") -> "TypeCounts":
        return TypeCounts(
            self.n_f + other.n_f,
            self.n_h + other.n_h,
            self.n_c + other.n_c,
            self.n_b + other.n_b,
        )

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.n_f, self.n_h, self.n_c, self.n_b)


class RiskWeights(msgspec.Struct, frozen=True, gc=False):
    """Per-type weights for the overall risk score; all 1.0 by default."""

    w_f: float = 1.0
    w_h: float = 1.0
    w_c: float = 1.0
    w_b: float = 1.0

    def __post_init__(self) -> None:
        values = (self.w_f, self.w_h, self.w_c, self.w_b)
        for v in values:
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"weight {v!r} must be finite and >= 0")
        if max(values) == 0:
            raise ValueError("at least one weight must be positive")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.w_f, self.w_h, self.w_c, self.w_b)


class DetectionConfig(msgspec.Struct, frozen=True):
    """Tunable detection parameters.

    z_threshold follows the three-sigma rule by default. confidence_floor is
    a strict lower bound: detections at exactly the floor are dropped.
    context_window_ms is the symmetric window used to look for blur/focus
    around copy/paste events.
    """

    z_threshold: float = 3.0
    confidence_floor: float = 0.95
    sample_stride: int = 5
    context_window_ms: int = 30_000
    weights: RiskWeights = field(default_factory=RiskWeights)

    def __post_init__(self) -> None:
        if not math.isfinite(self.z_threshold) or self.z_threshold <= 0:
            raise ValueError(f"z_threshold {self.z_threshold!r} must be > 0")
        if not 0.0 <= self.confidence_floor <= 1.0:
            raise ValueError(f"confidence_floor {self.confidence_floor!r} outside [0, 1]")
        if self.sample_stride < 1:
            raise ValueError(f"sample_stride {self.sample_stride} must be >= 1")
        if self.context_window_ms <= 0:
            raise ValueError(f"context_window_ms {self.context_window_ms} must be > 0")


class PoseStats(msgspec.Struct, frozen=True, gc=False):
    """Mean and population standard deviation of a student's normalized
    pitch/yaw series."""

    mean_pitch: float
    mean_yaw: float
    sd_pitch: float
    sd_yaw: float

    def __post_init__(self) -> None:
        if self.sd_pitch < 0 or self.sd_yaw < 0:
            raise ValueError("standard deviations must be >= 0")


class NormalizedCounts(msgspec.Struct, frozen=True, gc=False):
    """Cross-student min-max normalized counts, one value in [0, 1] per kind."""

    f: float = 0.0
    h: float = 0.0
    c: float = 0.0
    b: float = 0.0

    def __post_init__(self) -> None:
        for v in (self.f, self.h, self.c, self.b):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"normalized count {v!r} outside [0, 1]")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.f, self.h, self.c, self.b)


class QuestionRiskProfile(msgspec.Struct, frozen=True):
    """Raw and normalized counts plus the weighted risk for one
    (student, question) pair."""

    student_id: str
    question_id: str
    raw: TypeCounts
    normalized: NormalizedCounts
    risk: float
    time_spent_ms: int
    correct: bool

    def __post_init__(self) -> None:
        if self.risk < 0:
            raise ValueError("risk must be >= 0")


# ---------------------------------------------------------------------------
# Serialization. Wire-format field names are stable; numbers keep full
# precision (repr round trip).

def _face_to_dict(face: Optional[FaceDetection]) -> Optional[dict]:
    if face is None:
        return None
    return {
        "x_min": face.box.x_min,
        "y_min": face.box.y_min,
        "x_max": face.box.x_max,
        "y_max": face.box.y_max,
        "confidence": face.confidence,
    }


def _pose_to_dict(pose: Optional[HeadPose]) -> Optional[dict]:
    if pose is None:
        return None
    return {"pitch": pose.pitch, "yaw": pose.yaw, "roll": pose.roll}


def observation_to_dict(obs: FrameObservation) -> dict:
    return {
        "frame_index": obs.frame_index,
        "face": _face_to_dict(obs.face),
        "pose": _pose_to_dict(obs.pose),
    }


def mouse_event_to_dict(ev: MouseEvent) -> dict:
    record: dict = {"ts_ms": ev.timestamp_ms, "kind": ev.kind}
    if ev.x is not None:
        record["x"] = ev.x
        record["y"] = ev.y
    return record


def case_to_dict(case: SuspectedCase) -> dict:
    detail: dict
    d = case.detail
    if isinstance(d, FaceDisappearanceDetail):
        detail = {"frame_index": d.frame_index}
    elif isinstance(d, AbnormalPoseDetail):
        detail = {"axis": d.axis, "z": d.z}
    elif isinstance(d, CopyPasteDetail):
        detail = {"event": d.event, "off_page_context": d.off_page_context}
    else:
        detail = {"event": d.event}
    return {
        "kind": case.kind,
        "timestamp_ms": case.timestamp_ms,
        "question_id": case.question_id,
        "detail": detail,
    }


def case_from_dict(data: dict) -> SuspectedCase:
    kind = data["kind"]
    raw = data["detail"]
    detail: CaseDetail
    if kind == CASE_FACE:
        detail = FaceDisappearanceDetail(raw["frame_index"])
    elif kind == CASE_POSE:
        detail = AbnormalPoseDetail(raw["axis"], raw["z"])
    elif kind == CASE_COPY_PASTE:
        detail = CopyPasteDetail(raw["event"], raw["off_page_context"])
    elif kind == CASE_BLUR_FOCUS:
        detail = BlurFocusDetail(raw["event"])
    else:
        raise ValueError(f"unknown case kind {kind!r}")
    return SuspectedCase(kind, data["timestamp_ms"], data["question_id"], detail)


def session_to_dict(session: SessionRecord) -> dict:
    return {
        "student_id": session.student_id,
        "exam_id": session.exam_id,
        "fps": session.fps,
        "resolution": list(session.resolution),
        "score_fraction": session.score_fraction,
        "duration_ms": session.duration_ms,
        "time_limit_ms": session.time_limit_ms,
        "video_path": session.video_path,
        "observations": [observation_to_dict(o) for o in session.observations],
        "mouse_events": [mouse_event_to_dict(e) for e in session.mouse_events],
        "segments": [
            {
                "question_id": s.question_id,
                "start_ms": s.start_ms,
                "end_ms": s.end_ms,
                "correct": s.correct,
            }
            for s in session.segments
        ],
    }


def observation_from_dict(data: dict, fps: float) -> FrameObservation:
    index = data["frame_index"]
    face_raw = data.get("face")
    pose_raw = data.get("pose")
    face = None
    if face_raw is not None:
        face = FaceDetection(
            BoundingBox(
                face_raw["x_min"], face_raw["y_min"], face_raw["x_max"], face_raw["y_max"]
            ),
            face_raw["confidence"],
        )
    pose = None
    if pose_raw is not None:
        pose = HeadPose(pose_raw["pitch"], pose_raw["yaw"], pose_raw["roll"])
    return FrameObservation(index, frame_timestamp_ms(index, fps), face, pose)


def mouse_event_from_dict(data: dict) -> MouseEvent:
    return MouseEvent(data["ts_ms"], data["kind"], data.get("x"), data.get("y"))


def session_from_dict(data: dict) -> SessionRecord:
    fps = data["fps"]
    return SessionRecord(
        student_id=data["student_id"],
        exam_id=data["exam_id"],
        observations=tuple(observation_from_dict(o, fps) for o in data["observations"]),
        mouse_events=tuple(mouse_event_from_dict(e) for e in data["mouse_events"]),
        segments=tuple(
            QuestionSegment(s["question_id"], s["start_ms"], s["end_ms"], s["correct"])
            for s in data["segments"]
        ),
        score_fraction=data["score_fraction"],
        duration_ms=data["duration_ms"],
        time_limit_ms=data["time_limit_ms"],
        fps=fps,
        resolution=tuple(data["resolution"]),
        video_path=data.get("video_path"),
    )
