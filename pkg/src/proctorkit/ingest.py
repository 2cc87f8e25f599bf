"""Wire-format parsing and exam assembly.

Three formats come in from the capture side:

* frame-observation files: one JSON record per line, one line per video
  frame, ``{"frame_index": int, "face": {...} | null, "pose": {...} | null}``
* mouse-event files: one JSON record per line,
  ``{"ts_ms": int, "kind": str, "x": number?, "y": number?}``
* the exam manifest: a single JSON document listing students, their file
  paths, question segments, scores and timing.

Loading an exam is all-or-nothing: cross-student normalization downstream
is ill-defined on partial cohorts, so one bad student aborts the load.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Optional, Union

import msgspec

from .model import (
    DEFAULT_FPS,
    DEFAULT_RESOLUTION,
    BoundingBox,
    DetectionConfig,
    FaceDetection,
    FrameObservation,
    HeadPose,
    MouseEvent,
    QuestionSegment,
    SessionRecord,
    check_box_values,
    check_confidence,
)

Stream = Union[IO[bytes], IO[str], Iterable[bytes], Iterable[str]]


class IngestError(ValueError):
    """Raised for malformed input files or manifest inconsistencies."""


class _WireFace(msgspec.Struct, frozen=True, gc=False):
    """Wire shape of a face record: flat box coordinates plus confidence.

    Validated during decode so that frames dropped by sampling still get
    their invariants checked without materializing model objects.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    confidence: float

    def __post_init__(self) -> None:
        check_box_values(self.x_min, self.y_min, self.x_max, self.y_max)
        check_confidence(self.confidence)


class _WireObservation(msgspec.Struct, frozen=True, gc=False):
    frame_index: int
    face: Optional[_WireFace] = None
    pose: Optional[HeadPose] = None  # wire shape matches the model type

    def __post_init__(self) -> None:
        if self.frame_index < 0:
            raise ValueError(f"frame_index {self.frame_index} must be >= 0")
        if self.pose is not None and self.face is None:
            raise ValueError(
                f"frame {self.frame_index}: pose present without a detected face"
            )


_OBS_DECODER = msgspec.json.Decoder(_WireObservation)
_MOUSE_DECODER = msgspec.json.Decoder(MouseEvent)  # ts_ms maps to timestamp_ms


def _read_all(stream: Stream) -> bytes:
    """Collect a byte buffer of newline-delimited records from a file
    object or an iterable of lines."""
    read = getattr(stream, "read", None)
    if read is not None:
        data = read()
        return data.encode("utf-8") if isinstance(data, str) else data
    parts = []
    for chunk in stream:
        if isinstance(chunk, str):
            chunk = chunk.encode("utf-8")
        parts.append(chunk if chunk.endswith(b"\n") else chunk + b"\n")
    return b"".join(parts)


def _raise_with_line(data: bytes, decoder: msgspec.json.Decoder, original: Exception):
    """Re-decode line by line to attribute a bulk decode failure to its line."""
    for lineno, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            decoder.decode(line)
        except (msgspec.DecodeError, ValueError) as exc:
            raise IngestError(f"line {lineno}: {exc}") from exc
    raise IngestError(str(original)) from original


def _decode_observations(data: bytes) -> list[_WireObservation]:
    """Decode and fully validate every line; duplicate indexes are errors."""
    try:
        wire = _OBS_DECODER.decode_lines(data)
    except (msgspec.DecodeError, ValueError) as exc:
        _raise_with_line(data, _OBS_DECODER, exc)
    seen: set[int] = set()
    for w in wire:
        index = w.frame_index
        if index in seen:
            raise IngestError(f"duplicate frame index {index}")
        seen.add(index)
    return wire


def _materialize(wire: Iterable[_WireObservation], fps: float) -> list[FrameObservation]:
    observations = []
    for w in wire:
        f = w.face
        face = (
            FaceDetection(BoundingBox(f.x_min, f.y_min, f.x_max, f.y_max), f.confidence)
            if f is not None
            else None
        )
        index = w.frame_index
        observations.append(FrameObservation(index, round(index * 1000 / fps), face, w.pose))
    observations.sort(key=lambda o: o.frame_index)
    return observations


def parse_frame_observations(stream: Stream, fps: float = DEFAULT_FPS) -> list[FrameObservation]:
    """Parse a frame-observation file into observations sorted by frame_index.

    Timestamps are derived from the frame index and fps, which comes from
    the session's manifest entry. Duplicate frame indexes, pose records
    without a face, and out-of-range confidences are errors; every error
    message carries the offending line number where one is known.
    """
    return _materialize(_decode_observations(_read_all(stream)), fps)


def _parse_sampled_filtered(
    data: bytes, fps: float, stride: int, floor: float
) -> list[FrameObservation]:
    """Fused fast path used by load_exam: every line is still decoded and
    validated, but only frames surviving the sampling stride are
    materialized, with the confidence filter applied in the same pass.
    Equivalent to parse -> sample_frames -> filter_low_confidence by
    construction (all three are per-frame and index-based); the test suite
    asserts the equivalence on random inputs.
    """
    wire = _decode_observations(data)
    observations = []
    for w in wire:
        index = w.frame_index
        if index % stride:
            continue
        f = w.face
        if f is not None and f.confidence > floor:
            face = FaceDetection(BoundingBox(f.x_min, f.y_min, f.x_max, f.y_max), f.confidence)
            pose = w.pose
        else:
            face = None
            pose = None
        observations.append(FrameObservation(index, round(index * 1000 / fps), face, pose))
    observations.sort(key=lambda o: o.frame_index)
    return observations


def parse_mouse_events(stream: Stream) -> list[MouseEvent]:
    """Parse a mouse-event file into events sorted by timestamp.

    The sort is stable, so simultaneous events keep their file order.
    """
    data = _read_all(stream)
    try:
        events = _MOUSE_DECODER.decode_lines(data)
    except (msgspec.DecodeError, ValueError) as exc:
        _raise_with_line(data, _MOUSE_DECODER, exc)
    events.sort(key=lambda e: e.timestamp_ms)
    return events


def sample_frames(
    observations: list[FrameObservation], stride: int
) -> list[FrameObservation]:
    """Keep exactly the observations whose frame_index is divisible by stride.

    The fixed offset 0 makes sampling reproducible regardless of which
    frames the extractor actually emitted.
    """
    if stride < 1:
        raise ValueError(f"stride {stride} must be >= 1")
    if stride == 1:
        return list(observations)
    return [obs for obs in observations if obs.frame_index % stride == 0]


def filter_low_confidence(
    observations: list[FrameObservation], floor: float
) -> list[FrameObservation]:
    """Clear faces whose confidence is not strictly above the floor.

    Frames are never removed: a cleared frame keeps its slot so it still
    counts as a face disappearance downstream. The comparison is strict,
    so a detection at exactly the floor is dropped.
    """
    if not 0.0 <= floor <= 1.0:
        raise ValueError(f"confidence floor {floor!r} outside [0, 1]")
    out: list[FrameObservation] = []
    for obs in observations:
        face = obs.face
        if face is not None and not face.confidence > floor:
            obs = FrameObservation(obs.frame_index, obs.timestamp_ms, None, None)
        out.append(obs)
    return out


@dataclass(frozen=True, slots=True)
class StudentEntry:
    """One student's row in the exam manifest."""

    student_id: str
    observations_path: str
    mouse_events_path: str
    segments: tuple[QuestionSegment, ...]
    score_fraction: float
    duration_ms: int
    fps: float = DEFAULT_FPS
    resolution: tuple[int, int] = DEFAULT_RESOLUTION
    video_path: Optional[str] = None


@dataclass(frozen=True, slots=True)
class ExamManifest:
    """Structured description of one exam: question order plus per-student
    file references. Relative paths are resolved against base_dir."""

    exam_id: str
    questions: tuple[str, ...]
    students: tuple[StudentEntry, ...]
    time_limit_ms: int
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self) -> None:
        if len(set(self.questions)) != len(self.questions):
            raise IngestError("duplicate question ids in manifest")
        ids = [s.student_id for s in self.students]
        if len(set(ids)) != len(ids):
            raise IngestError("duplicate student ids in manifest")
        known = set(self.questions)
        for student in self.students:
            for seg in student.segments:
                if seg.question_id not in known:
                    raise IngestError(
                        f"student {student.student_id}: segment cites unknown "
                        f"question {seg.question_id!r}"
                    )

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def manifest_from_dict(data: dict, base_dir: Path = Path(".")) -> ExamManifest:
    try:
        students = tuple(
            StudentEntry(
                student_id=s["student_id"],
                observations_path=s["observations_path"],
                mouse_events_path=s["mouse_events_path"],
                segments=tuple(
                    QuestionSegment(
                        seg["question_id"], seg["start_ms"], seg["end_ms"], seg["correct"]
                    )
                    for seg in s["segments"]
                ),
                score_fraction=s["score_fraction"],
                duration_ms=s["duration_ms"],
                fps=s.get("fps", DEFAULT_FPS),
                resolution=tuple(s.get("resolution", DEFAULT_RESOLUTION)),
                video_path=s.get("video_path"),
            )
            for s in data["students"]
        )
        return ExamManifest(
            exam_id=data["exam_id"],
            questions=tuple(data["questions"]),
            students=students,
            time_limit_ms=data["time_limit_ms"],
            base_dir=base_dir,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, IngestError):
            raise
        raise IngestError(f"malformed manifest: {exc}") from exc


def load_manifest(path: Union[str, Path]) -> ExamManifest:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise IngestError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IngestError(f"manifest {path} is not valid JSON: {exc}") from exc
    return manifest_from_dict(data, base_dir=path.parent)


def _load_student(
    manifest: ExamManifest, entry: StudentEntry, config: Optional[DetectionConfig] = None
) -> SessionRecord:
    obs_path = manifest.resolve(entry.observations_path)
    mouse_path = manifest.resolve(entry.mouse_events_path)
    try:
        with obs_path.open("rb") as fh:
            if config is None:
                observations = parse_frame_observations(fh, fps=entry.fps)
            else:
                observations = _parse_sampled_filtered(
                    fh.read(), entry.fps, config.sample_stride, config.confidence_floor
                )
        with mouse_path.open("rb") as fh:
            events = parse_mouse_events(fh)
    except OSError as exc:
        raise IngestError(f"student {entry.student_id}: cannot read {exc.filename}: {exc}") from exc
    except IngestError as exc:
        raise IngestError(f"student {entry.student_id}: {exc}") from exc
    try:
        return SessionRecord(
            student_id=entry.student_id,
            exam_id=manifest.exam_id,
            observations=tuple(observations),
            mouse_events=tuple(events),
            segments=entry.segments,
            score_fraction=entry.score_fraction,
            duration_ms=entry.duration_ms,
            time_limit_ms=manifest.time_limit_ms,
            fps=entry.fps,
            resolution=entry.resolution,
            video_path=entry.video_path,
        )
    except ValueError as exc:
        raise IngestError(f"student {entry.student_id}: {exc}") from exc


def prepare_session(session: SessionRecord, config: DetectionConfig) -> SessionRecord:
    """Apply frame sampling then confidence filtering to a raw session.

    Both passes are per-frame and index-based, so their order does not
    change the result; sampling first just does less work.
    """
    observations = filter_low_confidence(
        sample_frames(list(session.observations), config.sample_stride),
        config.confidence_floor,
    )
    return SessionRecord(
        student_id=session.student_id,
        exam_id=session.exam_id,
        observations=tuple(observations),
        mouse_events=session.mouse_events,
        segments=session.segments,
        score_fraction=session.score_fraction,
        duration_ms=session.duration_ms,
        time_limit_ms=session.time_limit_ms,
        fps=session.fps,
        resolution=session.resolution,
        video_path=session.video_path,
    )


def load_exam_raw(manifest: ExamManifest) -> list[SessionRecord]:
    """Load every student's session without sampling or filtering,
    ordered by student_id. Any per-student failure aborts the whole load."""
    entries = sorted(manifest.students, key=lambda s: s.student_id)
    return [_load_student(manifest, entry) for entry in entries]


def load_exam(manifest: ExamManifest, config: DetectionConfig) -> list[SessionRecord]:
    """Load, sample and confidence-filter every session in the manifest.

    Returns sessions ordered by student_id, ready for the detection engine.
    Sampling and filtering run inside the parse pass (see
    _parse_sampled_filtered); the result is identical to preparing each
    raw session with prepare_session.
    """
    entries = sorted(manifest.students, key=lambda s: s.student_id)
    return [_load_student(manifest, entry, config) for entry in entries]
