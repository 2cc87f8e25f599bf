"""Rule-based suspected-case detection.

Four indicator kinds are extracted per session:

* face disappearance: a sampled frame with no face above the confidence
  floor (the student left, covered the camera, or bowed out of view);
* abnormal head pose: a frame whose pitch or yaw z-score, computed against
  the student's own session statistics, exceeds the threshold;
* copy/paste: clipboard events, verified against blur/focus context;
* blur/focus: the exam page losing or regaining window focus.

All pose and position signals are min-max normalized to [-1, 1] per
student before any statistics, so students with different camera setups
are comparable. z-scoring an affinely transformed series yields the same
values, so normalization never changes which frames are flagged; it is
kept because every downstream view consumes normalized signals.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import (
    CASE_BLUR_FOCUS,
    CASE_COPY_PASTE,
    CASE_FACE,
    CASE_POSE,
    AbnormalPoseDetail,
    BlurFocusDetail,
    CopyPasteDetail,
    DetectionConfig,
    FaceDisappearanceDetail,
    PoseStats,
    QuestionSegment,
    SessionRecord,
    SuspectedCase,
    TypeCounts,
    question_for_timestamp,
)

SERIES_SOURCES = (
    "pitch",
    "yaw",
    "x_min",
    "y_min",
    "x_max",
    "y_max",
    "mouse_x",
    "mouse_y",
)


@dataclass(frozen=True, slots=True)
class NormalizedSeries:
    """A per-student normalized signal with its parallel timestamps."""

    source: str
    timestamps_ms: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.source not in SERIES_SOURCES:
            raise ValueError(f"unknown series source {self.source!r}")
        if len(self.timestamps_ms) != len(self.values):
            raise ValueError("timestamps and values must have equal length")


def normalize_signed(values: Sequence[float]) -> np.ndarray:
    """Min-max normalize to [-1, 1]: v -> 2 * (v - min) / (max - min) - 1.

    A constant series maps to all zeros: a signal that never moves carries
    no information about deviations, and zero is the neutral midpoint.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot normalize an empty series")
    if not np.isfinite(arr).all():
        raise ValueError("series contains non-finite values")
    lo = arr.min()
    hi = arr.max()
    if hi == lo:
        return np.zeros_like(arr)
    return 2.0 * (arr - lo) / (hi - lo) - 1.0


def pose_stats(pitch: Sequence[float], yaw: Sequence[float]) -> PoseStats:
    """Mean and population standard deviation (divide by N) per axis.

    The session is the whole population of that student's frames, hence
    ddof=0; this also makes the statistic exactly reproducible.
    """
    p = np.asarray(pitch, dtype=np.float64)
    y = np.asarray(yaw, dtype=np.float64)
    if p.size == 0 or y.size == 0:
        raise ValueError("pose series must be non-empty")
    return PoseStats(
        mean_pitch=float(p.mean()),
        mean_yaw=float(y.mean()),
        sd_pitch=float(p.std(ddof=0)),
        sd_yaw=float(y.std(ddof=0)),
    )


def z_scores(pitch: float, yaw: float, stats: PoseStats) -> tuple[float, float]:
    """Per-axis z-scores of one frame's normalized pose.

    An axis with zero standard deviation yields z = 0: a perfectly still
    head is the least suspicious series, and this avoids division by zero.
    """
    z_pitch = (pitch - stats.mean_pitch) / stats.sd_pitch if stats.sd_pitch > 0 else 0.0
    z_yaw = (yaw - stats.mean_yaw) / stats.sd_yaw if stats.sd_yaw > 0 else 0.0
    return z_pitch, z_yaw


def _posed_frames(session: SessionRecord):
    """(frame_indices, timestamps, pitch, yaw) arrays over frames with pose."""
    indices: list[int] = []
    timestamps: list[int] = []
    pitch: list[float] = []
    yaw: list[float] = []
    for obs in session.observations:
        pose = obs.pose
        if pose is not None:
            indices.append(obs.frame_index)
            timestamps.append(obs.timestamp_ms)
            pitch.append(pose.pitch)
            yaw.append(pose.yaw)
    return indices, timestamps, pitch, yaw


def detect_abnormal_poses(
    session: SessionRecord, config: DetectionConfig
) -> list[SuspectedCase]:
    """Flag every sampled frame whose |z_pitch| or |z_yaw| exceeds the
    threshold (strictly). One flagged frame is one case; runs of abnormal
    frames are not merged. Sessions with no posed frames yield no cases.

    The detail records which axis exceeded ('both' when both did) and the
    larger of the two absolute z-scores.
    """
    _, timestamps, pitch, yaw = _posed_frames(session)
    if not timestamps:
        return []
    norm_pitch = normalize_signed(pitch)
    norm_yaw = normalize_signed(yaw)
    stats = pose_stats(norm_pitch, norm_yaw)
    zp = (
        (norm_pitch - stats.mean_pitch) / stats.sd_pitch
        if stats.sd_pitch > 0
        else np.zeros_like(norm_pitch)
    )
    zy = (
        (norm_yaw - stats.mean_yaw) / stats.sd_yaw
        if stats.sd_yaw > 0
        else np.zeros_like(norm_yaw)
    )
    threshold = config.z_threshold
    abs_zp = np.abs(zp)
    abs_zy = np.abs(zy)
    flagged = np.flatnonzero((abs_zp > threshold) | (abs_zy > threshold))

    cases: list[SuspectedCase] = []
    segments = session.segments
    for i in flagged:
        p_hit = abs_zp[i] > threshold
        y_hit = abs_zy[i] > threshold
        axis = "both" if (p_hit and y_hit) else ("pitch" if p_hit else "yaw")
        ts = timestamps[i]
        cases.append(
            SuspectedCase(
                kind=CASE_POSE,
                timestamp_ms=ts,
                question_id=question_for_timestamp(segments, ts),
                detail=AbnormalPoseDetail(axis=axis, z=float(max(abs_zp[i], abs_zy[i]))),
            )
        )
    return cases


def detect_face_disappearance(session: SessionRecord) -> list[SuspectedCase]:
    """One case per sampled frame whose face is absent, whether it was never
    detected or cleared by the confidence floor at ingestion."""
    cases: list[SuspectedCase] = []
    segments = session.segments
    for obs in session.observations:
        if obs.face is None:
            cases.append(
                SuspectedCase(
                    kind=CASE_FACE,
                    timestamp_ms=obs.timestamp_ms,
                    question_id=question_for_timestamp(segments, obs.timestamp_ms),
                    detail=FaceDisappearanceDetail(frame_index=obs.frame_index),
                )
            )
    return cases


def classify_mouse_events(
    session: SessionRecord, config: DetectionConfig
) -> list[SuspectedCase]:
    """Turn copy/paste and blur/focus events into suspected cases.

    mousemove and mousewheel never produce cases. A copy or paste is marked
    off_page_context when any blur or focus lies within the configured
    window (inclusive on both sides) of it; copying and pasting with no
    page-focus change nearby usually happens on the exam page itself and
    is low risk.
    """
    window = config.context_window_ms
    segments = session.segments
    focus_ts = [e.timestamp_ms for e in session.mouse_events if e.kind in ("blur", "focus")]

    def near_focus_change(ts: int) -> bool:
        i = bisect_left(focus_ts, ts - window)
        return i < len(focus_ts) and focus_ts[i] <= ts + window

    cases: list[SuspectedCase] = []
    for ev in session.mouse_events:
        if ev.kind in ("copy", "paste"):
            cases.append(
                SuspectedCase(
                    kind=CASE_COPY_PASTE,
                    timestamp_ms=ev.timestamp_ms,
                    question_id=question_for_timestamp(segments, ev.timestamp_ms),
                    detail=CopyPasteDetail(
                        event=ev.kind, off_page_context=near_focus_change(ev.timestamp_ms)
                    ),
                )
            )
        elif ev.kind in ("blur", "focus"):
            cases.append(
                SuspectedCase(
                    kind=CASE_BLUR_FOCUS,
                    timestamp_ms=ev.timestamp_ms,
                    question_id=question_for_timestamp(segments, ev.timestamp_ms),
                    detail=BlurFocusDetail(event=ev.kind),
                )
            )
    return cases


def detect_all(session: SessionRecord, config: DetectionConfig) -> list[SuspectedCase]:
    """All suspected cases of a session, stably ordered by timestamp."""
    cases = detect_face_disappearance(session)
    cases += detect_abnormal_poses(session, config)
    cases += classify_mouse_events(session, config)
    cases.sort(key=lambda c: c.timestamp_ms)
    return cases


_KIND_SLOT = {CASE_FACE: 0, CASE_POSE: 1, CASE_COPY_PASTE: 2, CASE_BLUR_FOCUS: 3}


def count_cases(cases: Iterable[SuspectedCase]) -> TypeCounts:
    counts = [0, 0, 0, 0]
    for case in cases:
        counts[_KIND_SLOT[case.kind]] += 1
    return TypeCounts(*counts)


def per_question_counts(
    cases: Iterable[SuspectedCase], segments: Sequence[QuestionSegment]
) -> dict[str, TypeCounts]:
    """Per-question counts, zero-filled for every question with a segment.

    Cases outside all segments are excluded here but still belong to the
    session totals; count_cases over the full case list preserves them.
    """
    acc: dict[str, list[int]] = {}
    for seg in segments:
        acc.setdefault(seg.question_id, [0, 0, 0, 0])
    for case in cases:
        if case.question_id is not None and case.question_id in acc:
            acc[case.question_id][_KIND_SLOT[case.kind]] += 1
    return {qid: TypeCounts(*slots) for qid, slots in acc.items()}


def normalized_series(session: SessionRecord, source: str) -> NormalizedSeries:
    """The per-student normalized signal for one source.

    Pose sources cover frames with a pose, position sources cover frames
    with a face, and mouse sources cover positioned events. Normalization
    spans the whole session, never a single question, so restricting a
    series to a segment later keeps values comparable across questions.
    """
    timestamps: list[int] = []
    raw: list[float] = []
    if source in ("pitch", "yaw"):
        for obs in session.observations:
            if obs.pose is not None:
                timestamps.append(obs.timestamp_ms)
                raw.append(getattr(obs.pose, source))
    elif source in ("x_min", "y_min", "x_max", "y_max"):
        for obs in session.observations:
            if obs.face is not None:
                timestamps.append(obs.timestamp_ms)
                raw.append(getattr(obs.face.box, source))
    elif source in ("mouse_x", "mouse_y"):
        attr = "x" if source == "mouse_x" else "y"
        for ev in session.mouse_events:
            v: Optional[float] = getattr(ev, attr)
            if v is not None:
                timestamps.append(ev.timestamp_ms)
                raw.append(v)
    else:
        raise ValueError(f"unknown series source {source!r}")

    if not raw:
        return NormalizedSeries(source, (), ())
    values = normalize_signed(raw)
    return NormalizedSeries(source, tuple(timestamps), tuple(values.tolist()))
