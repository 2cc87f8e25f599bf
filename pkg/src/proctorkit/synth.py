"""Deterministic synthetic exam generator with ground-truth labels.

Baseline sessions draw head poses from a per-student Gaussian, which is
exactly the assumption behind the three-sigma default threshold, so the
false-positive rate of a clean session is analytically known. Cheating
behaviors are planted on top:

* local_material_glance: pose excursions of ``magnitude`` baseline
  standard deviations for the planted interval (head turned to notes).
  Excursions inflate the session's empirical standard deviation, so a
  5-sigma glance only clears a 3-sigma threshold reliably while glances
  stay a small fraction of the session (about 3 percent or less);
* leave_seat: the face disappears for the interval;
* off_page_search: a blur ... focus bracket (student left the page);
* copy_paste_roundtrip: copy, blur, focus, paste in order, i.e. copy the
  question, search elsewhere, paste the answer back.

Every planted case is returned as a label, so detector recall is testable
without any human annotation. Identical seeds produce byte-identical
sessions and files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .model import (
    BoundingBox,
    FaceDetection,
    FrameObservation,
    HeadPose,
    MouseEvent,
    QuestionSegment,
    SessionRecord,
    frame_timestamp_ms,
    mouse_event_to_dict,
    observation_to_dict,
)

PLAN_KINDS = frozenset(
    {"local_material_glance", "off_page_search", "copy_paste_roundtrip", "leave_seat"}
)

Seed = Union[int, np.random.SeedSequence]


class PlanError(ValueError):
    """Raised when a cheat plan does not fit its target segment."""


@dataclass(frozen=True, slots=True)
class CheatPlan:
    """One planted behavior.

    onset_ms is relative to the start of the target question's segment, so
    plans can be written without knowing the generated segment layout.
    magnitude is only meaningful for glances and is measured in baseline
    standard deviations, which makes tests invariant to the profile's
    variance choice.
    """

    kind: str
    question_id: str
    onset_ms: int
    duration_ms: int
    magnitude: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in PLAN_KINDS:
            raise PlanError(f"unknown plan kind {self.kind!r}")
        if self.onset_ms < 0 or self.duration_ms <= 0:
            raise PlanError(f"bad plan interval onset={self.onset_ms} duration={self.duration_ms}")
        if self.kind == "copy_paste_roundtrip" and self.duration_ms < 4000:
            raise PlanError("copy_paste_roundtrip needs at least 4000 ms")


@dataclass(frozen=True, slots=True)
class BaselineProfile:
    """Parameters of normal exam behavior."""

    fps: float = 30.0
    resolution: tuple[int, int] = (640, 480)
    time_limit_ms: int = 1_500_000
    question_duration_range_ms: tuple[int, int] = (45_000, 90_000)
    gap_range_ms: tuple[int, int] = (0, 1500)
    pitch_mean_range: tuple[float, float] = (-8.0, 8.0)
    yaw_mean_range: tuple[float, float] = (-8.0, 8.0)
    pose_sd_deg: float = 4.0
    roll_sd_deg: float = 2.0
    face_size_px: tuple[float, float] = (170.0, 210.0)
    center_jitter_px: float = 3.0
    confidence_range: tuple[float, float] = (0.96, 0.995)
    mousemove_hz: float = 12.0
    wheel_hz: float = 0.4
    # Glance frames use a tighter spread: a head held against material is
    # steadier than free scanning, and it keeps 5-sigma glances clearly
    # above a 3-sigma threshold after the excursions inflate the sd.
    glance_noise: float = 0.15


@dataclass(frozen=True, slots=True)
class GroundTruth:
    """Planted cases on the sampled-frame grid (for video indicators) and
    exact event timestamps (for mouse indicators)."""

    face_disappearance_ts: tuple[int, ...] = ()
    glance_frames: tuple[tuple[int, float], ...] = ()
    blur_focus: tuple[tuple[int, str], ...] = ()
    copy_paste: tuple[tuple[int, str], ...] = ()

    def to_dict(self) -> dict:
        return {
            "face_disappearance_ts": list(self.face_disappearance_ts),
            "glance_frames": [[ts, m] for ts, m in self.glance_frames],
            "blur_focus": [[ts, kind] for ts, kind in self.blur_focus],
            "copy_paste": [[ts, kind] for ts, kind in self.copy_paste],
        }


def default_question_ids(n_questions: int) -> list[str]:
    """mc_1..mc_10 then sa_1.. : ten multiple-choice plus short-answer."""
    n_mc = min(n_questions, 10)
    ids = [f"mc_{i}" for i in range(1, n_mc + 1)]
    ids += [f"sa_{i}" for i in range(1, n_questions - n_mc + 1)]
    return ids


def _layout_segments(
    rng: np.random.Generator,
    question_ids: Sequence[str],
    profile: BaselineProfile,
    score_fraction: float,
) -> list[QuestionSegment]:
    lo, hi = profile.question_duration_range_ms
    glo, ghi = profile.gap_range_ms
    segments = []
    cursor = 0
    for qid in question_ids:
        duration = int(rng.integers(lo, hi + 1))
        correct = bool(rng.random() < 0.3 + 0.7 * score_fraction)
        segments.append(QuestionSegment(qid, cursor, cursor + duration, correct))
        cursor += duration + int(rng.integers(glo, ghi + 1))
    return segments


def _plan_interval(
    plan: CheatPlan, segments: Sequence[QuestionSegment]
) -> tuple[int, int]:
    """Absolute [start, end) of a plan; errors if it leaves its segment."""
    seg = next((s for s in segments if s.question_id == plan.question_id), None)
    if seg is None:
        raise PlanError(f"plan targets unknown question {plan.question_id!r}")
    start = seg.start_ms + plan.onset_ms
    end = start + plan.duration_ms
    if end > seg.end_ms:
        raise PlanError(
            f"{plan.kind} on {plan.question_id}: [{plan.onset_ms}, "
            f"{plan.onset_ms + plan.duration_ms}) exceeds segment length {seg.duration_ms}"
        )
    return start, end


def generate_session(
    seed: Seed,
    profile: BaselineProfile = BaselineProfile(),
    plans: Sequence[CheatPlan] = (),
    question_ids: Optional[Sequence[str]] = None,
    student_id: str = "s001",
    exam_id: str = "synthetic-exam",
    stride: int = 5,
) -> tuple[SessionRecord, GroundTruth]:
    """Generate one raw (unsampled, unfiltered) session plus its labels.

    stride is the frame-sampling stride the detection pipeline will use;
    labels for video-based behaviors are expressed on that sampled grid.
    Planted intervals must not overlap each other.
    """
    rng = np.random.default_rng(seed)
    score_fraction = round(float(rng.uniform(0.35, 1.0)), 3)
    qids = list(question_ids) if question_ids is not None else default_question_ids(14)
    segments = _layout_segments(rng, qids, profile, score_fraction)
    duration_ms = segments[-1].end_ms
    if duration_ms > profile.time_limit_ms:
        raise PlanError(
            f"generated duration {duration_ms} exceeds time limit {profile.time_limit_ms}"
        )

    intervals = [(plan, *_plan_interval(plan, segments)) for plan in plans]
    spans = sorted((start, end) for _, start, end in intervals)
    for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
        if s2 < e1:
            raise PlanError("planted intervals overlap")

    fps = profile.fps
    n_frames = int(duration_ms * fps / 1000)
    while frame_timestamp_ms(n_frames, fps) > duration_ms:
        n_frames -= 1
    n_frames += 1
    frame_ts = np.array([frame_timestamp_ms(i, fps) for i in range(n_frames)])

    sd = profile.pose_sd_deg
    pitch_mean = float(rng.uniform(*profile.pitch_mean_range))
    yaw_mean = float(rng.uniform(*profile.yaw_mean_range))
    pitch = pitch_mean + rng.normal(0.0, sd, n_frames)
    yaw = yaw_mean + rng.normal(0.0, sd, n_frames)
    roll = rng.normal(0.0, profile.roll_sd_deg, n_frames)

    width, height = profile.resolution
    face_w, face_h = profile.face_size_px
    jitter = profile.center_jitter_px
    cx = np.clip(
        width / 2 + rng.normal(0.0, jitter, n_frames), face_w / 2 + 1, width - face_w / 2 - 1
    )
    cy = np.clip(
        height / 2 + rng.normal(0.0, jitter, n_frames), face_h / 2 + 1, height - face_h / 2 - 1
    )
    confidence = rng.uniform(*profile.confidence_range, n_frames)
    face_absent = np.zeros(n_frames, dtype=bool)

    labels_face: list[int] = []
    labels_glance: list[tuple[int, float]] = []
    labels_bf: list[tuple[int, str]] = []
    labels_cp: list[tuple[int, str]] = []
    plan_events: list[tuple[int, str, Optional[float], Optional[float]]] = []

    sampled = np.arange(n_frames) % stride == 0
    for plan, start, end in intervals:
        in_span = (frame_ts >= start) & (frame_ts < end)
        if plan.kind == "leave_seat":
            face_absent |= in_span
            for ts in frame_ts[in_span & sampled]:
                labels_face.append(int(ts))
        elif plan.kind == "local_material_glance":
            k = int(in_span.sum())
            pitch[in_span] = pitch_mean + plan.magnitude * sd + rng.normal(
                0.0, sd * profile.glance_noise, k
            )
            for ts in frame_ts[in_span & sampled]:
                labels_glance.append((int(ts), plan.magnitude))
        elif plan.kind == "off_page_search":
            plan_events.append((start, "blur", None, None))
            plan_events.append((end, "focus", None, None))
            labels_bf += [(start, "blur"), (end, "focus")]
        else:  # copy_paste_roundtrip
            px = round(float(rng.uniform(0, width)), 1)
            py = round(float(rng.uniform(0, height)), 1)
            blur_at, focus_at = start + 1000, end - 1000
            plan_events.append((start, "copy", px, py))
            plan_events.append((blur_at, "blur", None, None))
            plan_events.append((focus_at, "focus", None, None))
            plan_events.append((end, "paste", px, py))
            labels_cp += [(start, "copy"), (end, "paste")]
            labels_bf += [(blur_at, "blur"), (focus_at, "focus")]

    pitch = np.round(np.clip(pitch, -90, 90), 2).tolist()
    yaw = np.round(np.clip(yaw, -90, 90), 2).tolist()
    roll = np.round(np.clip(roll, -90, 90), 2).tolist()
    x_min = np.round(cx - face_w / 2, 1).tolist()
    x_max = np.round(cx + face_w / 2, 1).tolist()
    y_min = np.round(cy - face_h / 2, 1).tolist()
    y_max = np.round(cy + face_h / 2, 1).tolist()
    confidence = np.round(confidence, 3).tolist()

    observations = []
    for i in range(n_frames):
        ts = int(frame_ts[i])
        if face_absent[i]:
            observations.append(FrameObservation(i, ts, None, None))
        else:
            observations.append(
                FrameObservation(
                    i,
                    ts,
                    FaceDetection(
                        BoundingBox(x_min[i], y_min[i], x_max[i], y_max[i]), confidence[i]
                    ),
                    HeadPose(pitch[i], yaw[i], roll[i]),
                )
            )

    n_moves = int(duration_ms / 1000 * profile.mousemove_hz)
    move_ts = np.sort(rng.integers(0, duration_ms + 1, n_moves))
    move_x = np.round(np.clip(width / 2 + np.cumsum(rng.normal(0, 8.0, n_moves)), 0, width), 1)
    move_y = np.round(np.clip(height / 2 + np.cumsum(rng.normal(0, 6.0, n_moves)), 0, height), 1)
    n_wheel = int(duration_ms / 1000 * profile.wheel_hz)
    wheel_ts = np.sort(rng.integers(0, duration_ms + 1, n_wheel))
    wheel_x = np.round(rng.uniform(0, width, n_wheel), 1)
    wheel_y = np.round(rng.uniform(0, height, n_wheel), 1)

    raw_events: list[tuple[int, str, Optional[float], Optional[float]]] = []
    raw_events += [
        (int(move_ts[i]), "mousemove", float(move_x[i]), float(move_y[i]))
        for i in range(n_moves)
    ]
    raw_events += [
        (int(wheel_ts[i]), "mousewheel", float(wheel_x[i]), float(wheel_y[i]))
        for i in range(n_wheel)
    ]
    raw_events += plan_events
    raw_events.sort(key=lambda r: r[0])
    mouse_events = tuple(MouseEvent(ts, kind, x, y) for ts, kind, x, y in raw_events)

    session = SessionRecord(
        student_id=student_id,
        exam_id=exam_id,
        observations=tuple(observations),
        mouse_events=mouse_events,
        segments=tuple(segments),
        score_fraction=score_fraction,
        duration_ms=duration_ms,
        time_limit_ms=profile.time_limit_ms,
        fps=fps,
        resolution=profile.resolution,
    )
    truth = GroundTruth(
        face_disappearance_ts=tuple(labels_face),
        glance_frames=tuple(labels_glance),
        blur_focus=tuple(sorted(labels_bf)),
        copy_paste=tuple(sorted(labels_cp)),
    )
    return session, truth


def generate_exam(
    seed: int,
    n_students: int = 24,
    n_questions: int = 14,
    plans: Optional[Mapping[str, Sequence[CheatPlan]]] = None,
    out_dir: Union[str, Path] = "synthetic-exam",
    profile: BaselineProfile = BaselineProfile(),
    exam_id: str = "synthetic-exam",
    stride: int = 5,
) -> Path:
    """Write a full exam (observation/mouse files, manifest, labels) to disk.

    Returns the manifest path. plans maps student ids (s001, s002, ...) to
    their planted behaviors; students without an entry behave normally.
    Output is byte-identical for identical arguments.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    qids = default_question_ids(n_questions)
    student_ids = [f"s{i:03d}" for i in range(1, n_students + 1)]
    plans = dict(plans or {})
    unknown = set(plans) - set(student_ids)
    if unknown:
        raise PlanError(f"plans reference unknown students: {sorted(unknown)}")

    children = np.random.SeedSequence(seed).spawn(n_students)
    manifest_students = []
    labels: dict[str, dict] = {}
    for sid, child in zip(student_ids, children):
        session, truth = generate_session(
            child,
            profile=profile,
            plans=plans.get(sid, ()),
            question_ids=qids,
            student_id=sid,
            exam_id=exam_id,
            stride=stride,
        )
        obs_name = f"{sid}_observations.jsonl"
        mouse_name = f"{sid}_mouse.jsonl"
        with (out / obs_name).open("w", encoding="utf-8") as fh:
            for obs in session.observations:
                fh.write(json.dumps(observation_to_dict(obs), separators=(",", ":")))
                fh.write("\n")
        with (out / mouse_name).open("w", encoding="utf-8") as fh:
            for ev in session.mouse_events:
                fh.write(json.dumps(mouse_event_to_dict(ev), separators=(",", ":")))
                fh.write("\n")
        labels[sid] = truth.to_dict()
        manifest_students.append(
            {
                "student_id": sid,
                "observations_path": obs_name,
                "mouse_events_path": mouse_name,
                "segments": [
                    {
                        "question_id": s.question_id,
                        "start_ms": s.start_ms,
                        "end_ms": s.end_ms,
                        "correct": s.correct,
                    }
                    for s in session.segments
                ],
                "score_fraction": session.score_fraction,
                "duration_ms": session.duration_ms,
                "fps": session.fps,
                "resolution": list(session.resolution),
            }
        )

    manifest = {
        "exam_id": exam_id,
        "time_limit_ms": profile.time_limit_ms,
        "questions": qids,
        "students": manifest_students,
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    (out / "labels.json").write_text(json.dumps(labels, indent=2) + "\n", encoding="utf-8")
    return manifest_path
