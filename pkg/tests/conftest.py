from __future__ import annotations

import numpy as np
import pytest

from proctorkit.model import (
    BoundingBox,
    DetectionConfig,
    FaceDetection,
    FrameObservation,
    HeadPose,
    MouseEvent,
    QuestionSegment,
    SessionRecord,
    frame_timestamp_ms,
)
from proctorkit.synth import BaselineProfile, CheatPlan, generate_exam

# A shared face detection for frames where the box itself does not matter.
STD_FACE = FaceDetection(BoundingBox(220.0, 120.0, 420.0, 360.0), 0.99)


def obs(index: int, fps: float = 30.0, pitch=None, yaw=None, face: bool = True,
        confidence: float = 0.99, roll: float = 0.0) -> FrameObservation:
    """Observation builder: pose present iff pitch/yaw given and face True."""
    ts = frame_timestamp_ms(index, fps)
    if not face:
        return FrameObservation(index, ts, None, None)
    detection = STD_FACE if confidence == 0.99 else FaceDetection(STD_FACE.box, confidence)
    pose = HeadPose(pitch, yaw, roll) if pitch is not None else None
    return FrameObservation(index, ts, detection, pose)


def make_session(
    observations=(),
    mouse_events=(),
    segments=(),
    fps: float = 30.0,
    duration_ms: int = 600_000,
    time_limit_ms: int = 1_500_000,
    student_id: str = "s001",
    score_fraction: float = 0.5,
) -> SessionRecord:
    return SessionRecord(
        student_id=student_id,
        exam_id="test-exam",
        observations=tuple(observations),
        mouse_events=tuple(mouse_events),
        segments=tuple(segments),
        score_fraction=score_fraction,
        duration_ms=duration_ms,
        time_limit_ms=time_limit_ms,
        fps=fps,
    )


def pose_session(pitch, yaw, fps: float = 30.0, segments=(), **kwargs) -> SessionRecord:
    """Session whose frames 0..n-1 carry the given pose series."""
    observations = [obs(i, fps=fps, pitch=float(p), yaw=float(y)) for i, (p, y) in
                    enumerate(zip(pitch, yaw))]
    duration = observations[-1].timestamp_ms + 1 if observations else 1000
    kwargs.setdefault("duration_ms", max(duration, 1000))
    return make_session(observations, segments=segments, fps=fps, **kwargs)


def random_session(rng: np.random.Generator, max_frames: int = 1000,
                   max_events: int = 1000, student_id: str = "s001") -> SessionRecord:
    """A random raw session exercising gaps, missing faces/poses, all six
    event kinds and out-of-bounds coordinates. Independent of the synthetic
    generator on purpose."""
    fps = float(rng.choice([10.0, 24.0, 30.0]))
    width, height = 640, 480
    n_q = int(rng.integers(1, 5))
    segments = []
    cursor = int(rng.integers(0, 2000))
    for q in range(n_q):
        length = int(rng.integers(5_000, 40_000))
        segments.append(QuestionSegment(f"q{q + 1}", cursor, cursor + length, bool(rng.integers(2))))
        cursor += length + int(rng.integers(0, 3000))
    duration = cursor + int(rng.integers(0, 5000))

    max_index = max(int(duration * fps / 1000) - 1, 1)
    n_frames = int(rng.integers(1, max_frames + 1))
    indices = np.sort(rng.choice(max_index + 1, size=min(n_frames, max_index + 1), replace=False))
    observations = []
    for i in indices:
        ts = frame_timestamp_ms(int(i), fps)
        if rng.random() < 0.15:
            observations.append(FrameObservation(int(i), ts, None, None))
            continue
        x_min = float(rng.uniform(0, width - 60))
        y_min = float(rng.uniform(0, height - 60))
        box = BoundingBox(x_min, y_min, x_min + float(rng.uniform(30, 60)),
                          y_min + float(rng.uniform(30, 60)))
        face = FaceDetection(box, float(rng.uniform(0.5, 1.0)))
        pose = None
        if rng.random() < 0.9:
            pose = HeadPose(float(rng.uniform(-60, 60)), float(rng.uniform(-60, 60)),
                            float(rng.uniform(-20, 20)))
        observations.append(FrameObservation(int(i), ts, face, pose))

    kinds = ["mousemove", "mousewheel", "copy", "paste", "blur", "focus"]
    probs = [0.60, 0.10, 0.08, 0.08, 0.07, 0.07]
    n_events = int(rng.integers(0, max_events + 1))
    stamps = np.sort(rng.integers(0, duration + 1, n_events))
    events = []
    for ts in stamps:
        kind = str(rng.choice(kinds, p=probs))
        if kind in ("blur", "focus"):
            events.append(MouseEvent(int(ts), kind))
        else:
            # Occasionally off the page to exercise dwell-grid bounds.
            x = float(rng.uniform(-20, width + 20))
            y = float(rng.uniform(-20, height + 20))
            events.append(MouseEvent(int(ts), kind, x, y))

    return SessionRecord(
        student_id=student_id,
        exam_id="random-exam",
        observations=tuple(observations),
        mouse_events=tuple(events),
        segments=tuple(segments),
        score_fraction=float(rng.uniform(0, 1)),
        duration_ms=duration,
        time_limit_ms=duration + int(rng.integers(0, 60_000)),
        fps=fps,
    )


SMALL_PROFILE = BaselineProfile(question_duration_range_ms=(9_000, 16_000))

SMALL_PLANS = {
    "s001": [CheatPlan("copy_paste_roundtrip", "mc_2", 400, 6000)],
    "s002": [CheatPlan("leave_seat", "mc_3", 1000, 3000)],
    "s003": [
        CheatPlan("local_material_glance", "mc_1", 500, 4000, magnitude=6.0),
        CheatPlan("off_page_search", "mc_4", 300, 5000),
    ],
}


@pytest.fixture(scope="session")
def small_exam_dir(tmp_path_factory):
    """A 6-student, 4-question exam with planted behaviors, on disk."""
    out = tmp_path_factory.mktemp("small-exam")
    generate_exam(
        seed=20_240_501,
        n_students=6,
        n_questions=4,
        plans=SMALL_PLANS,
        out_dir=out,
        profile=SMALL_PROFILE,
        exam_id="exam-small",
    )
    return out


@pytest.fixture(scope="session")
def small_manifest(small_exam_dir):
    return small_exam_dir / "manifest.json"


@pytest.fixture()
def default_config() -> DetectionConfig:
    return DetectionConfig()
