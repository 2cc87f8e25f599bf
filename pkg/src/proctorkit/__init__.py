"""Detection and risk analytics for online-exam proctoring telemetry.

The pipeline: ingest per-frame head observations and mouse-event logs,
flag suspected behaviors (face disappearance, abnormal head pose,
copy/paste, blur/focus), aggregate them into per-question and per-student
risk scores, and serve ranked results plus drill-down timelines over HTTP
for a proctor console. Detection provides references for human review; it
never issues verdicts.
"""

from .model import (
    BoundingBox,
    DetectionConfig,
    FaceDetection,
    FrameObservation,
    HeadPose,
    MouseEvent,
    NormalizedCounts,
    PoseStats,
    QuestionRiskProfile,
    QuestionSegment,
    RiskWeights,
    SessionRecord,
    SuspectedCase,
    TypeCounts,
)
from .ingest import (
    ExamManifest,
    IngestError,
    StudentEntry,
    filter_low_confidence,
    load_exam,
    load_exam_raw,
    load_manifest,
    parse_frame_observations,
    parse_mouse_events,
    prepare_session,
    sample_frames,
)
from .engine import (
    NormalizedSeries,
    classify_mouse_events,
    count_cases,
    detect_abnormal_poses,
    detect_all,
    detect_face_disappearance,
    normalize_signed,
    normalized_series,
    per_question_counts,
    pose_stats,
    z_scores,
)
from .analytics import (
    BehaviorTimeline,
    BoxStats,
    DistributionHistogram,
    DwellGrid,
    ExamAnalysis,
    PeerContext,
    StudentRiskOverview,
    analyze_exam,
    behavior_timeline,
    cohort_boxstats,
    distribution_histogram,
    dwell_grid,
    export_report,
    normalize_counts_per_question,
    peer_context,
    question_risk,
)
from .synth import BaselineProfile, CheatPlan, GroundTruth, generate_exam, generate_session

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "DetectionConfig",
    "FaceDetection",
    "FrameObservation",
    "HeadPose",
    "MouseEvent",
    "NormalizedCounts",
    "PoseStats",
    "QuestionRiskProfile",
    "QuestionSegment",
    "RiskWeights",
    "SessionRecord",
    "SuspectedCase",
    "TypeCounts",
    "ExamManifest",
    "IngestError",
    "StudentEntry",
    "filter_low_confidence",
    "load_exam",
    "load_exam_raw",
    "load_manifest",
    "parse_frame_observations",
    "parse_mouse_events",
    "prepare_session",
    "sample_frames",
    "NormalizedSeries",
    "classify_mouse_events",
    "count_cases",
    "detect_abnormal_poses",
    "detect_all",
    "detect_face_disappearance",
    "normalize_signed",
    "normalized_series",
    "per_question_counts",
    "pose_stats",
    "z_scores",
    "BehaviorTimeline",
    "BoxStats",
    "DistributionHistogram",
    "DwellGrid",
    "ExamAnalysis",
    "PeerContext",
    "StudentRiskOverview",
    "analyze_exam",
    "behavior_timeline",
    "cohort_boxstats",
    "distribution_histogram",
    "dwell_grid",
    "export_report",
    "normalize_counts_per_question",
    "peer_context",
    "question_risk",
    "BaselineProfile",
    "CheatPlan",
    "GroundTruth",
    "generate_exam",
    "generate_session",
]
