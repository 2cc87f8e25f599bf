"""Risk scoring and the aggregate statistics behind every console view.

The overall risk of a student on a question is the weighted sum of the
four per-question, cross-student min-max normalized counts. The same
normalization (min of the cohort maps to 0, max to 1) is reused at session
level for the student-overview radar axes. Quartiles use linear
interpolation at p = (n - 1) * q so boxstats are reproducible across
implementations.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .engine import NormalizedSeries, count_cases, detect_all, normalized_series, per_question_counts
from .model import (
    DetectionConfig,
    MouseEvent,
    NormalizedCounts,
    QuestionRiskProfile,
    RiskWeights,
    SessionRecord,
    SuspectedCase,
    TypeCounts,
    case_to_dict,
)

TYPE_KEYS = ("f", "h", "c", "b")


@dataclass(frozen=True, slots=True)
class BoxStats:
    """1st, 2nd and 3rd quartiles of a cross-student value set."""

    q1: float
    q2: float
    q3: float

    def __post_init__(self) -> None:
        if not (self.q1 <= self.q2 <= self.q3):
            raise ValueError(f"quartiles out of order: {self.q1}, {self.q2}, {self.q3}")


@dataclass(frozen=True, slots=True)
class DistributionHistogram:
    """Relative frequencies of a normalized signal over [-1, 1].

    Equal-width bins; the last bin is closed on the right so a value of
    exactly 1 is counted. Frequencies sum to 1, or are all zero for an
    empty input.
    """

    source: str
    bin_count: int
    frequencies: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.frequencies) != self.bin_count:
            raise ValueError("frequency vector length != bin_count")
        total = sum(self.frequencies)
        if self.frequencies and min(self.frequencies) < 0:
            raise ValueError("negative frequency")
        if total != 0 and abs(total - 1.0) > 1e-9:
            raise ValueError(f"frequencies sum to {total}, expected 0 or 1")


@dataclass(frozen=True, slots=True)
class DwellGrid:
    """Spatial grid of mouse visit counts over the page, row-major by y."""

    grid_w: int
    grid_h: int
    cell_w: float
    cell_h: float
    counts: tuple[tuple[int, ...], ...]

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)


@dataclass(frozen=True, slots=True)
class StudentRiskOverview:
    """Session-level risk summary for one student: radar axes, total risk,
    time/score percentages and the per-question risk row."""

    student_id: str
    normalized: NormalizedCounts
    total_risk: float
    time_fraction: float
    score_fraction: float
    question_risks: tuple[float, ...]

    def __post_init__(self) -> None:
        if not 0.0 <= self.time_fraction <= 1.0:
            raise ValueError(f"time_fraction {self.time_fraction!r} outside [0, 1]")
        if not 0.0 <= self.score_fraction <= 1.0:
            raise ValueError(f"score_fraction {self.score_fraction!r} outside [0, 1]")


@dataclass(frozen=True, slots=True)
class TimelineSeries:
    source: str
    timestamps_ms: tuple[int, ...]
    values: tuple[float, ...]


@dataclass(frozen=True, slots=True)
class BehaviorTimeline:
    """Downsampled behavior bundle for one (student, question)."""

    student_id: str
    question_id: str
    segments: tuple
    series: Mapping[str, TimelineSeries]
    cases: tuple[SuspectedCase, ...]


@dataclass(frozen=True, slots=True)
class PeerContext:
    """Periphery-heatmap inputs: per axis (x, y), histograms of the lower
    position bound, the pose angle and the upper position bound.

    left compares against every other student on the same question; right
    compares against the same student on all other questions.
    """

    left: Mapping[str, Mapping[str, DistributionHistogram]]
    right: Mapping[str, Mapping[str, DistributionHistogram]]


@dataclass(frozen=True, slots=True)
class QuestionCohortStats:
    """Cross-student quartiles and means for one question."""

    boxstats: Mapping[str, BoxStats]
    means: Mapping[str, float]
    mean_risk: float
    mean_time_ms: float


@dataclass(frozen=True, slots=True)
class ExamAnalysis:
    """Everything one detection pass produces for an exam, immutable so a
    recompute can atomically replace it while readers hold the old one."""

    exam_id: str
    config: DetectionConfig
    question_order: tuple[str, ...]
    student_ids: tuple[str, ...]
    sessions: Mapping[str, SessionRecord]
    cases: Mapping[str, tuple[SuspectedCase, ...]]
    session_counts: Mapping[str, TypeCounts]
    profiles: Mapping[tuple[str, str], QuestionRiskProfile]
    overviews: tuple[StudentRiskOverview, ...]
    cohort_means: NormalizedCounts
    glyph_boxstats: Mapping[str, BoxStats]
    question_cohort: Mapping[str, QuestionCohortStats]


def _minmax_unit(values: Sequence[int]) -> list[float]:
    """Min-max to [0, 1]; an all-tie column maps to all zeros because a
    count every student shares carries no discriminative risk."""
    lo = min(values)
    hi = max(values)
    if hi == lo:
        return [0.0 for _ in values]
    return [(v - lo) / (hi - lo) for v in values]


def normalize_counts_per_question(
    counts: Mapping[tuple[str, str], TypeCounts]
) -> dict[tuple[str, str], NormalizedCounts]:
    """Cross-student min-max per question and per type independently.

    counts must cover every (student, question) pair of the exam,
    zero-filled where a student produced no cases.
    """
    if not counts:
        raise ValueError("no counts to normalize")
    by_question: dict[str, list[str]] = {}
    for student_id, question_id in counts:
        by_question.setdefault(question_id, []).append(student_id)

    out: dict[tuple[str, str], NormalizedCounts] = {}
    for question_id, students in by_question.items():
        students.sort()
        columns = []
        for slot in range(4):
            raw = [counts[(s, question_id)].as_tuple()[slot] for s in students]
            columns.append(_minmax_unit(raw))
        for i, s in enumerate(students):
            out[(s, question_id)] = NormalizedCounts(
                columns[0][i], columns[1][i], columns[2][i], columns[3][i]
            )
    return out


def question_risk(normalized: NormalizedCounts, weights: RiskWeights) -> float:
    """Weighted sum of the four normalized counts; the plain sum under
    default weights."""
    return (
        weights.w_f * normalized.f
        + weights.w_h * normalized.h
        + weights.w_c * normalized.c
        + weights.w_b * normalized.b
    )


def cohort_boxstats(values: Sequence[float]) -> BoxStats:
    """Quartiles by linear interpolation at p = (n - 1) * q."""
    if len(values) == 0:
        raise ValueError("cannot compute quartiles of an empty list")
    q1, q2, q3 = np.quantile(np.asarray(values, dtype=np.float64), (0.25, 0.5, 0.75))
    return BoxStats(float(q1), float(q2), float(q3))


def _bin_edges(bins: int) -> np.ndarray:
    return -1.0 + 2.0 * np.arange(bins + 1) / bins


def _histogram_frequencies(values: Sequence[float], bins: int) -> tuple[float, ...]:
    if bins < 1:
        raise ValueError(f"bins {bins} must be >= 1")
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return tuple(0.0 for _ in range(bins))
    edges = _bin_edges(bins)
    idx = np.searchsorted(edges, arr, side="right") - 1
    idx = np.clip(idx, 0, bins - 1)
    hist = np.bincount(idx, minlength=bins)
    return tuple((hist / arr.size).tolist())


def distribution_histogram(series: NormalizedSeries, bins: int = 20) -> DistributionHistogram:
    """Frequency histogram of a normalized series over [-1, 1]."""
    return DistributionHistogram(
        source=series.source,
        bin_count=bins,
        frequencies=_histogram_frequencies(series.values, bins),
    )


def dwell_grid(
    events: Sequence[MouseEvent],
    resolution: tuple[int, int],
    grid_dims: tuple[int, int] = (32, 24),
    up_to_ms: Optional[int] = None,
) -> DwellGrid:
    """Count positioned events per grid cell, cumulative up to up_to_ms
    (inclusive; None means all events).

    Cells are half-open ranges: an event lands in floor(x / cell_w),
    clamped so the page's right/bottom edge falls in the last cell. Events
    outside the page bounds are ignored. blur/focus contribute nothing.
    """
    width, height = resolution
    grid_w, grid_h = grid_dims
    if grid_w < 1 or grid_h < 1:
        raise ValueError(f"grid dims {grid_dims} must be positive")
    cell_w = width / grid_w
    cell_h = height / grid_h
    counts = np.zeros((grid_h, grid_w), dtype=np.int64)
    for ev in events:
        if ev.x is None:
            continue
        if up_to_ms is not None and ev.timestamp_ms > up_to_ms:
            continue
        x, y = ev.x, ev.y
        if not (0.0 <= x <= width and 0.0 <= y <= height):
            continue
        cx = min(int(math.floor(x / cell_w)), grid_w - 1)
        cy = min(int(math.floor(y / cell_h)), grid_h - 1)
        counts[cy, cx] += 1
    return DwellGrid(
        grid_w=grid_w,
        grid_h=grid_h,
        cell_w=cell_w,
        cell_h=cell_h,
        counts=tuple(tuple(int(c) for c in row) for row in counts),
    )


def _restrict(
    series: NormalizedSeries, segments: Iterable
) -> tuple[list[int], list[float]]:
    """Slice a time-sorted series to the union of the given segments."""
    ts_out: list[int] = []
    val_out: list[float] = []
    ts = series.timestamps_ms
    for seg in segments:
        lo = bisect_left(ts, seg.start_ms)
        hi = bisect_left(ts, seg.end_ms)
        ts_out.extend(ts[lo:hi])
        val_out.extend(series.values[lo:hi])
    return ts_out, val_out


def downsample_extremes(
    timestamps: Sequence[int], values: Sequence[float], max_points: int
) -> tuple[list[int], list[float]]:
    """Bucketed min/max-preserving downsampling.

    The series is split into max_points contiguous buckets and each bucket
    emits the positions of its minimum and maximum, so extremes (the
    analytically interesting points) always survive. Output length is at
    most 2 * max_points; series that already fit are returned verbatim.
    """
    if max_points < 2:
        raise ValueError(f"max_points {max_points} must be >= 2")
    n = len(values)
    if n <= max_points:
        return list(timestamps), list(values)
    arr = np.asarray(values, dtype=np.float64)
    keep: set[int] = set()
    for b in range(max_points):
        lo = n * b // max_points
        hi = n * (b + 1) // max_points
        if lo >= hi:
            continue
        bucket = arr[lo:hi]
        keep.add(lo + int(np.argmin(bucket)))
        keep.add(lo + int(np.argmax(bucket)))
    idx = sorted(keep)
    return [timestamps[i] for i in idx], [float(arr[i]) for i in idx]


TIMELINE_SOURCES = ("mouse_x", "mouse_y", "yaw", "pitch", "x_min", "x_max", "y_min", "y_max")


def behavior_timeline(
    session: SessionRecord,
    cases: Sequence[SuspectedCase],
    question_id: str,
    max_points: int = 600,
) -> BehaviorTimeline:
    """Downsampled series bundle for one question of one session.

    Series are normalized over the whole session, then restricted to the
    question's segments and downsampled; suspected cases are never dropped.
    """
    segments = tuple(s for s in session.segments if s.question_id == question_id)
    if not segments:
        raise ValueError(
            f"student {session.student_id} has no segment for question {question_id!r}"
        )
    series: dict[str, TimelineSeries] = {}
    for source in TIMELINE_SOURCES:
        full = normalized_series(session, source)
        ts, vals = _restrict(full, segments)
        ts, vals = downsample_extremes(ts, vals, max_points)
        series[source] = TimelineSeries(source, tuple(ts), tuple(vals))
    bundle_cases = tuple(c for c in cases if c.question_id == question_id)
    return BehaviorTimeline(
        student_id=session.student_id,
        question_id=question_id,
        segments=segments,
        series=series,
        cases=bundle_cases,
    )


_AXIS_CHANNELS = {
    "x": (("lower", "x_min"), ("pose", "yaw"), ("upper", "x_max")),
    "y": (("lower", "y_min"), ("pose", "pitch"), ("upper", "y_max")),
}


def peer_context(
    sessions: Mapping[str, SessionRecord],
    student_id: str,
    question_id: str,
    bins: int = 20,
) -> PeerContext:
    """Histogram context for the periphery heatmaps.

    left: every OTHER student's signals restricted to their own segment(s)
    of this question. right: THIS student's signals on all other questions.
    An exam with a single student yields all-zero left histograms; a
    single-question exam yields all-zero right histograms.
    """
    if student_id not in sessions:
        raise ValueError(f"unknown student {student_id!r}")
    known_questions = {
        seg.question_id for s in sessions.values() for seg in s.segments
    }
    if question_id not in known_questions:
        raise ValueError(f"unknown question {question_id!r}")

    def side(values_of) -> dict[str, dict[str, DistributionHistogram]]:
        out: dict[str, dict[str, DistributionHistogram]] = {}
        for axis, channels in _AXIS_CHANNELS.items():
            out[axis] = {}
            for channel, source in channels:
                values = values_of(source)
                out[axis][channel] = DistributionHistogram(
                    source=source,
                    bin_count=bins,
                    frequencies=_histogram_frequencies(values, bins),
                )
        return out

    def left_values(source: str) -> list[float]:
        collected: list[float] = []
        for sid in sorted(sessions):
            if sid == student_id:
                continue
            peer = sessions[sid]
            segs = [s for s in peer.segments if s.question_id == question_id]
            if not segs:
                continue
            _, vals = _restrict(normalized_series(peer, source), segs)
            collected.extend(vals)
        return collected

    me = sessions[student_id]
    other_segs = [s for s in me.segments if s.question_id != question_id]

    def right_values(source: str) -> list[float]:
        _, vals = _restrict(normalized_series(me, source), other_segs)
        return vals

    return PeerContext(left=side(left_values), right=side(right_values))


def analyze_exam(
    sessions: Sequence[SessionRecord],
    question_order: Sequence[str],
    config: DetectionConfig,
) -> ExamAnalysis:
    """Run detection over prepared (sampled, filtered) sessions and compute
    every aggregate the views serve. Pure function: rerunning with a new
    config builds a fresh analysis, never patches an old one."""
    if not sessions:
        raise ValueError("no sessions to analyze")
    ids = [s.student_id for s in sessions]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate student ids")
    order = tuple(question_order)
    known = set(order)
    for session in sessions:
        for seg in session.segments:
            if seg.question_id not in known:
                raise ValueError(
                    f"student {session.student_id}: segment question "
                    f"{seg.question_id!r} not in the exam question list"
                )

    by_id = {s.student_id: s for s in sessions}
    student_ids = tuple(sorted(by_id))
    weights = config.weights

    cases: dict[str, tuple[SuspectedCase, ...]] = {}
    session_counts: dict[str, TypeCounts] = {}
    pair_counts: dict[tuple[str, str], TypeCounts] = {}
    for sid in student_ids:
        session = by_id[sid]
        student_cases = tuple(detect_all(session, config))
        cases[sid] = student_cases
        session_counts[sid] = count_cases(student_cases)
        per_q = per_question_counts(student_cases, session.segments)
        for qid in order:
            pair_counts[(sid, qid)] = per_q.get(qid, TypeCounts())

    normalized_pairs = normalize_counts_per_question(pair_counts)

    profiles: dict[tuple[str, str], QuestionRiskProfile] = {}
    for sid in student_ids:
        session = by_id[sid]
        for qid in order:
            segs = [s for s in session.segments if s.question_id == qid]
            norm = normalized_pairs[(sid, qid)]
            profiles[(sid, qid)] = QuestionRiskProfile(
                student_id=sid,
                question_id=qid,
                raw=pair_counts[(sid, qid)],
                normalized=norm,
                risk=question_risk(norm, weights),
                time_spent_ms=sum(s.duration_ms for s in segs),
                correct=segs[-1].correct if segs else False,
            )

    # Session-level radar axes reuse the per-question rule: min-max across
    # students, per type.
    session_norm_cols = []
    for slot in range(4):
        raw = [session_counts[sid].as_tuple()[slot] for sid in student_ids]
        session_norm_cols.append(_minmax_unit(raw))
    session_normalized = {
        sid: NormalizedCounts(*(session_norm_cols[k][i] for k in range(4)))
        for i, sid in enumerate(student_ids)
    }

    overviews = []
    for sid in student_ids:
        session = by_id[sid]
        norm = session_normalized[sid]
        overviews.append(
            StudentRiskOverview(
                student_id=sid,
                normalized=norm,
                total_risk=question_risk(norm, weights),
                time_fraction=session.duration_ms / session.time_limit_ms,
                score_fraction=session.score_fraction,
                question_risks=tuple(profiles[(sid, qid)].risk for qid in order),
            )
        )
    overviews.sort(key=lambda o: (-o.total_risk, o.student_id))

    n = len(student_ids)
    cohort_means = NormalizedCounts(
        *(sum(session_norm_cols[k]) / n for k in range(4))
    )
    glyph_boxstats = {
        key: cohort_boxstats(session_norm_cols[k]) for k, key in enumerate(TYPE_KEYS)
    }

    question_cohort: dict[str, QuestionCohortStats] = {}
    for qid in order:
        boxes: dict[str, BoxStats] = {}
        means: dict[str, float] = {}
        for k, key in enumerate(TYPE_KEYS):
            column = [normalized_pairs[(sid, qid)].as_tuple()[k] for sid in student_ids]
            boxes[key] = cohort_boxstats(column)
            means[key] = sum(column) / n
        risks = [profiles[(sid, qid)].risk for sid in student_ids]
        times = [profiles[(sid, qid)].time_spent_ms for sid in student_ids]
        question_cohort[qid] = QuestionCohortStats(
            boxstats=boxes,
            means=means,
            mean_risk=sum(risks) / n,
            mean_time_ms=sum(times) / n,
        )

    return ExamAnalysis(
        exam_id=sessions[0].exam_id,
        config=config,
        question_order=order,
        student_ids=student_ids,
        sessions=by_id,
        cases=cases,
        session_counts=session_counts,
        profiles=profiles,
        overviews=overviews,
        cohort_means=cohort_means,
        glyph_boxstats=glyph_boxstats,
        question_cohort=question_cohort,
    )


# ---------------------------------------------------------------------------
# Report export: stable field names, full float precision.


def counts_to_dict(counts: TypeCounts) -> dict:
    return {"n_f": counts.n_f, "n_h": counts.n_h, "n_c": counts.n_c, "n_b": counts.n_b}


def normalized_to_dict(norm: NormalizedCounts) -> dict:
    return {"f": norm.f, "h": norm.h, "c": norm.c, "b": norm.b}


def weights_to_dict(weights: RiskWeights) -> dict:
    return {"w_f": weights.w_f, "w_h": weights.w_h, "w_c": weights.w_c, "w_b": weights.w_b}


def config_to_dict(config: DetectionConfig) -> dict:
    return {
        "z_threshold": config.z_threshold,
        "confidence_floor": config.confidence_floor,
        "sample_stride": config.sample_stride,
        "context_window_ms": config.context_window_ms,
        "weights": weights_to_dict(config.weights),
    }


def boxstats_to_dict(box: BoxStats) -> dict:
    return {"q1": box.q1, "q2": box.q2, "q3": box.q3}


def overview_to_dict(overview: StudentRiskOverview) -> dict:
    return {
        "student_id": overview.student_id,
        "normalized": normalized_to_dict(overview.normalized),
        "total_risk": overview.total_risk,
        "time_fraction": overview.time_fraction,
        "score_fraction": overview.score_fraction,
        "question_risks": list(overview.question_risks),
    }


def profile_to_dict(profile: QuestionRiskProfile) -> dict:
    return {
        "student_id": profile.student_id,
        "question_id": profile.question_id,
        "counts": counts_to_dict(profile.raw),
        "normalized": normalized_to_dict(profile.normalized),
        "risk": profile.risk,
        "time_spent_ms": profile.time_spent_ms,
        "correct": profile.correct,
    }


def export_report(analysis: ExamAnalysis) -> dict:
    """Full exam report: overviews, per-question profiles and case lists."""
    return {
        "exam_id": analysis.exam_id,
        "config": config_to_dict(analysis.config),
        "questions": list(analysis.question_order),
        "students": [overview_to_dict(o) for o in analysis.overviews],
        "cohort_means": normalized_to_dict(analysis.cohort_means),
        "profiles": [
            profile_to_dict(analysis.profiles[(sid, qid)])
            for sid in analysis.student_ids
            for qid in analysis.question_order
        ],
        "cases": {
            sid: [case_to_dict(c) for c in analysis.cases[sid]]
            for sid in analysis.student_ids
        },
    }
