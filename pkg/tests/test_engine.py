from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from proctorkit.engine import (
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
from proctorkit.ingest import filter_low_confidence
from proctorkit.model import (
    DetectionConfig,
    MouseEvent,
    PoseStats,
    QuestionSegment,
    TypeCounts,
)

from conftest import make_session, obs, pose_session, random_session
from oracle import naive_detect, naive_normalize_signed


class TestNormalizeSigned:
    def test_endpoints_and_midpoint(self):
        assert normalize_signed([10, 20, 30]).tolist() == [-1.0, 0.0, 1.0]

    def test_constant_series_maps_to_zero(self):
        assert normalize_signed([7, 7, 7]).tolist() == [0.0, 0.0, 0.0]

    def test_affine_map_hand_computed(self):
        # Oracle: 2 * (v - 0) / 3 - 1 for v in (0, 1, 3).
        expected = [-1.0, -0.33333333333333337, 1.0]
        assert normalize_signed([0, 1, 3]).tolist() == expected

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            normalize_signed([])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            normalize_signed([1.0, float("nan")])

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=100))
    def test_output_within_bounds(self, values):
        out = normalize_signed(values)
        assert np.all(out >= -1.0) and np.all(out <= 1.0)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60))
    def test_matches_naive(self, values):
        assert normalize_signed(values).tolist() == naive_normalize_signed(values)


class TestPoseStats:
    def test_hand_computed_population_sd(self):
        stats = pose_stats([-0.5, 0.0, 0.5], [-0.5, 0.0, 0.5])
        assert stats.mean_pitch == 0.0
        assert abs(stats.sd_pitch - math.sqrt(1 / 6)) < 1e-15

    def test_constant_series(self):
        stats = pose_stats([0.0], [0.3, 0.3])
        assert stats.mean_yaw == pytest.approx(0.3)
        assert stats.sd_yaw == 0.0

    def test_symmetric_pair(self):
        stats = pose_stats([1.0, -1.0], [0.0, 0.0])
        assert stats.mean_pitch == 0.0 and stats.sd_pitch == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            pose_stats([], [1.0])


class TestZScores:
    def test_hand_computed(self):
        stats = PoseStats(0.0, 0.0, math.sqrt(1 / 6), 1.0)
        z_pitch, _ = z_scores(0.5, 0.0, stats)
        assert abs(z_pitch - 1.224744871391589) < 1e-12

    def test_value_at_mean_is_zero(self):
        stats = PoseStats(0.4, -0.2, 0.3, 0.3)
        assert z_scores(0.4, -0.2, stats) == (0.0, 0.0)

    def test_zero_sd_yields_zero(self):
        stats = PoseStats(0.0, 0.0, 0.0, 0.0)
        assert z_scores(123.0, -55.0, stats) == (0.0, 0.0)


class TestDetectAbnormalPoses:
    def test_planted_outlier_is_the_only_flag(self):
        # 10,000 Gaussian frames with one planted 5-sigma excursion; the
        # naive scan confirms the engine flags exactly the same frames.
        rng = np.random.default_rng(99)
        pitch = rng.normal(0.0, 4.0, 10_000)
        yaw = rng.normal(0.0, 4.0, 10_000)
        pitch[7811] = 5 * 4.0
        session = pose_session(np.clip(pitch, -40, 40), np.clip(yaw, -12, 12), fps=30.0)
        config = DetectionConfig(sample_stride=1)
        flagged = {c.timestamp_ms for c in detect_abnormal_poses(session, config)}
        naive = set(naive_detect(session, config)["pose_ts"])
        assert flagged == naive
        planted_ts = session.observations[7811].timestamp_ms
        assert planted_ts in flagged

    def test_constant_pose_yields_no_cases(self):
        session = pose_session([3.0] * 50, [1.0] * 50)
        assert detect_abnormal_poses(session, DetectionConfig()) == []

    def test_no_posed_frames_yields_no_cases(self):
        session = make_session([obs(i, face=False) for i in range(10)])
        assert detect_abnormal_poses(session, DetectionConfig()) == []

    def test_threshold_monotone(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            session = random_session(rng, max_frames=400, max_events=0)
            strict = {c.timestamp_ms for c in detect_abnormal_poses(session, DetectionConfig(z_threshold=3.0))}
            loose = {c.timestamp_ms for c in detect_abnormal_poses(session, DetectionConfig(z_threshold=2.0))}
            assert strict <= loose

    def test_detail_reports_offending_axis(self):
        pitch = [0.0] * 60 + [50.0]
        yaw = list(np.linspace(-5, 5, 61))
        session = pose_session(pitch, yaw)
        (case,) = detect_abnormal_poses(session, DetectionConfig())
        assert case.detail.axis == "pitch"
        assert case.detail.z > 3.0

    @settings(max_examples=40)
    @given(
        values=st.lists(st.floats(-80, 80), min_size=4, max_size=50),
        scale=st.floats(0.1, 1.5),
        shift=st.floats(-30, 30),
    )
    def test_affine_invariance(self, values, scale, shift):
        yaw = [0.0] * len(values)
        config = DetectionConfig()
        base = pose_session(values, yaw)
        base_stats = pose_stats(
            normalize_signed([o.pose.pitch for o in base.observations]),
            normalize_signed([o.pose.yaw for o in base.observations]),
        )
        # Keep clear of the threshold so float noise cannot flip a flag.
        if base_stats.sd_pitch > 0:
            z = np.abs(
                (normalize_signed(values) - base_stats.mean_pitch) / base_stats.sd_pitch
            )
            assume(np.all(np.abs(z - config.z_threshold) > 1e-6))
        transformed = pose_session([scale * v + shift for v in values], yaw)
        base_flags = {c.timestamp_ms for c in detect_abnormal_poses(base, config)}
        transformed_flags = {c.timestamp_ms for c in detect_abnormal_poses(transformed, config)}
        assert base_flags == transformed_flags


class TestDetectFaceDisappearance:
    def test_counts_missing_frames(self):
        frames = [obs(i * 5, face=(i * 5 not in (15, 20))) for i in range(10)]
        cases = detect_face_disappearance(make_session(frames))
        assert [c.detail.frame_index for c in cases] == [15, 20]

    def test_all_present_is_empty(self):
        frames = [obs(i) for i in range(10)]
        assert detect_face_disappearance(make_session(frames)) == []

    def test_cleared_low_confidence_counts_as_disappearance(self):
        frames = filter_low_confidence([obs(0, confidence=0.90)], 0.95)
        (case,) = detect_face_disappearance(make_session(frames))
        assert case.kind == "face_disappearance" and case.timestamp_ms == 0


class TestClassifyMouseEvents:
    def test_context_window_marks_both_directions(self):
        events = [
            MouseEvent(5_000, "copy", 10.0, 10.0),
            MouseEvent(7_000, "blur"),
            MouseEvent(61_000, "focus"),
            MouseEvent(61_500, "paste", 10.0, 10.0),
        ]
        session = make_session(mouse_events=events)
        cases = classify_mouse_events(session, DetectionConfig(context_window_ms=30_000))
        copy_paste = [c for c in cases if c.kind == "copy_paste"]
        assert [c.detail.off_page_context for c in copy_paste] == [True, True]

    def test_no_focus_change_means_on_page(self):
        events = [MouseEvent(100, "copy", 1.0, 1.0), MouseEvent(900, "paste", 1.0, 1.0)]
        cases = classify_mouse_events(make_session(mouse_events=events), DetectionConfig())
        assert [c.detail.off_page_context for c in cases] == [False, False]

    def test_blur_and_focus_counted_together(self):
        events = [MouseEvent(t, kind) for t, kind in
                  ((1, "blur"), (2, "focus"), (3, "blur"), (4, "focus"), (5, "blur"), (6, "focus"))]
        cases = classify_mouse_events(make_session(mouse_events=events), DetectionConfig())
        assert count_cases(cases).n_b == 6

    def test_window_boundary_is_inclusive(self):
        events = [MouseEvent(0, "copy", 1.0, 1.0), MouseEvent(30_000, "blur")]
        (copy_case, _) = classify_mouse_events(
            make_session(mouse_events=events), DetectionConfig(context_window_ms=30_000)
        )
        assert copy_case.detail.off_page_context is True

    def test_moves_and_wheels_are_silent(self):
        events = [MouseEvent(1, "mousemove", 1.0, 1.0), MouseEvent(2, "mousewheel", 2.0, 2.0)]
        assert classify_mouse_events(make_session(mouse_events=events), DetectionConfig()) == []


class TestPerQuestionCounts:
    SEGMENTS = (
        QuestionSegment("q1", 0, 1000, True),
        QuestionSegment("q2", 2000, 3000, False),
    )

    def test_interval_attribution(self):
        frames = [obs(i, face=False) for i in (0, 9, 60)]  # ts 0, 300, 2000
        session = make_session(frames, segments=self.SEGMENTS)
        cases = detect_face_disappearance(session)
        counts = per_question_counts(cases, self.SEGMENTS)
        assert counts["q1"].n_f == 2 and counts["q2"].n_f == 1
        assert count_cases(cases).n_f == 3

    def test_case_outside_all_segments_kept_in_session_totals(self):
        frames = [obs(45, face=False)]  # ts 1500: in the gap
        session = make_session(frames, segments=self.SEGMENTS)
        cases = detect_face_disappearance(session)
        assert cases[0].question_id is None
        counts = per_question_counts(cases, self.SEGMENTS)
        assert counts["q1"].n_f == 0 and counts["q2"].n_f == 0
        assert count_cases(cases).n_f == 1

    def test_empty_cases_zero_filled(self):
        counts = per_question_counts([], self.SEGMENTS)
        assert counts == {"q1": TypeCounts(), "q2": TypeCounts()}

    def test_boundary_belongs_to_starting_segment(self):
        frames = [obs(60, face=False)]  # ts 2000 == q2.start
        session = make_session(frames, segments=self.SEGMENTS)
        (case,) = detect_face_disappearance(session)
        assert case.question_id == "q2"


def test_count_conservation_over_random_sessions():
    rng = np.random.default_rng(31)
    config = DetectionConfig()
    for _ in range(15):
        session = random_session(rng, max_frames=300, max_events=300)
        cases = detect_all(session, config)
        total = count_cases(cases)
        per_q = per_question_counts(cases, session.segments)
        unattributed = count_cases(c for c in cases if c.question_id is None)
        summed = unattributed
        for counts in per_q.values():
            summed = summed + counts
        assert summed == total


class TestNormalizedSeries:
    def test_sources_cover_expected_frames(self):
        frames = [obs(0, pitch=1.0, yaw=2.0), obs(5, face=False), obs(10, pitch=3.0, yaw=4.0)]
        events = [MouseEvent(1, "mousemove", 5.0, 6.0), MouseEvent(2, "blur")]
        session = make_session(frames, mouse_events=events)
        assert len(normalized_series(session, "pitch").values) == 2
        assert len(normalized_series(session, "x_min").values) == 2
        assert len(normalized_series(session, "mouse_x").values) == 1

    def test_values_normalized(self):
        frames = [obs(0, pitch=-10.0, yaw=0.0), obs(1, pitch=0.0, yaw=0.0), obs(2, pitch=10.0, yaw=0.0)]
        series = normalized_series(make_session(frames), "pitch")
        assert list(series.values) == [-1.0, 0.0, 1.0]

    def test_empty_session_gives_empty_series(self):
        session = make_session([obs(0, face=False)])
        series = normalized_series(session, "yaw")
        assert series.values == () and series.timestamps_ms == ()

    def test_unknown_source_rejected(self):
        with pytest.raises(ValueError):
            normalized_series(make_session(), "roll")
