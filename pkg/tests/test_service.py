from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from proctorkit.analytics import cohort_boxstats, question_risk
from proctorkit.model import DetectionConfig, NormalizedCounts, RiskWeights
from proctorkit.service import build_exam_state, create_app


@pytest.fixture(scope="module")
def client(small_manifest):
    app = create_app()
    with TestClient(app) as client:
        response = client.post(
            "/exams/exam-small/load", json={"manifest_path": str(small_manifest)}
        )
        assert response.status_code == 200, response.text
        yield client


class TestLoadAndList:
    def test_load_reports_shape(self, client):
        listing = client.get("/exams").json()["exams"]
        assert [e["exam_id"] for e in listing] == ["exam-small"]
        assert listing[0]["students"] == 6
        assert listing[0]["revision"] >= 1

    def test_exam_id_mismatch_is_ingest_failed(self, client, small_manifest):
        response = client.post("/exams/wrong-id/load", json={"manifest_path": str(small_manifest)})
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "ingest_failed"

    def test_missing_manifest_is_ingest_failed(self, client):
        response = client.post("/exams/x/load", json={"manifest_path": "/nope/manifest.json"})
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "ingest_failed"

    def test_unknown_exam_is_not_found(self, client):
        response = client.get("/exams/ghost/students")
        assert response.status_code == 404
        assert response.json()["error"]["code"] == "not_found"


class TestStudentList:
    def test_risk_sort_descending(self, client):
        body = client.get("/exams/exam-small/students?sort=risk").json()
        risks = [s["total_risk"] for s in body["students"]]
        assert risks == sorted(risks, reverse=True)

    def test_student_id_sort(self, client):
        body = client.get("/exams/exam-small/students?sort=student_id").json()
        ids = [s["student_id"] for s in body["students"]]
        assert ids == sorted(ids)

    def test_unknown_sort_rejected(self, client):
        response = client.get("/exams/exam-small/students?sort=chaos")
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "invalid_request"

    def test_boxstats_match_served_columns(self, client):
        body = client.get("/exams/exam-small/students").json()
        for slot, key in enumerate("fhcb"):
            column = [s["normalized"][key] for s in body["students"]]
            box = cohort_boxstats(column)
            served = body["glyph_boxstats"][key]
            assert (served["q1"], served["q2"], served["q3"]) == (box.q1, box.q2, box.q3)

    def test_total_risk_consistent_with_weights(self, client):
        body = client.get("/exams/exam-small/students").json()
        weights = RiskWeights(**body["config"]["weights"])
        for student in body["students"]:
            norm = NormalizedCounts(**student["normalized"])
            assert student["total_risk"] == question_risk(norm, weights)

    def test_every_response_cites_revision(self, client):
        for path in (
            "/exams",
            "/exams/exam-small/students",
            "/exams/exam-small/students/s001/questions",
        ):
            body = client.get(path).json()
            assert "revision" in str(body)


class TestQuestionList:
    def test_profiles_in_exam_order(self, client, small_manifest):
        import json

        manifest = json.loads(small_manifest.read_text())
        body = client.get("/exams/exam-small/students/s001/questions").json()
        assert [q["question_id"] for q in body["questions"]] == manifest["questions"]

    def test_correct_flags_echo_manifest(self, client, small_manifest):
        import json

        manifest = json.loads(small_manifest.read_text())
        student = next(s for s in manifest["students"] if s["student_id"] == "s002")
        flags = {seg["question_id"]: seg["correct"] for seg in student["segments"]}
        body = client.get("/exams/exam-small/students/s002/questions").json()
        for q in body["questions"]:
            assert q["correct"] == flags[q["question_id"]]

    def test_risk_recomputable_from_served_values(self, client):
        body = client.get("/exams/exam-small/students/s003/questions").json()
        for q in body["questions"]:
            norm = NormalizedCounts(**q["normalized"])
            assert q["risk"] == question_risk(norm, RiskWeights())

    def test_unknown_student(self, client):
        response = client.get("/exams/exam-small/students/sX/questions")
        assert response.status_code == 404


class TestBehavior:
    def test_bundle_consistency(self, client):
        body = client.get(
            "/exams/exam-small/students/s001/questions/mc_2/behavior?max_points=40"
        ).json()
        assert set(body["series"]) == {
            "mouse_x", "mouse_y", "yaw", "pitch", "x_min", "x_max", "y_min", "y_max",
        }
        for series in body["series"].values():
            assert len(series["timestamps_ms"]) == len(series["values"])
            assert len(series["values"]) <= 80
        assert body["video"]["offset_ms"] == body["segments"][0]["start_ms"]

    def test_cases_match_engine_output(self, client, small_manifest):
        state = build_exam_state(str(small_manifest), DetectionConfig())
        analysis = state.snapshot.analysis
        expected = [
            c for c in analysis.cases["s001"] if c.question_id == "mc_2"
        ]
        body = client.get(
            "/exams/exam-small/students/s001/questions/mc_2/behavior"
        ).json()
        assert [(c["kind"], c["timestamp_ms"]) for c in body["cases"]] == [
            (c.kind, c.timestamp_ms) for c in expected
        ]

    def test_peer_context_served_exactly(self, client, small_manifest):
        from proctorkit.analytics import peer_context

        state = build_exam_state(str(small_manifest), DetectionConfig())
        context = peer_context(state.snapshot.analysis.sessions, "s001", "mc_2")
        body = client.get(
            "/exams/exam-small/students/s001/questions/mc_2/behavior"
        ).json()
        for side_name, side in (("left", context.left), ("right", context.right)):
            for axis, channels in side.items():
                for channel, hist in channels.items():
                    served = body["peer_context"][side_name][axis][channel]
                    assert served["frequencies"] == list(hist.frequencies)

    def test_bad_max_points(self, client):
        response = client.get(
            "/exams/exam-small/students/s001/questions/mc_2/behavior?max_points=1"
        )
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "invalid_request"

    def test_unknown_question(self, client):
        response = client.get("/exams/exam-small/students/s001/questions/zz/behavior")
        assert response.status_code == 404


class TestPlayback:
    def test_start_is_nearly_empty(self, client):
        body = client.get(
            "/exams/exam-small/students/s001/questions/mc_1/playback?t_ms=0"
        ).json()
        start = body["video_offset_ms"]
        questions = client.get("/exams/exam-small/students/s001/questions").json()
        assert body["grid"]["total"] <= 2  # only events exactly at segment start
        assert body["t_ms"] == 0

    def test_end_conserves_positioned_events(self, client, small_manifest):
        import json

        manifest = json.loads(small_manifest.read_text())
        student = next(s for s in manifest["students"] if s["student_id"] == "s002")
        seg = next(s for s in student["segments"] if s["question_id"] == "mc_3")
        span = seg["end_ms"] - seg["start_ms"]
        body = client.get(
            f"/exams/exam-small/students/s002/questions/mc_3/playback?t_ms={span}"
        ).json()

        state = build_exam_state(str(small_manifest), DetectionConfig())
        session = state.snapshot.analysis.sessions["s002"]
        expected = sum(
            1
            for e in session.mouse_events
            if e.x is not None
            and seg["start_ms"] <= e.timestamp_ms < seg["end_ms"]
            and 0 <= e.x <= session.resolution[0]
            and 0 <= e.y <= session.resolution[1]
        )
        assert body["grid"]["total"] == expected

    def test_monotone_in_time(self, client):
        totals = []
        grids = []
        for t in (0, 2000, 4000, 6000, 8000):
            body = client.get(
                f"/exams/exam-small/students/s003/questions/mc_1/playback?t_ms={t}"
            ).json()
            totals.append(body["grid"]["total"])
            grids.append(body["grid"]["counts"])
        assert totals == sorted(totals)
        for earlier, later in zip(grids, grids[1:]):
            for row_a, row_b in zip(earlier, later):
                assert all(a <= b for a, b in zip(row_a, row_b))

    def test_out_of_range_t(self, client):
        response = client.get(
            "/exams/exam-small/students/s001/questions/mc_1/playback?t_ms=99999999"
        )
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "invalid_request"


class TestConfigUpdates:
    @pytest.fixture()
    def fresh_client(self, small_manifest):
        app = create_app()
        with TestClient(app) as client:
            client.post("/exams/exam-small/load", json={"manifest_path": str(small_manifest)})
            yield client

    def test_lower_threshold_weakly_increases_counts(self, fresh_client):
        before = {
            s["student_id"]: s["counts"]["n_h"]
            for s in fresh_client.get("/exams/exam-small/students").json()["students"]
        }
        response = fresh_client.put("/exams/exam-small/config", json={"z_threshold": 2.0})
        assert response.json()["revision"] == 2
        after_body = fresh_client.get("/exams/exam-small/students").json()
        assert after_body["revision"] == 2
        after = {s["student_id"]: s["counts"]["n_h"] for s in after_body["students"]}
        for sid, count in before.items():
            assert after[sid] >= count

    def test_doubled_weights_double_risks_keep_order(self, fresh_client):
        before = fresh_client.get("/exams/exam-small/students").json()["students"]
        fresh_client.put(
            "/exams/exam-small/config",
            json={"weights": {"w_f": 2.0, "w_h": 2.0, "w_c": 2.0, "w_b": 2.0}},
        )
        after = fresh_client.get("/exams/exam-small/students").json()["students"]
        assert [s["student_id"] for s in before] == [s["student_id"] for s in after]
        for a, b in zip(before, after):
            assert b["total_risk"] == pytest.approx(2.0 * a["total_risk"], rel=1e-12)

    def test_invalid_patch_changes_nothing(self, fresh_client):
        rev_before = fresh_client.get("/exams").json()["exams"][0]["revision"]
        response = fresh_client.put(
            "/exams/exam-small/config", json={"weights": {"w_f": -1.0}}
        )
        assert response.status_code == 422
        assert response.json()["error"]["code"] == "invalid_config"
        assert fresh_client.get("/exams").json()["exams"][0]["revision"] == rev_before

    def test_identical_config_is_idempotent(self, fresh_client):
        first = fresh_client.put("/exams/exam-small/config", json={"z_threshold": 2.5})
        body_a = fresh_client.get("/exams/exam-small/students").json()
        second = fresh_client.put("/exams/exam-small/config", json={"z_threshold": 2.5})
        body_b = fresh_client.get("/exams/exam-small/students").json()
        assert first.json()["revision"] == second.json()["revision"]
        assert body_a == body_b

    def test_snapshot_isolation(self, small_manifest):
        state = build_exam_state(str(small_manifest), DetectionConfig())
        old = state.snapshot
        old_counts = dict(old.analysis.session_counts)
        state.snapshot = state.recompute(DetectionConfig(z_threshold=2.0), revision=2)
        assert old.analysis.session_counts == old_counts
        assert old.revision == 1
        assert state.snapshot.revision == 2
