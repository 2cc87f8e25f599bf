"""Generate a small labeled exam and look at what the generator planted.

The generator writes the same wire files a real capture pipeline would
produce (frame observations + mouse events per student, one manifest),
plus a labels.json with the ground truth of every planted behavior.
"""

import json
from pathlib import Path

from proctorkit import BaselineProfile, CheatPlan, generate_exam

OUT = Path(__file__).resolve().parent / "_out" / "demo-exam"

plans = {
    # s002 copies a question, leaves the page, and pastes an answer back.
    "s002": [CheatPlan("copy_paste_roundtrip", "mc_3", onset_ms=2_000, duration_ms=8_000)],
    # s004 looks away at local material (a 6-sigma pose excursion) and
    # later leaves the seat entirely.
    "s004": [
        CheatPlan("local_material_glance", "mc_1", onset_ms=1_000, duration_ms=4_000, magnitude=6.0),
        CheatPlan("leave_seat", "mc_5", onset_ms=3_000, duration_ms=5_000),
    ],
    # s005 just switches away from the exam page for a while.
    "s005": [CheatPlan("off_page_search", "mc_2", onset_ms=500, duration_ms=6_000)],
}

manifest_path = generate_exam(
    seed=2024,
    n_students=6,
    n_questions=6,
    plans=plans,
    out_dir=OUT,
    profile=BaselineProfile(question_duration_range_ms=(20_000, 35_000)),
    exam_id="demo-exam",
)
print(f"wrote {manifest_path}")

labels = json.loads((OUT / "labels.json").read_text())
for student, truth in labels.items():
    planted = {k: len(v) for k, v in truth.items() if v}
    print(f"{student}: planted {planted or 'nothing'}")
