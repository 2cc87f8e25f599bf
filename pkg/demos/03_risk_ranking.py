"""Rank students by overall risk and drill into one student's questions.

The risk of a (student, question) pair is the weighted sum of its four
cross-student min-max normalized counts; the student list is the same
aggregation at session level. Weights are tunable: the second pass
doubles the copy/paste weight and re-ranks.
"""

import subprocess
import sys
from pathlib import Path

from proctorkit import DetectionConfig, RiskWeights, analyze_exam, load_exam, load_manifest

OUT = Path(__file__).resolve().parent / "_out" / "demo-exam"
if not (OUT / "manifest.json").exists():
    subprocess.run([sys.executable, str(Path(__file__).parent / "01_synthetic_exam.py")], check=True)

manifest = load_manifest(OUT / "manifest.json")


def show_ranking(weights: RiskWeights, label: str) -> None:
    config = DetectionConfig(weights=weights)
    analysis = analyze_exam(load_exam(manifest, config), manifest.questions, config)
    print(f"\n=== ranking with {label} ===")
    print(f"{'student':<8} {'risk':>6}  {'f':>5} {'h':>5} {'c':>5} {'b':>5}  time%  score%")
    for o in analysis.overviews:
        n = o.normalized
        print(
            f"{o.student_id:<8} {o.total_risk:>6.3f}  "
            f"{n.f:>5.2f} {n.h:>5.2f} {n.c:>5.2f} {n.b:>5.2f}  "
            f"{o.time_fraction:>5.1%} {o.score_fraction:>6.1%}"
        )


show_ranking(RiskWeights(), "default weights (1,1,1,1)")
show_ranking(RiskWeights(w_c=2.0), "copy/paste doubled")

config = DetectionConfig()
analysis = analyze_exam(load_exam(manifest, config), manifest.questions, config)
riskiest = analysis.overviews[0].student_id
print(f"\n=== per-question profile of {riskiest} ===")
print(f"{'question':<8} {'risk':>6} {'width':>6}  correct  counts (f,h,c,b)   cohort q2 risk")
for qid in analysis.question_order:
    p = analysis.profiles[(riskiest, qid)]
    cohort = analysis.question_cohort[qid]
    print(
        f"{qid:<8} {p.risk:>6.3f} {p.risk / 4:>6.3f}  {str(p.correct):<7}  "
        f"{p.raw.as_tuple()}   {cohort.mean_risk:>6.3f}"
    )
