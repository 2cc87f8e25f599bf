"""Pull one question's behavior bundle and dwell heatmap, and plot them.

This is exactly what the console's Behavior and Playback views consume:
normalized mouse/pose/position series (downsampled, extremes preserved),
the suspected-case strip, peer-context histograms, and the cumulative
mouse dwell grid.
"""

import subprocess
import sys
from pathlib import Path

from proctorkit import (
    DetectionConfig,
    analyze_exam,
    behavior_timeline,
    dwell_grid,
    load_exam,
    load_manifest,
    peer_context,
)

OUT = Path(__file__).resolve().parent / "_out" / "demo-exam"
if not (OUT / "manifest.json").exists():
    subprocess.run([sys.executable, str(Path(__file__).parent / "01_synthetic_exam.py")], check=True)

manifest = load_manifest(OUT / "manifest.json")
config = DetectionConfig()
analysis = analyze_exam(load_exam(manifest, config), manifest.questions, config)

student, question = "s002", "mc_3"
session = analysis.sessions[student]
bundle = behavior_timeline(session, analysis.cases[student], question, max_points=400)
segment = bundle.segments[0]
print(f"{student} on {question}: segment [{segment.start_ms}, {segment.end_ms}) ms")
for name, series in bundle.series.items():
    print(f"  {name:<8} {len(series.values):>4} points")
print(f"  {len(bundle.cases)} suspected cases in segment")

context = peer_context(analysis.sessions, student, question)
top_bin = max(range(20), key=lambda i: context.left["x"]["pose"].frequencies[i])
print(f"peers' yaw distribution peaks in bin {top_bin} of 20")

grid = dwell_grid(
    [e for e in session.mouse_events if segment.start_ms <= e.timestamp_ms < segment.end_ms],
    session.resolution,
)
print(f"dwell grid {grid.grid_w}x{grid.grid_h}, {grid.total} visits")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("matplotlib not installed; skipping the plot")
    sys.exit(0)

fig, axes = plt.subplots(3, 1, figsize=(10, 8), height_ratios=[3, 1, 3])
upper, strip, heat = axes

for name, style in (("mouse_x", "tab:brown"), ("yaw", "darkgreen")):
    series = bundle.series[name]
    upper.plot(series.timestamps_ms, series.values, color=style, lw=0.8, label=name)
x_lo, x_hi = bundle.series["x_min"], bundle.series["x_max"]
upper.fill_between(x_lo.timestamps_ms, x_lo.values, x_hi.values[: len(x_lo.values)],
                   alpha=0.2, color="steelblue", label="head x range")
upper.set_ylabel("normalized")
upper.legend(loc="upper right", fontsize=8)
upper.set_title(f"{student} / {question}: x-axis behaviors")

markers = {"face_disappearance": "v", "abnormal_head_pose": "^",
           "copy_paste": "s", "blur_focus": "o"}
for case in bundle.cases:
    strip.plot(case.timestamp_ms, 0, markers[case.kind], color="crimson", ms=6)
strip.set_yticks([])
strip.set_xlim(upper.get_xlim())
strip.set_ylabel("cases")

heat.imshow(grid.counts, aspect="auto", cmap="coolwarm")
heat.set_title("mouse dwell grid")

out_png = OUT / "behavior.png"
fig.tight_layout()
fig.savefig(out_png, dpi=110)
print(f"plot written to {out_png}")
