"""Serve the demo exam over HTTP for the proctor console.

Equivalent to: proctorkit serve --manifest demos/_out/demo-exam/manifest.json

Endpoints (all JSON, every response carries the config revision):
  GET  /exams
  GET  /exams/{id}/students?sort=risk|student_id
  GET  /exams/{id}/students/{sid}/questions
  GET  /exams/{id}/students/{sid}/questions/{qid}/behavior?max_points=600
  GET  /exams/{id}/students/{sid}/questions/{qid}/playback?t_ms=0
  PUT  /exams/{id}/config          {"z_threshold": 2.0, "weights": {...}}
  POST /exams/{id}/load            {"manifest_path": "..."}
"""

import subprocess
import sys
from pathlib import Path

import uvicorn

from proctorkit.service import create_app, register_exam

OUT = Path(__file__).resolve().parent / "_out" / "demo-exam"
if not (OUT / "manifest.json").exists():
    subprocess.run([sys.executable, str(Path(__file__).parent / "01_synthetic_exam.py")], check=True)

app = create_app()
exam_id = register_exam(app, str(OUT / "manifest.json"))
print(f"serving exam {exam_id!r} on http://127.0.0.1:8000 (ctrl-c to stop)")
uvicorn.run(app, host="127.0.0.1", port=8000, log_level="warning")
