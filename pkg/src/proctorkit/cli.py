"""Batch entry points: simulate, detect, report, serve.

All outputs are byte-deterministic for identical inputs and flags: stable
ordering everywhere, floats serialized by repr.

Exit codes: 0 success, 1 runtime/ingest failure, 2 usage or configuration
error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .analytics import (
    analyze_exam,
    config_to_dict,
    counts_to_dict,
    export_report,
)
from .engine import count_cases
from .ingest import IngestError, load_exam, load_manifest
from .model import DetectionConfig, RiskWeights, case_to_dict
from .synth import BaselineProfile, CheatPlan, PlanError, generate_exam


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--z-threshold", type=float, default=None)
    parser.add_argument("--confidence-floor", type=float, default=None)
    parser.add_argument("--stride", type=int, default=None)
    parser.add_argument("--context-window-ms", type=int, default=None)
    parser.add_argument(
        "--weights",
        type=str,
        default=None,
        metavar="F,H,C,B",
        help="comma-separated weights for face, head-pose, copy/paste, blur/focus",
    )


def _config_from_args(args: argparse.Namespace) -> DetectionConfig:
    kwargs = {}
    if args.z_threshold is not None:
        kwargs["z_threshold"] = args.z_threshold
    if args.confidence_floor is not None:
        kwargs["confidence_floor"] = args.confidence_floor
    if args.stride is not None:
        kwargs["sample_stride"] = args.stride
    if args.context_window_ms is not None:
        kwargs["context_window_ms"] = args.context_window_ms
    if args.weights is not None:
        parts = args.weights.split(",")
        if len(parts) != 4:
            raise ValueError(f"--weights needs four values, got {args.weights!r}")
        w = [float(p) for p in parts]
        kwargs["weights"] = RiskWeights(*w)
    return DetectionConfig(**kwargs)


def _write_text(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_simulate(args: argparse.Namespace) -> int:
    plans = {}
    if args.plan_file:
        try:
            raw = json.loads(Path(args.plan_file).read_text(encoding="utf-8"))
            plans = {
                sid: [CheatPlan(**entry) for entry in entries]
                for sid, entries in raw.items()
            }
        except (OSError, ValueError, TypeError) as exc:
            print(f"error: bad plan file: {exc}", file=sys.stderr)
            return 2
    try:
        manifest_path = generate_exam(
            seed=args.seed,
            n_students=args.students,
            n_questions=args.questions,
            plans=plans,
            out_dir=args.out_dir,
            exam_id=args.exam_id,
        )
    except PlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(manifest_path)
    return 0


def cmd_detect(args: argparse.Namespace) -> int:
    try:
        config = _config_from_args(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = load_manifest(args.manifest)
        sessions = load_exam(manifest, config)
        analysis = analyze_exam(sessions, manifest.questions, config)
    except (IngestError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    students = []
    for sid in analysis.student_ids:
        cases = analysis.cases[sid]
        unattributed = count_cases(c for c in cases if c.question_id is None)
        students.append(
            {
                "student_id": sid,
                "session_counts": counts_to_dict(analysis.session_counts[sid]),
                "unattributed_counts": counts_to_dict(unattributed),
                "per_question_counts": {
                    qid: counts_to_dict(analysis.profiles[(sid, qid)].raw)
                    for qid in analysis.question_order
                },
                "cases": [case_to_dict(c) for c in cases],
            }
        )
    report = {
        "exam_id": analysis.exam_id,
        "config": config_to_dict(config),
        "questions": list(analysis.question_order),
        "students": students,
    }
    _write_text(args.out, json.dumps(report, indent=2) + "\n")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    try:
        config = _config_from_args(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = load_manifest(args.manifest)
        sessions = load_exam(manifest, config)
        analysis = analyze_exam(sessions, manifest.questions, config)
    except (IngestError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    overviews = analysis.overviews
    if args.sort == "student_id":
        overviews = tuple(sorted(overviews, key=lambda o: o.student_id))
    if args.format == "json":
        report = export_report(analysis)
        report["sort"] = args.sort
        report["students"] = [
            next(s for s in report["students"] if s["student_id"] == o.student_id)
            for o in overviews
        ]
        _write_text(args.out, json.dumps(report, indent=2) + "\n")
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            [
                "student_id",
                "total_risk",
                "norm_f",
                "norm_h",
                "norm_c",
                "norm_b",
                "n_f",
                "n_h",
                "n_c",
                "n_b",
                "time_fraction",
                "score_fraction",
            ]
        )
        for o in overviews:
            counts = analysis.session_counts[o.student_id]
            writer.writerow(
                [
                    o.student_id,
                    repr(o.total_risk),
                    repr(o.normalized.f),
                    repr(o.normalized.h),
                    repr(o.normalized.c),
                    repr(o.normalized.b),
                    counts.n_f,
                    counts.n_h,
                    counts.n_c,
                    counts.n_b,
                    repr(o.time_fraction),
                    repr(o.score_fraction),
                ]
            )
        _write_text(args.out, buf.getvalue())
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        host, _, port_str = args.bind.rpartition(":")
        port = int(port_str)
        if not host:
            raise ValueError(f"bind address {args.bind!r} must be host:port")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    from .service import create_app, register_exam

    app = create_app()
    try:
        for manifest_path in args.manifest:
            exam_id = register_exam(app, manifest_path)
            print(f"loaded exam {exam_id} from {manifest_path}")
    except (IngestError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    import uvicorn

    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except (OSError, SystemExit) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proctorkit",
        description="Suspected-case detection and risk analytics for online-exam sessions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic exam with ground-truth labels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--students", type=int, default=24)
    p.add_argument("--questions", type=int, default=14)
    p.add_argument("--plan-file", type=str, default=None, help="JSON: {student_id: [plan, ...]}")
    p.add_argument("--out-dir", type=str, required=True)
    p.add_argument("--exam-id", type=str, default="synthetic-exam")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="run detection and write the case/count report")
    p.add_argument("--manifest", type=str, required=True)
    p.add_argument("--out", type=str, default=None, help="output path (default stdout)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("report", help="write the ranked student risk report")
    p.add_argument("--manifest", type=str, required=True)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--sort", choices=("risk", "student_id"), default="risk")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    _add_config_flags(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="serve loaded exams over HTTP")
    p.add_argument("--manifest", type=str, action="append", default=[], required=True)
    p.add_argument("--bind", type=str, default="127.0.0.1:8000")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
