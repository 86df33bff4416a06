"""Command-line entry point: ``poseforge simulate|calibrate|label|report``.

Exit codes: 0 success, 1 validation failure (bad input files or
arguments), 2 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .camera import BoardSpec, CameraModel
from .errors import LengthMismatch, MissingProfile, PoseforgeError, ValidationError
from .fusion import DEFAULT_MULTIPLIER, CalibrationProfile, FusedPoseLabel
from .metrics import (
    format_table,
    pose_errors,
    reprojection_errors_per_sample,
    speed_terms,
    summary_row,
    write_per_sample_csv,
)
from .pipeline import calibrate, label
from .pnp import PnpSample
from .sim import SimScenario, default_calibration_scenario, generate, trajectory_scenario

log = logging.getLogger("poseforge")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


def _today() -> str:
    # SOURCE_DATE_EPOCH pins the date for reproducible outputs
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        return _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc).date().isoformat()
    return _dt.datetime.now(_dt.timezone.utc).date().isoformat()


def _require(path, flag: str) -> Path:
    if path is None:
        raise ValidationError("required", flag)
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"no such file: {p}", flag)
    return p


def _out_dir(path) -> Path:
    p = Path(path or ".")
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_simulate(args) -> int:
    if args.scenario_file:
        scenario = SimScenario.from_json(io.read_json(_require(args.scenario_file, "--scenario-file")))
        if args.seed is not None:
            scenario = replace(scenario, rng_seed=args.seed)
    elif args.scenario == "trajectory":
        scenario = trajectory_scenario(args.seed or 0)
    else:
        scenario = default_calibration_scenario(args.seed or 0)
    if args.noiseless:
        scenario = scenario.noiseless()
    if args.samples is not None:
        scenario = replace(scenario, sample_count=args.samples)
    vn = scenario.vicon_noise
    if args.dropout_rate is not None:
        vn = replace(vn, dropout_rate=args.dropout_rate)
    if args.outlier_rate is not None:
        vn = replace(vn, outlier_rate=args.outlier_rate)
    scenario = replace(scenario, vicon_noise=vn)

    out = generate(scenario)
    d = _out_dir(args.out)
    io.emit(d / "measurements.jsonl", out.records)
    io.write_truth(d / "truth.jsonl", out.truth)
    io.write_json(d / "camera.json", scenario.camera.to_json())
    io.write_json(d / "board.json", scenario.board.to_json())
    io.write_json(d / "manifest.json", out.manifest)
    print(
        f"simulated {len(out.records)} samples ({scenario.name}, seed {scenario.rng_seed}): "
        f"{len(out.vicon_measurements)} with Vicon, {len(out.outlier_ids)} outliers, "
        f"{len(out.dropout_ids)} dropouts -> {d}"
    )
    return EXIT_OK


def cmd_calibrate(args) -> int:
    records = io.ingest(_require(args.measurements, "--measurements"))
    camera = CameraModel.from_json(io.read_json(_require(args.camera, "--camera")))
    board = BoardSpec.from_json(io.read_json(_require(args.board, "--board")))
    meta = {"date": _today(), "camera_id": Path(args.camera).stem}
    run = calibrate(
        records,
        camera,
        board,
        refine_intrinsics=args.refine_intrinsics,
        multiplier=args.reject_multiplier,
        seed=args.seed or 0,
        metadata=meta,
    )
    profile = run.profile
    if run.pnp.refined_camera is not None:
        profile.metadata["refined_camera"] = run.pnp.refined_camera.to_json()

    profile_path = Path(args.profile) if args.profile else _out_dir(args.out) / "profile.json"
    profile_path.parent.mkdir(parents=True, exist_ok=True)
    io.write_json(profile_path, profile.to_json())

    rows = {name: summary_row(rep) for name, rep in run.reports.items()}
    print(format_table(rows))
    for w in run.warnings:
        print(f"warning: {w}")
    if args.out:
        d = _out_dir(args.out)
        io.write_json(
            d / "calibration_summary.json",
            {
                "schema_version": io.SCHEMA_VERSION,
                "sample_count": len(run.truth),
                "columns": rows,
                "warnings": run.warnings,
            },
        )
    print(f"profile -> {profile_path}")
    return EXIT_OK


def cmd_label(args) -> int:
    if not args.profile or not Path(args.profile).exists():
        raise MissingProfile(f"calibration profile not found: {args.profile}")
    profile = CalibrationProfile.from_json(io.read_json(args.profile))
    records = io.ingest(_require(args.measurements, "--measurements"))
    run = label(profile, records, multiplier=args.reject_multiplier)
    d = _out_dir(args.out)
    io.write_jsonl(d / "labels.jsonl", (lab.to_json() for lab in run.labels))
    summary = {
        "schema_version": io.SCHEMA_VERSION,
        "samples": len(run.labels),
        "fused": run.fused,
        "kuka_only": run.kuka_only,
        "vicon_rejected": run.rejected,
        "vicon_missing": run.no_vicon,
        "fusion_enabled": profile.fusion_enabled,
    }
    io.write_json(d / "label_summary.json", summary)
    print(
        f"labeled {len(run.labels)} samples: {run.fused} fused, {run.kuka_only} KUKA-only "
        f"({run.rejected}/{len(run.labels)} Vicon rejected, {run.no_vicon} without Vicon) -> {d}"
    )
    return EXIT_OK


def cmd_report(args) -> int:
    labels = {}
    for lineno, doc in io.read_jsonl(_require(args.labels, "--labels")):
        try:
            lab = FusedPoseLabel.from_json(doc)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"line {lineno}: malformed label ({exc})", "--labels") from None
        labels[lab.sample_id] = lab
    truth = io.read_truth(_require(args.truth, "--truth"))
    if set(labels) != set(truth):
        raise LengthMismatch(
            f"labels cover {len(labels)} samples, truth {len(truth)}; "
            f"{len(set(labels) ^ set(truth))} sample ids differ"
        )
    ids = sorted(labels)
    est = [labels[i].pose for i in ids]
    ref = [truth[i] for i in ids]
    rep = pose_errors(est, ref)
    rep.per_sample_speed = speed_terms(est, ref)
    rep.speed_score = sum(rep.per_sample_speed) / len(ids)

    if args.measurements and args.camera and args.board:
        camera = CameraModel.from_json(io.read_json(_require(args.camera, "--camera")))
        board = BoardSpec.from_json(io.read_json(_require(args.board, "--board")))
        samples = {
            r.sample_id: PnpSample(r.sample_id, r.observations)
            for r in io.ingest(_require(args.measurements, "--measurements"))
            if r.observations
        }
        if all(i in samples for i in ids):
            rep.per_sample_p = reprojection_errors_per_sample(camera, board, est, [samples[i] for i in ids])
            rep.e_p = sum(rep.per_sample_p) / len(ids)

    d = _out_dir(args.out)
    write_per_sample_csv(d / "report.csv", ids, rep)
    row = summary_row(rep)
    provenance = {}
    for i in ids:
        key = labels[i].provenance.value
        provenance[key] = provenance.get(key, 0) + 1
    io.write_json(
        d / "report.json",
        {
            "schema_version": io.SCHEMA_VERSION,
            "samples": len(ids),
            "provenance": dict(sorted(provenance.items())),
            "E_T_m": rep.e_t,
            "E_R_rad": rep.e_r,
            "E_R_deg": math.degrees(rep.e_r),
            "E_p_px": rep.e_p,
            "speed_score": rep.speed_score,
            "table": row,
        },
    )
    print(format_table({"labels": row}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--measurements", help="measurement file (JSON Lines)")
    common.add_argument("--camera", help="camera model JSON")
    common.add_argument("--board", help="board spec JSON")
    common.add_argument("--profile", help="calibration profile JSON")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--refine-intrinsics", action="store_true")
    common.add_argument("--reject-multiplier", type=float, default=None,
                        help=f"rejection gate in sigmas (default {DEFAULT_MULTIPLIER})")
    common.add_argument("--log-level", default="WARNING")

    p = argparse.ArgumentParser(prog="poseforge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="write a synthetic measurement set")
    s.add_argument("--scenario", choices=["calibration", "trajectory"], default="calibration")
    s.add_argument("--scenario-file", help="full scenario JSON (overrides --scenario)")
    s.add_argument("--samples", type=int)
    s.add_argument("--dropout-rate", type=float)
    s.add_argument("--outlier-rate", type=float)
    s.add_argument("--noiseless", action="store_true")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", parents=[common], help="solve offsets and uncertainty models")
    c.set_defaults(func=cmd_calibrate)

    lab = sub.add_parser("label", parents=[common], help="fuse pose labels for new measurements")
    lab.set_defaults(func=cmd_label)

    r = sub.add_parser("report", parents=[common], help="score labels against truth")
    r.add_argument("--labels", help="labels file (JSON Lines)")
    r.add_argument("--truth", help="truth file (JSON Lines)")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = os.environ.get("POSEFORGE_LOG") or args.log_level
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "calibrate" and args.reject_multiplier is None:
        args.reject_multiplier = DEFAULT_MULTIPLIER
    try:
        return args.func(args)
    except PoseforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
