"""Pose-label accuracy metrics and report writers.

- translation error: mean ``||t_est - t_true||`` (m)
- rotation error: mean geodesic angle (rad; degrees in reports)
- reprojection error: mean over samples of the per-sample RMS pixel error
- SPEED score: mean of ``rotation error [rad] + ||dt|| / ||t_true||``
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .camera import BoardSpec, CameraModel, project_many
from .errors import LengthMismatch, ZeroRangeTruth
from .se3 import RigidTransform, geodesic_angle

NOT_APPLICABLE = "n/a"
ZERO_RANGE = 1e-9


@dataclass
class PoseErrorReport:
    e_t: float
    e_r: float
    per_sample_t: list = field(default_factory=list)
    per_sample_r: list = field(default_factory=list)
    e_p: Optional[float] = None
    per_sample_p: Optional[list] = None
    speed_score: Optional[float] = None
    per_sample_speed: Optional[list] = None

    @property
    def e_r_deg(self) -> float:
        return math.degrees(self.e_r)


def _check_lengths(a: Sequence, b: Sequence) -> None:
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} estimates vs {len(b)} references")
    if len(a) == 0:
        raise LengthMismatch("empty input")


def rotation_error(estimated: RigidTransform, truth: RigidTransform) -> float:
    return geodesic_angle(estimated.rotation, truth.rotation)


def pose_errors(estimated: Sequence[RigidTransform], truth: Sequence[RigidTransform]) -> PoseErrorReport:
    _check_lengths(estimated, truth)
    et = [float(np.linalg.norm(e.translation - t.translation)) for e, t in zip(estimated, truth)]
    er = [rotation_error(e, t) for e, t in zip(estimated, truth)]
    return PoseErrorReport(float(np.mean(et)), float(np.mean(er)), et, er)


def reprojection_errors_per_sample(
    camera: CameraModel, board: BoardSpec, poses: Sequence[RigidTransform], samples: Sequence
) -> list[float]:
    _check_lengths(poses, samples)
    out = []
    for pose, sample in zip(poses, samples):
        uv = project_many(camera, pose, board.corner_points(sample.ids()))
        d = uv - sample.pixels()
        out.append(float(np.sqrt(np.mean(np.sum(d * d, axis=1)))))
    return out


def reprojection_error(camera: CameraModel, board: BoardSpec, poses: Sequence[RigidTransform], samples: Sequence) -> float:
    return float(np.mean(reprojection_errors_per_sample(camera, board, poses, samples)))


def speed_terms(estimated: Sequence[RigidTransform], truth: Sequence[RigidTransform]) -> list[float]:
    _check_lengths(estimated, truth)
    out = []
    for e, t in zip(estimated, truth):
        rng = float(np.linalg.norm(t.translation))
        if rng < ZERO_RANGE:
            raise ZeroRangeTruth(f"truth translation norm {rng:.3g} m")
        out.append(rotation_error(e, t) + float(np.linalg.norm(e.translation - t.translation)) / rng)
    return out


def speed_score(estimated: Sequence[RigidTransform], truth: Sequence[RigidTransform]) -> float:
    return float(np.mean(speed_terms(estimated, truth)))


def mean_std(values: Sequence[float]):
    """Mean and sample standard deviation; std is ``"n/a"`` for one value."""
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    std = float(v.std(ddof=1)) if v.size > 1 else NOT_APPLICABLE
    return mean, std


def summary_row(report: PoseErrorReport) -> dict:
    """Table-style row in display units: mm, degrees, pixels."""
    row = {}
    m, s = mean_std([x * 1e3 for x in report.per_sample_t])
    row["E_T_mm"] = {"mean": m, "std": s}
    m, s = mean_std([math.degrees(x) for x in report.per_sample_r])
    row["E_R_deg"] = {"mean": m, "std": s}
    if report.per_sample_p is not None:
        m, s = mean_std(report.per_sample_p)
        row["E_p_px"] = {"mean": m, "std": s}
    if report.per_sample_speed is not None:
        m, s = mean_std(report.per_sample_speed)
        row["speed_score"] = {"mean": m, "std": s}
    return row


def format_cell(cell) -> str:
    if cell is None:
        return "-"
    std = cell["std"]
    std_s = std if isinstance(std, str) else f"{std:.3f}"
    return f"{cell['mean']:.3f} +- {std_s}"


def format_table(rows: dict) -> str:
    """Render ``{column_name: summary_row}`` as a fixed-width text table."""
    names = list(rows)
    metrics = [("E_T [mm]", "E_T_mm"), ("E_R [deg]", "E_R_deg"), ("E_p [pix]", "E_p_px"), ("SPEED", "speed_score")]
    metrics = [m for m in metrics if any(m[1] in rows[n] for n in names)]
    width = max(20, *(len(n) + 2 for n in names))
    lines = ["Metrics".rjust(10) + "".join(n.center(width) for n in names)]
    for label, key in metrics:
        lines.append(label.rjust(10) + "".join(format_cell(rows[n].get(key)).center(width) for n in names))
    return "\n".join(lines)


def write_per_sample_csv(path, sample_ids: Sequence[int], report: PoseErrorReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["sample_id", "e_t_m", "e_r_rad", "e_r_deg"]
        if report.per_sample_p is not None:
            header.append("e_p_px")
        if report.per_sample_speed is not None:
            header.append("speed")
        w.writerow(header)
        for i, sid in enumerate(sample_ids):
            row = [sid, repr(report.per_sample_t[i]), repr(report.per_sample_r[i]), repr(math.degrees(report.per_sample_r[i]))]
            if report.per_sample_p is not None:
                row.append(repr(report.per_sample_p[i]))
            if report.per_sample_speed is not None:
                row.append(repr(report.per_sample_speed[i]))
            w.writerow(row)
