"""End-to-end calibration and labeling over ingested measurement records."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .camera import BoardSpec, CameraModel
from .errors import InsufficientFeatures, PoseforgeError
from .fusion import (
    DEFAULT_MULTIPLIER,
    CalibrationProfile,
    FusedPoseLabel,
    Provenance,
    estimate_variances,
    fit_rejection_model,
    fuse_pose_label,
)
from .io import MeasurementRecord
from .metrics import PoseErrorReport, pose_errors, reprojection_errors_per_sample, speed_terms
from .pnp import PnpResult, PnpSample, solve_pnp
from .rwhe import OffsetPair, Source, SourceMeasurement, reconstruct_pose, solve_rwhe

log = logging.getLogger(__name__)


def kuka_measurement(rec: MeasurementRecord) -> SourceMeasurement:
    return SourceMeasurement(rec.sample_id, rec.kuka_relative(), Source.KUKA)


def vicon_measurement(rec: MeasurementRecord) -> Optional[SourceMeasurement]:
    chain = rec.vicon_relative()
    return None if chain is None else SourceMeasurement(rec.sample_id, chain, Source.VICON)


@dataclass
class CalibrationRun:
    profile: CalibrationProfile
    pnp: PnpResult
    truth: dict
    reconstructions: dict  # column name -> {sample_id: RigidTransform}
    reports: dict = field(default_factory=dict)  # column name -> PoseErrorReport
    warnings: list = field(default_factory=list)


def _with_context(exc: PoseforgeError, context: str) -> PoseforgeError:
    exc.args = (f"{context}: {exc}",) + exc.args[1:]
    return exc


def _report(truth, recon, ids, camera, board, samples_by_id) -> PoseErrorReport:
    est = [recon[i] for i in ids]
    ref = [truth[i] for i in ids]
    rep = pose_errors(est, ref)
    rep.per_sample_speed = speed_terms(est, ref)
    rep.speed_score = sum(rep.per_sample_speed) / len(ids)
    if samples_by_id:
        rep.per_sample_p = reprojection_errors_per_sample(camera, board, est, [samples_by_id[i] for i in ids])
        rep.e_p = sum(rep.per_sample_p) / len(ids)
    return rep


def calibrate(
    records: Sequence[MeasurementRecord],
    camera: CameraModel,
    board: BoardSpec,
    *,
    refine_intrinsics: bool = False,
    multiplier: float = DEFAULT_MULTIPLIER,
    seed: int = 0,
    metadata: dict | None = None,
) -> CalibrationRun:
    """Board poses, then one RWHE solve per source, then the uncertainty models.

    The ``FUSED`` column of the summary fuses every calibration sample
    without the rejection gate, since the gate's sigmas are fitted on these
    same samples.
    """
    samples = [PnpSample(r.sample_id, r.observations) for r in records if r.observations]
    if not samples:
        raise InsufficientFeatures("no records carry board observations")
    pnp = solve_pnp(camera, board, samples, refine_intrinsics=refine_intrinsics)
    cam = pnp.refined_camera or camera
    truth = pnp.poses
    samples_by_id = {s.sample_id: s for s in samples}
    used = [r for r in records if r.sample_id in truth]
    warnings: list[str] = []

    kmeas = [kuka_measurement(r) for r in used]
    try:
        k_off = solve_rwhe(truth, kmeas, seed=seed)
    except PoseforgeError as exc:
        raise _with_context(exc, "KUKA RWHE") from None
    k_rec = {m.sample_id: reconstruct_pose(k_off, m) for m in kmeas}
    k_var = estimate_variances(truth, k_rec, Source.KUKA, floor=True)

    vmeas = [m for m in (vicon_measurement(r) for r in used) if m is not None]
    v_off = v_var = rejection = None
    v_rec: dict = {}
    if len(vmeas) >= 3:
        try:
            v_off = solve_rwhe(truth, vmeas, seed=seed)
        except PoseforgeError as exc:
            raise _with_context(exc, "Vicon RWHE") from None
        v_rec = {m.sample_id: reconstruct_pose(v_off, m) for m in vmeas}
        v_var = estimate_variances(truth, v_rec, Source.VICON, floor=True)
        rejection = fit_rejection_model(k_rec, v_rec, multiplier)
    else:
        msg = f"only {len(vmeas)} samples with Vicon chains; fusion disabled, KUKA-only profile"
        log.warning(msg)
        warnings.append(msg)

    meta = {"sample_count": len(used), "camera_id": "synthetic"}
    meta.update(metadata or {})
    profile = CalibrationProfile(k_off, k_var, v_off, v_var, rejection, meta)

    recon = {"KUKA": k_rec}
    if v_off is not None:
        recon["VICON"] = v_rec
        fused = {}
        for r in used:
            vm = vicon_measurement(r)
            label = fuse_pose_label(profile, kuka_measurement(r), vm, gate=False)
            fused[r.sample_id] = label.pose
        recon["FUSED"] = fused

    reports = {}
    for name, rec in recon.items():
        ids = sorted(rec)
        reports[name] = _report(truth, rec, ids, cam, board, samples_by_id)
    return CalibrationRun(profile, pnp, truth, recon, reports, warnings)


@dataclass
class LabelRun:
    labels: list
    rejected: int
    fused: int
    kuka_only: int
    no_vicon: int


def label(
    profile: CalibrationProfile,
    records: Sequence[MeasurementRecord],
    multiplier: float | None = None,
) -> LabelRun:
    labels: list[FusedPoseLabel] = []
    rejected = no_vicon = 0
    for r in records:
        vm = vicon_measurement(r)
        lab = fuse_pose_label(profile, kuka_measurement(r), vm, multiplier=multiplier)
        if vm is None:
            no_vicon += 1
        if lab.rejection_flags:
            rejected += 1
        labels.append(lab)
    fused = sum(1 for lab in labels if lab.provenance is Provenance.FUSED)
    return LabelRun(labels, rejected, fused, len(labels) - fused, no_vicon)
