"""Variance-weighted fusion of the two reconstructed poses.

Each source's uncertainty is estimated on the calibration set by treating
the board-derived poses as the mean: a per-axis position variance on the
camera-frame translation and a scalar rotation variance from geodesic
angles. New samples are fused componentwise for position and by a
weighted chordal mean for rotation. A Vicon reconstruction that deviates
from the KUKA one by more than ``multiplier * sigma`` on any position axis
or in rotation angle is rejected and the KUKA pose is used alone.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import numpy as np

from .errors import DegenerateMean, InsufficientSamples, ValidationError, ZeroVariance
from .io import transform_from_json, transform_to_json
from .rwhe import OffsetPair, Source, SourceMeasurement, reconstruct_pose
from .se3 import RigidTransform, geodesic_angle, weighted_rotation_mean

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
POSITION_VAR_FLOOR = 1e-6 ** 2
ROTATION_VAR_FLOOR = 1e-6 ** 2
DEFAULT_MULTIPLIER = 1.96
AXES = ("x", "y", "z")


class Provenance(str, enum.Enum):
    FUSED = "FUSED"
    KUKA_ONLY = "KUKA_ONLY"


@dataclass(frozen=True)
class VarianceModel:
    position_var: tuple  # m^2 per camera-frame axis
    rotation_var: float  # rad^2
    source_tag: Source = Source.KUKA

    def __post_init__(self):
        pv = tuple(float(v) for v in self.position_var)
        if len(pv) != 3:
            raise ValidationError("expected 3 position variances", "position_var")
        object.__setattr__(self, "position_var", pv)
        object.__setattr__(self, "source_tag", Source(self.source_tag))
        if min(pv) <= 0.0 or not self.rotation_var > 0.0:
            raise ZeroVariance(f"{self.source_tag.value}: variances must be positive")

    def to_json(self) -> dict[str, Any]:
        return {
            "source": self.source_tag.value,
            "position_var": list(self.position_var),
            "rotation_var": float(self.rotation_var),
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "VarianceModel":
        return cls(tuple(doc["position_var"]), float(doc["rotation_var"]), Source(doc["source"]))


@dataclass(frozen=True)
class RejectionModel:
    position_sigma: tuple  # m, per axis
    rotation_sigma: float  # rad
    confidence_multiplier: float = DEFAULT_MULTIPLIER

    def __post_init__(self):
        ps = tuple(float(v) for v in self.position_sigma)
        object.__setattr__(self, "position_sigma", ps)
        if len(ps) != 3 or min(ps) <= 0.0 or not self.rotation_sigma > 0.0:
            raise ValidationError("sigmas must be 3 positive position values and a positive rotation value", "rejection")
        if not self.confidence_multiplier > 0.0:
            raise ValidationError("multiplier must be positive", "confidence_multiplier")

    def with_multiplier(self, m: float) -> "RejectionModel":
        return RejectionModel(self.position_sigma, self.rotation_sigma, m)

    def to_json(self) -> dict[str, Any]:
        return {
            "position_sigma": list(self.position_sigma),
            "rotation_sigma": float(self.rotation_sigma),
            "confidence_multiplier": float(self.confidence_multiplier),
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "RejectionModel":
        return cls(
            tuple(doc["position_sigma"]),
            float(doc["rotation_sigma"]),
            float(doc.get("confidence_multiplier", DEFAULT_MULTIPLIER)),
        )


@dataclass(frozen=True)
class RejectionDecision:
    accepted: bool
    flags: tuple = ()


@dataclass(frozen=True)
class CalibrationProfile:
    """Everything needed to label new samples.

    ``vicon_offsets``, ``vicon_variance`` and ``rejection`` are None when
    the calibration data had no Vicon chains; labeling is then KUKA-only.
    """

    kuka_offsets: OffsetPair
    kuka_variance: VarianceModel
    vicon_offsets: Optional[OffsetPair] = None
    vicon_variance: Optional[VarianceModel] = None
    rejection: Optional[RejectionModel] = None
    metadata: dict = field(default_factory=dict)

    @property
    def fusion_enabled(self) -> bool:
        return self.vicon_offsets is not None and self.vicon_variance is not None

    def to_json(self) -> dict[str, Any]:
        def offsets(o: Optional[OffsetPair]):
            if o is None:
                return None
            return {
                "target_offset": transform_to_json(o.target_offset),
                "camera_offset": transform_to_json(o.camera_offset),
                "residual_rms": float(o.residual_rms),
            }

        return {
            "schema_version": SCHEMA_VERSION,
            "kuka_offsets": offsets(self.kuka_offsets),
            "vicon_offsets": offsets(self.vicon_offsets),
            "kuka_variance": self.kuka_variance.to_json(),
            "vicon_variance": None if self.vicon_variance is None else self.vicon_variance.to_json(),
            "rejection": None if self.rejection is None else self.rejection.to_json(),
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "CalibrationProfile":
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValidationError(f"unsupported schema_version {doc.get('schema_version')}", "schema_version")

        def offsets(d, name):
            if d is None:
                return None
            return OffsetPair(
                transform_from_json(d["target_offset"], f"{name}.target_offset"),
                transform_from_json(d["camera_offset"], f"{name}.camera_offset"),
                float(d.get("residual_rms", 0.0)),
            )

        try:
            return cls(
                offsets(doc["kuka_offsets"], "kuka_offsets"),
                VarianceModel.from_json(doc["kuka_variance"]),
                offsets(doc.get("vicon_offsets"), "vicon_offsets"),
                VarianceModel.from_json(doc["vicon_variance"]) if doc.get("vicon_variance") else None,
                RejectionModel.from_json(doc["rejection"]) if doc.get("rejection") else None,
                dict(doc.get("metadata", {})),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError("malformed calibration profile", str(exc)) from None


@dataclass(frozen=True)
class FusedPoseLabel:
    sample_id: int
    pose: RigidTransform
    provenance: Provenance
    fused_position_var: tuple
    fused_rotation_var: float
    rejection_flags: tuple = ()
    warnings: tuple = ()

    def to_json(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "sample_id": int(self.sample_id),
            "pose": transform_to_json(self.pose),
            "provenance": self.provenance.value,
            "fused_position_var": [float(v) for v in self.fused_position_var],
            "fused_rotation_var": float(self.fused_rotation_var),
            "rejection_flags": list(self.rejection_flags),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "FusedPoseLabel":
        return cls(
            int(doc["sample_id"]),
            transform_from_json(doc["pose"], "pose"),
            Provenance(doc["provenance"]),
            tuple(doc["fused_position_var"]),
            float(doc["fused_rotation_var"]),
            tuple(doc.get("rejection_flags", ())),
            tuple(doc.get("warnings", ())),
        )


def _paired(truth: Mapping[int, RigidTransform], other: Mapping[int, RigidTransform]):
    ids = sorted(set(truth) & set(other))
    if len(ids) < 2:
        raise InsufficientSamples(f"need at least 2 common samples, got {len(ids)}")
    return ids


def estimate_variances(
    truth: Mapping[int, RigidTransform],
    reconstructed: Mapping[int, RigidTransform],
    tag: Source | str,
    floor: bool = False,
) -> VarianceModel:
    """Per-axis position variance and scalar rotation variance about ``truth``.

    Both use an N-1 denominator with ``truth`` as the known mean. With
    ``floor`` the variances are clamped to at least (1e-6)^2; otherwise a
    zero variance raises ZeroVariance.
    """
    ids = _paired(truth, reconstructed)
    n = len(ids)
    dp = np.array([reconstructed[i].translation - truth[i].translation for i in ids])
    dtheta = np.array([geodesic_angle(reconstructed[i].rotation, truth[i].rotation) for i in ids])
    pos_var = (dp ** 2).sum(axis=0) / (n - 1)
    rot_var = float((dtheta ** 2).sum() / (n - 1))
    if floor:
        pos_var = np.maximum(pos_var, POSITION_VAR_FLOOR)
        rot_var = max(rot_var, ROTATION_VAR_FLOOR)
    elif pos_var.min() <= 0.0 or rot_var <= 0.0:
        raise ZeroVariance(f"{Source(tag).value}: zero variance (reconstruction identical to truth)")
    return VarianceModel(tuple(pos_var), rot_var, Source(tag))


def fit_rejection_model(
    kuka: Mapping[int, RigidTransform],
    vicon: Mapping[int, RigidTransform],
    multiplier: float = DEFAULT_MULTIPLIER,
) -> RejectionModel:
    """Spread of Vicon reconstructions about KUKA ones.

    Zero-mean standard deviations with an N-1 denominator, per position
    axis and for the geodesic angle, floored at 1e-6.
    """
    v = estimate_variances(kuka, vicon, Source.VICON, floor=True)
    return RejectionModel(
        tuple(math.sqrt(x) for x in v.position_var), math.sqrt(v.rotation_var), multiplier
    )


def fuse_position(z_k, z_v, var_k, var_v) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis inverse-variance mean of two positions and its variance."""
    z_k = np.asarray(z_k, dtype=float)
    z_v = np.asarray(z_v, dtype=float)
    var_k = np.broadcast_to(np.asarray(var_k, dtype=float), z_k.shape)
    var_v = np.broadcast_to(np.asarray(var_v, dtype=float), z_k.shape)
    if np.any(var_k <= 0.0) or np.any(var_v <= 0.0):
        raise ZeroVariance("fusion needs positive variances")
    total = var_k + var_v
    fused = (var_v * z_k + var_k * z_v) / total
    # keep the result inside the input interval despite rounding
    fused = np.clip(fused, np.minimum(z_k, z_v), np.maximum(z_k, z_v))
    fused_var = 1.0 / (1.0 / var_k + 1.0 / var_v)
    return fused, fused_var


def rotation_weights(var_k: float, var_v: float) -> tuple[float, float]:
    if not (var_k > 0.0 and var_v > 0.0):
        raise ZeroVariance("fusion needs positive variances")
    w_k = var_v / (var_k + var_v)
    return w_k, 1.0 - w_k


def fuse_rotation(r_k, r_v, var_k: float, var_v: float) -> np.ndarray:
    w_k, w_v = rotation_weights(var_k, var_v)
    return weighted_rotation_mean([r_k, r_v], [w_k, w_v])


def check_rejection(pose_k: RigidTransform, pose_v: RigidTransform, model: RejectionModel) -> RejectionDecision:
    m = model.confidence_multiplier
    flags = []
    diff = np.abs(pose_v.translation - pose_k.translation)
    for axis, d, s in zip(AXES, diff, model.position_sigma):
        if d > m * s:
            flags.append(f"position.{axis}")
    if geodesic_angle(pose_k.rotation, pose_v.rotation) > m * model.rotation_sigma:
        flags.append("rotation")
    return RejectionDecision(not flags, tuple(flags))


def _kuka_only(sample_id, pose, profile, flags=(), warnings=()) -> FusedPoseLabel:
    return FusedPoseLabel(
        sample_id,
        pose,
        Provenance.KUKA_ONLY,
        profile.kuka_variance.position_var,
        profile.kuka_variance.rotation_var,
        tuple(flags),
        tuple(warnings),
    )


def fuse_pose_label(
    profile: CalibrationProfile,
    kuka_meas: SourceMeasurement,
    vicon_meas: Optional[SourceMeasurement] = None,
    *,
    gate: bool = True,
    multiplier: float | None = None,
) -> FusedPoseLabel:
    """Label one sample.

    Falls back to the KUKA reconstruction when Vicon is missing, fusion is
    disabled in the profile, the rejection gate fires, or the rotation mean
    is degenerate (the last adds the warning ``degenerate_mean``).
    """
    sid = kuka_meas.sample_id
    pose_k = reconstruct_pose(profile.kuka_offsets, kuka_meas)
    if vicon_meas is None or not profile.fusion_enabled:
        return _kuka_only(sid, pose_k, profile)
    pose_v = reconstruct_pose(profile.vicon_offsets, vicon_meas)
    if gate and profile.rejection is not None:
        model = profile.rejection if multiplier is None else profile.rejection.with_multiplier(multiplier)
        decision = check_rejection(pose_k, pose_v, model)
        if not decision.accepted:
            return _kuka_only(sid, pose_k, profile, decision.flags)
    vk, vv = profile.kuka_variance, profile.vicon_variance
    position, pos_var = fuse_position(pose_k.translation, pose_v.translation, vk.position_var, vv.position_var)
    try:
        rotation = fuse_rotation(pose_k.rotation, pose_v.rotation, vk.rotation_var, vv.rotation_var)
    except DegenerateMean:
        log.warning("sample %s: degenerate rotation mean, using KUKA pose", sid)
        return _kuka_only(sid, pose_k, profile, warnings=("degenerate_mean",))
    rot_var = 1.0 / (1.0 / vk.rotation_var + 1.0 / vv.rotation_var)
    return FusedPoseLabel(
        sid, RigidTransform(rotation, position), Provenance.FUSED, tuple(pos_var), rot_var
    )
