"""File formats.

All documents carry ``schema_version``. Transforms are stored as::

    {"R": [r00, r01, r02, r10, ..., r22], "t": [tx, ty, tz]}

with the rotation row-major and the translation in meters. Floats are
written with ``repr`` precision so a write/read cycle is exact.

Measurement files are JSON Lines, one :class:`MeasurementRecord` per line::

    {"schema_version": 1, "sample_id": 7,
     "kuka_camera_chain": T, "kuka_target_chain": T,
     "vicon_camera_chain": T | null, "vicon_target_chain": T | null,
     "observations": [{"id": 12, "px": [u, v]}, ...] | null}

``*_camera_chain`` is the camera end-effector pose in the source's global
frame (T_{C_S S}); ``*_target_chain`` the target end-effector pose
(T_{T_S S}). Truth and label files are JSON Lines keyed by ``sample_id``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from .camera import FeatureObservation
from .errors import ParseError, ValidationError
from .se3 import RigidTransform, compose, invert, is_rotation, project_to_rotation

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ORTHONORMAL_TOL = 1e-6
EXACT_TOL = 1e-12


def transform_to_json(t: RigidTransform) -> dict[str, list[float]]:
    return {
        "R": [float(v) for v in t.rotation.reshape(-1)],
        "t": [float(v) for v in t.translation],
    }


def _as_rotation(R: np.ndarray, field: str) -> tuple[np.ndarray, bool]:
    """Validate a rotation; returns (matrix, was_reprojected)."""
    if not np.all(np.isfinite(R)):
        raise ValidationError("non-finite rotation entries", field)
    det = np.linalg.det(R)
    if det <= 0.0:
        raise ValidationError(f"determinant {det:.6g} is not +1 (reflection)", field)
    err = float(np.max(np.abs(R @ R.T - np.eye(3))))
    if err > ORTHONORMAL_TOL or abs(det - 1.0) > ORTHONORMAL_TOL:
        raise ValidationError(f"rotation not orthonormal (error {err:.3g})", field)
    if err > EXACT_TOL or abs(det - 1.0) > EXACT_TOL:
        return project_to_rotation(R), True
    return R, False


def transform_from_json(doc: Any, field: str = "transform", flags: list | None = None) -> RigidTransform:
    try:
        R = np.asarray(doc["R"], dtype=float)
        t = np.asarray(doc["t"], dtype=float)
    except (KeyError, TypeError, ValueError):
        raise ValidationError("expected {'R': [9 numbers], 't': [3 numbers]}", field) from None
    if R.size != 9 or t.size != 3:
        raise ValidationError("expected 9 rotation and 3 translation entries", field)
    if not np.all(np.isfinite(t)):
        raise ValidationError("non-finite translation", field)
    R, fixed = _as_rotation(R.reshape(3, 3), field)
    if fixed and flags is not None:
        flags.append(field)
    return RigidTransform(R, t)


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    sample_id: int
    kuka_camera_chain: RigidTransform
    kuka_target_chain: RigidTransform
    vicon_camera_chain: Optional[RigidTransform] = None
    vicon_target_chain: Optional[RigidTransform] = None
    observations: Optional[tuple] = None
    reorthonormalized: tuple = ()

    @property
    def has_vicon(self) -> bool:
        return self.vicon_camera_chain is not None and self.vicon_target_chain is not None

    def kuka_relative(self) -> RigidTransform:
        """T_{T_K C_K} = (T_{C_K K})^-1 T_{T_K K}."""
        return compose(invert(self.kuka_camera_chain), self.kuka_target_chain)

    def vicon_relative(self) -> Optional[RigidTransform]:
        if not self.has_vicon:
            return None
        return compose(invert(self.vicon_camera_chain), self.vicon_target_chain)

    def to_json(self) -> dict[str, Any]:
        def opt(t):
            return None if t is None else transform_to_json(t)

        obs = None
        if self.observations is not None:
            obs = [{"id": int(o.feature_id), "px": [o.pixel[0], o.pixel[1]]} for o in self.observations]
        return {
            "schema_version": SCHEMA_VERSION,
            "sample_id": int(self.sample_id),
            "kuka_camera_chain": transform_to_json(self.kuka_camera_chain),
            "kuka_target_chain": transform_to_json(self.kuka_target_chain),
            "vicon_camera_chain": opt(self.vicon_camera_chain),
            "vicon_target_chain": opt(self.vicon_target_chain),
            "observations": obs,
        }

    def same_as(self, other: "MeasurementRecord") -> bool:
        return self.to_json() == other.to_json()


def _record_from_json(doc: dict[str, Any]) -> MeasurementRecord:
    if not isinstance(doc, dict):
        raise ValidationError("record must be a JSON object", "record")
    if "sample_id" not in doc:
        raise ValidationError("missing", "sample_id")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValidationError(f"unsupported schema_version {version}", "schema_version")
    flags: list[str] = []
    kc = transform_from_json(doc.get("kuka_camera_chain"), "kuka_camera_chain", flags)
    kt = transform_from_json(doc.get("kuka_target_chain"), "kuka_target_chain", flags)
    vc_doc, vt_doc = doc.get("vicon_camera_chain"), doc.get("vicon_target_chain")
    if (vc_doc is None) != (vt_doc is None):
        raise ValidationError("vicon chains must be both present or both absent", "vicon_camera_chain")
    vc = transform_from_json(vc_doc, "vicon_camera_chain", flags) if vc_doc is not None else None
    vt = transform_from_json(vt_doc, "vicon_target_chain", flags) if vt_doc is not None else None
    obs = None
    if doc.get("observations") is not None:
        seen = set()
        items = []
        for o in doc["observations"]:
            try:
                fid = int(o["id"])
                px = (float(o["px"][0]), float(o["px"][1]))
            except (KeyError, TypeError, ValueError, IndexError):
                raise ValidationError("expected {'id': int, 'px': [u, v]}", "observations") from None
            if fid in seen:
                raise ValidationError(f"duplicate feature id {fid}", "observations")
            if not np.all(np.isfinite(px)):
                raise ValidationError(f"non-finite pixel for feature {fid}", "observations")
            seen.add(fid)
            items.append(FeatureObservation(fid, px))
        obs = tuple(items)
    return MeasurementRecord(int(doc["sample_id"]), kc, kt, vc, vt, obs, tuple(flags))


def read_jsonl(path) -> Iterable[tuple[int, Any]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(exc.msg, lineno) from None


def write_jsonl(path, docs: Iterable[dict[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc, separators=(",", ":")))
            fh.write("\n")


def write_json(path, doc: dict[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_json(path) -> dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno) from None


def ingest(path) -> list[MeasurementRecord]:
    """Read and validate a measurement file.

    Near-orthonormal rotations (error below 1e-6) are snapped to the nearest
    rotation and the field name is recorded in ``reorthonormalized``.
    """
    records: list[MeasurementRecord] = []
    ids: set[int] = set()
    for lineno, doc in read_jsonl(path):
        try:
            rec = _record_from_json(doc)
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
        if rec.sample_id in ids:
            raise ValidationError(f"line {lineno}: duplicate sample_id {rec.sample_id}", "sample_id")
        ids.add(rec.sample_id)
        if rec.reorthonormalized:
            log.warning("sample %d: re-orthonormalized %s", rec.sample_id, ", ".join(rec.reorthonormalized))
        records.append(rec)
    return records


def emit(path, records: Iterable[MeasurementRecord]) -> None:
    write_jsonl(path, (r.to_json() for r in records))


def write_truth(path, truth: dict[int, RigidTransform]) -> None:
    write_jsonl(
        path,
        (
            {"schema_version": SCHEMA_VERSION, "sample_id": int(k), "pose": transform_to_json(truth[k])}
            for k in sorted(truth)
        ),
    )


def read_truth(path) -> dict[int, RigidTransform]:
    out: dict[int, RigidTransform] = {}
    for lineno, doc in read_jsonl(path):
        try:
            out[int(doc["sample_id"])] = transform_from_json(doc["pose"], "pose")
        except (KeyError, TypeError):
            raise ParseError("expected sample_id and pose", lineno) from None
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
    return out
