import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poseforge.errors import InsufficientSamples, ValidationError, ZeroVariance
from poseforge.fusion import (
    CalibrationProfile,
    FusedPoseLabel,
    Provenance,
    RejectionModel,
    VarianceModel,
    check_rejection,
    estimate_variances,
    fit_rejection_model,
    fuse_pose_label,
    fuse_position,
    fuse_rotation,
    rotation_weights,
)
from poseforge.rwhe import OffsetPair, Source, SourceMeasurement
from poseforge.se3 import (
    RigidTransform,
    chordal_cost,
    geodesic_angle,
    random_rotation,
    rodrigues_to_matrix,
)

from conftest import random_transform

pos_var = st.floats(1e-12, 1e6, allow_nan=False)
coord = st.floats(-1e3, 1e3, allow_nan=False)


def perturbed(T, dt=(0, 0, 0), rot=(0, 0, 0)):
    return RigidTransform(rodrigues_to_matrix(rot) @ T.rotation, T.translation + np.asarray(dt, float))


def test_variances_zero_raises(rng):
    truth = {i: random_transform(rng) for i in range(4)}
    with pytest.raises(ZeroVariance):
        estimate_variances(truth, truth, Source.KUKA)
    v = estimate_variances(truth, truth, Source.KUKA, floor=True)
    assert min(v.position_var) == pytest.approx(1e-12)


def test_variances_two_sample_arithmetic(rng):
    truth = {0: random_transform(rng), 1: random_transform(rng)}
    rec = {0: perturbed(truth[0], (1e-3, 0, 0), (1e-4, 0, 0)), 1: perturbed(truth[1], (-1e-3, 0, 0), (0, 1e-4, 0))}
    v = estimate_variances(truth, rec, Source.VICON, floor=True)
    assert v.position_var[0] == pytest.approx(2e-6, rel=1e-9)
    assert v.rotation_var == pytest.approx(2e-8, rel=1e-6)


def test_variances_need_two_samples(rng):
    truth = {0: random_transform(rng)}
    with pytest.raises(InsufficientSamples):
        estimate_variances(truth, truth, Source.KUKA)


def test_variances_monte_carlo(rng):
    truth = {i: random_transform(rng) for i in range(1000)}
    rec = {i: perturbed(T, rng.normal(scale=5e-4, size=3)) for i, T in truth.items()}
    v = estimate_variances(truth, rec, Source.KUKA, floor=True)
    np.testing.assert_allclose(v.position_var, 2.5e-7, rtol=0.10)


def test_fuse_position_examples():
    x, var = fuse_position([1.0], [3.0], [0.5], [0.5])
    assert x[0] == 2.0 and var[0] == 0.25
    x, _ = fuse_position([1.0], [5.0], [3.0], [1.0])
    assert x[0] == pytest.approx(0.25 * 1.0 + 0.75 * 5.0)
    x, _ = fuse_position([0.7, -2.0, 4.0], [0.7, -2.0, 4.0], [1e-6, 3.0, 5.0], [2.0, 1e-9, 5.0])
    np.testing.assert_array_equal(x, [0.7, -2.0, 4.0])


@settings(max_examples=300, deadline=None)
@given(coord, coord, pos_var, pos_var)
def test_fuse_position_betweenness(a, b, va, vb):
    x, var = fuse_position([a], [b], [va], [vb])
    assert min(a, b) <= x[0] <= max(a, b)
    assert var[0] <= min(va, vb)


def test_fuse_position_needs_positive_variance():
    with pytest.raises(ZeroVariance):
        fuse_position([0.0], [1.0], [0.0], [1.0])


def test_rotation_weights():
    w_k, w_v = rotation_weights(3.0, 1.0)
    assert (w_k, w_v) == (0.25, 0.75)


def test_fuse_rotation_examples(rng):
    R = random_rotation(rng)
    np.testing.assert_allclose(fuse_rotation(R, R, 1.0, 2.0), R, atol=1e-14)
    Rv = rodrigues_to_matrix([0.1, 0.2, -0.3]) @ R
    assert geodesic_angle(fuse_rotation(R, Rv, 1e12, 1.0), Rv) < 1e-5


def test_fuse_rotation_midpoint_grid_oracle():
    a = np.eye(3)
    b = rodrigues_to_matrix([0, 0, math.radians(10)])
    M = fuse_rotation(a, b, 1.0, 1.0)
    grid = np.arange(0.0, 10.0 + 1e-9, 0.001)
    costs = [chordal_cost(rodrigues_to_matrix([0, 0, math.radians(g)]), [a, b], [0.5, 0.5]) for g in grid]
    best = rodrigues_to_matrix([0, 0, math.radians(grid[int(np.argmin(costs))])])
    assert math.degrees(geodesic_angle(M, best)) < 0.01


def test_rejection_examples(rng):
    model = RejectionModel((1e-3, 2e-3, 3e-3), 1e-3)
    T = random_transform(rng)
    assert check_rejection(T, T, model).accepted
    d = check_rejection(T, perturbed(T, (3e-3, 0, 0)), model)
    assert not d.accepted and d.flags == ("position.x",)
    d = check_rejection(T, perturbed(T, (0, 0, 0), (0, 0, 3e-3)), model)
    assert d.flags == ("rotation",)
    # just inside the gate on every component
    d = check_rejection(T, perturbed(T, (1.9e-3, -3.8e-3, 5.7e-3), (0, 1.9e-3, 0)), model)
    assert d.accepted


def test_rejection_model_validation():
    with pytest.raises(ValidationError):
        RejectionModel((0.0, 1.0, 1.0), 1.0)
    with pytest.raises(ValidationError):
        RejectionModel((1.0, 1.0, 1.0), 1.0, -1.0)
    assert RejectionModel((1.0, 1.0, 1.0), 1.0).with_multiplier(3.0).confidence_multiplier == 3.0


def test_fit_rejection_model(rng):
    kuka = {i: random_transform(rng) for i in range(2000)}
    vicon = {i: perturbed(T, rng.normal(scale=[1e-3, 2e-3, 4e-3])) for i, T in kuka.items()}
    m = fit_rejection_model(kuka, vicon)
    np.testing.assert_allclose(m.position_sigma, [1e-3, 2e-3, 4e-3], rtol=0.05)
    assert m.confidence_multiplier == 1.96


def _profile(fusion=True):
    off = OffsetPair.identity()
    kv = VarianceModel((4e-6,) * 3, 1e-4, Source.KUKA)
    vv = VarianceModel((1e-6,) * 3, 1e-5, Source.VICON)
    rej = RejectionModel((1e-3,) * 3, 5e-3)
    if not fusion:
        return CalibrationProfile(off, kv)
    return CalibrationProfile(off, kv, off, vv, rej, {"sample_count": 3})


def test_label_kuka_only_without_vicon(rng):
    T = random_transform(rng)
    lab = fuse_pose_label(_profile(), SourceMeasurement(0, T))
    assert lab.provenance is Provenance.KUKA_ONLY
    assert lab.pose.allclose(T, atol=0.0)
    assert lab.fused_position_var == (4e-6,) * 3 and lab.fused_rotation_var == 1e-4
    lab = fuse_pose_label(_profile(False), SourceMeasurement(0, T), SourceMeasurement(0, T, Source.VICON))
    assert lab.provenance is Provenance.KUKA_ONLY


def test_label_fused_consistent(rng):
    T = random_transform(rng)
    lab = fuse_pose_label(_profile(), SourceMeasurement(0, T), SourceMeasurement(0, T, Source.VICON))
    assert lab.provenance is Provenance.FUSED
    assert lab.pose.allclose(T, atol=1e-12)
    np.testing.assert_allclose(lab.fused_position_var, 0.8e-6)
    assert lab.fused_rotation_var == pytest.approx(1.0 / (1e4 + 1e5))


def test_label_rejects_outlier(rng):
    T = random_transform(rng)
    bad = perturbed(T, (1e-2, 0, 0))
    lab = fuse_pose_label(_profile(), SourceMeasurement(0, T), SourceMeasurement(0, bad, Source.VICON))
    assert lab.provenance is Provenance.KUKA_ONLY
    assert lab.rejection_flags == ("position.x",)
    # ungated fusion accepts it
    lab = fuse_pose_label(_profile(), SourceMeasurement(0, T), SourceMeasurement(0, bad, Source.VICON), gate=False)
    assert lab.provenance is Provenance.FUSED
    # a wide multiplier too
    lab = fuse_pose_label(_profile(), SourceMeasurement(0, T), SourceMeasurement(0, bad, Source.VICON), multiplier=20.0)
    assert lab.provenance is Provenance.FUSED


def test_label_degenerate_mean_falls_back(rng):
    T = RigidTransform.identity()
    flip = RigidTransform(np.diag([1.0, -1.0, -1.0]), np.zeros(3))
    prof = CalibrationProfile(
        OffsetPair.identity(),
        VarianceModel((1e-6,) * 3, 1.0),
        OffsetPair.identity(),
        VarianceModel((1e-6,) * 3, 1.0, Source.VICON),
    )
    lab = fuse_pose_label(prof, SourceMeasurement(0, T), SourceMeasurement(0, flip, Source.VICON))
    assert lab.provenance is Provenance.KUKA_ONLY
    assert lab.warnings == ("degenerate_mean",)


def test_profile_and_label_json_round_trip(rng):
    prof = _profile()
    back = CalibrationProfile.from_json(prof.to_json())
    assert back.to_json() == prof.to_json()
    assert not CalibrationProfile.from_json(_profile(False).to_json()).fusion_enabled
    T = random_transform(rng)
    lab = fuse_pose_label(prof, SourceMeasurement(4, T), SourceMeasurement(4, perturbed(T, (1e-2, 0, 0)), Source.VICON))
    assert FusedPoseLabel.from_json(lab.to_json()).to_json() == lab.to_json()


def test_profile_schema_checked():
    doc = _profile().to_json()
    doc["schema_version"] = 99
    with pytest.raises(ValidationError):
        CalibrationProfile.from_json(doc)
    doc = _profile().to_json()
    del doc["kuka_variance"]
    with pytest.raises(ValidationError):
        CalibrationProfile.from_json(doc)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), pos_var, pos_var)
def test_fused_rotation_between_inputs(seed, vk, vv):
    rng = np.random.default_rng(seed)
    a = random_rotation(rng)
    b = rodrigues_to_matrix(rng.normal(size=3)) @ a
    M = fuse_rotation(a, b, vk, vv)
    gap = geodesic_angle(a, b)
    assert geodesic_angle(M, a) <= gap + 1e-9 and geodesic_angle(M, b) <= gap + 1e-9
    w_k, w_v = rotation_weights(vk, vv)
    assert w_k + w_v == 1.0
