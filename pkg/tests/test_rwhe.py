import math

import numpy as np
import pytest

from poseforge.errors import DegenerateMotion, InsufficientSamples
from poseforge.rwhe import (
    OffsetPair,
    Source,
    SourceMeasurement,
    check_motion,
    closed_form_offsets,
    reconstruct_pose,
    residual_per_sample,
    solve_rwhe,
)
from poseforge.se3 import RigidTransform, compose, invert, random_rotation, rodrigues_to_matrix
from poseforge.sim import default_offsets

from conftest import random_transform


def synthesize(offsets, truth):
    # chain = inv(C) @ T_TC @ T_{T_S T}
    return [
        SourceMeasurement(i, compose(compose(invert(offsets.camera_offset), T), offsets.target_offset))
        for i, T in truth.items()
    ]


def random_truth(rng, n):
    return {i: RigidTransform(random_rotation(rng), rng.uniform(-1, 1, 3) + [0, 0, 3]) for i in range(n)}


def assert_offsets_close(a, b, tol):
    for x, y in ((a.target_offset, b.target_offset), (a.camera_offset, b.camera_offset)):
        assert np.linalg.norm(x.translation - y.translation) < tol
        assert np.linalg.norm(x.rotation - y.rotation) < tol


def test_reconstruct_identity_offsets(rng):
    chain = random_transform(rng)
    assert reconstruct_pose(OffsetPair.identity(), SourceMeasurement(0, chain)).allclose(chain, atol=0.0)


def test_reconstruct_recovers_truth(rng):
    off = OffsetPair(random_transform(rng), random_transform(rng))
    truth = random_truth(rng, 5)
    for m in synthesize(off, truth):
        rec = reconstruct_pose(off, m)
        assert rec.allclose(truth[m.sample_id], atol=1e-12)
        assert compose(rec, invert(rec)).allclose(RigidTransform.identity(), atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_noiseless_recovery(seed):
    rng = np.random.default_rng(seed)
    off = OffsetPair(random_transform(rng, 0.3), random_transform(rng, 0.3))
    truth = random_truth(rng, 10)
    sol = solve_rwhe(truth, synthesize(off, truth))
    assert_offsets_close(sol, off, 1e-7)
    assert sol.residual_rms < 1e-7
    assert max(residual_per_sample(sol, truth, synthesize(off, truth)).values()) < 1e-7


def test_large_offsets_recovered(rng):
    off, _ = default_offsets()
    truth = random_truth(rng, 20)
    sol = solve_rwhe(truth, synthesize(off, truth))
    assert_offsets_close(sol, off, 1e-7)


def test_identity_offsets_converge_immediately(rng):
    truth = random_truth(rng, 8)
    sol = solve_rwhe(truth, synthesize(OffsetPair.identity(), truth), init=OffsetPair.identity())
    assert sol.report.iterations <= 2
    assert_offsets_close(sol, OffsetPair.identity(), 1e-10)


def test_closed_form_is_exact_without_noise(rng):
    off = OffsetPair(random_transform(rng), random_transform(rng))
    truth = random_truth(rng, 10)
    meas = synthesize(off, truth)
    cf = closed_form_offsets([truth[m.sample_id] for m in meas], [m.target_chain for m in meas])
    assert_offsets_close(cf, off, 1e-8)


def test_single_axis_motion_is_degenerate(rng):
    chains = [RigidTransform(rodrigues_to_matrix([0, 0, a]), rng.normal(size=3)) for a in np.linspace(0, 2, 10)]
    with pytest.raises(DegenerateMotion):
        check_motion(chains)
    truth = {i: c for i, c in enumerate(chains)}
    with pytest.raises(DegenerateMotion):
        solve_rwhe(truth, [SourceMeasurement(i, c) for i, c in truth.items()])


def test_two_axis_motion_has_full_rank(rng):
    # pairwise relative rotations of two distinct axes already span 3 dimensions
    Rs = [np.eye(3), rodrigues_to_matrix([0.5, 0, 0]), rodrigues_to_matrix([0, 0.5, 0])]
    assert check_motion([RigidTransform(R, np.zeros(3)) for R in Rs]) == 3


def test_insufficient_samples(rng):
    truth = random_truth(rng, 2)
    with pytest.raises(InsufficientSamples):
        solve_rwhe(truth, synthesize(OffsetPair.identity(), truth))
    truth = random_truth(rng, 4)
    meas = synthesize(OffsetPair.identity(), truth)
    del truth[0]
    with pytest.raises(InsufficientSamples):
        solve_rwhe(truth, meas)


def test_noise_gives_small_residual(rng):
    off = OffsetPair(random_transform(rng, 0.2), random_transform(rng, 0.2))
    truth = random_truth(rng, 40)
    meas = []
    for m in synthesize(off, truth):
        c = m.target_chain
        noisy = RigidTransform(rodrigues_to_matrix(rng.normal(scale=1e-3, size=3)) @ c.rotation, c.translation + rng.normal(scale=1e-3, size=3))
        meas.append(SourceMeasurement(m.sample_id, noisy, Source.VICON))
    sol = solve_rwhe(truth, meas)
    assert np.linalg.norm(sol.camera_offset.translation - off.camera_offset.translation) < 3e-3
    assert sol.residual_rms < 1e-2


def test_left_invariance(rng):
    """Fixed transforms on truth (left) and measurements (right) are absorbed by the offsets."""
    off = OffsetPair(random_transform(rng, 0.3), random_transform(rng, 0.3))
    truth = random_truth(rng, 12)
    meas = synthesize(off, truth)
    A, B = random_transform(rng, 0.5), random_transform(rng, 0.5)
    truth2 = {i: compose(A, T) for i, T in truth.items()}
    meas2 = [SourceMeasurement(m.sample_id, compose(m.target_chain, B)) for m in meas]
    sol = solve_rwhe(truth2, meas2)
    # T' = A C M Y^-1 = (A C)(M B)(B^-1 Y^-1), so C' = A C and target offset' = Y B
    expected = OffsetPair(compose(off.target_offset, B), compose(A, off.camera_offset))
    assert_offsets_close(sol, expected, 1e-7)


def test_cost_not_above_initial(rng):
    off = OffsetPair(random_transform(rng, 0.3), random_transform(rng, 0.3))
    truth = random_truth(rng, 15)
    meas = []
    for m in synthesize(off, truth):
        c = m.target_chain
        meas.append(SourceMeasurement(m.sample_id, RigidTransform(rodrigues_to_matrix(rng.normal(scale=0.01, size=3)) @ c.rotation, c.translation)))
    sol = solve_rwhe(truth, meas, init=OffsetPair.identity())
    assert sol.report.final_cost <= sol.report.initial_cost
