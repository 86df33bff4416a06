import math
from dataclasses import replace

import numpy as np
import pytest

from poseforge.fusion import Provenance
from poseforge.pipeline import calibrate, label
from poseforge.sim import NoiseSpec, default_calibration_scenario, generate, trajectory_scenario


@pytest.fixture(scope="module")
def calibration_run():
    sc = default_calibration_scenario(0)
    out = generate(sc)
    return sc, calibrate(out.records, sc.camera, sc.board)


def test_table1_ordering_single_seed(calibration_run):
    _, run = calibration_run
    r = run.reports
    assert r["FUSED"].e_t <= r["VICON"].e_t <= r["KUKA"].e_t
    assert r["VICON"].e_p <= r["KUKA"].e_p
    assert set(run.profile.metadata) >= {"sample_count", "camera_id"}


def test_noiseless_labels_all_fused():
    sc = default_calibration_scenario(1).noiseless()
    sc = replace(sc, vicon_noise=NoiseSpec())
    out = generate(sc)
    run = calibrate(out.records, sc.camera, sc.board)
    res = label(run.profile, out.records)
    assert res.rejected == 0 and res.fused == len(out.records)
    assert max(run.reports["FUSED"].per_sample_t) < 1e-7


def test_label_count_matches_monte_carlo(calibration_run):
    """Rejections on a 111-sample trajectory with injected outliers.

    Inlier rejections are not rare at trajectory ranges: the offset-rotation
    error left by calibration grows with range. Their rate is estimated by
    Monte-Carlo on outlier-free trajectories; the count with outliers must
    then sit within 3 binomial sigma of 111-ish * (p + (1 - p) * p_false).
    """
    _, run = calibration_run
    inliers = rejected = 0
    for seed in range(500, 530):
        out = generate(trajectory_scenario(seed, outlier_rate=0.0))
        res = label(run.profile, out.records)
        inliers += len(out.records) - res.no_vicon
        rejected += res.rejected
    p_false = rejected / inliers

    p = 0.05
    out = generate(trajectory_scenario(700, outlier_rate=p))
    res = label(run.profile, out.records)
    n = len(out.records) - res.no_vicon
    q = p + (1 - p) * p_false
    assert abs(res.rejected - n * q) <= 3 * math.sqrt(n * q * (1 - q))
    by_id = {lab.sample_id: lab for lab in res.labels}
    assert all(by_id[i].provenance is Provenance.KUKA_ONLY and by_id[i].rejection_flags for i in out.outlier_ids)
    assert all(by_id[i].provenance is Provenance.KUKA_ONLY and not by_id[i].rejection_flags for i in out.dropout_ids)


def test_labels_without_vicon(calibration_run):
    _, run = calibration_run
    out = generate(replace(trajectory_scenario(3), vicon_noise=NoiseSpec(dropout_rate=1.0)))
    res = label(run.profile, out.records)
    assert res.no_vicon == len(out.records) and res.fused == 0
