import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from radarcal.ego_velocity import (
    Detection,
    LsqSystem,
    RadarScan,
    RansacConfig,
    build_lsq,
    ransac_ego_velocity,
    solve_ego_velocity,
)
from radarcal.errors import (
    DegenerateGeometryError,
    EmptyInputError,
    InsufficientDataError,
    InvalidArgumentError,
    NoConsensusError,
)


def scan_from_arrays(az, rr, t=0.0, rid="a"):
    dets = [
        Detection(range_m=10.0, azimuth_rad=float(a), range_rate_mps=float(r))
        for a, r in zip(az, rr)
    ]
    return RadarScan(timestamp=t, radar_id=rid, detections=dets)


def synthetic_scan(v, az, noise=None, t=0.0):
    """Scan whose range rates are exactly consistent with velocity ``v``."""
    az = np.asarray(az, dtype=float)
    rr = -(np.sin(az) * v[0] + np.cos(az) * v[1])
    if noise is not None:
        rr = rr + noise
    return scan_from_arrays(az, rr, t=t)


# ---------------------------------------------------------------------------
# build_lsq


def test_build_lsq_boresight_row():
    # target dead ahead (+y boresight), radar moving straight at it
    scan = scan_from_arrays([0.0], [-1.0])
    sys_ = build_lsq(scan)
    np.testing.assert_allclose(sys_.A, [[0.0, 1.0]], atol=1e-15)
    np.testing.assert_allclose(sys_.y, [1.0])


def test_build_lsq_side_row():
    scan = scan_from_arrays([math.pi / 2], [0.25])
    sys_ = build_lsq(scan)
    np.testing.assert_allclose(sys_.A, [[1.0, 0.0]], atol=1e-15)
    np.testing.assert_allclose(sys_.y, [-0.25])


def test_build_lsq_empty_scan():
    with pytest.raises(EmptyInputError):
        build_lsq(RadarScan(timestamp=0.0, radar_id="a", detections=[]))


def test_detection_validation():
    with pytest.raises(InvalidArgumentError):
        Detection(range_m=0.0, azimuth_rad=0.0, range_rate_mps=0.0)
    with pytest.raises(InvalidArgumentError):
        Detection(range_m=1.0, azimuth_rad=math.nan, range_rate_mps=0.0)
    with pytest.raises(InvalidArgumentError):
        RadarScan(timestamp=0.0, radar_id="radar a", detections=[])


# ---------------------------------------------------------------------------
# solve_ego_velocity


def test_exact_three_detection_solve():
    v = np.array([0.7, -1.1])
    scan = synthetic_scan(v, [-0.5, 0.1, 0.6])
    est = solve_ego_velocity(build_lsq(scan))
    np.testing.assert_allclose(est.velocity, v, atol=1e-12)
    assert est.n_inliers == est.n_total == 3


def test_too_few_detections():
    scan = synthetic_scan([1.0, 0.0], [-0.3, 0.4])
    with pytest.raises(InsufficientDataError):
        solve_ego_velocity(build_lsq(scan))


def test_collinear_azimuths_degenerate():
    scan = synthetic_scan([1.0, 0.0], [0.2, 0.2, 0.2])
    with pytest.raises(DegenerateGeometryError):
        solve_ego_velocity(build_lsq(scan))


@given(
    st.floats(min_value=-3, max_value=3),
    st.floats(min_value=-3, max_value=3),
    st.floats(min_value=-0.9, max_value=0.9),
)
def test_exact_solve_recovers_any_velocity(vx, vy, az_shift):
    az = np.array([-0.8, -0.2, 0.3, 0.9]) + az_shift
    scan = synthetic_scan([vx, vy], az)
    est = solve_ego_velocity(build_lsq(scan))
    np.testing.assert_allclose(est.velocity, [vx, vy], atol=1e-9)


def test_rotation_equivariance():
    """Rotating the whole scene rotates the velocity estimate the same way."""
    rng = np.random.default_rng(3)
    v = np.array([1.3, 0.4])
    az = rng.uniform(-1.0, 1.0, size=12)
    noise = 0.01 * rng.standard_normal(12)
    est = solve_ego_velocity(build_lsq(synthetic_scan(v, az, noise)))

    phi = 0.37
    # rotating the sensor frame by phi shifts every azimuth by -phi ... but
    # azimuth is measured from +y toward +x, so the velocity rotates by +phi
    # when the targets' azimuths shift by -phi with identical range rates.
    c, s = math.cos(phi), math.sin(phi)
    R = np.array([[c, -s], [s, c]])
    est_rot = solve_ego_velocity(build_lsq(synthetic_scan(R @ v, az - phi, noise)))
    np.testing.assert_allclose(est_rot.velocity, R @ est.velocity, atol=1e-9)
    # covariance transforms as R Sigma R^T
    np.testing.assert_allclose(est_rot.covariance, R @ est.covariance @ R.T, atol=1e-9)


def test_appending_consistent_detection_preserves_solution():
    v = np.array([-0.6, 0.9])
    az = [-0.7, -0.1, 0.5]
    est = solve_ego_velocity(build_lsq(synthetic_scan(v, az)))
    est2 = solve_ego_velocity(build_lsq(synthetic_scan(v, az + [1.0])))
    np.testing.assert_allclose(est2.velocity, est.velocity, atol=1e-9)


def test_covariance_matches_monte_carlo():
    """The reported covariance agrees with the scatter of repeated estimates."""
    rng = np.random.default_rng(10)
    v = np.array([1.0, 0.5])
    az = np.linspace(-1.0, 1.0, 15)
    sigma = 0.05
    ests = []
    covs = []
    for _ in range(1000):
        noise = sigma * rng.standard_normal(az.size)
        est = solve_ego_velocity(build_lsq(synthetic_scan(v, az, noise)))
        ests.append(est.velocity)
        covs.append(est.covariance)
    sample_cov = np.cov(np.array(ests).T)
    mean_cov = np.mean(covs, axis=0)
    # 1000 trials pin the diagonal to a few percent; 25% is generous
    np.testing.assert_allclose(
        np.diag(mean_cov), np.diag(sample_cov), rtol=0.25
    )


def test_covariance_scales_with_noise_power():
    rng = np.random.default_rng(11)
    v = np.array([0.3, 1.2])
    az = np.linspace(-0.9, 0.9, 20)
    out = {}
    for sigma in (0.02, 0.08):
        traces = []
        for _ in range(400):
            noise = sigma * rng.standard_normal(az.size)
            est = solve_ego_velocity(build_lsq(synthetic_scan(v, az, noise)))
            traces.append(np.trace(est.covariance))
        out[sigma] = np.mean(traces)
    ratio = out[0.08] / out[0.02]
    assert ratio == pytest.approx((0.08 / 0.02) ** 2, rel=0.2)


def test_bad_system_shapes():
    with pytest.raises(InvalidArgumentError):
        solve_ego_velocity(LsqSystem(A=np.zeros((3, 3)), y=np.zeros(3)))
    with pytest.raises(InvalidArgumentError):
        solve_ego_velocity(LsqSystem(A=np.zeros((3, 2)), y=np.zeros(4)))


# ---------------------------------------------------------------------------
# RANSAC


def test_ransac_clean_scan_matches_direct_fit():
    rng = np.random.default_rng(21)
    v = np.array([0.9, -0.4])
    az = rng.uniform(-1.0, 1.0, size=25)
    scan = synthetic_scan(v, az, 0.005 * rng.standard_normal(25))
    direct = solve_ego_velocity(build_lsq(scan))
    robust = ransac_ego_velocity(scan, RansacConfig(rng_seed=1))
    assert robust.n_inliers == 25
    np.testing.assert_allclose(robust.velocity, direct.velocity, atol=1e-12)
    np.testing.assert_allclose(robust.covariance, direct.covariance, atol=1e-12)


def test_ransac_rejects_outliers():
    rng = np.random.default_rng(22)
    v = np.array([1.4, 0.2])
    az = rng.uniform(-1.0, 1.0, size=30)
    noise = 0.005 * rng.standard_normal(30)
    rr = -(np.sin(az) * v[0] + np.cos(az) * v[1]) + noise
    bad = rng.choice(30, size=8, replace=False)
    rr[bad] += rng.uniform(1.0, 3.0, size=8) * rng.choice([-1.0, 1.0], size=8)
    scan = scan_from_arrays(az, rr)

    est = ransac_ego_velocity(scan, RansacConfig(rng_seed=2))
    assert np.linalg.norm(est.velocity - v) < 0.02
    assert not est.inlier_mask[bad].any()
    assert est.n_inliers >= 20
    assert est.n_total == 30


def test_ransac_no_consensus():
    rng = np.random.default_rng(23)
    az = rng.uniform(-1.0, 1.0, size=20)
    rr = rng.uniform(-5.0, 5.0, size=20)  # incoherent: no common velocity
    scan = scan_from_arrays(az, rr)
    with pytest.raises(NoConsensusError):
        ransac_ego_velocity(scan, RansacConfig(rng_seed=3))


def test_ransac_deterministic_per_scan():
    rng = np.random.default_rng(24)
    v = np.array([0.5, 1.0])
    az = rng.uniform(-1.0, 1.0, size=18)
    rr = -(np.sin(az) * v[0] + np.cos(az) * v[1]) + 0.01 * rng.standard_normal(18)
    rr[3] += 2.0
    scan = scan_from_arrays(az, rr, t=12.75)
    cfg = RansacConfig(rng_seed=9)
    a = ransac_ego_velocity(scan, cfg)
    b = ransac_ego_velocity(scan, cfg)
    np.testing.assert_array_equal(a.velocity, b.velocity)
    np.testing.assert_array_equal(a.inlier_mask, b.inlier_mask)


def test_ransac_too_few_detections():
    scan = synthetic_scan([1.0, 0.0], [0.1, 0.5])
    with pytest.raises(InsufficientDataError):
        ransac_ego_velocity(scan, RansacConfig())


def test_ransac_config_validation():
    with pytest.raises(InvalidArgumentError):
        RansacConfig(residual_threshold=0.0)
    with pytest.raises(InvalidArgumentError):
        RansacConfig(inlier_fraction_threshold=1.5)
    with pytest.raises(InvalidArgumentError):
        RansacConfig(max_iterations=0)
