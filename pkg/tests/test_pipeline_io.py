import json
import math

import numpy as np
import pytest

from radarcal.calib_solver import MeasurementPair, solve_lm
from radarcal.ego_velocity import Detection, EgoVelocityEstimate, RadarScan, RansacConfig
from radarcal.errors import InvalidArgumentError, ParseError
from radarcal.pipeline_io import (
    PAIRS_HEADER,
    PipelineConfig,
    estimate_stream,
    filter_pairs,
    load_config,
    load_pairs,
    load_scans,
    load_truth,
    parse_config,
    read_excitation,
    read_json,
    read_report,
    save_config,
    save_pairs,
    save_scans,
    save_truth,
    serialize_config,
    synchronize,
    write_excitation,
    write_report,
)
from radarcal.simulator import NoiseSpec, TrajectoryProfile, generate_trajectory, simulate_pairs

# floats with no short decimal form; a faithful round trip must be bitwise
NASTY = [0.1 + 0.2, 1.0 / 3.0, -0.0, 5e-324, 1e300, math.pi, 123456789.123456789, -2.5e-17]


def make_scan(ts, rid, az, rr, rng=10.0):
    dets = [
        Detection(range_m=rng, azimuth_rad=float(a), range_rate_mps=float(r))
        for a, r in zip(az, rr)
    ]
    return RadarScan(timestamp=ts, radar_id=rid, detections=dets)


def estimate(ts, v, cov_scale=1e-4):
    return EgoVelocityEstimate(
        velocity=np.asarray(v, dtype=float),
        covariance=cov_scale * np.eye(2),
        n_inliers=10,
        n_total=12,
        timestamp=ts,
    )


def nasty_pairs():
    out = []
    for j, x in enumerate(NASTY):
        cov = np.array([[abs(x) + 1.0, x / 10.0], [x / 10.0, abs(x) + 2.0]])
        out.append(
            MeasurementPair(
                h_a=np.array([x, -x]),
                h_b=np.array([x / 7.0, x * 3.0]),
                cov_a=cov,
                cov_b=cov * 2.0,
                timestamp=float(j) + abs(x) % 1.0,
            )
        )
    return out


# ---------------------------------------------------------------------------
# scan files


def test_scans_round_trip_is_bitwise(tmp_path):
    scans = {
        "a": [make_scan(0.0, "a", [0.1, NASTY[0]], [NASTY[1], -0.5]), make_scan(0.5, "a", [0.2], [0.3])],
        "b": [make_scan(0.25, "b", [5e-324], [1e308])],
    }
    path = tmp_path / "scans.txt"
    save_scans(scans, path)
    loaded = load_scans(path)
    assert set(loaded) == {"a", "b"}
    for rid in ("a", "b"):
        assert len(loaded[rid]) == len(scans[rid])
        for orig, back in zip(scans[rid], loaded[rid]):
            assert back.timestamp == orig.timestamp
            assert back.radar_id == orig.radar_id
            for d0, d1 in zip(orig.detections, back.detections):
                assert (d1.range_m, d1.azimuth_rad, d1.range_rate_mps) == (
                    d0.range_m,
                    d0.azimuth_rad,
                    d0.range_rate_mps,
                )


def test_scans_accept_flat_list_and_sort(tmp_path):
    flat = [make_scan(1.0, "b", [0.1], [0.2]), make_scan(0.0, "a", [0.3], [0.4])]
    path = tmp_path / "scans.txt"
    save_scans(flat, path)
    loaded = load_scans(path)
    assert [s.timestamp for s in loaded["a"]] == [0.0]
    assert [s.timestamp for s in loaded["b"]] == [1.0]


def test_scans_reject_duplicates_and_garbage(tmp_path):
    dup = tmp_path / "dup.txt"
    save_scans([make_scan(1.0, "a", [0.1], [0.2]), make_scan(1.0, "a", [0.3], [0.4])], dup)
    with pytest.raises(ParseError):
        load_scans(dup)

    bad = tmp_path / "bad.txt"
    bad.write_text("# radarcal scans 1\n0.0 a 2 10.0 0.1 0.2\n")  # declares 2, has 1
    with pytest.raises(ParseError) as exc:
        load_scans(bad)
    assert exc.value.line == 2

    wrong = tmp_path / "wrong.txt"
    wrong.write_text("# radarcal pairs 1\n")
    with pytest.raises(ParseError):
        load_scans(wrong)

    with pytest.raises(FileNotFoundError):
        load_scans(tmp_path / "missing.txt")


# ---------------------------------------------------------------------------
# pair files


def test_pairs_round_trip_is_bitwise(tmp_path):
    pairs = nasty_pairs()
    path = tmp_path / "pairs.txt"
    save_pairs(pairs, path)
    loaded = load_pairs(path)
    assert len(loaded) == len(pairs)
    for orig, back in zip(pairs, loaded):
        assert back.timestamp == orig.timestamp
        np.testing.assert_array_equal(back.h_a, orig.h_a)
        np.testing.assert_array_equal(back.h_b, orig.h_b)
        np.testing.assert_array_equal(back.cov_a, orig.cov_a)
        np.testing.assert_array_equal(back.cov_b, orig.cov_b)
    # a second save of the loaded data reproduces the file byte for byte
    again = tmp_path / "again.txt"
    save_pairs(loaded, again)
    assert again.read_bytes() == path.read_bytes()


def test_pairs_reject_duplicate_timestamps_and_short_rows(tmp_path):
    pairs = nasty_pairs()[:2]
    pairs[1].timestamp = pairs[0].timestamp
    dup = tmp_path / "dup.txt"
    save_pairs(pairs, dup)
    with pytest.raises(ParseError):
        load_pairs(dup)

    short = tmp_path / "short.txt"
    short.write_text(PAIRS_HEADER + "\n0.0 1.0 2.0\n")
    with pytest.raises(ParseError) as exc:
        load_pairs(short)
    assert exc.value.line == 2


# ---------------------------------------------------------------------------
# truth files


def test_truth_round_trip_is_bitwise(tmp_path):
    truth = generate_trajectory(TrajectoryProfile(duration=2.0), translation=(-1.2, -1.6))
    path = tmp_path / "truth.txt"
    save_truth(truth, path)
    back = load_truth(path)
    assert back.theta_ba == truth.theta_ba
    np.testing.assert_array_equal(back.translation, truth.translation)
    np.testing.assert_array_equal(back.timestamps, truth.timestamps)
    np.testing.assert_array_equal(back.v_a, truth.v_a)
    np.testing.assert_array_equal(back.omega, truth.omega)
    np.testing.assert_array_equal(back.alpha, truth.alpha)


def test_truth_requires_extrinsics_line(tmp_path):
    path = tmp_path / "truth.txt"
    path.write_text("# radarcal truth 1\n0.0 1.0 0.0 0.1 0.0\n")
    with pytest.raises(ParseError):
        load_truth(path)


# ---------------------------------------------------------------------------
# stream processing


def test_estimate_stream_skips_hopeless_scans():
    rng = np.random.default_rng(0)
    az = np.linspace(-0.9, 0.9, 12)
    good = []
    v = np.array([1.0, 0.4])
    for ts in (0.2, 0.0, 0.4):
        rr = -(np.sin(az) * v[0] + np.cos(az) * v[1])
        good.append(make_scan(ts, "a", az, rr))
    starved = make_scan(0.3, "a", [0.1, 0.2], [0.0, 0.0])
    ests = estimate_stream(good + [starved], RansacConfig(rng_seed=1))
    assert [e.timestamp for e in ests] == [0.0, 0.2, 0.4]
    for e in ests:
        np.testing.assert_allclose(e.velocity, v, atol=1e-9)


def test_synchronize_exact_match_passes_through():
    a = [estimate(1.0, [1.0, 0.0])]
    b = [estimate(1.0, [0.5, 0.5], cov_scale=3e-4)]
    pairs = synchronize(a, b)
    assert len(pairs) == 1
    np.testing.assert_array_equal(pairs[0].h_b, [0.5, 0.5])
    np.testing.assert_array_equal(pairs[0].cov_b, 3e-4 * np.eye(2))


def test_synchronize_interpolates_between_brackets():
    a = [estimate(0.25, [1.0, 0.0])]
    b0 = estimate(0.0, [0.0, 0.0], cov_scale=1e-4)
    b1 = estimate(1.0, [2.0, -4.0], cov_scale=9e-4)
    pairs = synchronize(a, [b1, b0], max_gap=2.0)
    assert len(pairs) == 1
    np.testing.assert_allclose(pairs[0].h_b, [0.5, -1.0], atol=1e-12)
    # covariance is the conservative elementwise max of the endpoints
    np.testing.assert_array_equal(pairs[0].cov_b, 9e-4 * np.eye(2))
    assert pairs[0].timestamp == 0.25


def test_synchronize_drops_wide_gaps_and_extrapolation():
    a = [estimate(t, [1.0, 0.0]) for t in (-0.5, 0.25, 9.0)]
    b = [estimate(0.0, [1.0, 1.0]), estimate(1.0, [1.0, 1.0])]
    assert synchronize(a, b, max_gap=0.5) == []
    assert len(synchronize(a, b, max_gap=1.0)) == 1
    with pytest.raises(InvalidArgumentError):
        synchronize(a, b, max_gap=0.0)
    assert synchronize([], b) == []


def test_filter_pairs_thresholds_and_idempotence():
    fast = nasty_pairs()[4]  # enormous speed, clearly moving
    slow = MeasurementPair(
        h_a=np.array([0.01, 0.0]),
        h_b=np.array([1.0, 1.0]),
        cov_a=np.eye(2),
        cov_b=np.eye(2),
        timestamp=0.0,
    )
    kept = filter_pairs([fast, slow])
    assert kept == [fast]
    assert filter_pairs(kept) == kept
    assert filter_pairs([fast, slow], min_speed=0.0) == [fast, slow]
    with pytest.raises(InvalidArgumentError):
        filter_pairs([fast], min_speed=-1.0)


# ---------------------------------------------------------------------------
# config files


def test_config_serialization_round_trip(tmp_path):
    cfg = PipelineConfig()
    cfg.solver.max_iterations = 7
    cfg.solver.gradient_tol = 1.25e-9
    cfg.ransac.rng_seed = 99
    cfg.excitation.align_tol = 0.07
    cfg.experiment.sigmas = (0.01, 0.3)
    cfg.min_speed = 0.11
    text = serialize_config(cfg)
    back = parse_config(text)
    assert serialize_config(back) == text
    assert back.solver.max_iterations == 7
    assert back.solver.gradient_tol == 1.25e-9
    assert back.ransac.rng_seed == 99
    assert back.excitation.align_tol == 0.07
    assert back.experiment.sigmas == (0.01, 0.3)
    assert back.min_speed == 0.11

    path = tmp_path / "config.txt"
    save_config(cfg, path)
    assert serialize_config(load_config(path)) == text


def test_config_rejects_unknown_keys_and_bad_values():
    with pytest.raises(ParseError) as exc:
        parse_config("# radarcal config 1\nsolver.warp = 9\n")
    assert exc.value.line == 2
    with pytest.raises(ParseError):
        parse_config("# radarcal config 1\nsolver.max_iterations = banana\n")
    with pytest.raises(ParseError):
        parse_config("# radarcal config 1\nsolver.enforce_excitation = yes\n")
    with pytest.raises(ParseError):
        parse_config("# radarcal config 1\nno equals sign here\n")
    with pytest.raises(ParseError):
        parse_config("not a config\n")
    with pytest.raises(ParseError):
        parse_config("")


def test_config_ignores_comments_and_blank_lines():
    cfg = parse_config("# radarcal config 1\n\n# a note\nmin_speed = 0.2\n")
    assert cfg.min_speed == 0.2


# ---------------------------------------------------------------------------
# JSON reports


def report_fixture():
    truth = generate_trajectory(TrajectoryProfile(duration=10.0))
    pairs = simulate_pairs(truth, NoiseSpec(sigma_r=0.1), rng_seed=2)
    return solve_lm(pairs)


def test_report_json_round_trip_exact(tmp_path):
    report = report_fixture()
    path = tmp_path / "report.json"
    write_report(report, path)
    back = read_report(path)
    assert back.extrinsics == report.extrinsics
    np.testing.assert_array_equal(back.extrinsic_covariance, report.extrinsic_covariance)
    assert back.final_cost == report.final_cost
    assert back.iterations == report.iterations
    assert back.converged == report.converged
    assert back.termination == report.termination
    assert back.mean_velocity_error == report.mean_velocity_error
    assert back.velocity_error_table == report.velocity_error_table
    np.testing.assert_array_equal(back.timestamps, report.timestamps)
    for m0, m1 in zip(report.fused_motion, back.fused_motion):
        np.testing.assert_array_equal(m0.v_a, m1.v_a)
        assert m0.omega_gamma == m1.omega_gamma
    assert back.excitation == report.excitation
    # writing again produces identical bytes
    path2 = tmp_path / "report2.json"
    write_report(back, path2)
    assert path2.read_bytes() == path.read_bytes()


def test_excitation_json_round_trip(tmp_path):
    report = report_fixture()
    path = tmp_path / "exc.json"
    write_excitation(report.excitation, path)
    assert read_excitation(path) == report.excitation


def test_read_json_rejects_garbage(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ParseError):
        read_json(path)
    ok = tmp_path / "ok.json"
    ok.write_text(json.dumps({"a": 1}))
    assert read_json(ok) == {"a": 1}
