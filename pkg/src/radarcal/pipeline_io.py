"""File formats, stream synchronization and report serialization.

Plain-text formats, all versioned by their first line:

``# radarcal scans 1``
    One line per scan: ``<timestamp> <radar_id> <n> <range> <azimuth>
    <range_rate> ...`` with ``n`` detection triplets.  Duplicate
    ``(radar_id, timestamp)`` records are rejected.

``# radarcal pairs 1``
    One line per synchronized pair: ``<timestamp> <hax> <hay> <caxx> <caxy>
    <cayy> <hbx> <hby> <cbxx> <cbxy> <cbyy>`` (covariances as their three
    unique entries).

``# radarcal truth 1``
    ``extrinsics <theta_ba> <tx> <ty>`` followed by ``<timestamp> <vax>
    <vay> <omega> <alpha>`` per timestep.

``# radarcal config 1``
    ``key = value`` per line, dotted keys, ``#`` comments.  Unknown keys are
    rejected so typos fail loudly.

Calibration reports, excitation reports and scale results are JSON with a
``format`` tag; see :func:`write_report`.

Floats are serialized with ``repr``, which round-trips every finite double
bit for bit, so save followed by load reproduces values exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .calib_solver import (
    CalibrationReport,
    Extrinsics,
    MeasurementPair,
    MotionState,
    SolverOptions,
)
from .ego_velocity import (
    Detection,
    EgoVelocityEstimate,
    RadarScan,
    RansacConfig,
    ransac_ego_velocity,
)
from .errors import (
    InsufficientDataError,
    InvalidArgumentError,
    NoConsensusError,
    ParseError,
)
from .identifiability import ExcitationReport, ExcitationThresholds

SCANS_HEADER = "# radarcal scans 1"
PAIRS_HEADER = "# radarcal pairs 1"
TRUTH_HEADER = "# radarcal truth 1"
CONFIG_HEADER = "# radarcal config 1"
REPORT_FORMAT = "radarcal-report-1"
EXCITATION_FORMAT = "radarcal-excitation-1"
SCALE_FORMAT = "radarcal-scale-1"
EVALUATION_FORMAT = "radarcal-evaluation-1"

DEFAULT_MIN_SPEED = 0.05
DEFAULT_MAX_GAP = 0.2


@dataclass
class ExperimentMatrix:
    """Sweep shape for simulation studies."""

    trials: int = 100
    sigmas: tuple = (0.05, 0.1, 0.2)
    durations: tuple = (15.0, 120.0)


@dataclass
class PipelineConfig:
    """Everything a calibration run needs beyond its input files."""

    ransac: RansacConfig = field(default_factory=RansacConfig)
    solver: SolverOptions = field(default_factory=SolverOptions)
    excitation: ExcitationThresholds = field(default_factory=ExcitationThresholds)
    experiment: ExperimentMatrix = field(default_factory=ExperimentMatrix)
    min_speed: float = DEFAULT_MIN_SPEED
    sync_max_gap: float = DEFAULT_MAX_GAP


def _fmt(x: float) -> str:
    return repr(float(x))


def _parse_float(tok: str, lineno: int, what: str) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise ParseError(f"expected a number for {what}, got {tok!r}", lineno)
    if not math.isfinite(val):
        raise ParseError(f"{what} must be finite, got {tok!r}", lineno)
    return val


def _check_header(line: str, expected: str, lineno: int = 1):
    if line.strip() != expected:
        raise ParseError(f"expected header {expected!r}, found {line.strip()!r}", lineno)


# ---------------------------------------------------------------------------
# Scan files


def save_scans(streams, path):
    """Write scan streams (dict radar_id -> scans, or a flat list)."""
    if isinstance(streams, dict):
        scans = [s for stream in streams.values() for s in stream]
    else:
        scans = list(streams)
    scans.sort(key=lambda s: (s.timestamp, s.radar_id))
    with open(path, "w") as fh:
        fh.write(SCANS_HEADER + "\n")
        for s in scans:
            toks = [_fmt(s.timestamp), s.radar_id, str(len(s.detections))]
            for d in s.detections:
                toks += [_fmt(d.range_m), _fmt(d.azimuth_rad), _fmt(d.range_rate_mps)]
            fh.write(" ".join(toks) + "\n")


def load_scans(path) -> dict[str, list[RadarScan]]:
    """Read a scan file into per-radar streams sorted by timestamp."""
    streams: dict[str, list[RadarScan]] = {}
    seen = set()
    with open(path) as fh:
        first = fh.readline()
        _check_header(first, SCANS_HEADER)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            if len(toks) < 3:
                raise ParseError("scan record needs timestamp, radar_id, count", lineno)
            ts = _parse_float(toks[0], lineno, "timestamp")
            rid = toks[1]
            try:
                n = int(toks[2])
            except ValueError:
                raise ParseError(f"bad detection count {toks[2]!r}", lineno)
            if n < 0 or len(toks) != 3 + 3 * n:
                raise ParseError(
                    f"scan claims {n} detections but has {len(toks) - 3} fields", lineno
                )
            if (rid, ts) in seen:
                raise ParseError(f"duplicate scan for radar {rid!r} at t={ts!r}", lineno)
            seen.add((rid, ts))
            dets = []
            for i in range(n):
                r = _parse_float(toks[3 + 3 * i], lineno, "range")
                az = _parse_float(toks[4 + 3 * i], lineno, "azimuth")
                rr = _parse_float(toks[5 + 3 * i], lineno, "range rate")
                try:
                    dets.append(Detection(range_m=r, azimuth_rad=az, range_rate_mps=rr))
                except InvalidArgumentError as exc:
                    raise ParseError(str(exc), lineno)
            try:
                scan = RadarScan(timestamp=ts, radar_id=rid, detections=dets)
            except InvalidArgumentError as exc:
                raise ParseError(str(exc), lineno)
            streams.setdefault(rid, []).append(scan)
    for stream in streams.values():
        stream.sort(key=lambda s: s.timestamp)
    return streams


# ---------------------------------------------------------------------------
# Pair files


def save_pairs(pairs, path):
    with open(path, "w") as fh:
        fh.write(PAIRS_HEADER + "\n")
        for p in pairs:
            ca = np.asarray(p.cov_a, dtype=float)
            cb = np.asarray(p.cov_b, dtype=float)
            toks = [
                _fmt(p.timestamp),
                _fmt(p.h_a[0]), _fmt(p.h_a[1]),
                _fmt(ca[0, 0]), _fmt(ca[0, 1]), _fmt(ca[1, 1]),
                _fmt(p.h_b[0]), _fmt(p.h_b[1]),
                _fmt(cb[0, 0]), _fmt(cb[0, 1]), _fmt(cb[1, 1]),
            ]
            fh.write(" ".join(toks) + "\n")


def load_pairs(path) -> list[MeasurementPair]:
    pairs = []
    seen = set()
    with open(path) as fh:
        _check_header(fh.readline(), PAIRS_HEADER)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            if len(toks) != 11:
                raise ParseError(f"pair record needs 11 fields, got {len(toks)}", lineno)
            vals = [_parse_float(t, lineno, "pair field") for t in toks]
            ts = vals[0]
            if ts in seen:
                raise ParseError(f"duplicate pair timestamp {ts!r}", lineno)
            seen.add(ts)
            pairs.append(
                MeasurementPair(
                    h_a=np.array(vals[1:3]),
                    cov_a=np.array([[vals[3], vals[4]], [vals[4], vals[5]]]),
                    h_b=np.array(vals[6:8]),
                    cov_b=np.array([[vals[8], vals[9]], [vals[9], vals[10]]]),
                    timestamp=ts,
                )
            )
    return pairs


# ---------------------------------------------------------------------------
# Ground-truth files


def save_truth(truth, path):
    with open(path, "w") as fh:
        fh.write(TRUTH_HEADER + "\n")
        fh.write(
            "extrinsics "
            + " ".join(
                [_fmt(truth.theta_ba), _fmt(truth.translation[0]), _fmt(truth.translation[1])]
            )
            + "\n"
        )
        for j, ts in enumerate(truth.timestamps):
            fh.write(
                " ".join(
                    [
                        _fmt(ts),
                        _fmt(truth.v_a[j, 0]),
                        _fmt(truth.v_a[j, 1]),
                        _fmt(truth.omega[j]),
                        _fmt(truth.alpha[j]),
                    ]
                )
                + "\n"
            )


def load_truth(path):
    from .simulator import GroundTruth  # deferred: simulator builds on solver types

    theta_ba = None
    translation = None
    rows = []
    with open(path) as fh:
        _check_header(fh.readline(), TRUTH_HEADER)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            if toks[0] == "extrinsics":
                if len(toks) != 4:
                    raise ParseError("extrinsics line needs 3 numbers", lineno)
                theta_ba = _parse_float(toks[1], lineno, "theta_ba")
                translation = np.array(
                    [
                        _parse_float(toks[2], lineno, "tx"),
                        _parse_float(toks[3], lineno, "ty"),
                    ]
                )
                continue
            if len(toks) != 5:
                raise ParseError(f"truth record needs 5 fields, got {len(toks)}", lineno)
            rows.append([_parse_float(t, lineno, "truth field") for t in toks])
    if theta_ba is None or not rows:
        raise ParseError("truth file missing extrinsics line or data rows")
    arr = np.array(rows)
    return GroundTruth(
        timestamps=arr[:, 0],
        v_a=arr[:, 1:3],
        omega=arr[:, 3],
        alpha=arr[:, 4],
        theta_ba=theta_ba,
        translation=translation,
    )


# ---------------------------------------------------------------------------
# Stream processing


def estimate_stream(scans: list[RadarScan], config: RansacConfig) -> list[EgoVelocityEstimate]:
    """Robust per-scan ego-velocities; scans without consensus are skipped."""
    out = []
    for scan in scans:
        try:
            out.append(ransac_ego_velocity(scan, config))
        except (NoConsensusError, InsufficientDataError):
            continue
    out.sort(key=lambda e: e.timestamp)
    return out


def synchronize(
    stream_a: list[EgoVelocityEstimate],
    stream_b: list[EgoVelocityEstimate],
    max_gap: float = DEFAULT_MAX_GAP,
) -> list[MeasurementPair]:
    """Pair the streams on radar a's clock.

    Radar b's velocity is linearly interpolated between its bracketing
    estimates; the interpolated covariance is the elementwise maximum of the
    two endpoints (conservative, and positive definite for 2x2 matrices).
    Timestamps of a without a bracket, or whose bracket spans more than
    ``max_gap`` seconds, produce no pair.  Exact timestamp matches pass
    radar b's estimate through unchanged.
    """
    if max_gap <= 0:
        raise InvalidArgumentError("max_gap must be positive")
    a_sorted = sorted(stream_a, key=lambda e: e.timestamp)
    b_sorted = sorted(stream_b, key=lambda e: e.timestamp)
    if not a_sorted or not b_sorted:
        return []
    tb = np.array([e.timestamp for e in b_sorted])
    vb = np.array([e.velocity for e in b_sorted])
    cb = np.array([e.covariance for e in b_sorted])
    pairs = []
    for est in a_sorted:
        t = est.timestamp
        idx = int(np.searchsorted(tb, t))
        if idx < tb.size and tb[idx] == t:
            hb, cov_b = vb[idx], cb[idx]
        else:
            if idx == 0 or idx >= tb.size:
                continue
            gap = tb[idx] - tb[idx - 1]
            if gap > max_gap:
                continue
            lam = (t - tb[idx - 1]) / gap
            hb = (1.0 - lam) * vb[idx - 1] + lam * vb[idx]
            cov_b = np.maximum(cb[idx - 1], cb[idx])
        pairs.append(
            MeasurementPair(
                h_a=np.asarray(est.velocity, dtype=float).copy(),
                h_b=np.asarray(hb, dtype=float).copy(),
                cov_a=np.asarray(est.covariance, dtype=float).copy(),
                cov_b=np.asarray(cov_b, dtype=float).copy(),
                timestamp=t,
            )
        )
    return pairs


def filter_pairs(pairs, min_speed: float = DEFAULT_MIN_SPEED) -> list[MeasurementPair]:
    """Drop pairs where either radar reports a speed below ``min_speed``.

    Near-standstill velocities carry no direction information and would let
    noise dominate the fit.  Idempotent.
    """
    if min_speed < 0:
        raise InvalidArgumentError("min_speed must be >= 0")
    out = []
    for p in pairs:
        sa = math.hypot(float(p.h_a[0]), float(p.h_a[1]))
        sb = math.hypot(float(p.h_b[0]), float(p.h_b[1]))
        if sa >= min_speed and sb >= min_speed:
            out.append(p)
    return out


# ---------------------------------------------------------------------------
# Config files

_CONFIG_FIELDS = {
    "ransac.residual_threshold": ("ransac", "residual_threshold", float),
    "ransac.inlier_fraction_threshold": ("ransac", "inlier_fraction_threshold", float),
    "ransac.max_iterations": ("ransac", "max_iterations", int),
    "ransac.rng_seed": ("ransac", "rng_seed", int),
    "solver.max_iterations": ("solver", "max_iterations", int),
    "solver.gradient_tol": ("solver", "gradient_tol", float),
    "solver.relative_cost_tol": ("solver", "relative_cost_tol", float),
    "solver.step_tol": ("solver", "step_tol", float),
    "solver.lambda0": ("solver", "lambda0", float),
    "solver.lambda_up": ("solver", "lambda_up", float),
    "solver.lambda_down": ("solver", "lambda_down", float),
    "solver.lambda_max": ("solver", "lambda_max", float),
    "solver.min_speed": ("solver", "min_speed", float),
    "solver.min_lever": ("solver", "min_lever", float),
    "solver.cov_floor": ("solver", "cov_floor", float),
    "solver.enforce_excitation": ("solver", "enforce_excitation", bool),
    "solver.max_degenerate_fraction": ("solver", "max_degenerate_fraction", float),
    "solver.restart_cost_ratio": ("solver", "restart_cost_ratio", float),
    "solver.grid_init_max_pairs": ("solver", "grid_init_max_pairs", int),
    "excitation.det_rel_tol": ("excitation", "det_rel_tol", float),
    "excitation.speed_floor": ("excitation", "speed_floor", float),
    "excitation.align_tol": ("excitation", "align_tol", float),
    "excitation.alpha_rel_tol": ("excitation", "alpha_rel_tol", float),
    "excitation.alpha_abs_floor": ("excitation", "alpha_abs_floor", float),
    "excitation.flag_fraction": ("excitation", "flag_fraction", float),
    "experiment.trials": ("experiment", "trials", int),
    "experiment.sigmas": ("experiment", "sigmas", "floats"),
    "experiment.durations": ("experiment", "durations", "floats"),
    "min_speed": (None, "min_speed", float),
    "sync_max_gap": (None, "sync_max_gap", float),
}


def serialize_config(cfg: PipelineConfig) -> str:
    lines = [CONFIG_HEADER]
    for key in sorted(_CONFIG_FIELDS):
        section, attr, typ = _CONFIG_FIELDS[key]
        obj = cfg if section is None else getattr(cfg, section)
        val = getattr(obj, attr)
        if typ == "floats":
            text = ",".join(_fmt(v) for v in val)
        elif typ is bool:
            text = "true" if val else "false"
        elif typ is float:
            text = _fmt(val)
        else:
            text = str(val)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> PipelineConfig:
    cfg = PipelineConfig()
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty config")
    _check_header(lines[0], CONFIG_HEADER)
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", lineno)
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _CONFIG_FIELDS:
            raise ParseError(f"unknown config key {key!r}", lineno)
        section, attr, typ = _CONFIG_FIELDS[key]
        obj = cfg if section is None else getattr(cfg, section)
        try:
            if typ == "floats":
                val = tuple(float(v) for v in raw.split(",") if v.strip())
            elif typ is bool:
                if raw not in ("true", "false"):
                    raise ValueError(raw)
                val = raw == "true"
            else:
                val = typ(raw)
        except ValueError:
            raise ParseError(f"bad value {raw!r} for {key}", lineno)
        setattr(obj, attr, val)
    return cfg


def save_config(cfg: PipelineConfig, path):
    with open(path, "w") as fh:
        fh.write(serialize_config(cfg))


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# Reports


def excitation_to_dict(rep: ExcitationReport) -> dict:
    return {
        "format": EXCITATION_FORMAT,
        "fraction_degenerate": rep.fraction_degenerate,
        "min_abs_det": rep.min_abs_det,
        "mean_abs_det": rep.mean_abs_det,
        "det_threshold": rep.det_threshold,
        "n_samples": rep.n_samples,
        "flags": list(rep.flags),
    }


def excitation_from_dict(d: dict) -> ExcitationReport:
    if d.get("format") != EXCITATION_FORMAT:
        raise ParseError(f"not an excitation report: format {d.get('format')!r}")
    return ExcitationReport(
        fraction_degenerate=d["fraction_degenerate"],
        min_abs_det=d["min_abs_det"],
        mean_abs_det=d["mean_abs_det"],
        det_threshold=d["det_threshold"],
        n_samples=d["n_samples"],
        flags=list(d["flags"]),
    )


def report_to_dict(report: CalibrationReport) -> dict:
    return {
        "format": REPORT_FORMAT,
        "converged": report.converged,
        "termination": report.termination,
        "iterations": report.iterations,
        "final_cost": report.final_cost,
        "extrinsics": {
            "theta_t": report.extrinsics.theta_t,
            "theta_ba": report.extrinsics.theta_ba,
        },
        "extrinsic_covariance": np.asarray(report.extrinsic_covariance).tolist(),
        "excitation": None if report.excitation is None else excitation_to_dict(report.excitation),
        "timestamps": np.asarray(report.timestamps).tolist(),
        "fused_motion": [
            [float(m.v_a[0]), float(m.v_a[1]), float(m.omega_gamma)]
            for m in report.fused_motion
        ],
        "mean_velocity_error": report.mean_velocity_error,
        "velocity_error_table": report.velocity_error_table,
    }


def report_from_dict(d: dict) -> CalibrationReport:
    if d.get("format") != REPORT_FORMAT:
        raise ParseError(f"not a calibration report: format {d.get('format')!r}")
    return CalibrationReport(
        extrinsics=Extrinsics(
            theta_t=d["extrinsics"]["theta_t"], theta_ba=d["extrinsics"]["theta_ba"]
        ),
        extrinsic_covariance=np.array(d["extrinsic_covariance"]),
        final_cost=d["final_cost"],
        iterations=d["iterations"],
        converged=d["converged"],
        termination=d["termination"],
        excitation=None if d["excitation"] is None else excitation_from_dict(d["excitation"]),
        fused_motion=[
            MotionState(v_a=np.array(row[0:2]), omega_gamma=row[2]) for row in d["fused_motion"]
        ],
        timestamps=np.array(d["timestamps"]),
        mean_velocity_error=d["mean_velocity_error"],
        velocity_error_table=d["velocity_error_table"],
    )


def write_json(payload: dict, path):
    """Deterministic JSON: sorted keys, fixed indent, trailing newline."""
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc}")


def write_report(report: CalibrationReport, path):
    """Serialize a calibration report to deterministic JSON."""
    write_json(report_to_dict(report), path)


def read_report(path) -> CalibrationReport:
    return report_from_dict(read_json(path))


def write_excitation(rep: ExcitationReport, path):
    write_json(excitation_to_dict(rep), path)


def read_excitation(path) -> ExcitationReport:
    return excitation_from_dict(read_json(path))
