"""Per-scan radar ego-velocity estimation from Doppler range rates.

A static target observed at azimuth ``theta`` by a radar moving with
velocity ``v`` (sensor frame) produces the range rate

    rdot = -[sin(theta), cos(theta)] . v

Azimuth is measured from the sensor's +y boresight toward +x, so the unit
line-of-sight vector is ``(sin(theta), cos(theta))``.  Stacking one row per
detection gives a linear system ``A v = y`` with ``y_i = -rdot_i``, solved
by least squares.  RANSAC on top of the linear fit rejects detections that
are moving targets or clutter.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateGeometryError,
    EmptyInputError,
    InsufficientDataError,
    InvalidArgumentError,
    NoConsensusError,
)

# Azimuth geometry with less spread than this is rejected as one-directional.
CONDITION_CAP = 1e8

# Minimum detections for a solution with a covariance (2 dof + 1).
MIN_DETECTIONS = 3

RANSAC_MIN_SAMPLE = 2


@dataclass(frozen=True)
class Detection:
    """One radar return: range (m), azimuth (rad), range rate (m/s)."""

    range_m: float
    azimuth_rad: float
    range_rate_mps: float

    def __post_init__(self):
        if not (
            math.isfinite(self.range_m)
            and math.isfinite(self.azimuth_rad)
            and math.isfinite(self.range_rate_mps)
        ):
            raise InvalidArgumentError(f"detection fields must be finite: {self!r}")
        if self.range_m <= 0.0:
            raise InvalidArgumentError(f"detection range must be positive: {self.range_m}")


@dataclass
class RadarScan:
    """All detections of one radar at one timestamp."""

    timestamp: float
    radar_id: str
    detections: list[Detection] = field(default_factory=list)

    def __post_init__(self):
        if not math.isfinite(self.timestamp):
            raise InvalidArgumentError("scan timestamp must be finite")
        if not self.radar_id or any(ch.isspace() for ch in self.radar_id):
            raise InvalidArgumentError(f"radar_id must be non-empty without whitespace: {self.radar_id!r}")


@dataclass
class LsqSystem:
    """Stacked linear system ``A v = y`` for one scan."""

    A: np.ndarray  # (N, 2) rows [sin(az), cos(az)]
    y: np.ndarray  # (N,)   negated range rates


@dataclass
class EgoVelocityEstimate:
    """Ego-velocity of one radar at one timestamp, with uncertainty.

    ``inlier_mask`` is populated by the RANSAC path (aligned with the scan's
    detection order) and is None for direct least-squares solutions.
    """

    velocity: np.ndarray      # (2,) m/s, sensor frame
    covariance: np.ndarray    # (2, 2)
    n_inliers: int
    n_total: int
    timestamp: float
    inlier_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.n_inliers < 0 or self.n_inliers > self.n_total:
            raise InvalidArgumentError(
                f"inlier count {self.n_inliers} out of range for total {self.n_total}"
            )


@dataclass
class RansacConfig:
    """Knobs for the robust ego-velocity fit.

    ``residual_threshold`` is in m/s of range rate.  A scan is accepted only
    when the consensus set covers at least ``inlier_fraction_threshold`` of
    its detections.  Each scan draws its samples from a generator seeded by
    ``rng_seed`` mixed with the scan timestamp, so results are reproducible
    per scan regardless of processing order.
    """

    residual_threshold: float = 0.025
    inlier_fraction_threshold: float = 0.40
    max_iterations: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        if self.residual_threshold <= 0.0:
            raise InvalidArgumentError("residual_threshold must be positive")
        if not 0.0 < self.inlier_fraction_threshold <= 1.0:
            raise InvalidArgumentError("inlier_fraction_threshold must be in (0, 1]")
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be >= 1")


def build_lsq(scan: RadarScan) -> LsqSystem:
    """Assemble the range-rate system for one scan.

    Raises EmptyInputError when the scan holds no detections.
    """
    if not scan.detections:
        raise EmptyInputError(f"scan at t={scan.timestamp} has no detections")
    az = np.array([d.azimuth_rad for d in scan.detections])
    rr = np.array([d.range_rate_mps for d in scan.detections])
    A = np.column_stack([np.sin(az), np.cos(az)])
    return LsqSystem(A=A, y=-rr)


def solve_ego_velocity(system: LsqSystem, timestamp: float = 0.0) -> EgoVelocityEstimate:
    """Least-squares velocity and covariance for a stacked system.

    The covariance is the residual variance estimate scaled by the inverse
    normal matrix, ``(eps.eps / (N - 2)) * inv(A^T A)``; for that to exist
    the system needs at least three rows.
    """
    A = np.asarray(system.A, dtype=float)
    y = np.asarray(system.y, dtype=float)
    if A.ndim != 2 or A.shape[1] != 2 or y.shape != (A.shape[0],):
        raise InvalidArgumentError(f"bad system shapes {A.shape}, {y.shape}")
    n = A.shape[0]
    if n < MIN_DETECTIONS:
        raise InsufficientDataError(f"need >= {MIN_DETECTIONS} detections, got {n}")
    ata = A.T @ A
    cond = np.linalg.cond(ata)
    if not np.isfinite(cond) or cond > CONDITION_CAP:
        raise DegenerateGeometryError(
            f"azimuth geometry is one-directional (cond(A^T A) = {cond:.3g})"
        )
    aty = A.T @ y
    v = np.linalg.solve(ata, aty)
    eps = y - A @ v
    sigma2 = float(eps @ eps) / (n - 2)
    cov = sigma2 * np.linalg.inv(ata)
    return EgoVelocityEstimate(
        velocity=v,
        covariance=cov,
        n_inliers=n,
        n_total=n,
        timestamp=timestamp,
    )


def _scan_seed(rng_seed: int, timestamp: float) -> np.random.SeedSequence:
    """Deterministic per-scan seed: base seed mixed with the timestamp bits."""
    bits = struct.unpack("<Q", struct.pack("<d", float(timestamp)))[0]
    return np.random.SeedSequence(entropy=(int(rng_seed) & 0xFFFFFFFFFFFFFFFF, bits))


def ransac_ego_velocity(scan: RadarScan, config: RansacConfig) -> EgoVelocityEstimate:
    """Robust ego-velocity for one scan.

    Two-point hypotheses are scored by inlier count with ties broken by the
    lower inlier residual RMS; the winner is refit by least squares over its
    whole consensus set.  Raises NoConsensusError when the best consensus
    set is below the configured fraction (or too small to refit).
    """
    n = len(scan.detections)
    if n < MIN_DETECTIONS:
        raise InsufficientDataError(
            f"scan at t={scan.timestamp} has {n} detections, need >= {MIN_DETECTIONS}"
        )
    system = build_lsq(scan)
    A, y = system.A, system.y

    rng = np.random.default_rng(_scan_seed(config.rng_seed, scan.timestamp))
    best_mask = None
    best_count = 0
    best_rms = math.inf
    for _ in range(config.max_iterations):
        i, j = rng.choice(n, size=RANSAC_MIN_SAMPLE, replace=False)
        As = A[[i, j]]
        det = As[0, 0] * As[1, 1] - As[0, 1] * As[1, 0]
        if abs(det) < 1e-12:
            continue  # parallel line-of-sight pair constrains only one axis
        v = np.array(
            [
                (As[1, 1] * y[i] - As[0, 1] * y[j]) / det,
                (As[0, 0] * y[j] - As[1, 0] * y[i]) / det,
            ]
        )
        resid = np.abs(y - A @ v)
        mask = resid <= config.residual_threshold
        count = int(mask.sum())
        if count == 0:
            continue
        rms = float(np.sqrt(np.mean(resid[mask] ** 2)))
        if count > best_count or (count == best_count and rms < best_rms):
            best_count = count
            best_rms = rms
            best_mask = mask

    if best_mask is None or best_count < max(MIN_DETECTIONS, math.ceil(config.inlier_fraction_threshold * n)):
        raise NoConsensusError(
            f"scan at t={scan.timestamp}: best consensus {best_count}/{n} "
            f"below threshold {config.inlier_fraction_threshold:.2f}"
        )

    refit = solve_ego_velocity(
        LsqSystem(A=A[best_mask], y=y[best_mask]), timestamp=scan.timestamp
    )
    refit.n_total = n
    refit.n_inliers = best_count
    refit.inlier_mask = best_mask
    return refit
