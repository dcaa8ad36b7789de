"""Recover the metric baseline length from an external turn-rate reference.

Velocity-only calibration pins down the translation *axis* but not its
length: the solver's per-timestep ``omega_gamma`` equals the physical rate
times ``|t|``.  Any independent angular-rate source (gyro, wheel odometry,
pose headings) therefore fixes the scale:

    |t| = median over j of |omega_gamma^j| / |omega_ref(t_j)|

restricted to samples where the reference rate is large enough to divide by.
The sign of ``t`` along its axis stays unknowable from this data, which is
why every result carries ``sign_ambiguous=True``.

Pose headings are turned into a rate reference with a fixed-interval
smoother (forward Kalman filter plus backward pass) over a constant angular
acceleration model, which differentiates noisy headings without the noise
blow-up of direct finite differences.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientExcitationError, InvalidArgumentError, ParseError

DEFAULT_MIN_RATE = 0.1   # rad/s, reference rates below this are unreliable divisors
MIN_SAMPLES = 10


@dataclass
class AngularRateSeries:
    """Reference angular rates on their own clock."""

    timestamps: np.ndarray  # (N,) strictly increasing
    omega: np.ndarray       # (N,) rad/s

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        if self.timestamps.shape != self.omega.shape or self.timestamps.ndim != 1:
            raise InvalidArgumentError("timestamps and omega must be 1-d and equal length")
        if self.timestamps.size >= 2 and np.any(np.diff(self.timestamps) <= 0):
            raise InvalidArgumentError("reference timestamps must be strictly increasing")


@dataclass
class ScaleResult:
    """Recovered metric scale; the translation sign stays ambiguous."""

    gamma: float                  # ratio of unscaled to reference rates
    translation_magnitude: float  # meters, numerically equal to gamma
    n_samples: int
    sign_ambiguous: bool = True


def smooth_angular_rate_from_poses(
    timestamps: np.ndarray,
    headings: np.ndarray,
    heading_sigma: float = 0.01,
    jerk_psd: float = 0.5,
) -> AngularRateSeries:
    """Angular rate series from noisy heading samples.

    Headings are unwrapped, then smoothed with a fixed-interval two-pass
    estimator over the state (heading, rate, acceleration) driven by white
    jerk of power spectral density ``jerk_psd``; the returned series is the
    smoothed rate component at the input timestamps.
    """
    t = np.asarray(timestamps, dtype=float)
    z = np.asarray(headings, dtype=float)
    if t.shape != z.shape or t.ndim != 1 or t.size < 3:
        raise InvalidArgumentError("need >= 3 heading samples with matching timestamps")
    if np.any(np.diff(t) <= 0):
        raise InvalidArgumentError("heading timestamps must be strictly increasing")
    if heading_sigma <= 0 or jerk_psd <= 0:
        raise InvalidArgumentError("heading_sigma and jerk_psd must be positive")
    z = np.unwrap(z)
    n = t.size
    r = heading_sigma ** 2
    hrow = np.array([1.0, 0.0, 0.0])

    x = np.array([z[0], (z[1] - z[0]) / (t[1] - t[0]), 0.0])
    P = np.diag([r, 1.0, 1.0])

    xs_pred = np.zeros((n, 3))
    ps_pred = np.zeros((n, 3, 3))
    xs_filt = np.zeros((n, 3))
    ps_filt = np.zeros((n, 3, 3))
    fs = np.zeros((n, 3, 3))

    for i in range(n):
        if i == 0:
            xp, Pp, F = x, P, np.eye(3)
        else:
            dt = t[i] - t[i - 1]
            F = np.array([[1.0, dt, 0.5 * dt * dt], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])
            Q = jerk_psd * np.array(
                [
                    [dt ** 5 / 20.0, dt ** 4 / 8.0, dt ** 3 / 6.0],
                    [dt ** 4 / 8.0, dt ** 3 / 3.0, dt ** 2 / 2.0],
                    [dt ** 3 / 6.0, dt ** 2 / 2.0, dt],
                ]
            )
            xp = F @ x
            Pp = F @ P @ F.T + Q
        innov = z[i] - hrow @ xp
        s = float(hrow @ Pp @ hrow) + r
        k = (Pp @ hrow) / s
        x = xp + k * innov
        P = (np.eye(3) - np.outer(k, hrow)) @ Pp
        xs_pred[i], ps_pred[i], fs[i] = xp, Pp, F
        xs_filt[i], ps_filt[i] = x, P

    xs = xs_filt.copy()
    for i in range(n - 2, -1, -1):
        gain = ps_filt[i] @ fs[i + 1].T @ np.linalg.inv(ps_pred[i + 1])
        xs[i] = xs_filt[i] + gain @ (xs[i + 1] - xs_pred[i + 1])

    return AngularRateSeries(timestamps=t.copy(), omega=xs[:, 1])


def recover_scale(
    report,
    reference: AngularRateSeries,
    min_rate: float = DEFAULT_MIN_RATE,
    min_samples: int = MIN_SAMPLES,
) -> ScaleResult:
    """Metric baseline length from a calibration report and a rate reference.

    The reference is linearly interpolated onto the calibration timestamps;
    samples where it falls below ``min_rate`` (or lies outside the reference
    time span) are dropped.  Needs at least ``min_samples`` survivors.
    """
    if min_rate <= 0:
        raise InvalidArgumentError("min_rate must be positive")
    if reference.timestamps.size < 2:
        raise InsufficientExcitationError("reference series too short to interpolate")
    ts = np.asarray(report.timestamps, dtype=float)
    wg = np.array([m.omega_gamma for m in report.fused_motion], dtype=float)
    inside = (ts >= reference.timestamps[0]) & (ts <= reference.timestamps[-1])
    ref = np.interp(ts[inside], reference.timestamps, reference.omega)
    wg = wg[inside]
    keep = np.abs(ref) >= min_rate
    if int(keep.sum()) < min_samples:
        raise InsufficientExcitationError(
            f"only {int(keep.sum())} reference samples at or above {min_rate} rad/s, "
            f"need {min_samples}"
        )
    ratios = np.abs(wg[keep]) / np.abs(ref[keep])
    scale = float(np.median(ratios))
    return ScaleResult(
        gamma=scale,
        translation_magnitude=scale,
        n_samples=int(keep.sum()),
        sign_ambiguous=True,
    )


def _load_two_column_csv(path, what: str) -> tuple[np.ndarray, np.ndarray]:
    """Strict two-float-column CSV; one optional non-numeric header row."""
    col0 = []
    col1 = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if row[0].lstrip().startswith("#"):
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 columns in {what} file, got {len(row)}", lineno)
            try:
                a, b = float(row[0]), float(row[1])
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise ParseError(f"non-numeric values {row!r} in {what} file", lineno)
            if not (math.isfinite(a) and math.isfinite(b)):
                raise ParseError(f"non-finite values in {what} file", lineno)
            col0.append(a)
            col1.append(b)
    if not col0:
        raise ParseError(f"{what} file contains no data rows")
    return np.array(col0), np.array(col1)


def load_angular_rate_csv(path) -> AngularRateSeries:
    """Read a ``timestamp,omega`` CSV into a reference series."""
    t, w = _load_two_column_csv(path, "angular rate")
    return AngularRateSeries(timestamps=t, omega=w)


def load_heading_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``timestamp,heading`` CSV; returns the raw arrays."""
    return _load_two_column_csv(path, "heading")
