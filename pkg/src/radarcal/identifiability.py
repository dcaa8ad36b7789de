"""Excitation diagnostics: can this motion constrain the extrinsics at all?

The extrinsics are locally observable at a timestep only when the scalar

    det(O) = alpha_gamma * (h_a x t_axis)

is nonzero: the angular acceleration ``alpha_gamma`` (rate of change of the
unscaled turn rate) times the planar cross product of the ego-velocity with
the translation axis.  It vanishes for three motion defects: no angular
acceleration, no ego-velocity, or motion along the axis itself.  This module
classifies every timestep of a dataset against that determinant and raises
coarse flags naming the defect, so a calibration run can refuse clearly
hopeless data instead of returning an arbitrary answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .calib_solver import Extrinsics, _motion_from_data, _pair_data
from .errors import InsufficientDataError, InvalidArgumentError
from .geometry import circular_median, wrap_axis

FLAG_ZERO_ALPHA = "zero_alpha"
FLAG_ZERO_VELOCITY = "zero_velocity"
FLAG_AXIS_ALIGNED = "axis_aligned_motion"


@dataclass(frozen=True)
class ExcitationSample:
    """Inputs of the observability determinant at one timestep."""

    h_a: np.ndarray        # (2,) ego-velocity of radar a
    omega_gamma: float     # unscaled turn rate
    alpha_gamma: float     # time derivative of omega_gamma
    theta_t: float         # translation axis angle


@dataclass
class ExcitationThresholds:
    """Classification thresholds, all relative except the absolute floors.

    A timestep is degenerate when ``|det(O)|`` falls at or below
    ``det_rel_tol * median(speed) * max(median(|alpha|), alpha_abs_floor)``;
    the floor keeps the comparison meaningful when the angular acceleration
    is pure roundoff.  The flags use
    ``speed_floor`` (m/s) for dead velocity or turn-rate signals,
    ``alpha_rel_tol``/``alpha_abs_floor`` for vanishing angular acceleration
    and ``align_tol`` (sine of the angle) for motion along the axis; a flag
    is raised when at least ``flag_fraction`` of the timesteps show the
    defect.  ``axis_aligned_motion`` is also raised when the motion
    direction never varies (spread at or below ``align_tol``), since motion
    confined to a single line cannot be told apart from the axis.
    """

    det_rel_tol: float = 1e-3
    speed_floor: float = 0.05
    align_tol: float = 0.05
    alpha_rel_tol: float = 1e-3
    alpha_abs_floor: float = 1e-9
    flag_fraction: float = 0.9


@dataclass
class ExcitationReport:
    """Aggregate excitation diagnostics for a dataset."""

    fraction_degenerate: float
    min_abs_det: float
    mean_abs_det: float
    det_threshold: float
    n_samples: int
    flags: list[str] = field(default_factory=list)


def observability_det(sample: ExcitationSample) -> float:
    """Observability determinant at one timestep.

    ``alpha_gamma * (h_a_x * sin(theta_t) - h_a_y * cos(theta_t))``: the
    angular acceleration times the component of the ego-velocity
    perpendicular to the translation axis (positive when the axis is
    counterclockwise of the velocity).
    """
    h = np.asarray(sample.h_a, dtype=float)
    if h.shape != (2,) or not np.all(np.isfinite(h)):
        raise InvalidArgumentError("sample.h_a must be a finite 2-vector")
    cross = h[0] * math.sin(sample.theta_t) - h[1] * math.cos(sample.theta_t)
    return float(sample.alpha_gamma * cross)


def excitation_report(
    pairs,
    extrinsics_guess: Extrinsics,
    thresholds: ExcitationThresholds | None = None,
) -> ExcitationReport:
    """Classify every timestep of a dataset and aggregate the verdicts.

    Motion states come from the closed-form per-timestep fit at the guessed
    extrinsics; the angular acceleration is their central finite difference
    (one-sided at the ends).  Needs at least three pairs.
    """
    thr = thresholds or ExcitationThresholds()
    data = _pair_data(pairs)
    if data.n < 3:
        raise InsufficientDataError(
            f"excitation analysis needs >= 3 pairs, got {data.n}"
        )
    if np.any(np.diff(data.timestamps) <= 0):
        raise InvalidArgumentError("pair timestamps must be strictly increasing")

    theta_t = extrinsics_guess.theta_t
    _, w = _motion_from_data(data, theta_t, extrinsics_guess.theta_ba)
    alpha = np.gradient(w, data.timestamps)

    speeds = np.hypot(data.ha[:, 0], data.ha[:, 1])
    cross = data.ha[:, 0] * math.sin(theta_t) - data.ha[:, 1] * math.cos(theta_t)
    dets = alpha * cross
    abs_dets = np.abs(dets)

    # Floor the alpha scale: on rotation-free data the finite differences
    # are pure roundoff, and a threshold built from them would classify
    # noise against noise instead of flagging everything.
    alpha_scale = max(float(np.median(np.abs(alpha))), thr.alpha_abs_floor)
    det_threshold = thr.det_rel_tol * float(np.median(speeds)) * alpha_scale
    degenerate = abs_dets <= det_threshold
    fraction = float(np.mean(degenerate))

    flags = []
    alpha_floor = max(thr.alpha_abs_floor, thr.alpha_rel_tol * float(np.max(np.abs(alpha))))
    if np.mean(np.abs(alpha) <= alpha_floor) >= thr.flag_fraction:
        flags.append(FLAG_ZERO_ALPHA)
    # Either signal being dead kills the axis: a stationary platform, or a
    # platform that never turns (the lever arm stays invisible).
    dead = (speeds <= thr.speed_floor) | (np.abs(w) <= thr.speed_floor)
    if np.mean(dead) >= thr.flag_fraction:
        flags.append(FLAG_ZERO_VELOCITY)
    moving = speeds > thr.speed_floor
    aligned = np.zeros(data.n, dtype=bool)
    aligned[moving] = np.abs(cross[moving]) <= thr.align_tol * speeds[moving]
    aligned_flag = bool(np.mean(aligned) >= thr.flag_fraction)
    if not aligned_flag and np.count_nonzero(moving) >= 2:
        dirs = np.arctan2(data.ha[moving, 1], data.ha[moving, 0])
        folded = np.array([wrap_axis(a) for a in dirs])
        center = circular_median(folded, math.pi)
        dev = np.abs(folded - center)
        dev = np.minimum(dev, math.pi - dev)
        aligned_flag = bool(np.median(dev) <= thr.align_tol)
    elif np.count_nonzero(moving) < 2:
        aligned_flag = True
    if aligned_flag:
        flags.append(FLAG_AXIS_ALIGNED)

    return ExcitationReport(
        fraction_degenerate=fraction,
        min_abs_det=float(np.min(abs_dets)),
        mean_abs_det=float(np.mean(abs_dets)),
        det_threshold=float(det_threshold),
        n_samples=data.n,
        flags=flags,
    )
