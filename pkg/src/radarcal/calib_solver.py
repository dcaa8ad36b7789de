"""Joint extrinsic calibration of two radars from paired ego-velocities.

Measurement model for a rigid pair of planar radars (a is the reference):

    h_a = v_a + n_a
    h_b = rot2(theta_ba) @ (omega ^ t + v_a) + n_b

where ``v_a`` is radar a's velocity in its own frame, ``omega`` the rig's
angular rate, ``t`` the position of radar b in a's frame, and ``^`` the
planar cross product (:func:`radarcal.geometry.wedge`).  Velocity data alone
cannot separate ``omega`` from ``|t|``: scaling one and shrinking the other
leaves the model unchanged.  The solver therefore estimates the translation
*axis* ``t = (cos theta_t, sin theta_t)``, ``theta_t in [0, pi)``, together
with the products ``omega_gamma^j = omega^j * |t|`` per timestep.

The estimated state is ``[v_a^1, omega_gamma^1, ..., v_a^M, omega_gamma^M,
theta_t, theta_ba]`` (dimension 3M + 2), fit to the 4M stacked residuals by
Levenberg-Marquardt with analytic Jacobians.  The per-timestep blocks are
eliminated with a Schur complement, so each iteration costs O(M).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .errors import (
    InsufficientDataError,
    InsufficientExcitationError,
    InvalidArgumentError,
    InvalidWeightError,
    UnidentifiableError,
)
from .geometry import (
    angle_between,
    axis_unit,
    circular_median,
    lever_unit,
    rot2,
    wrap_axis,
    wrap_to_pi,
)

# Additive diagonal floor applied to measurement covariances before they are
# inverted into weights; keeps noise-free (zero covariance) data usable.
COV_FLOOR = 1e-6

DEFAULT_MIN_SPEED = 0.05   # m/s, speeds below this carry no usable direction
DEFAULT_MIN_LEVER = 0.05   # m/s, lever-arm velocities below this are noise


@dataclass
class MeasurementPair:
    """Synchronized ego-velocity estimates of both radars at one time."""

    h_a: np.ndarray          # (2,) m/s in radar a's frame
    h_b: np.ndarray          # (2,) m/s in radar b's frame
    cov_a: np.ndarray        # (2, 2)
    cov_b: np.ndarray        # (2, 2)
    timestamp: float


@dataclass
class MotionState:
    """Per-timestep motion unknowns: velocity and unscaled turn rate."""

    v_a: np.ndarray          # (2,) m/s
    omega_gamma: float       # rad m/s, angular rate times baseline length


@dataclass
class Extrinsics:
    """Relative pose parameters recoverable from velocity data."""

    theta_t: float           # translation axis angle in [0, pi)
    theta_ba: float          # frame rotation a -> b, in (-pi, pi]


@dataclass
class CalibState:
    """Full optimizer state: stacked motion states plus extrinsics."""

    v_a: np.ndarray          # (M, 2)
    omega_gamma: np.ndarray  # (M,)
    extrinsics: Extrinsics


@dataclass
class SolverOptions:
    """Tuning knobs for :func:`solve_lm`; defaults suit radar-rate data.

    Convergence is declared when the gradient infinity norm drops below
    ``gradient_tol``, or an accepted step reduces the cost by less than
    ``relative_cost_tol`` of its value, or moves no parameter by more than
    ``step_tol``.
    """

    max_iterations: int = 100
    gradient_tol: float = 1e-8
    relative_cost_tol: float = 1e-12
    step_tol: float = 1e-14
    lambda0: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 10.0
    lambda_max: float = 1e12
    init_k: int | None = None
    min_speed: float = DEFAULT_MIN_SPEED
    min_lever: float = DEFAULT_MIN_LEVER
    cov_floor: float = COV_FLOOR
    enforce_excitation: bool = True
    max_degenerate_fraction: float = 0.5
    restart_cost_ratio: float = 10.0
    grid_init_max_pairs: int = 60
    excitation_thresholds: object | None = None  # identifiability.ExcitationThresholds


@dataclass
class CalibrationReport:
    """Everything a calibration run produces, in reportable form."""

    extrinsics: Extrinsics
    extrinsic_covariance: np.ndarray       # (2, 2) marginal over (theta_t, theta_ba)
    final_cost: float
    iterations: int
    converged: bool
    termination: str                       # which stopping criterion fired
    excitation: object | None              # identifiability.ExcitationReport
    fused_motion: list[MotionState]
    timestamps: np.ndarray                 # (M,)
    mean_velocity_error: float
    velocity_error_table: dict


@dataclass
class _PairData:
    """Pairs unpacked into contiguous arrays with precomputed weights."""

    ha: np.ndarray    # (M, 2)
    hb: np.ndarray    # (M, 2)
    Pa: np.ndarray    # (M, 2, 2) inverse floored covariances
    Pb: np.ndarray    # (M, 2, 2)
    Wa: np.ndarray    # (M, 2, 2) whiteners, W^T W = P
    Wb: np.ndarray    # (M, 2, 2)
    timestamps: np.ndarray  # (M,)

    @property
    def n(self) -> int:
        return self.ha.shape[0]


def _inv_psd_2x2(covs: np.ndarray, floor: float, what: str) -> np.ndarray:
    """Invert a stack of floored 2x2 covariances, validating positivity."""
    s = covs + floor * np.eye(2)
    a = s[:, 0, 0]
    b = s[:, 0, 1]
    c = s[:, 1, 1]
    det = a * c - b * b
    asym = np.abs(s[:, 0, 1] - s[:, 1, 0])
    if np.any(a <= 0) or np.any(det <= 0) or np.any(asym > 1e-9 * (1 + np.abs(b))):
        raise InvalidWeightError(f"{what} covariance is not symmetric positive definite")
    out = np.empty_like(s)
    out[:, 0, 0] = c / det
    out[:, 1, 1] = a / det
    out[:, 0, 1] = -b / det
    out[:, 1, 0] = -b / det
    return out


def _whiteners(P: np.ndarray) -> np.ndarray:
    """Upper-triangular W with W^T W = P for a stack of SPD 2x2 matrices."""
    l11 = np.sqrt(P[:, 0, 0])
    l21 = P[:, 0, 1] / l11
    l22 = np.sqrt(P[:, 1, 1] - l21 * l21)
    W = np.zeros_like(P)
    W[:, 0, 0] = l11
    W[:, 0, 1] = l21
    W[:, 1, 1] = l22
    return W


def _pair_data(pairs: list[MeasurementPair], cov_floor: float = COV_FLOOR) -> _PairData:
    if not pairs:
        raise InsufficientDataError("no measurement pairs supplied")
    ha = np.array([np.asarray(p.h_a, dtype=float) for p in pairs])
    hb = np.array([np.asarray(p.h_b, dtype=float) for p in pairs])
    ca = np.array([np.asarray(p.cov_a, dtype=float) for p in pairs])
    cb = np.array([np.asarray(p.cov_b, dtype=float) for p in pairs])
    ts = np.array([float(p.timestamp) for p in pairs])
    if ha.shape[1:] != (2,) or ca.shape[1:] != (2, 2):
        raise InvalidArgumentError("measurement pairs have wrong shapes")
    if not (np.all(np.isfinite(ha)) and np.all(np.isfinite(hb)) and np.all(np.isfinite(ts))):
        raise InvalidArgumentError("measurement pairs contain non-finite values")
    Pa = _inv_psd_2x2(ca, cov_floor, "radar a")
    Pb = _inv_psd_2x2(cb, cov_floor, "radar b")
    return _PairData(ha=ha, hb=hb, Pa=Pa, Pb=Pb, Wa=_whiteners(Pa), Wb=_whiteners(Pb), timestamps=ts)


# ---------------------------------------------------------------------------
# Initialization


def init_rotation(
    pairs: list[MeasurementPair],
    k: int | None = None,
    min_speed: float = DEFAULT_MIN_SPEED,
) -> float:
    """Initial frame rotation from the most speed-consistent pairs.

    The lever-arm term is small whenever both radars report nearly the same
    speed, so for the ``k`` pairs with the closest speed agreement the angle
    between ``h_a`` and ``h_b`` approximates ``theta_ba`` directly.  The
    circular median of those angles is robust to the odd corrupted pair.
    ``k`` defaults to ``min(50, usable // 4)``, at least 1.
    """
    ha = np.array([np.asarray(p.h_a, dtype=float) for p in pairs]) if pairs else np.empty((0, 2))
    hb = np.array([np.asarray(p.h_b, dtype=float) for p in pairs]) if pairs else np.empty((0, 2))
    if ha.size == 0:
        raise InsufficientDataError("no pairs for rotation init")
    sa = np.hypot(ha[:, 0], ha[:, 1])
    sb = np.hypot(hb[:, 0], hb[:, 1])
    usable = np.flatnonzero((sa >= min_speed) & (sb >= min_speed))
    if usable.size == 0:
        raise InsufficientDataError(
            f"no pairs with both speeds >= {min_speed} m/s; cannot initialize rotation"
        )
    if k is None:
        k = min(50, max(1, usable.size // 4))
    k = max(1, min(int(k), usable.size))
    order = usable[np.argsort(np.abs(sa[usable] - sb[usable]), kind="stable")[:k]]
    angles = np.array([angle_between(ha[i], hb[i]) for i in order])
    return wrap_to_pi(circular_median(angles, math.tau))


def init_translation_axis(
    pairs: list[MeasurementPair],
    theta_ba: float,
    min_lever: float = DEFAULT_MIN_LEVER,
) -> float:
    """Initial translation axis angle given the frame rotation.

    With the rotation removed, ``b_j = rot2(theta_ba)^T h_b - h_a`` is the
    lever-arm velocity ``omega_gamma^j * wedge(1) @ t_axis`` plus noise.
    Rotating each usable ``b_j`` back by 90 degrees gives a vector along the
    axis; its angle modulo pi estimates ``theta_t``.  Samples with
    ``|b_j| < min_lever`` carry no direction information and are skipped.
    """
    if not pairs:
        raise InsufficientDataError("no pairs for axis init")
    R = rot2(theta_ba)
    ha = np.array([np.asarray(p.h_a, dtype=float) for p in pairs])
    hb = np.array([np.asarray(p.h_b, dtype=float) for p in pairs])
    b = hb @ R - ha  # rows b_j = R^T h_b - h_a
    norms = np.hypot(b[:, 0], b[:, 1])
    usable = norms >= min_lever
    if not np.any(usable):
        raise InsufficientExcitationError(
            f"no pair shows a lever-arm velocity above {min_lever} m/s; "
            "the data contain no rotational excitation"
        )
    bu = b[usable]
    # b points along wedge(1) @ axis; undo the quarter turn and fold to [0, pi).
    raw = np.arctan2(-bu[:, 0], bu[:, 1])
    folded = np.array([wrap_axis(a) for a in raw])
    return circular_median(folded, math.pi)


def _motion_from_data(data: _PairData, theta_t: float, theta_ba: float):
    """Closed-form weighted fit of (v_a, omega_gamma) per timestep.

    With extrinsics fixed, each timestep decouples into an independent 3x3
    weighted linear problem.  Returns ``(v, w)`` arrays of shapes (M, 2) and
    (M,).  The floored weights keep the normal matrices positive definite
    for any data, so no timestep is skipped.
    """
    R = rot2(theta_ba)
    u = lever_unit(theta_t)
    # Q = R^T Pb R, the b-weights pulled back into radar a's frame.
    Q = np.einsum("ji,mjk,kl->mil", R, data.Pb, R)
    Qu = Q @ u                                    # (M, 2)
    rhs_v = np.einsum("mij,mj->mi", data.Pa, data.ha) + np.einsum(
        "ji,mjk,mk->mi", R, data.Pb, data.hb
    )
    rhs_w = np.einsum("i,ji,mjk,mk->m", u, R, data.Pb, data.hb)
    N = np.empty((data.n, 3, 3))
    N[:, :2, :2] = data.Pa + Q
    N[:, :2, 2] = Qu
    N[:, 2, :2] = Qu
    N[:, 2, 2] = np.einsum("i,mij,j->m", u, Q, u)
    rhs = np.concatenate([rhs_v, rhs_w[:, None]], axis=1)
    z = np.linalg.solve(N, rhs[:, :, None])[:, :, 0]
    return z[:, :2], z[:, 2]


def init_motion_states(pairs: list[MeasurementPair], extrinsics: Extrinsics) -> list[MotionState]:
    """Per-timestep motion states that best explain the pairs at fixed extrinsics."""
    data = _pair_data(pairs)
    v, w = _motion_from_data(data, extrinsics.theta_t, extrinsics.theta_ba)
    return [MotionState(v_a=v[j].copy(), omega_gamma=float(w[j])) for j in range(data.n)]


def _dominant_motion_axis(ha: np.ndarray) -> float:
    """Axis of the dominant motion direction, used as the adversarial
    fallback when the data contain no rotational signal (any axis fits
    equally badly then, and the motion direction is the worst case)."""
    angles = np.arctan2(ha[:, 1], ha[:, 0])
    folded = np.array([wrap_axis(a) for a in angles])
    return circular_median(folded, math.pi)


# ---------------------------------------------------------------------------
# Residuals and Jacobian


def _residual_matrix(
    data: _PairData, v: np.ndarray, w: np.ndarray, theta_t: float, theta_ba: float
) -> np.ndarray:
    """Whitened residuals, shape (M, 4): rows [r_a (2), r_b (2)]."""
    R = rot2(theta_ba)
    u = lever_unit(theta_t)
    ea = data.ha - v
    eb = data.hb - (v + w[:, None] * u) @ R.T
    out = np.empty((data.n, 4))
    out[:, 0:2] = np.einsum("mij,mj->mi", data.Wa, ea)
    out[:, 2:4] = np.einsum("mij,mj->mi", data.Wb, eb)
    return out


def _jacobian_blocks(
    data: _PairData, v: np.ndarray, w: np.ndarray, theta_t: float, theta_ba: float
):
    """Whitened Jacobian blocks.

    Returns ``(A, B)`` with ``A`` of shape (M, 4, 3): derivatives of each
    timestep's residuals w.r.t. its own ``(v_a, omega_gamma)``, and ``B`` of
    shape (M, 4, 2): derivatives w.r.t. ``(theta_t, theta_ba)``.
    """
    R = rot2(theta_ba)
    u = lever_unit(theta_t)
    axis = axis_unit(theta_t)
    WbR = data.Wb @ R
    M = data.n
    A = np.zeros((M, 4, 3))
    A[:, 0:2, 0:2] = -data.Wa
    A[:, 2:4, 0:2] = -WbR
    A[:, 2:4, 2] = -(WbR @ u)
    B = np.zeros((M, 4, 2))
    # d r_b / d theta_t: the lever direction turns with the axis.
    B[:, 2:4, 0] = (WbR @ axis) * w[:, None]
    # d r_b / d theta_ba: dR/dtheta = R @ wedge(1).
    Rw = R @ np.array([[0.0, -1.0], [1.0, 0.0]])
    B[:, 2:4, 1] = -np.einsum("mij,mj->mi", data.Wb @ Rw, v + w[:, None] * u)
    return A, B


def residuals(state: CalibState, pairs: list[MeasurementPair]) -> np.ndarray:
    """Whitened residual vector of length 4M.

    Layout: timestep-major, ``[r_a^1 (2), r_b^1 (2), r_a^2 (2), ...]``.  Its
    squared norm is the weighted cost being minimized.
    """
    data = _pair_data(pairs)
    v = np.asarray(state.v_a, dtype=float)
    w = np.asarray(state.omega_gamma, dtype=float)
    if v.shape != (data.n, 2) or w.shape != (data.n,):
        raise InvalidArgumentError(
            f"state holds {v.shape[0] if v.ndim == 2 else 'bad'} motion states "
            f"for {data.n} pairs"
        )
    return _residual_matrix(
        data, v, w, state.extrinsics.theta_t, state.extrinsics.theta_ba
    ).ravel()


def jacobian(state: CalibState, pairs: list[MeasurementPair]) -> scipy.sparse.csr_matrix:
    """Sparse Jacobian of :func:`residuals`, shape (4M, 3M + 2).

    Column order matches the state layout ``[v^1_x, v^1_y, omega_gamma^1,
    ..., theta_t, theta_ba]``.  Rows of timestep j have support only on that
    timestep's three motion columns and the two shared extrinsic columns.
    """
    data = _pair_data(pairs)
    v = np.asarray(state.v_a, dtype=float)
    w = np.asarray(state.omega_gamma, dtype=float)
    A, B = _jacobian_blocks(data, v, w, state.extrinsics.theta_t, state.extrinsics.theta_ba)
    M = data.n
    rows_m = (4 * np.arange(M)[:, None, None] + np.arange(4)[None, :, None])
    cols_m = (3 * np.arange(M)[:, None, None] + np.arange(3)[None, None, :])
    rows_m = np.broadcast_to(rows_m, A.shape).ravel()
    cols_m = np.broadcast_to(cols_m, A.shape).ravel()
    rows_e = (4 * np.arange(M)[:, None, None] + np.arange(4)[None, :, None])
    cols_e = (3 * M + np.arange(2))[None, None, :]
    rows_e = np.broadcast_to(rows_e, B.shape).ravel()
    cols_e = np.broadcast_to(cols_e, B.shape).ravel()
    mat = scipy.sparse.coo_matrix(
        (
            np.concatenate([A.ravel(), B.ravel()]),
            (np.concatenate([rows_m, rows_e]), np.concatenate([cols_m, cols_e])),
        ),
        shape=(4 * M, 3 * M + 2),
    )
    return mat.tocsr()


def unconstrained_cost(
    pairs: list[MeasurementPair],
    v: np.ndarray,
    omega: np.ndarray,
    t_vec: np.ndarray,
    theta_ba: float,
    cov_floor: float = COV_FLOOR,
) -> float:
    """Weighted cost in the raw ``(omega, t)`` parametrization, ``|t|`` free.

    Useful for checking model properties; the optimizer itself works in the
    scale-free parametrization.  Rescaling ``omega -> g * omega`` together
    with ``t -> t / g`` leaves this value unchanged.
    """
    data = _pair_data(pairs, cov_floor)
    v = np.asarray(v, dtype=float)
    omega = np.asarray(omega, dtype=float)
    t_vec = np.asarray(t_vec, dtype=float)
    R = rot2(theta_ba)
    lever = np.array([-t_vec[1], t_vec[0]])
    ea = data.ha - v
    eb = data.hb - (v + omega[:, None] * lever) @ R.T
    ca = np.einsum("mi,mij,mj->", ea, data.Pa, ea)
    cb = np.einsum("mi,mij,mj->", eb, data.Pb, eb)
    return float(ca + cb)


# ---------------------------------------------------------------------------
# Levenberg-Marquardt with Schur elimination of the motion states


def _gauss_newton_blocks(A, B, r4):
    Hmm = np.einsum("mri,mrj->mij", A, A)
    Hme = np.einsum("mri,mrj->mij", A, B)
    Hee = np.einsum("mri,mrj->ij", B, B)
    gm = np.einsum("mri,mr->mi", A, r4)
    ge = np.einsum("mri,mr->i", B, r4)
    return Hmm, Hme, Hee, gm, ge


def _schur_step(Hmm, Hme, Hee, gm, ge, lam):
    """Solve the damped normal equations, eliminating motion blocks."""
    dm_diag = np.einsum("mii->mi", Hmm).copy()
    dm_diag[dm_diag <= 0] = 1.0
    Hmm_d = Hmm + lam * dm_diag[:, :, None] * np.eye(3)
    de_diag = np.diag(Hee).copy()
    de_diag = np.where(de_diag > 0, de_diag, 1.0)
    Hee_d = Hee + lam * np.diag(de_diag)
    Cinv = np.linalg.inv(Hmm_d)
    S = Hee_d - np.einsum("mia,mij,mjb->ab", Hme, Cinv, Hme)
    rhs = ge - np.einsum("mia,mij,mj->a", Hme, Cinv, gm)
    de = -np.linalg.solve(S, rhs)
    dm = -np.einsum("mij,mj->mi", Cinv, gm + Hme @ de)
    return dm, de


def _marginal_extrinsic_covariance(Hmm, Hme, Hee):
    """Covariance of (theta_t, theta_ba) after marginalizing motion states."""
    Cinv = np.linalg.inv(Hmm)
    S = Hee - np.einsum("mia,mij,mjb->ab", Hme, Cinv, Hme)
    try:
        return np.linalg.inv(S)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(S)


def _canonical_gauge(theta_t: float, theta_ba: float, w: np.ndarray):
    """Fold the axis into [0, pi); an odd fold flips the lever direction,
    so the unscaled rates change sign to keep the model value fixed."""
    k = math.floor(theta_t / math.pi)
    tt = theta_t - k * math.pi
    if tt >= math.pi:
        tt -= math.pi
        k += 1
    if tt < 0.0:
        tt = 0.0
    if k % 2 != 0:
        w = -w
    return tt, wrap_to_pi(theta_ba), w


def velocity_error_metric(pairs: list[MeasurementPair], extrinsics: Extrinsics) -> float:
    """Mean magnitude of the radar-b residual with per-pair best-fit rates.

    Takes ``h_a`` as radar a's velocity, solves the single scalar rate that
    best maps it onto ``h_b`` through the given extrinsics, and averages the
    remaining magnitude.  A consistency measure comparable across datasets
    without ground truth.
    """
    data = _pair_data(pairs)
    R = rot2(extrinsics.theta_ba)
    u = lever_unit(extrinsics.theta_t)
    d = data.hb @ R - data.ha        # rows R^T h_b - h_a
    wstar = d @ u                    # unit lever direction: projection is optimal
    eb = data.hb - (data.ha + wstar[:, None] * u) @ R.T
    return float(np.mean(np.hypot(eb[:, 0], eb[:, 1])))


def fused_ego_velocities(
    report: CalibrationReport,
    pairs: list[MeasurementPair],
    ground_truth=None,
    mode: str | None = None,
) -> dict:
    """Raw and fused ego-velocity error magnitudes for both radars.

    ``mode="simulation"`` compares against supplied ground truth (a
    :class:`radarcal.simulator.GroundTruth` aligned with the pairs).
    ``mode="reconstruction"`` needs no truth: each radar is compared against
    the reconstruction through the calibrated model from the *other* radar's
    raw measurement, which is the best available reference on real data.
    Default mode is simulation when truth is given, reconstruction otherwise.

    Returns ``{"radar_a": {"raw": (M,), "fused": (M,)}, "radar_b": ...}``.
    """
    if mode is None:
        mode = "simulation" if ground_truth is not None else "reconstruction"
    if mode not in ("simulation", "reconstruction"):
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    if mode == "simulation" and ground_truth is None:
        raise InvalidArgumentError("simulation mode requires ground truth")

    data = _pair_data(pairs)
    ext = report.extrinsics
    R = rot2(ext.theta_ba)
    u = lever_unit(ext.theta_t)
    v = np.array([m.v_a for m in report.fused_motion], dtype=float)
    w = np.array([m.omega_gamma for m in report.fused_motion], dtype=float)
    if v.shape[0] != data.n:
        raise InvalidArgumentError("report and pairs disagree on the number of timesteps")
    fused_b = (v + w[:, None] * u) @ R.T

    if mode == "simulation":
        # Pairs may be a filtered subset of the truth grid (scans with too
        # few detections dropped, slow pairs removed), so match row by row
        # instead of demanding identical arrays.
        tts = np.asarray(ground_truth.timestamps, dtype=float)
        idx = np.searchsorted(tts, data.timestamps)
        idx = np.clip(idx, 0, len(tts) - 1)
        left = np.clip(idx - 1, 0, len(tts) - 1)
        idx = np.where(
            np.abs(tts[left] - data.timestamps) < np.abs(tts[idx] - data.timestamps),
            left,
            idx,
        )
        if not np.allclose(tts[idx], data.timestamps, rtol=0.0, atol=1e-9):
            raise InvalidArgumentError("ground truth timestamps do not match the pairs")
        ref_a = ground_truth.v_a[idx]
        ref_b = ground_truth.model_h_b()[idx]
    else:
        ref_a = data.hb @ R - w[:, None] * u
        ref_b = (data.ha + w[:, None] * u) @ R.T

    def mag(x):
        return np.hypot(x[:, 0], x[:, 1])

    return {
        "radar_a": {"raw": mag(data.ha - ref_a), "fused": mag(v - ref_a)},
        "radar_b": {"raw": mag(data.hb - ref_b), "fused": mag(fused_b - ref_b)},
    }


@dataclass
class _LmRun:
    """Outcome of one damped Gauss-Newton descent from a given start."""

    v: np.ndarray
    w: np.ndarray
    theta_t: float
    theta_ba: float
    cost: float
    iterations: int
    converged: bool
    termination: str


def _run_lm(data: _PairData, theta_t0: float, theta_ba0: float, opts: SolverOptions) -> _LmRun:
    v, w = _motion_from_data(data, theta_t0, theta_ba0)
    tht = float(theta_t0)
    thb = float(theta_ba0)

    r4 = _residual_matrix(data, v, w, tht, thb)
    cost = float(np.sum(r4 * r4))
    lam = opts.lambda0
    converged = False
    termination = "max_iterations"
    iterations = 0

    for _ in range(opts.max_iterations):
        iterations += 1
        A, B = _jacobian_blocks(data, v, w, tht, thb)
        Hmm, Hme, Hee, gm, ge = _gauss_newton_blocks(A, B, r4)
        ginf = max(float(np.max(np.abs(gm))), float(np.max(np.abs(ge))))
        if ginf < opts.gradient_tol:
            converged = True
            termination = "gradient"
            break

        accepted = False
        while lam <= opts.lambda_max:
            try:
                dm, de = _schur_step(Hmm, Hme, Hee, gm, ge, lam)
            except np.linalg.LinAlgError:
                lam *= opts.lambda_up
                continue
            v_new = v + dm[:, :2]
            w_new = w + dm[:, 2]
            tht_new = tht + float(de[0])
            thb_new = thb + float(de[1])
            r4_new = _residual_matrix(data, v_new, w_new, tht_new, thb_new)
            cost_new = float(np.sum(r4_new * r4_new))
            if cost_new < cost:
                step_inf = max(float(np.max(np.abs(dm))), float(np.max(np.abs(de))))
                rel_dec = (cost - cost_new) / max(cost, np.finfo(float).tiny)
                v, w, tht, thb, r4, cost = v_new, w_new, tht_new, thb_new, r4_new, cost_new
                lam = max(lam / opts.lambda_down, 1e-15)
                accepted = True
                if rel_dec < opts.relative_cost_tol:
                    converged = True
                    termination = "cost_decrease"
                elif step_inf < opts.step_tol:
                    converged = True
                    termination = "step"
                break
            lam *= opts.lambda_up
        if not accepted:
            termination = "lambda_overflow"
            break
        if converged:
            break

    return _LmRun(
        v=v, w=w, theta_t=tht, theta_ba=thb, cost=cost,
        iterations=iterations, converged=converged, termination=termination,
    )


def _grid_profile_costs(data: _PairData, tts: np.ndarray, tbs: np.ndarray) -> np.ndarray:
    """Profile cost at each (theta_t, theta_ba) gridpoint.

    For every gridpoint the motion states are fitted in closed form (same
    math as :func:`_motion_from_data`, vectorized over gridpoints) and the
    whitened cost evaluated.  Input arrays are flat and equally long.
    """
    G = tts.size
    M = data.n
    costs = np.empty(G)
    chunk = max(1, 200_000 // max(M, 1))
    for lo in range(0, G, chunk):
        tt = tts[lo:lo + chunk]
        tb = tbs[lo:lo + chunk]
        g = tt.size
        cb, sb = np.cos(tb), np.sin(tb)
        R = np.empty((g, 2, 2))
        R[:, 0, 0] = cb
        R[:, 0, 1] = -sb
        R[:, 1, 0] = sb
        R[:, 1, 1] = cb
        u = np.stack([-np.sin(tt), np.cos(tt)], axis=1)
        Q = np.einsum("gji,mjk,gkl->gmil", R, data.Pb, R, optimize=True)
        Qu = np.einsum("gmij,gj->gmi", Q, u)
        rhs_v = np.einsum("mij,mj->mi", data.Pa, data.ha)[None] + np.einsum(
            "gji,mjk,mk->gmi", R, data.Pb, data.hb, optimize=True
        )
        rhs_w = np.einsum("gi,gji,mjk,mk->gm", u, R, data.Pb, data.hb, optimize=True)
        N = np.empty((g, M, 3, 3))
        N[:, :, :2, :2] = data.Pa[None] + Q
        N[:, :, :2, 2] = Qu
        N[:, :, 2, :2] = Qu
        N[:, :, 2, 2] = np.einsum("gi,gmij,gj->gm", u, Q, u, optimize=True)
        rhs = np.concatenate([rhs_v, rhs_w[..., None]], axis=2)
        z = np.linalg.solve(N.reshape(-1, 3, 3), rhs.reshape(-1, 3, 1)).reshape(g, M, 3)
        v, w = z[:, :, :2], z[:, :, 2]
        ea = data.ha[None] - v
        eb = data.hb[None] - np.einsum("gij,gmj->gmi", R, v + w[..., None] * u[:, None, :])
        ra = np.einsum("mij,gmj->gmi", data.Wa, ea)
        rb = np.einsum("mij,gmj->gmi", data.Wb, eb)
        costs[lo:lo + chunk] = np.einsum("gmi,gmi->g", ra, ra) + np.einsum(
            "gmi,gmi->g", rb, rb
        )
    return costs


def _coarse_grid_init(data: _PairData, step_deg: float) -> tuple[float, float]:
    """Best (theta_t, theta_ba) cell of a coarse profile-cost sweep.

    Slower than the closed-form guesses but insensitive to baseline length
    and dataset size, so it serves as the fallback start."""
    t_grid = np.arange(0.0, math.pi, math.radians(step_deg))
    ba_grid = np.arange(-math.pi, math.pi, math.radians(step_deg))
    TT, TB = np.meshgrid(t_grid, ba_grid, indexing="ij")
    costs = _grid_profile_costs(data, TT.ravel(), TB.ravel())
    j = int(np.argmin(costs))
    return float(TT.ravel()[j]), float(TB.ravel()[j])


def solve_lm(pairs: list[MeasurementPair], options: SolverOptions | None = None) -> CalibrationReport:
    """Calibrate the radar pair from synchronized ego-velocity pairs.

    Initializes the rotation, axis and motion states in closed form, then
    refines everything jointly with damped Gauss-Newton.  When excitation
    enforcement is on (default), datasets whose motion cannot constrain the
    extrinsics raise :class:`UnidentifiableError` instead of returning a
    spurious answer; the diagnostic report rides along on the exception.
    """
    opts = options or SolverOptions()
    data = _pair_data(pairs, opts.cov_floor)
    M = data.n
    if M < 2:
        raise InsufficientDataError(f"need at least 2 pairs, got {M}")

    theta_ba0 = init_rotation(pairs, k=opts.init_k, min_speed=opts.min_speed)
    axis_fallback = False
    try:
        theta_t0 = init_translation_axis(pairs, theta_ba0, min_lever=opts.min_lever)
    except InsufficientExcitationError:
        theta_t0 = _dominant_motion_axis(data.ha)
        axis_fallback = True

    from .identifiability import excitation_report  # deferred: identifiability uses this module

    excitation = None
    if M >= 3:
        excitation = excitation_report(
            pairs, Extrinsics(theta_t=theta_t0, theta_ba=theta_ba0), opts.excitation_thresholds
        )
    if opts.enforce_excitation:
        if excitation is None:
            raise InsufficientDataError("excitation check needs at least 3 pairs")
        if (
            axis_fallback
            or excitation.flags
            or excitation.fraction_degenerate > opts.max_degenerate_fraction
        ):
            detail = [f"degenerate fraction {excitation.fraction_degenerate:.3f}"]
            if excitation.flags:
                detail.append("flags: " + ", ".join(excitation.flags))
            if axis_fallback:
                detail.append("no rotational signal")
            raise UnidentifiableError(
                "motion does not excite the extrinsics (" + "; ".join(detail) + ")",
                report=excitation,
            )

    run = _run_lm(data, theta_t0, theta_ba0, opts)

    # The closed-form guesses can start the descent in the wrong basin: the
    # rotation guess assumes the lever barely perturbs the speeds (false for
    # long baselines), and on very short datasets it rests on a handful of
    # pairs.  A coarse sweep of the two extrinsic angles with closed-form
    # motion fits is insensitive to both, so rerun from its best cell and
    # keep the better result.  Short datasets always get the sweep (it costs
    # milliseconds there); long ones only when the first run's cost is far
    # above the residual count implied by the declared covariances.
    dof = max(4 * M - (3 * M + 2), 1)
    if M <= opts.grid_init_max_pairs:
        tt_g, tb_g = _coarse_grid_init(data, step_deg=2.5)
        retry = _run_lm(data, tt_g, tb_g, opts)
        if retry.cost < run.cost:
            run = retry
    elif run.cost / dof > opts.restart_cost_ratio:
        tt_g, tb_g = _coarse_grid_init(data, step_deg=10.0)
        retry = _run_lm(data, tt_g, tb_g, opts)
        if retry.cost < run.cost:
            run = retry

    v, w = run.v, run.w
    iterations, converged, termination = run.iterations, run.converged, run.termination
    tht, thb, w = _canonical_gauge(run.theta_t, run.theta_ba, w)
    ext = Extrinsics(theta_t=tht, theta_ba=thb)
    r4 = _residual_matrix(data, v, w, tht, thb)
    cost = float(np.sum(r4 * r4))
    A, B = _jacobian_blocks(data, v, w, tht, thb)
    Hmm, Hme, Hee, _, _ = _gauss_newton_blocks(A, B, r4)
    cov = _marginal_extrinsic_covariance(Hmm, Hme, Hee)

    fused = [MotionState(v_a=v[j].copy(), omega_gamma=float(w[j])) for j in range(M)]
    report = CalibrationReport(
        extrinsics=ext,
        extrinsic_covariance=cov,
        final_cost=cost,
        iterations=iterations,
        converged=converged,
        termination=termination,
        excitation=excitation,
        fused_motion=fused,
        timestamps=data.timestamps.copy(),
        mean_velocity_error=velocity_error_metric(pairs, ext),
        velocity_error_table={},
    )
    errors = fused_ego_velocities(report, pairs, mode="reconstruction")
    qs = (0.25, 0.5, 0.75, 0.9)
    report.velocity_error_table = {
        radar: {
            kind: {f"q{int(100 * q)}": float(np.quantile(series, q)) for q in qs}
            for kind, series in both.items()
        }
        for radar, both in errors.items()
    }
    return report
