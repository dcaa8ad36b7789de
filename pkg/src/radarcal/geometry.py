"""Planar rotation and angle helpers shared by every other module.

Conventions, used consistently across the package:

* Vectors are numpy arrays of shape ``(2,)``; matrices are ``(2, 2)`` and act
  on column vectors, ``w = M @ v``.
* ``rot2(theta)`` is the counterclockwise rotation ``[[c, -s], [s, c]]``.
  When ``theta`` is the orientation of frame b expressed in frame a,
  ``rot2(theta)`` maps b-frame coordinates into a-frame coordinates.
* ``wedge(r)`` is the planar analogue of the cross-product matrix:
  ``wedge(r) @ v`` rotates ``v`` by +90 degrees and scales it by ``r``.
* Translation axes are direction-only quantities; an axis angle and its
  antipode describe the same line, so axis angles live in ``[0, pi)``.
  Relative orientations live in ``(-pi, pi]``.

Angles are plain floats in radians.  No function here wraps its input; the
optimizer works on unconstrained angles and wrapping is applied only when
results are reported.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidArgumentError

Angle = float
Vec2 = np.ndarray
Mat2 = np.ndarray


def rot2(theta: Angle) -> Mat2:
    """Counterclockwise rotation matrix for the angle ``theta``."""
    if not math.isfinite(theta):
        raise InvalidArgumentError(f"rotation angle must be finite, got {theta!r}")
    c = math.cos(theta)
    s = math.sin(theta)
    return np.array([[c, -s], [s, c]])


def wedge(r: float) -> Mat2:
    """Matrix form of the planar cross product: ``[[0, -r], [r, 0]]``."""
    if not math.isfinite(r):
        raise InvalidArgumentError(f"wedge argument must be finite, got {r!r}")
    return np.array([[0.0, -r], [r, 0.0]])


def wrap_axis(theta: Angle) -> Angle:
    """Map an axis angle to the canonical representative in ``[0, pi)``.

    Axis angles are modulo pi because a direction and its antipode span the
    same line.  Idempotent: values already in range are returned unchanged.
    """
    if not math.isfinite(theta):
        raise InvalidArgumentError(f"axis angle must be finite, got {theta!r}")
    k = math.floor(theta / math.pi)
    if k == 0:
        return theta
    out = theta - k * math.pi
    # Rounding can land exactly on pi when theta is a hair below a multiple.
    if out >= math.pi:
        out -= math.pi
    if out < 0.0:
        out = 0.0
    return out


def wrap_to_pi(theta: Angle) -> Angle:
    """Map an angle to ``(-pi, pi]``."""
    if not math.isfinite(theta):
        raise InvalidArgumentError(f"angle must be finite, got {theta!r}")
    out = math.remainder(theta, math.tau)
    if out <= -math.pi:
        out += math.tau
    return out


def axis_unit(theta_t: Angle) -> Vec2:
    """Unit vector along the translation axis at angle ``theta_t``."""
    return np.array([math.cos(theta_t), math.sin(theta_t)])


def lever_unit(theta_t: Angle) -> Vec2:
    """Unit vector of the lever-arm velocity direction, ``wedge(1) @ axis``.

    A unit angular rate about the origin moves a point on the axis along
    this direction.
    """
    return np.array([-math.sin(theta_t), math.cos(theta_t)])


def angle_between(a: Vec2, b: Vec2) -> Angle:
    """Signed angle that rotates ``a`` onto ``b``, in ``(-pi, pi]``.

    Scale invariant; both inputs must be nonzero.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidArgumentError("angle_between requires finite vectors")
    na = math.hypot(a[0], a[1])
    nb = math.hypot(b[0], b[1])
    if na == 0.0 or nb == 0.0:
        raise InvalidArgumentError("angle_between requires nonzero vectors")
    cross = a[0] * b[1] - a[1] * b[0]
    dot = a[0] * b[0] + a[1] * b[1]
    out = math.atan2(cross / (na * nb), dot / (na * nb))
    if out <= -math.pi:
        out += math.tau
    return out


def circular_median(angles: np.ndarray, modulus: float = math.tau) -> Angle:
    """Median of angles under a circular metric with the given modulus.

    Returns the sample value minimizing the summed absolute circular
    deviation to all other samples; ties break toward the smaller canonical
    value.  Robust against wraparound, unlike a plain median.
    """
    arr = np.asarray(angles, dtype=float)
    if arr.size == 0:
        raise InvalidArgumentError("circular_median of an empty set")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("circular_median requires finite angles")
    canon = np.mod(arr, modulus)
    diffs = np.abs(canon[:, None] - canon[None, :])
    diffs = np.minimum(diffs, modulus - diffs)
    score = diffs.sum(axis=1)
    best = np.flatnonzero(score == score.min())
    return float(np.min(canon[best]))
