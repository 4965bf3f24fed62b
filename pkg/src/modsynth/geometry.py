"""Rigid-body poses, pose errors, rotation axis/angle extraction, and goal tolerances.

Conventions used throughout the package:

* A pose is a rotation matrix R plus a translation t; p_world = R @ p_local + t.
* The pose error between a desired and an actual pose is expressed in the
  desired frame: t_e = R_dᵀ (t_a - t_d), R_e = R_dᵀ R_a.  This keeps the
  anisotropic box tolerance aligned with the goal axes (the loose bound sits
  on the local z, i.e. the drill axis).
* Angles are radians, lengths are meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Rotations with angle at or below this have no well-defined axis; the
# small-angle clause of the axis tolerance covers them instead.
ANGLE_FLOOR = 1e-7

_ORTHONORMAL_TOL = 1e-9


class DegenerateRotation(ValueError):
    """Raised when a rotation axis is requested for a (near-)identity rotation."""


def _as_vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(3)
    v.flags.writeable = False
    return v


def _as_rot(x) -> np.ndarray:
    r = np.asarray(x, dtype=float).reshape(3, 3)
    r.flags.writeable = False
    return r


def _check_orthonormal(r: np.ndarray, what: str) -> None:
    if abs(np.linalg.det(r) - 1.0) > 1e-6 or np.max(np.abs(r.T @ r - np.eye(3))) > 1e-6:
        raise ValueError(f"{what} is not a proper rotation matrix")


@dataclass(frozen=True)
class Pose:
    """A rigid-body pose: translation in meters plus a proper rotation matrix."""

    translation: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "translation", _as_vec3(self.translation))
        object.__setattr__(self, "rotation", _as_rot(self.rotation))
        _check_orthonormal(self.rotation, "Pose.rotation")

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), np.eye(3))

    @staticmethod
    def from_translation(x: float, y: float, z: float) -> "Pose":
        return Pose(np.array([x, y, z]), np.eye(3))

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=float)
        return Pose(m[:3, 3], m[:3, :3])

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, point) -> np.ndarray:
        """Map a point from this pose's local frame to the parent frame."""
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def isclose(self, other: "Pose", tol: float = 1e-9) -> bool:
        return (
            np.allclose(self.translation, other.translation, atol=tol)
            and np.allclose(self.rotation, other.rotation, atol=tol)
        )


@dataclass(frozen=True)
class PoseError:
    """Translation and rotation offset of an actual pose relative to a desired one."""

    translation_error: np.ndarray
    rotation_error: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "translation_error", _as_vec3(self.translation_error))
        object.__setattr__(self, "rotation_error", _as_rot(self.rotation_error))
        _check_orthonormal(self.rotation_error, "PoseError.rotation_error")

    @staticmethod
    def zero() -> "PoseError":
        return PoseError(np.zeros(3), np.eye(3))


@dataclass(frozen=True)
class ToleranceSpec:
    """Box bound on the translation error plus an axis allowance on the rotation error.

    The rotation clause accepts arbitrary rotations about +-axis (within the
    elementwise numerical threshold axis_epsilon) and any rotation of at most
    max_angle about an arbitrary axis.
    """

    box_bounds: np.ndarray
    axis: np.ndarray
    max_angle: float
    axis_epsilon: np.ndarray = field(default_factory=lambda: np.full(3, 1e-3))

    def __post_init__(self):
        object.__setattr__(self, "box_bounds", _as_vec3(self.box_bounds))
        object.__setattr__(self, "axis", _as_vec3(self.axis))
        object.__setattr__(self, "axis_epsilon", _as_vec3(self.axis_epsilon))
        if np.any(self.box_bounds < 0):
            raise ValueError("box_bounds must be elementwise >= 0")
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
            raise ValueError("tolerance axis must be a unit vector")
        if np.any(self.axis_epsilon <= 0) or np.any(self.axis_epsilon >= 1):
            raise ValueError("axis_epsilon components must lie in (0, 1)")
        if self.max_angle < 0:
            raise ValueError("max_angle must be >= 0")


@dataclass(frozen=True)
class DistanceWeights:
    """Weights combining translation (1/m) and rotation (1/rad) error into one scalar."""

    w_t: float = 1.0
    w_R: float = 0.5

    def __post_init__(self):
        if self.w_t <= 0 or self.w_R <= 0:
            raise ValueError("distance weights must be strictly positive")


def compose(a: Pose, b: Pose) -> Pose:
    """Rigid-body composition a ∘ b (apply b first, then a)."""
    return Pose(a.rotation @ b.translation + a.translation, a.rotation @ b.rotation)


def inverse(p: Pose) -> Pose:
    rt = p.rotation.T
    return Pose(-(rt @ p.translation), rt)


def pose_error(desired: Pose, actual: Pose) -> PoseError:
    """Error of `actual` relative to `desired`, expressed in the desired frame."""
    rd_t = desired.rotation.T
    return PoseError(
        rd_t @ (actual.translation - desired.translation),
        rd_t @ actual.rotation,
    )


def rotation_angle(r: np.ndarray) -> float:
    """Rotation angle in [0, pi] of an orthonormal matrix."""
    c = (float(np.trace(r)) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, c)))


def rotation_axis(r: np.ndarray) -> np.ndarray:
    """Unit axis n with r = exp(angle * [n]x).

    Raises DegenerateRotation when the angle is at or below ANGLE_FLOOR;
    callers checking tolerances must apply the small-angle clause first.
    """
    r = np.asarray(r, dtype=float)
    phi = rotation_angle(r)
    if phi <= ANGLE_FLOOR:
        raise DegenerateRotation(f"rotation angle {phi:.3e} rad has no stable axis")
    skew = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if math.pi - phi > 1e-6:
        return skew / (2.0 * math.sin(phi))
    # Near pi the skew part vanishes; use the dominant column of R + I, whose
    # columns are all parallel to the axis.
    s = r + np.eye(3)
    k = int(np.argmax(np.diag(s)))
    axis = s[:, k] / np.linalg.norm(s[:, k])
    # Align with the (tiny but possibly nonzero) skew part for continuity.
    if np.dot(axis, skew) < 0:
        axis = -axis
    return axis


def rotation_from_axis_angle(axis, angle: float) -> np.ndarray:
    """Rodrigues formula; axis need not be normalized unless angle comes from it."""
    u = np.asarray(axis, dtype=float)
    n = np.linalg.norm(u)
    if n == 0:
        if angle == 0:
            return np.eye(3)
        raise ValueError("zero axis with nonzero angle")
    u = u / n
    k = np.array([[0, -u[2], u[1]], [u[2], 0, -u[0]], [-u[1], u[0], 0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


def euclidean_tolerance_met(e: PoseError, t: ToleranceSpec) -> bool:
    """True iff |t_e| <= box_bounds elementwise."""
    return bool(np.all(np.abs(e.translation_error) <= t.box_bounds))


def axis_tolerance_met(e: PoseError, t: ToleranceSpec) -> bool:
    """True iff the rotation error is small or is a rotation about +-axis.

    The small-angle clause is evaluated first so the axis is never extracted
    from a near-identity rotation.
    """
    phi = rotation_angle(e.rotation_error)
    if phi <= t.max_angle:
        return True
    if phi <= ANGLE_FLOOR:
        # Identity within numerics but max_angle is even tighter: no axis to check.
        return False
    n = rotation_axis(e.rotation_error)
    return bool(
        np.all(np.abs(n - t.axis) <= t.axis_epsilon)
        or np.all(np.abs(n + t.axis) <= t.axis_epsilon)
    )


def tolerance_met(e: PoseError, t: ToleranceSpec) -> bool:
    """Both the box and the axis clause hold."""
    return euclidean_tolerance_met(e, t) and axis_tolerance_met(e, t)


def scalar_distance(e: PoseError, w: DistanceWeights = DistanceWeights()) -> float:
    """Weighted scalar pose error: w_t * ||t_e||_2 + w_R * angle(R_e)."""
    return w.w_t * float(np.linalg.norm(e.translation_error)) + w.w_R * rotation_angle(
        e.rotation_error
    )


@dataclass(frozen=True)
class Capsule:
    """Line-segment swept sphere: endpoints in some frame plus a radius."""

    a: np.ndarray
    b: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "a", _as_vec3(self.a))
        object.__setattr__(self, "b", _as_vec3(self.b))
        if self.radius <= 0:
            raise ValueError("capsule radius must be > 0")

    def transformed(self, pose: Pose) -> "Capsule":
        return Capsule(pose.apply(self.a), pose.apply(self.b), self.radius)


def segment_segment_distance(p1, q1, p2, q2) -> float:
    """Minimum distance between segments [p1, q1] and [p2, q2]."""
    p1 = np.asarray(p1, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    eps = 1e-12
    if a <= eps and e <= eps:
        return math.sqrt(float(r @ r))
    if a <= eps:
        s, t = 0.0, min(1.0, max(0.0, f / e))
    else:
        c = float(d1 @ r)
        if e <= eps:
            t, s = 0.0, min(1.0, max(0.0, -c / a))
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            s = min(1.0, max(0.0, (b * f - c * e) / denom)) if denom > eps else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(1.0, max(0.0, -c / a))
            elif t > 1.0:
                t = 1.0
                s = min(1.0, max(0.0, (b - c) / a))
    v = (p1 + s * d1) - (p2 + t * d2)
    return math.sqrt(float(v @ v))
