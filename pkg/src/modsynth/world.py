"""Obstacles, goals, tasks, and the collision queries behind the
self-collision and environment-collision constraints.

All obstacle shapes are convex primitives (box, sphere, capsule) placed by a
pose.  Collision means the surfaces strictly interpenetrate; exact touching
counts as collision-free.

Drilling requires the tool to enter the wall volume, so each goal owns an
exemption cylinder along its drill axis: a link capsule whose centerline lies
inside that cylinder is excused from environment collision checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Capsule, Pose, ToleranceSpec, segment_segment_distance
from .kinematics import BasePose, SerialChain, _walk, world_capsules

PHASE_TRANSIT = "transit"
PHASE_APPROACH = "approach"
PHASE_DRILL = "drill"
PHASE_RETRACT = "retract"
PHASES = (PHASE_TRANSIT, PHASE_APPROACH, PHASE_DRILL, PHASE_RETRACT)

# Radius of the per-goal collision exemption cylinder around the drill axis.
DRILL_EXEMPTION_RADIUS = 0.02

_BOX_DISTANCE_TOL = 1e-6


@dataclass(frozen=True)
class Box:
    half_extents: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.half_extents, dtype=float).reshape(3)
        if np.any(h <= 0):
            raise ValueError("box half extents must be > 0")
        h.flags.writeable = False
        object.__setattr__(self, "half_extents", h)


@dataclass(frozen=True)
class Sphere:
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sphere radius must be > 0")


@dataclass(frozen=True)
class Obstacle:
    """A convex primitive placed in the world."""

    id: str
    pose: Pose
    shape: Box | Sphere | Capsule


@dataclass(frozen=True)
class Goal:
    """Desired TCP pose with tolerance; local +z is the drill axis.

    The goal pose marks the bottom of the hole.  The planner derives the wall
    entry point ``drill_depth`` behind it and a free-space approach pose a
    further ``approach_clearance`` back, both along the local -z.
    """

    id: str
    pose: Pose
    tolerance: ToleranceSpec
    drill_depth: float = 0.15
    approach_clearance: float = 0.10

    def __post_init__(self):
        if self.drill_depth < 0 or self.approach_clearance <= 0:
            raise ValueError("drill_depth must be >= 0 and approach_clearance > 0")

    def offset_pose(self, back: float) -> Pose:
        """Pose shifted ``back`` meters against the drill axis."""
        t = self.pose.translation - back * self.pose.rotation[:, 2]
        return Pose(t, self.pose.rotation)

    def entry_pose(self) -> Pose:
        return self.offset_pose(self.drill_depth)

    def approach_pose(self) -> Pose:
        return self.offset_pose(self.drill_depth + self.approach_clearance)

    def exemption(self) -> "ExemptionCylinder":
        """Cylinder along the drill axis inside which collisions are forgiven."""
        z = self.pose.rotation[:, 2]
        start = self.pose.translation - (self.drill_depth + self.approach_clearance + 0.40) * z
        end = self.pose.translation + 0.005 * z
        return ExemptionCylinder(start, end, DRILL_EXEMPTION_RADIUS)


@dataclass(frozen=True)
class ExemptionCylinder:
    a: np.ndarray
    b: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(3))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(3))

    def covers(self, cap: Capsule) -> bool:
        """True when the capsule centerline lies within the cylinder radius.

        Point-to-segment distance is convex along the centerline, so checking
        the endpoints bounds the whole segment.
        """
        return (
            point_segment_distance(cap.a, self.a, self.b) <= self.radius
            and point_segment_distance(cap.b, self.a, self.b) <= self.radius
        )


@dataclass(frozen=True)
class Task:
    """A formalized drilling task: goals in execution order, obstacles, the
    nominal base placement, the per-phase payload wrench (TCP frame), and the
    base-displacement envelope the robustness score is measured against."""

    name: str
    goals: tuple[Goal, ...]
    obstacles: tuple[Obstacle, ...]
    nominal_base: BasePose
    payload_by_phase: dict = field(default_factory=dict)
    robustness_envelope: np.ndarray = field(
        default_factory=lambda: np.array([0.20, 0.20, math.radians(15.0)])
    )

    def __post_init__(self):
        object.__setattr__(self, "goals", tuple(self.goals))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        env = np.asarray(self.robustness_envelope, dtype=float).reshape(3)
        if np.any(env < 0):
            raise ValueError("robustness envelope components must be >= 0")
        env.flags.writeable = False
        object.__setattr__(self, "robustness_envelope", env)
        if not self.goals:
            raise ValueError("a task needs at least one goal")
        if len({g.id for g in self.goals}) != len(self.goals):
            raise ValueError("goal ids must be unique")
        if len({o.id for o in self.obstacles}) != len(self.obstacles):
            raise ValueError("obstacle ids must be unique")
        payload = {k: np.asarray(v, dtype=float).reshape(6) for k, v in self.payload_by_phase.items()}
        for k in payload:
            if k not in PHASES:
                raise ValueError(f"unknown payload phase {k!r}")
        object.__setattr__(self, "payload_by_phase", payload)

    def payload(self, phase: str) -> np.ndarray | None:
        """TCP-frame wrench for a phase, or None when the phase is unloaded."""
        return self.payload_by_phase.get(phase)


def point_segment_distance(p, a, b) -> float:
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    dd = float(d @ d)
    if dd < 1e-12:
        v = p - a
        return math.sqrt(float(v @ v))
    t = min(1.0, max(0.0, float((p - a) @ d) / dd))
    v = p - (a + t * d)
    return math.sqrt(float(v @ v))


def _point_box_distance(p: np.ndarray, half_extents: np.ndarray) -> float:
    outside = np.maximum(np.abs(p) - half_extents, 0.0)
    return math.sqrt(float(outside @ outside))


def segment_box_distance(a, b, box_pose: Pose, half_extents) -> float:
    """Distance from segment [a, b] to a box surface (0 when touching or inside).

    Exact: squared distance along the segment is piecewise quadratic, with
    breakpoints where a coordinate crosses a box slab; each piece is minimized
    in closed form.
    """
    r, t = box_pose.rotation, box_pose.translation
    h = np.asarray(half_extents, dtype=float)
    la = r.T @ (np.asarray(a, dtype=float) - t)
    lb = r.T @ (np.asarray(b, dtype=float) - t)
    p0 = (float(la[0]), float(la[1]), float(la[2]))
    d = (float(lb[0] - la[0]), float(lb[1] - la[1]), float(lb[2] - la[2]))
    hh = (float(h[0]), float(h[1]), float(h[2]))
    if d[0] * d[0] + d[1] * d[1] + d[2] * d[2] < 1e-18:
        return _point_box_distance(la, h)
    ts = [0.0, 1.0]
    for i in range(3):
        if abs(d[i]) > 1e-15:
            for edge in (hh[i], -hh[i]):
                ti = (edge - p0[i]) / d[i]
                if 0.0 < ti < 1.0:
                    ts.append(ti)
    ts.sort()
    best = math.inf
    for k in range(len(ts) - 1):
        t0, t1 = ts[k], ts[k + 1]
        if t1 - t0 < 1e-15:
            continue
        tm = 0.5 * (t0 + t1)
        # quadratic f(t) = qa*t^2 + 2*qb*t + qc over coords outside their slab
        qa = qb = qc = 0.0
        inside = True
        for i in range(3):
            pi = p0[i] + tm * d[i]
            if pi > hh[i]:
                g0, g1 = p0[i] - hh[i], d[i]
            elif pi < -hh[i]:
                g0, g1 = -p0[i] - hh[i], -d[i]
            else:
                continue
            inside = False
            qa += g1 * g1
            qb += g0 * g1
            qc += g0 * g0
        if inside:
            return 0.0
        if qa > 1e-15:
            tstar = -qb / qa
            tstar = t0 if tstar < t0 else (t1 if tstar > t1 else tstar)
        else:
            tstar = t0
        val = qa * tstar * tstar + 2.0 * qb * tstar + qc
        if val < best:
            best = val
    return math.sqrt(best) if best > 0.0 else 0.0


def capsule_obstacle_distance(cap: Capsule, obs: Obstacle) -> float:
    """Surface-to-surface distance; negative means interpenetration."""
    if isinstance(obs.shape, Box):
        core = segment_box_distance(cap.a, cap.b, obs.pose, obs.shape.half_extents)
        return core - cap.radius
    if isinstance(obs.shape, Sphere):
        center = obs.pose.translation
        return point_segment_distance(center, cap.a, cap.b) - cap.radius - obs.shape.radius
    if isinstance(obs.shape, Capsule):
        other = obs.shape.transformed(obs.pose)
        d = segment_segment_distance(cap.a, cap.b, other.a, other.b)
        return d - cap.radius - other.radius
    raise TypeError(f"unsupported obstacle shape {type(obs.shape).__name__}")


def capsule_pair_collides(a: Capsule, b: Capsule) -> bool:
    """True iff the two world-frame capsules strictly interpenetrate."""
    return segment_segment_distance(a.a, a.b, b.a, b.b) < a.radius + b.radius


def _any_capsule_pair_collides(caps) -> bool:
    """Vectorized interpenetration test over all non-adjacent capsule pairs.

    Same predicate as capsule_pair_collides per pair; squared distances are
    compared so no square roots are taken.
    """
    pairs = [(i, j) for i in range(len(caps)) for j in range(i + 1, len(caps))
             if abs(caps[i][0] - caps[j][0]) >= 2]
    if not pairs:
        return False
    p1 = np.array([caps[i][1].a for i, _ in pairs])
    q1 = np.array([caps[i][1].b for i, _ in pairs])
    p2 = np.array([caps[j][1].a for _, j in pairs])
    q2 = np.array([caps[j][1].b for _, j in pairs])
    rsum = np.array([caps[i][1].radius + caps[j][1].radius for i, j in pairs])
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)
    eps = 1e-12
    a_safe = np.where(a > eps, a, 1.0)
    e_safe = np.where(e > eps, e, 1.0)
    denom = a * e - b * b
    s = np.where(denom > eps,
                 np.clip((b * f - c * e) / np.where(denom > eps, denom, 1.0), 0.0, 1.0),
                 0.0)
    t = (b * s + f) / e_safe
    s = np.where(t < 0.0, np.clip(-c / a_safe, 0.0, 1.0),
                 np.where(t > 1.0, np.clip((b - c) / a_safe, 0.0, 1.0), s))
    t = np.clip(t, 0.0, 1.0)
    v = (p1 + s[:, None] * d1) - (p2 + t[:, None] * d2)
    return bool(np.any(np.einsum("ij,ij->i", v, v) < rsum * rsum))


def _platform_pose(chain: SerialChain, base: BasePose) -> Pose:
    m = base.matrix()
    return Pose(m[:3, 3] + m[:3, :3] @ chain.platform_center, m[:3, :3])


def _capsule_platform_collides(
    cap: Capsule, chain: SerialChain, base: BasePose, box_pose: Pose | None = None
) -> bool:
    if box_pose is None:
        box_pose = _platform_pose(chain, base)
    d = segment_box_distance(cap.a, cap.b, box_pose, chain.platform_half_extents)
    return d - cap.radius < 0.0


def self_collision_free(chain: SerialChain, base: BasePose, q) -> bool:
    """No capsule of module i touches any capsule of module j for |i - j| >= 2.

    Adjacent modules are excluded because neighbouring housings always touch
    at the connector.  The mobile platform box is checked against every
    module at least two places after the base.
    """
    q = chain.check_q(q)
    frames, _ = _walk(chain, base, q)
    caps = world_capsules(chain, frames)
    if _any_capsule_pair_collides(caps):
        return False
    platform = _platform_pose(chain, base)
    for mi, ci in caps:
        if mi >= 2 and _capsule_platform_collides(ci, chain, base, platform):
            return False
    return True


def environment_collision_free(
    chain: SerialChain,
    base: BasePose,
    q,
    obstacles: tuple[Obstacle, ...],
    exemptions: tuple[ExemptionCylinder, ...] = (),
) -> bool:
    """No link capsule interpenetrates any obstacle.

    Capsules whose centerline lies inside an exemption cylinder are skipped,
    which is how the drill bit is allowed to enter the wall.
    """
    if not obstacles:
        return True
    q = chain.check_q(q)
    frames, _ = _walk(chain, base, q)
    for _, cap in world_capsules(chain, frames):
        exempt = any(ex.covers(cap) for ex in exemptions)
        if exempt:
            continue
        for obs in obstacles:
            if capsule_obstacle_distance(cap, obs) < 0.0:
                return False
    return True


def config_collision_ok(
    chain: SerialChain,
    base: BasePose,
    q,
    check_self: bool,
    check_env: bool,
    obstacles: tuple[Obstacle, ...] = (),
    exemptions: tuple[ExemptionCylinder, ...] = (),
) -> bool:
    """Combined collision query sharing one forward pass over the chain.

    Equivalent to self_collision_free and environment_collision_free gated by
    the two flags; the planner calls this per trajectory sample.
    """
    if not check_self and not (check_env and obstacles):
        return True
    q = chain.check_q(q)
    frames, _ = _walk(chain, base, q)
    caps = world_capsules(chain, frames)
    if check_self:
        if _any_capsule_pair_collides(caps):
            return False
        platform = _platform_pose(chain, base)
        for mi, ci in caps:
            if mi >= 2 and _capsule_platform_collides(ci, chain, base, platform):
                return False
    if check_env and obstacles:
        for _, cap in caps:
            if any(ex.covers(cap) for ex in exemptions):
                continue
            for obs in obstacles:
                if capsule_obstacle_distance(cap, obs) < 0.0:
                    return False
    return True
