"""Serial-chain model built from a module sequence: forward kinematics, link
frames, geometric Jacobian, and quasi-static joint torques.

The dynamics model is deliberately quasi-static: gravity plus an external
TCP wrench, no velocity or acceleration terms.  The synthesis trajectories
are slow enough that inertial torques are negligible compared to the limits
being checked.

Frame conventions: a joint module rotates about its axis at the proximal
connector, then applies its fixed proximal-to-distal transform.  At q = 0 the
chain transform is therefore exactly the product of all module transforms.
Capsules and centers of mass ride on the rotated (distal-side) frame of their
module.  The mobile platform is a box attached below the arm mount, used by
the self-collision check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .catalog import Catalog, ModuleSequence, sequence_structure_valid
from .geometry import Capsule, Pose

GRAVITY = 9.81  # m/s^2, along world -z

# Arm mount sits this far above the mobile-base ground plane.
DEFAULT_MOUNT_LIFT = 0.7

# Mobile platform collision box (half extents, center in base frame).
PLATFORM_HALF_EXTENTS = np.array([0.40, 0.30, 0.35])
PLATFORM_CENTER = np.array([0.0, 0.0, 0.35])


class InvalidAssembly(ValueError):
    """Module sequence cannot be assembled into a serial chain."""


class DimensionMismatch(ValueError):
    """Joint vector length does not match the chain's degrees of freedom."""


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    t = theta % (2.0 * math.pi)
    if t > math.pi:
        t -= 2.0 * math.pi
    return t


@dataclass(frozen=True)
class BasePose:
    """Planar pose (x, y, heading) of the mobile base on the ground plane."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        m = np.eye(4)
        m[0, 0], m[0, 1] = c, -s
        m[1, 0], m[1, 1] = s, c
        m[0, 3], m[1, 3] = self.x, self.y
        return m

    def shifted(self, dx: float, dy: float, dtheta: float) -> "BasePose":
        return BasePose(self.x + dx, self.y + dy, self.theta + dtheta)


@dataclass(frozen=True)
class ChainBody:
    """Rigid body attached to one chain frame: mass, COM, and collision capsules."""

    module_id: str
    frame_index: int
    mass: float
    com: np.ndarray
    capsules: tuple[Capsule, ...]


@dataclass(frozen=True)
class ChainJoint:
    axis: np.ndarray
    lower: float
    upper: float
    torque_limit: float
    module_index: int


@dataclass(frozen=True)
class SerialChain:
    """Immutable kinematic/dynamic model of one module composition."""

    source_ids: tuple[str, ...]
    # Per module: fixed 4x4 proximal-to-distal transform.
    module_transforms: tuple[np.ndarray, ...]
    # Joint index per module, -1 for fixed modules.
    module_joint: tuple[int, ...]
    joints: tuple[ChainJoint, ...]
    bodies: tuple[ChainBody, ...]
    mount: np.ndarray = field(default_factory=lambda: _lift_matrix(DEFAULT_MOUNT_LIFT))
    platform_half_extents: np.ndarray = field(default_factory=lambda: PLATFORM_HALF_EXTENTS.copy())
    platform_center: np.ndarray = field(default_factory=lambda: PLATFORM_CENTER.copy())

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def n_modules(self) -> int:
        return len(self.source_ids)

    def joint_limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([j.lower for j in self.joints])
        hi = np.array([j.upper for j in self.joints])
        return lo, hi

    def torque_limits(self) -> np.ndarray:
        return np.array([j.torque_limit for j in self.joints])

    def check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float).reshape(-1)
        if q.shape[0] != self.dof:
            raise DimensionMismatch(f"expected {self.dof} joint values, got {q.shape[0]}")
        return q

    def within_limits(self, q, margin: float = 0.0) -> bool:
        q = self.check_q(q)
        lo, hi = self.joint_limits()
        return bool(np.all(q >= lo - margin) and np.all(q <= hi + margin))

    def clamp_to_limits(self, q) -> np.ndarray:
        q = self.check_q(q)
        lo, hi = self.joint_limits()
        return np.clip(q, lo, hi)


def _lift_matrix(lift: float) -> np.ndarray:
    m = np.eye(4)
    m[2, 3] = lift
    return m


_EYE4 = np.eye(4)


def _axis_rotation_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    x, y, z = axis
    m = _EYE4.copy()
    if x == 0.0 and y == 0.0 and z == 1.0:
        m[0, 0] = c
        m[0, 1] = -s
        m[1, 0] = s
        m[1, 1] = c
        return m
    if x == 0.0 and y == 1.0 and z == 0.0:
        m[0, 0] = c
        m[0, 2] = s
        m[2, 0] = -s
        m[2, 2] = c
        return m
    if x == 1.0 and y == 0.0 and z == 0.0:
        m[1, 1] = c
        m[1, 2] = -s
        m[2, 1] = s
        m[2, 2] = c
        return m
    one_c = 1.0 - c
    m[0, 0] = c + x * x * one_c
    m[0, 1] = x * y * one_c - z * s
    m[0, 2] = x * z * one_c + y * s
    m[1, 0] = y * x * one_c + z * s
    m[1, 1] = c + y * y * one_c
    m[1, 2] = y * z * one_c - x * s
    m[2, 0] = z * x * one_c - y * s
    m[2, 1] = z * y * one_c + x * s
    m[2, 2] = c + z * z * one_c
    return m


def build_chain(seq: ModuleSequence, cat: Catalog, mount_lift: float = DEFAULT_MOUNT_LIFT) -> SerialChain:
    """Instantiate the chain model for a structurally valid module sequence."""
    ok, reason = sequence_structure_valid(seq, cat)
    if not ok:
        raise InvalidAssembly(reason)
    transforms: list[np.ndarray] = []
    module_joint: list[int] = []
    joints: list[ChainJoint] = []
    bodies: list[ChainBody] = []
    for idx, mid in enumerate(seq.ids):
        spec = cat.spec(mid)
        transforms.append(spec.proximal_to_distal.matrix())
        if spec.is_joint:
            module_joint.append(len(joints))
            joints.append(
                ChainJoint(
                    axis=spec.joint_axis,
                    lower=spec.joint_limits[0],
                    upper=spec.joint_limits[1],
                    torque_limit=spec.torque_limit,
                    module_index=idx,
                )
            )
        else:
            module_joint.append(-1)
        bodies.append(
            ChainBody(
                module_id=mid,
                frame_index=idx,
                mass=spec.mass,
                com=spec.com,
                capsules=spec.collision_capsules,
            )
        )
    return SerialChain(
        source_ids=seq.ids,
        module_transforms=tuple(transforms),
        module_joint=tuple(module_joint),
        joints=tuple(joints),
        bodies=tuple(bodies),
        mount=_lift_matrix(mount_lift),
    )


@lru_cache(maxsize=256)
def _base_matrix(base: BasePose) -> np.ndarray:
    """Cached 4x4 of a base pose; treat the result as read-only."""
    return base.matrix()


def _walk(chain: SerialChain, base: BasePose, q: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """World frame of every module (post joint rotation) plus the TCP frame."""
    cur = _base_matrix(base) @ chain.mount
    frames: list[np.ndarray] = []
    for idx in range(chain.n_modules):
        j = chain.module_joint[idx]
        if j >= 0:
            cur = cur @ _axis_rotation_matrix(chain.joints[j].axis, q[j])
        frames.append(cur)
        cur = cur @ chain.module_transforms[idx]
    return frames, cur


def forward_kinematics(chain: SerialChain, base: BasePose, q) -> Pose:
    """World pose of the tool center point."""
    q = chain.check_q(q)
    _, tcp = _walk(chain, base, q)
    return Pose.from_matrix(tcp)


def link_frames(chain: SerialChain, base: BasePose, q) -> list[Pose]:
    """World pose of every capsule-bearing module frame, in chain order."""
    q = chain.check_q(q)
    frames, _ = _walk(chain, base, q)
    return [Pose.from_matrix(f) for f in frames]


def _joint_world_data(
    chain: SerialChain, frames: list[np.ndarray]
) -> tuple[np.ndarray, np.ndarray]:
    """World origin and world axis of every joint."""
    origins = np.empty((chain.dof, 3))
    axes = np.empty((chain.dof, 3))
    for k, joint in enumerate(chain.joints):
        f = frames[joint.module_index]
        origins[k] = f[:3, 3]
        axes[k] = f[:3, :3] @ joint.axis
    return origins, axes


def jacobian(chain: SerialChain, base: BasePose, q) -> np.ndarray:
    """Geometric TCP Jacobian in the world frame, shape (6, dof)."""
    q = chain.check_q(q)
    frames, tcp = _walk(chain, base, q)
    origins, axes = _joint_world_data(chain, frames)
    jac = np.empty((6, chain.dof))
    jac[:3] = np.cross(axes, tcp[:3, 3][None, :] - origins).T
    jac[3:] = axes.T
    return jac


def static_torques(
    chain: SerialChain,
    base: BasePose,
    q,
    f_ext: np.ndarray | None = None,
    gravity: bool = True,
) -> np.ndarray:
    """Quasi-static joint torques: gravity load plus J^T times a TCP wrench.

    ``f_ext`` is a 6-vector (force then torque) expressed in the world frame
    and acting at the TCP.  The gravity term equals the gradient of the total
    potential energy with respect to q.
    """
    q = chain.check_q(q)
    frames, tcp = _walk(chain, base, q)
    origins, axes = _joint_world_data(chain, frames)
    tau = np.zeros(chain.dof)
    if gravity:
        jmod = np.fromiter((j.module_index for j in chain.joints), dtype=int,
                           count=chain.dof)
        for body in chain.bodies:
            if body.mass == 0.0:
                continue
            f = frames[body.frame_index]
            com_world = f[:3, :3] @ body.com + f[:3, 3]
            # d(height)/dq_k of this COM; only joints at or before the body's
            # module carry it.
            mask = jmod <= body.frame_index
            if mask.any():
                vel = np.cross(axes[mask], com_world[None, :] - origins[mask])
                tau[mask] += body.mass * GRAVITY * vel[:, 2]
    if f_ext is not None:
        w = np.asarray(f_ext, dtype=float).reshape(6)
        lin = np.cross(axes, tcp[:3, 3][None, :] - origins)
        tau += lin @ w[:3] + axes @ w[3:]
    return tau


def potential_energy(chain: SerialChain, base: BasePose, q) -> float:
    """Total gravitational potential energy at configuration q (for testing)."""
    q = chain.check_q(q)
    frames, _ = _walk(chain, base, q)
    u = 0.0
    for body in chain.bodies:
        f = frames[body.frame_index]
        com_world = f[:3, :3] @ body.com + f[:3, 3]
        u += body.mass * GRAVITY * com_world[2]
    return u


def world_capsules(
    chain: SerialChain, frames: list[np.ndarray]
) -> list[tuple[int, Capsule]]:
    """All collision capsules in world coordinates, tagged with their module index."""
    out: list[tuple[int, Capsule]] = []
    for body in chain.bodies:
        if not body.capsules:
            continue
        f = frames[body.frame_index]
        r, t = f[:3, :3], f[:3, 3]
        for cap in body.capsules:
            out.append((body.frame_index, Capsule(r @ cap.a + t, r @ cap.b + t, cap.radius)))
    return out


def chain_summary(chain: SerialChain) -> str:
    """Plain-text dump of the kinematic model, for debugging and audit."""
    lines = [f"modules: {' '.join(chain.source_ids)}", f"dof: {chain.dof}"]
    zero = np.zeros(chain.dof)
    frames, tcp = _walk(chain, BasePose(), zero)
    for idx, mid in enumerate(chain.source_ids):
        j = chain.module_joint[idx]
        origin = frames[idx][:3, 3]
        tag = ""
        if j >= 0:
            joint = chain.joints[j]
            tag = (
                f" joint{j} axis=({joint.axis[0]:g},{joint.axis[1]:g},{joint.axis[2]:g})"
                f" limits=[{joint.lower:g},{joint.upper:g}] tau_max={joint.torque_limit:g}"
            )
        lines.append(f"  [{idx}] {mid} origin=({origin[0]:.4f},{origin[1]:.4f},{origin[2]:.4f}){tag}")
    lines.append(
        f"tcp at q=0, base origin: ({tcp[0, 3]:.4f},{tcp[1, 3]:.4f},{tcp[2, 3]:.4f})"
    )
    return "\n".join(lines)
