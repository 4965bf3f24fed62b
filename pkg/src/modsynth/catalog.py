"""Robot module definitions, on-site availability, and composition metrics.

A candidate robot is an ordered sequence of module IDs drawn from a catalog.
An assemblable sequence starts with a mounting base, ends with an end
effector, and carries only joints and passive links in between.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .geometry import Capsule, Pose

KIND_BASE = "base"
KIND_STRAIGHT = "straight_joint"
KIND_ELBOW = "elbow_joint"
KIND_LINK = "link"
KIND_EEF = "end_effector"

MODULE_KINDS = frozenset({KIND_BASE, KIND_STRAIGHT, KIND_ELBOW, KIND_LINK, KIND_EEF})
JOINT_KINDS = frozenset({KIND_STRAIGHT, KIND_ELBOW})
# Kinds a genetic operator may place in the interior of a sequence.
INTERIOR_KINDS = frozenset({KIND_STRAIGHT, KIND_ELBOW, KIND_LINK})

DEFAULT_ASSEMBLY_TIME_S = 60.0


@dataclass(frozen=True)
class ModuleSpec:
    """One hardware module: geometry, inertia, and (for joints) actuation limits."""

    id: str
    kind: str
    proximal_to_distal: Pose
    mass: float
    com: np.ndarray
    collision_capsules: tuple[Capsule, ...] = ()
    joint_axis: np.ndarray | None = None
    joint_limits: tuple[float, float] | None = None
    torque_limit: float | None = None
    assembly_cost_time: float = DEFAULT_ASSEMBLY_TIME_S

    def __post_init__(self):
        if self.kind not in MODULE_KINDS:
            raise ValueError(f"unknown module kind {self.kind!r}")
        if self.mass < 0:
            raise ValueError(f"module {self.id}: mass must be >= 0")
        object.__setattr__(self, "com", np.asarray(self.com, dtype=float).reshape(3))
        self.com.flags.writeable = False
        if self.kind in JOINT_KINDS:
            if self.joint_axis is None or self.joint_limits is None or self.torque_limit is None:
                raise ValueError(f"joint module {self.id} needs axis, limits, and torque limit")
            axis = np.asarray(self.joint_axis, dtype=float).reshape(3)
            n = np.linalg.norm(axis)
            if n == 0:
                raise ValueError(f"module {self.id}: joint axis must be nonzero")
            axis = axis / n
            axis.flags.writeable = False
            object.__setattr__(self, "joint_axis", axis)
            lo, hi = self.joint_limits
            if not lo < hi:
                raise ValueError(f"module {self.id}: joint limits must satisfy min < max")
            object.__setattr__(self, "joint_limits", (float(lo), float(hi)))
            if self.torque_limit < 0:
                raise ValueError(f"module {self.id}: torque limit must be >= 0")
        else:
            if self.joint_axis is not None or self.joint_limits is not None or self.torque_limit is not None:
                raise ValueError(f"non-joint module {self.id} must not carry joint fields")
        object.__setattr__(self, "collision_capsules", tuple(self.collision_capsules))

    @property
    def is_joint(self) -> bool:
        return self.kind in JOINT_KINDS

    @property
    def size(self) -> float:
        return float(np.linalg.norm(self.proximal_to_distal.translation))


@dataclass(frozen=True)
class Catalog:
    """Immutable set of module specs plus the number of units available on-site."""

    modules: Mapping[str, ModuleSpec]
    availability: Mapping[str, int]

    def __post_init__(self):
        object.__setattr__(self, "modules", dict(self.modules))
        object.__setattr__(self, "availability", dict(self.availability))
        for mid, count in self.availability.items():
            if mid not in self.modules:
                raise ValueError(f"availability entry {mid!r} has no module spec")
            if count < 0:
                raise ValueError(f"availability of {mid!r} must be >= 0")
        for mid in self.modules:
            self.availability.setdefault(mid, 0)

    def spec(self, module_id: str) -> ModuleSpec:
        return self.modules[module_id]

    def interior_ids(self) -> tuple[str, ...]:
        """IDs usable between base and end effector, in stable catalog order."""
        return tuple(m for m, s in self.modules.items() if s.kind in INTERIOR_KINDS)

    def ids_of_kind(self, kind: str) -> tuple[str, ...]:
        return tuple(m for m, s in self.modules.items() if s.kind == kind)


@dataclass(frozen=True)
class ModuleSequence:
    """Ordered module IDs defining a candidate robot morphology."""

    ids: tuple[str, ...]

    def __init__(self, ids: Iterable[str]):
        object.__setattr__(self, "ids", tuple(ids))

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)

    def __getitem__(self, i):
        return self.ids[i]

    @staticmethod
    def empty() -> "ModuleSequence":
        return ModuleSequence(())

    def total_size(self, cat: Catalog) -> float:
        return sum(cat.spec(mid).size for mid in self.ids)


def module_size(spec: ModuleSpec) -> float:
    """Euclidean distance between the proximal and distal connection interfaces."""
    return spec.size


def count_occurrences(module_id: str, seq_or_cat: ModuleSequence | Catalog) -> int:
    """Multiplicity of a module in a sequence, or its availability in a catalog."""
    if isinstance(seq_or_cat, Catalog):
        return int(seq_or_cat.availability.get(module_id, 0))
    return sum(1 for mid in seq_or_cat.ids if mid == module_id)


def sequence_structure_valid(seq: ModuleSequence, cat: Catalog) -> tuple[bool, str]:
    """Structural validity only: base first, end effector last, nothing else at the ends.

    Availability is deliberately not checked here; genetic operators may
    produce over-subscribed sequences, which the availability constraint
    penalizes instead of forbidding.
    """
    if len(seq) == 0:
        return False, "empty sequence"
    for mid in seq.ids:
        if mid not in cat.modules:
            return False, f"unknown module {mid!r}"
    if cat.spec(seq.ids[0]).kind != KIND_BASE:
        return False, "missing base"
    if cat.spec(seq.ids[-1]).kind != KIND_EEF:
        return False, "missing end effector"
    for mid in seq.ids[1:-1]:
        kind = cat.spec(mid).kind
        if kind in (KIND_BASE, KIND_EEF):
            return False, f"interior module {mid!r} has kind {kind}"
    return True, ""


def assembly_valid(seq: ModuleSequence, cat: Catalog) -> tuple[bool, str]:
    """Structural validity plus catalog availability; reason reports the first violation."""
    ok, reason = sequence_structure_valid(seq, cat)
    if not ok:
        return ok, reason
    for mid in dict.fromkeys(seq.ids):
        used = count_occurrences(mid, seq)
        have = count_occurrences(mid, cat)
        if used > have:
            return False, f"availability exceeded: {used}x {mid!r}, {have} available"
    return True, ""


def common_prefix_length(a: ModuleSequence, b: ModuleSequence) -> int:
    """Number of modules shared at the start of both kinematic chains."""
    n = 0
    for x, y in zip(a.ids, b.ids):
        if x != y:
            break
        n += 1
    return n


def default_catalog() -> Catalog:
    """The bundled catalog: 1 base, 3 straight and 3 elbow joints, links of
    100/200/500 mm, and a drill end effector."""
    from .fileio import load_catalog_resource

    return load_catalog_resource("default_catalog.yaml")
