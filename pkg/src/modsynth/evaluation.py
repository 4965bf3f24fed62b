"""Constraint sequence and objectives for candidate compositions.

Constraints are evaluated cheapest first: reach and availability need no
chain, the three path constraints need planning, and the torque check needs
dynamics on the planned trajectory.  The first violated constraint
short-circuits the rest; skipped slots serialize as minus infinity so the
lexicographic comparison stays well defined.  Objectives are only computed
for fully satisfied candidates; otherwise the sentinel all-minus-infinity
vector is returned.

Evaluations are pure given (sequence, task, catalog, master seed): each
genome derives its own planning seed from a content hash, which makes
results independent of evaluation order and worker count.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass
from multiprocessing import Pool

import numpy as np

from .catalog import Catalog, ModuleSequence, common_prefix_length, count_occurrences
from .kinematics import (
    DEFAULT_MOUNT_LIFT,
    BasePose,
    SerialChain,
    build_chain,
    forward_kinematics,
    static_torques,
    wrap_angle,
)
from .planning import (
    DEFAULT_PLANNER_CONFIG,
    PlannerConfig,
    PlanOutcome,
    Trajectory,
    feasible,
    plan_cascade,
    robustness_delta,
)
from .world import Task

N_CONSTRAINTS = 7
CONSTRAINT_NAMES = (
    "c1_size",
    "c2_availability",
    "c3_base_still",
    "c4_joint_limits",
    "c5_self_collision",
    "c6_env_collision",
    "c7_torque",
)
OBJECTIVE_NAMES = ("f_compactness", "f_robustness", "f_reconfig_time")
ERROR_MODES = ("worst", "sum")

# Keeps infeasible-but-tiny goal errors strictly negative in c4..c6.
_VIOLATION_FLOOR = 1e-12


@dataclass(frozen=True)
class ConstraintVector:
    """Seven ordered constraint values, each <= 0, with 0 meaning satisfied.

    Slots skipped by short-circuiting hold -inf and are flagged unevaluated;
    -inf keeps them maximally bad under lexicographic ordering.
    """

    values: tuple[float, ...]
    evaluated: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "evaluated", tuple(bool(e) for e in self.evaluated))
        if len(self.values) != N_CONSTRAINTS or len(self.evaluated) != N_CONSTRAINTS:
            raise ValueError(f"expected {N_CONSTRAINTS} constraint slots")
        for v, e in zip(self.values, self.evaluated):
            if v > 0:
                raise ValueError("constraint values must be <= 0")
            if not e and v != -math.inf:
                raise ValueError("unevaluated slots must hold -inf")

    @property
    def satisfied(self) -> bool:
        return all(self.evaluated) and all(v == 0.0 for v in self.values)


@dataclass(frozen=True)
class ObjectiveVector:
    """(f_compactness, f_robustness, f_reconfig_time), or all -inf when any
    constraint is violated."""

    values: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) != 3:
            raise ValueError("expected 3 objective values")

    @classmethod
    def sentinel(cls) -> "ObjectiveVector":
        return cls((-math.inf, -math.inf, -math.inf))

    @property
    def is_sentinel(self) -> bool:
        return all(v == -math.inf for v in self.values)


@dataclass(frozen=True)
class EvaluationRecord:
    """One candidate's full evaluation, carrying the planning seed so the
    record can be replayed."""

    sequence: ModuleSequence
    constraints: ConstraintVector
    objectives: ObjectiveVector
    plan_seed: int
    wall_time_s: float
    outcome: PlanOutcome | None

    @property
    def feasible(self) -> bool:
        return self.constraints.satisfied


def mount_point(base: BasePose) -> np.ndarray:
    """World position of the arm mount for a planar base pose."""
    m = base.matrix()
    return m[:3, :3] @ np.array([0.0, 0.0, DEFAULT_MOUNT_LIFT]) + m[:3, 3]


def c1_size(seq: ModuleSequence, task: Task, cat: Catalog) -> float:
    """Reach reserve: total module size minus the farthest goal distance,
    clamped to zero from above."""
    total = seq.total_size(cat)
    p = mount_point(task.nominal_base)
    farthest = max(float(np.linalg.norm(g.pose.translation - p)) for g in task.goals)
    return min(0.0, total - farthest)


def c2_availability(seq: ModuleSequence, cat: Catalog) -> float:
    """Worst per-type availability margin, clamped to zero from above."""
    worst = 0.0
    for mid in set(seq.ids):
        worst = min(worst, count_occurrences(mid, cat) - count_occurrences(mid, seq))
    return float(min(0.0, worst))


def c3_base_still(traj: Trajectory) -> float:
    """Negated accumulated base drift after the calibration sample; the
    planar norm adds the translation distance and the wrapped heading change."""
    ref = traj.bases[traj.t_cal]
    drift = 0.0
    for t in range(traj.t_cal + 1, len(traj)):
        b = traj.bases[t]
        drift += math.hypot(b.x - ref.x, b.y - ref.y) + abs(wrap_angle(b.theta - ref.theta))
    return -drift


def _aggregate_distance(distances, error_mode: str) -> float:
    if error_mode == "worst":
        return max(distances)
    if error_mode == "sum":
        return float(sum(distances))
    raise ValueError(f"error_mode must be one of {ERROR_MODES}")


def c4_c5_c6_path(
    seq: ModuleSequence,
    task: Task,
    cat: Catalog,
    seed: int = 0,
    config: PlannerConfig | None = None,
    error_mode: str = "worst",
) -> tuple[tuple[float, float, float], tuple[bool, bool, bool], PlanOutcome | None]:
    """Plan under the nested constraint sets and score each level.

    Returns the three values (0 when the level's plan is feasible, else the
    negated aggregated goal-error distance), their evaluated flags, and the
    most-constrained feasible outcome for reuse by c7 and the robustness
    objective.  Evaluation stops at the first infeasible level.
    """
    chain = build_chain(seq, cat)
    results = plan_cascade(chain, task, seed, config, stop_on_infeasible=True)
    values = [-math.inf] * 3
    flags = [False] * 3
    cached: PlanOutcome | None = None
    for i, (_, outcome) in enumerate(results):
        flags[i] = True
        if feasible(outcome, task):
            values[i] = 0.0
            cached = outcome
        else:
            d = _aggregate_distance(outcome.per_goal_distance, error_mode)
            values[i] = -max(d, _VIOLATION_FLOOR)
    return (values[0], values[1], values[2]), (flags[0], flags[1], flags[2]), cached


def c7_torque(chain: SerialChain, outcome: PlanOutcome, task: Task) -> float:
    """Accumulated torque-limit violation along the trajectory.

    The task payload (a TCP-frame wrench the tool must exert) loads only the
    samples of its phase; all samples carry gravity.
    """
    traj = outcome.trajectory
    limits = chain.torque_limits()
    total = 0.0
    for t in range(len(traj)):
        q = traj.configurations[t]
        base_t = traj.bases[t]
        wrench = task.payload(traj.phases[t])
        f_ext = None
        if wrench is not None:
            tcp = forward_kinematics(chain, base_t, q)
            f_ext = np.concatenate([tcp.rotation @ wrench[:3], tcp.rotation @ wrench[3:]])
        tau = static_torques(chain, base_t, q, f_ext)
        total += float(np.sum(np.minimum(0.0, np.minimum(limits - tau, tau + limits))))
    return min(0.0, total)


def reconfiguration_cost(current: ModuleSequence, new: ModuleSequence, cat: Catalog) -> float:
    """Assembly seconds to turn one composition into another: every module
    outside the common prefix is removed or added at its per-module cost."""
    n_c = common_prefix_length(current, new)
    removed = sum(cat.spec(mid).assembly_cost_time for mid in current.ids[n_c:])
    added = sum(cat.spec(mid).assembly_cost_time for mid in new.ids[n_c:])
    return float(removed + added)


def objectives(
    seq: ModuleSequence,
    outcome: PlanOutcome,
    task: Task,
    current_assembly: ModuleSequence,
    cat: Catalog,
    config: PlannerConfig | None = None,
) -> ObjectiveVector:
    """Objective vector for a fully satisfied candidate; sentinel otherwise."""
    if outcome is None or not feasible(outcome, task):
        return ObjectiveVector.sentinel()
    f_c = -seq.total_size(cat)
    f_r = robustness_delta(outcome, task, config)
    f_t = -reconfiguration_cost(current_assembly, seq, cat)
    return ObjectiveVector((f_c, f_r, f_t))


def genome_seed(seq: ModuleSequence, master_seed: int) -> int:
    """Stable per-genome planning seed derived from content, not position."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master_seed)).encode())
    for mid in seq.ids:
        h.update(b"\x00")
        h.update(mid.encode())
    return int.from_bytes(h.digest(), "big")


def evaluate_candidate(
    seq: ModuleSequence,
    task: Task,
    cat: Catalog,
    current_assembly: ModuleSequence | None = None,
    master_seed: int = 0,
    config: PlannerConfig | None = None,
    error_mode: str = "worst",
) -> EvaluationRecord:
    """Full cheap-first evaluation of one structurally valid sequence."""
    start = time.perf_counter()
    current = current_assembly if current_assembly is not None else ModuleSequence.empty()
    cfg = config or DEFAULT_PLANNER_CONFIG
    seed = genome_seed(seq, master_seed)
    values = [-math.inf] * N_CONSTRAINTS
    flags = [False] * N_CONSTRAINTS
    cached: PlanOutcome | None = None

    def finish(objs: ObjectiveVector) -> EvaluationRecord:
        cv = ConstraintVector(tuple(values), tuple(flags))
        return EvaluationRecord(seq, cv, objs, seed, time.perf_counter() - start, cached)

    values[0] = c1_size(seq, task, cat)
    flags[0] = True
    if values[0] < 0:
        return finish(ObjectiveVector.sentinel())
    values[1] = c2_availability(seq, cat)
    flags[1] = True
    if values[1] < 0:
        return finish(ObjectiveVector.sentinel())
    (v4, v5, v6), (e4, e5, e6), cached = c4_c5_c6_path(seq, task, cat, seed, cfg, error_mode)
    # c3 audits base drift on the planned trajectory; the drilling planner
    # holds the base by construction, and with no trajectory the sum is empty.
    values[2] = c3_base_still(cached.trajectory) if cached is not None else 0.0
    flags[2] = True
    values[3], values[4], values[5] = v4, v5, v6
    flags[3], flags[4], flags[5] = e4, e5, e6
    if values[2] < 0 or any(f and v < 0 for v, f in ((v4, e4), (v5, e5), (v6, e6))):
        return finish(ObjectiveVector.sentinel())
    values[6] = c7_torque(cached.chain, cached, task)
    flags[6] = True
    if values[6] < 0:
        return finish(ObjectiveVector.sentinel())
    return finish(objectives(seq, cached, task, current, cat, cfg))


def _evaluate_job(args) -> EvaluationRecord:
    seq_ids, task, cat, current_ids, master_seed, config, error_mode = args
    return evaluate_candidate(
        ModuleSequence(seq_ids), task, cat, ModuleSequence(current_ids),
        master_seed, config, error_mode,
    )


class EvaluationCache:
    """Per-run memo of genome evaluations; keyed by the id tuple since task,
    catalog, seed, and current assembly are fixed for a run."""

    def __init__(self):
        self._records: dict[tuple[str, ...], EvaluationRecord] = {}

    def get(self, seq: ModuleSequence) -> EvaluationRecord | None:
        return self._records.get(seq.ids)

    def put(self, record: EvaluationRecord) -> None:
        self._records[record.sequence.ids] = record

    def __len__(self) -> int:
        return len(self._records)


def evaluate_population(
    seqs,
    task: Task,
    cat: Catalog,
    current_assembly: ModuleSequence | None = None,
    master_seed: int = 0,
    config: PlannerConfig | None = None,
    error_mode: str = "worst",
    workers: int = 1,
    pool: Pool | None = None,
    cache: EvaluationCache | None = None,
) -> list:
    """Evaluate many sequences, reusing cached records and an optional worker
    pool.  Results are ordered like the input and identical for any worker
    count because every genome carries its own derived seed.
    """
    current = current_assembly if current_assembly is not None else ModuleSequence.empty()
    out: list[EvaluationRecord | None] = [None] * len(seqs)
    misses: list[int] = []
    seen: dict[tuple[str, ...], int] = {}
    for i, seq in enumerate(seqs):
        hit = cache.get(seq) if cache is not None else None
        if hit is not None:
            out[i] = hit
        elif seq.ids in seen:
            out[i] = seen[seq.ids]  # placeholder: same-genome index
        else:
            seen[seq.ids] = i
            misses.append(i)
    jobs = [
        (seqs[i].ids, task, cat, current.ids, master_seed, config, error_mode)
        for i in misses
    ]
    if pool is not None and len(jobs) > 1:
        records = pool.map(_evaluate_job, jobs)
    elif workers > 1 and len(jobs) > 1:
        with Pool(processes=workers) as tmp:
            records = tmp.map(_evaluate_job, jobs)
    else:
        records = [_evaluate_job(j) for j in jobs]
    for i, rec in zip(misses, records):
        out[i] = rec
        if cache is not None:
            cache.put(rec)
    for i, val in enumerate(out):
        if isinstance(val, int):
            out[i] = out[val]
    return out
