"""Joint-space planning for drilling tasks.

The planner turns a chain plus a task into a collision-checked joint
trajectory: unfold to a calibration pose, then per goal an approach, drill,
and retract segment, connected by transit moves.  Planning can be restricted
to a subset of the path constraints {c_lim, c_sc, c_col}; per-goal inverse
kinematics candidates are generated once and shared across subsets so that
relaxing constraints never reports a worse goal error.

Replanning repairs a finished plan after the base ends up displaced: samples
after the calibration index are re-solved pointwise to track the original
tool path in world coordinates while the base stays put.  The robustness
score is the largest fraction of the task's displacement envelope that every
sign combination of the displacement survives.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    ANGLE_FLOOR,
    DistanceWeights,
    Pose,
    PoseError,
    pose_error,
    rotation_angle,
    rotation_axis,
    scalar_distance,
    tolerance_met,
)
from .kinematics import (
    BasePose,
    DimensionMismatch,
    SerialChain,
    _joint_world_data,
    _walk,
    forward_kinematics,
    jacobian,
)
from .world import (
    PHASE_APPROACH,
    PHASE_DRILL,
    PHASE_RETRACT,
    PHASE_TRANSIT,
    PHASES,
    Goal,
    Task,
    config_collision_ok,
)

C_LIM = "c_lim"
C_SC = "c_sc"
C_COL = "c_col"
SET_LIMITS = (C_LIM,)
SET_SELF = (C_LIM, C_SC)
SET_FULL = (C_LIM, C_SC, C_COL)
CONSTRAINT_CASCADE = (SET_LIMITS, SET_SELF, SET_FULL)

_DEDUPE_TOL = 1e-3


@dataclass(frozen=True)
class PlannerConfig:
    ik_max_iters: int = 300
    ik_restarts: int = 10
    ik_damping: float = 1e-3
    ik_step_cap: float = 0.3
    interp_step: float = 0.05
    pool_size: int = 5
    replan_max_iters: int = 200
    replan_transit_iters: int = 4

    def __post_init__(self):
        if self.ik_max_iters < 1 or self.ik_restarts < 0 or self.pool_size < 1:
            raise ValueError("iteration and pool parameters must be positive")
        if self.ik_damping <= 0 or self.ik_step_cap <= 0 or self.interp_step <= 0:
            raise ValueError("damping, step cap, and interpolation step must be > 0")


DEFAULT_PLANNER_CONFIG = PlannerConfig()


def constraint_flags(constraint_set) -> tuple[bool, bool]:
    """Map a constraint-set iterable to (check_self, check_env) flags."""
    names = frozenset(constraint_set)
    unknown = names - {C_LIM, C_SC, C_COL}
    if unknown:
        raise ValueError(f"unknown constraint names {sorted(unknown)}")
    return C_SC in names, C_COL in names


def canonical_set(constraint_set) -> tuple[str, ...]:
    names = frozenset(constraint_set)
    return tuple(n for n in SET_FULL if n in names)


@dataclass(frozen=True)
class Trajectory:
    """Sampled joint-space plan with per-sample base pose and phase tag.

    ``goal_ids`` links approach/drill/retract samples to the goal they serve
    (None during transit); ``goal_sample`` maps each goal id to the index of
    its drill-bottom sample.
    """

    configurations: np.ndarray
    bases: tuple[BasePose, ...]
    phases: tuple[str, ...]
    goal_ids: tuple[str | None, ...]
    t_cal: int
    goal_sample: dict = field(default_factory=dict)

    def __post_init__(self):
        qs = np.asarray(self.configurations, dtype=float)
        if qs.ndim != 2:
            raise ValueError("configurations must be a 2-d array")
        qs.flags.writeable = False
        object.__setattr__(self, "configurations", qs)
        object.__setattr__(self, "bases", tuple(self.bases))
        object.__setattr__(self, "phases", tuple(self.phases))
        object.__setattr__(self, "goal_ids", tuple(self.goal_ids))
        n = qs.shape[0]
        if not (len(self.bases) == len(self.phases) == len(self.goal_ids) == n):
            raise ValueError("per-sample fields must all have one entry per sample")
        if not 0 <= self.t_cal < n:
            raise ValueError("calibration index out of range")
        for p in self.phases:
            if p not in PHASES:
                raise ValueError(f"unknown phase tag {p!r}")
        cal_base = self.bases[self.t_cal]
        for t in range(self.t_cal + 1, n):
            if self.bases[t] != cal_base:
                raise ValueError("base must stay fixed after the calibration sample")

    def __len__(self) -> int:
        return self.configurations.shape[0]

    @property
    def dof(self) -> int:
        return self.configurations.shape[1]

    def q_at(self, t: int) -> np.ndarray:
        return self.configurations[t]

    def base_at(self, t: int) -> BasePose:
        return self.bases[t]


@dataclass(frozen=True)
class PlanOutcome:
    """Result of one plan call: the trajectory when every goal was reachable
    under the constraint set, and per-goal best pose errors either way."""

    trajectory: Trajectory | None
    per_goal_best_error: tuple[PoseError, ...]
    per_goal_distance: tuple[float, ...]
    constraint_set_used: tuple[str, ...]
    chain: SerialChain
    base: BasePose
    seed: int


@dataclass
class IKResult:
    q: np.ndarray
    error: PoseError
    distance: float
    tolerance_met: bool


def _midrange_config(chain: SerialChain) -> np.ndarray:
    lower, upper = chain.joint_limits()
    mid = 0.5 * (lower + upper)
    mid = np.where(np.isfinite(mid), mid, 0.0)
    return chain.clamp_to_limits(mid)


def _restart_bounds(chain: SerialChain) -> tuple[np.ndarray, np.ndarray]:
    """Sampling range for restart seeds: 90 percent of the joint range, so
    draws never start pinned against a stop."""
    lower, upper = chain.joint_limits()
    lo = np.where(np.isfinite(lower), lower, -math.pi)
    hi = np.where(np.isfinite(upper), upper, math.pi)
    mid = 0.5 * (lo + hi)
    half = 0.45 * (hi - lo)
    return mid - half, mid + half


def _dls(chain, base, target: Pose, tolerance, q0, max_iters, cfg: PlannerConfig,
         position_only: bool = False) -> IKResult:
    """Damped least-squares descent on the pose error from one seed.

    When a tolerance is given, the rotation-error component about the
    target's drill axis is projected out so that goals with axial freedom do
    not demand a sixth degree of freedom.  ``position_only`` ignores
    orientation entirely; it exists to pre-position a seed before a full
    solve, never to satisfy a tolerance.
    """
    q = chain.clamp_to_limits(np.asarray(q0, dtype=float))
    r_t = target.rotation
    r_tt = r_t.T
    p_t = target.translation
    u = r_t[:, 2]
    w_d = DistanceWeights()

    def eval_state(tcp_m: np.ndarray):
        """Twist toward target, its norm, scalar distance, tolerance flag,
        and the desired-frame error pieces, all from one relative rotation."""
        p_c = tcp_m[:3, 3]
        dp = p_t - p_c
        r_rel = r_tt @ tcp_m[:3, :3]
        phi = rotation_angle(r_rel)
        e = np.empty(6)
        e[:3] = dp
        axis = None
        if phi > ANGLE_FLOOR:
            axis = rotation_axis(r_rel)
        if position_only or axis is None:
            e[3:] = 0.0
        else:
            # world-frame rotation vector of target relative to current
            w = -(r_t @ (axis * phi))
            if tolerance is not None:
                # goals with axial freedom: drop the spin about the drill axis
                w = w - (w @ u) * u
            e[3:] = w
        d = w_d.w_t * math.sqrt(float(dp @ dp)) + w_d.w_R * phi
        te_d = -(r_tt @ dp)
        if tolerance is None:
            met = d < 1e-9
        elif not np.all(np.abs(te_d) <= tolerance.box_bounds):
            met = False
        elif phi <= tolerance.max_angle:
            met = True
        elif axis is None:
            met = False
        else:
            met = bool(np.all(np.abs(axis - tolerance.axis) <= tolerance.axis_epsilon)
                       or np.all(np.abs(axis + tolerance.axis) <= tolerance.axis_epsilon))
        return e, float(np.linalg.norm(e)), d, met, te_d, r_rel

    q_mid = _midrange_config(chain)
    lower, upper = chain.joint_limits()
    frames, tcp_m = _walk(chain, base, q)
    e, e_norm, d, met, te_d, r_rel = eval_state(tcp_m)
    best = (q.copy(), d, te_d, r_rel)
    for _ in range(max_iters + 1):
        if d < best[1]:
            best = (q.copy(), d, te_d, r_rel)
        if met:
            return IKResult(q.copy(), PoseError(te_d, r_rel), d, True)
        if chain.dof == 0:
            break
        origins, axes = _joint_world_data(chain, frames)
        j = np.empty((6, chain.dof))
        j[:3] = np.cross(axes, tcp_m[:3, 3][None, :] - origins).T
        j[3:] = axes.T
        # active-set passes: a joint pinned at a stop and pushed outward
        # contributes nothing, and keeping its column makes the remaining
        # joints steer wrong; drop such columns and re-solve
        free = np.ones(chain.dof, dtype=bool)
        for _pass in range(3):
            jf = j * free
            a = jf @ jf.T
            a[np.diag_indices_from(a)] += cfg.ik_damping**2
            dq = jf.T @ np.linalg.solve(a, e)
            pinned = ((q >= upper - 1e-9) & (dq > 0)) | ((q <= lower + 1e-9) & (dq < 0))
            pinned &= free
            if not pinned.any():
                break
            free &= ~pinned
        # bias the redundant motion toward mid-limits so solutions do not
        # end up pinned against a joint stop; projected (approximately)
        # into the task nullspace, fading as the error vanishes
        bias = 0.2 * min(1.0, e_norm) * (q_mid - q) * free
        dq += bias - jf.T @ np.linalg.solve(a, jf @ bias)
        # backtrack until the step actually shrinks the twist
        scale = 1.0
        improved = False
        for _ in range(6):
            q_c = chain.clamp_to_limits(q + np.clip(dq * scale, -cfg.ik_step_cap,
                                                    cfg.ik_step_cap))
            frames_c, tcp_c = _walk(chain, base, q_c)
            e_c, n_c, d_c, met_c, te_c, rr_c = eval_state(tcp_c)
            if n_c < e_norm - 1e-14:
                improved = True
                break
            scale *= 0.5
        if not improved:
            break
        q, frames, tcp_m = q_c, frames_c, tcp_c
        e, e_norm, d, met, te_d, r_rel = e_c, n_c, d_c, met_c, te_c, rr_c
    return IKResult(best[0], PoseError(best[2], best[3]), best[1], False)


def solve_ik(
    chain: SerialChain,
    base: BasePose,
    goal,
    seed=None,
    budget: int | None = None,
    restarts: int | None = None,
    rng: np.random.Generator | None = None,
    config: PlannerConfig | None = None,
) -> IKResult:
    """Best-effort inverse kinematics for a Goal or a bare target Pose.

    Runs damped least squares from the seed (midrange when omitted) plus up
    to ``restarts`` random restarts within joint limits; returns the best
    configuration found, never raising on failure.
    """
    cfg = config or DEFAULT_PLANNER_CONFIG
    if isinstance(goal, Goal):
        target, tolerance = goal.pose, goal.tolerance
    else:
        target, tolerance = goal, None
    iters = cfg.ik_max_iters if budget is None else int(budget)
    n_restarts = cfg.ik_restarts if restarts is None else int(restarts)
    rng = rng if rng is not None else np.random.default_rng(0)
    lo, hi = _restart_bounds(chain)
    best: IKResult | None = None
    for attempt in range(1 + n_restarts):
        if attempt == 0:
            q0 = _midrange_config(chain) if seed is None else np.asarray(seed, dtype=float)
        elif chain.dof == 0:
            q0 = np.zeros(0)
        elif attempt % 2 and best is not None:
            # refine around the best configuration found so far
            q0 = best.q + rng.normal(0.0, 0.5, chain.dof)
        else:
            q0 = rng.uniform(lo, hi)
        res = _dls(chain, base, target, tolerance, q0, iters, cfg)
        if best is None or (res.tolerance_met, -res.distance) > (best.tolerance_met, -best.distance):
            best = res
        if best.tolerance_met:
            break
    return best


def interpolate_configs(q_from, q_to, step: float) -> np.ndarray:
    """Linear joint-space samples from q_from (excluded) to q_to (included),
    no joint moving more than ``step`` between consecutive samples."""
    a = np.asarray(q_from, dtype=float)
    b = np.asarray(q_to, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"config shapes differ: {a.shape} vs {b.shape}")
    span = float(np.max(np.abs(b - a))) if a.size else 0.0
    if span < 1e-12:
        return np.empty((0, a.shape[0]))
    n = int(math.ceil(span / step))
    fractions = np.arange(1, n + 1, dtype=float)[:, None] / n
    return a[None, :] + fractions * (b - a)[None, :]


def _path_through(waypoints, step: float) -> np.ndarray:
    rows = [np.asarray(waypoints[0], dtype=float)[None, :]]
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        rows.append(interpolate_configs(a, b, step))
    return np.vstack(rows)


@dataclass
class _GoalCandidate:
    q_goal: np.ndarray
    q_entry: np.ndarray
    q_approach: np.ndarray
    error: PoseError
    distance: float
    tol_ok: bool
    q_standoff: np.ndarray | None = None
    local_qs: np.ndarray | None = None
    cal_qs: np.ndarray | None = None
    local_sc_ok: bool | None = None
    local_col_ok: bool | None = None
    cal_sc_ok: bool | None = None
    cal_col_ok: bool | None = None


@dataclass
class _PlanContext:
    chain: SerialChain
    task: Task
    cfg: PlannerConfig
    seed: int
    q_start: np.ndarray
    q_cal: np.ndarray
    unfold_qs: np.ndarray
    pools: list
    exemptions: list
    unfold_sc_ok: bool | None = None
    unfold_col_ok: bool | None = None


def _segment_ok(ctx: _PlanContext, qs: np.ndarray, sc: bool, col: bool, exemptions=()) -> bool:
    if not sc and not col:
        return True
    chain, base, obstacles = ctx.chain, ctx.task.nominal_base, ctx.task.obstacles
    for q in qs:
        if not config_collision_ok(chain, base, q, sc, col, obstacles, exemptions):
            return False
    return True


def _choose_calibration_config(chain, task, q_start, rng, cfg) -> np.ndarray:
    """Deterministic calibration pose: the assembly config when it passes the
    full collision checks, otherwise the first passing fallback draw."""
    trials = [q_start, _midrange_config(chain)]
    lo, hi = _restart_bounds(chain)
    for _ in range(8):
        trials.append(rng.uniform(lo, hi) if chain.dof else np.zeros(0))
    for q in trials:
        if config_collision_ok(chain, task.nominal_base, q, True, True, task.obstacles):
            return chain.clamp_to_limits(q)
    return q_start


def _aimed_seeds(chain: SerialChain, base: BasePose, goal: Goal) -> list[np.ndarray]:
    """Deterministic wide-basin starting configurations for goal IK.

    In the zero configuration the first joint with a near-vertical world axis
    is turned to face the goal, and joints with transverse axes share the
    tilt from vertical toward the goal; both tilt signs are produced since
    the transverse axis orientation is not inspected.
    """
    if chain.dof == 0:
        return []
    q0 = chain.clamp_to_limits(np.zeros(chain.dof))
    frames, _ = _walk(chain, base, q0)
    origins, axes = _joint_world_data(chain, frames)
    target = goal.pose.translation
    yaw_idx = next((k for k in range(chain.dof) if abs(axes[k][2]) > 0.9), None)
    pitch_idx = [k for k in range(chain.dof) if abs(axes[k][2]) < 0.5]
    seeds = []
    for split in ((1.0,), (0.6, 0.4), (0.45, 0.35, 0.2)):
        for sign in (1.0, -1.0):
            q = q0.copy()
            if yaw_idx is not None:
                d = target - origins[yaw_idx]
                yaw = math.atan2(d[1], d[0])
                q[yaw_idx] = yaw if axes[yaw_idx][2] > 0 else -yaw
            if pitch_idx:
                d = target - origins[pitch_idx[0]]
                tilt = math.atan2(math.hypot(d[0], d[1]), d[2])
                for w, k in zip(split, pitch_idx):
                    q[k] = sign * w * tilt
            seeds.append(chain.clamp_to_limits(q))
    return seeds


def _goal_candidates(ctx_chain, task, goal, rng, cfg, extra_seeds=()) -> list:
    """Shared IK candidate pool for one goal, sorted by goal-error distance.

    Each usable candidate carries configurations for the goal, entry, and
    approach waypoints, all meeting the goal tolerance; failed attempts are
    kept for best-error reporting.  ``extra_seeds`` (typically solutions for
    a neighbouring goal) are tried right after the midrange start.  Every
    start is pre-positioned with a short translation-only descent before the
    full solve, which widens the convergence basin considerably.
    """
    base = task.nominal_base
    lo, hi = _restart_bounds(ctx_chain)
    cands: list[_GoalCandidate] = []
    usable = 0
    best_q = None
    best_d = math.inf
    fixed = ([_midrange_config(ctx_chain)]
             + [np.asarray(s, dtype=float) for s in extra_seeds]
             + _aimed_seeds(ctx_chain, base, goal))
    for attempt in range(len(fixed) + cfg.ik_restarts):
        if attempt < len(fixed):
            q0 = fixed[attempt]
        elif ctx_chain.dof == 0:
            q0 = np.zeros(0)
        elif attempt % 2 and best_q is not None:
            q0 = best_q + rng.normal(0.0, 0.5, ctx_chain.dof)
        else:
            q0 = rng.uniform(lo, hi)
        pre = _dls(ctx_chain, base, goal.pose, None, q0, 60, cfg, position_only=True)
        res = _dls(ctx_chain, base, goal.pose, goal.tolerance, pre.q, cfg.ik_max_iters, cfg)
        if res.distance < best_d:
            best_q, best_d = res.q, res.distance
        if any(np.max(np.abs(res.q - c.q_goal), initial=0.0) < _DEDUPE_TOL for c in cands):
            continue
        if res.tolerance_met:
            entry = _dls(ctx_chain, base, goal.entry_pose(), goal.tolerance, res.q,
                         cfg.ik_max_iters // 2, cfg)
            approach = _dls(ctx_chain, base, goal.approach_pose(), goal.tolerance, entry.q,
                            cfg.ik_max_iters // 2, cfg)
            tol_ok = entry.tolerance_met and approach.tolerance_met
            cand = _GoalCandidate(res.q, entry.q, approach.q, res.error, res.distance, tol_ok)
            usable += tol_ok
        else:
            cand = _GoalCandidate(res.q, res.q, res.q, res.error, res.distance, False)
        cands.append(cand)
        if usable >= cfg.pool_size:
            break
    lower, upper = ctx_chain.joint_limits()

    def worst_margin(c: _GoalCandidate) -> float:
        # smallest distance to a joint stop over the candidate's waypoints;
        # roomy postures survive replanning under base error far better
        if ctx_chain.dof == 0:
            return math.inf
        return min(
            float(np.min(np.minimum(qq - lower, upper - qq)))
            for qq in (c.q_goal, c.q_entry, c.q_approach)
        )

    cands.sort(key=lambda c: (not c.tol_ok, -worst_margin(c), c.distance))
    return cands


def build_plan_context(chain: SerialChain, task: Task, seed: int = 0,
                       config: PlannerConfig | None = None) -> _PlanContext:
    """Everything constraint-set independent about one planning call: the
    calibration pose, the unfold segment, and the per-goal candidate pools."""
    cfg = config or DEFAULT_PLANNER_CONFIG
    rng = np.random.default_rng(seed)
    q_start = chain.clamp_to_limits(np.zeros(chain.dof))
    q_cal = _choose_calibration_config(chain, task, q_start, rng, cfg)
    if np.max(np.abs(q_cal - q_start), initial=0.0) < 1e-12:
        unfold = q_start[None, :]
    else:
        unfold = _path_through([q_start, q_cal], cfg.interp_step)
    pools = []
    carry: list[np.ndarray] = []
    for g in task.goals:
        pool = _goal_candidates(chain, task, g, rng, cfg, extra_seeds=carry)
        pools.append(pool)
        # neighbouring goals make excellent seeds for each other
        carry = [c.q_goal for c in pool if c.tol_ok][:2]
    exemptions = [(g.exemption(),) for g in task.goals]
    return _PlanContext(chain, task, cfg, seed, q_start, q_cal, unfold, pools, exemptions)


def _ensure_local_flags(ctx: _PlanContext, gi: int, cand: _GoalCandidate, sc: bool, col: bool):
    if cand.local_qs is None:
        cand.local_qs = _path_through(
            [cand.q_approach, cand.q_entry, cand.q_goal], ctx.cfg.interp_step
        )
    if sc and cand.local_sc_ok is None:
        cand.local_sc_ok = _segment_ok(ctx, cand.local_qs, True, False)
    if col and cand.local_col_ok is None:
        cand.local_col_ok = _segment_ok(ctx, cand.local_qs, False, True, ctx.exemptions[gi])


def _tuck_config(ctx: _PlanContext, q_approach: np.ndarray) -> np.ndarray | None:
    """Approach posture with the first pitch joint held at its calibration
    value.  Moving there first curls the distal links while the arm still
    points up, away from the workspace; the remaining leg moves only that one
    joint, a rigid single-axis sweep that cannot bulge past its endpoint."""
    chain = ctx.chain
    frames, _ = _walk(chain, ctx.task.nominal_base, np.zeros(chain.dof))
    _, axes = _joint_world_data(chain, frames)
    pitch = [i for i in range(chain.dof) if abs(axes[i][2]) < 0.5]
    if not pitch:
        return None
    j = pitch[0]
    if abs(float(q_approach[j]) - float(ctx.q_cal[j])) < 0.05:
        return None
    q = np.array(q_approach, dtype=float)
    q[j] = float(ctx.q_cal[j])
    return chain.clamp_to_limits(q)


def _ensure_cal_flags(ctx: _PlanContext, gi: int, cand: _GoalCandidate, sc: bool, col: bool):
    if cand.cal_qs is None:
        # Curl the wrist and elbow overhead first, then bring the arm down
        # with a single shoulder sweep; interpolating everything at once lets
        # the tip bulge far past the approach point halfway through.
        step = ctx.cfg.interp_step
        tuck = _tuck_config(ctx, cand.q_approach)
        if tuck is not None:
            cand.q_standoff = tuck
            cand.cal_qs = np.vstack([
                interpolate_configs(ctx.q_cal, tuck, step),
                interpolate_configs(tuck, cand.q_approach, step),
            ])
        else:
            cand.q_standoff = cand.q_approach
            cand.cal_qs = interpolate_configs(ctx.q_cal, cand.q_approach, step)
    if sc and cand.cal_sc_ok is None:
        cand.cal_sc_ok = _segment_ok(ctx, cand.cal_qs, True, False)
    if col and cand.cal_col_ok is None:
        cand.cal_col_ok = _segment_ok(ctx, cand.cal_qs, False, True)


def _candidate_accepted(ctx: _PlanContext, gi: int, cand: _GoalCandidate, sc: bool, col: bool) -> bool:
    if not cand.tol_ok:
        return False
    _ensure_local_flags(ctx, gi, cand, sc, col)
    if sc and not cand.local_sc_ok:
        return False
    if col and not cand.local_col_ok:
        return False
    _ensure_cal_flags(ctx, gi, cand, sc, col)
    if sc and not cand.cal_sc_ok:
        return False
    if col and not cand.cal_col_ok:
        return False
    return True


def _fallback_error(ctx: _PlanContext, gi: int, sc: bool, col: bool) -> tuple[PoseError, float]:
    """Best goal error when no candidate passes: relax the set one constraint
    at a time (col, then sc) so nested sets report nested errors."""
    levels = []
    if col:
        levels.append((sc, False))
    if sc:
        levels.append((False, False))
    for lsc, lcol in levels:
        acc = [c for c in ctx.pools[gi] if _candidate_accepted(ctx, gi, c, lsc, lcol)]
        if acc:
            best = min(acc, key=lambda c: c.distance)
            return best.error, best.distance
    pool = ctx.pools[gi]
    if pool:
        best = min(pool, key=lambda c: c.distance)
        return best.error, best.distance
    tcp = forward_kinematics(ctx.chain, ctx.task.nominal_base, ctx.q_start)
    err = pose_error(ctx.task.goals[gi].pose, tcp)
    return err, scalar_distance(err)


def plan_with_context(ctx: _PlanContext, constraint_set) -> PlanOutcome:
    """Select candidates and assemble the trajectory under one constraint set."""
    sc, col = constraint_flags(constraint_set)
    used = canonical_set(constraint_set)
    chosen: list[_GoalCandidate | None] = []
    errors: list[PoseError] = []
    distances: list[float] = []
    feasible_all = True
    for gi in range(len(ctx.task.goals)):
        pick = None
        for cand in ctx.pools[gi]:
            if _candidate_accepted(ctx, gi, cand, sc, col):
                pick = cand
                break
        if pick is None:
            feasible_all = False
            err, d = _fallback_error(ctx, gi, sc, col)
        else:
            err, d = pick.error, pick.distance
        chosen.append(pick)
        errors.append(err)
        distances.append(d)
    if feasible_all and ctx.unfold_qs.shape[0] > 1:
        if sc and ctx.unfold_sc_ok is None:
            ctx.unfold_sc_ok = _segment_ok(ctx, ctx.unfold_qs, True, False)
        if col and ctx.unfold_col_ok is None:
            ctx.unfold_col_ok = _segment_ok(ctx, ctx.unfold_qs, False, True)
        if (sc and not ctx.unfold_sc_ok) or (col and not ctx.unfold_col_ok):
            feasible_all = False
    if not config_collision_ok(ctx.chain, ctx.task.nominal_base, ctx.q_start, sc, col,
                               ctx.task.obstacles):
        feasible_all = False
    trajectory = _assemble_trajectory(ctx, chosen, sc, col) if feasible_all else None
    return PlanOutcome(
        trajectory=trajectory,
        per_goal_best_error=tuple(errors),
        per_goal_distance=tuple(distances),
        constraint_set_used=used,
        chain=ctx.chain,
        base=ctx.task.nominal_base,
        seed=ctx.seed,
    )


def _assemble_trajectory(ctx: _PlanContext, chosen, sc: bool, col: bool) -> Trajectory:
    step = ctx.cfg.interp_step
    qs = [ctx.unfold_qs]
    phases = [PHASE_TRANSIT] * ctx.unfold_qs.shape[0]
    gids: list[str | None] = [None] * ctx.unfold_qs.shape[0]
    count = ctx.unfold_qs.shape[0]
    t_cal = count - 1
    goal_sample: dict[str, int] = {}
    q_prev = ctx.q_cal
    for gi, cand in enumerate(chosen):
        goal = ctx.task.goals[gi]
        # transit: direct when it passes, otherwise through the calibration
        # pose (that route was verified during candidate acceptance)
        if gi == 0:
            transit = cand.cal_qs
        else:
            direct = interpolate_configs(q_prev, cand.q_approach, step)
            if _segment_ok(ctx, direct, sc, col):
                transit = direct
            else:
                transit = np.vstack([
                    interpolate_configs(q_prev, ctx.q_cal, step), cand.cal_qs
                ])
        approach = interpolate_configs(cand.q_approach, cand.q_entry, step)
        drill = interpolate_configs(cand.q_entry, cand.q_goal, step)
        retract = np.vstack([
            interpolate_configs(cand.q_goal, cand.q_entry, step),
            interpolate_configs(cand.q_entry, cand.q_approach, step),
        ])
        for seg, phase in ((transit, PHASE_TRANSIT), (approach, PHASE_APPROACH),
                           (drill, PHASE_DRILL), (retract, PHASE_RETRACT)):
            qs.append(seg)
            phases.extend([phase] * seg.shape[0])
            gids.extend([None if phase == PHASE_TRANSIT else goal.id] * seg.shape[0])
            count += seg.shape[0]
            if phase == PHASE_DRILL:
                goal_sample[goal.id] = count - 1
        q_prev = cand.q_approach
    configurations = np.vstack(qs)
    base = ctx.task.nominal_base
    return Trajectory(
        configurations=configurations,
        bases=(base,) * configurations.shape[0],
        phases=tuple(phases),
        goal_ids=tuple(gids),
        t_cal=t_cal,
        goal_sample=goal_sample,
    )


def plan(chain: SerialChain, task: Task, constraint_set=SET_FULL, seed: int = 0,
         config: PlannerConfig | None = None) -> PlanOutcome:
    """Plan the full task under one constraint set; absence of a trajectory
    signals that some goal or connecting move failed the set."""
    ctx = build_plan_context(chain, task, seed, config)
    return plan_with_context(ctx, constraint_set)


def plan_cascade(chain: SerialChain, task: Task, seed: int = 0,
                 config: PlannerConfig | None = None,
                 stop_on_infeasible: bool = True) -> list[tuple[tuple[str, ...], PlanOutcome]]:
    """Plan under the nested sets {c_lim}, {c_lim, c_sc}, {c_lim, c_sc, c_col}
    sharing one candidate pool; optionally stop at the first infeasible set."""
    ctx = build_plan_context(chain, task, seed, config)
    out = []
    for cs in CONSTRAINT_CASCADE:
        outcome = plan_with_context(ctx, cs)
        out.append((cs, outcome))
        if stop_on_infeasible and outcome.trajectory is None:
            break
    return out


def feasible(outcome: PlanOutcome, task: Task) -> bool:
    """True when a trajectory exists and every goal tolerance is met at its
    best sample."""
    if outcome.trajectory is None:
        return False
    return all(
        tolerance_met(err, goal.tolerance)
        for err, goal in zip(outcome.per_goal_best_error, task.goals)
    )


def _total_reach(chain: SerialChain) -> float:
    return float(sum(np.linalg.norm(t[:3, 3]) for t in chain.module_transforms))


def _clearly_unreachable(chain: SerialChain, base: BasePose, task: Task) -> bool:
    """Cheap sufficient test: some goal lies farther from the mount point than
    the chain can stretch, with slack larger than any goal tolerance."""
    m = base.matrix()
    mount = m[:3, :3] @ chain.mount[:3, 3] + m[:3, 3]
    reach = _total_reach(chain)
    for goal in task.goals:
        if float(np.linalg.norm(goal.pose.translation - mount)) > reach + 0.02:
            return True
    return False


def _replan_core(outcome: PlanOutcome, task: Task, delta_b, cfg: PlannerConfig,
                 collect: bool) -> tuple[bool, Trajectory | None]:
    if not feasible(outcome, task):
        return False, None
    traj = outcome.trajectory
    chain = outcome.chain
    dx, dy, dtheta = (float(v) for v in delta_b)
    base_p = outcome.base.shifted(dx, dy, dtheta)
    if _clearly_unreachable(chain, base_p, task):
        return False, None
    sc, col = constraint_flags(outcome.constraint_set_used)
    goals = {g.id: g for g in task.goals}
    exemptions = {g.id: (g.exemption(),) for g in task.goals}
    adjusted = traj.configurations.copy()
    for t in range(len(traj)):
        gid = traj.goal_ids[t]
        if t > traj.t_cal:
            drilling = traj.phases[t] == PHASE_DRILL
            if gid is not None and traj.goal_sample.get(gid) == t:
                # the final drill sample answers to the goal itself, not to
                # wherever the original plan happened to land inside tolerance
                target = goals[gid].pose
            else:
                target = forward_kinematics(chain, outcome.base, traj.configurations[t])
            tolerance = goals[gid].tolerance if gid is not None else None
            iters = cfg.replan_max_iters if drilling else cfg.replan_transit_iters
            res = _dls(chain, base_p, target, tolerance, traj.configurations[t],
                       iters, cfg)
            # only the drilled line itself demands lateral precision; free
            # space moves track best-effort and are re-checked for collision
            if drilling and not res.tolerance_met:
                return False, None
            adjusted[t] = res.q
            if gid is not None and traj.goal_sample.get(gid) == t:
                tcp = forward_kinematics(chain, base_p, res.q)
                if not tolerance_met(pose_error(goals[gid].pose, tcp), goals[gid].tolerance):
                    return False, None
        ex = exemptions.get(gid, ()) if gid is not None else ()
        if not config_collision_ok(chain, base_p, adjusted[t], sc, col, task.obstacles, ex):
            return False, None
    if not collect:
        return True, None
    new_traj = Trajectory(
        configurations=adjusted,
        bases=(base_p,) * len(traj),
        phases=traj.phases,
        goal_ids=traj.goal_ids,
        t_cal=traj.t_cal,
        goal_sample=dict(traj.goal_sample),
    )
    return True, new_traj


def replan(outcome: PlanOutcome, task: Task, delta_b,
           config: PlannerConfig | None = None) -> bool:
    """Can the plan be repaired after the base lands displaced by delta_b?

    Samples up to the calibration index keep their original configuration;
    later samples are re-solved pointwise (each seeded with its original
    configuration) to track the original world-frame tool pose, and every
    sample is re-checked against the constraint set the plan was built under.
    Drill-phase samples must recover the goal's lateral tolerance; approach,
    retract, and transit samples track best-effort, since only the drilled
    line needs sub-millimeter accuracy.
    """
    cfg = config or DEFAULT_PLANNER_CONFIG
    ok, _ = _replan_core(outcome, task, delta_b, cfg, collect=False)
    return ok


def replan_trajectory(outcome: PlanOutcome, task: Task, delta_b,
                      config: PlannerConfig | None = None) -> Trajectory | None:
    """Like replan, but returns the adjusted trajectory when repair succeeds."""
    cfg = config or DEFAULT_PLANNER_CONFIG
    ok, traj = _replan_core(outcome, task, delta_b, cfg, collect=True)
    return traj if ok else None


def robustness_delta(outcome: PlanOutcome, task: Task,
                     config: PlannerConfig | None = None) -> float:
    """Largest grid fraction of the displacement envelope surviving all eight
    sign corners.

    Repairability only gets harder as the displacement grows, so the largest
    surviving fraction is located by probing the full envelope and then
    bisecting; the corner that failed most recently is retried first to fail
    cheap levels fast."""
    cfg = config or DEFAULT_PLANNER_CONFIG
    if not feasible(outcome, task):
        return 0.0
    env = task.robustness_envelope
    corners = list(itertools.product((1.0, -1.0), repeat=3))
    last_fail = 0

    def level_ok(i: int) -> bool:
        nonlocal last_fail
        delta = i / 20.0
        order = [last_fail] + [k for k in range(len(corners)) if k != last_fail]
        for k in order:
            sx, sy, sz = corners[k]
            shift = (sx * delta * env[0], sy * delta * env[1], sz * delta * env[2])
            if not replan(outcome, task, shift, cfg):
                last_fail = k
                return False
        return True

    if level_ok(20):
        return 1.0
    lo, hi = 0, 19
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if level_ok(mid):
            lo = mid
        else:
            hi = mid - 1
    return lo / 20.0


def max_joint_adjustment(original: Trajectory, adjusted: Trajectory) -> float:
    """Largest single-joint angle change between two aligned trajectories."""
    a = original.configurations
    b = adjusted.configurations
    if a.shape != b.shape:
        raise DimensionMismatch(f"trajectory shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)))
