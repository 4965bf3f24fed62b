"""File formats: task and catalog files, result export, run manifests.

All structured inputs use one YAML dialect whose field names carry explicit
units (``_m``, ``_rad``, ``_nm``, ``_kg``, ``_n``, ``_s``).  Parse errors name
the file and the offending field; archive and statistics exports use plain
CSV with deterministic float formatting so identical runs produce identical
bytes.
"""

from __future__ import annotations

import hashlib
import math
import platform
from dataclasses import dataclass
from importlib import resources

import numpy as np
import yaml

from .catalog import (
    DEFAULT_ASSEMBLY_TIME_S,
    JOINT_KINDS,
    MODULE_KINDS,
    Catalog,
    ModuleSequence,
    ModuleSpec,
)
from .evaluation import CONSTRAINT_NAMES, N_CONSTRAINTS
from .geometry import Capsule, Pose, ToleranceSpec
from .kinematics import BasePose
from .optimizer import GAConfig, MutationRates
from .planning import PlannerConfig, Trajectory
from .world import Box, Goal, Obstacle, Sphere, Task

TOOL_VERSION = "0.1.0"

ARCHIVE_HEADER = (
    "sequence,"
    + ",".join(CONSTRAINT_NAMES)
    + ",f_compactness,f_robustness,f_reconfig_time,normalized_compactness,plan_seed"
)
STATS_HEADER = (
    "generation,feasible,best_compactness,best_robustness,best_reconfig_time,archive_size"
)


class FileFormatError(ValueError):
    """A structured input file could not be parsed or validated."""


class TaskFileError(FileFormatError):
    pass


class CatalogFileError(FileFormatError):
    pass


class ArchiveFileError(FileFormatError):
    pass


class ManifestError(FileFormatError):
    pass


def _yaml_load(text: str, source: str, err):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        where = ""
        mark = getattr(e, "problem_mark", None)
        if mark is not None:
            where = f" line {mark.line + 1}"
        raise err(f"{source}{where}: {e}") from e
    if not isinstance(data, dict):
        raise err(f"{source}: top level must be a mapping")
    return data


def _need(mapping, key, source, path, err):
    if not isinstance(mapping, dict) or key not in mapping:
        raise err(f"{source}: {path}: missing field {key!r}")
    return mapping[key]


def _to_float(v, source, path, err) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        raise err(f"{source}: {path}: expected a number, got {v!r}") from None


def _to_int(v, source, path, err) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise err(f"{source}: {path}: expected an integer, got {v!r}")
    return v


def _to_vec(v, n, source, path, err) -> np.ndarray:
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise err(f"{source}: {path}: expected a list of {n} numbers")
    return np.array([_to_float(x, source, f"{path}[{i}]", err) for i, x in enumerate(v)])


def rpy_to_matrix(rpy) -> np.ndarray:
    """Rotation matrix for roll-pitch-yaw (x, then y, then z axis)."""
    r, p, y = (float(v) for v in rpy)
    cr, sr = math.cos(r), math.sin(r)
    cp, sp = math.cos(p), math.sin(p)
    cy, sy = math.cos(y), math.sin(y)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def matrix_to_rpy(m) -> tuple[float, float, float]:
    """Inverse of rpy_to_matrix (pitch folded into [-pi/2, pi/2])."""
    m = np.asarray(m, dtype=float)
    sp = -m[2, 0]
    sp = min(1.0, max(-1.0, sp))
    p = math.asin(sp)
    if abs(sp) < 1.0 - 1e-12:
        r = math.atan2(m[2, 1], m[2, 2])
        y = math.atan2(m[1, 0], m[0, 0])
    else:
        r = 0.0
        y = math.atan2(-m[0, 1], m[1, 1])
    return r, p, y


def _pose_from(mapping, source, path, err) -> Pose:
    t = _to_vec(_need(mapping, "position_m", source, path, err), 3, source,
                f"{path}.position_m", err)
    rpy = mapping.get("rpy_rad", [0.0, 0.0, 0.0])
    rot = rpy_to_matrix(_to_vec(rpy, 3, source, f"{path}.rpy_rad", err))
    return Pose(t, rot)


def _pose_to(pose: Pose) -> dict:
    r, p, y = matrix_to_rpy(pose.rotation)
    return {
        "position_m": [float(v) for v in pose.translation],
        "rpy_rad": [r, p, y],
    }


# ---------------------------------------------------------------- catalog --


def parse_catalog(text: str, source: str = "<catalog>") -> Catalog:
    data = _yaml_load(text, source, CatalogFileError)
    raw_modules = _need(data, "modules", source, "catalog", CatalogFileError)
    if not isinstance(raw_modules, list) or not raw_modules:
        raise CatalogFileError(f"{source}: modules: expected a non-empty list")
    modules: dict[str, ModuleSpec] = {}
    for i, m in enumerate(raw_modules):
        path = f"modules[{i}]"
        mid = _need(m, "id", source, path, CatalogFileError)
        if not isinstance(mid, str) or not mid or ";" in mid or "," in mid:
            raise CatalogFileError(f"{source}: {path}.id: must be a nonempty string "
                                   "without ';' or ','")
        if mid in modules:
            raise CatalogFileError(f"{source}: {path}.id: duplicate module id {mid!r}")
        kind = _need(m, "kind", source, path, CatalogFileError)
        if kind not in MODULE_KINDS:
            raise CatalogFileError(
                f"{source}: {path}.kind: {kind!r} is not one of {sorted(MODULE_KINDS)}"
            )
        offset = _to_vec(_need(m, "offset_m", source, path, CatalogFileError), 3,
                         source, f"{path}.offset_m", CatalogFileError)
        rot = rpy_to_matrix(_to_vec(m.get("rotation_rpy_rad", [0.0, 0.0, 0.0]), 3,
                                    source, f"{path}.rotation_rpy_rad", CatalogFileError))
        mass = _to_float(_need(m, "mass_kg", source, path, CatalogFileError),
                         source, f"{path}.mass_kg", CatalogFileError)
        com = _to_vec(_need(m, "com_m", source, path, CatalogFileError), 3,
                      source, f"{path}.com_m", CatalogFileError)
        capsules = []
        for j, c in enumerate(m.get("capsules", []) or []):
            cpath = f"{path}.capsules[{j}]"
            capsules.append(
                Capsule(
                    _to_vec(_need(c, "a_m", source, cpath, CatalogFileError), 3,
                            source, f"{cpath}.a_m", CatalogFileError),
                    _to_vec(_need(c, "b_m", source, cpath, CatalogFileError), 3,
                            source, f"{cpath}.b_m", CatalogFileError),
                    _to_float(_need(c, "radius_m", source, cpath, CatalogFileError),
                              source, f"{cpath}.radius_m", CatalogFileError),
                )
            )
        kwargs = {}
        if kind in JOINT_KINDS:
            kwargs["joint_axis"] = _to_vec(
                _need(m, "joint_axis", source, path, CatalogFileError), 3,
                source, f"{path}.joint_axis", CatalogFileError)
            lim = _to_vec(_need(m, "joint_limits_rad", source, path, CatalogFileError), 2,
                          source, f"{path}.joint_limits_rad", CatalogFileError)
            kwargs["joint_limits"] = (float(lim[0]), float(lim[1]))
            kwargs["torque_limit"] = _to_float(
                _need(m, "torque_limit_nm", source, path, CatalogFileError),
                source, f"{path}.torque_limit_nm", CatalogFileError)
        time_s = _to_float(m.get("assembly_time_s", DEFAULT_ASSEMBLY_TIME_S),
                           source, f"{path}.assembly_time_s", CatalogFileError)
        try:
            modules[mid] = ModuleSpec(
                id=mid, kind=kind, proximal_to_distal=Pose(offset, rot),
                mass=mass, com=com, collision_capsules=tuple(capsules),
                assembly_cost_time=time_s, **kwargs,
            )
        except ValueError as e:
            raise CatalogFileError(f"{source}: {path}: {e}") from e
    availability = {}
    for mid, count in (data.get("availability", {}) or {}).items():
        availability[mid] = _to_int(count, source, f"availability.{mid}", CatalogFileError)
    try:
        return Catalog(modules, availability)
    except ValueError as e:
        raise CatalogFileError(f"{source}: {e}") from e


def load_catalog(path) -> Catalog:
    with open(path, "r", encoding="utf-8") as f:
        return parse_catalog(f.read(), str(path))


def catalog_to_dict(cat: Catalog) -> dict:
    mods = []
    for spec in cat.modules.values():
        r, p, y = matrix_to_rpy(spec.proximal_to_distal.rotation)
        entry = {
            "id": spec.id,
            "kind": spec.kind,
            "offset_m": [float(v) for v in spec.proximal_to_distal.translation],
            "rotation_rpy_rad": [r, p, y],
            "mass_kg": spec.mass,
            "com_m": [float(v) for v in spec.com],
            "assembly_time_s": spec.assembly_cost_time,
        }
        if spec.collision_capsules:
            entry["capsules"] = [
                {
                    "a_m": [float(v) for v in c.a],
                    "b_m": [float(v) for v in c.b],
                    "radius_m": c.radius,
                }
                for c in spec.collision_capsules
            ]
        if spec.is_joint:
            entry["joint_axis"] = [float(v) for v in spec.joint_axis]
            entry["joint_limits_rad"] = [spec.joint_limits[0], spec.joint_limits[1]]
            entry["torque_limit_nm"] = spec.torque_limit
        mods.append(entry)
    return {"modules": mods, "availability": dict(cat.availability)}


def save_catalog(cat: Catalog, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        yaml.safe_dump(catalog_to_dict(cat), f, sort_keys=False)


# ------------------------------------------------------------------- task --


def parse_task(text: str, source: str = "<task>") -> Task:
    data = _yaml_load(text, source, TaskFileError)
    name = data.get("name", "task")
    nb = data.get("nominal_base", {}) or {}
    base = BasePose(
        _to_float(nb.get("x_m", 0.0), source, "nominal_base.x_m", TaskFileError),
        _to_float(nb.get("y_m", 0.0), source, "nominal_base.y_m", TaskFileError),
        _to_float(nb.get("theta_rad", 0.0), source, "nominal_base.theta_rad", TaskFileError),
    )
    env_map = data.get("robustness_envelope", {}) or {}
    envelope = np.array(
        [
            _to_float(env_map.get("dx_m", 0.20), source, "robustness_envelope.dx_m", TaskFileError),
            _to_float(env_map.get("dy_m", 0.20), source, "robustness_envelope.dy_m", TaskFileError),
            _to_float(env_map.get("dtheta_rad", math.radians(15.0)), source,
                      "robustness_envelope.dtheta_rad", TaskFileError),
        ]
    )
    payload = {}
    for phase, w in (data.get("payload", {}) or {}).items():
        ppath = f"payload.{phase}"
        force = _to_vec(w.get("force_n", [0.0, 0.0, 0.0]), 3, source,
                        f"{ppath}.force_n", TaskFileError)
        torque = _to_vec(w.get("torque_nm", [0.0, 0.0, 0.0]), 3, source,
                         f"{ppath}.torque_nm", TaskFileError)
        payload[phase] = np.concatenate([force, torque])
    raw_goals = _need(data, "goals", source, "task", TaskFileError)
    if not isinstance(raw_goals, list) or not raw_goals:
        raise TaskFileError(f"{source}: goals: expected a non-empty list")
    goals = []
    for i, g in enumerate(raw_goals):
        path = f"goals[{i}]"
        gid = _need(g, "id", source, path, TaskFileError)
        pose = _pose_from(g, source, path, TaskFileError)
        tol_map = _need(g, "tolerance", source, path, TaskFileError)
        tpath = f"{path}.tolerance"
        kwargs = {}
        if "axis_epsilon" in tol_map:
            kwargs["axis_epsilon"] = _to_vec(tol_map["axis_epsilon"], 3, source,
                                             f"{tpath}.axis_epsilon", TaskFileError)
        try:
            tol = ToleranceSpec(
                box_bounds=_to_vec(_need(tol_map, "box_m", source, tpath, TaskFileError), 3,
                                   source, f"{tpath}.box_m", TaskFileError),
                axis=_to_vec(_need(tol_map, "axis", source, tpath, TaskFileError), 3,
                             source, f"{tpath}.axis", TaskFileError),
                max_angle=_to_float(_need(tol_map, "max_angle_rad", source, tpath, TaskFileError),
                                    source, f"{tpath}.max_angle_rad", TaskFileError),
                **kwargs,
            )
            goals.append(
                Goal(
                    id=str(gid),
                    pose=pose,
                    tolerance=tol,
                    drill_depth=_to_float(g.get("drill_depth_m", 0.15), source,
                                          f"{path}.drill_depth_m", TaskFileError),
                    approach_clearance=_to_float(g.get("approach_clearance_m", 0.10), source,
                                                 f"{path}.approach_clearance_m", TaskFileError),
                )
            )
        except ValueError as e:
            if isinstance(e, TaskFileError):
                raise
            raise TaskFileError(f"{source}: {path}: {e}") from e
    obstacles = []
    for i, o in enumerate(data.get("obstacles", []) or []):
        path = f"obstacles[{i}]"
        oid = _need(o, "id", source, path, TaskFileError)
        shape_name = _need(o, "shape", source, path, TaskFileError)
        pose = _pose_from(o, source, path, TaskFileError)
        try:
            if shape_name == "box":
                shape = Box(_to_vec(_need(o, "half_extents_m", source, path, TaskFileError), 3,
                                    source, f"{path}.half_extents_m", TaskFileError))
            elif shape_name == "sphere":
                shape = Sphere(_to_float(_need(o, "radius_m", source, path, TaskFileError),
                                         source, f"{path}.radius_m", TaskFileError))
            elif shape_name == "capsule":
                shape = Capsule(
                    _to_vec(_need(o, "a_m", source, path, TaskFileError), 3,
                            source, f"{path}.a_m", TaskFileError),
                    _to_vec(_need(o, "b_m", source, path, TaskFileError), 3,
                            source, f"{path}.b_m", TaskFileError),
                    _to_float(_need(o, "radius_m", source, path, TaskFileError),
                              source, f"{path}.radius_m", TaskFileError),
                )
            else:
                raise TaskFileError(
                    f"{source}: {path}.shape: {shape_name!r} is not box, sphere, or capsule"
                )
        except ValueError as e:
            if isinstance(e, TaskFileError):
                raise
            raise TaskFileError(f"{source}: {path}: {e}") from e
        obstacles.append(Obstacle(id=str(oid), pose=pose, shape=shape))
    try:
        return Task(
            name=str(name),
            goals=tuple(goals),
            obstacles=tuple(obstacles),
            nominal_base=base,
            payload_by_phase=payload,
            robustness_envelope=envelope,
        )
    except ValueError as e:
        raise TaskFileError(f"{source}: {e}") from e


def load_task(path) -> Task:
    with open(path, "r", encoding="utf-8") as f:
        return parse_task(f.read(), str(path))


def task_to_dict(task: Task) -> dict:
    data: dict = {
        "name": task.name,
        "nominal_base": {
            "x_m": task.nominal_base.x,
            "y_m": task.nominal_base.y,
            "theta_rad": task.nominal_base.theta,
        },
        "robustness_envelope": {
            "dx_m": float(task.robustness_envelope[0]),
            "dy_m": float(task.robustness_envelope[1]),
            "dtheta_rad": float(task.robustness_envelope[2]),
        },
    }
    if task.payload_by_phase:
        data["payload"] = {
            phase: {
                "force_n": [float(v) for v in w[:3]],
                "torque_nm": [float(v) for v in w[3:]],
            }
            for phase, w in task.payload_by_phase.items()
        }
    data["goals"] = []
    for g in task.goals:
        entry = {"id": g.id}
        entry.update(_pose_to(g.pose))
        entry["tolerance"] = {
            "box_m": [float(v) for v in g.tolerance.box_bounds],
            "axis": [float(v) for v in g.tolerance.axis],
            "max_angle_rad": g.tolerance.max_angle,
            "axis_epsilon": [float(v) for v in g.tolerance.axis_epsilon],
        }
        entry["drill_depth_m"] = g.drill_depth
        entry["approach_clearance_m"] = g.approach_clearance
        data["goals"].append(entry)
    if task.obstacles:
        data["obstacles"] = []
        for o in task.obstacles:
            entry = {"id": o.id}
            if isinstance(o.shape, Box):
                entry["shape"] = "box"
                entry["half_extents_m"] = [float(v) for v in o.shape.half_extents]
            elif isinstance(o.shape, Sphere):
                entry["shape"] = "sphere"
                entry["radius_m"] = o.shape.radius
            else:
                entry["shape"] = "capsule"
                entry["a_m"] = [float(v) for v in o.shape.a]
                entry["b_m"] = [float(v) for v in o.shape.b]
                entry["radius_m"] = o.shape.radius
            entry.update(_pose_to(o.pose))
            data["obstacles"].append(entry)
    return data


def save_task(task: Task, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        yaml.safe_dump(task_to_dict(task), f, sort_keys=False)


# -------------------------------------------------------------- resources --


def _read_resource(name: str) -> str:
    return resources.files("modsynth").joinpath(f"data/{name}").read_text(encoding="utf-8")


def load_catalog_resource(name: str) -> Catalog:
    return parse_catalog(_read_resource(name), f"resource:{name}")


def load_task_resource(name: str) -> Task:
    return parse_task(_read_resource(name), f"resource:{name}")


def resource_path(name: str):
    """Filesystem path of a bundled data file (valid for installed packages)."""
    return resources.files("modsynth").joinpath(f"data/{name}")


# ------------------------------------------------------------- run config --


def load_run_config(path) -> tuple[GAConfig, PlannerConfig | None, str]:
    """Read an optimizer configuration file: a ``ga`` section with GAConfig
    fields, an optional ``planner`` section, and an optional ``error_mode``."""
    with open(path, "r", encoding="utf-8") as f:
        data = _yaml_load(f.read(), str(path), FileFormatError)
    ga_map = data.get("ga", {}) or {}
    rates = MutationRates(
        insert=float(ga_map.get("mutation_insert", 0.4 / 3)),
        remove=float(ga_map.get("mutation_remove", 0.4 / 3)),
        replace=float(ga_map.get("mutation_replace", 0.4 / 3)),
    )
    try:
        ga = GAConfig(
            population_size=int(ga_map.get("population_size", 32)),
            generations=int(ga_map.get("generations", 50)),
            tournament_size=int(ga_map.get("tournament_size", 3)),
            crossover_rate=float(ga_map.get("crossover_rate", 0.7)),
            mutation_rates=rates,
            max_sequence_length=int(ga_map.get("max_sequence_length", 12)),
            rng_seed=int(ga_map.get("rng_seed", 0)),
        )
        planner = None
        if data.get("planner"):
            planner = PlannerConfig(**{k: v for k, v in data["planner"].items()})
    except (TypeError, ValueError) as e:
        raise FileFormatError(f"{path}: {e}") from e
    error_mode = data.get("error_mode", "worst")
    return ga, planner, error_mode


# ---------------------------------------------------------------- archive --


@dataclass(frozen=True)
class ResultRecord:
    """One archive row: sequence, constraints, objectives, the compactness
    normalized over the emitted set, and the planning seed."""

    sequence: tuple[str, ...]
    constraints: tuple[float, ...]
    objectives: tuple[float, float, float]
    normalized_compactness: float
    plan_seed: int


def normalized_compactness_values(f_cs) -> list[float]:
    """Min-max normalize compactness over an emitted set; 1 for a singleton
    or a zero-range set (the most compact robot maps to 1)."""
    f_cs = [float(v) for v in f_cs]
    if not f_cs:
        return []
    lo, hi = min(f_cs), max(f_cs)
    if hi == lo:
        return [1.0] * len(f_cs)
    return [(v - lo) / (hi - lo) for v in f_cs]


def write_archive(individuals, path) -> None:
    """CSV archive export; row order follows the input, floats use repr so
    equal runs give byte-identical files."""
    norms = normalized_compactness_values(
        [ind.objective_vector.values[0] for ind in individuals]
    )
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(ARCHIVE_HEADER + "\n")
        for ind, norm in zip(individuals, norms):
            cells = [";".join(ind.genome.ids)]
            cells += [repr(v) for v in ind.constraint_vector.values]
            cells += [repr(v) for v in ind.objective_vector.values]
            cells.append(repr(norm))
            cells.append(str(ind.seed))
            f.write(",".join(cells) + "\n")


def read_archive(path) -> list[ResultRecord]:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != ARCHIVE_HEADER:
        raise ArchiveFileError(f"{path}: missing or unexpected header row")
    n_cols = len(ARCHIVE_HEADER.split(","))
    out = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != n_cols:
            raise ArchiveFileError(f"{path} line {ln}: expected {n_cols} columns, "
                                   f"got {len(cells)}")
        try:
            seq = tuple(s for s in cells[0].split(";") if s)
            cons = tuple(float(c) for c in cells[1 : 1 + N_CONSTRAINTS])
            objs = tuple(float(c) for c in cells[1 + N_CONSTRAINTS : 4 + N_CONSTRAINTS])
            norm = float(cells[4 + N_CONSTRAINTS])
            seed = int(cells[5 + N_CONSTRAINTS])
        except ValueError as e:
            raise ArchiveFileError(f"{path} line {ln}: {e}") from e
        out.append(ResultRecord(seq, cons, objs, norm, seed))
    return out


def write_stats(history, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(STATS_HEADER + "\n")
        for s in history:
            f.write(
                f"{s.generation},{s.feasible_count},{repr(s.best_compactness)},"
                f"{repr(s.best_robustness)},{repr(s.best_reconfig_time)},{s.archive_size}\n"
            )


# --------------------------------------------------------------- manifest --


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, task_path, catalog_path, config: GAConfig, error_mode: str,
                   workers: int, wall_clock_s: float) -> None:
    lines = [
        f"tool_version: {TOOL_VERSION}",
        f"task_file: {task_path}",
        f"task_sha256: {file_sha256(task_path)}",
        f"catalog_file: {catalog_path}",
        f"catalog_sha256: {file_sha256(catalog_path)}",
        f"population_size: {config.population_size}",
        f"generations: {config.generations}",
        f"tournament_size: {config.tournament_size}",
        f"crossover_rate: {repr(config.crossover_rate)}",
        f"mutation_insert: {repr(config.mutation_rates.insert)}",
        f"mutation_remove: {repr(config.mutation_rates.remove)}",
        f"mutation_replace: {repr(config.mutation_rates.replace)}",
        f"max_sequence_length: {config.max_sequence_length}",
        f"rng_seed: {config.rng_seed}",
        f"error_mode: {error_mode}",
        f"workers: {workers}",
        f"wall_clock_s: {wall_clock_s:.3f}",
        f"host: {platform.platform()}",
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_manifest(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for ln, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if ": " not in line:
                raise ManifestError(f"{path} line {ln}: expected 'key: value'")
            key, value = line.split(": ", 1)
            out[key] = value
    return out


def manifest_ga_config(manifest: dict[str, str]) -> GAConfig:
    """Rebuild the GAConfig recorded in a manifest (for replay)."""
    try:
        rates = MutationRates(
            insert=float(manifest["mutation_insert"]),
            remove=float(manifest["mutation_remove"]),
            replace=float(manifest["mutation_replace"]),
        )
        return GAConfig(
            population_size=int(manifest["population_size"]),
            generations=int(manifest["generations"]),
            tournament_size=int(manifest["tournament_size"]),
            crossover_rate=float(manifest["crossover_rate"]),
            mutation_rates=rates,
            max_sequence_length=int(manifest["max_sequence_length"]),
            rng_seed=int(manifest["rng_seed"]),
        )
    except (KeyError, ValueError) as e:
        raise ManifestError(f"manifest incomplete or malformed: {e}") from e


# ------------------------------------------------------------- trajectory --


def write_trajectory(traj: Trajectory, path) -> None:
    """Plain-text table: sample index, base pose, joint angles, phase, goal."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        qcols = " ".join(f"q{k}_rad" for k in range(traj.dof))
        f.write(f"# t base_x_m base_y_m base_theta_rad {qcols} phase goal\n".replace("  ", " "))
        for t in range(len(traj)):
            b = traj.bases[t]
            qs = " ".join(f"{v:.9g}" for v in traj.configurations[t])
            gid = traj.goal_ids[t] or "-"
            row = f"{t} {b.x:.9g} {b.y:.9g} {b.theta:.9g} {qs} {traj.phases[t]} {gid}\n"
            f.write(row.replace("  ", " "))
        f.write(f"# calibration_index: {traj.t_cal}\n")


def sequence_from_string(s: str) -> ModuleSequence:
    """Parse a semicolon- or comma-joined module id list."""
    parts = [p for p in s.replace(",", ";").split(";") if p.strip()]
    return ModuleSequence(tuple(p.strip() for p in parts))
