"""Synthesis of task-optimal modular robot compositions.

The package searches a catalog of robot modules (bases, joints, links, end
effectors) for serial-chain assemblies that can execute a drilling task,
scoring each candidate on seven feasibility constraints and three objectives
(compactness, robustness to base placement error, reconfiguration effort)
with a rank- and crowding-based evolutionary optimizer.
"""

from .catalog import (
    Catalog,
    ModuleSequence,
    ModuleSpec,
    assembly_valid,
    default_catalog,
)
from .evaluation import (
    CONSTRAINT_NAMES,
    OBJECTIVE_NAMES,
    ConstraintVector,
    EvaluationRecord,
    ObjectiveVector,
    evaluate_candidate,
    evaluate_population,
)
from .fileio import (
    TOOL_VERSION,
    load_catalog,
    load_catalog_resource,
    load_task,
    load_task_resource,
    read_archive,
    write_archive,
)
from .geometry import Capsule, Pose, PoseError, ToleranceSpec, tolerance_met
from .kinematics import BasePose, SerialChain, build_chain, forward_kinematics
from .optimizer import (
    FitnessSequence,
    GAConfig,
    Individual,
    MutationRates,
    crowding_distances,
    nondomination_ranks,
    run,
)
from .planning import (
    PlannerConfig,
    PlanOutcome,
    Trajectory,
    plan,
    replan,
    robustness_delta,
    solve_ik,
)
from .world import Goal, Obstacle, Task

__version__ = TOOL_VERSION

__all__ = [
    "BasePose",
    "Capsule",
    "Catalog",
    "CONSTRAINT_NAMES",
    "ConstraintVector",
    "EvaluationRecord",
    "FitnessSequence",
    "GAConfig",
    "Goal",
    "Individual",
    "ModuleSequence",
    "ModuleSpec",
    "MutationRates",
    "OBJECTIVE_NAMES",
    "ObjectiveVector",
    "Obstacle",
    "PlanOutcome",
    "PlannerConfig",
    "Pose",
    "PoseError",
    "SerialChain",
    "Task",
    "ToleranceSpec",
    "TOOL_VERSION",
    "Trajectory",
    "assembly_valid",
    "build_chain",
    "crowding_distances",
    "default_catalog",
    "evaluate_candidate",
    "evaluate_population",
    "forward_kinematics",
    "load_catalog",
    "load_catalog_resource",
    "load_task",
    "load_task_resource",
    "nondomination_ranks",
    "plan",
    "read_archive",
    "replan",
    "robustness_delta",
    "run",
    "solve_ik",
    "tolerance_met",
    "write_archive",
    "__version__",
]
