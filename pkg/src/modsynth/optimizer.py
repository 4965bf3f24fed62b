"""Genetic synthesis of module compositions.

Fitness is a lexicographic sequence: the seven constraint values first, then
the negated nondomination rank and the crowding distance of the objective
vector within the current generation.  Comparing left to right makes
constraint satisfaction strictly dominate objective quality, while feasible
candidates compete in the usual rank-then-diversity order.

Variation works on variable-length genomes (module id sequences): one-point
crossover at interior cut points plus insert/remove/replace mutations, all
preserving the base...end-effector structure.  The result of a run is an
all-time archive of feasible, mutually nondominated individuals.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np

from .catalog import Catalog, ModuleSequence, assembly_valid
from .evaluation import (
    ConstraintVector,
    EvaluationCache,
    EvaluationRecord,
    ObjectiveVector,
    evaluate_population,
)
from .planning import PlannerConfig
from .world import Task


class LengthMismatch(ValueError):
    """Compared sequences have different lengths."""


class ConfigError(ValueError):
    """Invalid optimizer configuration."""


def lexicographic_compare(a, b) -> int:
    """-1, 0, or 1 for a < b, a == b, a > b under left-to-right comparison."""
    a = tuple(a)
    b = tuple(b)
    if len(a) != len(b):
        raise LengthMismatch(f"length {len(a)} vs {len(b)}")
    for x, y in zip(a, b):
        if x > y:
            return 1
        if x < y:
            return -1
    return 0


def dominates(f, g) -> bool:
    """Pareto dominance: at least as good everywhere, better somewhere."""
    f = tuple(f)
    g = tuple(g)
    if len(f) != len(g):
        raise LengthMismatch(f"length {len(f)} vs {len(g)}")
    return all(x >= y for x, y in zip(f, g)) and any(x > y for x, y in zip(f, g))


def _is_sentinel(v) -> bool:
    return all(x == -math.inf for x in v)


def nondomination_ranks(vectors) -> list[int]:
    """Rank of every vector: 0 on the Pareto front, k after k peelings.

    Sentinel (all minus infinity) vectors are excluded from peeling and get
    rank equal to the number of fronts found.
    """
    vs = [tuple(v) for v in vectors]
    if not vs:
        return []
    width = len(vs[0])
    for v in vs:
        if len(v) != width:
            raise LengthMismatch("vectors must share one length")
    active = [i for i, v in enumerate(vs) if not _is_sentinel(v)]
    ranks = [0] * len(vs)
    dominated_by: dict[int, list[int]] = {i: [] for i in active}
    n_dom = {i: 0 for i in active}
    for ii, i in enumerate(active):
        for j in active[ii + 1:]:
            if dominates(vs[i], vs[j]):
                dominated_by[i].append(j)
                n_dom[j] += 1
            elif dominates(vs[j], vs[i]):
                dominated_by[j].append(i)
                n_dom[i] += 1
    front = [i for i in active if n_dom[i] == 0]
    rank = 0
    while front:
        nxt = []
        for i in front:
            ranks[i] = rank
            for j in dominated_by[i]:
                n_dom[j] -= 1
                if n_dom[j] == 0:
                    nxt.append(j)
        front = nxt
        rank += 1
    for i, v in enumerate(vs):
        if _is_sentinel(v):
            ranks[i] = rank
    return ranks


def nondomination_rank(x, population_vectors) -> int:
    """Rank of one member vector within a population of vectors."""
    vs = [tuple(v) for v in population_vectors]
    target = tuple(x)
    ranks = nondomination_ranks(vs)
    for v, r in zip(vs, ranks):
        if v == target:
            return r
    raise ValueError("vector is not a member of the population")


def crowding_distances(vectors) -> list[float]:
    """NSGA-II crowding distance per vector, computed within its front.

    Extremal members of a front get +inf per the boundary rule; interior
    members sum the gap between the nearest distinct neighbor values divided
    by the front's range; zero-range objectives contribute nothing.  Values
    depend only on vector content, so permuting the input permutes the
    output.  Sentinel vectors get 0.
    """
    vs = [tuple(v) for v in vectors]
    ranks = nondomination_ranks(vs)
    out = [0.0] * len(vs)
    fronts: dict[int, list[int]] = {}
    for i, v in enumerate(vs):
        if not _is_sentinel(v):
            fronts.setdefault(ranks[i], []).append(i)
    for members in fronts.values():
        if len(members) <= 2:
            for i in members:
                out[i] = math.inf
            continue
        dist = {i: 0.0 for i in members}
        width = len(vs[members[0]])
        for k in range(width):
            uniq = sorted({vs[i][k] for i in members})
            vmin, vmax = uniq[0], uniq[-1]
            if vmax == vmin:
                continue
            span = vmax - vmin
            for i in members:
                v = vs[i][k]
                if v == vmin or v == vmax:
                    dist[i] = math.inf
                elif dist[i] != math.inf:
                    pos = bisect_left(uniq, v)
                    dist[i] += (uniq[pos + 1] - uniq[pos - 1]) / span
        for i in members:
            out[i] = dist[i]
    return out


def crowding_distance(x, population_vectors) -> float:
    """Crowding distance of one member vector within a population."""
    vs = [tuple(v) for v in population_vectors]
    target = tuple(x)
    values = crowding_distances(vs)
    for v, c in zip(vs, values):
        if v == target:
            return c
    raise ValueError("vector is not a member of the population")


@dataclass(frozen=True)
class FitnessSequence:
    """Lexicographic fitness: 7 constraint values, negated rank, crowding."""

    constraint_part: tuple[float, ...]
    rank_part: float
    crowding_part: float

    def __post_init__(self):
        object.__setattr__(self, "constraint_part", tuple(float(v) for v in self.constraint_part))
        if len(self.constraint_part) != 7:
            raise ValueError("expected 7 constraint values")

    def as_tuple(self) -> tuple[float, ...]:
        return self.constraint_part + (self.rank_part, self.crowding_part)


@dataclass
class Individual:
    genome: ModuleSequence
    constraint_vector: ConstraintVector
    objective_vector: ObjectiveVector
    fitness: FitnessSequence | None
    seed: int

    @classmethod
    def from_record(cls, record: EvaluationRecord) -> "Individual":
        return cls(record.sequence, record.constraints, record.objectives, None,
                   record.plan_seed)

    @property
    def feasible(self) -> bool:
        return self.constraint_vector.satisfied


@dataclass(frozen=True)
class MutationRates:
    insert: float = 0.4 / 3
    remove: float = 0.4 / 3
    replace: float = 0.4 / 3

    def __post_init__(self):
        for r in (self.insert, self.remove, self.replace):
            if not 0.0 <= r <= 1.0:
                raise ConfigError("mutation rates must lie in [0, 1]")


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 32
    generations: int = 50
    tournament_size: int = 3
    crossover_rate: float = 0.7
    mutation_rates: MutationRates = field(default_factory=MutationRates)
    max_sequence_length: int = 12
    rng_seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ConfigError("population_size must be >= 2")
        if self.generations < 0:
            raise ConfigError("generations must be >= 0")
        if self.tournament_size < 1:
            raise ConfigError("tournament_size must be >= 1")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ConfigError("crossover_rate must lie in [0, 1]")
        if self.max_sequence_length < 2:
            raise ConfigError("max_sequence_length must be >= 2")


def assemble_fitnesses(individuals) -> None:
    """Assign every individual's fitness using rank and crowding computed
    over this group's objective vectors (sentinels included)."""
    objs = [ind.objective_vector.values for ind in individuals]
    ranks = nondomination_ranks(objs)
    crowds = crowding_distances(objs)
    for ind, r, c in zip(individuals, ranks, crowds):
        ind.fitness = FitnessSequence(ind.constraint_vector.values, -float(r), c)


def assemble_fitness(ind: Individual, population_objectives) -> FitnessSequence:
    """Fitness of one individual relative to a population of objective vectors."""
    objs = [tuple(v) for v in population_objectives]
    rank = nondomination_rank(ind.objective_vector.values, objs)
    crowd = crowding_distance(ind.objective_vector.values, objs)
    return FitnessSequence(ind.constraint_vector.values, -float(rank), crowd)


def tournament_select(population, k: int, rng: np.random.Generator) -> Individual:
    """Uniformly sample k members without replacement; return the
    lexicographic best, breaking exact ties uniformly."""
    if not population:
        raise ValueError("population is empty")
    k = min(k, len(population))
    idx = rng.choice(len(population), size=k, replace=False)
    best: list[Individual] = []
    for i in idx:
        ind = population[int(i)]
        if not best:
            best = [ind]
            continue
        cmp = lexicographic_compare(ind.fitness.as_tuple(), best[0].fitness.as_tuple())
        if cmp > 0:
            best = [ind]
        elif cmp == 0:
            best.append(ind)
    return best[int(rng.integers(len(best)))]


def mutate(genome: ModuleSequence, cat: Catalog, rates: MutationRates,
           rng: np.random.Generator, max_len: int = 12) -> ModuleSequence:
    """Apply insert/remove/replace, each with its own probability, keeping
    the base/end-effector frame and the length bound.  Availability may be
    exceeded; that is penalized by the availability constraint, not here."""
    ids = list(genome.ids)
    interior = cat.interior_ids()
    if rng.random() < rates.insert and len(ids) < max_len and interior:
        pos = int(rng.integers(1, len(ids)))
        ids.insert(pos, interior[int(rng.integers(len(interior)))])
    if rng.random() < rates.remove and len(ids) > 2:
        pos = int(rng.integers(1, len(ids) - 1))
        ids.pop(pos)
    if rng.random() < rates.replace and len(ids) > 2 and interior:
        pos = int(rng.integers(1, len(ids) - 1))
        ids[pos] = interior[int(rng.integers(len(interior)))]
    return ModuleSequence(tuple(ids))


def _clip_child(ids: list[str], max_len: int) -> tuple[str, ...]:
    if len(ids) <= max_len:
        return tuple(ids)
    return tuple(ids[: max_len - 1] + [ids[-1]])


def crossover(a: ModuleSequence, b: ModuleSequence, rng: np.random.Generator,
              max_len: int = 12) -> tuple[ModuleSequence, ModuleSequence]:
    """One-point crossover at interior cut positions; tails swap, children
    keep their base and end effector and are clipped to the length bound."""
    ia = list(a.ids)
    ib = list(b.ids)
    cut_a = int(rng.integers(1, len(ia)))
    cut_b = int(rng.integers(1, len(ib)))
    child1 = _clip_child(ia[:cut_a] + ib[cut_b:], max_len)
    child2 = _clip_child(ib[:cut_b] + ia[cut_a:], max_len)
    return ModuleSequence(child1), ModuleSequence(child2)


def random_genome(cat: Catalog, rng: np.random.Generator, max_len: int = 12,
                  min_len: int = 4, tries: int = 200) -> ModuleSequence:
    """Random valid genome: base, uniform interior modules, end effector;
    rejection-sampled to a fully valid (availability included) assembly."""
    from .catalog import KIND_BASE, KIND_EEF

    bases = cat.ids_of_kind(KIND_BASE)
    eefs = cat.ids_of_kind(KIND_EEF)
    interior = cat.interior_ids()
    if not bases or not eefs:
        raise ConfigError("catalog must provide at least one base and one end effector")
    lo = min(min_len, max_len)
    last = None
    for _ in range(tries):
        length = int(rng.integers(lo, max_len + 1)) if interior else 2
        mids = [bases[int(rng.integers(len(bases)))]]
        for _ in range(length - 2):
            mids.append(interior[int(rng.integers(len(interior)))])
        mids.append(eefs[int(rng.integers(len(eefs)))])
        seq = ModuleSequence(tuple(mids))
        ok, _reason = assembly_valid(seq, cat)
        if ok:
            return seq
        last = seq
    return last


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    feasible_count: int
    best_compactness: float
    best_robustness: float
    best_reconfig_time: float
    archive_size: int

    def line(self) -> str:
        return (
            f"gen={self.generation} feasible={self.feasible_count} "
            f"best_fc={self.best_compactness:g} best_fr={self.best_robustness:g} "
            f"best_ft={self.best_reconfig_time:g} archive={self.archive_size}"
        )


def update_archive(archive, candidates) -> list[Individual]:
    """Fold feasible candidates into the all-time archive and re-filter to
    mutually nondominated members (one entry per genome)."""
    pool: dict[tuple[str, ...], Individual] = {ind.genome.ids: ind for ind in archive}
    for c in candidates:
        if c.feasible and c.genome.ids not in pool:
            pool[c.genome.ids] = c
    items = list(pool.values())
    keep = []
    for x in items:
        if not any(
            dominates(y.objective_vector.values, x.objective_vector.values)
            for y in items
            if y is not x
        ):
            keep.append(x)
    return keep


def _archive_bests(archive) -> tuple[float, float, float]:
    if not archive:
        return (math.nan, math.nan, math.nan)
    return tuple(
        max(ind.objective_vector.values[k] for ind in archive) for k in range(3)
    )


def run(
    task: Task,
    catalog: Catalog,
    config: GAConfig | None = None,
    current_assembly: ModuleSequence | None = None,
    workers: int = 1,
    planner_config: PlannerConfig | None = None,
    error_mode: str = "worst",
    stats_sink=None,
) -> tuple[list[Individual], list[GenerationStats]]:
    """Run the synthesis GA; returns (archive, per-generation history).

    mu+lambda model: each generation breeds population_size offspring via
    lexicographic tournaments, evaluates them, and truncates the union of
    parents and offspring by fitness assembled over that union.
    """
    cfg = config or GAConfig()
    current = current_assembly if current_assembly is not None else ModuleSequence.empty()
    rng = np.random.default_rng(cfg.rng_seed)
    cache = EvaluationCache()
    pool = Pool(processes=workers) if workers > 1 else None
    try:
        genomes = [
            random_genome(catalog, rng, cfg.max_sequence_length) for _ in range(cfg.population_size)
        ]

        def evaluate(seqs):
            return evaluate_population(
                seqs, task, catalog, current, cfg.rng_seed,
                planner_config, error_mode, workers=workers, pool=pool, cache=cache,
            )

        records = evaluate(genomes)
        population = [Individual.from_record(r) for r in records]
        assemble_fitnesses(population)
        archive = update_archive([], population)
        history = [_stats(0, population, archive)]
        if stats_sink is not None:
            stats_sink(history[-1].line())
        for gen in range(1, cfg.generations + 1):
            offspring_genomes = _breed(population, catalog, cfg, rng)
            off_records = evaluate(offspring_genomes)
            offspring = [Individual.from_record(r) for r in off_records]
            union = population + offspring
            assemble_fitnesses(union)
            union.sort(key=lambda ind: ind.fitness.as_tuple(), reverse=True)
            population = union[: cfg.population_size]
            archive = update_archive(archive, offspring)
            history.append(_stats(gen, population, archive))
            if stats_sink is not None:
                stats_sink(history[-1].line())
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    archive.sort(key=lambda ind: ind.genome.ids)
    return archive, history


def _stats(gen: int, population, archive) -> GenerationStats:
    bc, br, bt = _archive_bests(archive)
    return GenerationStats(
        generation=gen,
        feasible_count=sum(1 for ind in population if ind.feasible),
        best_compactness=bc,
        best_robustness=br,
        best_reconfig_time=bt,
        archive_size=len(archive),
    )


def _breed(population, cat: Catalog, cfg: GAConfig, rng: np.random.Generator) -> list[ModuleSequence]:
    out: list[ModuleSequence] = []
    while len(out) < cfg.population_size:
        p1 = tournament_select(population, cfg.tournament_size, rng)
        p2 = tournament_select(population, cfg.tournament_size, rng)
        g1, g2 = p1.genome, p2.genome
        if rng.random() < cfg.crossover_rate:
            g1, g2 = crossover(g1, g2, rng, cfg.max_sequence_length)
        g1 = mutate(g1, cat, cfg.mutation_rates, rng, cfg.max_sequence_length)
        g2 = mutate(g2, cat, cfg.mutation_rates, rng, cfg.max_sequence_length)
        out.append(g1)
        if len(out) < cfg.population_size:
            out.append(g2)
    return out
