"""Ordering, ranking, crowding, and genome-operator tests.

The four hand-scored example robots used throughout (r1..r4, scored on
speed, hardware cost, and disturbance robustness) exercise every comparison
routine on values small enough to check by eye.
"""

import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modsynth.catalog import ModuleSequence, default_catalog
from modsynth.optimizer import (
    FitnessSequence,
    GAConfig,
    Individual,
    LengthMismatch,
    MutationRates,
    ConfigError,
    crossover,
    crowding_distance,
    crowding_distances,
    dominates,
    lexicographic_compare,
    mutate,
    nondomination_rank,
    nondomination_ranks,
    random_genome,
    tournament_select,
    update_archive,
)

# Scores (speed, cost, robustness) for the four example robots; higher is
# better in every column.
R1 = (1.0, 2.0, 3.0)
R2 = (2.0, 1.0, 2.0)
R3 = (2.0, 3.0, 2.0)
R4 = (3.0, 1.0, 2.0)
SPEED_FIRST = {"r1": R1, "r2": R2, "r3": R3, "r4": R4}
# Same robots with columns reordered to (robustness, speed, cost).
ROBUST_FIRST = {
    name: (v[2], v[0], v[1]) for name, v in SPEED_FIRST.items()
}

SENTINEL = (-math.inf, -math.inf, -math.inf)


class TestLexicographicCompare:
    def test_speed_first_order(self):
        # r4 > r3 > r2 > r1 when speed is the most significant column
        order = sorted(SPEED_FIRST, key=lambda n: _key(SPEED_FIRST[n]), reverse=True)
        assert order == ["r4", "r3", "r2", "r1"]

    def test_robustness_first_order(self):
        order = sorted(ROBUST_FIRST, key=lambda n: _key(ROBUST_FIRST[n]), reverse=True)
        assert order == ["r1", "r4", "r3", "r2"]

    def test_equal(self):
        assert lexicographic_compare((1, 2, 3), (1, 2, 3)) == 0

    def test_first_difference_wins(self):
        assert lexicographic_compare((1, 9, 9), (2, 0, 0)) == -1
        assert lexicographic_compare((2, 0, 0), (1, 9, 9)) == 1

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            lexicographic_compare((1, 2), (1, 2, 3))

    @given(
        st.lists(st.integers(-5, 5), min_size=3, max_size=3),
        st.lists(st.integers(-5, 5), min_size=3, max_size=3),
        st.lists(st.integers(-5, 5), min_size=3, max_size=3),
    )
    def test_total_preorder(self, a, b, c):
        # antisymmetry up to equality
        ab = lexicographic_compare(a, b)
        ba = lexicographic_compare(b, a)
        assert ab == -ba
        if ab == 0:
            assert tuple(a) == tuple(b)
        # transitivity
        bc = lexicographic_compare(b, c)
        if ab >= 0 and bc >= 0:
            assert lexicographic_compare(a, c) >= 0


def _key(vec):
    """Sort key realizing the library's comparison via pairwise compares."""
    import functools

    return functools.cmp_to_key(lexicographic_compare)(vec)


class TestDominates:
    def test_example_pair(self):
        # equally fast and robust, r3 cheaper
        assert dominates(R3, R2)
        assert not dominates(R2, R3)

    def test_equal_vectors(self):
        assert not dominates(R1, R1)

    def test_sentinel_ordering(self):
        assert not dominates(SENTINEL, R1)
        assert dominates(R1, SENTINEL)
        assert not dominates(SENTINEL, SENTINEL)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            dominates((1, 2), (1, 2, 3))

    @given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=3, max_size=3))
    def test_irreflexive_and_transitive(self, vs):
        a, b, c = vs
        assert not dominates(a, a)
        if dominates(a, b) and dominates(b, c):
            assert dominates(a, c)


def peel_ranks(vectors):
    """Brute-force rank oracle: repeatedly strip the nondominated set.

    Deliberately the naive O(n^3) restatement of the definition, kept
    independent of the library algorithm.
    """
    vs = [tuple(v) for v in vectors]
    remaining = list(range(len(vs)))
    ranks = [0] * len(vs)
    rank = 0
    while remaining:
        front = [
            i
            for i in remaining
            if not any(_dom(vs[j], vs[i]) for j in remaining if j != i)
        ]
        for i in front:
            ranks[i] = rank
        remaining = [i for i in remaining if i not in front]
        rank += 1
    return ranks


def _dom(f, g):
    return all(x >= y for x, y in zip(f, g)) and any(x > y for x, y in zip(f, g))


class TestNondominationRanks:
    def test_example_ranks(self):
        vecs = [R1, R2, R3, R4]
        assert nondomination_ranks(vecs) == [0, 1, 0, 0]

    def test_singleton(self):
        assert nondomination_ranks([R1]) == [0]
        assert nondomination_rank(R1, [R1]) == 0

    def test_empty(self):
        assert nondomination_ranks([]) == []

    def test_non_member_rejected(self):
        with pytest.raises(ValueError):
            nondomination_rank((9, 9, 9), [R1, R2])

    def test_sentinels_rank_below_every_front(self):
        vecs = [R1, R2, R3, R4, SENTINEL, SENTINEL]
        ranks = nondomination_ranks(vecs)
        assert ranks == [0, 1, 0, 0, 2, 2]
        assert ranks == peel_ranks(vecs)

    def test_all_sentinels(self):
        vecs = [SENTINEL, SENTINEL]
        assert nondomination_ranks(vecs) == peel_ranks(vecs)

    def test_matches_peeling_oracle_on_random_sets(self):
        # 200 random sets, up to 64 vectors, 2-4 objectives, with duplicates
        # and sentinel vectors mixed in
        for seed in range(200):
            rng = random.Random(seed)
            n = rng.randint(1, 64)
            width = rng.randint(2, 4)
            vecs = []
            for _ in range(n):
                kind = rng.random()
                if kind < 0.1:
                    vecs.append((-math.inf,) * width)
                elif kind < 0.3 and vecs:
                    vecs.append(rng.choice(vecs))
                else:
                    vecs.append(tuple(rng.randint(0, 5) for _ in range(width)))
            assert nondomination_ranks(vecs) == peel_ranks(vecs), f"seed {seed}"

    def test_peeling_partition_property(self):
        # members of rank k are exactly the Pareto front once ranks < k are
        # removed
        rng = random.Random(7)
        vecs = [tuple(rng.randint(0, 4) for _ in range(3)) for _ in range(40)]
        ranks = nondomination_ranks(vecs)
        for k in range(max(ranks) + 1):
            rest = [v for v, r in zip(vecs, ranks) if r >= k]
            front = {
                v for v in rest if not any(_dom(u, v) for u in rest if u != v)
            }
            assert {v for v, r in zip(vecs, ranks) if r == k} <= front


class TestCrowdingDistance:
    FRONT = [(0.0, 2.0), (1.0, 1.0), (2.0, 0.0)]

    def test_boundaries_infinite(self):
        d = crowding_distances(self.FRONT)
        assert d[0] == math.inf
        assert d[2] == math.inf

    def test_interior_value(self):
        # normalized gap sum: (2-0)/2 per objective = 1 + 1
        assert crowding_distances(self.FRONT)[1] == 2.0

    def test_two_member_front_all_infinite(self):
        assert crowding_distances([(0.0, 1.0), (1.0, 0.0)]) == [math.inf, math.inf]

    def test_singleton_front(self):
        assert crowding_distances([(3.0, 3.0)]) == [math.inf]

    def test_permutation_invariance(self):
        base = [(0.0, 4.0), (1.0, 3.0), (2.0, 2.0), (3.0, 1.0), (4.0, 0.0), (1.0, 1.0)]
        ref = dict(zip(base, crowding_distances(base)))
        rng = random.Random(3)
        for _ in range(20):
            perm = base[:]
            rng.shuffle(perm)
            got = crowding_distances(perm)
            for v, g in zip(perm, got):
                assert g == ref[v]

    def test_zero_range_objective_ignored(self):
        front = [(0.0, 5.0, 2.0), (1.0, 5.0, 1.0), (2.0, 5.0, 0.0)]
        d = crowding_distances(front)
        assert d[0] == math.inf and d[2] == math.inf
        # constant middle objective contributes nothing
        assert d[1] == 2.0

    def test_member_lookup(self):
        assert crowding_distance((1.0, 1.0), self.FRONT) == 2.0

    def test_sentinels_get_zero(self):
        vecs = self.FRONT + [(-math.inf, -math.inf)]
        assert crowding_distances(vecs)[-1] == 0.0


class _Stub:
    """Minimal stand-in carrying a raw fitness tuple for selection tests."""

    def __init__(self, vec):
        self._vec = tuple(vec)

    @property
    def fitness(self):
        return self

    def as_tuple(self):
        return self._vec


class TestTournamentSelect:
    def test_selection_pressure(self):
        # With k = 2 over the four example robots ordered speed-first, exact
        # pair enumeration gives selection probabilities 3/6, 2/6, 1/6, 0
        # for r4, r3, r2, r1.
        pop = [_Stub(SPEED_FIRST[n]) for n in ("r1", "r2", "r3", "r4")]
        rng = np.random.default_rng(0)
        counts = {n: 0 for n in SPEED_FIRST}
        names = ["r1", "r2", "r3", "r4"]
        for _ in range(10000):
            picked = tournament_select(pop, 2, rng)
            counts[names[pop.index(picked)]] += 1
        assert counts["r4"] > counts["r3"] > counts["r2"] > counts["r1"]
        assert counts["r1"] == 0
        assert abs(counts["r4"] / 10000 - 0.5) < 0.03

    def test_population_of_one(self):
        pop = [_Stub(R1)]
        assert tournament_select(pop, 3, np.random.default_rng(0)) is pop[0]

    def test_full_tournament_returns_best(self):
        pop = [_Stub(v) for v in (R1, R2, R3, R4)]
        picked = tournament_select(pop, 4, np.random.default_rng(1))
        assert picked is pop[3]

    def test_empty_population_rejected(self):
        with pytest.raises(ValueError):
            tournament_select([], 2, np.random.default_rng(0))


class TestGenomeOperators:
    def setup_method(self):
        self.cat = default_catalog()
        self.rng = np.random.default_rng(42)

    def _structurally_valid(self, seq):
        ids = seq.ids
        kinds = [self.cat.modules[i].kind for i in ids]
        return (
            len(ids) >= 2
            and kinds[0] == "base"
            and kinds[-1] == "end_effector"
            and all(k not in ("base", "end_effector") for k in kinds[1:-1])
        )

    def test_zero_rates_identity(self):
        g = ModuleSequence(("base", "straight", "elbow", "drill"))
        rates = MutationRates(0.0, 0.0, 0.0)
        assert mutate(g, self.cat, rates, self.rng) == g

    def test_minimal_genome_unchanged_by_remove(self):
        g = ModuleSequence(("base", "drill"))
        rates = MutationRates(0.0, 1.0, 0.0)
        assert mutate(g, self.cat, rates, self.rng) == g

    def test_mutation_structure_fuzz(self):
        g = ModuleSequence(("base", "straight", "elbow", "straight", "drill"))
        rates = MutationRates(0.3, 0.3, 0.3)
        for _ in range(10000):
            g2 = mutate(g, self.cat, rates, self.rng)
            assert self._structurally_valid(g2)
            assert len(g2.ids) <= 12
            g = g2 if len(g2.ids) > 2 else ModuleSequence(
                ("base", "straight", "elbow", "straight", "drill")
            )

    def test_identical_parents_same_cut_copies(self):
        # each parent gets its own cut; when the cuts coincide on identical
        # parents the children are exact copies
        g = ModuleSequence(("base", "straight", "elbow", "drill"))
        seen_copy = False
        for _ in range(50):
            c1, c2 = crossover(g, g, self.rng)
            if c1 == g:
                assert c2 == g
                seen_copy = True
            # material only ever comes from the parents
            assert set(c1.ids) <= set(g.ids)
            assert set(c2.ids) <= set(g.ids)
        assert seen_copy

    def test_crossover_structure_fuzz(self):
        a = ModuleSequence(("base", "straight", "elbow", "link_100", "drill"))
        b = ModuleSequence(
            ("base", "elbow", "elbow", "straight", "link_200", "straight", "drill")
        )
        for _ in range(2000):
            c1, c2 = crossover(a, b, self.rng, max_len=12)
            for c in (c1, c2):
                assert self._structurally_valid(c)
                assert len(c.ids) <= 12

    def test_random_genome_valid(self):
        from modsynth.catalog import assembly_valid

        for _ in range(200):
            g = random_genome(self.cat, self.rng)
            ok, reason = assembly_valid(g, self.cat)
            assert ok, reason
            assert 2 <= len(g.ids) <= 12


def _individual(ids, constraints, objectives):
    from modsynth.evaluation import ConstraintVector, ObjectiveVector

    cv = ConstraintVector(tuple(constraints), tuple(True for _ in constraints))
    ov = ObjectiveVector(tuple(objectives))
    return Individual(ModuleSequence(tuple(ids)), cv, ov, None, 0)


class TestArchive:
    def test_infeasible_never_enters(self):
        bad = _individual(("base", "drill"), (-1.0, 0, 0, 0, 0, 0, 0), SENTINEL)
        assert update_archive([], [bad]) == []

    def test_feasible_nondominated_kept(self):
        a = _individual(("base", "straight", "drill"), (0,) * 7, (-1.0, 0.5, -100.0))
        b = _individual(("base", "elbow", "drill"), (0,) * 7, (-0.5, 0.2, -100.0))
        archive = update_archive([], [a, b])
        assert {ind.genome.ids for ind in archive} == {a.genome.ids, b.genome.ids}

    def test_dominated_candidate_rejected(self):
        a = _individual(("base", "straight", "drill"), (0,) * 7, (-1.0, 0.5, -100.0))
        worse = _individual(("base", "elbow", "drill"), (0,) * 7, (-1.5, 0.4, -100.0))
        archive = update_archive([], [a])
        archive = update_archive(archive, [worse])
        assert [ind.genome.ids for ind in archive] == [a.genome.ids]

    def test_new_dominator_evicts(self):
        old = _individual(("base", "straight", "drill"), (0,) * 7, (-1.0, 0.5, -100.0))
        better = _individual(("base", "elbow", "drill"), (0,) * 7, (-0.5, 0.6, -90.0))
        archive = update_archive([], [old])
        archive = update_archive(archive, [better])
        assert [ind.genome.ids for ind in archive] == [better.genome.ids]

    def test_duplicate_genome_not_doubled(self):
        a = _individual(("base", "straight", "drill"), (0,) * 7, (-1.0, 0.5, -100.0))
        archive = update_archive([], [a])
        archive = update_archive(archive, [a])
        assert len(archive) == 1

    def test_equal_objectives_coexist(self):
        a = _individual(("base", "straight", "drill"), (0,) * 7, (-1.0, 0.0, -100.0))
        b = _individual(("base", "elbow", "drill"), (0,) * 7, (-1.0, 0.0, -100.0))
        assert len(update_archive([], [a, b])) == 2


class TestConfigValidation:
    def test_defaults_valid(self):
        cfg = GAConfig()
        assert cfg.population_size == 32
        assert cfg.generations == 50

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"population_size": 1},
            {"generations": -1},
            {"tournament_size": 0},
            {"crossover_rate": 1.5},
            {"max_sequence_length": 1},
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            GAConfig(**kwargs)

    def test_bad_mutation_rate(self):
        with pytest.raises(ConfigError):
            MutationRates(insert=-0.1)


class TestFitnessAssembly:
    def test_feasible_beats_infeasible(self):
        feas = FitnessSequence((0,) * 7, -3.0, 0.0)
        infeas = FitnessSequence((0, 0, 0, -0.01, 0, 0, 0), -0.0, math.inf)
        assert lexicographic_compare(feas.as_tuple(), infeas.as_tuple()) == 1

    def test_rank_breaks_tie_before_crowding(self):
        a = FitnessSequence((0,) * 7, -0.0, 0.1)
        b = FitnessSequence((0,) * 7, -1.0, math.inf)
        assert lexicographic_compare(a.as_tuple(), b.as_tuple()) == 1

    def test_crowding_last(self):
        a = FitnessSequence((0,) * 7, -1.0, 2.0)
        b = FitnessSequence((0,) * 7, -1.0, 1.0)
        assert lexicographic_compare(a.as_tuple(), b.as_tuple()) == 1

    def test_constraint_width_enforced(self):
        with pytest.raises(ValueError):
            FitnessSequence((0,) * 6, 0.0, 0.0)
