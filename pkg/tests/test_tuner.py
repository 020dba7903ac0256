import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cluspath.measures import MeasureVector
from cluspath.tuner import (
    DEFAULT_BOX,
    Individual,
    TunerConfig,
    closest_to_ideal,
    dominance_fitness,
    dominates,
    mutate,
    normalized_measures,
    path_relink,
    select_elite,
    tune,
)

from conftest import random_dataset


def _ind(*measures, genome=(0.0,) * 6):
    return Individual(genome, MeasureVector(*measures))


def test_dominates_examples():
    a = MeasureVector(1, 1, 1, 1)
    assert not dominates(a, a)
    assert dominates(a, MeasureVector(2, 2, 2, 2))
    assert not dominates(MeasureVector(1, 3, 1, 1), MeasureVector(2, 2, 2, 2))
    assert dominates(np.array([1, 2, 2, 2]), np.array([2, 2, 2, 2]))


def test_fitness_small_cases():
    pop = [_ind(1, 1, 1, 1)]
    assert dominance_fitness(pop) == [0]
    pop = [_ind(1, 1, 1, 1), _ind(2, 2, 2, 2)]
    assert dominance_fitness(pop) == [0, 1]
    assert [ind.fitness for ind in pop] == [0, 1]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_fitness_matches_pairwise_count(seed):
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, 4, (20, 4)).astype(float)  # integer grid, so ties occur
    pop = [_ind(*p) for p in pts]
    got = dominance_fitness(pop)
    want = []
    for j in range(20):
        count = 0
        for i in range(20):
            better_or_equal = all(pts[i][c] <= pts[j][c] for c in range(4))
            strictly = any(pts[i][c] < pts[j][c] for c in range(4))
            count += better_or_equal and strictly
        want.append(count)
    assert got == want


def _with_fitness(fits):
    pop = []
    for i, f in enumerate(fits):
        ind = _ind(i, 0, 0, 0)
        ind.fitness = f
        ind.uid = i
        pop.append(ind)
    return pop


def test_select_elite_examples():
    cfg = TunerConfig()
    pop = _with_fitness([0, 0, 0])
    assert select_elite(pop, cfg) == pop
    pop = _with_fitness([0] * 5 + [3, 1, 2, 5, 1, 4, 6, 2, 7, 9])
    survivors = select_elite(pop, cfg)
    assert len(survivors) == 6
    assert [s.uid for s in survivors] == [0, 1, 2, 3, 4, 6]  # first of the two fitness-1 members
    pop = _with_fitness([0, 0])
    assert len(select_elite(pop, cfg)) == 2


def test_select_elite_ceiling():
    cfg = TunerConfig()
    pop = _with_fitness([0] + [1] * 11)
    assert len(select_elite(pop, cfg)) == 1 + math.ceil(1.1)


def test_mutation_degenerate_box():
    box = [(0.3, 0.3)] * 6
    cfg = TunerConfig(search_box=tuple(box))
    parent = Individual((0.3,) * 6)
    for seed in range(5):
        assert mutate(parent, cfg, np.random.default_rng(seed)).genome == parent.genome


def test_mutation_changes_one_or_two_genes():
    cfg = TunerConfig()
    parent = Individual((0.0, 5e-4, 5.0, 500.0, 500.0, 500.0))
    a = mutate(parent, cfg, np.random.default_rng(3))
    b = mutate(parent, cfg, np.random.default_rng(3))
    assert a.genome == b.genome and a.measures is None
    for seed in range(200):
        child = mutate(parent, cfg, np.random.default_rng(seed))
        changed = sum(x != y for x, y in zip(child.genome, parent.genome))
        assert 1 <= changed <= 2
        for g, (lo, hi) in zip(child.genome, cfg.search_box):
            assert lo <= g <= hi


def test_mutated_alpha_is_uniform():
    box = ((-1.0, 1.0),) + tuple((0.5, 0.5) for _ in range(5))
    cfg = TunerConfig(search_box=box)
    parent = Individual((0.9, 0.5, 0.5, 0.5, 0.5, 0.5))
    rng = np.random.default_rng(0)
    alphas = []
    while len(alphas) < 1000:
        alpha = mutate(parent, cfg, rng).genome[0]
        if alpha != parent.genome[0]:
            alphas.append(alpha)
    assert abs(np.mean(alphas)) < 0.1


class _FixedWeights:
    def __init__(self, w):
        self.w = np.asarray(w)

    def uniform(self, lo, hi, size):
        return self.w[:size]


def test_path_relink_weight_convention():
    a = Individual((0.0, 0.0, 0.0, 0.0, 0.0, 0.0))
    b = Individual((1.0, 1.0, 1.0, 1.0, 1.0, 1.0))
    child = path_relink(a, b, TunerConfig(), _FixedWeights([0.25] * 6))
    assert child.genome == (0.25,) * 6


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=6, max_size=6), st.lists(st.floats(-10, 10), min_size=6, max_size=6),
       st.integers(0, 1000))
def test_path_relink_stays_in_hull(ga, gb, seed):
    a, b = Individual(tuple(ga)), Individual(tuple(gb))
    child = path_relink(a, b, TunerConfig(), np.random.default_rng(seed))
    for x, y, c in zip(ga, gb, child.genome):
        assert min(x, y) <= c <= max(x, y)
    assert path_relink(a, a, TunerConfig(), np.random.default_rng(seed)).genome == a.genome


def test_closest_to_ideal_examples():
    solo = _ind(3, 2, 1, 0)
    assert closest_to_ideal([solo]) is solo
    a, b = _ind(0, 0, 0, 1), _ind(1, 1, 1, 0)
    assert closest_to_ideal([a, b]) is a
    with pytest.raises(ValueError):
        closest_to_ideal([])


def test_constant_measure_normalizes_to_zero():
    pop = [_ind(1, 5, 0, 2), _ind(3, 5, 1, 0)]
    norm = normalized_measures(pop)
    assert np.all(norm[:, 1] == 0.0)
    assert norm.tolist() == [[0, 0, 0, 1], [1, 0, 1, 0]]


def test_infinite_measures_excluded_from_normalization():
    pop = [_ind(1, 1, 1, 1), _ind(3, 3, 3, 3), Individual((0.0,) * 6, MeasureVector.worst())]
    norm = normalized_measures(pop)
    assert norm[1].tolist() == [1, 1, 1, 1] and np.all(np.isinf(norm[2]))


def test_config_validation():
    for kwargs in (dict(population_size=0), dict(max_generations=0), dict(mutation_fraction=1.5),
                   dict(search_box=((-2.0, 1.0),) + DEFAULT_BOX[1:]), dict(search_box=DEFAULT_BOX[:5]),
                   dict(search_box=((0.5, 0.0),) + DEFAULT_BOX[1:])):
        with pytest.raises(ValueError):
            TunerConfig(**kwargs)


# tune ---------------------------------------------------------------------------

class CountingStub:
    """Four measures from the genome, scaled into [0, 1]; counts calls per genome."""

    def __init__(self):
        self.calls = {}

    def __call__(self, genome):
        self.calls[tuple(genome)] = self.calls.get(tuple(genome), 0) + 1
        box = np.array(DEFAULT_BOX)
        x = (np.asarray(genome) - box[:, 0]) / (box[:, 1] - box[:, 0])
        return MeasureVector(x[0], 1 - x[0] + x[1], x[2] * x[1], abs(x[3] - 0.5))


def test_single_generation_reports_initial_front():
    stub = CountingStub()
    res = tune(None, TunerConfig(population_size=15, max_generations=1, seed=2, k=3), evaluator=stub)
    assert len(res.history) == 1 and res.evaluations == 15
    fits = dominance_fitness(res.population)
    assert sorted(ind.uid for ind in res.front) == sorted(ind.uid for ind, f in zip(res.population, fits) if f == 0)


def test_tune_is_deterministic():
    runs = [tune(None, TunerConfig(population_size=12, max_generations=6, seed=5, k=3), evaluator=CountingStub())
            for _ in range(2)]
    assert runs[0].best == runs[1].best
    assert [i.genome for i in runs[0].front] == [i.genome for i in runs[1].front]
    assert runs[0].history == runs[1].history


def test_tune_invariants():
    stub = CountingStub()
    seen = []

    def snapshot(generation, population):
        seen.append([(ind.uid, ind.fitness) for ind in population])

    cfg = TunerConfig(population_size=20, max_generations=8, seed=1, k=3)
    res = tune(None, cfg, evaluator=stub, on_generation=snapshot)
    assert all(v == 1 for v in stub.calls.values())
    assert res.evaluations == sum(h["new_evaluations"] for h in res.history) == len(stub.calls)
    for before, after in zip(seen, seen[1:]):
        assert len(after) == cfg.population_size
        after_uids = {uid for uid, _ in after}
        assert {uid for uid, f in before if f == 0} <= after_uids
    front = [ind.measures for ind in res.front]
    assert not any(dominates(a, b) for a in front for b in front)
    assert res.best_individual in res.front


def test_best_distance_non_increasing_under_fixed_normalization():
    stub = CountingStub()
    pops = []
    cfg = TunerConfig(population_size=20, max_generations=10, seed=4, k=3)
    tune(None, cfg, evaluator=stub, on_generation=lambda g, pop: pops.append(list(pop)))
    everyone = {id(ind): ind for pop in pops for ind in pop}
    M = np.array([ind.measures.as_array() for ind in everyone.values()])
    lo, span = M.min(axis=0), np.where(np.ptp(M, axis=0) > 0, np.ptp(M, axis=0), 1.0)
    best = [min(np.linalg.norm((ind.measures.as_array() - lo) / span) for ind in pop if ind.fitness == 0)
            for pop in pops]
    assert all(b <= a + 1e-12 for a, b in zip(best, best[1:]))


def test_failed_evaluations_get_worst_measures():
    failures = []

    def flaky(genome):
        if genome[0] > 0.5:
            failures.append(genome)
            raise ValueError("solver exploded")
        return MeasureVector(abs(genome[0]), 1.0, 1.0, 1.0)

    seen = []
    res = tune(None, TunerConfig(population_size=10, max_generations=3, seed=0, k=3), evaluator=flaky,
               on_generation=lambda g, pop: seen.extend(pop))
    assert failures
    assert all(np.isinf(ind.measures.as_array()).all() for ind in seen if ind.genome in failures)
    assert all(np.isfinite(ind.measures.mdvar) for ind in res.front)


def test_tune_on_data_needs_dataset():
    with pytest.raises(ValueError):
        tune(None, TunerConfig(population_size=2, max_generations=1))


def test_tune_on_real_data_with_processes(monkeypatch):
    ds = random_dataset(0, p=4, n_obs=5, dim=2)
    cfg = TunerConfig(population_size=6, max_generations=2, seed=3, k=3)
    serial = tune(ds, cfg)
    monkeypatch.setenv("CLUSPATH_THREADS", "2")
    parallel = tune(ds, cfg)
    assert serial.best == parallel.best
    assert [i.measures for i in serial.population] == [i.measures for i in parallel.population]
