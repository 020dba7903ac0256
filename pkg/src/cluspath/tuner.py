"""Evolutionary Pareto search over the six ClusPath parameters.

Fitness is the number of population members that dominate an individual.
Each generation keeps the whole non-dominated front plus the least
dominated tenth of the rest, then refills the population with mutated
copies of a few survivors and path-relinked offspring.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .core import Dataset, HyperParams, Prototype
from .measures import MeasureVector, evaluate
from .solver import SolverConfig, SolverError, fit, init_prototypes

logger = logging.getLogger(__name__)

GENES = ("alpha", "beta", "delta", "lambda1", "lambda2", "lambda3")
DEFAULT_BOX = ((-1.0, 1.0), (0.0, 1e-3), (0.1, 10.0), (0.0, 1000.0), (0.0, 1000.0), (0.0, 1000.0))


@dataclass
class Individual:
    genome: tuple[float, ...]
    measures: MeasureVector | None = None
    fitness: int | None = None
    uid: int = -1


@dataclass(frozen=True)
class TunerConfig:
    population_size: int = 100
    max_generations: int = 100
    dominated_carryover: float = 0.10
    mutation_fraction: float = 0.05
    search_box: tuple = DEFAULT_BOX
    seed: int = 0
    k: int = 5

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population_size must be positive")
        if self.max_generations < 1:
            raise ValueError("max_generations must be positive")
        for name in ("dominated_carryover", "mutation_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if len(self.search_box) != len(GENES):
            raise ValueError(f"search_box needs {len(GENES)} (lo, hi) pairs")
        for name, (lo, hi) in zip(GENES, self.search_box):
            if lo > hi:
                raise ValueError(f"empty search interval for {name}")
        lo, hi = self.search_box[0]
        if lo < -1 or hi > 1:
            raise ValueError("alpha interval must stay inside [-1, 1]")


@dataclass
class TuneResult:
    best: HyperParams
    best_individual: Individual
    front: list[Individual]
    population: list[Individual]
    history: list[dict] = field(default_factory=list)
    evaluations: int = 0


# Pareto machinery -----------------------------------------------------------

def dominates(a: MeasureVector | np.ndarray, b: MeasureVector | np.ndarray) -> bool:
    a = a.as_array() if isinstance(a, MeasureVector) else np.asarray(a)
    b = b.as_array() if isinstance(b, MeasureVector) else np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def dominance_fitness(pop: Sequence[Individual]) -> list[int]:
    """Set and return, for each individual, how many others dominate it."""
    M = np.array([ind.measures.as_array() for ind in pop])
    le = np.all(M[:, None, :] <= M[None, :, :], axis=2)
    lt = np.any(M[:, None, :] < M[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    counts = dom.sum(axis=0)
    for ind, c in zip(pop, counts):
        ind.fitness = int(c)
    return [int(c) for c in counts]


def select_elite(pop: Sequence[Individual], cfg: TunerConfig) -> list[Individual]:
    front = [ind for ind in pop if ind.fitness == 0]
    dominated = [ind for ind in pop if ind.fitness != 0]
    n_keep = math.ceil(cfg.dominated_carryover * len(dominated))
    # stable sort: equal fitness keeps population order
    kept = sorted(dominated, key=lambda ind: ind.fitness)[:n_keep]
    keep_ids = {id(ind) for ind in front + kept}
    return [ind for ind in pop if id(ind) in keep_ids]


def mutate(ind: Individual, cfg: TunerConfig, rng: np.random.Generator) -> Individual:
    """Copy with one or two genes redrawn uniformly inside their interval."""
    genome = list(ind.genome)
    n_genes = int(rng.integers(1, 3))
    for g in rng.choice(len(genome), size=n_genes, replace=False):
        lo, hi = cfg.search_box[g]
        genome[g] = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    return Individual(tuple(genome))


def path_relink(parent_a: Individual, parent_b: Individual, cfg: TunerConfig,
                rng: np.random.Generator) -> Individual:
    """Per-gene random convex combination; ``w`` weighs ``parent_b``."""
    a = np.asarray(parent_a.genome)
    b = np.asarray(parent_b.genome)
    w = rng.uniform(0.0, 1.0, size=a.size)
    child = (1.0 - w) * a + w * b
    # keep the child inside the parents' hull despite rounding
    child = np.clip(child, np.minimum(a, b), np.maximum(a, b))
    return Individual(tuple(float(v) for v in child))


def normalized_measures(pop: Sequence[Individual]) -> np.ndarray:
    """Min-max normalize each measure over ``pop``; infinite entries stay infinite."""
    M = np.array([ind.measures.as_array() for ind in pop])
    out = np.zeros_like(M)
    for c in range(M.shape[1]):
        col = M[:, c]
        finite = np.isfinite(col)
        if not finite.any():
            out[:, c] = np.inf
            continue
        lo, hi = col[finite].min(), col[finite].max()
        out[:, c] = np.where(finite, (col - lo) / (hi - lo) if hi > lo else 0.0, np.inf)
    return out


def ideal_distances(front: Sequence[Individual], reference: Sequence[Individual] | None = None) -> np.ndarray:
    reference = list(front) if reference is None else list(reference)
    norm = normalized_measures(reference)
    index = {id(ind): i for i, ind in enumerate(reference)}
    rows = np.array([norm[index[id(ind)]] for ind in front])
    return np.sqrt(np.sum(rows ** 2, axis=1))


def closest_to_ideal(front: Sequence[Individual], reference: Sequence[Individual] | None = None) -> Individual:
    """Front member nearest the origin after normalization over ``reference``."""
    if not front:
        raise ValueError("empty front")
    dist = ideal_distances(front, reference)
    return front[int(np.argmin(dist))]


# evaluation -----------------------------------------------------------------

class ClusPathEvaluator:
    """Fit ClusPath with a genome and score the result; picklable for process pools."""

    def __init__(self, ds: Dataset, k: int, solver_cfg: SolverConfig, init: Sequence[Prototype]):
        self.ds, self.k, self.solver_cfg, self.init = ds, k, solver_cfg, list(init)

    def __call__(self, genome) -> MeasureVector:
        hp = HyperParams.from_genome(genome, self.k)
        model = fit(self.ds, hp, self.solver_cfg, init=self.init)
        return evaluate(model, self.ds)


def _safe_eval(evaluator, genome) -> MeasureVector:
    try:
        return evaluator(genome)
    except (SolverError, ValueError, FloatingPointError) as exc:
        logger.warning("evaluation failed for genome %s: %s", genome, exc)
        return MeasureVector.worst()


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CLUSPATH_THREADS", "1")))
    except ValueError:
        return 1


def _evaluate_all(evaluator, individuals: list[Individual]) -> None:
    todo = [ind for ind in individuals if ind.measures is None]
    if not todo:
        return
    threads = min(_threads(), len(todo))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            # map preserves submission order
            results = list(pool.map(_safe_eval, [evaluator] * len(todo), [ind.genome for ind in todo]))
    else:
        results = [_safe_eval(evaluator, ind.genome) for ind in todo]
    for ind, mv in zip(todo, results):
        ind.measures = mv


def tune(ds: Dataset | None, cfg: TunerConfig, solver_cfg: SolverConfig | None = None,
         evaluator: Callable | None = None, init: Sequence[Prototype] | None = None,
         on_generation: Callable | None = None) -> TuneResult:
    """Approximate the Pareto front and pick the member closest to the ideal point.

    ``evaluator`` maps a genome to a :class:`MeasureVector`; by default it
    fits ClusPath on ``ds`` from one shared set of initial prototypes.
    ``on_generation(generation, population)`` is called once fitness values
    of a generation are known.
    """
    solver_cfg = solver_cfg or SolverConfig(seed=cfg.seed)
    if evaluator is None:
        if ds is None:
            raise ValueError("a dataset is required without a custom evaluator")
        if init is None:
            init = init_prototypes(ds, cfg.k, solver_cfg.seed)
        evaluator = ClusPathEvaluator(ds, cfg.k, solver_cfg, init)
    rng = np.random.default_rng(cfg.seed)
    next_uid = 0

    def fresh(ind: Individual) -> Individual:
        nonlocal next_uid
        ind.uid = next_uid
        next_uid += 1
        return ind

    lows = np.array([lo for lo, _ in cfg.search_box])
    highs = np.array([hi for _, hi in cfg.search_box])
    population = [fresh(Individual(tuple(float(v) for v in rng.uniform(lows, highs))))
                  for _ in range(cfg.population_size)]
    evaluations = 0
    history: list[dict] = []

    def evaluate_new(pop):
        nonlocal evaluations
        pending = sum(ind.measures is None for ind in pop)
        _evaluate_all(evaluator, pop)
        evaluations += pending
        return pending

    generation = 1
    new_runs = evaluate_new(population)
    while True:
        dominance_fitness(population)
        front = [ind for ind in population if ind.fitness == 0]
        best = closest_to_ideal(front, population)
        history.append({
            "generation": generation,
            "front_size": len(front),
            "best_distance": float(ideal_distances([best], population)[0]),
            "best_uid": best.uid,
            "new_evaluations": new_runs,
            "front_uids": [ind.uid for ind in front],
            "population_uids": [ind.uid for ind in population],
        })
        logger.info("generation %d: front %d, best distance %.4g", generation, len(front),
                    history[-1]["best_distance"])
        if on_generation is not None:
            on_generation(generation, population)
        if len(front) == len(population) or generation >= cfg.max_generations:
            break
        survivors = select_elite(population, cfg)
        room = cfg.population_size - len(survivors)
        n_mut = min(math.ceil(cfg.mutation_fraction * len(survivors)), room)
        offspring = []
        if n_mut:
            for idx in rng.choice(len(survivors), size=n_mut, replace=False):
                offspring.append(fresh(mutate(survivors[idx], cfg, rng)))
        while len(survivors) + len(offspring) < cfg.population_size:
            if len(survivors) > 1:
                i, j = rng.choice(len(survivors), size=2, replace=False)
            else:
                i = j = 0
            offspring.append(fresh(path_relink(survivors[i], survivors[j], cfg, rng)))
        population = survivors + offspring
        generation += 1
        new_runs = evaluate_new(population)

    front = [ind for ind in population if ind.fitness == 0]
    best = closest_to_ideal(front, population)
    return TuneResult(
        best=HyperParams.from_genome(best.genome, cfg.k),
        best_individual=best,
        front=front,
        population=population,
        history=history,
        evaluations=evaluations,
    )
