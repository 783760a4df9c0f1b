"""Microphone placement by effective-rank maximization.

Choosing L of M candidate positions is a subset-selection problem. A genetic
algorithm handles realistic sizes; exhaustive enumeration serves small
problems and as a reference.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import CapacityError, InvalidArgumentError
from .ghrtf import stack_ghrtf
from .rank import effective_rank
from .validation import check_indices

MAX_EXHAUSTIVE = 10**6


@dataclass(frozen=True)
class ArraySelection:
    """Distinct candidate indices (ascending) and their scores.

    ``fitness`` is the optimized objective; ``effective_rank`` is the
    effective rank of the stacked GHRTF matrix of the selection.
    """

    indices: tuple
    fitness: float
    effective_rank: float

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 20
    stall_generations: int = 50
    stall_tolerance: float = 1e-6
    max_generations: int = 500
    mutation_rate: float = None  # per gene; None means 1/L
    elitism_count: int = 1
    rng_seed: int = None

    def __post_init__(self):
        if self.population_size < 2:
            raise InvalidArgumentError("population_size must be >= 2")
        if self.stall_generations < 1 or self.max_generations < 1:
            raise InvalidArgumentError("generation counts must be >= 1")
        if not self.stall_tolerance > 0:
            raise InvalidArgumentError("stall_tolerance must be > 0")
        if not 0 <= self.elitism_count < self.population_size:
            raise InvalidArgumentError("elitism_count must be in [0, population_size)")
        if self.mutation_rate is not None and not 0 <= self.mutation_rate <= 1:
            raise InvalidArgumentError("mutation_rate must be in [0, 1]")


@dataclass(frozen=True)
class GaResult:
    selection: ArraySelection
    trace: np.ndarray = field(repr=False)
    generations: int
    evaluations: int


def _objective(rank, target):
    if target is None or target == "max":
        return rank
    return -abs(rank - float(target))


def _check_target(target):
    if target is None or target == "max":
        return "max"
    if isinstance(target, bool):
        raise InvalidArgumentError(f"invalid target {target!r}")
    try:
        r = float(target)
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"target must be 'max' or a rank value, got {target!r}") from None
    if not math.isfinite(r):
        raise InvalidArgumentError("target rank must be finite")
    return r


def selection_rank(db, indices, frequency_indices, direction_indices):
    """Effective rank of the stacked GHRTF matrix of a selection."""
    H = stack_ghrtf(db, indices, frequency_indices, direction_indices)
    return effective_rank(H).effective_rank


def fitness(db, indices, frequency_indices, direction_indices, target="max"):
    """Objective of a selection: its effective rank, or ``-|R - target|``.

    Raises
    ------
    InvalidArgumentError
        On duplicate or out-of-range indices.
    """
    target = _check_target(target)
    rank = selection_rank(db, indices, frequency_indices, direction_indices)
    return _objective(rank, target)


class _Evaluator:
    """Caches effective ranks by candidate set (row order does not change R)."""

    def __init__(self, db, frequency_indices, direction_indices, target):
        self.db = db
        self.fidx = frequency_indices
        self.didx = direction_indices
        self.target = target
        self.cache = {}

    def rank(self, genome):
        key = tuple(sorted(int(g) for g in genome))
        if key not in self.cache:
            self.cache[key] = selection_rank(self.db, key, self.fidx, self.didx)
        return self.cache[key]

    def __call__(self, genome):
        return _objective(self.rank(genome), self.target)

    def selection(self, genome):
        key = tuple(sorted(int(g) for g in genome))
        return ArraySelection(key, self(key), self.rank(key))


def _resolve_indices(db, frequency_indices, direction_indices):
    M, K, D = db.values.shape
    if frequency_indices is None:
        frequency_indices = range(K)
    if direction_indices is None:
        group = "uniform" if "uniform" in db.direction_groups else None
        direction_indices = db.direction_indices(group)
    fidx = check_indices(list(frequency_indices), K, "frequency_indices")
    didx = check_indices(list(direction_indices), D, "direction_indices")
    return fidx, didx


def _check_size(n_mics, M):
    if isinstance(n_mics, bool) or not isinstance(n_mics, (int, np.integer)) or n_mics < 1:
        raise InvalidArgumentError(f"number of microphones must be a positive integer, got {n_mics!r}")
    if n_mics > M:
        raise InvalidArgumentError(f"cannot select {n_mics} of {M} candidates")
    return int(n_mics)


def _better(fa, ga, fb, gb):
    """True if (fa, ga) ranks above (fb, gb): higher fitness, then lexicographically smaller."""
    return fa > fb or (fa == fb and tuple(ga) < tuple(gb))


def _repair(child, parents, M, rng):
    """Replace duplicate genes, preferring unused genes from the parents."""
    seen = set()
    dup_positions = []
    for pos, g in enumerate(child):
        if g in seen:
            dup_positions.append(pos)
        seen.add(g)
    if not dup_positions:
        return child
    pool = sorted(set(parents) - seen)
    for pos in dup_positions:
        if pool:
            pick = pool.pop(int(rng.integers(len(pool))))
        else:
            unused = np.setdiff1d(np.arange(M), child)
            pick = int(unused[rng.integers(unused.size)])
        child[pos] = pick
        seen.add(pick)
    return child


def ga_optimize(db, n_mics, frequency_indices=None, direction_indices=None, target="max", config=None):
    """Genetic-algorithm search for the selection maximizing the fitness.

    Operators: random distinct initial genomes, binary tournament selection,
    uniform crossover with duplicate repair, per-gene mutation to an unused
    candidate, and elitism. The run stops once the mean absolute change of
    the best fitness over the last ``stall_generations`` generations drops
    below ``stall_tolerance``, or after ``max_generations``.

    Returns
    -------
    GaResult
        Best-ever selection, the per-generation best-fitness trace
        (generation 0 is the initial population), generation and evaluation
        counts.
    """
    config = config or GaConfig()
    target = _check_target(target)
    M = db.values.shape[0]
    L = _check_size(n_mics, M)
    fidx, didx = _resolve_indices(db, frequency_indices, direction_indices)
    evaluate = _Evaluator(db, fidx, didx, target)
    rng = np.random.default_rng(config.rng_seed)

    if L == M:
        sel = evaluate.selection(range(M))
        return GaResult(sel, np.array([sel.fitness]), 0, 1)

    P = config.population_size
    rate = 1.0 / L if config.mutation_rate is None else config.mutation_rate
    pop = [sorted(rng.choice(M, L, replace=False).tolist()) for _ in range(P)]
    fit = [evaluate(g) for g in pop]

    def best_of(pop, fit):
        b = 0
        for i in range(1, len(pop)):
            if _better(fit[i], pop[i], fit[b], pop[b]):
                b = i
        return b

    b = best_of(pop, fit)
    best_genome, best_fit = pop[b], fit[b]
    trace = [best_fit]

    def tournament():
        i, j = rng.integers(P, size=2)
        return pop[i] if _better(fit[i], pop[i], fit[j], pop[j]) else pop[j]

    generations = 0
    while generations < config.max_generations:
        S = config.stall_generations
        if len(trace) > S and np.mean(np.abs(np.diff(trace[-(S + 1):]))) < config.stall_tolerance:
            break
        ranked = sorted(range(P), key=lambda i: (-fit[i], pop[i]))
        new_pop = [list(pop[i]) for i in ranked[: config.elitism_count]]
        while len(new_pop) < P:
            p1, p2 = tournament(), tournament()
            mask = rng.random(L) < 0.5
            child = [a if m else c for a, c, m in zip(p1, p2, mask)]
            child = _repair(child, p1 + p2, M, rng)
            for pos in np.flatnonzero(rng.random(L) < rate):
                unused = np.setdiff1d(np.arange(M), child)
                child[pos] = int(unused[rng.integers(unused.size)])
            new_pop.append(sorted(child))
        pop = new_pop
        fit = [evaluate(g) for g in pop]
        b = best_of(pop, fit)
        if _better(fit[b], pop[b], best_fit, best_genome):
            best_genome, best_fit = pop[b], fit[b]
        trace.append(best_fit)
        generations += 1

    return GaResult(
        selection=evaluate.selection(best_genome),
        trace=np.array(trace),
        generations=generations,
        evaluations=len(evaluate.cache),
    )


def exhaustive_search(db, n_mics, frequency_indices=None, direction_indices=None, target="max"):
    """Exact optimum by enumerating all C(M, L) subsets; ties go to the lexicographically first.

    Raises
    ------
    CapacityError
        If C(M, L) exceeds one million.
    """
    target = _check_target(target)
    M = db.values.shape[0]
    L = _check_size(n_mics, M)
    count = math.comb(M, L)
    if count > MAX_EXHAUSTIVE:
        raise CapacityError(f"exhaustive search over C({M}, {L}) = {count} subsets exceeds {MAX_EXHAUSTIVE}")
    fidx, didx = _resolve_indices(db, frequency_indices, direction_indices)
    evaluate = _Evaluator(db, fidx, didx, target)
    best, best_fit = None, -math.inf
    for combo in itertools.combinations(range(M), L):
        f = evaluate(combo)
        if f > best_fit:
            best, best_fit = combo, f
    return evaluate.selection(best)


def random_selection(n_candidates, n_mics, rng):
    """Uniformly random distinct selection, ascending."""
    return tuple(sorted(int(i) for i in rng.choice(n_candidates, n_mics, replace=False)))


class PlacementOptimizer(BaseEstimator):
    """Select microphone positions from a GHRTF database.

    ``fit(db)`` searches for the selection of ``n_mics`` candidates whose
    stacked GHRTF matrix has maximal effective rank (``target='max'``) or an
    effective rank closest to a given value.

    Parameters
    ----------
    n_mics : int
    target : 'max' or float
    method : {'ga', 'exhaustive'}
    frequency_indices, direction_indices : sequence of int, optional
        Defaults are all frequencies and the database's ``uniform`` direction
        group (all directions if absent).
    population_size, stall_generations, stall_tolerance, max_generations,
    mutation_rate, elitism_count :
        Genetic-algorithm settings, see :class:`GaConfig`.
    random_state : int, optional

    Attributes
    ----------
    selection_ : tuple of int
    fitness_ : float
    effective_rank_ : float
    trace_ : ndarray
        Best fitness per generation (a single entry for exhaustive search).
    n_generations_ : int
    """

    def __init__(
        self,
        n_mics=2,
        target="max",
        method="ga",
        frequency_indices=None,
        direction_indices=None,
        population_size=20,
        stall_generations=50,
        stall_tolerance=1e-6,
        max_generations=500,
        mutation_rate=None,
        elitism_count=1,
        random_state=None,
    ):
        self.n_mics = n_mics
        self.target = target
        self.method = method
        self.frequency_indices = frequency_indices
        self.direction_indices = direction_indices
        self.population_size = population_size
        self.stall_generations = stall_generations
        self.stall_tolerance = stall_tolerance
        self.max_generations = max_generations
        self.mutation_rate = mutation_rate
        self.elitism_count = elitism_count
        self.random_state = random_state

    def fit(self, X, y=None):
        db = X
        fidx, didx = _resolve_indices(db, self.frequency_indices, self.direction_indices)
        if self.method == "ga":
            config = GaConfig(
                population_size=self.population_size,
                stall_generations=self.stall_generations,
                stall_tolerance=self.stall_tolerance,
                max_generations=self.max_generations,
                mutation_rate=self.mutation_rate,
                elitism_count=self.elitism_count,
                rng_seed=self.random_state,
            )
            result = ga_optimize(db, self.n_mics, fidx, didx, self.target, config)
            sel, self.trace_, self.n_generations_ = result.selection, result.trace, result.generations
        elif self.method == "exhaustive":
            sel = exhaustive_search(db, self.n_mics, fidx, didx, self.target)
            self.trace_, self.n_generations_ = np.array([sel.fitness]), 0
        else:
            raise InvalidArgumentError(f"unknown method {self.method!r}")
        self.selection_ = sel.indices
        self.fitness_ = sel.fitness
        self.effective_rank_ = sel.effective_rank
        self.frequency_indices_, self.direction_indices_ = fidx, didx
        return self

    def transform(self, X):
        """Stacked GHRTF matrix of the fitted selection in database ``X``."""
        check_is_fitted(self, "selection_")
        return stack_ghrtf(X, self.selection_, self.frequency_indices_, self.direction_indices_)

    def score(self, X, y=None):
        """Effective rank of the fitted selection evaluated on ``X``."""
        return effective_rank(self.transform(X)).effective_rank
