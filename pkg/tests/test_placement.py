import itertools
import math

import numpy as np
import pytest
from sklearn.base import clone

from headarray.exceptions import CapacityError, InvalidArgumentError
from headarray.ghrtf import CandidatePositionSet, FrequencyGrid, GhrtfDatabase, direction_grid
from headarray.placement import (
    GaConfig,
    PlacementOptimizer,
    exhaustive_search,
    fitness,
    ga_optimize,
    random_selection,
    selection_rank,
)
from headarray.rank import effective_rank_map

ALL_F = range(6)
ALL_D = range(40)


def rank_oracle(H):
    s = np.linalg.svd(H, compute_uv=False)
    s = s[s > 1e-12 * s[0]]
    p = s / s.sum()
    return math.exp(-np.sum(p * np.log(p)))


def brute_force(db, L, fidx, didx):
    best, best_r = None, -1.0
    for combo in itertools.combinations(range(db.values.shape[0]), L):
        rows = [db.values[m, k, :][list(didx)] for k in fidx for m in combo]
        r = rank_oracle(np.array(rows))
        if r > best_r:
            best, best_r = combo, r
    return best, best_r


class TestFitness:
    def test_single_mic_matches_map(self, toy_db):
        ranks = effective_rank_map(toy_db, ALL_F, ALL_D)
        for m in (0, 4, 11):
            assert fitness(toy_db, [m], ALL_F, ALL_D) == pytest.approx(ranks[m], rel=1e-12)

    def test_order_independent(self, toy_db):
        a = fitness(toy_db, [1, 7, 3], ALL_F, ALL_D)
        assert fitness(toy_db, [7, 3, 1], ALL_F, ALL_D) == pytest.approx(a, rel=1e-12)

    def test_target_objective(self, toy_db):
        r = selection_rank(toy_db, [1, 7, 3], ALL_F, ALL_D)
        assert fitness(toy_db, [1, 7, 3], ALL_F, ALL_D, target=r - 2) == pytest.approx(-2.0)
        assert fitness(toy_db, [1, 7, 3], ALL_F, ALL_D, target=r + 0.5) == pytest.approx(-0.5)

    def test_invalid(self, toy_db):
        with pytest.raises(InvalidArgumentError):
            fitness(toy_db, [1, 1], ALL_F, ALL_D)
        with pytest.raises(InvalidArgumentError):
            fitness(toy_db, [12], ALL_F, ALL_D)
        with pytest.raises(InvalidArgumentError):
            fitness(toy_db, [1, 2], ALL_F, ALL_D, target="best")


class TestExhaustive:
    def test_matches_nested_loops(self, toy_db):
        sub = GhrtfDatabase(
            CandidatePositionSet(toy_db.candidates.directions[:6], toy_db.candidates.radii[:6], 0.0875),
            toy_db.frequencies,
            toy_db.directions,
            toy_db.values[:6],
        )
        sel = exhaustive_search(sub, 2, ALL_F, ALL_D)
        best, best_r = brute_force(sub, 2, ALL_F, ALL_D)
        assert sel.indices == best
        assert sel.effective_rank == pytest.approx(best_r, rel=1e-12)

    def test_all_candidates(self, toy_db):
        sel = exhaustive_search(toy_db, 12, ALL_F, ALL_D)
        assert sel.indices == tuple(range(12))

    def test_fixed_point(self, toy_db):
        sel = exhaustive_search(toy_db, 3, ALL_F, ALL_D)
        for pos in range(3):
            for m in set(range(12)) - set(sel.indices):
                swapped = list(sel.indices)
                swapped[pos] = m
                assert fitness(toy_db, swapped, ALL_F, ALL_D) <= sel.fitness + 1e-12

    def test_dominant_candidate(self):
        # four nearly collinear candidates and one informative one: every optimum uses it
        rng = np.random.default_rng(3)
        base = rng.standard_normal((1, 3, 20)) + 1j * rng.standard_normal((1, 3, 20))
        values = np.repeat(base, 5, axis=0) * (1 + 1e-3 * rng.standard_normal((5, 1, 1)))
        values[3] = rng.standard_normal((3, 20)) + 1j * rng.standard_normal((3, 20))
        db = GhrtfDatabase(
            CandidatePositionSet.on_sphere(5),
            FrequencyGrid((100.0, 200.0, 300.0)),
            tuple(direction_grid("sphere_uniform", 20)),
            values,
        )
        assert 3 in exhaustive_search(db, 2).indices

    def test_capacity_guard(self):
        db = GhrtfDatabase(
            CandidatePositionSet.on_sphere(242),
            FrequencyGrid((100.0,)),
            tuple(direction_grid("sphere_uniform", 4)),
            np.ones((242, 1, 4), dtype=complex),
        )
        with pytest.raises(CapacityError):
            exhaustive_search(db, 5)

    def test_invalid_size(self, toy_db):
        with pytest.raises(InvalidArgumentError):
            exhaustive_search(toy_db, 13)
        with pytest.raises(InvalidArgumentError):
            exhaustive_search(toy_db, 0)


class TestGa:
    def test_finds_exhaustive_optimum(self, toy_db):
        best = exhaustive_search(toy_db, 3, ALL_F, ALL_D)
        hits = sum(
            ga_optimize(toy_db, 3, ALL_F, ALL_D, config=GaConfig(rng_seed=s)).selection.indices == best.indices
            for s in range(10)
        )
        assert hits >= 8

    def test_all_candidates_returns_immediately(self, toy_db):
        res = ga_optimize(toy_db, 12, ALL_F, ALL_D)
        assert res.selection.indices == tuple(range(12))
        assert res.generations == 0

    def test_trace_non_decreasing(self, toy_db):
        res = ga_optimize(toy_db, 4, ALL_F, ALL_D, config=GaConfig(rng_seed=5))
        assert np.all(np.diff(res.trace) >= 0)
        assert res.trace[-1] == res.selection.fitness
        assert len(res.trace) == res.generations + 1

    def test_reproducible(self, toy_db):
        a = ga_optimize(toy_db, 4, ALL_F, ALL_D, config=GaConfig(rng_seed=11))
        b = ga_optimize(toy_db, 4, ALL_F, ALL_D, config=GaConfig(rng_seed=11))
        assert a.selection == b.selection
        assert np.array_equal(a.trace, b.trace)

    def test_stall_rule_and_cap(self, toy_db):
        res = ga_optimize(toy_db, 3, ALL_F, ALL_D, config=GaConfig(rng_seed=0, stall_generations=5))
        assert 5 <= res.generations < 500
        capped = ga_optimize(toy_db, 3, ALL_F, ALL_D, config=GaConfig(rng_seed=0, max_generations=3))
        assert capped.generations == 3

    def test_selection_valid(self, toy_db):
        sel = ga_optimize(toy_db, 5, ALL_F, ALL_D, config=GaConfig(rng_seed=2)).selection
        assert len(set(sel.indices)) == 5
        assert list(sel.indices) == sorted(sel.indices)
        assert all(0 <= i < 12 for i in sel.indices)

    def test_target_rank(self, toy_db):
        target = exhaustive_search(toy_db, 3, ALL_F, ALL_D).effective_rank - 1.0
        sel = ga_optimize(toy_db, 3, ALL_F, ALL_D, target=target, config=GaConfig(rng_seed=3)).selection
        assert abs(sel.effective_rank - target) < 0.2

    def test_beats_random(self, small_db):
        fidx = range(0, 51, 10)
        didx = small_db.direction_indices("uniform")
        wins = 0
        for s in range(100):
            ga = ga_optimize(small_db, 3, fidx, didx, config=GaConfig(rng_seed=s, stall_generations=10)).selection
            rnd = random_selection(30, 3, np.random.default_rng(1000 + s))
            wins += ga.effective_rank >= selection_rank(small_db, rnd, fidx, didx)
        assert wins >= 95

    def test_optimal_pairs_are_spread_out(self, small_db):
        # optimized pairs sit further apart than the median random pair
        fidx = range(0, 51, 10)
        didx = small_db.direction_indices("uniform")
        dirs = small_db.candidates.directions
        rng = np.random.default_rng(0)
        random_sep = np.median(
            [dirs[a].angle_to(dirs[b]) for a, b in (random_selection(30, 2, rng) for _ in range(1000))]
        )
        seps = []
        for s in range(100):
            a, b = ga_optimize(small_db, 2, fidx, didx, config=GaConfig(rng_seed=s)).selection.indices
            seps.append(dirs[a].angle_to(dirs[b]))
        assert np.mean(np.array(seps) > random_sep) >= 0.9

    def test_invalid_config(self):
        with pytest.raises(InvalidArgumentError):
            GaConfig(population_size=1)
        with pytest.raises(InvalidArgumentError):
            GaConfig(mutation_rate=2.0)
        with pytest.raises(InvalidArgumentError):
            GaConfig(elitism_count=20)


class TestEstimator:
    def test_exhaustive_fit(self, toy_db):
        est = PlacementOptimizer(n_mics=3, method="exhaustive").fit(toy_db)
        ref = exhaustive_search(toy_db, 3)
        assert est.selection_ == ref.indices
        assert est.effective_rank_ == pytest.approx(ref.effective_rank)
        H = est.transform(toy_db)
        assert H.shape == (3 * 6, 40)
        assert est.score(toy_db) == pytest.approx(ref.effective_rank)

    def test_ga_fit(self, toy_db):
        est = PlacementOptimizer(n_mics=3, random_state=0).fit(toy_db)
        assert len(est.selection_) == 3
        assert est.n_generations_ == len(est.trace_) - 1

    def test_params_and_clone(self):
        est = PlacementOptimizer(n_mics=4, target=7.5, random_state=3)
        params = est.get_params()
        assert params["n_mics"] == 4 and params["target"] == 7.5 and params["random_state"] == 3
        assert clone(est).get_params() == params

    def test_unknown_method(self, toy_db):
        with pytest.raises(InvalidArgumentError):
            PlacementOptimizer(n_mics=2, method="anneal").fit(toy_db)
