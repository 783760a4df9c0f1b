"""Experiment drivers: array design per type, sensitivity tables, MUSIC sweeps.

Array types:

* ``MER``: GA solution of maximal effective rank.
* ``MER-k``: GA solution whose effective rank is closest to that of the
  matching MER realization minus ``k``.
* ``random``: uniformly drawn distinct candidates.
"""

import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .beamformer import average_sensitivity
from .exceptions import HeadArrayError, InvalidArgumentError
from .placement import GaConfig, ga_optimize, random_selection, selection_rank, _resolve_indices

log = logging.getLogger(__name__)

ARRAY_TYPES = ("MER", "MER-1", "MER-5", "random")
_TYPE_CODES = {"MER": 0, "random": 1}


@dataclass(frozen=True)
class DesignedArray:
    array_type: str
    n_mics: int
    realization: int
    indices: tuple
    effective_rank: float
    fitness: float
    generations: int
    seed: int
    trace: tuple = ()


def rank_deficit(array_type):
    """0 for ``MER``, k for ``MER-k``, None for ``random``."""
    if array_type == "MER":
        return 0
    if array_type == "random":
        return None
    m = re.fullmatch(r"MER-(\d+(?:\.\d+)?)", array_type)
    if not m:
        raise InvalidArgumentError(f"unknown array type {array_type!r}")
    return float(m.group(1))


def derived_seed(seed, *key):
    """A 63-bit seed derived from a base seed and a tuple of non-negative ints."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def _type_code(array_type):
    if array_type in _TYPE_CODES:
        return _TYPE_CODES[array_type]
    return 2 + int(round(1000 * rank_deficit(array_type)))


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def design_arrays(
    db,
    sizes,
    realizations,
    array_types=ARRAY_TYPES,
    frequency_indices=None,
    direction_indices=None,
    config=None,
    seed=0,
    threads=1,
):
    """Design ``realizations`` arrays for every (type, size).

    Returns a dict ``(array_type, L) -> list[DesignedArray]``. Every run draws
    from a seed derived from (seed, type, L, realization), so the output is
    independent of ``threads``.
    """
    config = config or GaConfig()
    fidx, didx = _resolve_indices(db, frequency_indices, direction_indices)
    M = db.values.shape[0]
    for t in array_types:
        rank_deficit(t)
    targets = [t for t in array_types if t != "random"]
    if any(t != "MER" for t in targets) and "MER" not in targets:
        targets = ["MER"] + targets

    def run_ga(job):
        t, L, r, target = job
        s = derived_seed(seed, _type_code(t), L, r)
        res = ga_optimize(db, L, fidx, didx, target, replace(config, rng_seed=s))
        sel = res.selection
        return DesignedArray(
            t, L, r, sel.indices, sel.effective_rank, sel.fitness, res.generations, s,
            tuple(float(v) for v in res.trace),
        )

    out = {}
    for L in sizes:
        if "MER" in targets:
            jobs = [("MER", L, r, "max") for r in range(realizations)]
            out[("MER", L)] = _map(run_ga, jobs, threads)
            log.info("designed %d MER arrays with L=%d", realizations, L)
        for t in targets:
            if t == "MER":
                continue
            k = rank_deficit(t)
            jobs = [(t, L, r, out[("MER", L)][r].effective_rank - k) for r in range(realizations)]
            out[(t, L)] = _map(run_ga, jobs, threads)
            log.info("designed %d %s arrays with L=%d", realizations, t, L)
        if "random" in array_types:
            arrays = []
            for r in range(realizations):
                s = derived_seed(seed, _type_code("random"), L, r)
                idx = random_selection(M, L, np.random.default_rng(s))
                rank = selection_rank(db, idx, fidx, didx)
                arrays.append(DesignedArray("random", L, r, idx, rank, rank, 0, s, (rank,)))
            out[("random", L)] = arrays
    return {key: out[key] for key in sorted(out, key=lambda k: (k[1], _type_code(k[0])))
            if key[0] in array_types}


@dataclass(frozen=True)
class SensitivityRow:
    frequency_hz: float
    n_mics: int
    mean_sensitivity: dict  # array type -> mean T over realizations


def sensitivity_table(db, arrays, frequency_indices, look_direction_indices=None, sizes=None, threads=1):
    """Average sensitivity per (frequency, L, array type), averaged over realizations.

    Returns ``(rows, failures)``; a failing (frequency, L, type) cell has
    ``nan`` in its row and a message in ``failures``.
    """
    if look_direction_indices is None:
        group = "uniform" if "uniform" in db.direction_groups else None
        look_direction_indices = db.direction_indices(group)
    if sizes is None:
        sizes = sorted({L for _, L in arrays})
    types = []
    for t, _ in arrays:
        if t not in types:
            types.append(t)
    jobs = [(int(k), L) for k in frequency_indices for L in sizes]

    def run(job):
        k, L = job
        means, errors = {}, []
        for t in types:
            reals = arrays.get((t, L))
            if not reals:
                continue
            try:
                vals = [
                    average_sensitivity(db, a.indices, k, look_direction_indices)
                    for a in reals
                ]
                means[t] = float(np.mean(vals))
            except HeadArrayError as exc:
                means[t] = math.nan
                errors.append(f"f={db.frequencies.values[k]} Hz, L={L}, type={t}: {exc}")
        return SensitivityRow(db.frequencies.values[k], L, means), errors

    results = _map(run, jobs, threads)
    rows = [r for r, _ in results]
    failures = [e for _, errs in results for e in errs]
    return rows, failures


def ratio_db(numerator, denominator):
    if not (numerator > 0 and denominator > 0):
        return math.nan
    return 10.0 * math.log10(numerator / denominator)
