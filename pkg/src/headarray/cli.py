"""Command-line interface.

Subcommands: gen-db, rank-map, optimize, sensitivity, music. Settings come
from built-in defaults, then an optional JSON ``--config`` file, then
explicit flags.
"""

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import experiments, reporting
from .exceptions import HeadArrayError
from .ghrtf import (
    DEFAULT_HEAD_RADIUS,
    DEFAULT_SPEED_OF_SOUND,
    CandidatePositionSet,
    FrequencyGrid,
    build_sphere_database,
    direction_grid,
    load_database,
    save_database,
)
from .music import MusicProtocol, run_music_cell
from .placement import GaConfig, exhaustive_search
from .rank import effective_rank_map

log = logging.getLogger("headarray")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2

COMMON_DEFAULTS = {"seed": 0, "out": ".", "threads": None, "db": "ghrtf.db"}
GA_DEFAULTS = {
    "population": 20,
    "stall_generations": 50,
    "stall_tolerance": 1e-6,
    "max_generations": 500,
}
DEFAULTS = {
    "gen-db": {
        "radius": DEFAULT_HEAD_RADIUS,
        "speed_of_sound": DEFAULT_SPEED_OF_SOUND,
        "frequencies": "0:100:5000",
        "candidates": 242,
        "uniform_directions": 240,
    },
    "rank-map": {"frequencies": None},
    "optimize": {
        "sizes": "2,3,5,10",
        "realizations": 100,
        "types": "MER",
        "design_frequencies": None,
        "exhaustive": False,
        **GA_DEFAULTS,
    },
    "sensitivity": {
        "sizes": "2,3,4,5,7,10",
        "realizations": 100,
        "types": "MER,MER-1,MER-5,random",
        "frequencies": None,
        "design_frequencies": None,
        "selections": None,
        **GA_DEFAULTS,
    },
    "music": {
        "frequencies": "100,200,400,800,1600,3200",
        "sizes": "2,3,4,5,7,10",
        "snrs": "-20,-10,0,10,20,40",
        "types": "MER,MER-1,MER-5,random",
        "realizations": 100,
        "trials": 30,
        "snapshots": 30,
        "design_frequencies": None,
        "selections": None,
        **GA_DEFAULTS,
    },
}


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}") from None


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated number list, got {text!r}") from None


def _str_list(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _frequency_indices(db, spec, drop_zero=False):
    """Database indices of the frequencies in ``spec`` (all when None)."""
    if spec is None:
        idx = list(range(len(db.frequencies)))
    else:
        idx = [db.frequency_index(f) for f in FrequencyGrid.parse(str(spec)).values]
    if drop_zero:
        idx = [k for k in idx if db.frequencies.values[k] != 0.0]
    return idx


def _add_common(p):
    p.add_argument("--db", help="database file (default ghrtf.db)")
    p.add_argument("--out", help="output directory (default .)")
    p.add_argument("--seed", type=int, help="base random seed (default 0)")
    p.add_argument("--config", help="JSON config file; explicit flags override it")
    p.add_argument("--threads", type=int, help="maximum worker threads (default: CPU count)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_ga(p):
    p.add_argument("--population", type=int, help="GA population size (default 20)")
    p.add_argument("--stall-generations", type=int, help="GA stall window (default 50)")
    p.add_argument("--stall-tolerance", type=float, help="GA stall tolerance (default 1e-6)")
    p.add_argument("--max-generations", type=int, help="GA generation cap (default 500)")


def _add_design(p):
    p.add_argument("--realizations", type=int, help="arrays per (type, size)")
    p.add_argument("--types", help="comma list from MER, MER-k, random")
    p.add_argument("--design-frequencies", help="frequencies (Hz) used in the fitness; default all")
    p.add_argument("--selections", help="selections JSON from `optimize` instead of designing here")
    _add_ga(p)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="headarray",
        description="Microphone-array design on a head surface by effective-rank maximization.",
        argument_default=None,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-db", help="generate a rigid-sphere GHRTF database")
    _add_common(p)
    p.add_argument("--radius", type=float, help="head radius in metres (default 0.0875)")
    p.add_argument("--speed-of-sound", type=float, help="m/s (default 343)")
    p.add_argument("--frequencies", help="start:step:stop or list in Hz (default 0:100:5000)")
    p.add_argument("--candidates", type=int, help="number of candidate positions (default 242)")
    p.add_argument("--uniform-directions", type=int, help="nearly uniform directions (default 240)")

    p = sub.add_parser("rank-map", help="per-position effective rank for the three direction grids")
    _add_common(p)
    p.add_argument("--frequencies", help="frequency subset in Hz (default all)")

    p = sub.add_parser("optimize", help="GA (or exhaustive) microphone placement")
    _add_common(p)
    p.add_argument("--sizes", help="comma list of array sizes (default 2,3,5,10)")
    p.add_argument("--realizations", type=int, help="GA runs per size (default 100)")
    p.add_argument("--types", help="array types to design (default MER)")
    p.add_argument("--design-frequencies", help="frequencies (Hz) used in the fitness; default all")
    p.add_argument("--exhaustive", action="store_true", default=None, help="exact enumeration")
    _add_ga(p)

    p = sub.add_parser("sensitivity", help="average beamformer sensitivity per array type")
    _add_common(p)
    p.add_argument("--sizes", help="comma list of array sizes")
    p.add_argument("--frequencies", help="frequencies in Hz (default all non-zero)")
    _add_design(p)

    p = sub.add_parser("music", help="MUSIC DOA Monte-Carlo sweep")
    _add_common(p)
    p.add_argument("--frequencies", help="comma list in Hz")
    p.add_argument("--sizes", help="comma list of array sizes")
    p.add_argument("--snrs", help="comma list of SNRs in dB")
    p.add_argument("--trials", type=int, help="trials per direction (default 30)")
    p.add_argument("--snapshots", type=int, help="snapshots per trial (default 30)")
    _add_design(p)
    return parser


def resolve_config(args):
    """Merge defaults, config file, and explicit flags into one dict."""
    cfg = dict(COMMON_DEFAULTS)
    cfg.update(DEFAULTS[args.command])
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key, value in vars(args).items():
        if key in cfg and value is not None:
            cfg[key] = value
    if cfg["threads"] is None:
        cfg["threads"] = os.cpu_count() or 1
    if cfg["threads"] < 1:
        raise UsageError("--threads must be >= 1")
    return cfg


def _hashable_config(cfg, command):
    # thread count and output directory do not affect results, so they stay out of the hash
    out = {k: v for k, v in cfg.items() if k not in ("threads", "out")}
    out["command"] = command
    return out


def _ga_config(cfg):
    return GaConfig(
        population_size=int(cfg["population"]),
        stall_generations=int(cfg["stall_generations"]),
        stall_tolerance=float(cfg["stall_tolerance"]),
        max_generations=int(cfg["max_generations"]),
    )


def cmd_gen_db(cfg):
    if not cfg["radius"] or cfg["radius"] <= 0:
        raise UsageError(f"--radius must be > 0, got {cfg['radius']}")
    candidates = CandidatePositionSet.on_sphere(int(cfg["candidates"]), float(cfg["radius"]))
    n_uniform = int(cfg["uniform_directions"])
    directions = (
        direction_grid("sphere_uniform", n_uniform)
        + direction_grid("horizontal36")
        + direction_grid("median36")
    )
    groups = {
        "uniform": list(range(n_uniform)),
        "horizontal": list(range(n_uniform, n_uniform + 36)),
        "median": list(range(n_uniform + 36, n_uniform + 72)),
    }
    db = build_sphere_database(
        head_radius=float(cfg["radius"]),
        candidates=candidates,
        frequencies=FrequencyGrid.parse(str(cfg["frequencies"])),
        directions=directions,
        speed_of_sound=float(cfg["speed_of_sound"]),
        direction_groups=groups,
    )
    save_database(db, cfg["db"])
    M, K, D = db.shape
    print(f"wrote {cfg['db']}: M={M} K={K} D={D}")
    return EXIT_OK


def _spherical(xyz):
    r = np.linalg.norm(xyz, axis=1)
    az = np.degrees(np.arctan2(xyz[:, 1], xyz[:, 0]))
    el = np.degrees(np.arccos(np.clip(xyz[:, 2] / r, -1, 1)))
    return az, el


def cmd_rank_map(cfg, hcfg):
    db = load_database(cfg["db"])
    fidx = _frequency_indices(db, cfg["frequencies"])
    grids = {"horizontal": "horizontal", "median": "median", "uniform": "uniform"}
    available = {name: g for name, g in grids.items() if g in db.direction_groups}
    if not available:
        available = {"all": None}
    xyz = db.candidates.xyz
    az, el = _spherical(xyz)
    for name, group in available.items():
        ranks = effective_rank_map(db, fidx, db.direction_indices(group))
        rows = [
            (m, float(xyz[m, 0]), float(xyz[m, 1]), float(xyz[m, 2]), float(ranks[m]))
            for m in range(len(ranks))
        ]
        base = os.path.join(cfg["out"], f"rank_map_{name}")
        reporting.write_csv(
            base + ".csv", "rank-map", hcfg, ["candidate", "x", "y", "z", "effective_rank"], rows
        )
        reporting.scatter_plot(
            base + ".svg", az, el, ranks,
            title=f"effective rank, {name} sources",
            xlabel="azimuth [deg]", ylabel="polar angle [deg]",
        )
        print(f"{name}: effective rank {ranks.min():.3f} .. {ranks.max():.3f} over {len(ranks)} positions")
    return EXIT_OK


def _selection_records(db, arrays):
    xyz = db.candidates.xyz
    records = []
    for (t, L), reals in arrays.items():
        for a in reals:
            records.append({
                "array_type": t,
                "L": L,
                "realization": a.realization,
                "indices": list(a.indices),
                "positions": [[float(c) for c in xyz[i]] for i in a.indices],
                "effective_rank": a.effective_rank,
                "fitness": a.fitness,
                "generations": a.generations,
                "seed": a.seed,
            })
    return records


def load_selections(path):
    """Read a selections JSON into ``(array_type, L) -> list of records``."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read selections {path}: {exc}") from None
    out = {}
    for rec in doc.get("results", []):
        a = experiments.DesignedArray(
            rec["array_type"], int(rec["L"]), int(rec["realization"]), tuple(rec["indices"]),
            float(rec["effective_rank"]), float(rec["fitness"]), int(rec["generations"]),
            int(rec["seed"]),
        )
        out.setdefault((a.array_type, a.n_mics), []).append(a)
    for reals in out.values():
        reals.sort(key=lambda a: a.realization)
    return out


def _obtain_arrays(cfg, db, sizes, types):
    if cfg.get("selections"):
        arrays = load_selections(cfg["selections"])
        missing = [(t, L) for t in types for L in sizes if (t, L) not in arrays]
        if missing:
            raise UsageError(f"selections file lacks {missing}")
        n = int(cfg["realizations"])
        return {(t, L): arrays[(t, L)][:n] for t in types for L in sizes}
    return experiments.design_arrays(
        db, sizes, int(cfg["realizations"]), tuple(types),
        frequency_indices=_frequency_indices(db, cfg["design_frequencies"]),
        config=_ga_config(cfg), seed=int(cfg["seed"]), threads=int(cfg["threads"]),
    )


def cmd_optimize(cfg, hcfg):
    db = load_database(cfg["db"])
    sizes = _int_list(cfg["sizes"])
    fidx = _frequency_indices(db, cfg["design_frequencies"])
    if cfg["exhaustive"]:
        arrays = {}
        for L in sizes:
            sel = exhaustive_search(db, L, fidx)
            arrays[("MER", L)] = [experiments.DesignedArray(
                "MER", L, 0, sel.indices, sel.effective_rank, sel.fitness, 0, int(cfg["seed"]),
                (sel.fitness,),
            )]
    else:
        arrays = experiments.design_arrays(
            db, sizes, int(cfg["realizations"]), tuple(_str_list(cfg["types"])),
            frequency_indices=fidx, config=_ga_config(cfg), seed=int(cfg["seed"]),
            threads=int(cfg["threads"]),
        )
    reporting.write_json(
        os.path.join(cfg["out"], "selections.json"), "optimize", hcfg, _selection_records(db, arrays)
    )
    rows = [
        (t, L, a.realization, g, v)
        for (t, L), reals in arrays.items()
        for a in reals
        for g, v in enumerate(a.trace)
    ]
    reporting.write_csv(
        os.path.join(cfg["out"], "traces.csv"), "optimize", hcfg,
        ["array_type", "L", "realization", "generation", "best_fitness"], rows,
    )
    for (t, L), reals in arrays.items():
        ranks = [a.effective_rank for a in reals]
        print(f"{t} L={L}: effective rank mean {np.mean(ranks):.4f}, max {np.max(ranks):.4f}")
    return EXIT_OK


def cmd_sensitivity(cfg, hcfg):
    db = load_database(cfg["db"])
    sizes = _int_list(cfg["sizes"])
    types = _str_list(cfg["types"])
    fidx = _frequency_indices(db, cfg["frequencies"], drop_zero=True)
    if not fidx:
        raise UsageError("no non-zero frequencies selected")
    arrays = _obtain_arrays(cfg, db, sizes, types)
    rows, failures = experiments.sensitivity_table(db, arrays, fidx, sizes=sizes, threads=int(cfg["threads"]))
    others = [t for t in types if t != "MER"]
    header = ["frequency_hz", "L"] + [f"T_{t}" for t in types]
    if "MER" in types:
        header += [f"ratio_MER_vs_{t}_db" for t in others]
    out_rows = []
    for r in rows:
        vals = [r.mean_sensitivity.get(t, math.nan) for t in types]
        ratios = []
        if "MER" in types:
            ratios = [experiments.ratio_db(r.mean_sensitivity["MER"], r.mean_sensitivity[t]) for t in others]
        out_rows.append([r.frequency_hz, r.n_mics] + vals + ratios)
    reporting.write_csv(os.path.join(cfg["out"], "sensitivity.csv"), "sensitivity", hcfg, header, out_rows)
    if "MER" in types:
        for t in others:
            series = {}
            for L in sizes:
                pts = [(r.frequency_hz, experiments.ratio_db(r.mean_sensitivity["MER"], r.mean_sensitivity[t]))
                       for r in rows if r.n_mics == L]
                series[f"L={L}"] = ([p[0] for p in pts], [p[1] for p in pts])
            reporting.line_plot(
                os.path.join(cfg["out"], f"sensitivity_MER_vs_{t}.svg"), series,
                title=f"sensitivity ratio MER / {t}", xlabel="frequency [Hz]", ylabel="ratio [dB]",
            )
    return _report_failures(failures)


def _report_failures(failures):
    for msg in failures:
        print(f"failed cell: {msg}", file=sys.stderr)
    return EXIT_PARTIAL if failures else EXIT_OK


def _music_plots(cfg, stats, sweep_types):
    def pick(pred, key):
        out = {}
        for t in sweep_types:
            pts = sorted((key(s), s.std_degrees) for s in stats if s.array_type == t and pred(s))
            if pts:
                out[t] = ([p[0] for p in pts], [p[1] for p in pts])
        return out

    def first(values, preferred):
        return preferred if preferred in values else values[0]

    freqs = sorted({s.frequency_hz for s in stats})
    sizes = sorted({s.n_mics for s in stats})
    snrs = sorted({s.snr_db for s in stats})
    L3, snr10 = first(sizes, 3), first(snrs, 10.0)
    f400, snr0, L5 = first(freqs, 400.0), first(snrs, 0.0), first(sizes, 5)
    plots = [
        ("music_vs_frequency.svg", pick(lambda s: s.n_mics == L3 and s.snr_db == snr10, lambda s: s.frequency_hz),
         f"STD vs frequency, L={L3}, SNR={snr10:g} dB", "frequency [Hz]"),
        ("music_vs_size.svg", pick(lambda s: s.frequency_hz == f400 and s.snr_db == snr0, lambda s: s.n_mics),
         f"STD vs array size, f={f400:g} Hz, SNR={snr0:g} dB", "L"),
        ("music_vs_snr.svg", pick(lambda s: s.frequency_hz == f400 and s.n_mics == L5, lambda s: s.snr_db),
         f"STD vs SNR, f={f400:g} Hz, L={L5}", "SNR [dB]"),
    ]
    for name, series, title, xlabel in plots:
        reporting.line_plot(os.path.join(cfg["out"], name), series, title=title, xlabel=xlabel,
                            ylabel="angular error STD [deg]")


def cmd_music(cfg, hcfg):
    db = load_database(cfg["db"])
    freqs = _float_list(cfg["frequencies"])
    sizes = _int_list(cfg["sizes"])
    snrs = _float_list(cfg["snrs"])
    types = _str_list(cfg["types"])
    for f in freqs:
        db.frequency_index(f)
    arrays = _obtain_arrays(cfg, db, sizes, types)
    protocol = MusicProtocol(
        trials_per_direction=int(cfg["trials"]),
        n_snapshots=int(cfg["snapshots"]),
        realizations=int(cfg["realizations"]),
    )
    cells = [(f, L, s, t) for f in freqs for L in sizes for s in snrs for t in types]

    def run(cell):
        f, L, s, t = cell
        try:
            sel = [a.indices for a in arrays[(t, L)]]
            return run_music_cell(db, sel, f, s, protocol, int(cfg["seed"]), t), None
        except HeadArrayError as exc:
            return None, f"f={f} Hz, L={L}, snr={s} dB, type={t}: {exc}"

    results = experiments._map(run, cells, int(cfg["threads"]))
    stats = [r for r, _ in results if r is not None]
    failures = [e for _, e in results if e is not None]
    rows = [
        (s.frequency_hz, s.n_mics, s.snr_db, s.array_type, s.std_degrees, s.trial_count, s.seed)
        for s in stats
    ]
    reporting.write_csv(
        os.path.join(cfg["out"], "music.csv"), "music", hcfg,
        ["frequency_hz", "L", "snr_db", "array_type", "std_degrees", "trial_count", "seed"], rows,
    )
    if stats:
        _music_plots(cfg, stats, types)
    return _report_failures(failures)


COMMANDS = {
    "rank-map": cmd_rank_map,
    "optimize": cmd_optimize,
    "sensitivity": cmd_sensitivity,
    "music": cmd_music,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        if args.command == "gen-db":
            return cmd_gen_db(cfg)
        os.makedirs(cfg["out"], exist_ok=True)
        return COMMANDS[args.command](cfg, _hashable_config(cfg, args.command))
    except (UsageError, HeadArrayError, OSError) as exc:
        print(f"headarray {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
