"""Command line: ``boxfinder {extract,fit,bench,synth}``.

Settings resolve as built-in defaults, then ``--config FILE`` (JSON object
of RunConfig fields), then explicit flags.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys

from boxfinder.compatibility import pool_hash
from boxfinder.cuboid import dump_cuboids, load_cuboids
from boxfinder.geometry import PlyError, save_ply
from boxfinder.pipeline import (
    BENCH_COLUMNS,
    RunConfig,
    aggregate,
    load_input,
    resolve_scenes,
    run_benchmark,
    run_extract,
    run_fit,
    sha256_file,
    write_extraction,
    write_fit,
    write_manifest,
)
from boxfinder.scenes import SceneError, generate_scene, load_scene_spec
from boxfinder.search import METHODS

log = logging.getLogger("boxfinder")

# flag dest -> RunConfig field
_FLAGS = {
    "eta": float,
    "delta": float,
    "p_eps": float,
    "tau_trunc": float,
    "tau_prec": float,
    "budget": int,
    "seed": int,
    "n_samples": int,
    "samples_per_solution": int,
    "target_points": int,
    "dist_eps": float,
    "normal_cos_min": float,
    "conn_radius": float,
    "min_points": int,
    "max_candidates": int,
    "min_thickness": float,
    "normals_k": int,
    "n_init": int,
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of settings; flags override it")
    for name, typ in _FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    p.add_argument("--mbf-literal", dest="mbf_literal", action="store_const", const=True, default=None,
                   help="greedy branch with probability p-eps instead of exploring with it")
    p.add_argument("--timing", dest="timing", action="store_const", const=True, default=None,
                   help="fill the millis column of trace files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if getattr(args, "config", None):
        with open(args.config) as f:
            try:
                loaded = json.load(f)
            except json.JSONDecodeError as e:
                raise ValueError(f"{args.config}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
        if not isinstance(loaded, dict):
            raise ValueError(f"{args.config}: expected a JSON object")
        values.update(loaded)
    for name in list(_FLAGS) + ["mbf_literal", "timing", "method"]:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    return RunConfig.from_dict(values)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boxfinder", description="Fit oriented cuboids to a point cloud.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="plane segments and cuboid proposals")
    p.add_argument("input", help="PLY file, scene JSON or preset name")
    _add_config_flags(p)

    p = sub.add_parser("fit", help="search for the best compatible cuboid subset")
    p.add_argument("input", help="PLY file, scene JSON or preset name")
    p.add_argument("--proposals", help="proposals JSON from 'extract'; extracted inline when omitted")
    p.add_argument("--method", choices=METHODS + ("all",), default=None)
    _add_config_flags(p)

    p = sub.add_parser("bench", help="all methods on several scenes, aggregated")
    p.add_argument("scenes", nargs="+", help="preset names or globs, scene JSON or PLY files")
    p.add_argument("--seeds", type=int, default=1, help="seeds 0..N-1 per scene (default 1)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    _add_config_flags(p)

    p = sub.add_parser("synth", help="write a synthetic scan and its ground truth")
    p.add_argument("spec", help="scene JSON or preset name")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def cmd_extract(args) -> int:
    cfg = resolve_config(args)
    loaded = load_input(args.input, cfg.seed, cfg.normals_k)
    ex = run_extract(loaded.cloud, cfg)
    files = write_extraction(args.out, ex)
    write_manifest(
        args.out, cfg, "extract", {"input": args.input, "input_sha256": loaded.digest}, files,
        {"pool_hash": pool_hash(ex.proposals), "counts": ex.stats},
    )
    print(f"{len(ex.segments)} segments, {len(ex.proposals)} proposals -> {args.out}")
    return 0


def cmd_fit(args) -> int:
    cfg = resolve_config(args)
    loaded = load_input(args.input, cfg.seed, cfg.normals_k)
    inputs = {"input": args.input, "input_sha256": loaded.digest}
    files = []
    if args.proposals:
        try:
            proposals = load_cuboids(args.proposals)
        except json.JSONDecodeError as e:
            raise ValueError(f"{args.proposals}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
        except (KeyError, TypeError) as e:
            raise ValueError(f"{args.proposals}: malformed cuboid entry: {e}") from None
        inputs.update(proposals=args.proposals, proposals_sha256=sha256_file(args.proposals))
    else:
        ex = run_extract(loaded.cloud, cfg)
        proposals = ex.proposals
        files += write_extraction(args.out, ex)
    fit = run_fit(loaded.cloud, proposals, cfg)
    files += write_fit(args.out, fit, cfg)
    write_manifest(args.out, cfg, "fit", inputs, files, {"pool_hash": pool_hash(proposals), "budget": fit.budget})
    for m, rep in fit.reports.items():
        print(f"{m:12s} loss={rep.loss:.6f} precision={rep.precision:.4f} auc={rep.auc:.4f} "
              f"cuboids={rep.n_cuboids} evals={fit.results[m].n_evals}")
    return 0


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_bench(args) -> int:
    cfg = dataclasses.replace(resolve_config(args), method="all")
    if args.seeds < 1 or args.jobs < 1:
        raise ValueError("--seeds and --jobs must be >= 1")
    scenes = resolve_scenes(args.scenes)
    runs = run_benchmark(scenes, list(range(args.seeds)), cfg, args.jobs)
    os.makedirs(args.out, exist_ok=True)
    rows = aggregate(runs)
    _write_csv(os.path.join(args.out, "aggregate.csv"), BENCH_COLUMNS, [[r[c] for c in BENCH_COLUMNS] for r in rows])
    per_run = []
    for r in runs:
        if r.reports is None:
            per_run.append([r.scene, r.seed, "", "", "", "", "", "", "", r.error])
            continue
        for m, rep in r.reports.items():
            per_run.append([r.scene, r.seed, m, rep.loss, rep.precision, rep.auc, rep.auc_norm, rep.n_cuboids, rep.budget, ""])
    _write_csv(
        os.path.join(args.out, "runs.csv"),
        ["scene", "seed", "method", "loss", "precision", "auc", "auc_norm", "n_cuboids", "budget", "error"],
        per_run,
    )
    write_manifest(args.out, cfg, "bench", {"scenes": scenes, "seeds": list(range(args.seeds))}, ["aggregate.csv", "runs.csv"])
    failed = [r for r in runs if r.error]
    for r in failed:
        print(f"FAILED {r.scene} seed {r.seed}: {r.error}", file=sys.stderr)
    print(f"{len(runs) - len(failed)}/{len(runs)} runs ok -> {args.out}")
    return 1 if failed else 0


def cmd_synth(args) -> int:
    spec = load_scene_spec(args.spec, args.seed)
    cloud, gt = generate_scene(spec)
    os.makedirs(args.out, exist_ok=True)
    save_ply(os.path.join(args.out, "scene.ply"), cloud)
    dump_cuboids(os.path.join(args.out, "gt.json"), gt)
    with open(os.path.join(args.out, "scene_spec.json"), "w", newline="\n") as f:
        json.dump(spec.to_json(), f, indent=1, sort_keys=True)
        f.write("\n")
    print(f"{len(cloud)} points, {len(gt)} cuboids -> {args.out}")
    return 0


_COMMANDS = {"extract": cmd_extract, "fit": cmd_fit, "bench": cmd_bench, "synth": cmd_synth}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except PlyError as e:
        print(f"error: PLY parse error: {e}", file=sys.stderr)
        return 1
    except (SceneError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
