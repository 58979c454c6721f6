"""End-to-end runs: scan -> planes -> proposals -> compatibility -> search.

Every stage draws from its own named random stream under the one run seed,
so a run is reproducible from its resolved config alone.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from boxfinder.compatibility import CompatibilityMatrix, compatibility_matrix, pool_hash
from boxfinder.cuboid import Cuboid, dump_cuboids, write_obj
from boxfinder.geometry import PointCloud, estimate_normals, load_ply
from boxfinder.metrics import RunReport, auc, auc_normalized, precision_tau
from boxfinder.objective import Objective, ObjectiveConfig, decimate
from boxfinder.planes import PlaneSegment, RansacParams, dump_segments, extract_planes
from boxfinder.proposals import AdjacencyParams, generate_proposals
from boxfinder.scenes import SceneError, generate_scene, load_scene_spec, preset_names
from boxfinder.search import (
    METHODS,
    MbfParams,
    MctsParams,
    SearchResult,
    hill_climbing,
    mcts,
    mcts_binary,
    monteboxfinder,
)

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    eta: float = 0.1
    delta: float = 0.03
    p_eps: float = 0.3
    tau_trunc: float = 0.1
    tau_prec: float = 0.2
    n_samples: int = 5000
    samples_per_solution: int = 10000
    # the search scores solutions against at most this many scan points
    target_points: int = 5000
    dist_eps: float = 0.02
    normal_cos_min: float = 0.85
    conn_radius: float = 0.05
    min_points: int = 200
    max_candidates: int = 100
    min_thickness: float = 0.01
    normals_k: int = 10
    n_init: int = 10
    mbf_literal: bool = False
    mcts_c: float = float(np.sqrt(2.0))
    budget: int | None = None
    seed: int = 0
    method: str = "all"
    timing: bool = False

    def __post_init__(self):
        if self.method not in METHODS + ("all",):
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS + ('all',))}")
        if self.budget is not None and self.budget < 1:
            raise ValueError("budget must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def ransac(self) -> RansacParams:
        return RansacParams(
            dist_eps=self.dist_eps,
            normal_cos_min=self.normal_cos_min,
            conn_radius=self.conn_radius,
            min_points=self.min_points,
            max_candidates=self.max_candidates,
            seed=self.seed,
        )

    def objective(self) -> ObjectiveConfig:
        return ObjectiveConfig(tau_trunc=self.tau_trunc, samples_per_solution=self.samples_per_solution, seed=self.seed)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class LoadedInput:
    cloud: PointCloud
    source: str
    digest: str
    gt: list = field(default_factory=list)


def load_input(spec: str, seed: int, normals_k: int = 10) -> LoadedInput:
    """A PLY path, a scene-spec JSON path or a preset name."""
    if spec.lower().endswith(".ply"):
        cloud = load_ply(spec)
        if not cloud.has_normals:
            log.info("%s has no normals; estimating with k=%d", spec, normals_k)
            cloud = estimate_normals(cloud, k=normals_k)
        return LoadedInput(cloud, spec, sha256_file(spec))
    scene = load_scene_spec(spec, seed)
    cloud, gt = generate_scene(scene)
    digest = hashlib.sha256(json.dumps(scene.to_json(), sort_keys=True).encode()).hexdigest()
    return LoadedInput(cloud, spec, digest, gt)


@dataclass
class Extraction:
    segments: list[PlaneSegment]
    proposals: list[Cuboid]
    stats: dict


def run_extract(cloud: PointCloud, cfg: RunConfig) -> Extraction:
    segments = extract_planes(cloud, cfg.ransac())
    stats: dict = {}
    proposals = generate_proposals(cloud, segments, AdjacencyParams(), cfg.min_thickness, stats=stats)
    stats["segments"] = len(segments)
    return Extraction(segments, proposals, stats)


@dataclass
class FitOutcome:
    results: dict[str, SearchResult]
    reports: dict[str, RunReport]
    budget: int
    objective: Objective
    compat: CompatibilityMatrix


def _fresh(objective: Objective) -> Objective:
    """Same precomputed pool, own evaluation counter and cache."""
    o = Objective.__new__(Objective)
    o.__dict__.update(objective.__dict__)
    o.n_evals = 0
    o._memo = {}
    return o


def run_search(method: str, objective: Objective, compat: CompatibilityMatrix, cfg: RunConfig, budget: int) -> SearchResult:
    if method == "hc":
        return hill_climbing(objective, compat, budget)
    if method == "mbf":
        params = MbfParams(
            p_eps=cfg.p_eps, delta=cfg.delta, budget=budget, n_init=cfg.n_init, seed=cfg.seed,
            literal_branches=cfg.mbf_literal,
        )
        return monteboxfinder(objective, compat, params)
    params = MctsParams(budget=budget, c=cfg.mcts_c, seed=cfg.seed)
    if method == "mcts":
        return mcts(objective, compat, params)
    if method == "mcts-binary":
        return mcts_binary(objective, compat, params)
    raise ValueError(f"unknown method {method!r}")


def run_fit(cloud: PointCloud, proposals: list[Cuboid], cfg: RunConfig, compat: CompatibilityMatrix | None = None) -> FitOutcome:
    """Search with one method, or with all four under a shared budget.

    For ``method="all"`` Hill-Climbing runs first (capped by ``cfg.budget``
    if given) and its evaluation count becomes the budget of the others.
    """
    if not proposals:
        raise ValueError("no proposals to search over")
    target = decimate(cloud, cfg.target_points, cfg.seed)
    if compat is None:
        compat = compatibility_matrix(proposals, cfg.eta, cfg.n_samples, cfg.seed)
    objective = Objective(proposals, target, cfg.objective())
    results: dict[str, SearchResult] = {}
    if cfg.method == "all":
        results["hc"] = run_search("hc", _fresh(objective), compat, cfg, cfg.budget)
        budget = max(1, results["hc"].n_evals)
        for m in ("mcts", "mcts-binary", "mbf"):
            results[m] = run_search(m, _fresh(objective), compat, cfg, budget)
    else:
        if cfg.method == "hc":
            results["hc"] = run_search("hc", _fresh(objective), compat, cfg, cfg.budget)
            budget = max(1, results["hc"].n_evals)
        else:
            budget = cfg.budget or 1000
            results[cfg.method] = run_search(cfg.method, _fresh(objective), compat, cfg, budget)
    aucs = {m: auc(r.trace, budget, objective.empty) for m, r in results.items()}
    norm = auc_normalized(aucs) if len(aucs) > 1 else {m: 0.0 for m in aucs}
    reports = {}
    for m, r in results.items():
        X, _ = objective.solution_points(r.solution)
        reports[m] = RunReport(
            method=m,
            loss=r.loss,
            precision=precision_tau(X, target.points, cfg.tau_prec),
            auc=aucs[m],
            auc_norm=norm[m],
            n_cuboids=len(r.solution),
            budget=budget,
            seed=cfg.seed,
        )
    return FitOutcome(results, reports, budget, objective, compat)


def _write_json(path, obj) -> None:
    with open(path, "w", newline="\n") as f:
        json.dump(obj, f, indent=1, sort_keys=True)
        f.write("\n")


def write_extraction(out: str, ex: Extraction) -> list[str]:
    os.makedirs(out, exist_ok=True)
    files = ["segments.json", "proposals.json", "proposals.obj"]
    dump_segments(os.path.join(out, files[0]), ex.segments)
    dump_cuboids(os.path.join(out, files[1]), ex.proposals)
    write_obj(os.path.join(out, files[2]), ex.proposals)
    return files


def write_fit(out: str, fit: FitOutcome, cfg: RunConfig) -> list[str]:
    os.makedirs(out, exist_ok=True)
    files = []
    for m, r in fit.results.items():
        sol = os.path.join(out, f"solution_{m}.json")
        _write_json(sol, r.to_json(cfg.seed, fit.budget if m != "hc" else cfg.budget))
        r.trace.write_csv(os.path.join(out, f"trace_{m}.csv"), timing=cfg.timing)
        write_obj(os.path.join(out, f"solution_{m}.obj"), [fit.objective.pool[i] for i in r.solution])
        files += [f"solution_{m}.json", f"trace_{m}.csv", f"solution_{m}.obj"]
    _write_json(os.path.join(out, "report.json"), {m: rep.to_json() for m, rep in fit.reports.items()})
    files.append("report.json")
    return files


def write_manifest(out: str, cfg: RunConfig, command: str, inputs: dict, files: list[str], extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
            "inputs": inputs,
        "outputs": {name: sha256_file(os.path.join(out, name)) for name in sorted(files)},
    }
    if extra:
        manifest.update(extra)
    _write_json(os.path.join(out, "manifest.json"), manifest)


BENCH_COLUMNS = ("method", "loss", "precision", "auc", "auc_norm", "n_cuboids")


@dataclass
class BenchRun:
    scene: str
    seed: int
    reports: dict[str, RunReport] | None
    n_proposals: int = 0
    error: str | None = None
    traces: dict = field(default_factory=dict)


def bench_one(scene: str, seed: int, cfg: RunConfig) -> BenchRun:
    run_cfg = dataclasses.replace(cfg, seed=seed, method="all")
    try:
        loaded = load_input(scene, seed, cfg.normals_k)
        ex = run_extract(loaded.cloud, run_cfg)
        fit = run_fit(loaded.cloud, ex.proposals, run_cfg)
    except (ValueError, OSError) as e:
        return BenchRun(scene, seed, None, error=f"{type(e).__name__}: {e}")
    traces = {m: r.trace for m, r in fit.results.items()}
    return BenchRun(scene, seed, fit.reports, len(ex.proposals), traces=traces)


def _bench_task(args):
    return bench_one(*args)


def run_benchmark(scenes: list[str], seeds: list[int], cfg: RunConfig, jobs: int = 1) -> list[BenchRun]:
    """``method=all`` on every (scene, seed); results in input order.

    With ``jobs > 1`` scenes run in worker processes; every run is seeded
    independently so the results do not depend on scheduling.
    """
    tasks = [(sc, sd, cfg) for sc in scenes for sd in seeds]
    if jobs <= 1 or len(tasks) <= 1:
        return [bench_one(*t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_bench_task, tasks))


def aggregate(runs: list[BenchRun]) -> list[dict]:
    """Per-method means over the successful runs, in method order."""
    ok = [r for r in runs if r.reports]
    rows = []
    for m in METHODS:
        reps = [r.reports[m] for r in ok if m in r.reports]
        if not reps:
            continue
        rows.append({
            "method": m,
            "loss": float(np.mean([x.loss for x in reps])),
            "precision": float(np.mean([x.precision for x in reps])),
            "auc": float(np.mean([x.auc for x in reps])),
            "auc_norm": float(np.mean([x.auc_norm for x in reps])),
            "n_cuboids": float(np.mean([x.n_cuboids for x in reps])),
        })
    return rows


def resolve_scenes(items: list[str]) -> list[str]:
    """Expand preset globs (``*`` matches all presets) and keep file paths."""
    import fnmatch

    out = []
    presets = preset_names()
    for it in items:
        if it.endswith(".ply") or it.endswith(".json"):
            out.append(it)
            continue
        hits = [p for p in presets if fnmatch.fnmatchcase(p, it)]
        if not hits:
            raise SceneError(f"unknown preset {it!r}; available: {', '.join(presets)}")
        out += hits
    return out


__all__ = [
    "BENCH_COLUMNS",
    "BenchRun",
    "pool_hash",
    "Extraction",
    "FitOutcome",
    "LoadedInput",
    "RunConfig",
    "aggregate",
    "bench_one",
    "load_input",
    "resolve_scenes",
    "run_benchmark",
    "run_extract",
    "run_fit",
    "run_search",
    "write_extraction",
    "write_fit",
    "write_manifest",
]
