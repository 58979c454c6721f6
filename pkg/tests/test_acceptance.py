"""Acceptance criteria, one test per criterion.

Each test records a ``CRITERION n: PASS|FAIL ...`` line; the lines are
printed as they happen (visible with ``-s``) and again in pytest's terminal
summary. Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from boxfinder.cli import main as cli_main
from boxfinder.compatibility import CompatibilityMatrix, _iov_std, compatibility_matrix, intersection_over_volume
from boxfinder.cuboid import Cuboid
from boxfinder.objective import Objective, ObjectiveConfig, cuboid_samples, decimate, eval_obj_func, truncated_chamfer
from boxfinder.pipeline import RunConfig, run_benchmark, run_extract
from boxfinder.planes import make_segment
from boxfinder.proposals import gram_schmidt_frames, pair_cuboids, thin_cuboid
from boxfinder.scenes import SceneSpec, generate_scene, load_preset, preset_names
from boxfinder.search import (
    MbfParams,
    MctsParams,
    hill_climbing,
    mbf_update,
    mcts_binary,
    monteboxfinder,
    ucb_pair,
    validate_trace,
)
from boxfinder.search.mbf import ProposalStates
from boxfinder.seeding import substream

RESULTS: dict = {}
# (criterion, label, trace, budget, exact) for the trace audit
TRACES: list = []


def record(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
    RESULTS[n] = line
    print(line)
    return ok


def _shared(obj):
    """Objective sharing precomputation and cache, with its own counter."""
    o = Objective.__new__(Objective)
    o.__dict__.update(obj.__dict__)
    o.n_evals = 0
    return o


def _valid_subsets(bits):
    n = len(bits)
    out = [()]
    for k in range(1, n + 1):
        for S in itertools.combinations(range(n), k):
            if all(bits[a, b] for a, b in itertools.combinations(S, 2)):
                out.append(S)
    return out


# --- 1 ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def oracle_runs():
    t0 = time.perf_counter()
    cloud, _ = generate_scene(load_preset("room", 0))
    props = run_extract(cloud, RunConfig(seed=0)).proposals
    target = decimate(cloud, 2000, 0)
    rows = []
    for seed in range(20):
        rng = substream(seed, "oracle")
        ids = np.sort(rng.choice(len(props), 12, replace=False))
        pool = [props[i] for i in ids]
        up = np.triu(rng.random((12, 12)) < 0.5, 1)
        compat = CompatibilityMatrix(up | up.T, 0.1, 0, seed)
        obj = Objective(pool, target, ObjectiveConfig(samples_per_solution=2000, seed=seed))
        opt = min(obj.loss(S) for S in _valid_subsets(compat.bits))
        o1, o2 = _shared(obj), _shared(obj)
        mbf = monteboxfinder(o1, compat, MbfParams(budget=2000, seed=seed))
        mctsb = mcts_binary(o2, compat, MctsParams(budget=2000, seed=seed))
        for label, r, o in (("mbf", mbf, o1), ("mcts-binary", mctsb, o2)):
            assert o.n_evals == r.n_evals
            assert compat.is_valid_solution(r.solution)
            TRACES.append((1, f"{label} seed {seed}", r.trace, 2000, True))
        rows.append((opt, mbf.loss, mctsb.loss))
    return rows, time.perf_counter() - t0


def test_criterion_1_oracle_optimality(oracle_runs):
    rows, secs = oracle_runs
    mbf_hits = sum(m <= o + 1e-6 for o, m, _ in rows)
    mctsb_hits = sum(b <= o + 1e-6 for o, _, b in rows)
    ok = mbf_hits >= 18 and mctsb_hits >= 16 and secs <= 120
    record(1, ok, f"MBF optimal on {mbf_hits}/20, MCTS-Binary on {mctsb_hits}/20, {secs:.1f}s")
    assert ok


# --- 2 ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def preset_runs():
    t0 = time.perf_counter()
    runs = run_benchmark(preset_names(), list(range(20)), RunConfig())
    return runs, time.perf_counter() - t0


def test_criterion_2_relative_ordering(preset_runs):
    runs, secs = preset_runs
    failed = [r for r in runs if r.error]
    assert not failed, failed[0].error
    mean = {m: np.mean([r.reports[m].loss for r in runs]) for m in ("hc", "mcts-binary", "mbf")}
    auc = {m: np.mean([r.reports[m].auc for r in runs]) for m in ("hc", "mbf")}
    wins = sum(r.reports["mbf"].loss <= r.reports["hc"].loss for r in runs)
    ok = (
        len(runs) == 100
        and mean["mbf"] <= mean["mcts-binary"]
        and mean["mbf"] <= mean["hc"]
        and auc["mbf"] < auc["hc"]
        and wins >= 80
        and secs <= 900
    )
    record(
        2, ok,
        f"mean loss MBF {mean['mbf']:.4f} / MCTS-Binary {mean['mcts-binary']:.4f} / HC {mean['hc']:.4f}, "
        f"mean AUC MBF {auc['mbf']:.4f} / HC {auc['hc']:.4f}, MBF <= HC on {wins}/100, {secs:.0f}s",
    )
    assert ok


def test_criterion_2_budget_parity(preset_runs):
    runs, _ = preset_runs
    for r in runs:
        b = r.reports["hc"].budget
        assert all(rep.budget == b for rep in r.reports.values())


# --- 3 ----------------------------------------------------------------------

def blocking_instance(seed):
    """Two unit cubes 0.3 apart and one box enclosing both."""
    a = Cuboid.axis_aligned([0, 0, 0], [1, 1, 1])
    b = Cuboid.axis_aligned([1.3, 0, 0], [2.3, 1, 1])
    big = Cuboid.axis_aligned([0, 0, 0], [2.3, 1, 1])
    cloud, _ = generate_scene(SceneSpec([a, b], points_per_m2=800, seed=seed))
    pool = [big, a, b]
    compat = compatibility_matrix(pool, 0.1, 5000, seed)
    obj = Objective(pool, cloud, ObjectiveConfig(seed=seed))
    return obj, compat


@pytest.fixture(scope="module")
def blocking_runs():
    rows = []
    for seed in range(10):
        obj, compat = blocking_instance(seed)
        valid = _valid_subsets(compat.bits)
        losses = {S: obj.loss(S) for S in valid}
        opt = min(losses, key=losses.get)
        hc = hill_climbing(_shared(obj), compat)
        mbf = monteboxfinder(_shared(obj), compat, MbfParams(budget=200, seed=seed))
        TRACES.append((3, f"hc seed {seed}", hc.trace, None, False))
        TRACES.append((3, f"mbf seed {seed}", mbf.trace, 200, True))
        rows.append((opt, losses, hc.solution, mbf.solution))
    return rows


def test_criterion_3_hill_climbing_local_minimum(blocking_runs):
    ok_runs = 0
    for opt, losses, hc_sol, mbf_sol in blocking_runs:
        strict = all(losses[opt] < v for S, v in losses.items() if S != opt)
        if opt == (1, 2) and strict and hc_sol == (0,) and mbf_sol == (1, 2):
            ok_runs += 1
    ok = ok_runs == 10
    record(3, ok, f"HC returns the enclosing box and MBF the 2-box optimum on {ok_runs}/10 seeds")
    assert ok


# --- 4 ----------------------------------------------------------------------

def test_criterion_4_ucb_arithmetic():
    u = ucb_pair(0.5, 1, 0.03)
    states = ProposalStates(1)
    mbf_update(states, [0], 0.8, 0.03)
    mbf_update(states, [0], 0.9, 0.03)
    s = states[0]
    ok1 = abs(u - 1.37257) <= 1e-5
    ok2 = s.l1 == 0.8 and abs(s.mu1 - 0.52396) <= 1e-5
    ok = ok1 and ok2
    record(
        4, ok,
        f"ucb_pair(0.5, 1, 0.03) = {u:.10f} (expected 1.37257 +- 1e-5), "
        f"two-step l1 = {s.l1}, mu1 = {s.mu1:.10f} (expected 0.52396 +- 1e-5)",
    )
    assert ok1, f"ucb_pair(0.5, 1, 0.03) = {u!r}, off by {abs(u - 1.37257):.3g}"
    assert ok2, f"mu1 = {s.mu1!r}, off by {abs(s.mu1 - 0.52396):.3g}"


# --- 5 ----------------------------------------------------------------------

def _box_pairs():
    pairs = [((0, 0, 0), (1, 1, 1), (0.5, 0, 0), (1.5, 1, 1))]
    rng = substream(0, "iov-pairs")
    while len(pairs) < 20:
        lo1 = rng.uniform(0, 1, 3)
        hi1 = lo1 + rng.uniform(0.3, 1.5, 3)
        lo2 = rng.uniform(0, 1.5, 3)
        hi2 = lo2 + rng.uniform(0.3, 1.5, 3)
        if np.all(np.minimum(hi1, hi2) > np.maximum(lo1, lo2)):
            pairs.append((lo1, hi1, lo2, hi2))
    return pairs


def test_criterion_5_intersection_estimator():
    worst = 1.0
    for k, (lo1, hi1, lo2, hi2) in enumerate(_box_pairs()):
        a, b = Cuboid.axis_aligned(lo1, hi1), Cuboid.axis_aligned(lo2, hi2)
        side = np.maximum(0, np.minimum(hi1, hi2) - np.maximum(lo1, lo2))
        truth = float(np.prod(side) / min(a.volume, b.volume))
        se = float(_iov_std(np.array(truth), np.array(a.volume), np.array(b.volume), 5000))
        inside = sum(
            abs(intersection_over_volume(a, b, 5000, substream(t, "iov-trial", k)) - truth) <= 3 * se
            for t in range(100)
        )
        worst = min(worst, inside / 100)
    ok = worst >= 0.95
    record(5, ok, f"worst pair has {worst:.0%} of 100 estimates within 3 standard errors")
    assert ok


# --- 6 ----------------------------------------------------------------------

def test_criterion_6_objective_properties():
    cfg = ObjectiveConfig(seed=0)
    c = Cuboid(np.eye(3), [0.5, 0.5, 0.5], [0.5, 0.4, 0.3])
    from boxfinder.geometry import PointCloud

    P, N = cuboid_samples(c, cfg.samples_per_solution, cfg)
    surrogate = eval_obj_func([c], PointCloud(P, N), cfg)

    cloud, gt = generate_scene(load_preset("room", 0))
    Y = decimate(cloud, 3000, 0)
    base = eval_obj_func(gt, Y, cfg)
    rng = np.random.default_rng(0)
    perm_ok = all(eval_obj_func([gt[i] for i in rng.permutation(len(gt))], Y, cfg) == base for _ in range(10))
    trunc = truncated_chamfer([[0, 0, 0]], [[0.05, 0, 0]], 0.1)
    ok = surrogate <= 0.02 and perm_ok and trunc == 1.0
    record(6, ok, f"surrogate loss {surrogate:.3g}, permutation bit-identical {perm_ok}, truncation example {trunc!r}")
    assert ok


# --- 7 ----------------------------------------------------------------------

def test_criterion_7_geometry():
    rng = substream(0, "geometry")
    A = rng.normal(size=(10_000, 3))
    B = rng.normal(size=(10_000, 3))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    B /= np.linalg.norm(B, axis=1, keepdims=True)
    gs_err = 0.0
    for a, b in zip(A, B):
        for F in gram_schmidt_frames(a, b):
            gs_err = max(gs_err, float(np.abs(F @ F.T - np.eye(3)).max()))

    contained = 0
    for k in range(1000):
        R = np.linalg.qr(rng.normal(size=(3, 3)))[0]
        tilt = math.radians(rng.uniform(-17, 17))
        na = np.array([0.0, 0.0, 1.0])
        nb = np.array([math.cos(tilt), 0.0, math.sin(tilt)])
        XA = np.column_stack([rng.uniform(0, 1, 100), rng.uniform(0, 1, 100), rng.normal(0, 0.005, 100)])
        XB = np.column_stack([rng.normal(0, 0.005, 100), rng.uniform(0, 1, 100), rng.uniform(0, 1, 100)])
        offset = rng.normal(size=3)
        sa = make_segment(XA @ R.T + offset, N=R @ na, id=0)
        sb = make_segment(XB @ R.T + offset, N=R @ nb, id=1)
        X = np.vstack([sa.X, sb.X])
        contained += all(np.all(np.abs(c.to_local(X)) <= c.half_extents + 1e-9) for c in pair_cuboids(sa, sb))

    worst_area = 0.0
    for k in range(200):
        deg, w, h = rng.uniform(0, 90), rng.uniform(0.2, 2), rng.uniform(0.2, 2)
        t = math.radians(deg)
        R2 = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
        uv = np.vstack([[[0, 0], [w, 0], [w, h], [0, h]], rng.uniform(0, 1, (200, 2)) * [w, h]]) @ R2.T
        c = thin_cuboid(make_segment(np.column_stack([uv, np.zeros(len(uv))]), N=[0, 0, 1]))
        worst_area = max(worst_area, abs(4 * c.half_extents[1] * c.half_extents[2] / (w * h) - 1))
    ok = gs_err <= 1e-9 and contained == 1000 and worst_area <= 0.01
    record(
        7, ok,
        f"frame error {gs_err:.2e} over 10^4 pairs, containment {contained}/1000, "
        f"worst thin-box area error {worst_area:.2e}",
    )
    assert ok


# --- 8 ----------------------------------------------------------------------

def test_criterion_8_determinism(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli_main(["fit", "room", "--seed", "7", "--out", str(out)]) == 0
        outs.append(out)
    names = [f"{kind}_{m}.{ext}" for m in ("hc", "mcts", "mcts-binary", "mbf")
             for kind, ext in (("solution", "json"), ("trace", "csv"))]
    same = [n for n in names if (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()]
    man = [json.loads((o / "manifest.json").read_text()) for o in outs]
    ok = len(same) == len(names) and man[0] == man[1]
    record(8, ok, f"{len(same)}/{len(names)} solution and trace files byte-identical across two runs")
    assert ok


# --- 9 ----------------------------------------------------------------------

def test_criterion_9_trace_invariants(oracle_runs, preset_runs, blocking_runs):
    runs, _ = preset_runs
    audits = list(TRACES)
    for r in runs:
        for m, trace in r.traces.items():
            audits.append((2, f"{r.scene} seed {r.seed} {m}", trace, r.reports[m].budget, m != "hc"))
    bad = []
    for crit, label, trace, budget, exact in audits:
        try:
            validate_trace(trace, budget, exact)
        except AssertionError as e:
            bad.append(f"[{crit}] {label}: {e}")
    ok = not bad
    record(9, ok, f"{len(audits) - len(bad)}/{len(audits)} traces valid" + (f"; first: {bad[0]}" if bad else ""))
    assert ok
