import csv
import json
import os

import jsonschema
import numpy as np
import pytest

from boxfinder.cli import build_parser, main, resolve_config
from boxfinder.geometry import load_ply
from boxfinder.pipeline import BENCH_COLUMNS
from boxfinder.search import SearchTrace, validate_trace

CUBOID_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["id", "provenance", "sources", "center", "axes", "half_extents"],
        "additionalProperties": False,
        "properties": {
            "id": {"type": "integer", "minimum": 0},
            "provenance": {"enum": ["PairA", "PairB", "Thin", "Given", "GT"]},
            "sources": {"type": "array", "items": {"type": "integer"}},
            "center": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
            "axes": {
                "type": "array",
                "minItems": 3,
                "maxItems": 3,
                "items": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
            },
            "half_extents": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 3, "maxItems": 3},
        },
    },
}

# cheaper search settings for tests that only check plumbing
FAST = ["--samples-per-solution", "2000", "--target-points", "2000"]


def read(path):
    with open(path, "rb") as f:
        return f.read()


def test_extract_room_schema_and_rerun(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["extract", "room", "--seed", "1", "--out", str(a)]) == 0
    assert main(["extract", "room", "--seed", "1", "--out", str(b)]) == 0
    props = json.loads((a / "proposals.json").read_text())
    jsonschema.validate(props, CUBOID_SCHEMA)
    for name in ("segments.json", "proposals.json", "proposals.obj", "manifest.json"):
        assert read(a / name) == read(b / name)
    assert "proposals" in capsys.readouterr().out


def test_corrupt_ply_names_byte_offset(tmp_path, capsys):
    bad = tmp_path / "bad.ply"
    bad.write_bytes(b"ply\nformat binary_little_endian 1.0\nelement vertex 5\nproperty float x\n"
                    b"property float y\nproperty float z\nend_header\n" + b"\x00" * 30)
    code = main(["extract", str(bad), "--out", str(tmp_path / "o")])
    err = capsys.readouterr().err
    assert code != 0
    assert "byte" in err and "bad.ply" in err


def test_method_typo_lists_methods(capsys):
    with pytest.raises(SystemExit) as e:
        main(["fit", "cube", "--method", "mfb", "--out", "x"])
    assert e.value.code == 2
    err = capsys.readouterr().err
    for m in ("hc", "mcts", "mcts-binary", "mbf", "all"):
        assert m in err


def test_fit_mbf_exact_budget(tmp_path):
    out = tmp_path / "f"
    assert main(["fit", "cube", "--method", "mbf", "--budget", "500", "--out", str(out)] + FAST) == 0
    t = SearchTrace.read_csv(out / "trace_mbf.csv")
    assert len(t) == 500
    validate_trace(t, budget=500, exact=True)
    sol = json.loads((out / "solution_mbf.json").read_text())
    assert sol["n_evals"] == 500 and sol["budget"] == 500 and sol["method"] == "mbf"


def test_fit_all_budget_parity(tmp_path):
    out = tmp_path / "all"
    assert main(["fit", "cube", "--seed", "2", "--out", str(out)] + FAST) == 0
    man = json.loads((out / "manifest.json").read_text())
    budget = man["budget"]
    hc = json.loads((out / "solution_hc.json").read_text())
    assert hc["n_evals"] == budget
    for m in ("mcts", "mcts-binary", "mbf"):
        sol = json.loads((out / f"solution_{m}.json").read_text())
        assert sol["n_evals"] == budget
        assert len(SearchTrace.read_csv(out / f"trace_{m}.csv")) == budget
    for name, digest in man["outputs"].items():
        assert os.path.exists(out / name)
    rep = json.loads((out / "report.json").read_text())
    assert sorted(rep) == ["hc", "mbf", "mcts", "mcts-binary"]
    assert min(r["auc_norm"] for r in rep.values()) == 0.0


def test_fit_with_proposals_file(tmp_path):
    ex = tmp_path / "ex"
    assert main(["extract", "cube", "--out", str(ex)]) == 0
    out = tmp_path / "fit"
    args = ["fit", "cube", "--proposals", str(ex / "proposals.json"), "--method", "hc", "--out", str(out)] + FAST
    assert main(args) == 0
    inline = tmp_path / "inline"
    assert main(["fit", "cube", "--method", "hc", "--out", str(inline)] + FAST) == 0
    assert read(out / "solution_hc.json") == read(inline / "solution_hc.json")
    man = json.loads((out / "manifest.json").read_text())
    assert "proposals_sha256" in man["inputs"]


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"eta": 0.2, "delta": 0.05, "seed": 3}))
    args = build_parser().parse_args(["fit", "cube", "--config", str(cfg), "--delta", "0.01", "--out", "o"])
    rc = resolve_config(args)
    assert (rc.eta, rc.delta, rc.seed, rc.p_eps) == (0.2, 0.01, 3, 0.3)


def test_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"etaa": 0.2}))
    assert main(["extract", "cube", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "etaa" in capsys.readouterr().err


def test_synth_writes_scene_and_gt(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synth", "room", "--seed", "4", "--out", str(a)]) == 0
    assert main(["synth", "room", "--seed", "4", "--out", str(b)]) == 0
    assert read(a / "scene.ply") == read(b / "scene.ply")
    gt = json.loads((a / "gt.json").read_text())
    jsonschema.validate(gt, CUBOID_SCHEMA)
    cloud = load_ply(a / "scene.ply")
    assert cloud.has_normals


def test_synth_ply_round_trips_into_fit(tmp_path):
    s = tmp_path / "s"
    assert main(["synth", "cube", "--out", str(s)]) == 0
    via_ply, via_preset = tmp_path / "p", tmp_path / "q"
    assert main(["extract", str(s / "scene.ply"), "--out", str(via_ply)]) == 0
    assert main(["extract", "cube", "--out", str(via_preset)]) == 0
    assert read(via_ply / "proposals.json") == read(via_preset / "proposals.json")


def test_synth_unknown_preset(capsys, tmp_path):
    assert main(["synth", "nope", "--out", str(tmp_path)]) == 1
    assert "cube" in capsys.readouterr().err


def test_bench_table_shape(tmp_path):
    out = tmp_path / "bench"
    code = main(["bench", "*", "--seeds", "1", "--out", str(out)] + FAST)
    assert code == 0
    with open(out / "aggregate.csv") as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == BENCH_COLUMNS
    assert [r[0] for r in rows[1:]] == ["hc", "mcts", "mcts-binary", "mbf"]
    assert all(len(r) == 6 for r in rows)
    with open(out / "runs.csv") as f:
        runs = list(csv.DictReader(f))
    assert len(runs) == 5 * 4
    for scene in {r["scene"] for r in runs}:
        norms = [float(r["auc_norm"]) for r in runs if r["scene"] == scene]
        assert min(norms) == 0.0
        assert max(norms) in (0.0, 1.0)


def test_bench_failure_sets_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ply"
    bad.write_bytes(b"garbage")
    code = main(["bench", "cube", str(bad), "--out", str(tmp_path / "b")] + FAST)
    assert code == 1
    with open(tmp_path / "b" / "runs.csv") as f:
        runs = list(csv.DictReader(f))
    assert any(r["error"] for r in runs)
    assert sum(1 for r in runs if r["scene"] == "cube") == 4
