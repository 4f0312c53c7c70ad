"""Command-line behavior: file outputs, manifests, exit codes, and
byte-level determinism of seeded runs.  Commands run in-process through
main() so exit codes and streams are observable directly."""

import csv
import json
import math

import numpy as np
import pytest

from sparselab.cli import main, parse_pattern_spec
from sparselab.errors import ParameterError
from sparselab.patterns import (
    HeadConfig,
    SparsityPattern,
    apply_head_config,
    dense,
    load_pattern,
    random_pattern,
    save_pattern,
    strided,
    window_global,
)


# ---------------------------------------------------------------- plumbing


def test_version_flag_exits_zero(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert capsys.readouterr().out.strip()


def test_missing_subcommand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2


def test_parse_pattern_spec_forms():
    assert parse_pattern_spec("dense", 6) == dense(6)
    assert parse_pattern_spec("strided:2", 8) == strided(8, 2)
    assert parse_pattern_spec("window_global:2:1", 8) == window_global(8, 2, 1)
    assert parse_pattern_spec("random:0.9:5", 16) == random_pattern(16, 0.9, 5)
    with pytest.raises(ParameterError):
        parse_pattern_spec("strided", 8)
    with pytest.raises(ParameterError):
        parse_pattern_spec("strided:x", 8)
    with pytest.raises(ParameterError):
        parse_pattern_spec("mystery:3", 8)


# ----------------------------------------------------------------- pattern


def test_pattern_strided_union_stats(tmp_path):
    rc = main(["pattern", "--kind", "strided", "--n", "256", "--w", "16",
               "--config", "union", "--out", str(tmp_path)])
    assert rc == 0
    with open(tmp_path / "stats.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 1
    sparsity = float(rows[0]["sparsity"])
    assert sparsity == 0.8760986328125
    assert abs(sparsity - 0.87) <= 0.015
    loaded = load_pattern(tmp_path / "pattern.json")
    assert loaded == apply_head_config(strided(256, 16), HeadConfig.UNION)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["subcommand"] == "pattern"
    assert manifest["outputs"] == ["pattern.json", "stats.csv"]
    assert manifest["tool_version"]
    assert manifest["schema_version"] == 1


def test_pattern_star_connections_stay_linear(tmp_path):
    per_n = {}
    for n in (64, 256):
        out = tmp_path / str(n)
        assert main(["pattern", "--kind", "star", "--n", str(n),
                     "--w", "16", "--out", str(out)]) == 0
        with open(out / "stats.csv", newline="") as f:
            row = next(csv.DictReader(f))
        per_n[n] = float(row["connections_per_position"])
    assert per_n[64] == 34.46875
    assert per_n[256] == 34.8671875
    assert abs(per_n[256] - per_n[64]) <= 0.1 * per_n[64]


def test_pattern_dense_has_zero_sparsity(tmp_path):
    assert main(["pattern", "--kind", "dense", "--n", "8",
                 "--out", str(tmp_path)]) == 0
    with open(tmp_path / "stats.csv", newline="") as f:
        row = next(csv.DictReader(f))
    assert float(row["sparsity"]) == 0.0


def test_pattern_rejects_bad_parameters(tmp_path, capsys):
    rc = main(["pattern", "--kind", "strided", "--n", "8", "--w", "0",
               "--out", str(tmp_path)])
    assert rc == 2
    assert "error:" in capsys.readouterr().err
    rc = main(["pattern", "--kind", "random", "--n", "8",
               "--out", str(tmp_path)])
    assert rc == 2


# ------------------------------------------------------------------ verify


def test_verify_strided_pattern_file(tmp_path):
    pat_dir = tmp_path / "pat"
    assert main(["pattern", "--kind", "strided", "--n", "64", "--w", "4",
                 "--out", str(pat_dir)]) == 0
    out = tmp_path / "rep"
    rc = main(["verify", "--pattern", str(pat_dir / "pattern.json"),
               "--out", str(out)])
    assert rc == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["self_inclusion"] is True
    assert rep["gamma_status"] == "proven"
    assert rep["gamma"] == list(range(1, 65))
    # the left-edge clipped window costs one extra merge hop
    assert rep["coverage_s"] == 3
    assert rep["holds"] is True


def test_verify_self_inclusion_failure_exits_one(tmp_path):
    n = 6
    fam = tuple(((k + 1) % n,) for k in range(n))
    save_pattern(SparsityPattern(n=n, sets=(fam,)), tmp_path / "p.json")
    rc = main(["verify", "--pattern", str(tmp_path / "p.json"),
               "--out", str(tmp_path)])
    assert rc == 1
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["self_inclusion"] is False


def test_verify_budget_exhaustion_warns_but_passes(tmp_path, capsys):
    # two dense cliques bridged by two all-seeing positions: coverage
    # finishes fast, the ordering search cannot within a tiny budget
    half = 15
    n = 2 * half
    fam = []
    for k in range(n):
        if k in (0, n - 1):
            fam.append(tuple(range(n)))
        elif k < half:
            fam.append(tuple(range(half)))
        else:
            fam.append(tuple(range(half, n)))
    save_pattern(SparsityPattern(n=n, sets=(tuple(fam),)),
                 tmp_path / "p.json")
    rc = main(["verify", "--pattern", str(tmp_path / "p.json"),
               "--budget", "10", "--out", str(tmp_path)])
    assert rc == 0
    assert "budget" in capsys.readouterr().err
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["gamma_status"] == "unknown"
    assert rep["coverage_s"] == 2


def test_verify_missing_file_is_input_error(tmp_path, capsys):
    rc = main(["verify", "--pattern", str(tmp_path / "nope.json"),
               "--out", str(tmp_path)])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


# ----------------------------------------------------------------- probmap


def test_probmap_entmax_outputs_stochastic_rows(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    args = ["probmap", "--kind", "entmax", "--alpha", "1.5", "--n", "6",
            "--cols", "9", "--seed", "4"]
    assert main(args + ["--out", str(out_a)]) == 0
    assert main(args + ["--out", str(out_b)]) == 0
    probs = np.loadtxt(out_a / "probs.csv", delimiter=",")
    assert probs.shape == (9, 6)
    assert probs.min() >= 0.0
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, rtol=0.0, atol=1e-12)
    assert (out_a / "probs.csv").read_bytes() \
        == (out_b / "probs.csv").read_bytes()


def test_probmap_reads_score_file(tmp_path):
    scores = tmp_path / "scores.csv"
    np.savetxt(scores, np.array([[0.0, math.log(2.0)], [1.0, 1.0]]),
               delimiter=",")
    rc = main(["probmap", "--kind", "softmax", "--input", str(scores),
               "--out", str(tmp_path)])
    assert rc == 0
    probs = np.loadtxt(tmp_path / "probs.csv", delimiter=",")
    np.testing.assert_allclose(probs[0], [1 / 3, 2 / 3], rtol=0.0, atol=1e-12)
    np.testing.assert_allclose(probs[1], [0.5, 0.5], rtol=0.0, atol=1e-12)


def test_probmap_random_requires_seed(tmp_path, capsys):
    rc = main(["probmap", "--kind", "softmax", "--out", str(tmp_path)])
    assert rc == 2
    assert "seed" in capsys.readouterr().err


def test_probmap_check_softmax_and_hardmax_pass(tmp_path):
    out = tmp_path / "soft"
    rc = main(["probmap-check", "--kind", "softmax", "--zeta", "0.5",
               "--eta", "0.01", "--n", "8", "--trials", "2000",
               "--seed", "0", "--out", str(out)])
    assert rc == 0
    res = json.loads((out / "check.json").read_text())
    assert res["passed"] is True
    assert res["failures"] == 0
    rc = main(["probmap-check", "--kind", "hardmax", "--zeta", "0.5",
               "--eta", "0.25", "--n", "8", "--trials", "500",
               "--seed", "1", "--out", str(tmp_path / "hard")])
    assert rc == 0


def test_probmap_entmax_requires_alpha(tmp_path):
    rc = main(["probmap-check", "--kind", "entmax", "--zeta", "0.5",
               "--eta", "0.1", "--n", "4", "--seed", "0",
               "--out", str(tmp_path)])
    assert rc == 2


# --------------------------------------------------------------- construct


def test_construct_exact_smoke(tmp_path):
    rc = main(["construct", "--n", "2", "--d", "1", "--delta", "0.5",
               "--pattern", "strided:1", "--mode", "exact",
               "--seed", "1", "--out", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["distinct"] is True
    assert rep["mod_check"] is True
    assert rep["end_to_end"] == "exact"
    assert rep["num_ids"] == 8
    assert rep["depth_counts"] == {"quantize": 4, "contextual": 6,
                                   "value": 8}
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 1


def test_construct_soft_reports_budget(tmp_path):
    rc = main(["construct", "--n", "2", "--d", "1", "--delta", "0.5",
               "--pattern", "dense", "--mode", "soft", "--seed", "3",
               "--out", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["soft"]["bound_ok"] is True
    assert rep["soft"]["ids_distinct"] is True
    assert rep["soft_max_deviation"] == rep["soft"]["max_deviation"]
    assert rep["soft"]["max_deviation"] <= 0.125


def test_construct_rejects_non_integer_inverse_delta(tmp_path, capsys):
    rc = main(["construct", "--n", "2", "--d", "1", "--delta", "0.3",
               "--pattern", "dense", "--seed", "0", "--out", str(tmp_path)])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_construct_rejects_unknown_pattern_spec(tmp_path):
    rc = main(["construct", "--n", "2", "--d", "1", "--delta", "0.5",
               "--pattern", "mystery:3", "--seed", "0",
               "--out", str(tmp_path)])
    assert rc == 2


# ------------------------------------------------------------------- train


def _train_cfg(**overrides):
    cfg = {
        "pattern": "strided:2", "head_config": "union", "n": 8, "vocab": 5,
        "d": 10, "h": 2, "m": 5, "r": 12, "num_layers": 2, "lr": 0.01,
        "steps": 6, "batch_size": 8, "eval_size": 16, "eval_every": 3,
        "seed": 11,
    }
    cfg.update(overrides)
    return cfg


def test_train_cli_runs_and_is_deterministic(tmp_path, capsys):
    cfg_path = tmp_path / "train.json"
    cfg_path.write_text(json.dumps(_train_cfg()))
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--config", str(cfg_path),
                 "--out", str(out_a)]) == 0
    assert "final step 6" in capsys.readouterr().out
    assert main(["train", "--config", str(cfg_path),
                 "--out", str(out_b)]) == 0
    assert (out_a / "metrics.csv").read_bytes() \
        == (out_b / "metrics.csv").read_bytes()
    ck_a = np.load(out_a / "checkpoint.npz")
    ck_b = np.load(out_b / "checkpoint.npz")
    assert set(ck_a.files) == set(ck_b.files)
    for name in ck_a.files:
        assert np.array_equal(ck_a[name], ck_b[name])
    manifest = json.loads((out_a / "manifest.json").read_text())
    assert manifest["outputs"] == ["metrics.csv", "checkpoint.npz"]
    with open(out_a / "metrics.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["step", "loss", "masked_accuracy"]
    assert [r[0] for r in rows[1:]] == ["3", "6"]


def test_train_cli_accepts_structured_pattern(tmp_path):
    cfg_path = tmp_path / "train.json"
    cfg_path.write_text(json.dumps(_train_cfg(
        pattern={"kind": "strided", "w": 2}
    )))
    assert main(["train", "--config", str(cfg_path),
                 "--out", str(tmp_path / "run")]) == 0


def test_train_cli_demands_a_seed(tmp_path, capsys):
    cfg = _train_cfg()
    del cfg["seed"]
    cfg_path = tmp_path / "train.json"
    cfg_path.write_text(json.dumps(cfg))
    rc = main(["train", "--config", str(cfg_path),
               "--out", str(tmp_path / "run")])
    assert rc == 2
    assert "seed" in capsys.readouterr().err
