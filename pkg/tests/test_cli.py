import filecmp
import json
import os

import numpy as np
import pytest

from boca import cli
from boca.io import read_csv, read_json, read_pgm


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    d = tmp_path_factory.mktemp("toy")
    assert run("generate", "--toy", "--counts", "5,12", "--seed", 7, "--out-dir", d / "data") == 0
    assert run("fit", "--data", d / "data", "--seed", 0, "--n-mc", 300, "--n-bi", 50, "--out-dir", d / "fit") == 0
    return d


def test_generate_outputs(toy):
    data = toy / "data"
    X = read_csv(data / "X.csv")
    assert X.shape == (50, 100)
    assert read_csv(data / "Q_true.csv").sum(axis=1).tolist() == [5, 12]
    m = read_json(data / "manifest.json")
    assert m["command"] == "generate" and m["seed"] == 7


def test_fit_outputs(toy):
    fit = toy / "fit"
    rep = read_json(fit / "fit_report.json")
    assert rep["map_gap"] <= 1e-10 * max(1.0, abs(rep["log_map"]))
    tr = read_csv(fit / "trace_summary.csv")
    assert tr.shape == (300, 1 + 1 + 2 + 2 + 1)  # every iteration, burn-in included
    assert len(rep["columns"]["trace_summary.csv"]) == tr.shape[1]
    assert read_csv(fit / "psi_map.csv").shape == (50, 2)
    q = read_csv(fit / "q_map.csv")
    s = read_csv(fit / "s_map.csv")
    assert np.array_equal(q != 0, s != 0)
    h = read_csv(fit / "k_hist_0.csv")
    assert h.shape == (101, 2) and h[:, 1].sum() == 250
    e = read_csv(fit / "error_trace.csv")
    assert e.shape == (250, 2)


def test_evaluate(toy):
    for est in ("map", "mmse"):
        out = toy / f"eval_{est}"
        assert run("evaluate", "--fit-dir", toy / "fit", "--truth-dir", toy / "data",
                   "--estimator", est, "--out-dir", out) == 0
        rep = read_json(out / "eval_report.json")
        assert rep["support_f1"] > 0.9 and rep["estimator"] == est


def test_reruns_are_byte_identical(toy, tmp_path):
    assert run("generate", "--toy", "--counts", "5,12", "--seed", 7, "--out-dir", tmp_path / "data") == 0
    assert filecmp.cmp(toy / "data" / "X.csv", tmp_path / "data" / "X.csv", shallow=False)
    assert run("fit", "--data", tmp_path / "data", "--seed", 0, "--n-mc", 300, "--n-bi", 50,
               "--out-dir", tmp_path / "fit") == 0
    for name in ("trace_summary.csv", "s_map.csv", "psi_map.csv", "q_prob.csv", "error_trace.csv"):
        assert filecmp.cmp(toy / "fit" / name, tmp_path / "fit" / name, shallow=False), name


def test_global_flags_before_subcommand(toy, tmp_path):
    assert run("--seed", 7, "--out-dir", tmp_path, "generate", "--toy", "--counts", "5,12") == 0
    assert filecmp.cmp(toy / "data" / "X.csv", tmp_path / "X.csv", shallow=False)


def test_single_retained_sample(toy, tmp_path):
    assert run("fit", "--data", toy / "data", "--n-mc", 101, "--n-bi", 100, "--out-dir", tmp_path) == 0
    assert read_csv(tmp_path / "trace_summary.csv").shape[0] == 101
    assert read_csv(tmp_path / "k_hist_0.csv")[:, 1].sum() == 1
    assert read_csv(tmp_path / "error_trace.csv").shape == (1, 2)


def test_config_file(toy, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"sampler": {"n_mc": 12, "n_bi": 2}, "model": {"N": 2}}))
    assert run("fit", "--config", cfg, "--x", toy / "data" / "X.csv", "--out-dir", tmp_path / "o") == 0
    assert read_csv(tmp_path / "o" / "trace_summary.csv").shape[0] == 12
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run("fit", "--config", cfg, "--x", toy / "data" / "X.csv", "--out-dir", tmp_path / "o") == 2
    cfg.write_text("{")
    assert run("fit", "--config", cfg, "--x", toy / "data" / "X.csv", "--out-dir", tmp_path / "o") == 2


def test_exit_codes(toy, tmp_path):
    assert run("fit", "--data", tmp_path / "nothing", "--out-dir", tmp_path) == 3
    assert run("fit", "--data", toy / "data", "--n-atoms", 50, "--out-dir", tmp_path) == 2
    assert run("generate", "--toy", "--bench", "N=4", "--out-dir", tmp_path) == 2
    assert run("generate", "--bench", "N=x", "--out-dir", tmp_path) == 2
    assert run("bench", "--n-sources", "a", "--out-dir", tmp_path) == 2
    assert run("no-such-command") == 2
    (tmp_path / "rag").mkdir()
    (tmp_path / "rag" / "X.csv").write_text("1,2\n3\n")
    assert run("fit", "--data", tmp_path / "rag", "--n-atoms", 1, "--out-dir", tmp_path) == 3


def test_map_mismatch_is_a_validation_failure(toy, tmp_path, monkeypatch):
    real = cli.log_marginal_posterior_arrays
    monkeypatch.setattr(cli, "log_marginal_posterior_arrays", lambda *a: real(*a) + 1e-6)
    assert run("fit", "--data", toy / "data", "--n-mc", 20, "--n-bi", 5, "--out-dir", tmp_path) == 4


def test_validate_quick_and_failure(tmp_path, monkeypatch, capsys):
    assert run("validate", "--quick", "--out-dir", tmp_path) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["passed"] and out["level"] == "quick"
    assert read_json(tmp_path / "validation.json")["checks"][0]["passed"]

    from boca import checks

    monkeypatch.setattr(checks, "run_checks",
                        lambda level, seed=0: [checks.CheckResult("x", False, {}, 0.0)])
    assert run("validate", "--quick", "--out-dir", tmp_path) == 4


def test_bench_single_cell(tmp_path):
    args = ["bench", "--n-sources", 2, "--snr", "10,20", "--trials", 2, "--n-mc", 30, "--n-bi", 10, "--seed", 1]
    assert run(*args, "--out-dir", tmp_path / "a") == 0
    rows = read_csv(tmp_path / "a" / "bench.csv")
    assert rows.shape == (6, 7)
    assert rows[-2:, 2].tolist() == [-1, -1]
    rep = read_json(tmp_path / "a" / "bench_report.json")
    assert set(rep["rmse_non_increasing"]) == {"2"}
    assert run(*args, "--threads", 2, "--out-dir", tmp_path / "b") == 0
    assert filecmp.cmp(tmp_path / "a" / "bench.csv", tmp_path / "b" / "bench.csv", shallow=False)


def test_patches_small(tmp_path):
    img = tmp_path / "img.pgm"
    from boca.io import write_pgm
    from boca.patches import synthetic_texture

    write_pgm(img, synthetic_texture(64, seed=1))
    assert run("patches", "--image", img, "--n-atoms", "2,4", "--n-mc", 30, "--n-bi", 10,
               "--out-dir", tmp_path / "o") == 0
    o = tmp_path / "o"
    assert read_pgm(o / "recon_N4.pgm").shape == (64, 64)
    assert os.path.exists(o / "atlas_N2.pgm") and read_csv(o / "psi_N4.csv").shape == (256, 4)
    r = read_csv(o / "patch_rmse.csv")
    assert r[:, 0].tolist() == [2, 4] and r[1, 1] <= r[0, 1]
    assert run("patches", "--image", tmp_path / "missing.pgm", "--out-dir", o) == 3
