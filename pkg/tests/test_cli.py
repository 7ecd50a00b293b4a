import json
import subprocess
import sys

import numpy as np
import pytest

from freedim.cli import main
from freedim.matrixcore import MatrixTuple, haar_unitary, random_hermitian_tuple, read_htup, write_htup


@pytest.fixture
def presentations(tmp_path):
    files = {
        "spec01": {"kind": "spectrum", "points": [0, 1]},
        "spec012": {"kind": "spectrum", "points": [0, 1, 2]},
        "amp": {"kind": "amplification", "base": {"kind": "spectrum", "points": [0]}, "n": 2},
    }
    out = {}
    for name, d in files.items():
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(d))
        out[name] = str(path)
    return out


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_seed_is_required(capsys, presentations):
    code, _, err = run(capsys, "dim", "--presentation", presentations["spec01"], "--k-list", "8")
    assert code == 1 and "--seed" in err


def test_usage_errors_exit_1(capsys, presentations):
    assert run(capsys)[0] == 1
    assert run(capsys, "dim", "--bogus")[0] == 1
    assert run(capsys, "dim", "--seed", 1, "--presentation", "missing.json", "--k-list", "4")[0] == 1


def test_sample_is_deterministic(capsys, presentations, tmp_path):
    out = tmp_path / "s"
    argv = ["sample", "--presentation", presentations["spec01"], "--k", 8, "--eps", 0.05, "--count", 4,
            "--seed", 7, "--output", out]
    code, first, _ = run(capsys, *argv)
    assert code == 0
    files = sorted(p.name for p in out.iterdir())
    assert files == ["report.json"] + [f"sample_{i:03d}.htup" for i in range(4)]
    snapshot = {p.name: p.read_bytes() for p in out.iterdir()}
    code, second, _ = run(capsys, *argv)
    assert code == 0 and first == second
    assert snapshot == {p.name: p.read_bytes() for p in out.iterdir()}
    assert read_htup(out / "sample_000.htup").k == 8


def test_sample_divisibility_failure(capsys, presentations, tmp_path):
    code, out, _ = run(capsys, "sample", "--presentation", presentations["amp"], "--k", 5, "--seed", 1,
                       "--iters", 200, "--output", tmp_path / "a")
    report = json.loads(out)
    assert code == 2 and not report["pass"]
    assert report["samples"][0]["defect"] >= 0.1


def test_dim_delta_top(capsys, presentations):
    code, out, _ = run(capsys, "dim", "--mode", "delta_top", "--presentation", presentations["spec01"],
                       "--k-list", "8,12,16", "--seed", 0)
    report = json.loads(out)
    assert code == 0 and report["estimate"] == 0.5 and report["exact"] == "1/2"
    assert report["config"]["seed"] == 0 and "tool_version" in report


def test_dim_ktop2_table(capsys, presentations):
    code, out, _ = run(capsys, "dim", "--mode", "ktop2", "--presentation", presentations["spec01"],
                       "--k-list", "10,20,40", "--seed", 0, "--format", "table")
    assert code == 0 and "estimate" in out
    code, out, _ = run(capsys, "dim", "--mode", "ktop2", "--presentation", presentations["spec01"],
                       "--k-list", "10,20,40", "--seed", 0, "--format", "csv")
    vals = [float(line.split(",")[1]) for line in out.strip().split("\n")[1:]]
    assert vals == sorted(vals, reverse=True)


def test_dim_capacity_names_argmax(capsys, presentations, tmp_path):
    traces = tmp_path / "t.json"
    traces.write_text(json.dumps([
        {"name": "delta0", "m": 2, "weights": [1.0, 0.0]},
        {"name": "half", "m": 2, "moments": {"1": 0.5, "1,1": 0.5}},
    ]))
    code, out, err = run(capsys, "dim", "--mode", "capacity", "--presentation", presentations["spec01"],
                         "--k-list", "4", "--traces", traces, "--samples", 16, "--seed", 0)
    assert code == 0 and "argmax trace: half" in err
    assert json.loads(out)["rows"][-1][2]["estimate_trace"] == "half"


def test_cover_csv(capsys, presentations, tmp_path):
    code, out, _ = run(capsys, "cover", "--presentation", presentations["spec012"], "--k", 1, "--eps", 0.01,
                       "--omega-grid", "2,0.1", "--seed", 3)
    assert code == 0
    rows = [line.split(",") for line in out.strip().split("\n")]
    assert rows[0][:3] == ["metric", "k", "omega"]
    counts = [round(np.exp(float(r[5]))) for r in rows[1:]]
    assert counts == [1, 3]
    code, _, err = run(capsys, "cover", "--presentation", presentations["spec01"], "--omega-grid", "0.1,0.2",
                       "--seed", 3)
    assert code == 1 and "decreasing" in err


def test_orbit_dist(capsys, tmp_path):
    a = random_hermitian_tuple(1, 4, 0)
    v = haar_unitary(4, 1)
    write_htup(a, tmp_path / "a.htup")
    write_htup(a.conjugate_by(v), tmp_path / "b.htup")
    code, out, _ = run(capsys, "orbit-dist", tmp_path / "a.htup", tmp_path / "a.htup", "--seed", 0)
    assert code == 0 and json.loads(out)["distance"] == 0
    code, out, _ = run(capsys, "orbit-dist", tmp_path / "a.htup", tmp_path / "b.htup", "--seed", 0, "--oracle",
                       "--witness", tmp_path / "w.npy")
    report = json.loads(out)
    assert code == 0 and report["gap"] <= 1e-6 and report["oracle"] <= 1e-6
    assert np.load(tmp_path / "w.npy").shape == (4, 4)
    write_htup(random_hermitian_tuple(1, 3, 0), tmp_path / "c.htup")
    code, _, err = run(capsys, "orbit-dist", tmp_path / "a.htup", tmp_path / "c.htup", "--seed", 0)
    assert code == 1 and "shape" in err


def test_mf_check_approx(capsys, presentations):
    code, out, _ = run(capsys, "mf-check", "--check", "approx", "--presentation", presentations["spec01"],
                       "--k-list", "4,5", "--seed", 0)
    assert code == 0 and json.loads(out)["pass"]
    code, out, _ = run(capsys, "mf-check", "--check", "approx", "--presentation", presentations["amp"],
                       "--k-list", "4,5", "--seed", 0)
    per_k = json.loads(out)["per_k"]
    assert code == 2 and per_k[0]["pass"] and not per_k[1]["pass"]


def test_mf_check_convergence(capsys, presentations, tmp_path):
    paths = []
    for k in (4, 8):
        t = MatrixTuple(np.diag(np.repeat([0.0, 2.0], k // 2))[None])
        write_htup(t, tmp_path / f"m{k}.htup")
        paths.append(str(tmp_path / f"m{k}.htup"))
    code, out, _ = run(capsys, "mf-check", "--check", "convergence", "--presentation", presentations["spec01"],
                       "--models", ",".join(paths), "--seed", 0)
    assert code == 2 and not json.loads(out)["pass"]


def test_mf_check_free_product(capsys, presentations):
    code, out, _ = run(capsys, "mf-check", "--check", "free-product", "--left", presentations["spec01"],
                       "--right", presentations["spec01"], "--sizes", "20,40", "--seeds", "1,2", "--seed", 0,
                       "--tol", 0.5)
    report = json.loads(out)
    assert code == 0 and report["certified"] and len(report["mean_max_deviation"]) == 2


def test_free_product_and_battery(capsys, presentations, tmp_path):
    code, out, _ = run(capsys, "free-product", "--left", presentations["spec01"], "--right",
                       presentations["spec012"], "--sizes", "6,12", "--seed", 0, "--output", tmp_path / "fp")
    assert code == 0 and json.loads(out)["files"] == ["free_product_6.htup", "free_product_12.htup"]
    assert read_htup(tmp_path / "fp" / "free_product_12.htup").mats.shape == (2, 12, 12)
    code, out, _ = run(capsys, "battery", "--presentation", presentations["spec01"], "--seed", 0)
    assert code == 0
    assert out.split("\n")[:4] == ["1.0", "X1", "X1*X1", "-1.0*X1 + X1*X1"]


def test_config_file_merges_under_flags(capsys, presentations, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 5, "k_list": "4,6", "presentation": presentations["spec01"]}))
    code, out, _ = run(capsys, "dim", "--config", cfg, "--k-list", "8")
    report = json.loads(out)
    assert code == 0 and report["config"]["seed"] == 5 and [r[0] for r in report["rows"]] == [8]
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run(capsys, "dim", "--config", cfg, "--seed", 1)[0] == 1


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "freedim", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()
