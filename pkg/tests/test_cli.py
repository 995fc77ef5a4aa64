import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from ddib.cli import main
from ddib.color import test_pair as bundled_pair
from ddib.datasets import read_csv, read_ppm, write_ppm

TINY_INI = """[schedule]
T = 100
[network]
hidden_dims = 8,8
time_embed_dim = 4
[training]
iterations = 30
batch_size = 16
[solve]
n_steps = 10
[data]
n_points = 60
"""


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.setenv("DDIB_CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.chdir(tmp_path)
    (tmp_path / "tiny.ini").write_text(TINY_INI)
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def twice(work, argv, outputs):
    """Run a command in two fresh directories; return the output bytes of both runs."""
    results = []
    for k in range(2):
        d = work / f"run{k}"
        d.mkdir(exist_ok=True)
        args = [str(a).replace("{d}", str(d)) for a in argv]
        assert run(*args) == 0, args
        results.append([(d / o).read_bytes() for o in outputs])
    return results


def test_gen_is_deterministic(work):
    a, b = twice(work, ["gen", "--kind", "moons", "--n", "50", "--seed", "7", "--out", "{d}/m.csv"], ["m.csv"])
    assert a == b
    assert read_csv(work / "run0" / "m.csv").points.shape == (50, 2)


@pytest.fixture
def models(work):
    assert run("gen", "--kind", "moons", "--n", "60", "--seed", "1", "--out", "m.csv") == 0
    assert run("gen", "--kind", "cb", "--n", "60", "--seed", "2", "--out", "cb.csv") == 0
    for name in ("m", "cb"):
        assert run("train", "--domain", name, "--data", f"{name}.csv", "--out", f"{name}.json",
                   "--config", "tiny.ini", "--seed", "3") == 0
    return work


def test_train_is_deterministic(models):
    a, b = twice(models, ["train", "--domain", "m", "--data", "m.csv", "--out", "{d}/m.json",
                          "--config", "tiny.ini"], ["m.json"])
    assert a == b
    doc = json.loads(a[0])
    assert doc["hidden_dims"] == [8, 8] and doc["schedule"]["T"] == 100 and doc["standardizer"]


def test_encode_decode_translate_cycle_deterministic(models):
    cmds = [
        (["encode", "--model", "m.json", "--points", "m.csv", "--steps", "20", "--out", "{d}/z.csv",
          "--trace", "{d}/trace.csv"], ["z.csv", "trace.csv"]),
        (["decode", "--model", "cb.json", "--points", "m.csv", "--steps", "20", "--out", "{d}/x.csv"],
         ["x.csv"]),
        (["translate", "--src-model", "m.json", "--tgt-model", "cb.json", "--points", "m.csv",
          "--steps", "20", "--out", "{d}/t.csv", "--report", "{d}/r.json"], ["t.csv", "r.json"]),
        (["cycle", "--model-a", "m.json", "--model-b", "cb.json", "--points", "m.csv", "--steps", "20",
          "--out", "{d}/c.json"], ["c.json"]),
    ]
    for argv, outs in cmds:
        a, b = twice(models, argv, outs)
        assert a == b, argv
    trace = (models / "run0" / "trace.csv").read_text().splitlines()
    assert trace[0] == "step,x0,x1,tag" and len(trace) == 1 + 21 * 60
    report = json.loads((models / "run0" / "c.json").read_text())
    assert report["n_points"] == 60 and report["mean_roundtrip_l2"] >= 0
    tr = json.loads((models / "run0" / "r.json").read_text())
    assert tr["mean_roundtrip_l2"] is None and tr["records"]["reconstructed"] is None


def test_translate_maps_into_target_coordinates(models):
    assert run("translate", "--src-model", "m.json", "--tgt-model", "cb.json", "--points", "m.csv",
               "--steps", "20", "--out", "t.csv") == 0
    out = read_csv(models / "t.csv")
    assert out.tags.tolist() == read_csv(models / "m.csv").tags.tolist()
    assert np.all(np.isfinite(out.points))


def test_ot_commands_deterministic(work):
    run("gen", "--kind", "moons", "--n", "30", "--seed", "1", "--out", "a.csv")
    run("gen", "--kind", "cr", "--n", "25", "--seed", "2", "--out", "b.csv")
    for solver in ("emd", "sinkhorn"):
        a, b = twice(work, ["ot", solver, "--source", "a.csv", "--target", "b.csv", "--epsilon", "0.05",
                            "--out", "{d}/plan.json"], ["plan.json"])
        assert a == b
        doc = json.loads(a[0])
        P = np.array(doc["coupling"])
        assert P.shape == (30, 25) and doc["solver"] == solver
        assert np.allclose(P.sum(axis=1), 1 / 30, atol=1e-8)


def test_cycle_table_command(work):
    base = ["cycle-table", "--config", "tiny.ini", "--kinds", "moons,checkerboards"]
    assert run(*base, "--out-dir", "t0") == 1  # nothing cached yet
    a, b = twice(work, base + ["--train", "--out-dir", "{d}"], ["cycle_table.csv", "cycle_table.txt"])
    assert a == b
    lines = a[0].decode().splitlines()
    assert lines[0] == "source,target,mean_l2" and len(lines) == 6


def test_cycle_table_missing_model_message(work, capsys):
    assert run("cycle-table", "--config", "tiny.ini", "--out-dir", "t") == 1
    assert "ddib train --domain" in capsys.readouterr().err


@pytest.fixture
def small_pair(work):
    ref, sub = bundled_pair()
    write_ppm(work / "ref.ppm", ref[:16, :16].copy())
    write_ppm(work / "sub.ppm", sub[:16, :16].copy())
    return work


@pytest.mark.parametrize("method", ["emd", "sinkhorn", "linear", "ddib"])
def test_color_transfer_deterministic(small_pair, method):
    argv = ["color-transfer", "--reference", "ref.ppm", "--subject", "sub.ppm", "--method", method,
            "--out", "{d}/o.ppm", "--report", "{d}/r.json", "--config", "tiny.ini", "--train"]
    a, b = twice(small_pair, argv, ["o.ppm", "r.json"])
    assert a == b
    assert read_ppm(small_pair / "run0" / "o.ppm").shape == (16, 16, 3)
    table = json.loads(a[1])["mse_vs_ddib"]
    assert set(table) == {"emd", "sinkhorn", "linear"}
    if method != "ddib":
        assert table[method] >= 0


def test_color_transfer_cache_miss(small_pair, capsys):
    code = run("color-transfer", "--reference", "ref.ppm", "--subject", "sub.ppm", "--method", "ddib",
               "--out", "o.ppm", "--config", "tiny.ini")
    assert code == 1 and "--train" in capsys.readouterr().err


def test_color_transfer_identity(small_pair):
    assert run("color-transfer", "--reference", "sub.ppm", "--subject", "sub.ppm", "--method", "emd",
               "--out", "o.ppm") == 0
    assert run("mse", "--a", "o.ppm", "--b", "sub.ppm") == 0
    from ddib.ot import pixel_mse
    assert pixel_mse(read_ppm(small_pair / "o.ppm"), read_ppm(small_pair / "sub.ppm")) <= 0.01


def test_mse_and_plot(work, capsys):
    write_ppm(work / "a.ppm", np.zeros((2, 2, 3), np.uint8))
    write_ppm(work / "b.ppm", np.full((2, 2, 3), 255, np.uint8))
    assert run("mse", "--a", "a.ppm", "--b", "b.ppm") == 0
    assert capsys.readouterr().out.strip() == "4.0"
    run("gen", "--kind", "moons", "--n", "40", "--out", "m.csv")
    a, b = twice(work, ["plot", "m.csv", "m.csv", "--out", "{d}/p.svg", "--titles", "src,tgt"], ["p.svg"])
    assert a == b and a[0].startswith(b"<svg")


def test_exit_codes(work, capsys):
    assert run("gen", "--kind", "moons") == 1  # missing --out
    assert run("nonsense") == 1
    assert run("gen", "--kind", "spirals", "--n", "5", "--out", "x.csv") == 1
    (work / "bad.csv").write_text("x0,x1,tag\n1,2,0\n1,zz,1\n")
    assert run("plot", "bad.csv", "--out", "p.svg") == 2
    assert "line 3" in capsys.readouterr().err
    assert run("mse", "--a", "missing.ppm", "--b", "missing.ppm") == 2
    run("gen", "--kind", "moons", "--n", "30", "--out", "a.csv")
    assert run("ot", "sinkhorn", "--source", "a.csv", "--target", "a.csv", "--epsilon", "0.0001",
               "--max-iters", "3", "--out", "p.json") == 3


def test_console_script_available():
    exe = shutil.which("ddib")
    cmd = [exe] if exe else [sys.executable, "-m", "ddib.cli"]
    res = subprocess.run(cmd + ["--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "cycle-table" in res.stdout
