import json
import subprocess
import sys

import pytest

from rtlasso import cli
from rtlasso import simulation

TINY = {"p": 40, "n_target": 30, "n_source": 30, "L": 2, "target_sparsity": 3,
        "shared_support_size": 3, "source_sparsity_alt": 5}


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture(scope="module")
def simdir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert cli.main(["simulate", "--seed", "3", "--out", str(out)]) == 0
    return out


def test_simulate_files(simdir, tmp_path):
    names = sorted(p.name for p in simdir.iterdir())
    assert names == ["source_0.csv", "source_1.csv", "source_2.csv", "source_3.csv",
                     "source_4.csv", "target.csv", "truth.json"]
    lines = (simdir / "target.csv").read_text().splitlines()
    assert len(lines) == 101 and len(lines[1].split(",")) == 401
    truth = json.loads((simdir / "truth.json").read_text())
    assert truth["seed"] == 3 and len(truth["beta"]) == 400
    again = tmp_path / "again"
    cli.main(["simulate", "--seed", "3", "--out", str(again)])
    for p in simdir.iterdir():
        assert (again / p.name).read_bytes() == p.read_bytes()


def test_simulate_bad_config_names_field(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", {"design": {"corruption_fraction": 1.5}})
    assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "corruption_fraction" in capsys.readouterr().err


def test_fit_report(simdir, tmp_path):
    out = tmp_path / "run"
    assert cli.main(["fit", "--data", str(simdir), "--out", str(out)]) == 0
    text = (out / "report.json").read_text()
    d = json.loads(text)
    assert d["mode"] == "rtl" and d["selection"]["selected"]
    # round trip: parse and re-serialize gives identical bytes
    assert json.dumps(d, indent=2, sort_keys=True) + "\n" == text


def test_fit_without_sources(simdir, tmp_path):
    data = tmp_path / "only"
    data.mkdir()
    (data / "target.csv").write_bytes((simdir / "target.csv").read_bytes())
    assert cli.main(["fit", "--data", str(data), "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "report.json").read_text())["mode"] == "fallback_target_only"


def test_fit_malformed_csv(simdir, tmp_path, capsys):
    data = tmp_path / "bad"
    data.mkdir()
    lines = (simdir / "target.csv").read_text().splitlines()
    lines[5] = lines[5] + ",oops"
    (data / "target.csv").write_text("\n".join(lines) + "\n")
    assert cli.main(["fit", "--data", str(data), "--out", str(tmp_path)]) == 3
    assert "target.csv:6:" in capsys.readouterr().err


def test_missing_data_exit_code(tmp_path):
    assert cli.main(["fit", "--data", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 3


def test_select_and_oracle(simdir, tmp_path):
    assert cli.main(["select", "--data", str(simdir), "--out", str(tmp_path)]) == 0
    sel = json.loads((tmp_path / "selection.json").read_text())
    assert len(sel["shift_table"]) == 5
    assert cli.main(["oracle", "--data", str(simdir), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    truth = json.loads((simdir / "truth.json").read_text())
    assert rep["mode"] == "oracle"
    assert rep["selection"]["selected"] == [j for j, s in enumerate(truth["shifts"]) if s <= 10]


def bench(tmp_path, cfg, *extra):
    c = write(tmp_path / "bench.json", cfg)
    out = tmp_path / "out"
    assert cli.main(["bench", "--config", c, "--out", str(out), *extra]) == 0
    return out


def test_bench_default_grid_has_27_cells(tmp_path):
    out = bench(tmp_path, {"base": TINY, "reps": 1})
    rows = (out / "bench.csv").read_text().splitlines()
    assert len(rows) == 1 + 27
    man = json.loads((out / "manifest.json").read_text())
    assert man["finished"] and len(man["completed"]) == 27
    assert man["versions"]["rtlasso"]


def test_bench_rejects_zero_reps(tmp_path):
    c = write(tmp_path / "b.json", {"base": TINY, "reps": 0})
    assert cli.main(["bench", "--config", c, "--out", str(tmp_path)]) == 2


def test_bench_resume(tmp_path, monkeypatch):
    cfg = {"base": TINY, "reps": 2, "grid": {"corruption_fraction": [0.1, 0.3]}}
    out = bench(tmp_path, cfg)
    full = (out / "bench.csv").read_text()
    man = json.loads((out / "manifest.json").read_text())
    man["completed"] = man["completed"][:4]
    man["finished"] = False
    (out / "manifest.json").write_text(json.dumps(man))
    (out / "bench.csv").unlink()
    calls = []
    orig = simulation._run_cell_args
    monkeypatch.setattr(simulation, "_run_cell_args",
                        lambda a: calls.append(a[1:3]) or orig(a))
    bench(tmp_path, cfg)
    assert len(calls) == 2
    assert (out / "bench.csv").read_text() == full


def test_bench_jobs_and_reruns_identical(tmp_path):
    cfg = {"base": TINY, "reps": 2, "grid": {"corruption_fraction": [0.0, 0.2]}}
    a = (bench(tmp_path / "a", cfg, "--jobs", "1") / "bench.csv").read_bytes()
    b = (bench(tmp_path / "b", cfg, "--jobs", "4") / "bench.csv").read_bytes()
    c = (bench(tmp_path / "c", cfg, "--jobs", "1") / "bench.csv").read_bytes()
    assert a == b == c


@pytest.fixture(autouse=True)
def _mkdirs(tmp_path):
    for sub in ("a", "b", "c"):
        (tmp_path / sub).mkdir()


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "rtlasso", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
