import csv
import json

import pytest

from nhsse.cli import EXIT_COMPARE_FAIL, EXIT_ERROR, EXIT_OK, main
from nhsse.experiments import EXPERIMENTS, chain_seed, spec_from_text

SMALL_ENERGY = """\
experiment = obc_energy
n_sites = 6
jz = 0.5
dj = 0.3
delta = 0.1, 0.3
beta = 4
therm_sweeps = 300
sample_sweeps = 2000
seeds = 3, 4
"""


def _run(tmp_path, name, text, monkeypatch=None, workers="1"):
    cfg = tmp_path / f"{name}.cfg"
    cfg.write_text(text)
    if monkeypatch is not None:
        monkeypatch.setenv("NHSSE_WORKERS", workers)
    out = tmp_path / name
    assert main(["run", str(cfg), "-o", str(out)]) == EXIT_OK
    return out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
        wr.writeheader()
        wr.writerows(rows)


def test_list_experiments(capsys):
    assert main(["list-experiments"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert len(out) == len(EXPERIMENTS)
    assert any(line.startswith("obc_energy") and "sse" in line for line in out)
    assert any(line.startswith("entropy_scan") and "exact" in line for line in out)


def test_spec_parsing_errors():
    with pytest.raises(ValueError, match="unknown or missing"):
        spec_from_text("experiment = nope\n")
    with pytest.raises(ValueError, match="unknown config key"):
        spec_from_text("experiment = obc_energy\nfoo = 1\n")
    with pytest.raises(ValueError, match="distinct"):
        spec_from_text("experiment = obc_energy\nseeds = 1, 1\n")
    spec = spec_from_text(SMALL_ENERGY, "x")
    assert len(spec.points()) == 2 and spec.seeds == (3, 4)


def test_chain_seeds_independent():
    seeds = {chain_seed(s, i) for s in range(5) for i in range(20)}
    assert len(seeds) == 100
    assert chain_seed(3, 7) == chain_seed(3, 7)


def test_run_writes_outputs_and_is_worker_independent(tmp_path, monkeypatch):
    a = _run(tmp_path, "a", SMALL_ENERGY, monkeypatch, "1")
    b = _run(tmp_path, "b", SMALL_ENERGY, monkeypatch, "2")
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    assert (a / "oracle.csv").read_bytes() == (b / "oracle.csv").read_bytes()
    man = json.loads((a / "manifest.json").read_text())
    assert man["n_failed"] == 0
    assert len(man["points"]) == 2 and all(len(p["chain_seeds"]) == 2 for p in man["points"])
    assert set(man["outputs"]) == {"results.csv", "oracle.csv"}
    assert man["code_version"] and man["config"] == SMALL_ENERGY
    rows = _rows(a / "results.csv")
    assert len(rows) == 2 and {"energy", "stderr", "delta", "boundary"} <= set(rows[0])


def test_compare_pass_shift_and_orphans(tmp_path, monkeypatch, capsys):
    out = _run(tmp_path, "run", SMALL_ENERGY, monkeypatch)
    qmc, oracle = out / "results.csv", out / "oracle.csv"
    assert main(["compare", str(qmc), str(oracle), "--sigma", "4"]) == EXIT_OK
    capsys.readouterr()

    rows = _rows(oracle)
    rows[0]["energy"] = repr(float(rows[0]["energy"]) + 10 * float(_rows(qmc)[0]["stderr"]))
    shifted = tmp_path / "shifted.csv"
    _write_rows(shifted, rows)
    assert main(["compare", str(qmc), str(shifted), "--sigma", "4"]) == EXIT_COMPARE_FAIL
    lines = capsys.readouterr().out.splitlines()
    assert sum(line.startswith("FAIL") for line in lines) == 1

    orphan = tmp_path / "orphan.csv"
    _write_rows(orphan, _rows(oracle)[:1])
    assert main(["compare", str(qmc), str(orphan)]) == EXIT_ERROR
    assert "unmatched" in capsys.readouterr().err


def test_run_exact_experiment(tmp_path):
    out = _run(tmp_path, "toy", "experiment = toy_check\n")
    rows = _rows(out / "results.csv")
    assert rows
    man = json.loads((out / "manifest.json").read_text())
    assert man["n_failed"] == 0 and all(p["chain_seeds"] == [] for p in man["points"])


def test_sign_problem_point_is_reported(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("experiment = obc_energy\nn_sites = 6\ndelta = 2.5\ndj = 0\nsample_sweeps = 100\n")
    assert main(["run", str(cfg), "-o", str(tmp_path / "bad")]) == EXIT_ERROR
    assert "sign-problem" in capsys.readouterr().out


def test_missing_config_is_error(tmp_path, capsys):
    assert main(["run", str(tmp_path / "none.cfg")]) == EXIT_ERROR
    assert "error:" in capsys.readouterr().err
