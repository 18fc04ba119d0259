from __future__ import annotations

import csv
import json
import re
import subprocess
import sys

import numpy as np
import pytest

from densecode import cli
from densecode.formats import ProtocolSpec, save_dataset, save_protocol
from densecode.protocol import isotropic_protocol
from densecode.stats import ExperimentDataset


def _json(capsys, argv):
    code = cli.main(argv + ["--format", "json"])
    out = capsys.readouterr().out
    assert code == 0, out
    return json.loads(out)["results"]


def test_simulate_ideal(capsys):
    r = _json(capsys, ["simulate", "--n", "8", "--game", "stochastic", "--noise", "isotropic:1.0"])
    assert r["S"] == 1.0 and r["certified_d"] == 8 and r["certified"] is True
    assert [row["d"] for row in r["bounds"]] == list(range(1, 9))


def test_simulate_mixed(capsys):
    r = _json(capsys, ["simulate", "--n", "8", "--noise", "isotropic:0.0"])
    assert r["S"] == 0.125
    assert r["certified"] is False and r["certified_d"] == 1
    assert not any(row["exceeded"] for row in r["bounds"])


def test_simulate_mub(capsys):
    r = _json(capsys, ["simulate", "--n", "7", "--game", "mub", "--m", "8", "--noise", "isotropic:0.95"])
    assert r["R"] == pytest.approx(0.95 + 0.05 / 7, abs=1e-6)
    assert round(r["R"], 4) == 0.9571
    assert r["reference"][0]["reference_bound"] == 0.4459
    assert r["certified_d"] == 7


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--n", "4", "--game", "mub"],
        ["simulate", "--n", "3", "--game", "mub", "--m", "9"],
        ["simulate", "--n", "3", "--noise", "isotropic:1.2"],
        ["simulate", "--n", "3", "--noise", "depolarizing:0.5"],
        ["simulate"],
        ["bounds", "--n", "1"],
        ["bounds", "--n", "4", "--d-min", "3", "--d-max", "2"],
        ["bounds"],
        ["pvalue", "--s-hat", "0.99"],
        ["pvalue", "--s-hat", "0.99", "--n-rounds", "10", "--delta", "2"],
        ["seesaw", "--n", "3", "--d", "4"],
        ["ingest", "/nonexistent/file.csv"],
    ],
)
def test_validation_errors_exit_1(capsys, argv):
    assert cli.main(argv) == 1
    assert capsys.readouterr().err


def test_numerical_failure_exit_2(monkeypatch, capsys):
    def boom(*_a, **_k):
        raise np.linalg.LinAlgError("singular")

    monkeypatch.setattr(cli, "success_rate", boom)
    assert cli.main(["simulate", "--n", "3"]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_simulate_protocol_file(tmp_path, capsys):
    path = tmp_path / "p.json"
    save_protocol(ProtocolSpec.explicit(isotropic_protocol(2, 0.6)), path)
    r = _json(capsys, ["simulate", "--protocol", str(path)])
    assert r["S"] == pytest.approx(0.8)
    assert cli.main(["simulate", "--n", "3", "--protocol", str(path)]) == 1


def test_bounds_rows(capsys):
    r = _json(capsys, ["bounds", "--n", "8"])
    rows = {row["d"]: row for row in r["bounds"]}
    assert round(rows[7]["schmidt_bound"], 4) == 0.9677
    assert round(rows[1]["schmidt_bound"], 4) == 0.6768
    assert rows[7]["critical_visibility"] == 0.963094
    r2 = _json(capsys, ["bounds", "--n", "2"])
    assert [round(row["schmidt_bound"], 4) for row in r2["bounds"]] == [0.8536, 1.0]


def test_bounds_text_precision(capsys):
    assert cli.main(["bounds", "--n", "8", "--precision", "4"]) == 0
    out = capsys.readouterr().out
    assert re.search(r"^\s+7\s+0\.9677\s", out, re.M)


def test_bounds_csv(tmp_path, capsys):
    path = tmp_path / "b.csv"
    assert cli.main(["bounds", "--n", "4", "--csv", str(path)]) == 0
    rows = list(csv.DictReader(path.open()))
    assert [int(r["d"]) for r in rows] == [1, 2, 3, 4]
    assert float(rows[-1]["schmidt_bound"]) == 1.0


def _numbers(s):
    return [float(x) for x in re.findall(r"-?\d+\.?\d*(?:e[-+]?\d+)?", s)]


def test_text_and_json_agree(capsys):
    argv = ["pvalue", "--s-hat", "0.9729", "--n-rounds", "12800000"]
    assert cli.main(argv) == 0
    text = capsys.readouterr().out
    r = _json(capsys, argv)
    for key in ("S", "bound", "mu", "p", "log10_p"):
        line = next(l for l in text.splitlines() if l.startswith(f"{key}:"))
        assert _numbers(line.split(":", 1)[1])[0] == r[key]


def test_pvalue_examples(capsys):
    r = _json(capsys, ["pvalue", "--s-hat", "0.9729", "--d-null", "7", "--n", "8", "--n-rounds", "12800000"])
    assert r["mu"] == pytest.approx(5.19e-3, abs=1e-4)
    assert r["log10_p"] < -250
    r = _json(capsys, ["pvalue", "--s-hat", "0.96", "--n-rounds", "100"])
    assert r["p"] == 1.0
    r = _json(capsys, ["pvalue", "--s-hat", "0.99", "--n-rounds", "0"])
    assert r["p"] == 1.0


def test_pvalue_from_dataset(capsys):
    r = _json(capsys, ["pvalue", "--dataset", "tables_s2_s3"])
    assert r["n_rounds"] == 128 * 80_000
    assert r["log10_p"] < -200


def test_ingest_bundled(capsys):
    r = _json(capsys, ["ingest", "tables_s2_s3"])
    assert round(r["S"], 4) == 0.9729
    assert 0.5e-4 <= r["sigma"] <= 2e-4
    assert r["certified_d"] == 8
    assert r["worst_settings"][0]["p_win"] == 0.9321


def test_ingest_missing_setting(tmp_path, capsys):
    path = tmp_path / "m.csv"
    rows = ["n=2 total_counts=10"] + [f"{a},{b},{y},0.9" for a in range(2) for b in range(2) for y in (1, 2)]
    rows.remove("0,1,2,0.9")
    path.write_text("\n".join(rows))
    assert cli.main(["ingest", str(path)]) == 1
    assert "x1=0, x2=1, y=2" in capsys.readouterr().err


def test_ingest_parse_error_line(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("# header next\nn=2 total_counts=10\n0,0,1,0.5\n0,0,7,0.5\n")
    assert cli.main(["ingest", str(path)]) == 1
    assert "line 4" in capsys.readouterr().err


def test_ingest_synthetic_ideal(tmp_path, capsys):
    n = 3
    c = np.zeros((n, n, 2, n), dtype=int)
    for a in range(n):
        for b in range(n):
            c[a, b, 0, a] = c[a, b, 1, b] = 50
    path = tmp_path / "ideal.csv"
    save_dataset(ExperimentDataset(n, c), path)
    r = _json(capsys, ["ingest", str(path), "--samples", "50"])
    assert r["S"] == 1.0 and r["certified_d"] == n and r["sigma"] == 0.0


def test_seesaw_commands(tmp_path, capsys):
    r = _json(capsys, ["seesaw", "--n", "2", "--d", "1", "--mode", "relaxed", "--restarts", "20", "--seed", "7"])
    assert abs(r["best_objective"] - 0.853553) <= 1e-3
    r = _json(capsys, ["seesaw", "--n", "8", "--d", "8", "--mode", "physical", "--restarts", "1", "--seed", "0"])
    assert r["best_objective"] == 1.0
    path = tmp_path / "traj.csv"
    assert cli.main(["seesaw", "--n", "2", "--d", "1", "--restarts", "2", "--csv", str(path)]) == 0
    rows = list(csv.DictReader(path.open()))
    assert {r["restart"] for r in rows} == {"0", "1"}


def test_seed_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("DENSECODE_SEED", "5")
    assert cli.main(["ingest", "tables_s2_s3", "--samples", "20", "--format", "json"]) == 0
    env_report = json.loads(capsys.readouterr().out)
    assert env_report["seed"] == 5
    monkeypatch.delenv("DENSECODE_SEED")
    assert cli.main(["ingest", "tables_s2_s3", "--samples", "20", "--seed", "5", "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["results"] == env_report["results"]
    monkeypatch.setenv("DENSECODE_SEED", "abc")
    assert cli.main(["ingest", "tables_s2_s3"]) == 1


def test_rerun_reproduces_results(capsys):
    argv = ["seesaw", "--n", "3", "--d", "1", "--restarts", "3", "--seed", "2", "--max-iter", "20"]
    a, b = _json(capsys, argv), _json(capsys, argv)
    assert a == b
    report, _ = cli.run(argv)
    assert report.seed == 2 and report.version and len(report.input_digest) == 64


def test_module_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "densecode", "bounds", "--n", "2"], capture_output=True, text=True, check=True
    )
    assert "0.853553" in out.stdout
