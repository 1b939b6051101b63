from __future__ import annotations

import csv
import io
import json
import subprocess
import sys

import pytest

from daledger.cli import EXIT_ASSERT, EXIT_CONFIG, EXIT_OK, bundled_scenarios, main
from daledger.netsim import check_agreement, check_soundness, load_scenario, run_scenario
from daledger.cli import resolve_scenario


def _csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def test_sampling_table_stdout(capsys):
    assert main(["sampling-table", "--k", "2", "--m", "0.5", "0.25"]) == EXIT_OK
    rows = _csv(capsys.readouterr().out)
    assert rows[0]["c"] == "1.0"
    assert rows[-1]["kind"] == "detection" and rows[-1]["s"] == "15"


def test_bench_output_byte_stable(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["bench-proofsize", "--sweep", "0", "1024", "4096", "16384", "--seed", "3"]
    assert main(argv + ["--out", str(a)]) == EXIT_OK
    assert main(argv + ["--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert list(_csv(a.read_text())[0]) == ["irrelevantBytes", "leaves", "k", "appProofBytesSimplistic",
                                             "appProofBytesProbabilistic"]


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["bench-statesize", "--sweep", "5", "3"]) == EXIT_CONFIG
    assert main(["run-scenario", "no-such-scenario"]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "x", "rule": "simplistic", "nodes": []}))
    assert main(["run-scenario", str(bad)]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as e:
        main(["no-such-command"])
    assert e.value.code == 2


def test_failed_trend_exits_3(capsys):
    # a single point cannot show total state growing
    assert main(["bench-statesize", "--sweep", "0"]) == EXIT_ASSERT
    assert main(["bench-statesize", "--sweep", "0", "--no-check"]) == EXIT_OK


def test_failed_expectation_exits_3(tmp_path, capsys):
    raw = json.loads(resolve_scenario("line3_honest_simplistic").read_text())
    raw["expect"] = {"soundness": False}
    p = tmp_path / "s.json"
    p.write_text(json.dumps(raw))
    assert main(["run-scenario", str(p), "--out", str(tmp_path / "t.csv")]) == EXIT_ASSERT


@pytest.mark.parametrize("name", ["line3_honest_probabilistic", "withhold_one_cell_simplistic"])
def test_run_scenario_verdicts_match_checkers(name, tmp_path, capsys):
    out = tmp_path / "trace.csv"
    assert main(["run-scenario", name, "--out", str(out)]) == EXIT_OK
    verdict = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    trace = run_scenario(load_scenario(resolve_scenario(name)))
    assert verdict["soundness"] == check_soundness(trace)
    assert verdict["agreement"] == check_agreement(trace)
    assert out.read_text() == trace.to_csv()


def test_list_scenarios(capsys):
    assert main(["run-scenario", "--list"]) == EXIT_OK
    assert capsys.readouterr().out.split() == bundled_scenarios()


def test_make_chain(tmp_path, capsys):
    out = tmp_path / "chain.bin"
    assert main(["make-chain", "--blocks", "2", "--mode", "probabilistic", "--out", str(out)]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert [s["height"] for s in summary] == [0, 1] and out.stat().st_size > 0
    assert main(["make-chain", "--blocks", "0", "--out", str(out)]) == EXIT_CONFIG


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "daledger.cli", "run-scenario", "single_node_simplistic",
                        "--out", "-"], capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout.startswith("scenario,node,kind,round,metric,value")
