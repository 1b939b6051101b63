from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path

import pytest

from daledger.bench import probabilistic_validity_bytes, simplistic_validity_bytes
from daledger.netsim import (
    ConfigError,
    Simulation,
    check_agreement,
    check_soundness,
    load_scenario,
    parse_scenario,
    run_scenario,
    seed_sweep,
)
from daledger.netsim.checks import check_delivery_bound, expectation_failures
from daledger.sampler import false_accept_bound

SCENARIOS = sorted(Path(str(resources.files("daledger.netsim") / "scenarios")).glob("*.json"))

BASE = {
    "name": "base", "seed": 1, "rule": "simplistic",
    "nodes": [{"id": "p0", "kind": "consensus"}, {"id": "v0", "kind": "consensus"},
              {"id": "s0", "kind": "storage"}],
    "topology": {"type": "line"},
    "blocks": [{"workload": [{"app": "dummy", "count": 30, "size": 200}]}],
}


def _cfg(**over):
    raw = copy.deepcopy(BASE)
    raw.update(over)
    return raw


def test_corpus_size_and_coverage():
    assert len(SCENARIOS) >= 20
    raws = [json.loads(p.read_text()) for p in SCENARIOS]
    assert any("adversary" in r and r["rule"] == "simplistic" for r in raws)
    assert any(r.get("adversary", {}).get("type") == "withholdCells" for r in raws)


@pytest.mark.parametrize("path", SCENARIOS, ids=lambda p: p.stem)
def test_corpus_scenario_meets_expectations(path):
    cfg = load_scenario(path)
    sim = Simulation(cfg)
    trace = sim.run()
    chains = {n.id: sim.node_chain(n.id) for n in cfg.nodes if n.honest}
    assert expectation_failures(trace, chains) == []
    assert check_delivery_bound(trace)
    if cfg.rule == "simplistic":
        assert check_soundness(trace) and check_agreement(trace)


def test_runs_are_deterministic():
    cfg = load_scenario(SCENARIOS[0])
    assert run_scenario(cfg).to_csv() == run_scenario(load_scenario(SCENARIOS[0])).to_csv()


DISHONEST_P0 = [{"id": "p0", "kind": "consensus", "honest": False}] + BASE["nodes"][1:]


@pytest.mark.parametrize("bad,match", [
    ({"rule": "sideways"}, "rule"),
    ({"nodes": [{"id": "p0", "kind": "consensus"}]}, "storage"),
    ({"nodes": BASE["nodes"] + [{"id": "p0", "kind": "storage"}]}, "unique"),
    ({"edges": [["p0", "v0"]]}, "connected"),
    ({"delta": 1}, "diameter"),
    ({"nodes": DISHONEST_P0, "adversary": {"type": "badEncoding", "axis": "row", "index": 0}},
     "probabilistic"),
])
def test_config_errors(bad, match):
    with pytest.raises(ConfigError, match=match):
        parse_scenario(_cfg(**bad))


def test_validity_bytes_match_trace():
    for rule, fn in (("probabilistic", lambda b: probabilistic_validity_bytes(b, 15, 0)),
                     ("simplistic", simplistic_validity_bytes)):
        sim = Simulation(parse_scenario(_cfg(rule=rule)))
        trace = sim.run()
        got = trace.bytes_down["v0"]
        measured = got["HEADER"] + got.get("SAMPLE_RESP", 0) + got.get("BLOCK", 0)
        assert measured == fn(sim.blocks[0])


def test_probabilistic_violation_frequency_within_bound():
    raw = {
        "name": "sweep", "seed": 0, "rule": "probabilistic", "samples": 3,
        "nodes": [{"id": "p0", "kind": "consensus", "honest": False}, {"id": "s0", "kind": "storage"},
                  {"id": "v0", "kind": "consensus"}, {"id": "v1", "kind": "consensus"},
                  {"id": "v2", "kind": "consensus"}],
        "topology": {"type": "complete"},
        "adversary": {"type": "withholdCells", "cells": {"subgrid": "k+1"}},
        "blocks": [{"workload": [{"app": "dummy", "count": 6, "size": 100}]}],
    }
    runs = 150
    freq = sum(seed_sweep(raw, range(runs))) / runs
    k = run_scenario(parse_scenario(raw)).blocks[0].header.k
    bound = false_accept_bound(4 * k * k, (k + 1) ** 2, 3, 3)
    se = (bound * (1 - bound) / runs) ** 0.5
    assert freq <= bound + 3 * se
