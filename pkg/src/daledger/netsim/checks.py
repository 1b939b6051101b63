"""Trace checkers for soundness, agreement and chain consistency."""

from __future__ import annotations

import copy

from .config import parse_scenario
from .engine import Trace, run_scenario


def _window(trace: Trace) -> int:
    return trace.config.hop_bound * trace.config.delta


def soundness_violations(trace: Trace) -> list[tuple[str, int]]:
    """(node, block) pairs accepted by an honest node with no honest storage
    node holding the full data within hop_bound * delta rounds."""
    cfg = trace.config
    honest = set(cfg.honest)
    storage = [n.id for n in cfg.nodes if n.kind == "storage" and n.honest]
    bad = []
    for b in range(len(trace.blocks)):
        for node in sorted(honest):
            t = trace.final_accept(node, b)
            if t is None:
                continue
            if not any(trace.full_data.get((s, b), float("inf")) <= t + _window(trace) for s in storage):
                bad.append((node, b))
    return bad


def agreement_violations(trace: Trace) -> list[tuple[str, int]]:
    """(node, block) pairs where an honest node did not follow the first honest acceptance in time."""
    honest = sorted(trace.config.honest)
    bad = []
    for b in range(len(trace.blocks)):
        times = [trace.final_accept(n, b) for n in honest]
        accepted = [t for t in times if t is not None]
        if not accepted:
            continue
        first = min(accepted)
        for n, t in zip(honest, times):
            if t is None or t > first + _window(trace):
                bad.append((n, b))
    return bad


def check_soundness(trace: Trace) -> bool:
    return not soundness_violations(trace)


def check_agreement(trace: Trace) -> bool:
    return not agreement_violations(trace)


def check_chain_validity(trace: Trace, chains: dict[str, list[int]]) -> bool:
    """Every block on a node's chosen chain was accepted by that node."""
    return all(trace.final_accept(n, b) is not None for n, chain in chains.items() for b in chain)


def check_delivery_bound(trace: Trace) -> bool:
    return trace.max_delay <= trace.config.delta


def violated(trace: Trace) -> bool:
    return not (check_soundness(trace) and check_agreement(trace))


def seed_sweep(raw: dict, seeds) -> list[bool]:
    """Run one scenario under each seed; True marks a soundness or agreement violation."""
    out = []
    for seed in seeds:
        cfg = copy.deepcopy(raw)
        cfg["seed"] = seed
        cfg.pop("expect", None)
        out.append(violated(run_scenario(parse_scenario(cfg))))
    return out


def expectation_failures(trace: Trace, chains: dict[str, list[int]]) -> list[str]:
    """Compare a trace with its scenario's ``expect`` block.

    Keys: soundness, agreement (default true), sync_match (default true),
    main_chain (list of block indices every honest consensus node must pick),
    misbehaving (whether any client must flag a storage peer).
    """
    expect = trace.config.raw.get("expect", {})
    out = []
    if check_soundness(trace) != expect.get("soundness", True):
        out.append("soundness")
    if check_agreement(trace) != expect.get("agreement", True):
        out.append("agreement")
    if expect.get("sync_match", True) and not all(r["match"] for r in trace.sync.values()):
        out.append("sync_match")
    if "main_chain" in expect:
        want = list(expect["main_chain"])
        cons = [n.id for n in trace.config.nodes if n.honest and n.kind == "consensus"]
        if any(chains.get(n) != want for n in cons):
            out.append("main_chain")
    if "misbehaving" in expect:
        seen = any(r["misbehaving"] for r in trace.sync.values())
        if seen != bool(expect["misbehaving"]):
            out.append("misbehaving")
    if not check_delivery_bound(trace):
        out.append("delivery_bound")
    return out
