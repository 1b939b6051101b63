"""Scenario configuration: JSON schema, validation and workload generation.

Keys (all optional unless marked):

    name            scenario label used in trace rows
    seed            integer, drives topology, workloads and sampling
    rule            "simplistic" | "probabilistic"            (required)
    nodes           list of {id, kind, honest, stake, apps, samples, behavior}
    topology        {"type": "line"|"ring"|"complete"|"random", "p": float}
    edges           explicit [[a, b], ...] (overrides topology)
    delta           rounds; defaults to the honest diameter, must not be smaller
    hop_bound       multiplier k in the k*delta windows (default 3 or 6 by rule)
    samples         default per-node sample count (15)
    share_size      share payload bytes (225)
    max_leaf_size   per-message size cap
    apps            {"currency": {...}, "dummy": {...}, "registrars": [{...}]}
    adversary       default producer strategy for every block
    blocks          list of {producer, parent, round, adversary, workload}

Producer strategies: {"type": "none"}, {"type": "withholdCells", "cells":
[[r, c], ...] | "all" | {"subgrid": m | "k+1"}, "answer_samples": bool,
"serve_storage": bool, "serve_to": [ids]}, {"type": "badEncoding", "axis":
"row"|"col", "index": i}.  A storage node with ``"behavior":
{"omitNamespaceMessages": nid}`` drops one message of that namespace from
every proof it serves.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from ..apps.currency import KeyPair, currency_app, make_fee, make_transfer
from ..apps.dummy import dummy_app, dummy_payload
from ..apps.registrar import register_payload, registrar_app, topup_payload
from ..block import MODES, PROBABILISTIC, SIMPLISTIC, Block, make_block, tamper_encoding
from ..coding import DEFAULT_SHARE_SIZE
from ..nmt import DEFAULT_MAX_LEAF_SIZE, Message, hash_leaf, ns_bytes

KINDS = ("consensus", "storage", "client")
ADVERSARIES = ("none", "withholdCells", "badEncoding")
DEFAULT_HOP_BOUND = {SIMPLISTIC: 3, PROBABILISTIC: 6}


class ConfigError(ValueError):
    pass


@dataclass
class NodeSpec:
    id: str
    kind: str
    honest: bool = True
    stake: float = 0.0
    apps: tuple = ()
    samples: int | None = None
    behavior: dict = field(default_factory=dict)

    @property
    def key(self) -> bytes:
        return KeyPair.from_seed(f"node:{self.id}").public


@dataclass
class BlockPlan:
    producer: str
    parent: int | None
    round: int
    adversary: dict
    workload: list


@dataclass
class ScenarioConfig:
    name: str
    seed: int
    rule: str
    nodes: list
    adjacency: dict
    delta: int
    hop_bound: int
    samples: int
    share_size: int
    max_leaf_size: int
    apps_cfg: dict
    blocks: list
    rounds: int
    raw: dict = field(default_factory=dict)

    def node(self, nid: str) -> NodeSpec:
        return self._index[nid]

    def __post_init__(self) -> None:
        self._index = {n.id: n for n in self.nodes}

    @property
    def honest(self) -> list[str]:
        return [n.id for n in self.nodes if n.honest]


def load_scenario(path) -> ScenarioConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario(raw, default_name=Path(path).stem)


def _req(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _build_edges(raw: dict, ids: list[str], rng: random.Random) -> set[tuple[str, str]]:
    if "edges" in raw:
        edges = set()
        for e in raw["edges"]:
            _req(isinstance(e, (list, tuple)) and len(e) == 2, f"bad edge {e!r}")
            a, b = e
            _req(a in ids and b in ids and a != b, f"edge {e!r} names unknown nodes")
            edges.add((min(a, b), max(a, b)))
        return edges
    topo = raw.get("topology", {"type": "line"})
    kind = topo.get("type", "line")
    pairs = []
    if kind == "line":
        pairs = list(zip(ids, ids[1:]))
    elif kind == "ring":
        pairs = list(zip(ids, ids[1:])) + ([(ids[-1], ids[0])] if len(ids) > 2 else [])
    elif kind == "complete":
        pairs = [(a, b) for i, a in enumerate(ids) for b in ids[i + 1:]]
    elif kind == "random":
        p = float(topo.get("p", 0.1))
        order = list(ids)
        rng.shuffle(order)
        pairs = list(zip(order, order[1:]))  # spanning path keeps it connected
        pairs += [(a, b) for i, a in enumerate(ids) for b in ids[i + 1:] if rng.random() < p]
    else:
        raise ConfigError(f"unknown topology {kind!r}")
    return {(min(a, b), max(a, b)) for a, b in pairs}


def honest_distances(adj: dict, honest: set, src: str) -> dict[str, int]:
    """Hop counts from ``src`` where every intermediate node is honest."""
    dist = {src: 0}
    q = deque([src])
    while q:
        u = q.popleft()
        if u != src and u not in honest:
            continue  # dishonest nodes do not relay
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def parse_scenario(raw: dict, default_name: str = "scenario") -> ScenarioConfig:
    _req(isinstance(raw, dict), "scenario must be a JSON object")
    rule = raw.get("rule")
    _req(rule in MODES, f"rule must be one of {MODES}")
    seed = raw.get("seed", 0)
    _req(isinstance(seed, int), "seed must be an integer")
    rng = random.Random(seed)

    nodes = []
    for n in raw.get("nodes", []):
        _req("id" in n and n.get("kind") in KINDS, f"bad node entry {n!r}")
        nodes.append(NodeSpec(str(n["id"]), n["kind"], bool(n.get("honest", True)),
                              float(n.get("stake", 0.0)), tuple(n.get("apps", ())),
                              n.get("samples"), dict(n.get("behavior", {}))))
    ids = [n.id for n in nodes]
    _req(len(ids) > 0, "scenario needs nodes")
    _req(len(set(ids)) == len(ids), "node ids must be unique")
    honest = {n.id for n in nodes if n.honest}
    _req(any(n.kind == "storage" and n.honest for n in nodes), "need at least one honest storage node")

    edges = _build_edges(raw, ids, rng)
    adj = {i: [] for i in ids}
    for a, b in sorted(edges):
        adj[a].append(b)
        adj[b].append(a)

    # honest nodes must reach each other through honest nodes only
    diameter = 0
    for h in sorted(honest):
        d = honest_distances(adj, honest, h)
        _req(all(x in d for x in honest), "honest nodes are not connected through honest relays")
        diameter = max([diameter] + [d[x] for x in honest])
    delta = raw.get("delta", max(1, diameter))
    _req(isinstance(delta, int) and delta >= 1, "delta must be a positive integer")
    _req(delta >= diameter, f"delta {delta} is below the honest diameter {diameter}")

    hop = raw.get("hop_bound", DEFAULT_HOP_BOUND[rule])
    _req(isinstance(hop, int) and hop >= 1, "hop_bound must be a positive integer")
    samples = raw.get("samples", 15)
    _req(isinstance(samples, int) and samples >= 1, "samples must be positive")
    share_size = raw.get("share_size", DEFAULT_SHARE_SIZE)
    max_leaf = raw.get("max_leaf_size", DEFAULT_MAX_LEAF_SIZE)

    interval = hop * delta + 2
    default_adv = raw.get("adversary", {"type": "none"})
    plans = []
    blocks_raw = raw.get("blocks", [{}])
    _req(len(blocks_raw) > 0, "need at least one block")
    default_producer = next((n.id for n in nodes if n.kind == "consensus"), ids[0])
    for i, b in enumerate(blocks_raw):
        producer = b.get("producer", default_producer)
        _req(producer in ids, f"block {i}: unknown producer {producer!r}")
        parent = b.get("parent", i - 1 if i > 0 else None)
        _req(parent is None or (isinstance(parent, int) and 0 <= parent < i),
             f"block {i}: parent must be an earlier block index")
        adv = b.get("adversary", default_adv)
        _req(adv.get("type", "none") in ADVERSARIES, f"block {i}: unknown adversary {adv!r}")
        if adv.get("type", "none") != "none":
            _req(not nodes[ids.index(producer)].honest, f"block {i}: adversarial producer must be dishonest")
        if adv.get("type") == "badEncoding":
            _req(rule == PROBABILISTIC, "badEncoding needs the probabilistic rule")
        plans.append(BlockPlan(producer, parent, int(b.get("round", 1 + i * interval)), adv,
                               list(b.get("workload", []))))
    for n in nodes:
        omit = n.behavior.get("omitNamespaceMessages")
        if omit is not None:
            _req(not n.honest and n.kind == "storage", f"node {n.id}: only dishonest storage nodes omit")
    rounds = raw.get("rounds", max(p.round for p in plans) + (hop + 2) * delta + 2)
    return ScenarioConfig(raw.get("name", default_name), seed, rule, nodes, adj, delta, hop,
                          samples, share_size, max_leaf, dict(raw.get("apps", {})), plans, rounds, raw)


# -- applications and workloads ------------------------------------------------

@dataclass
class AppSetup:
    apps: dict            # namespace -> AppDescriptor
    names: dict           # name -> namespace
    accounts: list        # funded KeyPairs
    registrar_keys: dict  # namespace -> KeyPair


def app_setup(cfg: ScenarioConfig) -> AppSetup:
    a = cfg.apps_cfg
    cur = a.get("currency", {"namespace": 10})
    cur_ns = int(cur.get("namespace", 10))
    accounts = [KeyPair.from_seed(f"{cfg.seed}:acct{i}") for i in range(int(cur.get("accounts", 4)))]
    funded = {k.public: int(cur.get("balance", 1000)) for k in accounts}
    apps = {cur_ns: currency_app(cur_ns, funded)}
    names = {"currency": cur_ns}
    dummy_ns = int(a.get("dummy", {}).get("namespace", 30))
    apps[dummy_ns] = dummy_app(dummy_ns)
    names["dummy"] = dummy_ns
    reg_keys = {}
    for j, r in enumerate(a.get("registrars", [{"namespace": 20}])):
        ns = int(r.get("namespace", 20 + j))
        key = KeyPair.from_seed(f"registrar:{ns}")
        apps[ns] = registrar_app(ns, cur_ns, key.public, int(r.get("price", 10)))
        names[f"registrar{j}"] = ns
        reg_keys[ns] = key
    if len(set(names.values())) != len(names):
        raise ConfigError("app namespaces must be distinct")
    return AppSetup(apps, names, accounts, reg_keys)


class WorkloadGen:
    """Deterministic message generator; keeps its own idea of account nonces."""

    def __init__(self, setup: AppSetup, seed: int):
        self.setup = setup
        self.rng = random.Random(seed)
        self.nonces = {k.public: 0 for k in setup.accounts}
        self.counter = 0

    def _next(self, key: KeyPair) -> int:
        n = self.nonces[key.public]
        self.nonces[key.public] = n + 1
        return n

    def messages(self, workload: list) -> list[Message]:
        s = self.setup
        cur = s.names["currency"]
        out: list[Message] = []
        for item in workload:
            app = item.get("app")
            if app == "dummy":
                for _ in range(int(item.get("count", 1))):
                    self.counter += 1
                    size = int(item.get("size", 64))
                    key = f"k{self.counter}".encode()
                    value = self.rng.randbytes(max(0, size - 2 - len(key)))
                    out.append(Message(s.names["dummy"], dummy_payload(key, value)))
            elif app == "currency":
                for _ in range(int(item.get("transfers", 1))):
                    a, b = self.rng.sample(s.accounts, 2) if len(s.accounts) > 1 else (s.accounts[0],) * 2
                    tx = make_transfer(a, b.public, self.rng.randrange(1, 5), self._next(a))
                    out.append(Message(cur, tx.encode()))
            elif app == "fee":
                # a dummy child plus a fee paying for it
                for _ in range(int(item.get("count", 1))):
                    self.counter += 1
                    child = Message(s.names["dummy"], dummy_payload(f"c{self.counter}".encode(), b"x"))
                    a = self.rng.choice(s.accounts)
                    fee = make_fee(a, hash_leaf(child).digest, 1, self._next(a))
                    out.append(Message(cur, fee.encode()))
                    if not item.get("omit_child", False):
                        out.append(child)
            elif app == "registrar":
                ns = s.names[f"registrar{int(item.get('instance', 0))}"]
                rkey = s.registrar_keys[ns]
                for _ in range(int(item.get("topups", 0))):
                    a = self.rng.choice(s.accounts)
                    tx = make_transfer(a, rkey.public, int(item.get("amount", 20)), self._next(a), ns_bytes(ns))
                    out.append(Message(cur, tx.encode()))
                    out.append(Message(ns, topup_payload(tx.hash)))
                for _ in range(int(item.get("registers", 0))):
                    self.counter += 1
                    a = self.rng.choice(s.accounts)
                    name = item.get("name") or f"name{self.rng.randrange(int(item.get('names', 1000)))}"
                    out.append(Message(ns, register_payload(a, ns, name.encode())))
            elif app == "raw":
                out.append(Message(int(item["namespace"]), bytes.fromhex(item.get("hex", ""))))
            else:
                raise ConfigError(f"unknown workload item {item!r}")
        return out


def build_blocks(cfg: ScenarioConfig, setup: AppSetup) -> list[Block]:
    """Produce every planned block, applying producer-side tampering."""
    gen = WorkloadGen(setup, cfg.seed)
    blocks: list[Block] = []
    for plan in cfg.blocks:
        prev = blocks[plan.parent].header if plan.parent is not None else None
        msgs = gen.messages(plan.workload)
        b = make_block(prev, msgs, cfg.rule, cfg.max_leaf_size, cfg.share_size, cfg.node(plan.producer).key)
        if plan.adversary.get("type") == "badEncoding":
            axis = plan.adversary.get("axis", "row")
            _req(axis in ("row", "col"), "badEncoding axis must be row or col")
            index = int(plan.adversary.get("index", 0))
            _req(0 <= index < 2 * b.square.k, "badEncoding index out of range")
            b = tamper_encoding(b, axis, index)
        blocks.append(b)
    return blocks


def withheld_cells(adv: dict, k: int) -> set[tuple[int, int]]:
    if adv.get("type") != "withholdCells":
        return set()
    cells = adv.get("cells", [])
    w = 2 * k
    if cells == "all":
        return {(r, c) for r in range(w) for c in range(w)}
    if isinstance(cells, dict):
        m = cells.get("subgrid")
        m = k + 1 if m == "k+1" else int(m)
        m = min(m, w)
        return {(r, c) for r in range(m) for c in range(m)}
    return {(int(r), int(c)) for r, c in cells}
