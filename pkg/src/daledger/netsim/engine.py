"""Lock-step network simulation of block production, validation and storage.

Messages travel point to point.  A message from ``a`` to ``b`` sent in
round T arrives in round T + d(a, b), where d is the hop distance through
honest relays; the engine asserts that honest-to-honest delivery never takes
longer than delta.  Wire sizes are the canonical encodings of the payloads.

Simplistic rule
    producer -> HEADER to all; nodes GET_BLOCK from the producer and from
    anyone that announced HAVE; a node accepts when the fetched messages hash
    to ``m_root`` and then announces HAVE.

Probabilistic rule
    producer -> wide HEADER to all.  Consensus and client nodes sample cells
    (SAMPLE_REQ/SAMPLE_RESP) and forward verified cells to storage nodes
    (SHARE).  Storage nodes bulk-download cells (GET_CELLS/CELLS), rebuild the
    square, and then either accept and announce HAVE or broadcast a FRAUD
    proof.  Samplers re-ask HAVE senders for unanswered cells.  A valid
    fraud proof revokes acceptance.
"""

from __future__ import annotations

import csv
import hashlib
import io
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ..apps.state import dependency_closure, replay
from ..apps.sync import BlockStore, OmittingStore, SyncFailed, SyncStats, sync_app
from ..block import (
    PROBABILISTIC,
    SIMPLISTIC,
    Block,
    ChainView,
    block_valid_probabilistic,
    block_valid_simplistic,
    message_root,
)
from ..coding import (
    ExtendedDataSquare,
    RootMismatch,
    Unrecoverable,
    gen_coding_fraud_proof,
    parse_shares,
    reconstruct,
    verify_coding_fraud_proof,
)
from ..sampler import draw_samples
from .config import (
    AppSetup,
    ScenarioConfig,
    app_setup,
    build_blocks,
    honest_distances,
    withheld_cells,
)

HASH = 32
TRACE_COLUMNS = ("scenario", "node", "kind", "round", "metric", "value")


class DeliveryBoundViolated(AssertionError):
    pass


@dataclass
class Msg:
    kind: str
    src: str
    dst: str
    block: int
    size: int
    body: object = None


@dataclass
class Trace:
    """Everything the checkers and the CSV need."""

    config: ScenarioConfig
    rows: list = field(default_factory=list)
    accept: dict = field(default_factory=dict)       # (node, block) -> round
    revoked: dict = field(default_factory=dict)      # (node, block) -> round
    full_data: dict = field(default_factory=dict)    # (storage node, block) -> round
    sampled: dict = field(default_factory=dict)      # (node, block) -> positions
    bytes_down: dict = field(default_factory=lambda: defaultdict(lambda: defaultdict(int)))
    bytes_up: dict = field(default_factory=lambda: defaultdict(lambda: defaultdict(int)))
    fraud_emitted: list = field(default_factory=list)
    sync: dict = field(default_factory=dict)         # (client, app ns) -> result dict
    blocks: list = field(default_factory=list)
    max_delay: int = 0

    def final_accept(self, node: str, block: int) -> int | None:
        """Round of acceptance if the node still accepts at the end, else None."""
        if (node, block) in self.revoked:
            return None
        return self.accept.get((node, block))

    def record(self, node: str, kind: str, rnd: int, metric: str, value) -> None:
        self.rows.append((self.config.name, node, kind, rnd, metric, value))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in self.rows:
            w.writerow(row)
        return buf.getvalue()


class _NodeState:
    def __init__(self, spec):
        self.spec = spec
        self.headers: dict[int, int] = {}         # block -> round header seen
        self.have_peers: dict[int, list] = defaultdict(list)
        self.requested: set = set()
        # probabilistic sampling
        self.positions: dict[int, list] = {}
        self.responses: dict[int, dict] = defaultdict(dict)
        self.fraud: dict[int, list] = defaultdict(list)
        # storage
        self.cells: dict[int, np.ndarray] = {}
        self.mask: dict[int, np.ndarray] = {}
        self.dirty: set = set()
        self.done: set = set()
        self.held: dict[int, Block] = {}         # blocks this node can serve in full
        self.store: BlockStore | None = None


class Simulation:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.setup: AppSetup = app_setup(cfg)
        self.blocks: list[Block] = build_blocks(cfg, self.setup)
        self.trace = Trace(cfg, blocks=self.blocks)
        self.honest = set(cfg.honest)
        self.dist = {n.id: honest_distances(cfg.adjacency, self.honest, n.id) for n in cfg.nodes}
        self.nodes = {n.id: _NodeState(n) for n in cfg.nodes}
        for n in cfg.nodes:
            if n.kind == "storage":
                omit = n.behavior.get("omitNamespaceMessages")
                st = self.nodes[n.id]
                st.store = (OmittingStore(n.id, int(omit), cfg.max_leaf_size) if omit is not None
                            else BlockStore(n.id, cfg.max_leaf_size))
        self.queue: dict[int, list] = defaultdict(list)
        self.now = 0

    # -- plumbing -----------------------------------------------------------
    def send(self, kind: str, src: str, dst: str, block: int, size: int, body=None) -> None:
        d = self.dist[src].get(dst)
        if d is None:
            return  # unreachable without dishonest relays
        d = max(1, d)
        if src in self.honest and dst in self.honest:
            if d > self.cfg.delta:
                raise DeliveryBoundViolated(f"{src}->{dst} takes {d} > delta={self.cfg.delta}")
            self.trace.max_delay = max(self.trace.max_delay, d)
        self.trace.bytes_up[src][kind] += size
        self.trace.bytes_down[dst][kind] += size
        self.queue[self.now + d].append(Msg(kind, src, dst, block, size, body))

    def broadcast(self, kind: str, src: str, block: int, size: int, body=None) -> None:
        for n in self.cfg.nodes:
            if n.id != src:
                self.send(kind, src, n.id, block, size, body)

    def accept(self, node: str, block: int) -> None:
        if (node, block) in self.trace.accept or (node, block) in self.trace.revoked:
            return
        self.trace.accept[(node, block)] = self.now
        self.trace.record(node, self.nodes[node].spec.kind, self.now, f"accept:{block}", 1)
        if block in self.nodes[node].held:
            self.broadcast("HAVE", node, block, HASH)

    def revoke(self, node: str, block: int) -> None:
        if (node, block) in self.trace.revoked:
            return
        self.trace.revoked[(node, block)] = self.now
        self.trace.record(node, self.nodes[node].spec.kind, self.now, f"revoke:{block}", 1)

    def _sample_seed(self, node: str, block: int) -> int:
        h = hashlib.sha256(f"{self.cfg.seed}:{node}:{block}".encode()).digest()
        return int.from_bytes(h[:8], "big")

    # -- producer -----------------------------------------------------------
    def adversary(self, b: int) -> dict:
        return self.cfg.blocks[b].adversary

    def producer_serves_cell(self, b: int, requester: str, pos, bulk: bool) -> bool:
        adv = self.adversary(b)
        if adv.get("type") != "withholdCells":
            return True
        if requester in adv.get("serve_to", ()):
            return True
        if bulk and adv.get("serve_storage", False):
            return True
        if not bulk and adv.get("answer_samples", False):
            return True
        return tuple(pos) not in self._withheld[b]

    def producer_serves_block(self, b: int, requester: str) -> bool:
        adv = self.adversary(b)
        if adv.get("type") != "withholdCells" or not adv.get("cells"):
            return True
        if requester in adv.get("serve_to", ()):
            return True
        return adv.get("serve_storage", False) and self.cfg.node(requester).kind == "storage"

    def produce(self, b: int) -> None:
        block = self.blocks[b]
        p = self.cfg.blocks[b].producer
        self.trace.record(p, self.cfg.node(p).kind, self.now, f"produce:{b}", len(block.messages))
        if p in self.honest:
            self.trace.accept[(p, b)] = self.now
            self.trace.record(p, self.cfg.node(p).kind, self.now, f"accept:{b}", 1)
            st = self.nodes[p]
            st.held[b] = block
            st.done.add(b)
            if st.store is not None:
                st.store.add(block)
                self.trace.full_data[(p, b)] = self.now
        if block.header.mode == PROBABILISTIC:
            size = block.wide_header().encoded_size()
        else:
            size = len(block.header.encode())
        self.broadcast("HEADER", p, b, size)

    # -- message handling -------------------------------------------------------
    def handle(self, m: Msg) -> None:
        node = self.nodes[m.dst]
        if m.dst not in self.honest:
            if m.dst == self.cfg.blocks[m.block].producer:
                self.handle_dishonest(m)
                return
            if not node.spec.behavior:
                return  # plain dishonest nodes stay silent
            # a misbehaving storage node follows the protocol and only lies over RPC
        getattr(self, "on_" + m.kind.lower())(node, m)

    def handle_dishonest(self, m: Msg) -> None:
        b = m.block
        p = self.cfg.blocks[b].producer
        block = self.blocks[b]
        if m.kind == "GET_BLOCK" and self.producer_serves_block(b, m.src):
            self.send("BLOCK", p, m.src, b, block.data_size())
        elif m.kind == "SAMPLE_REQ":
            pos = m.body
            if self.producer_serves_cell(b, m.src, pos, bulk=False):
                resp = block.square.sample(*pos)
                self.send("SAMPLE_RESP", p, m.src, b, len(resp.encode()), resp)
        elif m.kind == "GET_CELLS":
            self.serve_cells(p, m.src, b, block.square, lambda pos: self.producer_serves_cell(b, m.src, pos, True))

    def serve_cells(self, src: str, dst: str, b: int, square: ExtendedDataSquare, allow) -> None:
        w = square.width
        mask = np.zeros((w, w), dtype=bool)
        for r in range(w):
            for c in range(w):
                mask[r, c] = square.present[r, c] and allow((r, c))
        n = int(mask.sum())
        if n:
            self.send("CELLS", src, dst, b, n * (4 + square.cell_size), (square.cells, mask))

    def on_header(self, node: _NodeState, m: Msg) -> None:
        b = m.block
        if b in node.headers:
            return
        node.headers[b] = self.now
        me = node.spec.id
        block = self.blocks[b]
        if block.header.mode == SIMPLISTIC:
            self._request_block(node, b, m.src)
            for peer in node.have_peers[b]:
                self._request_block(node, b, peer)
            return
        if node.spec.kind == "storage":
            self.send("GET_CELLS", me, m.src, b, HASH)
            for peer in node.have_peers[b]:
                self.send("GET_CELLS", me, peer, b, HASH)
            return
        k = block.header.k
        n = 4 * k * k
        s = min(node.spec.samples or self.cfg.samples, n)
        pos = [divmod(i, 2 * k) for i in draw_samples(n, s, self._sample_seed(me, b))]
        node.positions[b] = pos
        self.trace.sampled[(me, b)] = pos
        for target in [m.src] + node.have_peers[b]:
            for p in pos:
                self.send("SAMPLE_REQ", me, target, b, HASH + 4, p)

    def _request_block(self, node: _NodeState, b: int, peer: str) -> None:
        if (b, peer) in node.requested or (node.spec.id, b) in self.trace.accept:
            return
        node.requested.add((b, peer))
        self.send("GET_BLOCK", node.spec.id, peer, b, HASH)

    def on_get_block(self, node: _NodeState, m: Msg) -> None:
        me = node.spec.id
        if self.trace.final_accept(me, m.block) is not None:
            self.send("BLOCK", me, m.src, m.block, self.blocks[m.block].data_size())

    def on_block(self, node: _NodeState, m: Msg) -> None:
        me, b = node.spec.id, m.block
        if (me, b) in self.trace.accept:
            return
        block = self.blocks[b]
        if block_valid_simplistic(block.header, block.messages, self.cfg.max_leaf_size):
            node.held[b] = block
            if node.store is not None:
                node.store.add(block)
                self.trace.full_data[(me, b)] = self.now
            self.accept(me, b)

    def on_have(self, node: _NodeState, m: Msg) -> None:
        b = m.block
        me = node.spec.id
        node.have_peers[b].append(m.src)
        if b not in node.headers:
            return
        if self.blocks[b].header.mode == SIMPLISTIC:
            self._request_block(node, b, m.src)
        elif node.spec.kind == "storage":
            if b not in node.done:
                self.send("GET_CELLS", me, m.src, b, HASH)
        elif b in node.positions:
            for p in node.positions[b]:
                if p not in node.responses[b]:
                    self.send("SAMPLE_REQ", me, m.src, b, HASH + 4, p)

    def on_sample_req(self, node: _NodeState, m: Msg) -> None:
        # honest nodes answer only from a square they hold in full
        block = node.held.get(m.block)
        if block is not None:
            resp = block.square.sample(*m.body)
            self.send("SAMPLE_RESP", node.spec.id, m.src, m.block, len(resp.encode()), resp)

    def on_sample_resp(self, node: _NodeState, m: Msg) -> None:
        b, me = m.block, node.spec.id
        resp = m.body
        pos = (resp.row, resp.col)
        if b not in node.positions or pos not in node.positions[b] or pos in node.responses[b]:
            return
        wide = self.blocks[b].wide_header()
        if not resp.verify(wide.row_roots, wide.header.k):
            return
        node.responses[b][pos] = resp
        for st in self.cfg.nodes:
            if st.kind == "storage" and st.id != me:
                self.send("SHARE", me, st.id, b, len(resp.encode()) + HASH, resp)
        if len(node.responses[b]) == len(node.positions[b]):
            if block_valid_probabilistic(wide, node.positions[b], node.responses[b], node.fraud[b]):
                self.accept(me, b)

    def _storage_cells(self, node: _NodeState, b: int):
        if b not in node.cells:
            sq = self.blocks[b].square
            node.cells[b] = np.zeros_like(sq.cells)
            node.mask[b] = np.zeros(sq.present.shape, dtype=bool)
        return node.cells[b], node.mask[b]

    def on_get_cells(self, node: _NodeState, m: Msg) -> None:
        block = node.held.get(m.block)
        if block is not None:
            self.serve_cells(node.spec.id, m.src, m.block, block.square, lambda pos: True)

    def on_cells(self, node: _NodeState, m: Msg) -> None:
        if node.spec.kind != "storage" or m.block in node.done:
            return
        cells, mask = self._storage_cells(node, m.block)
        src_cells, src_mask = m.body
        new = src_mask & ~mask
        cells[new] = src_cells[new]
        mask |= new
        if new.any():
            node.dirty.add(m.block)

    def on_share(self, node: _NodeState, m: Msg) -> None:
        b = m.block
        if node.spec.kind != "storage" or b in node.done:
            return
        resp = m.body
        wide = self.blocks[b].wide_header()
        if not resp.verify(wide.row_roots, wide.header.k):
            return
        cells, mask = self._storage_cells(node, b)
        if not mask[resp.row, resp.col]:
            cells[resp.row, resp.col] = np.frombuffer(resp.cell, dtype=np.uint8)
            mask[resp.row, resp.col] = True
            node.dirty.add(b)

    def on_fraud(self, node: _NodeState, m: Msg) -> None:
        b, me = m.block, node.spec.id
        wide = self.blocks[b].wide_header()
        if not verify_coding_fraud_proof(wide.row_roots, wide.col_roots, m.body):
            return
        node.fraud[b].append(m.body)
        self.trace.record(me, node.spec.kind, self.now, f"fraud_verified:{b}", 1)
        if (me, b) in self.trace.accept:
            self.revoke(me, b)
        else:
            self.trace.revoked[(me, b)] = self.now  # blocks any later acceptance

    def try_rebuild(self, node: _NodeState, b: int) -> None:
        me = node.spec.id
        cells, mask = node.cells[b], node.mask[b]
        k = self.blocks[b].header.k
        if not closure_complete(mask, k):
            return
        wide = self.blocks[b].wide_header()
        partial = ExtendedDataSquare(k, cells.copy(), mask.copy(), wide.row_roots, wide.col_roots)
        try:
            full = reconstruct(partial)
        except Unrecoverable:
            return
        except RootMismatch as bad:
            if not mask.all():
                return  # wait for the whole square before accusing
            proof = gen_coding_fraud_proof(partial, bad.axis, bad.index)
            node.done.add(b)
            self.trace.fraud_emitted.append((me, b, self.now))
            self.trace.record(me, node.spec.kind, self.now, f"fraud_emitted:{b}", len(proof.encode()))
            self.trace.revoked[(me, b)] = self.now
            self.broadcast("FRAUD", me, b, len(proof.encode()) + HASH, proof)
            return
        node.done.add(b)
        self.trace.record(me, node.spec.kind, self.now, f"reconstructed:{b}", int((~mask).sum()))
        block = self.blocks[b]
        msgs = parse_shares(full.original_shares())
        if message_root(msgs, self.cfg.max_leaf_size) != block.header.m_root:
            return
        rebuilt = Block(block.header, tuple(msgs), full, block.share_size)
        node.held[b] = rebuilt
        node.store.add(rebuilt)
        self.trace.full_data[(me, b)] = self.now
        self.accept(me, b)

    # -- main loop ----------------------------------------------------------
    def run(self) -> Trace:
        cfg = self.cfg
        self._withheld = {}
        for b, block in enumerate(self.blocks):
            k = block.header.k
            self._withheld[b] = withheld_cells(cfg.blocks[b].adversary, k) if k else set()
        schedule = defaultdict(list)
        for b, plan in enumerate(cfg.blocks):
            schedule[plan.round].append(b)
        for rnd in range(cfg.rounds + 1):
            self.now = rnd
            for b in schedule.get(rnd, ()):
                self.produce(b)
            for m in self.queue.pop(rnd, []):
                self.handle(m)
            for nid in sorted(self.nodes):
                node = self.nodes[nid]
                for b in sorted(node.dirty):
                    self.try_rebuild(node, b)
                node.dirty.clear()
        self.sync_clients()
        self.summarize()
        return self.trace

    # -- application sync (RPC after the rounds) ---------------------------------
    def node_chain(self, node: str) -> list[int]:
        view = ChainView()
        index = {}
        for b, block in enumerate(self.blocks):
            if (node, b) in self.trace.accept or (node, b) in self.trace.revoked:
                view.add(block.header, self.trace.final_accept(node, b) is not None)
                index[block.hash] = b
        return [index[h] for h in view.main_chain()]

    def sync_clients(self) -> None:
        setup = self.setup
        peers = [self.nodes[n.id].store for n in self.cfg.nodes if n.kind == "storage"]
        for spec in self.cfg.nodes:
            if spec.kind != "client" or not spec.honest:
                continue
            chain = self.node_chain(spec.id)
            for app_name in spec.apps:
                ns = setup.names[app_name] if isinstance(app_name, str) else int(app_name)
                scope = set(dependency_closure(setup.apps, ns))
                states, stats = sync_app(setup.apps, ns, [self.blocks[x].wide_header() for x in chain],
                                         peers, self.cfg.max_leaf_size, partial=True)
                synced = chain[:stats.synced_blocks]
                failed = chain[stats.synced_blocks] if stats.synced_blocks < len(chain) else None
                oracle = replay(setup.apps, ns, [self.blocks[x] for x in synced])
                out_scope = sum(v for k, v in stats.leaf_bytes.items() if k not in scope)
                res = {
                    "chain": synced,
                    "failed_at": failed,
                    "match": states[ns].commitment() == oracle[ns].commitment(),
                    "bytes": stats.total_bytes,
                    "leaf_bytes": dict(stats.leaf_bytes),
                    "out_of_scope_bytes": out_scope,
                    "misbehaving": len(stats.misbehaving),
                    "entries": states[ns].entries(),
                }
                self.trace.sync[(spec.id, ns)] = res
                self.trace.bytes_down[spec.id]["SYNC"] += stats.total_bytes
                r = self.cfg.rounds
                self.trace.record(spec.id, "client", r, f"sync_match:{ns}", int(res["match"]))
                self.trace.record(spec.id, "client", r, f"sync_bytes:{ns}", res["bytes"])
                self.trace.record(spec.id, "client", r, f"sync_out_of_scope_bytes:{ns}", out_scope)
                self.trace.record(spec.id, "client", r, f"sync_misbehaving:{ns}", res["misbehaving"])
                if failed is not None:
                    self.trace.record(spec.id, "client", r, f"sync_failed:{ns}", failed)

    def summarize(self) -> None:
        r = self.cfg.rounds
        for spec in self.cfg.nodes:
            for kind, v in sorted(self.trace.bytes_down[spec.id].items()):
                self.trace.record(spec.id, spec.kind, r, f"bytes_down:{kind}", v)
            for kind, v in sorted(self.trace.bytes_up[spec.id].items()):
                self.trace.record(spec.id, spec.kind, r, f"bytes_up:{kind}", v)
            if spec.id in self.honest:
                for b in range(len(self.blocks)):
                    self.trace.record(spec.id, spec.kind, r, f"verdict:{b}",
                                      int(self.trace.final_accept(spec.id, b) is not None))


def closure_complete(mask: np.ndarray, k: int) -> bool:
    """Whether iterative row/column decoding would fill every cell."""
    m = mask.copy()
    while True:
        rows = m.sum(axis=1) >= k
        cols = m.sum(axis=0) >= k
        grown = m | rows[:, None] | cols[None, :]
        if (grown == m).all():
            return bool(m.all())
        m = grown


def run_scenario(cfg: ScenarioConfig) -> Trace:
    return Simulation(cfg).run()
