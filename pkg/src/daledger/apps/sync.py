"""Client-side application sync against storage peers.

A client asks storage peers for the messages of its app namespace (and of
every dependency) in each accepted block, checks the namespace proof, and
runs the transitions.  A peer that returns a proof that does not verify is
marked misbehaving and the next peer is tried.

Simplistic blocks are queried against the message tree (``m_root``).
Probabilistic blocks are queried row by row against the namespaced row
roots of the square: only rows ``i`` with ``min_i <= nid <= min_{i+1}`` can
hold the namespace, and each such row returns a complete-range proof.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

from ..block import PROBABILISTIC, Block, WideHeader, message_tree
from ..coding import MalformedShares, Share, parse_shares
from ..nmt import (
    MAX_NAMESPACE,
    DEFAULT_MAX_LEAF_SIZE,
    Message,
    NamespacedDigest,
    NamespaceProof,
    hash_leaf_data,
    ns_bytes,
    route_for_index,
    verify_inclusion,
    verify_namespace,
    verify_namespace_leaves,
)
from .state import AppDescriptor, AppState, apply_block, dependency_closure


class PeerMisbehavior(Exception):
    pass


class SyncFailed(Exception):
    pass


@dataclass(frozen=True)
class RowSlice:
    row: int
    cells: tuple
    proof: NamespaceProof

    def encoded_size(self) -> int:
        return 2 + 2 + sum(len(c) for c in self.cells) + 4 + len(self.proof.encode())


@dataclass(frozen=True)
class NamespaceResponse:
    """Either messages + proof (simplistic) or per-row slices (probabilistic)."""

    messages: tuple = ()
    proof: NamespaceProof | None = None
    rows: tuple = ()

    def leaf_bytes(self) -> int:
        if self.proof is not None:
            return sum(8 + 4 + len(m.payload) for m in self.messages)
        return sum(len(c) for r in self.rows for c in r.cells)

    def leaf_bytes_by_ns(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for m in self.messages:
            out[m.namespace] = out.get(m.namespace, 0) + 8 + 4 + len(m.payload)
        for r in self.rows:
            for c in r.cells:
                ns = int.from_bytes(c[:8], "big")
                out[ns] = out.get(ns, 0) + len(c)
        return out

    def proof_bytes(self) -> int:
        if self.proof is not None:
            return 4 + len(self.proof.encode())
        return sum(r.encoded_size() - sum(len(c) for c in r.cells) for r in self.rows)

    def encoded_size(self) -> int:
        return self.leaf_bytes() + self.proof_bytes()


@dataclass(frozen=True)
class InclusionResponse:
    namespace: int
    index: int
    leaf_count: int
    path: tuple

    def encoded_size(self) -> int:
        return 8 + 4 + 4 + 1 + 49 * len(self.path)


class StoragePeer(Protocol):
    peer_id: str

    def namespace_query(self, block_hash: bytes, nid: int, rows: Sequence[int] = ()) -> NamespaceResponse | None: ...

    def inclusion_query(self, block_hash: bytes, leaf_digest: bytes) -> InclusionResponse | None: ...


class BlockStore:
    """An honest storage peer over complete blocks."""

    def __init__(self, peer_id: str = "store", max_leaf_size: int = DEFAULT_MAX_LEAF_SIZE):
        self.peer_id = peer_id
        self.max_leaf_size = max_leaf_size
        self.blocks: dict[bytes, Block] = {}
        self._trees: dict = {}

    def add(self, block: Block) -> None:
        self.blocks[block.hash] = block

    def __contains__(self, block_hash: bytes) -> bool:
        return block_hash in self.blocks

    def _tree(self, block: Block):
        t = self._trees.get(block.hash)
        if t is None:
            t = message_tree(block.messages, self.max_leaf_size)
            self._trees[block.hash] = t
        return t

    def namespace_query(self, block_hash: bytes, nid: int, rows: Sequence[int] = ()) -> NamespaceResponse | None:
        block = self.blocks.get(block_hash)
        if block is None:
            return None
        if block.header.mode != PROBABILISTIC:
            tree = self._tree(block)
            start, end = tree.namespace_range(nid)
            return NamespaceResponse(tuple(block.messages[start:end]), tree.prove_namespace(nid))
        sq = block.square
        out = []
        for r in rows:
            if not 0 <= r < sq.k:
                return None
            tree = sq.tree("row", r)
            start, end = tree.namespace_range(nid)
            cells = tuple(sq.cells[r, j].tobytes() for j in range(start, end))
            out.append(RowSlice(r, cells, tree.prove_namespace(nid)))
        return NamespaceResponse(rows=tuple(out))

    def inclusion_query(self, block_hash: bytes, leaf_digest: bytes) -> InclusionResponse | None:
        block = self.blocks.get(block_hash)
        if block is None or not block.messages:
            return None
        tree = self._tree(block)
        for i, leaf in enumerate(tree.leaves):
            if leaf.digest == leaf_digest:
                return InclusionResponse(leaf.min_ns, i, len(tree), tree.path(i))
        return None


def candidate_rows(wide: WideHeader, nid: int) -> list[int]:
    k = wide.header.k
    mins = [r.min_ns for r in wide.row_roots[:k]] + [MAX_NAMESPACE]
    return [i for i in range(k) if mins[i] <= nid <= mins[i + 1]]


def check_namespace_response(wide: WideHeader, nid: int, resp: NamespaceResponse,
                             max_leaf_size: int = DEFAULT_MAX_LEAF_SIZE) -> list[Message] | None:
    """Verified message list for ``nid`` or None if the response is not a complete proof."""
    header = wide.header
    if header.mode != PROBABILISTIC:
        if resp.proof is None:
            return None
        msgs = list(resp.messages)
        return msgs if verify_namespace(header.m_root, nid, msgs, resp.proof, max_leaf_size) else None
    rows = candidate_rows(wide, nid)
    if [r.row for r in resp.rows] != rows:
        return None
    prefix = ns_bytes(nid)
    shares = []
    for sl in resp.rows:
        if any(len(c) <= 8 or c[:8] != prefix for c in sl.cells):
            return None
        leaves = [hash_leaf_data(nid, c) for c in sl.cells]
        if not verify_namespace_leaves(wide.row_roots[sl.row], nid, leaves, sl.proof):
            return None
        shares.extend(Share(nid, c[8:]) for c in sl.cells)
    try:
        return parse_shares(shares)
    except MalformedShares:
        # committed garbage parses to nothing, the same for every client
        return []


def check_inclusion(header_root: NamespacedDigest, leaf_digest: bytes, resp: InclusionResponse) -> bool:
    try:
        if [s.sibling_is_left for s in resp.path] != route_for_index(resp.index, resp.leaf_count):
            return False
        leaf = NamespacedDigest(resp.namespace, resp.namespace, leaf_digest)
    except (IndexError, ValueError):
        return False
    return verify_inclusion(header_root, leaf, resp.path)


@dataclass
class SyncStats:
    leaf_bytes: dict = field(default_factory=dict)   # namespace -> bytes of leaf data
    proof_bytes: int = 0
    inclusion_bytes: int = 0
    misbehaving: list = field(default_factory=list)  # (peer_id, height, namespace)
    synced_blocks: int = 0

    @property
    def total_bytes(self) -> int:
        return sum(self.leaf_bytes.values()) + self.proof_bytes + self.inclusion_bytes

    def add_leaf(self, ns: int, n: int) -> None:
        self.leaf_bytes[ns] = self.leaf_bytes.get(ns, 0) + n


def sync_app(apps: Mapping[int, AppDescriptor], target: int, headers: Sequence[WideHeader],
             peers: Sequence[StoragePeer], max_leaf_size: int = DEFAULT_MAX_LEAF_SIZE,
             stats: SyncStats | None = None, partial: bool = False) -> tuple[dict[int, AppState], SyncStats]:
    """Sync ``target`` and its dependencies over ``headers`` (in chain order).

    With ``partial`` a block no peer can serve ends the sync there instead of
    raising; ``stats.synced_blocks`` says how far it got.
    """
    stats = stats if stats is not None else SyncStats()
    order = dependency_closure(apps, target)
    states = {ns: apps[ns].genesis() for ns in order}
    for wide in headers:
        h = wide.header
        by_ns = {}
        try:
            for ns in order:
                by_ns[ns] = [m.payload for m in _fetch_namespace(wide, ns, peers, stats, max_leaf_size)]
        except SyncFailed:
            if partial:
                break
            raise
        cache: dict[bytes, bool] = {}

        def includes(leaf: bytes, wide=wide) -> bool:
            if leaf not in cache:
                cache[leaf] = _fetch_inclusion(wide, leaf, peers, stats)
            return cache[leaf]

        apply_block(apps, states, order, by_ns, h.height, h.producer, includes)
        stats.synced_blocks += 1
    return states, stats


def _fetch_namespace(wide: WideHeader, nid: int, peers: Sequence[StoragePeer], stats: SyncStats,
                     max_leaf_size: int) -> list[Message]:
    rows = candidate_rows(wide, nid) if wide.header.mode == PROBABILISTIC else ()
    for peer in peers:
        resp = peer.namespace_query(wide.header.hash, nid, rows)
        if resp is None:
            continue
        for ns, n in resp.leaf_bytes_by_ns().items():
            stats.add_leaf(ns, n)
        stats.proof_bytes += resp.proof_bytes()
        msgs = check_namespace_response(wide, nid, resp, max_leaf_size)
        if msgs is None:
            stats.misbehaving.append((peer.peer_id, wide.header.height, nid))
            continue
        return msgs
    raise SyncFailed(f"no peer served a complete proof for namespace {nid} at height {wide.header.height}")


def _fetch_inclusion(wide: WideHeader, leaf: bytes, peers: Sequence[StoragePeer], stats: SyncStats) -> bool:
    for peer in peers:
        resp = peer.inclusion_query(wide.header.hash, leaf)
        if resp is None:
            continue
        stats.inclusion_bytes += resp.encoded_size()
        if check_inclusion(wide.header.m_root, leaf, resp):
            return True
        stats.misbehaving.append((peer.peer_id, wide.header.height, None))
    return False


class OmittingStore(BlockStore):
    """Dishonest peer: drops the last message of one namespace and its path."""

    def __init__(self, peer_id: str, omit_ns: int, max_leaf_size: int = DEFAULT_MAX_LEAF_SIZE):
        super().__init__(peer_id, max_leaf_size)
        self.omit_ns = omit_ns

    def namespace_query(self, block_hash, nid, rows=()):
        resp = super().namespace_query(block_hash, nid, rows)
        if resp is None or nid != self.omit_ns:
            return resp
        if resp.proof is not None:
            if resp.proof.is_absence or not resp.messages:
                return resp
            p = resp.proof
            return NamespaceResponse(resp.messages[:-1],
                                     NamespaceProof(p.start_index, p.paths[:-1], p.leaf_count))
        slices = list(resp.rows)
        for i in range(len(slices) - 1, -1, -1):
            sl = slices[i]
            if sl.cells:
                p = sl.proof
                slices[i] = RowSlice(sl.row, sl.cells[:-1],
                                     NamespaceProof(p.start_index, p.paths[:-1], p.leaf_count))
                break
        return NamespaceResponse(rows=tuple(slices))

    def inclusion_query(self, block_hash, leaf_digest):
        return None

