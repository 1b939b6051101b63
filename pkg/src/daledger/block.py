"""Headers, blocks, the two validity rules and a longest-chain stub."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import coding
from .coding import (
    CodingFraudProof,
    ExtendedDataSquare,
    SampleResponse,
    split_to_shares,
    verify_coding_fraud_proof,
)
from .nmt import (
    DEFAULT_MAX_LEAF_SIZE,
    PADDING_NAMESPACE,
    PARITY_NAMESPACE,
    Message,
    NamespacedDigest,
    NamespacedMerkleTree,
    NMTError,
    hash_leaf,
    hash_leaf_data,
    split_point,
)
from .wire import read_u32le, u32le

SIMPLISTIC = "simplistic"
PROBABILISTIC = "probabilistic"
MODES = (SIMPLISTIC, PROBABILISTIC)

ZERO_HASH = bytes(32)
HEADER_SIZE = 32 + 8 + 1 + 48 + 32 + 2 + 32
DEFAULT_SAMPLES = 15


class BlockError(Exception):
    pass


class ReservedNamespace(BlockError, ValueError):
    pass


def _h(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def availability_root(line_roots: Sequence[NamespacedDigest]) -> bytes:
    """Plain binary Merkle root over serialized line roots (rows then columns)."""
    if not line_roots:
        return ZERO_HASH
    leaves = [_h(b"\x00" + r.serialize()) for r in line_roots]

    def go(lo: int, hi: int) -> bytes:
        if hi - lo == 1:
            return leaves[lo]
        mid = lo + split_point(hi - lo)
        return _h(b"\x01" + go(lo, mid) + go(mid, hi))

    return go(0, len(leaves))


@dataclass(frozen=True)
class BlockHeader:
    """Compact header; ``encode`` is the preimage of the block hash.

    Field order: prev_hash 32 | height u64 | mode u8 | m_root 48 |
    availability_root 32 | k u16 | producer 32, all big-endian.
    ``producer`` is the key that collects fees for this block.
    """

    prev_hash: bytes
    height: int
    mode: str
    m_root: NamespacedDigest
    availability_root: bytes = ZERO_HASH
    k: int = 0
    producer: bytes = ZERO_HASH

    def encode(self) -> bytes:
        return (
            self.prev_hash
            + struct.pack(">QB", self.height, MODES.index(self.mode))
            + self.m_root.serialize()
            + self.availability_root
            + struct.pack(">H", self.k)
            + self.producer
        )

    @classmethod
    def decode(cls, raw: bytes) -> "BlockHeader":
        if len(raw) != HEADER_SIZE:
            raise ValueError(f"header must be {HEADER_SIZE} bytes")
        height, mode = struct.unpack_from(">QB", raw, 32)
        if mode >= len(MODES):
            raise ValueError("unknown mode")
        (k,) = struct.unpack_from(">H", raw, 121)
        return cls(raw[:32], height, MODES[mode], NamespacedDigest.from_bytes(raw[41:89]),
                   raw[89:121], k, raw[123:155])

    @property
    def hash(self) -> bytes:
        return _h(self.encode())


@dataclass(frozen=True)
class WideHeader:
    """Header plus the 4k line roots it binds through ``availability_root``."""

    header: BlockHeader
    line_roots: tuple

    @property
    def row_roots(self) -> tuple:
        return self.line_roots[: 2 * self.header.k]

    @property
    def col_roots(self) -> tuple:
        return self.line_roots[2 * self.header.k:]

    def consistent(self) -> bool:
        return (len(self.line_roots) == 4 * self.header.k
                and availability_root(self.line_roots) == self.header.availability_root)

    def encoded_size(self) -> int:
        return HEADER_SIZE + 48 * len(self.line_roots)


@dataclass
class Block:
    header: BlockHeader
    messages: tuple
    square: ExtendedDataSquare | None = None
    share_size: int = coding.DEFAULT_SHARE_SIZE

    @property
    def hash(self) -> bytes:
        return self.header.hash

    def wide_header(self) -> WideHeader:
        roots = self.square.line_roots if self.square is not None else ()
        return WideHeader(self.header, tuple(roots))

    def encode(self) -> bytes:
        """Canonical block: header, u32 count, then ns 8 | u32 len | payload."""
        out = bytearray(self.header.encode())
        out += struct.pack(">I", len(self.messages))
        for m in self.messages:
            out += m.namespace.to_bytes(8, "big") + struct.pack(">I", len(m.payload)) + m.payload
        return bytes(out)

    def data_size(self) -> int:
        """Bytes a full download of the message list costs."""
        return len(self.encode()) - HEADER_SIZE


def message_root(messages: Sequence[Message], max_leaf_size: int = DEFAULT_MAX_LEAF_SIZE) -> NamespacedDigest:
    """root(M); an empty list hashes to a single padding leaf."""
    if not messages:
        return hash_leaf_data(PADDING_NAMESPACE, b"")
    return NamespacedMerkleTree([hash_leaf(m, max_leaf_size) for m in messages]).root


def message_tree(messages: Sequence[Message], max_leaf_size: int = DEFAULT_MAX_LEAF_SIZE) -> NamespacedMerkleTree:
    if not messages:
        return NamespacedMerkleTree([hash_leaf_data(PADDING_NAMESPACE, b"")])
    return NamespacedMerkleTree([hash_leaf(m, max_leaf_size) for m in messages])


def make_block(prev: BlockHeader | None, messages: Iterable[Message], mode: str = SIMPLISTIC,
               max_leaf_size: int = DEFAULT_MAX_LEAF_SIZE,
               share_size: int = coding.DEFAULT_SHARE_SIZE,
               producer: bytes = ZERO_HASH) -> Block:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    msgs = sorted(messages, key=lambda m: m.namespace)  # stable
    for m in msgs:
        if m.namespace in (PADDING_NAMESPACE, PARITY_NAMESPACE):
            raise ReservedNamespace(f"namespace {m.namespace:#x} is reserved")
    m_root = message_root(msgs, max_leaf_size)
    prev_hash = prev.hash if prev is not None else ZERO_HASH
    height = prev.height + 1 if prev is not None else 0
    if mode == SIMPLISTIC:
        header = BlockHeader(prev_hash, height, mode, m_root, producer=producer)
        return Block(header, tuple(msgs), None, share_size)
    square = coding.extend_shares(split_to_shares(msgs, share_size), share_size)
    header = BlockHeader(prev_hash, height, mode, m_root,
                         availability_root(square.line_roots), square.k, producer)
    return Block(header, tuple(msgs), square, share_size)


def tamper_encoding(block: Block, axis: str, index: int) -> Block:
    """Corrupt one parity cell of a line and re-commit, as a cheating producer would."""
    sq = block.square
    if sq is None:
        raise ValueError("only probabilistic blocks carry a square")
    w = sq.width
    cells = sq.cells.copy()
    r, c = (index, w - 1) if axis == coding.ROW else (w - 1, index)
    cells[r, c, -1] ^= 0xFF
    bad = ExtendedDataSquare.commit(sq.k, cells)
    h = block.header
    header = BlockHeader(h.prev_hash, h.height, h.mode, h.m_root,
                         availability_root(bad.line_roots), sq.k, h.producer)
    return Block(header, block.messages, bad, block.share_size)


def block_valid_simplistic(header: BlockHeader, messages: Sequence[Message] | None,
                           max_leaf_size: int = DEFAULT_MAX_LEAF_SIZE) -> bool:
    """``messages`` is what the fetch returned, or None when it timed out."""
    if messages is None:
        return False
    try:
        for m in messages:
            if m.namespace in (PADDING_NAMESPACE, PARITY_NAMESPACE):
                return False
        return message_root(list(messages), max_leaf_size) == header.m_root
    except (NMTError, ValueError):
        return False


def sample_position(index: int, k: int) -> tuple[int, int]:
    return divmod(index, 2 * k)


def block_valid_probabilistic(wide: WideHeader, requested: Sequence[tuple[int, int]],
                              responses: Mapping[tuple[int, int], SampleResponse | None],
                              fraud_inbox: Iterable[CodingFraudProof] = ()) -> bool:
    """All requested cells answered and authenticated, and no valid fraud proof known."""
    if not wide.consistent():
        return False
    k = wide.header.k
    for pos in requested:
        resp = responses.get(pos)
        if resp is None or (resp.row, resp.col) != tuple(pos):
            return False
        if not resp.verify(wide.row_roots, k):
            return False
    return not any(verify_coding_fraud_proof(wide.row_roots, wide.col_roots, p) for p in fraud_inbox)


@dataclass
class ChainView:
    headers: dict = field(default_factory=dict)   # hash -> BlockHeader
    valid: dict = field(default_factory=dict)     # hash -> bool

    def add(self, header: BlockHeader, valid: bool) -> None:
        self.headers[header.hash] = header
        self.valid[header.hash] = valid

    def _valid_to_genesis(self, h: bytes, memo: dict) -> bool:
        chain = []
        cur = h
        while cur not in memo:
            hdr = self.headers.get(cur)
            if hdr is None or not self.valid.get(cur, False):
                memo[cur] = False
                break
            chain.append(cur)
            if hdr.height == 0:
                memo[cur] = hdr.prev_hash == ZERO_HASH
                break
            cur = hdr.prev_hash
        ok = memo[cur]
        for x in chain:
            memo[x] = ok
        return ok

    def best_tip(self) -> bytes | None:
        memo: dict = {}
        best = None
        for h, hdr in self.headers.items():
            if not self._valid_to_genesis(h, memo):
                continue
            if best is None or (hdr.height, _neg(h)) > (self.headers[best].height, _neg(best)):
                best = h
        return best

    def main_chain(self) -> list[bytes]:
        tip = self.best_tip()
        out = []
        while tip is not None and tip in self.headers:
            out.append(tip)
            hdr = self.headers[tip]
            tip = hdr.prev_hash if hdr.height > 0 else None
        out.reverse()
        return out


def _neg(h: bytes) -> bytes:
    # smaller hash wins ties, so compare on the complement
    return bytes(255 - b for b in h)


def in_chain(header: BlockHeader, view: ChainView) -> bool:
    return header.hash in set(view.main_chain())


def write_archive(path, blocks: Sequence[Block]) -> None:
    with open(path, "wb") as fh:
        for b in blocks:
            raw = b.encode()
            fh.write(u32le(len(raw)))
            fh.write(raw)


def decode_block_messages(raw: bytes) -> tuple[BlockHeader, list[Message]]:
    header = BlockHeader.decode(raw[:HEADER_SIZE])
    pos = HEADER_SIZE
    (count,) = struct.unpack_from(">I", raw, pos)
    pos += 4
    msgs = []
    for _ in range(count):
        ns = int.from_bytes(raw[pos:pos + 8], "big")
        (n,) = struct.unpack_from(">I", raw, pos + 8)
        pos += 12
        if pos + n > len(raw):
            raise ValueError("truncated message")
        msgs.append(Message(ns, raw[pos:pos + n]))
        pos += n
    if pos != len(raw):
        raise ValueError("trailing bytes in block")
    return header, msgs


def read_archive(path, share_size: int = coding.DEFAULT_SHARE_SIZE) -> list[Block]:
    """Load blocks; probabilistic squares are rebuilt and checked against the header."""
    with open(path, "rb") as fh:
        data = fh.read()
    blocks = []
    pos = 0
    while pos < len(data):
        n, pos = read_u32le(data, pos)
        header, msgs = decode_block_messages(data[pos:pos + n])
        pos += n
        square = None
        if header.mode == PROBABILISTIC:
            square = coding.extend_shares(split_to_shares(msgs, share_size), share_size)
            if availability_root(square.line_roots) != header.availability_root:
                raise ValueError(f"block at height {header.height} does not match its square")
        blocks.append(Block(header, tuple(msgs), square, share_size))
    return blocks

