"""Shares, the 2D erasure-coded data square, reconstruction and fraud proofs.

Each cell of the extended square holds ``8 + share_size`` bytes.  Original
cells are ``ns || data``; every byte position (namespace slot included) is
Reed-Solomon extended along rows and then along all columns, so missing
original cells get their namespace back when decoded.  In the row and
column trees an original cell is labelled with its namespace and every
parity cell with PARITY_NAMESPACE; the leaf payload is always the full cell.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import gf256
from .nmt import (
    PADDING_NAMESPACE,
    PARITY_NAMESPACE,
    Message,
    NamespacedDigest,
    NamespacedMerkleTree,
    OrderingViolation,
    ProofStep,
    UnsortedInput,
    hash_leaf_data,
    ns_bytes,
    root_of,
    route_for_index,
    verify_inclusion,
)
from .wire import decode_varint, encode_varint

DEFAULT_SHARE_SIZE = 225
NS = 8

ROW = "row"
COL = "col"
AXES = (ROW, COL)

FRAUD_PROOF_VERSION = 1


class CodingError(Exception):
    pass


class MalformedShares(CodingError, ValueError):
    pass


class Unrecoverable(CodingError):
    def __init__(self, missing: int):
        super().__init__(f"{missing} cells cannot be recovered")
        self.missing = missing


class RootMismatch(CodingError):
    def __init__(self, axis: str, index: int):
        super().__init__(f"{axis} {index} does not match its committed root")
        self.axis = axis
        self.index = index


class NotFraudulent(CodingError):
    pass


class MalformedFraudProof(CodingError, ValueError):
    pass


@dataclass(frozen=True)
class Share:
    """A fixed-size cell.

    Parity shares carry PARITY_NAMESPACE as their label; the eight coded
    bytes that occupy their namespace slot travel in ``coded_prefix``.
    """

    namespace: int
    data: bytes
    coded_prefix: bytes | None = None

    @property
    def is_parity(self) -> bool:
        return self.coded_prefix is not None

    def serialize(self) -> bytes:
        prefix = self.coded_prefix if self.coded_prefix is not None else ns_bytes(self.namespace)
        return prefix + self.data

    def leaf(self) -> NamespacedDigest:
        return hash_leaf_data(self.namespace, self.serialize())

    @classmethod
    def from_cell(cls, raw: bytes, parity: bool) -> "Share":
        raw = bytes(raw)
        if parity:
            return cls(PARITY_NAMESPACE, raw[NS:], raw[:NS])
        return cls(int.from_bytes(raw[:NS], "big"), raw[NS:])


def padding_share(share_size: int = DEFAULT_SHARE_SIZE) -> Share:
    return Share(PADDING_NAMESPACE, bytes(share_size))


def split_to_shares(messages: Sequence[Message], share_size: int = DEFAULT_SHARE_SIZE) -> list[Share]:
    """Serialize sorted messages into per-namespace runs of shares.

    A run is ``varint(count) || (varint(len) || payload)*``, cut into
    ``share_size`` chunks with the last chunk zero-padded.  The count prefix
    keeps trailing empty messages distinguishable from padding.
    """
    if share_size < 1:
        raise ValueError("share size must be positive")
    for i in range(len(messages) - 1):
        if messages[i].namespace > messages[i + 1].namespace:
            raise UnsortedInput(f"messages {i} and {i + 1} are out of namespace order")
    shares: list[Share] = []
    i = 0
    while i < len(messages):
        ns = messages[i].namespace
        j = i
        while j < len(messages) and messages[j].namespace == ns:
            j += 1
        buf = bytearray(encode_varint(j - i))
        for m in messages[i:j]:
            buf += encode_varint(len(m.payload))
            buf += m.payload
        for off in range(0, len(buf), share_size):
            chunk = bytes(buf[off:off + share_size])
            shares.append(Share(ns, chunk + bytes(share_size - len(chunk))))
        i = j
    return shares


def parse_shares(shares: Iterable[Share]) -> list[Message]:
    """Inverse of :func:`split_to_shares`; padding and parity shares are skipped."""
    out: list[Message] = []
    runs: list[tuple[int, bytearray]] = []
    for share in shares:
        if share.is_parity or share.namespace in (PADDING_NAMESPACE, PARITY_NAMESPACE):
            continue
        if runs and runs[-1][0] == share.namespace:
            runs[-1][1].extend(share.data)
        else:
            if runs and runs[-1][0] > share.namespace:
                raise MalformedShares("shares are out of namespace order")
            runs.append((share.namespace, bytearray(share.data)))
    for ns, buf in runs:
        try:
            count, pos = decode_varint(buf, 0)
            for _ in range(count):
                n, pos = decode_varint(buf, pos)
                if pos + n > len(buf):
                    raise MalformedShares(f"message of {n} bytes truncated in namespace {ns}")
                out.append(Message(ns, bytes(buf[pos:pos + n])))
                pos += n
        except ValueError as exc:
            if isinstance(exc, MalformedShares):
                raise
            raise MalformedShares(str(exc)) from exc
        if any(buf[pos:]):
            raise MalformedShares(f"non-zero bytes after the last message of namespace {ns}")
    return out


def square_size(n_shares: int) -> int:
    """Smallest power of two k with k*k >= n_shares (at least 1)."""
    k = 1
    while k * k < n_shares:
        k *= 2
    return k


def _label(k: int, r: int, c: int, raw) -> int:
    if r >= k or c >= k:
        return PARITY_NAMESPACE
    return int.from_bytes(bytes(raw[:NS]), "big")


def _line_leaves(k: int, axis: str, index: int, line: np.ndarray) -> list[NamespacedDigest]:
    leaves = []
    for j in range(2 * k):
        r, c = (index, j) if axis == ROW else (j, index)
        raw = line[j].tobytes()
        leaves.append(hash_leaf_data(_label(k, r, c, raw), raw))
    return leaves


def line_root(k: int, axis: str, index: int, line: np.ndarray) -> NamespacedDigest:
    """Namespaced root over one complete line of raw cells (shape 2k x C)."""
    return root_of(_line_leaves(k, axis, index, line))


def extend_cells(original: np.ndarray) -> np.ndarray:
    """Extend a k x k x C cell array to 2k x 2k x C (rows first, then columns)."""
    k = original.shape[0]
    cell = original.shape[2]
    out = np.zeros((2 * k, 2 * k, cell), dtype=np.uint8)
    out[:k, :k] = original
    # symbol index first: (col, row, byte)
    row_parity = gf256.extend(original.transpose(1, 0, 2))
    out[:k, k:] = row_parity.transpose(1, 0, 2)
    out[k:, :] = gf256.extend(out[:k, :])
    return out


class ExtendedDataSquare:
    """A 2k x 2k cell grid with its committed row and column roots.

    Cells may be absent (``present`` False) when the square is a partial view
    held by a sampler or a storage node that is still collecting.
    """

    def __init__(self, k: int, cells: np.ndarray, present: np.ndarray,
                 row_roots: Sequence[NamespacedDigest], col_roots: Sequence[NamespacedDigest]):
        if cells.shape[:2] != (2 * k, 2 * k) or present.shape != (2 * k, 2 * k):
            raise ValueError("cell grid does not match k")
        if len(row_roots) != 2 * k or len(col_roots) != 2 * k:
            raise ValueError("need 2k row roots and 2k column roots")
        self.k = k
        self.cells = cells
        self.present = present
        self.row_roots = tuple(row_roots)
        self.col_roots = tuple(col_roots)
        self._trees: dict[tuple[str, int], NamespacedMerkleTree] = {}

    @classmethod
    def commit(cls, k: int, cells: np.ndarray) -> "ExtendedDataSquare":
        """Compute roots over a complete grid exactly as given (no re-encoding)."""
        w = 2 * k
        leaves = [[None] * w for _ in range(w)]
        for r in range(w):
            for c in range(w):
                raw = cells[r, c].tobytes()
                leaves[r][c] = hash_leaf_data(_label(k, r, c, raw), raw)
        row_roots = [root_of(leaves[r]) for r in range(w)]
        col_roots = [root_of([leaves[r][c] for r in range(w)]) for c in range(w)]
        sq = cls(k, cells, np.ones((w, w), dtype=bool), row_roots, col_roots)
        sq._leaves = leaves
        return sq

    @property
    def width(self) -> int:
        return 2 * self.k

    @property
    def cell_size(self) -> int:
        return self.cells.shape[2]

    @property
    def share_size(self) -> int:
        return self.cell_size - NS

    @property
    def line_roots(self) -> tuple[NamespacedDigest, ...]:
        return self.row_roots + self.col_roots

    def is_complete(self) -> bool:
        return bool(self.present.all())

    def label(self, r: int, c: int) -> int:
        return _label(self.k, r, c, self.cells[r, c])

    def share(self, r: int, c: int) -> Share | None:
        if not self.present[r, c]:
            return None
        return Share.from_cell(self.cells[r, c].tobytes(), r >= self.k or c >= self.k)

    def line(self, axis: str, index: int) -> list[Share | None]:
        if axis == ROW:
            return [self.share(index, j) for j in range(self.width)]
        return [self.share(j, index) for j in range(self.width)]

    def original_shares(self) -> list[Share]:
        return [self.share(r, c) for r in range(self.k) for c in range(self.k)]

    def tree(self, axis: str, index: int) -> NamespacedMerkleTree:
        key = (axis, index)
        if key not in self._trees:
            line = self.cells[index] if axis == ROW else self.cells[:, index]
            mask = self.present[index] if axis == ROW else self.present[:, index]
            if not mask.all():
                raise ValueError(f"{axis} {index} is incomplete")
            self._trees[key] = NamespacedMerkleTree(_line_leaves(self.k, axis, index, line))
        return self._trees[key]

    def withhold(self, positions: Iterable[tuple[int, int]]) -> "ExtendedDataSquare":
        present = self.present.copy()
        for r, c in positions:
            present[r, c] = False
        cells = self.cells.copy()
        cells[~present] = 0
        return ExtendedDataSquare(self.k, cells, present, self.row_roots, self.col_roots)

    def sample(self, r: int, c: int) -> "SampleResponse":
        if not self.present[r, c]:
            raise KeyError((r, c))
        return SampleResponse(r, c, self.cells[r, c].tobytes(), self.tree(ROW, r).path(c))


def extend_data(original: Sequence[Sequence[Share]]) -> ExtendedDataSquare:
    """Erasure-code a k x k grid of shares (k a power of two, row-major sorted)."""
    k = len(original)
    if k < 1 or k & (k - 1):
        raise ValueError("k must be a power of two")
    if any(len(row) != k for row in original):
        raise ValueError("original data must be square")
    size = {len(s.data) for row in original for s in row}
    if len(size) != 1:
        raise ValueError("all shares must have the same size")
    flat = [s for row in original for s in row]
    for i in range(len(flat) - 1):
        if flat[i].namespace > flat[i + 1].namespace:
            raise UnsortedInput("original shares must be namespace sorted row-major")
    cell = NS + size.pop()
    grid = np.frombuffer(b"".join(s.serialize() for s in flat), dtype=np.uint8).reshape(k, k, cell)
    return ExtendedDataSquare.commit(k, extend_cells(grid))


def extend_shares(shares: Sequence[Share], share_size: int = DEFAULT_SHARE_SIZE) -> ExtendedDataSquare:
    """Pad a share list to a power-of-two square and extend it."""
    k = square_size(len(shares))
    padded = list(shares) + [padding_share(share_size)] * (k * k - len(shares))
    return extend_data([padded[r * k:(r + 1) * k] for r in range(k)])


def reconstruct(square: ExtendedDataSquare,
                row_roots: Sequence[NamespacedDigest] | None = None,
                col_roots: Sequence[NamespacedDigest] | None = None) -> ExtendedDataSquare:
    """Fill missing cells by iterative row/column decoding, then check roots.

    Raises Unrecoverable if the fixpoint leaves holes and RootMismatch for
    the first line whose re-encoding does not hash to its commitment.
    """
    k = square.k
    w = 2 * k
    row_roots = tuple(row_roots) if row_roots is not None else square.row_roots
    col_roots = tuple(col_roots) if col_roots is not None else square.col_roots
    cells = square.cells.copy()
    present = square.present.copy()

    progress = True
    while progress and not present.all():
        progress = False
        for axis in AXES:
            for i in range(w):
                mask = present[i] if axis == ROW else present[:, i]
                known = int(mask.sum())
                if k <= known < w:
                    pos = np.flatnonzero(mask).tolist()
                    line = cells[i] if axis == ROW else cells[:, i]
                    full = gf256.decode(pos, line[pos], k)
                    # only holes are filled; received cells stay as they came
                    hole = ~mask
                    if axis == ROW:
                        cells[i, hole] = full[hole]
                        present[i] = True
                    else:
                        cells[hole, i] = full[hole]
                        present[:, i] = True
                    progress = True
    if not present.all():
        raise Unrecoverable(int((~present).sum()))

    for axis in AXES:
        roots = row_roots if axis == ROW else col_roots
        for i in range(w):
            line = cells[i] if axis == ROW else cells[:, i]
            if _reencoded_root(k, axis, i, line) != roots[i]:
                raise RootMismatch(axis, i)
    return ExtendedDataSquare(k, cells, present, row_roots, col_roots)


def _reencoded_root(k: int, axis: str, index: int, line: np.ndarray) -> NamespacedDigest | None:
    """Root of the line rebuilt from its first k cells; None if unhashable."""
    fixed = line.copy()
    fixed[k:] = gf256.extend(line[:k])
    try:
        return line_root(k, axis, index, fixed)
    except OrderingViolation:
        return None


@dataclass(frozen=True)
class SampleResponse:
    """One cell plus its audit path in the row tree."""

    row: int
    col: int
    cell: bytes
    path: tuple

    def encode(self) -> bytes:
        out = bytearray(struct.pack(">HHH", self.row, self.col, len(self.cell)))
        out += self.cell
        out += struct.pack(">B", len(self.path))
        for step in self.path:
            out += step.sibling.serialize()
        return bytes(out)

    @classmethod
    def decode(cls, raw: bytes, k: int) -> "SampleResponse":
        row, col, size = struct.unpack_from(">HHH", raw, 0)
        pos = 6
        cell = raw[pos:pos + size]
        pos += size
        depth = raw[pos]
        pos += 1
        sides = route_for_index(col, 2 * k)
        if len(sides) != depth:
            raise ValueError("path depth does not match square size")
        steps = []
        for side in sides:
            steps.append(ProofStep(NamespacedDigest.from_bytes(raw[pos:pos + 48]), side))
            pos += 48
        if pos != len(raw):
            raise ValueError("trailing bytes")
        return cls(row, col, bytes(cell), tuple(steps))

    def verify(self, row_roots: Sequence[NamespacedDigest], k: int) -> bool:
        w = 2 * k
        if not (0 <= self.row < w and 0 <= self.col < w) or len(row_roots) != w:
            return False
        if [s.sibling_is_left for s in self.path] != route_for_index(self.col, w):
            return False
        leaf = hash_leaf_data(_label(k, self.row, self.col, self.cell), self.cell)
        return verify_inclusion(row_roots[self.row], leaf, self.path)


def sample_response_size(k: int, share_size: int) -> int:
    return 6 + NS + share_size + 1 + 48 * int(math.log2(2 * k))


@dataclass(frozen=True)
class CodingFraudProof:
    """A full line whose cells authenticate against the orthogonal roots.

    ``paths[j]`` proves cell j of the line inside orthogonal line j, where it
    sits at position ``index``.
    """

    axis: str
    index: int
    k: int
    cells: tuple
    paths: tuple

    def encode(self) -> bytes:
        """Versioned binary form.

        header  : version u8, axis u8, index u16, k u16, cell size u16
        cells   : 2k raw cells back to back
        paths   : per cell, a bitmap (1 bit per level, leaf first) marking
                  siblings whose range is PARITY..PARITY; those siblings are
                  sent as the bare 32-byte digest, the rest as 48 bytes.
                  Sibling sides follow from ``index`` and are not sent.
        """
        cell_size = len(self.cells[0])
        out = bytearray(struct.pack(">BBHHH", FRAUD_PROOF_VERSION, AXES.index(self.axis),
                                    self.index, self.k, cell_size))
        for cell in self.cells:
            out += cell
        depth = int(math.log2(2 * self.k))
        nbitmap = (depth + 7) // 8
        for path in self.paths:
            bits = 0
            body = bytearray()
            for level, step in enumerate(path):
                s = step.sibling
                if s.min_ns == PARITY_NAMESPACE and s.max_ns == PARITY_NAMESPACE:
                    bits |= 1 << level
                    body += s.digest
                else:
                    body += s.serialize()
            out += bits.to_bytes(nbitmap, "big")
            out += body
        return bytes(out)

    @classmethod
    def decode(cls, raw: bytes) -> "CodingFraudProof":
        try:
            version, axis, index, k, cell_size = struct.unpack_from(">BBHHH", raw, 0)
            if version != FRAUD_PROOF_VERSION or axis > 1 or k < 1 or k & (k - 1):
                raise MalformedFraudProof("bad header")
            w = 2 * k
            if index >= w:
                raise MalformedFraudProof("line index out of range")
            pos = 8
            cells = []
            for _ in range(w):
                cell = raw[pos:pos + cell_size]
                if len(cell) != cell_size:
                    raise MalformedFraudProof("truncated cell")
                cells.append(bytes(cell))
                pos += cell_size
            depth = int(math.log2(w))
            nbitmap = (depth + 7) // 8
            sides = route_for_index(index, w)
            paths = []
            for _ in range(w):
                bits = int.from_bytes(raw[pos:pos + nbitmap], "big")
                if len(raw[pos:pos + nbitmap]) != nbitmap or bits >> depth:
                    raise MalformedFraudProof("bad sibling bitmap")
                pos += nbitmap
                steps = []
                for level in range(depth):
                    if bits >> level & 1:
                        d = raw[pos:pos + 32]
                        sib = NamespacedDigest(PARITY_NAMESPACE, PARITY_NAMESPACE, bytes(d))
                        pos += 32
                    else:
                        sib = NamespacedDigest.from_bytes(raw[pos:pos + 48])
                        pos += 48
                    steps.append(ProofStep(sib, sides[level]))
                paths.append(tuple(steps))
        except (struct.error, ValueError) as exc:
            if isinstance(exc, MalformedFraudProof):
                raise
            raise MalformedFraudProof(str(exc)) from exc
        if pos != len(raw):
            raise MalformedFraudProof("trailing bytes")
        return cls(AXES[axis], index, k, tuple(cells), tuple(paths))


def gen_coding_fraud_proof(square: ExtendedDataSquare, axis: str, index: int) -> CodingFraudProof:
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    if not square.is_complete():
        raise ValueError("a fraud proof needs the complete square")
    k = square.k
    line = square.cells[index] if axis == ROW else square.cells[:, index]
    committed = square.row_roots[index] if axis == ROW else square.col_roots[index]
    if _reencoded_root(k, axis, index, line) == committed:
        raise NotFraudulent(f"{axis} {index} is correctly encoded")
    other = COL if axis == ROW else ROW
    cells = tuple(line[j].tobytes() for j in range(2 * k))
    paths = tuple(square.tree(other, j).path(index) for j in range(2 * k))
    return CodingFraudProof(axis, index, k, cells, paths)


def verify_coding_fraud_proof(row_roots: Sequence[NamespacedDigest],
                              col_roots: Sequence[NamespacedDigest],
                              proof: CodingFraudProof) -> bool:
    """True iff the proof's cells are committed and their line is misencoded."""
    k = proof.k
    w = 2 * k
    if proof.axis not in AXES or not 0 <= proof.index < w:
        return False
    if len(row_roots) != w or len(col_roots) != w:
        return False
    if len(proof.cells) != w or len(proof.paths) != w:
        return False
    if len({len(c) for c in proof.cells}) != 1 or len(proof.cells[0]) <= NS:
        return False
    sides = route_for_index(proof.index, w)
    ortho = col_roots if proof.axis == ROW else row_roots
    committed = row_roots[proof.index] if proof.axis == ROW else col_roots[proof.index]
    for j, (cell, path) in enumerate(zip(proof.cells, proof.paths)):
        if [s.sibling_is_left for s in path] != sides:
            return False
        r, c = (proof.index, j) if proof.axis == ROW else (j, proof.index)
        leaf = hash_leaf_data(_label(k, r, c, cell), cell)
        if not verify_inclusion(ortho[j], leaf, path):
            return False
    line = np.frombuffer(b"".join(proof.cells), dtype=np.uint8).reshape(w, -1)
    return _reencoded_root(k, proof.axis, proof.index, line) != committed
