"""Namespaced Merkle tree.

Every node label carries the lowest and highest namespace found beneath it,
so a verifier can tell from an ordinary audit path whether leaves of a given
namespace were left out on either side of the returned range.

Byte layout (bit-exact, SHA-256):

    NamespacedDigest = min_ns (8B BE) || max_ns (8B BE) || digest (32B)
    leaf preimage    = 0x00 || ns (8B BE) || payload
    node preimage    = 0x01 || left.serialize() || right.serialize()

Sibling ordering is enforced while hashing: a node whose left child's
``max_ns`` exceeds the right child's ``min_ns`` has no valid hash.  Equal
namespaces may straddle a split so one namespace can own many leaves.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

HASH_NAME = "sha256"
DIGEST_SIZE = 32
NAMESPACE_SIZE = 8
SERIALIZED_SIZE = 2 * NAMESPACE_SIZE + DIGEST_SIZE

MAX_NAMESPACE = (1 << (8 * NAMESPACE_SIZE)) - 1
PARITY_NAMESPACE = MAX_NAMESPACE
# Tail padding of the data square and the single leaf of an empty block.
PADDING_NAMESPACE = MAX_NAMESPACE - 1

LEAF_TAG = b"\x00"
NODE_TAG = b"\x01"

DEFAULT_MAX_LEAF_SIZE = 64 * 1024

PROOF_VERSION = 1


class NMTError(Exception):
    """Base class for namespaced Merkle tree errors."""


class OversizedLeaf(NMTError, ValueError):
    pass


class OrderingViolation(NMTError, ValueError):
    pass


class UnsortedInput(OrderingViolation):
    pass


class MalformedProof(NMTError, ValueError):
    pass


def ns_bytes(namespace: int) -> bytes:
    return namespace.to_bytes(NAMESPACE_SIZE, "big")


def ns_from_bytes(raw: bytes) -> int:
    return int.from_bytes(raw, "big")


def _check_namespace(namespace: int) -> None:
    if not isinstance(namespace, int) or not 0 <= namespace <= MAX_NAMESPACE:
        raise ValueError(f"namespace out of range: {namespace!r}")


@dataclass(frozen=True)
class Message:
    namespace: int
    payload: bytes

    def __post_init__(self) -> None:
        _check_namespace(self.namespace)
        if self.namespace == PARITY_NAMESPACE:
            raise ValueError("the parity namespace is reserved")
        if not isinstance(self.payload, (bytes, bytearray)):
            raise TypeError("payload must be bytes")
        object.__setattr__(self, "payload", bytes(self.payload))


@dataclass(frozen=True)
class NamespacedDigest:
    min_ns: int
    max_ns: int
    digest: bytes

    def __post_init__(self) -> None:
        if self.min_ns > self.max_ns:
            raise ValueError("min_ns must not exceed max_ns")
        if len(self.digest) != DIGEST_SIZE:
            raise ValueError("digest must be 32 bytes")

    def serialize(self) -> bytes:
        return ns_bytes(self.min_ns) + ns_bytes(self.max_ns) + self.digest

    @classmethod
    def from_bytes(cls, raw: bytes) -> "NamespacedDigest":
        if len(raw) != SERIALIZED_SIZE:
            raise ValueError(f"expected {SERIALIZED_SIZE} bytes, got {len(raw)}")
        return cls(ns_from_bytes(raw[:8]), ns_from_bytes(raw[8:16]), bytes(raw[16:]))

    def __repr__(self) -> str:
        return f"NamespacedDigest({self.min_ns}..{self.max_ns}, {self.digest[:6].hex()}…)"


def hash_leaf_data(namespace: int, data: bytes) -> NamespacedDigest:
    """Leaf digest without the application-level size and parity checks.

    Erasure-coded shares (including parity shares) are hashed through here.
    """
    _check_namespace(namespace)
    h = hashlib.sha256(LEAF_TAG + ns_bytes(namespace) + data).digest()
    return NamespacedDigest(namespace, namespace, h)


def hash_leaf(message: Message, max_leaf_size: int = DEFAULT_MAX_LEAF_SIZE) -> NamespacedDigest:
    if len(message.payload) > max_leaf_size:
        raise OversizedLeaf(
            f"payload of {len(message.payload)} bytes exceeds max leaf size {max_leaf_size}"
        )
    return hash_leaf_data(message.namespace, message.payload)


def hash_node(left: NamespacedDigest, right: NamespacedDigest) -> NamespacedDigest:
    if left.max_ns > right.min_ns:
        raise OrderingViolation(
            f"left max namespace {left.max_ns} exceeds right min namespace {right.min_ns}"
        )
    h = hashlib.sha256(NODE_TAG + left.serialize() + right.serialize()).digest()
    return NamespacedDigest(min(left.min_ns, right.min_ns), max(left.max_ns, right.max_ns), h)


def split_point(n: int) -> int:
    """Size of the left subtree for ``n`` leaves: largest power of two below n."""
    if n < 2:
        raise ValueError("a split needs at least two leaves")
    return 1 << ((n - 1).bit_length() - 1)


@dataclass(frozen=True)
class ProofStep:
    sibling: NamespacedDigest
    sibling_is_left: bool


AuditPath = tuple  # tuple[ProofStep, ...], ordered leaf -> root


def route_for_index(index: int, leaf_count: int) -> list[bool]:
    """Sibling sides (leaf -> root) for the leaf at ``index``.

    ``True`` means the sibling at that level sits on the left.
    """
    if not 0 <= index < leaf_count:
        raise IndexError(index)
    route = []
    lo, hi = 0, leaf_count
    while hi - lo > 1:
        mid = lo + split_point(hi - lo)
        if index < mid:
            route.append(False)
            hi = mid
        else:
            route.append(True)
            lo = mid
    route.reverse()
    return route


def path_nodes(leaf: NamespacedDigest, path: Sequence[ProofStep]) -> list[NamespacedDigest]:
    """All node digests from the leaf up to the computed root (inclusive)."""
    nodes = [leaf]
    node = leaf
    for step in path:
        if step.sibling_is_left:
            node = hash_node(step.sibling, node)
        else:
            node = hash_node(node, step.sibling)
        nodes.append(node)
    return nodes


def root_from_path(leaf: NamespacedDigest, path: Sequence[ProofStep]) -> NamespacedDigest:
    return path_nodes(leaf, path)[-1]


def verify_inclusion(root: NamespacedDigest, leaf: NamespacedDigest, path: Sequence[ProofStep]) -> bool:
    try:
        return root_from_path(leaf, path) == root
    except OrderingViolation:
        return False


class NamespacedMerkleTree:
    """Immutable left-balanced namespaced Merkle tree over leaf digests."""

    def __init__(self, leaves: Sequence[NamespacedDigest]):
        if not leaves:
            raise ValueError("a tree needs at least one leaf")
        self.leaves: tuple[NamespacedDigest, ...] = tuple(leaves)
        for i in range(len(self.leaves) - 1):
            if self.leaves[i].max_ns > self.leaves[i + 1].min_ns:
                raise UnsortedInput(f"leaves {i} and {i + 1} are out of namespace order")
        self._nodes: dict[tuple[int, int], NamespacedDigest] = {}
        self.root = self._build(0, len(self.leaves))

    @classmethod
    def from_messages(
        cls, messages: Sequence[Message], max_leaf_size: int = DEFAULT_MAX_LEAF_SIZE
    ) -> "NamespacedMerkleTree":
        return cls([hash_leaf(m, max_leaf_size) for m in messages])

    def __len__(self) -> int:
        return len(self.leaves)

    def _build(self, lo: int, hi: int) -> NamespacedDigest:
        if hi - lo == 1:
            node = self.leaves[lo]
        else:
            mid = lo + split_point(hi - lo)
            node = hash_node(self._build(lo, mid), self._build(mid, hi))
        self._nodes[(lo, hi)] = node
        return node

    def node(self, lo: int, hi: int) -> NamespacedDigest:
        return self._nodes[(lo, hi)]

    def path(self, index: int) -> AuditPath:
        if not 0 <= index < len(self.leaves):
            raise IndexError(index)
        steps = []
        lo, hi = 0, len(self.leaves)
        while hi - lo > 1:
            mid = lo + split_point(hi - lo)
            if index < mid:
                steps.append(ProofStep(self._nodes[(mid, hi)], False))
                hi = mid
            else:
                steps.append(ProofStep(self._nodes[(lo, mid)], True))
                lo = mid
        steps.reverse()
        return tuple(steps)

    def namespace_range(self, nid: int) -> tuple[int, int]:
        """Half-open leaf index range holding ``nid`` (empty if absent)."""
        start = next((i for i, d in enumerate(self.leaves) if d.min_ns >= nid), len(self.leaves))
        end = start
        while end < len(self.leaves) and self.leaves[end].min_ns == nid:
            end += 1
        return start, end

    def prove_namespace(self, nid: int) -> "NamespaceProof":
        start, end = self.namespace_range(nid)
        n = len(self.leaves)
        if end > start:
            return NamespaceProof(start, tuple(self.path(i) for i in range(start, end)), n)
        boundary = start if start < n else n - 1
        return NamespaceProof(boundary, (self.path(boundary),), n, self.leaves[boundary])


def root_of(leaves: Sequence[NamespacedDigest]) -> NamespacedDigest:
    """Root of the tree over ``leaves`` without keeping interior nodes."""
    if not leaves:
        raise ValueError("a tree needs at least one leaf")

    def go(lo: int, hi: int) -> NamespacedDigest:
        if hi - lo == 1:
            return leaves[lo]
        mid = lo + split_point(hi - lo)
        return hash_node(go(lo, mid), go(mid, hi))

    return go(0, len(leaves))


def build_tree(
    messages: Sequence[Message], max_leaf_size: int = DEFAULT_MAX_LEAF_SIZE
) -> NamespacedMerkleTree:
    for i in range(len(messages) - 1):
        if messages[i].namespace > messages[i + 1].namespace:
            raise UnsortedInput(f"messages {i} and {i + 1} are out of namespace order")
    return NamespacedMerkleTree.from_messages(messages, max_leaf_size)


def prove_namespace(tree: NamespacedMerkleTree, nid: int) -> "NamespaceProof":
    return tree.prove_namespace(nid)


@dataclass(frozen=True)
class NamespaceProof:
    """Consecutive audit paths covering every leaf of one namespace.

    For an absent namespace ``paths`` holds the single path of a boundary
    leaf whose digest travels in ``absence_leaf``; no payload is included.
    """

    start_index: int
    paths: tuple
    leaf_count: int
    absence_leaf: NamespacedDigest | None = None

    @property
    def is_absence(self) -> bool:
        return self.absence_leaf is not None

    def encode(self) -> bytes:
        out = bytearray()
        out += struct.pack(">BBII", PROOF_VERSION, 1 if self.is_absence else 0,
                           self.start_index, self.leaf_count)
        if self.absence_leaf is not None:
            out += self.absence_leaf.serialize()
        out += struct.pack(">I", len(self.paths))
        for path in self.paths:
            out += struct.pack(">B", len(path))
            for step in path:
                out += b"\x01" if step.sibling_is_left else b"\x00"
                out += step.sibling.serialize()
        return bytes(out)

    @classmethod
    def decode(cls, raw: bytes) -> "NamespaceProof":
        try:
            version, flags, start, count = struct.unpack_from(">BBII", raw, 0)
            if version != PROOF_VERSION or flags not in (0, 1):
                raise MalformedProof("unknown proof version or flags")
            pos = 10
            absence = None
            if flags:
                absence = NamespacedDigest.from_bytes(raw[pos:pos + SERIALIZED_SIZE])
                pos += SERIALIZED_SIZE
            (npaths,) = struct.unpack_from(">I", raw, pos)
            pos += 4
            paths = []
            for _ in range(npaths):
                depth = raw[pos]
                pos += 1
                steps = []
                for _ in range(depth):
                    side = raw[pos]
                    if side not in (0, 1):
                        raise MalformedProof("bad side flag")
                    sib = NamespacedDigest.from_bytes(raw[pos + 1:pos + 1 + SERIALIZED_SIZE])
                    steps.append(ProofStep(sib, bool(side)))
                    pos += 1 + SERIALIZED_SIZE
                paths.append(tuple(steps))
        except (struct.error, IndexError, ValueError) as exc:
            raise MalformedProof(str(exc)) from exc
        if pos != len(raw):
            raise MalformedProof("trailing bytes")
        return cls(start, tuple(paths), count, absence)


def _adjacent(left_path, left_nodes, right_path, right_nodes) -> bool:
    """True iff the two verified paths end at neighbouring leaves.

    Works on routes alone, so it does not trust the claimed tree size: the
    left leaf must be the rightmost leaf under the left child of the point
    where the routes split, and the right leaf the leftmost under its right.
    """
    a = [s.sibling_is_left for s in reversed(left_path)]
    b = [s.sibling_is_left for s in reversed(right_path)]
    an = list(reversed(left_nodes))  # an[0] is the root
    bn = list(reversed(right_nodes))
    d = 0
    while d < len(a) and d < len(b) and a[d] == b[d]:
        d += 1
    if d >= len(a) or d >= len(b):
        return False
    if a[d] or not b[d]:
        return False
    if not all(a[d + 1:]) or any(b[d + 1:]):
        return False
    # Siblings at the split must be each other's subtree roots.
    return (left_path[len(a) - 1 - d].sibling == bn[d + 1]
            and right_path[len(b) - 1 - d].sibling == an[d + 1])


def verify_namespace_leaves(
    root: NamespacedDigest,
    nid: int,
    leaves: Sequence[NamespacedDigest],
    proof: NamespaceProof,
) -> bool:
    """Verify a namespace proof over already-hashed leaves."""
    try:
        return _verify(root, nid, list(leaves), proof)
    except (OrderingViolation, IndexError, ValueError):
        return False


def _verify(root, nid, leaves, proof) -> bool:
    if proof.leaf_count < 1:
        return False
    if proof.is_absence:
        if leaves or len(proof.paths) != 1:
            return False
        leaf = proof.absence_leaf
        if leaf.min_ns != leaf.max_ns or leaf.min_ns == nid:
            return False
        path = proof.paths[0]
        if [s.sibling_is_left for s in path] != route_for_index(proof.start_index, proof.leaf_count):
            return False
        if root_from_path(leaf, path) != root:
            return False
        return (all(s.sibling.max_ns < nid for s in path if s.sibling_is_left)
                and all(s.sibling.min_ns > nid for s in path if not s.sibling_is_left))

    if not leaves or len(leaves) != len(proof.paths):
        return False
    if proof.start_index + len(leaves) > proof.leaf_count:
        return False
    node_lists = []
    for j, (leaf, path) in enumerate(zip(leaves, proof.paths)):
        if leaf.min_ns != nid or leaf.max_ns != nid:
            return False
        if [s.sibling_is_left for s in path] != route_for_index(proof.start_index + j, proof.leaf_count):
            return False
        nodes = path_nodes(leaf, path)
        if nodes[-1] != root:
            return False
        node_lists.append(nodes)
    first, last = proof.paths[0], proof.paths[-1]
    if any(s.sibling.max_ns >= nid for s in first if s.sibling_is_left):
        return False
    if any(s.sibling.min_ns <= nid for s in last if not s.sibling_is_left):
        return False
    for j in range(len(leaves) - 1):
        if not _adjacent(proof.paths[j], node_lists[j], proof.paths[j + 1], node_lists[j + 1]):
            return False
    return True


def verify_namespace(
    root: NamespacedDigest,
    nid: int,
    messages: Iterable[Message],
    proof: NamespaceProof,
    max_leaf_size: int = DEFAULT_MAX_LEAF_SIZE,
) -> bool:
    messages = list(messages)
    if any(m.namespace != nid for m in messages):
        return False
    try:
        leaves = [hash_leaf(m, max_leaf_size) for m in messages]
    except OversizedLeaf:
        return False
    return verify_namespace_leaves(root, nid, leaves, proof)
