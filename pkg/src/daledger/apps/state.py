"""Application state, descriptors and the block-level transition driver.

Transitions never fail.  Each app exposes ``writes(state, payload, ctx)``
returning the store updates a message causes, or None when the message is
invalid; ``transition`` turns that into a new state (or the same object).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from ..nmt import Message, hash_leaf_data

Writes = dict  # {(store, key): value}


class AppState:
    """Named key-value stores with an order-insensitive commitment."""

    def __init__(self, stores: Mapping[str, Mapping[bytes, bytes]] | None = None):
        self.stores: dict[str, dict[bytes, bytes]] = {
            name: dict(kv) for name, kv in (stores or {}).items()
        }

    def get(self, store: str, key: bytes, default: bytes | None = None) -> bytes | None:
        return self.stores.get(store, {}).get(key, default)

    def entries(self) -> int:
        return sum(len(kv) for kv in self.stores.values())

    def store_entries(self, store: str) -> int:
        return len(self.stores.get(store, {}))

    def copy(self) -> "AppState":
        return AppState(self.stores)

    def apply_writes(self, writes: Writes) -> None:
        """In-place update; only the driver calls this on states it owns."""
        for (store, key), value in writes.items():
            self.stores.setdefault(store, {})[key] = value

    def commitment(self) -> bytes:
        h = hashlib.sha256()
        triples = sorted(
            (store.encode(), key, value)
            for store, kv in self.stores.items()
            for key, value in kv.items()
        )
        for store, key, value in triples:
            for part in (store, key, value):
                h.update(struct.pack(">I", len(part)))
                h.update(part)
        return h.digest()

    def __eq__(self, other: object) -> bool:
        return isinstance(other, AppState) and self.commitment() == other.commitment()

    def __repr__(self) -> str:
        return f"AppState({self.entries()} entries, {self.commitment()[:6].hex()})"


@dataclass
class BlockContext:
    height: int
    producer: bytes
    deps: Mapping[int, AppState] = field(default_factory=dict)
    # Decides whether a 32-byte leaf digest is included in this block.
    includes: Callable[[bytes], bool] = lambda leaf: False


@dataclass(frozen=True)
class AppDescriptor:
    name: str
    namespace: int
    dependencies: tuple
    writes: Callable[[AppState, bytes, BlockContext], Writes | None]
    genesis: Callable[[], AppState] = AppState

    def transition(self, state: AppState, payload: bytes, ctx: BlockContext) -> AppState:
        try:
            w = self.writes(state, payload, ctx)
        except Exception:  # a transition must never halt the client
            w = None
        if not w:
            return state
        out = state.copy()
        out.apply_writes(w)
        return out


def dependency_closure(apps: Mapping[int, AppDescriptor], ns: int) -> list[int]:
    """``ns`` and everything it depends on, dependencies first."""
    order: list[int] = []
    visiting: set[int] = set()

    def visit(x: int) -> None:
        if x in order:
            return
        if x in visiting:
            raise ValueError(f"dependency cycle through namespace {x}")
        if x not in apps:
            raise KeyError(f"unknown app namespace {x}")
        visiting.add(x)
        for d in apps[x].dependencies:
            visit(d)
        visiting.discard(x)
        order.append(x)

    visit(ns)
    return order


def apply_block(apps: Mapping[int, AppDescriptor], states: dict[int, AppState],
                order: Sequence[int], messages_by_ns: Mapping[int, Sequence[bytes]],
                height: int, producer: bytes, includes: Callable[[bytes], bool]) -> None:
    """Advance ``states`` (mutated in place) through one block.

    Apps run dependencies first, so a dependent app sees its dependencies'
    state after this block; messages within an app run in leaf order.
    """
    for ns in order:
        app = apps[ns]
        ctx = BlockContext(height, producer, {d: states[d] for d in app.dependencies}, includes)
        st = states[ns]
        for payload in messages_by_ns.get(ns, ()):
            try:
                w = app.writes(st, payload, ctx)
            except Exception:
                w = None
            if w:
                st.apply_writes(w)


def replay(apps: Mapping[int, AppDescriptor], target: int, chain) -> dict[int, AppState]:
    """Full-chain replay oracle over blocks that carry all their messages.

    ``chain`` is a sequence of objects with ``header`` and ``messages``.
    Returns states for the target and its dependencies.
    """
    order = dependency_closure(apps, target)
    states = {ns: apps[ns].genesis() for ns in order}
    for block in chain:
        by_ns: dict[int, list[bytes]] = {}
        for m in block.messages:
            by_ns.setdefault(m.namespace, []).append(m.payload)
        leaves = {hash_leaf_data(m.namespace, m.payload).digest for m in block.messages}
        apply_block(apps, states, order, by_ns, block.header.height, block.header.producer,
                    leaves.__contains__)
    return states


def message(ns: int, payload: bytes) -> Message:
    return Message(ns, payload)
