"""Key-value app: payload is ``keylen u16 | key | value``; last write wins."""

from __future__ import annotations

import struct

from .state import AppDescriptor, AppState, BlockContext, Writes

STORE = "kv"


def dummy_payload(key: bytes, value: bytes) -> bytes:
    return struct.pack(">H", len(key)) + key + value


def dummy_writes(state: AppState, payload: bytes, ctx: BlockContext) -> Writes | None:
    if len(payload) < 2:
        return None
    (n,) = struct.unpack_from(">H", payload, 0)
    if 2 + n > len(payload):
        return None
    return {(STORE, payload[2:2 + n]): payload[2 + n:]}


def dummy_app(namespace: int) -> AppDescriptor:
    return AppDescriptor("dummy", namespace, (), dummy_writes)


def apply_dummy(state: AppState, payload: bytes) -> AppState:
    w = dummy_writes(state, payload, BlockContext(0, bytes(32)))
    if not w:
        return state
    out = state.copy()
    out.apply_writes(w)
    return out
