"""Name registrar that is paid through the currency app.

    topUp    : 0x00 | currency_tx_hash 32
    register : 0x01 | registrant 32 | name_len u8 | name | signature 64

A top-up credits the sender of a currency transfer that was applied, was
sent to the registrar key and carries this registrar's namespace as memo.
Each transfer is credited once.  Registration signs
``b"register" | ns 8 | name | registrant`` and costs a fixed price.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..nmt import ns_bytes
from . import currency
from .currency import KeyPair, u64, verify_sig
from .state import AppDescriptor, AppState, BlockContext, Writes

TOPUP = 0
REGISTER = 1
DEFAULT_PRICE = 10

BALANCE = "balance"
NAMES = "names"
CREDITED = "credited"


def topup_payload(currency_tx_hash: bytes) -> bytes:
    return bytes([TOPUP]) + currency_tx_hash


def register_payload(key: KeyPair, namespace: int, name: bytes) -> bytes:
    if len(name) > 255:
        raise ValueError("name too long")
    sig = key.sign(b"register" + ns_bytes(namespace) + name + key.public)
    return bytes([REGISTER]) + key.public + bytes([len(name)]) + name + sig


@dataclass(frozen=True)
class Registrar:
    namespace: int
    currency_ns: int
    key: bytes
    price: int = DEFAULT_PRICE

    def balance(self, state: AppState, account: bytes) -> int:
        raw = state.get(BALANCE, account)
        return int.from_bytes(raw, "big") if raw else 0

    def owner(self, state: AppState, name: bytes) -> bytes | None:
        return state.get(NAMES, name)

    def writes(self, state: AppState, payload: bytes, ctx: BlockContext) -> Writes | None:
        if not payload:
            return None
        if payload[0] == TOPUP and len(payload) == 33:
            return self._topup(state, payload[1:], ctx)
        if payload[0] == REGISTER:
            return self._register(state, payload[1:])
        return None

    def _topup(self, state: AppState, tx_hash: bytes, ctx: BlockContext) -> Writes | None:
        dep = ctx.deps.get(self.currency_ns)
        if dep is None or state.get(CREDITED, tx_hash) is not None:
            return None
        entry = currency.log_entry(dep, tx_hash)
        if entry is None:
            return None
        sender, recipient, amount, memo = entry
        if recipient != self.key or memo != ns_bytes(self.namespace):
            return None
        return {
            (CREDITED, tx_hash): b"\x01",
            (BALANCE, sender): u64(self.balance(state, sender) + amount),
        }

    def _register(self, state: AppState, body: bytes) -> Writes | None:
        if len(body) < 33:
            return None
        registrant = body[:32]
        n = body[32]
        name = body[33:33 + n]
        sig = body[33 + n:]
        if len(name) != n or len(sig) != 64:
            return None
        if self.owner(state, name) is not None:
            return None
        have = self.balance(state, registrant)
        if have < self.price:
            return None
        if not verify_sig(registrant, sig, b"register" + ns_bytes(self.namespace) + name + registrant):
            return None
        return {(NAMES, name): registrant, (BALANCE, registrant): u64(have - self.price)}

    def descriptor(self) -> AppDescriptor:
        return AppDescriptor(f"registrar-{self.namespace}", self.namespace, (self.currency_ns,), self.writes)


def registrar_app(namespace: int, currency_ns: int, key: bytes, price: int = DEFAULT_PRICE) -> AppDescriptor:
    return Registrar(namespace, currency_ns, key, price).descriptor()


def apply_registrar(state: AppState, payload: bytes, reg: Registrar, dep_view: AppState) -> AppState:
    ctx = BlockContext(0, bytes(32), {reg.currency_ns: dep_view})
    w = reg.writes(state, payload, ctx)
    if not w:
        return state
    out = state.copy()
    out.apply_writes(w)
    return out


def unpack_register(payload: bytes) -> tuple[bytes, bytes] | None:
    """(registrant, name) of a well-formed register payload."""
    if len(payload) < 34 or payload[0] != REGISTER:
        return None
    n = payload[33]
    return payload[1:33], payload[34:34 + n]

