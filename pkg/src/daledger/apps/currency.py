"""Account-based currency with signed transfers and fee payments.

Canonical transaction encoding (signature preimage is everything before
the signature, prefixed with ``b"currency-tx"``):

    sender 32 | recipient 32 | amount u64 | nonce u64 | flags u8 |
    [fee_child_hash 32 if flags & 1] | memo_len u16 | memo | signature 64

A fee transaction (flag set) pays ``amount`` to the producer of the block
it lands in, but only if the leaf whose digest is ``fee_child_hash`` is part
of that same block.  Its recipient field is ignored.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from .state import AppDescriptor, AppState, BlockContext, Writes

SIG_DOMAIN = b"currency-tx"
FEE_FLAG = 1
BALANCE = "balance"
NONCE = "nonce"
LOG = "log"


@dataclass(frozen=True)
class KeyPair:
    private: Ed25519PrivateKey
    public: bytes

    @classmethod
    def from_seed(cls, seed) -> "KeyPair":
        raw = hashlib.sha256(str(seed).encode() if not isinstance(seed, bytes) else seed).digest()
        priv = Ed25519PrivateKey.from_private_bytes(raw)
        return cls(priv, priv.public_key().public_bytes_raw())

    def sign(self, data: bytes) -> bytes:
        return self.private.sign(data)


def verify_sig(public: bytes, sig: bytes, data: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(sig, data)
        return True
    except (InvalidSignature, ValueError):
        return False


def u64(n: int) -> bytes:
    return struct.pack(">Q", n)


@dataclass(frozen=True)
class CurrencyTx:
    sender: bytes
    recipient: bytes
    amount: int
    nonce: int
    fee_child_hash: bytes | None = None
    memo: bytes = b""
    signature: bytes = bytes(64)

    def body(self) -> bytes:
        flags = FEE_FLAG if self.fee_child_hash is not None else 0
        out = self.sender + self.recipient + u64(self.amount) + u64(self.nonce) + bytes([flags])
        if self.fee_child_hash is not None:
            out += self.fee_child_hash
        return out + struct.pack(">H", len(self.memo)) + self.memo

    def encode(self) -> bytes:
        return self.body() + self.signature

    @property
    def hash(self) -> bytes:
        return hashlib.sha256(self.encode()).digest()

    def signed(self, key: KeyPair) -> "CurrencyTx":
        return CurrencyTx(self.sender, self.recipient, self.amount, self.nonce,
                          self.fee_child_hash, self.memo, key.sign(SIG_DOMAIN + self.body()))

    def signature_ok(self) -> bool:
        return verify_sig(self.sender, self.signature, SIG_DOMAIN + self.body())

    @classmethod
    def decode(cls, raw: bytes) -> "CurrencyTx":
        if len(raw) < 32 + 32 + 8 + 8 + 1 + 2 + 64:
            raise ValueError("currency tx too short")
        sender, recipient = raw[:32], raw[32:64]
        amount, nonce, flags = struct.unpack_from(">QQB", raw, 64)
        pos = 81
        fee = None
        if flags & ~FEE_FLAG:
            raise ValueError("unknown flags")
        if flags & FEE_FLAG:
            fee = raw[pos:pos + 32]
            pos += 32
        (mlen,) = struct.unpack_from(">H", raw, pos)
        pos += 2
        memo = raw[pos:pos + mlen]
        pos += mlen
        sig = raw[pos:]
        if len(memo) != mlen or len(sig) != 64:
            raise ValueError("bad currency tx length")
        return cls(bytes(sender), bytes(recipient), amount, nonce, fee and bytes(fee), bytes(memo), bytes(sig))


def make_transfer(key: KeyPair, recipient: bytes, amount: int, nonce: int, memo: bytes = b"") -> CurrencyTx:
    return CurrencyTx(key.public, recipient, amount, nonce, None, memo).signed(key)


def make_fee(key: KeyPair, child_leaf_digest: bytes, amount: int, nonce: int) -> CurrencyTx:
    return CurrencyTx(key.public, bytes(32), amount, nonce, child_leaf_digest).signed(key)


def balance(state: AppState, account: bytes) -> int:
    raw = state.get(BALANCE, account)
    return int.from_bytes(raw, "big") if raw else 0


def nonce(state: AppState, account: bytes) -> int:
    raw = state.get(NONCE, account)
    return int.from_bytes(raw, "big") if raw else 0


def log_entry(state: AppState, tx_hash: bytes) -> tuple[bytes, bytes, int, bytes] | None:
    """(sender, recipient, amount, memo) of an applied transfer, if any."""
    raw = state.get(LOG, tx_hash)
    if raw is None:
        return None
    amount = int.from_bytes(raw[64:72], "big")
    return raw[:32], raw[32:64], amount, raw[72:]


def currency_writes(state: AppState, payload: bytes, ctx: BlockContext) -> Writes | None:
    try:
        tx = CurrencyTx.decode(payload)
    except (ValueError, struct.error):
        return None
    if tx.nonce != nonce(state, tx.sender) or not tx.signature_ok():
        return None
    have = balance(state, tx.sender)
    if tx.amount > have:
        return None
    if tx.fee_child_hash is not None:
        if not ctx.includes(tx.fee_child_hash):
            return None
        recipient = ctx.producer
    else:
        recipient = tx.recipient
    w: Writes = {(NONCE, tx.sender): u64(tx.nonce + 1)}
    if recipient != tx.sender:
        w[(BALANCE, tx.sender)] = u64(have - tx.amount)
        w[(BALANCE, recipient)] = u64(balance(state, recipient) + tx.amount)
    w[(LOG, tx.hash)] = tx.sender + recipient + u64(tx.amount) + tx.memo
    return w


def genesis_state(balances: dict[bytes, int]) -> AppState:
    return AppState({BALANCE: {k: u64(v) for k, v in balances.items()}})


def currency_app(namespace: int, balances: dict[bytes, int] | None = None) -> AppDescriptor:
    init = dict(balances or {})
    return AppDescriptor("currency", namespace, (), currency_writes, lambda: genesis_state(init))


def apply_currency(state: AppState, tx: CurrencyTx, ctx: BlockContext | None = None) -> AppState:
    ctx = ctx or BlockContext(0, bytes(32))
    w = currency_writes(state, tx.encode(), ctx)
    if not w:
        return state
    out = state.copy()
    out.apply_writes(w)
    return out
