from __future__ import annotations

import pytest

from daledger.apps.currency import (
    CurrencyTx,
    KeyPair,
    apply_currency,
    balance,
    currency_app,
    genesis_state,
    make_fee,
    make_transfer,
    nonce,
)
from daledger.apps.dummy import dummy_app, dummy_payload
from daledger.apps.registrar import register_payload, registrar_app, topup_payload
from daledger.apps.state import AppDescriptor, AppState, BlockContext, dependency_closure, replay
from daledger.apps.sync import BlockStore, OmittingStore, SyncFailed, sync_app
from daledger.block import PROBABILISTIC, SIMPLISTIC, make_block
from daledger.nmt import Message, hash_leaf_data, ns_bytes

CUR, REG, DUM = 10, 20, 30
alice = KeyPair.from_seed("alice")
bob = KeyPair.from_seed("bob")
registrar_key = KeyPair.from_seed("registrar")


def _apps():
    return {
        CUR: currency_app(CUR, {alice.public: 100, bob.public: 50}),
        REG: registrar_app(REG, CUR, registrar_key.public),
        DUM: dummy_app(DUM),
    }


def test_keys_deterministic():
    assert KeyPair.from_seed("alice").public == alice.public != bob.public


def test_transfer_roundtrip_and_apply():
    tx = make_transfer(alice, bob.public, 30, 0, b"hi")
    assert CurrencyTx.decode(tx.encode()) == tx and tx.signature_ok()
    st = apply_currency(genesis_state({alice.public: 100}), tx)
    assert balance(st, alice.public) == 70 and balance(st, bob.public) == 30
    assert nonce(st, alice.public) == 1


@pytest.mark.parametrize("tx", [
    make_transfer(alice, bob.public, 30, 1),      # wrong nonce
    make_transfer(alice, bob.public, 101, 0),     # overdraft
    make_transfer(bob, alice.public, 1, 0),       # unfunded sender
])
def test_invalid_transfers_are_identity(tx):
    st = genesis_state({alice.public: 100})
    assert apply_currency(st, tx) == st


def test_forged_signature_is_identity():
    tx = make_transfer(alice, bob.public, 5, 0)
    forged = CurrencyTx(tx.sender, tx.recipient, 50, 0, None, b"", tx.signature)
    st = genesis_state({alice.public: 100})
    assert apply_currency(st, forged) == st


def test_garbage_payload_is_identity():
    app = _apps()[CUR]
    st = app.genesis()
    assert app.transition(st, b"\x00\x01garbage", BlockContext(0, bytes(32))) == st


def test_fee_paid_only_when_child_included():
    child = hash_leaf_data(DUM, dummy_payload(b"k", b"v")).digest
    fee = make_fee(alice, child, 7, 0)
    st = genesis_state({alice.public: 100})
    producer = KeyPair.from_seed("miner").public
    paid = apply_currency(st, fee, BlockContext(1, producer, includes=lambda leaf: leaf == child))
    assert balance(paid, producer) == 7
    unpaid = apply_currency(st, fee, BlockContext(1, producer))
    assert unpaid == st


def test_state_commitment_order_independent():
    a = AppState({"x": {b"1": b"a", b"2": b"b"}})
    b = AppState({"x": {b"2": b"b", b"1": b"a"}})
    assert a.commitment() == b.commitment()
    assert a.commitment() != AppState({"x": {b"1": b"a"}}).commitment()


def test_dependency_closure_and_cycles():
    apps = _apps()
    assert dependency_closure(apps, REG) == [CUR, REG]
    cyc = {1: AppDescriptor("a", 1, (2,), lambda *a: None), 2: AppDescriptor("b", 2, (1,), lambda *a: None)}
    with pytest.raises(ValueError):
        dependency_closure(cyc, 1)


def _registrar_chain(mode):
    top = make_transfer(alice, registrar_key.public, 40, 0, ns_bytes(REG))
    wrong_memo = make_transfer(bob, registrar_key.public, 40, 0, b"other")
    b0 = make_block(None, [
        Message(CUR, top.encode()), Message(CUR, wrong_memo.encode()),
        Message(REG, topup_payload(top.hash)), Message(REG, topup_payload(top.hash)),
        Message(REG, topup_payload(wrong_memo.hash)),
        Message(DUM, dummy_payload(b"k", b"v")),
    ], mode, share_size=64)
    b1 = make_block(b0.header, [
        Message(REG, register_payload(alice, REG, b"alice.name")),
        Message(REG, register_payload(bob, REG, b"bob.name")),
        Message(REG, register_payload(bob, REG, b"alice.name")),
    ], mode, share_size=64)
    return [b0, b1]


@pytest.mark.parametrize("mode", [SIMPLISTIC, PROBABILISTIC])
def test_registrar_semantics(mode):
    chain = _registrar_chain(mode)
    st = replay(_apps(), REG, chain)[REG]
    assert st.get("names", b"alice.name") == alice.public
    assert st.get("names", b"bob.name") is None          # bob never topped up
    assert int.from_bytes(st.get("balance", alice.public), "big") == 30   # credited once, minus price


@pytest.mark.parametrize("mode", [SIMPLISTIC, PROBABILISTIC])
def test_sync_matches_replay_and_stays_in_scope(mode):
    chain = _registrar_chain(mode)
    store = BlockStore("s0")
    for b in chain:
        store.add(b)
    apps = _apps()
    for target in (CUR, REG, DUM):
        states, stats = sync_app(apps, target, [b.wide_header() for b in chain], [store])
        oracle = replay(apps, target, chain)
        assert states[target].commitment() == oracle[target].commitment()
        scope = set(dependency_closure(apps, target))
        assert set(stats.leaf_bytes) <= scope
        assert not stats.misbehaving


@pytest.mark.parametrize("mode", [SIMPLISTIC, PROBABILISTIC])
def test_omitting_peer_detected(mode):
    chain = _registrar_chain(mode)
    liar = OmittingStore("liar", REG)
    honest = BlockStore("honest")
    for b in chain:
        liar.add(b)
        honest.add(b)
    apps = _apps()
    headers = [b.wide_header() for b in chain]
    states, stats = sync_app(apps, REG, headers, [liar, honest])
    assert states[REG].commitment() == replay(apps, REG, chain)[REG].commitment()
    assert {p for p, _, _ in stats.misbehaving} == {"liar"}
    with pytest.raises(SyncFailed):
        sync_app(apps, REG, headers, [liar])
    partial, pstats = sync_app(apps, REG, headers, [liar], partial=True)
    assert pstats.synced_blocks == 0
