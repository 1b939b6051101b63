from __future__ import annotations

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import closure_recovers, extend_square, ginv, gmul
from daledger import gf256
from daledger.coding import (
    COL,
    ROW,
    CodingFraudProof,
    MalformedFraudProof,
    MalformedShares,
    NotFraudulent,
    RootMismatch,
    SampleResponse,
    Share,
    Unrecoverable,
    extend_shares,
    gen_coding_fraud_proof,
    parse_shares,
    reconstruct,
    sample_response_size,
    split_to_shares,
    square_size,
    verify_coding_fraud_proof,
)
from daledger.block import PROBABILISTIC, make_block, tamper_encoding
from daledger.nmt import PADDING_NAMESPACE, PARITY_NAMESPACE, Message


def _square(k: int, seed: int = 0, share_size: int = 16):
    rng = random.Random(seed)
    shares = [Share(i // 3 + 1, rng.randbytes(share_size)) for i in range(k * k)]
    return extend_shares(shares, share_size)


@pytest.mark.parametrize("a", [0, 1, 2, 0x53, 0x80, 0xFF])
def test_field_mul_matches_carryless_oracle(a):
    for b in range(256):
        assert gf256.mul(a, b) == gmul(a, b)
    if a:
        assert gf256.inv(a) == ginv(a)


@pytest.mark.parametrize("k", [1, 2, 4])
def test_extension_matches_vandermonde_oracle(k):
    sq = _square(k, seed=k, share_size=3)
    orig = [[sq.cells[r, c].tobytes() for c in range(k)] for r in range(k)]
    want = extend_square(orig)
    for r in range(2 * k):
        for c in range(2 * k):
            assert sq.cells[r, c].tobytes() == want[r][c]


def test_columns_first_gives_same_square():
    k = 4
    sq = _square(k, seed=3)
    orig = sq.cells[:k, :k]
    col_parity = gf256.extend(orig)
    top = np.concatenate([orig, col_parity], axis=0)
    full = np.concatenate([top, gf256.extend(top.transpose(1, 0, 2)).transpose(1, 0, 2)], axis=1)
    assert np.array_equal(full, sq.cells)


def test_parity_cells_labelled_by_position():
    k = 2
    sq = _square(k)
    for r in range(2 * k):
        for c in range(2 * k):
            assert (sq.label(r, c) == PARITY_NAMESPACE) == (r >= k or c >= k)


def test_decode_any_k_positions():
    rng = np.random.default_rng(0)
    k = 8
    data = rng.integers(0, 256, size=(k, 5), dtype=np.uint8)
    line = np.concatenate([data, gf256.extend(data)])
    for _ in range(20):
        pos = sorted(rng.choice(2 * k, size=k, replace=False).tolist())
        assert np.array_equal(gf256.decode(pos, line[pos], k), line)


@given(st.lists(st.tuples(st.integers(0, 5), st.binary(max_size=40)), max_size=12), st.integers(4, 40))
@settings(max_examples=60, deadline=None)
def test_share_roundtrip(items, size):
    msgs = [Message(ns, p) for ns, p in sorted(items, key=lambda t: t[0])]
    shares = split_to_shares(msgs, size)
    assert all(len(s.data) == size for s in shares)
    assert parse_shares(shares) == msgs
    sq = extend_shares(shares, size)
    assert parse_shares(sq.original_shares()) == msgs


def test_trailing_empty_message_survives_padding():
    msgs = [Message(1, b"x"), Message(1, b"")]
    assert parse_shares(split_to_shares(msgs, 8)) == msgs


def test_garbage_after_run_rejected():
    s = split_to_shares([Message(1, b"x")], 8)[0]
    bad = Share(1, s.data[:-1] + b"\x01")
    with pytest.raises(MalformedShares):
        parse_shares([bad])


def test_square_size_powers_of_two():
    assert [square_size(n) for n in (0, 1, 2, 4, 5, 16, 17)] == [1, 1, 2, 2, 4, 4, 8]
    assert extend_shares([Share(1, b"a"), Share(2, b"b")], 1).share(1, 1).namespace == PADDING_NAMESPACE


@pytest.mark.parametrize("k", [1, 2, 4])
def test_reconstruct_agrees_with_closure_oracle(k):
    sq = _square(k, seed=k)
    w = 2 * k
    rng = random.Random(k)
    for _ in range(150):
        missing = {(r, c) for r in range(w) for c in range(w) if rng.random() < rng.random()}
        present = {(r, c) for r in range(w) for c in range(w)} - missing
        expect = closure_recovers(present, k)
        try:
            out = reconstruct(sq.withhold(missing))
            assert expect
            assert np.array_equal(out.cells, sq.cells)
        except Unrecoverable:
            assert not expect


def test_subgrid_withholding_blocks_recovery():
    k = 4
    sq = _square(k)
    hole = [(r, c) for r in range(k + 1) for c in range(k + 1)]
    with pytest.raises(Unrecoverable):
        reconstruct(sq.withhold(hole))
    reconstruct(sq.withhold(hole[:-1]))


def test_sample_response_roundtrip_and_size():
    k = 4
    sq = _square(k, share_size=20)
    resp = sq.sample(5, 6)
    raw = resp.encode()
    assert len(raw) == sample_response_size(k, 20)
    back = SampleResponse.decode(raw, k)
    assert back == resp and back.verify(sq.row_roots, k)
    forged = SampleResponse(5, 6, bytes(len(resp.cell)), resp.path)
    assert not forged.verify(sq.row_roots, k)
    with pytest.raises(KeyError):
        sq.withhold([(5, 6)]).sample(5, 6)


def _bad_block(axis: str, index: int):
    msgs = [Message(1 + i % 4, bytes([i]) * 30) for i in range(40)]
    good = make_block(None, msgs, PROBABILISTIC, share_size=32)
    return good, tamper_encoding(good, axis, index)


@pytest.mark.parametrize("axis", [ROW, COL])
def test_fraud_proof_for_bad_line(axis):
    good, bad = _bad_block(axis, 1)
    sq = bad.square
    with pytest.raises(RootMismatch):
        reconstruct(sq)
    proof = gen_coding_fraud_proof(sq, axis, 1)
    assert verify_coding_fraud_proof(sq.row_roots, sq.col_roots, proof)
    back = CodingFraudProof.decode(proof.encode())
    assert back == proof
    assert not verify_coding_fraud_proof(good.square.row_roots, good.square.col_roots, proof)
    with pytest.raises(NotFraudulent):
        gen_coding_fraud_proof(good.square, axis, 1)


def test_fraud_proof_fuzz_never_verifies_when_mutated():
    _, bad = _bad_block(ROW, 0)
    sq = bad.square
    raw = bytearray(gen_coding_fraud_proof(sq, ROW, 0).encode())
    rng = random.Random(1)
    accepted = 0
    for _ in range(200):
        mutated = bytearray(raw)
        i = rng.randrange(8, len(raw))
        mutated[i] ^= 1 << rng.randrange(8)
        try:
            p = CodingFraudProof.decode(bytes(mutated))
        except MalformedFraudProof:
            continue
        # a flipped cell byte leaves the line misencoded but breaks its path
        accepted += verify_coding_fraud_proof(sq.row_roots, sq.col_roots, p)
    assert accepted == 0


def test_fraud_proof_decode_rejects_truncation():
    _, bad = _bad_block(COL, 2)
    raw = gen_coding_fraud_proof(bad.square, COL, 2).encode()
    for cut in (0, 5, len(raw) // 2, len(raw) - 1):
        with pytest.raises(MalformedFraudProof):
            CodingFraudProof.decode(raw[:cut])
