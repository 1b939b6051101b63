from __future__ import annotations

import hashlib

import pytest

from daledger.block import (
    HEADER_SIZE,
    PROBABILISTIC,
    SIMPLISTIC,
    BlockHeader,
    ChainView,
    ReservedNamespace,
    availability_root,
    block_valid_probabilistic,
    block_valid_simplistic,
    make_block,
    message_root,
    read_archive,
    tamper_encoding,
    write_archive,
)
from daledger.coding import ROW, gen_coding_fraud_proof
from daledger.nmt import PADDING_NAMESPACE, Message


def _msgs(n=12):
    return [Message(1 + i % 3, bytes([i]) * (10 + i)) for i in range(n)]


def test_header_encoding_roundtrip_and_size():
    b = make_block(None, _msgs(), PROBABILISTIC, share_size=32)
    raw = b.header.encode()
    assert len(raw) == HEADER_SIZE
    assert BlockHeader.decode(raw) == b.header
    assert b.hash == hashlib.sha256(raw).digest()


def test_messages_sorted_stably():
    msgs = [Message(2, b"a"), Message(1, b"b"), Message(2, b"c")]
    b = make_block(None, msgs)
    assert [m.payload for m in b.messages] == [b"b", b"a", b"c"]


def test_reserved_namespace_rejected():
    with pytest.raises(ReservedNamespace):
        make_block(None, [Message(PADDING_NAMESPACE, b"")])


def test_empty_block_has_root():
    b = make_block(None, [])
    assert b.header.m_root == message_root([])
    assert block_valid_simplistic(b.header, [])


def test_simplistic_validity():
    b = make_block(None, _msgs())
    assert block_valid_simplistic(b.header, list(b.messages))
    assert not block_valid_simplistic(b.header, list(b.messages[:-1]))
    assert not block_valid_simplistic(b.header, None)
    swapped = list(b.messages)
    swapped[0] = Message(swapped[0].namespace, b"evil")
    assert not block_valid_simplistic(b.header, swapped)


def test_availability_root_rfc6962_shape():
    b = make_block(None, _msgs(), PROBABILISTIC, share_size=32)
    roots = b.square.line_roots
    assert availability_root(roots) == b.header.availability_root
    assert availability_root(roots[::-1]) != b.header.availability_root
    wide = b.wide_header()
    assert wide.consistent()
    assert wide.encoded_size() == HEADER_SIZE + 48 * 4 * b.header.k


def test_probabilistic_validity_and_fraud_inbox():
    b = make_block(None, _msgs(40), PROBABILISTIC, share_size=32)
    wide = b.wide_header()
    pos = [(0, 0), (1, 3), (3, 2)]
    resp = {p: b.square.sample(*p) for p in pos}
    assert block_valid_probabilistic(wide, pos, resp)
    assert not block_valid_probabilistic(wide, pos, {**resp, (1, 3): None})
    bad = tamper_encoding(b, ROW, 0)
    bw = bad.wide_header()
    bresp = {p: bad.square.sample(*p) for p in pos}
    assert block_valid_probabilistic(bw, pos, bresp)
    proof = gen_coding_fraud_proof(bad.square, ROW, 0)
    assert not block_valid_probabilistic(bw, pos, bresp, [proof])


def test_chain_view_longest_valid_chain():
    g = make_block(None, _msgs(2))
    a1 = make_block(g.header, _msgs(3))
    a2 = make_block(a1.header, _msgs(4))
    b1 = make_block(g.header, _msgs(5))
    view = ChainView()
    for blk, ok in ((g, True), (a1, True), (a2, True), (b1, True)):
        view.add(blk.header, ok)
    assert view.main_chain() == [g.hash, a1.hash, a2.hash]
    view.add(a1.header, False)
    assert view.main_chain() == [g.hash, b1.hash]


def test_chain_tie_breaks_on_smaller_hash():
    g = make_block(None, [])
    x = make_block(g.header, [Message(1, b"x")])
    y = make_block(g.header, [Message(1, b"y")])
    view = ChainView()
    for blk in (g, x, y):
        view.add(blk.header, True)
    assert view.best_tip() == min(x.hash, y.hash)


@pytest.mark.parametrize("mode", [SIMPLISTIC, PROBABILISTIC])
def test_archive_roundtrip(tmp_path, mode):
    g = make_block(None, _msgs(), mode, share_size=32)
    c = make_block(g.header, _msgs(5), mode, share_size=32)
    path = tmp_path / "chain.bin"
    write_archive(path, [g, c])
    back = read_archive(path, 32)
    assert [b.hash for b in back] == [g.hash, c.hash]
    assert back[1].messages == c.messages
