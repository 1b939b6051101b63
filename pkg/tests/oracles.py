"""Independent reference implementations used as test oracles.

Nothing here imports from daledger: each oracle recomputes a quantity from
first principles (raw hashlib bytes, bitwise field arithmetic, Gaussian
elimination, brute-force closure, math.comb).
"""

from __future__ import annotations

import hashlib
import math
from fractions import Fraction

MAXNS = 2 ** 64 - 1


# -- namespaced Merkle tree -----------------------------------------------------------

def nsb(ns: int) -> bytes:
    return ns.to_bytes(8, "big")


def leaf_node(ns: int, data: bytes) -> tuple[int, int, bytes]:
    return ns, ns, hashlib.sha256(b"\x00" + nsb(ns) + data).digest()


def inner_node(left, right):
    lo = min(left[0], right[0])
    hi = max(left[1], right[1])
    raw = b"\x01" + nsb(left[0]) + nsb(left[1]) + left[2] + nsb(right[0]) + nsb(right[1]) + right[2]
    return lo, hi, hashlib.sha256(raw).digest()


def left_size(n: int) -> int:
    """Largest power of two strictly below n."""
    return 1 << ((n - 1).bit_length() - 1)


def tree_root(nodes: list):
    if len(nodes) == 1:
        return nodes[0]
    m = left_size(len(nodes))
    return inner_node(tree_root(nodes[:m]), tree_root(nodes[m:]))


def leaf_depth(i: int, n: int) -> int:
    d = 0
    while n > 1:
        m = left_size(n)
        if i < m:
            n = m
        else:
            i -= m
            n -= m
        d += 1
    return d


# -- GF(2^8) with x^8 + x^4 + x^3 + x^2 + 1 -----------------------------------------------

def gmul(a: int, b: int) -> int:
    """Carry-less multiply, reduced bit by bit."""
    r = 0
    while b:
        if b & 1:
            r ^= a
        a <<= 1
        if a & 0x100:
            a ^= 0x11D
        b >>= 1
    return r


def ginv(a: int) -> int:
    # a^254 by square and multiply
    r, base, e = 1, a, 254
    while e:
        if e & 1:
            r = gmul(r, base)
        base = gmul(base, base)
        e >>= 1
    return r


def gpow(x: int, e: int) -> int:
    r = 1
    for _ in range(e):
        r = gmul(r, x)
    return r


def solve(a: list[list[int]], b: list[int]) -> list[int]:
    """Gaussian elimination over GF(2^8)."""
    n = len(a)
    m = [row[:] + [v] for row, v in zip(a, b)]
    for col in range(n):
        piv = next(r for r in range(col, n) if m[r][col])
        m[col], m[piv] = m[piv], m[col]
        f = ginv(m[col][col])
        m[col] = [gmul(f, v) for v in m[col]]
        for r in range(n):
            if r != col and m[r][col]:
                g = m[r][col]
                m[r] = [v ^ gmul(g, w) for v, w in zip(m[r], m[col])]
    return [m[r][n] for r in range(n)]


def rs_parity(symbols: list[int]) -> list[int]:
    """Fit the degree < k polynomial through (i, symbols[i]) by a Vandermonde
    solve and evaluate it at k..2k-1."""
    k = len(symbols)
    vander = [[gpow(x, j) for j in range(k)] for x in range(k)]
    coef = solve(vander, symbols)
    out = []
    for x in range(k, 2 * k):
        acc = 0
        for j, c in enumerate(coef):
            acc ^= gmul(c, gpow(x, j))
        out.append(acc)
    return out


def extend_square(cells: list[list[bytes]]) -> list[list[bytes]]:
    """Rows first, then every column, bytewise."""
    k = len(cells)
    size = len(cells[0][0])

    def ext(line: list[bytes]) -> list[bytes]:
        par = [bytearray(size) for _ in range(k)]
        for b in range(size):
            p = rs_parity([c[b] for c in line])
            for j in range(k):
                par[j][b] = p[j]
        return list(line) + [bytes(x) for x in par]

    rows = [ext(r) for r in cells]
    cols = [ext([rows[r][c] for r in range(k)]) for c in range(2 * k)]
    return [[cols[c][r] for c in range(2 * k)] for r in range(2 * k)]


# -- erasure closure ------------------------------------------------------------------

def closure_recovers(present: set, k: int) -> bool:
    """Repeatedly fill any row or column with at least k known cells."""
    w = 2 * k
    known = set(present)
    changed = True
    while changed:
        changed = False
        for i in range(w):
            row = [(i, j) for j in range(w)]
            col = [(j, i) for j in range(w)]
            for line in (row, col):
                have = sum(p in known for p in line)
                if k <= have < w:
                    known.update(line)
                    changed = True
    return len(known) == w * w


# -- probability -------------------------------------------------------------------------

def detection_exact(n: int, withheld: int, s: int) -> Fraction:
    return 1 - Fraction(math.comb(n - withheld, s), math.comb(n, s))
