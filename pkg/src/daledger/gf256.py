"""GF(2^8) arithmetic and a systematic Reed-Solomon code of rate 1/2.

A line of ``k`` data symbols is read as the evaluations of a polynomial of
degree < k at the field points 0..k-1; parity symbols are its evaluations at
k..2k-1.  Any ``k`` of the ``2k`` evaluations determine the rest.  Lines are
vectors of equal-length byte strings and the code runs independently on
every byte position.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np

PRIMITIVE_POLY = 0x11D
FIELD_SIZE = 256
MAX_LINE = FIELD_SIZE  # 2k evaluation points must be distinct field elements

EXP = np.zeros(512, dtype=np.uint8)
LOG = np.zeros(256, dtype=np.int32)


def _init_tables() -> None:
    x = 1
    for i in range(255):
        EXP[i] = x
        LOG[x] = i
        x <<= 1
        if x & 0x100:
            x ^= PRIMITIVE_POLY
    EXP[255:510] = EXP[:255]


_init_tables()

MUL = np.zeros((256, 256), dtype=np.uint8)
_nz = np.arange(1, 256)
MUL[1:, 1:] = EXP[(LOG[_nz][:, None] + LOG[_nz][None, :]) % 255]
del _nz


def mul(a: int, b: int) -> int:
    return int(MUL[a, b])


def inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(256)")
    return int(EXP[255 - LOG[a]])


def div(a: int, b: int) -> int:
    return mul(a, inv(b))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(m x k) @ (k x N) over GF(256); both uint8."""
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.uint8)
    for i in range(a.shape[1]):
        out ^= np.take(MUL[a[:, i]], b[i], axis=1)
    return out


def interpolation_matrix(known: Sequence[int], targets: Sequence[int]) -> np.ndarray:
    """Matrix mapping evaluations at ``known`` points to ``targets``.

    Row t holds the Lagrange basis coefficients L_j(targets[t]).
    """
    known = list(known)
    if len(set(known)) != len(known):
        raise ValueError("known points must be distinct")
    log = LOG.tolist()
    exp = EXP.tolist()
    # log of prod_{m != j} (x_j - x_m); subtraction is xor
    log_den = [sum(log[xj ^ xm] for m, xm in enumerate(known) if m != j) for j, xj in enumerate(known)]
    index = {x: j for j, x in enumerate(known)}
    out = np.zeros((len(targets), len(known)), dtype=np.uint8)
    for t, x in enumerate(targets):
        if x in index:
            out[t, index[x]] = 1
            continue
        logs = [log[x ^ xm] for xm in known]
        log_p = sum(logs)
        for j in range(len(known)):
            out[t, j] = exp[(log_p - logs[j] - log_den[j]) % 255]
    return out


@lru_cache(maxsize=None)
def encoding_matrix(k: int) -> np.ndarray:
    """k x k matrix taking data symbols at 0..k-1 to parity at k..2k-1."""
    if not 1 <= k <= MAX_LINE // 2:
        raise ValueError(f"k must be in 1..{MAX_LINE // 2}, got {k}")
    m = interpolation_matrix(range(k), range(k, 2 * k))
    m.setflags(write=False)
    return m


def extend(data: np.ndarray) -> np.ndarray:
    """Parity for a batch of lines.

    ``data`` has shape (k, ...) with the symbol index first; the result has
    the same shape and holds the k parity symbols.
    """
    k = data.shape[0]
    flat = np.ascontiguousarray(data).reshape(k, -1)
    return matmul(encoding_matrix(k), flat).reshape(data.shape)


def decode(known_positions: Sequence[int], known: np.ndarray, k: int) -> np.ndarray:
    """Recover the full 2k-symbol line from at least k known symbols.

    ``known`` has shape (len(known_positions), ...).  Only the first k known
    positions are used.
    """
    if len(known_positions) < k:
        raise ValueError("need at least k symbols to decode")
    pos = list(known_positions[:k])
    sel = np.ascontiguousarray(known[:k]).reshape(k, -1)
    full = matmul(interpolation_matrix(pos, range(2 * k)), sel)
    return full.reshape((2 * k,) + known.shape[1:])
