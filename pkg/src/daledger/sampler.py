"""Sampling and the probability mathematics behind it.

``euler_coverage`` is the probability that ``c`` independent drawings of
``s`` distinct cells out of ``n`` together see at least ``n - lam``
distinct cells.  By inclusion-exclusion over the set of unseen cells,

    P(unseen >= lam + 1) = sum_{i>=1} (-1)^(i+1) C(lam+i-1, lam) C(n, lam+i) W_i^c
    W_i = C(n - lam - i, s) / C(n, s)

and the coverage is one minus that sum.
"""

from __future__ import annotations

import math
import random
from functools import lru_cache
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

EXACT_LIMIT = 64
MP_DPS = 30


class DomainError(ValueError):
    pass


class Infeasible(ValueError):
    pass


@dataclass(frozen=True)
class SamplingParams:
    n: int
    lam: int
    h: float
    m: float
    p: float

    def __post_init__(self) -> None:
        if not 0 < self.m <= self.h <= 1:
            raise DomainError("need 0 < m <= h <= 1")
        if not 0 <= self.lam < self.n:
            raise DomainError("need 0 <= lambda < n")
        if not 0 < self.p < 1:
            raise DomainError("target probability must lie in (0, 1)")

    @property
    def c(self) -> float:
        return self.h / self.m


def draw_samples(n: int, s: int, seed) -> list[int]:
    if s < 0 or n < 0:
        raise DomainError("n and s must be non-negative")
    if s > n:
        raise DomainError("cannot draw more distinct samples than cells")
    return random.Random(seed).sample(range(n), s)


def detection_probability(n: int, withheld: int, s: int) -> float:
    """Chance that s distinct uniform samples hit at least one of ``withheld`` cells."""
    if n < 0 or withheld < 0 or s < 0:
        raise DomainError("inputs must be non-negative")
    if withheld > n or s > n:
        raise DomainError("withheld and s cannot exceed n")
    if s > n - withheld:
        return 1.0
    miss = 1.0
    for i in range(s):
        miss *= (n - withheld - i) / (n - i)
    return 1.0 - miss


def square_lambda(k: int) -> int:
    """Largest tolerable unseen-cell count in a 2k x 2k square: (k+1)^2 - 1."""
    return (k + 1) ** 2 - 1


def _check(n: int, lam: int, s: int, c) -> None:
    if n < 1:
        raise DomainError("n must be positive")
    if not 0 <= lam < n:
        raise DomainError("need 0 <= lambda < n")
    if not 0 <= s <= n:
        raise DomainError("need 0 <= s <= n")
    if c < 0:
        raise DomainError("number of drawings must be non-negative")


def _log10_magnitude(n: int, lam: int, s: int, c) -> float:
    """log10 of the largest |term|, used to size the working precision."""
    def lcomb(a: int, b: int) -> float:
        return (math.lgamma(a + 1) - math.lgamma(b + 1) - math.lgamma(a - b + 1)) / math.log(10)

    best = 0.0
    for i in range(1, n - lam + 1):
        if n - lam - i < s:
            break
        val = lcomb(lam + i - 1, lam) + lcomb(n, lam + i) + c * (lcomb(n - lam - i, s) - lcomb(n, s))
        best = max(best, val)
    return best


def euler_terms(n: int, lam: int, s: int, c, exact: bool | None = None) -> list:
    """Signed inclusion-exclusion terms of the failure probability.

    Exact rationals for small n and integer c; otherwise mpmath numbers at a
    precision wide enough to survive the cancellation between terms.
    """
    _check(n, lam, s, c)
    if exact is None:
        exact = n <= EXACT_LIMIT and float(c).is_integer()
    dps = MP_DPS + int(math.ceil(_log10_magnitude(n, lam, s, c)))
    out = []
    cs = math.comb(n, s)
    with mpmath.workdps(dps):
        for i in range(1, n - lam + 1):
            num = math.comb(n - lam - i, s)
            if num == 0 and c:
                break
            sign = 1 if i % 2 else -1
            coef = math.comb(lam + i - 1, lam) * math.comb(n, lam + i)
            if exact:
                wc = Fraction(num, cs) ** int(c)
            elif c == 0:
                wc = mpmath.mpf(1)
            else:
                wc = (mpmath.mpf(num) / cs) ** mpmath.mpf(c)
            out.append(sign * coef * wc)
    return out


def euler_coverage_with_error(n: int, lam: int, s: int, c) -> tuple[float, float]:
    """Coverage and an absolute error bound for the returned float.

    The series is summed to its last non-zero term, so the only error left
    is floating point: the working precision keeps MP_DPS digits beyond the
    largest term.
    """
    terms = euler_terms(n, lam, s, c)
    if not terms:
        return 1.0, 0.0
    if isinstance(terms[0], Fraction):
        return float(1 - sum(terms, Fraction(0))), 2.0 ** -53
    dps = MP_DPS + int(math.ceil(_log10_magnitude(n, lam, s, c)))
    with mpmath.workdps(dps):
        total = mpmath.fsum(terms)
        value = min(mpmath.mpf(1), max(mpmath.mpf(0), 1 - total))
    return float(value), 2.0 ** -53 + len(terms) * 10.0 ** (-MP_DPS)


@lru_cache(maxsize=4096)
def euler_coverage(n: int, lam: int, s: int, c) -> float:
    """P(at least n - lam distinct cells seen) after c drawings of s cells."""
    return euler_coverage_with_error(n, lam, s, c)[0]


def euler_coverage_exact(n: int, lam: int, s: int, c: int) -> Fraction:
    return 1 - sum(euler_terms(n, lam, s, c, exact=True), Fraction(0))


def required_samples_for_stake(params: SamplingParams) -> int:
    """Smallest s with euler_coverage(n, lam, s, h/m) >= p (binary search)."""
    n, lam, c = params.n, params.lam, params.c
    if euler_coverage(n, lam, n, c) < params.p:
        raise Infeasible("even sampling every cell misses the target")
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        if euler_coverage(n, lam, mid, c) >= params.p:
            hi = mid
        else:
            lo = mid + 1
    return lo


def unseen_fraction_weight(n: int, lam: int, s: int, i: int = 1) -> float:
    """W_i = C(n-lam-i, s) / C(n, s)."""
    return math.comb(n - lam - i, s) / math.comb(n, s)


def stake_split_product(w: float, h: float, stakes) -> float:
    """Product of per-node weights W_j = w^(m_j/h); equals w when the stakes sum to h."""
    out = 1.0
    for m in stakes:
        out *= w ** (m / h)
    return out


def monte_carlo_detection(n: int, withheld: int, s: int, trials: int, seed) -> float:
    """Fraction of trials in which s distinct samples hit a withheld cell.

    Withheld cells are taken as 0..withheld-1 (placement is irrelevant under
    uniform sampling).  Duplicates inside a draw are re-drawn.
    """
    rng = np.random.default_rng(seed)
    hits = 0
    batch = 200_000
    done = 0
    while done < trials:
        t = min(batch, trials - done)
        draws = _distinct_draws(rng, n, s, t)
        hits += int((draws < withheld).any(axis=1).sum())
        done += t
    return hits / trials


def _distinct_draws(rng: np.random.Generator, n: int, s: int, t: int) -> np.ndarray:
    """t rows of s distinct values in [0, n), uniform over s-subsets."""
    if s == 0:
        return np.zeros((t, 0), dtype=np.int64)
    if s * 4 > n:
        return np.argsort(rng.random((t, n)), axis=1)[:, :s]
    out = rng.integers(0, n, size=(t, s))
    while True:
        srt = np.sort(out, axis=1)
        bad = (srt[:, 1:] == srt[:, :-1]).any(axis=1)
        if not bad.any():
            return out
        out[bad] = rng.integers(0, n, size=(int(bad.sum()), s))


def monte_carlo_coverage(n: int, lam: int, s: int, c: int, trials: int, seed) -> float:
    """Fraction of trials in which c drawings see at least n - lam distinct cells."""
    rng = np.random.default_rng(seed)
    need = n - lam
    ok = 0
    batch = max(1, 2_000_000 // max(1, n * max(c, 1)))
    done = 0
    while done < trials:
        t = min(batch, trials - done)
        seen = np.zeros((t, n), dtype=bool)
        rows = np.arange(t)[:, None]
        for _ in range(c):
            seen[rows, _distinct_draws(rng, n, s, t)] = True
        ok += int((seen.sum(axis=1) >= need).sum())
        done += t
    return ok / trials


def false_accept_bound(n: int, withheld: int, s: int, samplers: int) -> float:
    """Chance that at least one of ``samplers`` independent honest samplers
    misses every withheld cell and so accepts an unavailable block."""
    return 1.0 - detection_probability(n, withheld, s) ** samplers
