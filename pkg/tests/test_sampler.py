from __future__ import annotations

import math
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from oracles import detection_exact
from daledger.sampler import (
    DomainError,
    SamplingParams,
    detection_probability,
    draw_samples,
    euler_coverage,
    euler_coverage_exact,
    euler_coverage_with_error,
    false_accept_bound,
    monte_carlo_coverage,
    monte_carlo_detection,
    required_samples_for_stake,
    square_lambda,
    stake_split_product,
    unseen_fraction_weight,
)


@given(st.integers(1, 60), st.data())
@settings(max_examples=80, deadline=None)
def test_detection_matches_hypergeometric_oracle(n, data):
    w = data.draw(st.integers(0, n))
    s = data.draw(st.integers(0, n))
    assert detection_probability(n, w, s) == pytest.approx(float(detection_exact(n, w, s)), abs=1e-12)


def test_detection_monotone_in_samples():
    vals = [detection_probability(256, 81, s) for s in range(0, 40)]
    assert vals == sorted(vals)


def test_draw_samples_distinct_and_deterministic():
    a = draw_samples(100, 30, 7)
    assert len(set(a)) == 30 and a == draw_samples(100, 30, 7)
    assert a != draw_samples(100, 30, 8)


def test_draw_samples_uniform_chi_squared():
    n = 16
    counts = Counter()
    for seed in range(4000):
        counts.update(draw_samples(n, 3, seed))
    obs = [counts[i] for i in range(n)]
    assert stats.chisquare(obs).pvalue > 0.001


def test_euler_trivial_points():
    assert euler_coverage(16, 0, 16, 1) == pytest.approx(1.0)
    assert euler_coverage(16, 3, 4, 0) == pytest.approx(0.0)
    assert euler_coverage(16, 15, 1, 1) == pytest.approx(1.0)


def test_euler_exact_and_float_agree():
    for n, lam, s, c in [(16, 3, 4, 5), (32, 8, 6, 4), (20, 5, 3, 7)]:
        exact = euler_coverage_exact(n, lam, s, c)
        v, err = euler_coverage_with_error(n, lam, s, c)
        assert float(exact) == pytest.approx(v, abs=1e-12)
        assert err < 1e-9


def test_euler_matches_monte_carlo():
    v = euler_coverage(16, 3, 4, 5)
    mc = monte_carlo_coverage(16, 3, 4, 5, 200_000, seed=1)
    assert abs(v - mc) < 0.005


def test_euler_monotone_in_samples_and_drawings():
    by_s = [euler_coverage(32, 8, s, 4) for s in range(1, 12)]
    by_c = [euler_coverage(32, 8, 4, c) for c in range(1, 12)]
    assert by_s == sorted(by_s) and by_c == sorted(by_c)


def test_domain_errors():
    with pytest.raises(DomainError):
        euler_coverage(16, 16, 4, 1)
    with pytest.raises(DomainError):
        euler_coverage(16, 3, 17, 1)
    with pytest.raises(DomainError):
        SamplingParams(16, 3, 0.5, 0.0, 0.9)


def test_required_samples_minimal():
    p = SamplingParams(64, square_lambda(3), 0.5, 0.25, 0.9)
    s = required_samples_for_stake(p)
    assert euler_coverage(64, p.lam, s, p.c) >= p.p
    assert euler_coverage(64, p.lam, s - 1, p.c) < p.p


def test_m_equal_h_gives_single_drawing():
    assert SamplingParams(64, 15, 0.5, 0.5, 0.9).c == 1


def test_stake_split_product_identity():
    rng = random.Random(0)
    n, lam, s = 32, 8, 5
    w = unseen_fraction_weight(n, lam, s)
    for _ in range(20):
        h = rng.uniform(0.2, 0.8)
        cuts = sorted(rng.uniform(0, h) for _ in range(rng.randrange(1, 6)))
        stakes = [b - a for a, b in zip([0] + cuts, cuts + [h])]
        prod = stake_split_product(w, h, stakes)
        assert prod == pytest.approx(w, rel=1e-12)


def test_monte_carlo_detection_headline():
    mc = monte_carlo_detection(4096, 1089, 15, 200_000, seed=3)
    assert abs(mc - detection_probability(4096, 1089, 15)) < 0.002


def test_false_accept_bound_closed_form():
    d = detection_probability(16, 9, 3)
    assert false_accept_bound(16, 9, 3, 3) == pytest.approx(1 - d ** 3)
    assert false_accept_bound(16, 9, 16, 5) == 0.0


def test_square_lambda():
    assert [square_lambda(k) for k in (1, 2, 32)] == [3, 8, 1088]
    assert math.comb(4, 2) == 6
