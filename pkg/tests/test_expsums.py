import cmath
import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from quadcircle.arith import euler_phi, factorize, ramanujan_sum
from quadcircle.expsums import (BudgetExceeded, S_prime_power_split, S_q, S_q_naive, form_histogram, padic_split)
from quadcircle.forms import QuadraticForm, block_form, diagonal_form, split_form

TERNARY = QuadraticForm.from_matrix([[2, 1, 0], [1, -2, 3], [0, 3, 4]])


def direct_sum(q, c, form, t):
    """Plain double loop over units a and residues b (the definition)."""
    A = form.A
    d = form.dim
    tot = 0j
    for b in itertools.product(range(q), repeat=d):
        F = sum(A[i][i] // 2 * b[i] * b[i] for i in range(d)) + sum(
            A[i][j] * b[i] * b[j] for i in range(d) for j in range(i + 1, d))
        cb = sum(ci * bi for ci, bi in zip(c, b))
        for a in range(1, q + 1):
            if math.gcd(a, q) == 1:
                tot += cmath.exp(2j * math.pi * ((a * (F - t) + cb) % q) / q)
    return tot


def test_euler_phi_examples():
    assert euler_phi(1) == 1
    assert euler_phi(12) == 4
    assert all(euler_phi(p) == p - 1 for p in (2, 3, 5, 7, 101))


def test_ramanujan_sum_against_definition():
    for q in range(1, 25):
        for n in range(-6, 7):
            direct = sum(cmath.exp(2j * math.pi * a * n / q) for a in range(1, q + 1) if math.gcd(a, q) == 1)
            assert ramanujan_sum(q, n) == round(direct.real)


def test_examples(F4):
    assert S_q_naive(1, None, F4, 0).value == 1
    assert S_q_naive(2, None, F4, 0).value == 4
    assert S_q_naive(2, None, F4, 1).value == -4
    assert S_q(6, None, F4, 0).value == S_q(2, None, F4, 0).value * S_q(3, None, F4, 0).value
    assert S_q(4, None, F4, 0).value == pytest.approx(S_q_naive(4, None, F4, 0).value, rel=1e-9)
    assert S_q(12, (1, 0, 0, 0), F4, 0).value == S_q_naive(12, (1, 0, 0, 0), F4, 0).value


@pytest.mark.parametrize("form", [split_form(4), TERNARY, diagonal_form([2, 2, 2, 2])])
@pytest.mark.parametrize("q", [2, 3, 4, 5, 6])
def test_naive_matches_definition(form, q):
    rng = np.random.default_rng(q)
    for _ in range(3):
        c = tuple(int(x) for x in rng.integers(-2, 3, form.dim))
        t = int(rng.integers(-3, 4))
        assert S_q_naive(q, c, form, t).value == pytest.approx(direct_sum(q, c, form, t), abs=1e-9)


@pytest.mark.parametrize("form", [split_form(4), split_form(6), TERNARY, diagonal_form([2, 2, 6, 2, 2]),
                                  block_form([[0, 1], [1, 0]], [[2, 0], [0, -4]]),
                                  QuadraticForm.from_matrix([[2, 1, 0, 0], [1, 2, 0, 0], [0, 0, 4, 2], [0, 0, 2, 6]])])
def test_split_route_matches_naive(form):
    for p in (2, 3, 5):
        for l in (1, 2, 3):
            if (p**l) ** form.dim > 10**7:
                continue
            for t in (0, 1, 3, -2, p**l):
                a = S_prime_power_split(p, l, form, t).value
                b = S_q_naive(p**l, None, form, t).value
                assert a == pytest.approx(b, abs=1e-7 * (1 + abs(b)))


def test_padic_split_covers_dimension():
    for p in (2, 3, 7):
        assert sum(b.size for b in padic_split(split_form(6), p)) == 6


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(-20, 20))
def test_real_for_c_zero(q, t):
    v = S_q_naive(q, None, TERNARY, t).value
    assert abs(v.imag) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.integers(2, 30), st.integers(-5, 5))
def test_multiplicative_for_c_zero(q, r, t):
    assume(math.gcd(q, r) == 1 and q * r <= 300)
    lhs = S_q_naive(q * r, None, TERNARY, t).value
    assert lhs == pytest.approx(S_q_naive(q, None, TERNARY, t).value * S_q_naive(r, None, TERNARY, t).value,
                                abs=1e-6)


def test_trivial_bound_and_envelope(F4):
    worst = 0.0
    for q in range(1, 41):
        for c in [(0, 0, 0, 0), (1, 0, 0, 0), (2, -1, 0, 1), (1, 1, 1, 1)]:
            v = abs(S_q_naive(q, c, F4, 0).value)
            assert v <= euler_phi(q) * q**4 + 1e-9
            worst = max(worst, v / q ** (4 / 2 + 1))
    assert worst < 5


def test_histogram_counts_everything(F4):
    h = form_histogram(F4, 7)
    assert h.sum() == 7**4
    assert h[0, 0] == 7**3 + 7**2 - 7


def test_budget(F4):
    with pytest.raises(BudgetExceeded, match="budget"):
        S_q_naive(200, None, F4, 0)
    # auto route falls back to the split evaluation for large prime powers
    assert S_q(2**9, None, F4, 0, prime_power_route="auto").route == "crt"


def test_large_prime_power_via_split(F4):
    # the split route reaches p^l far beyond the naive budget; the full series
    # must land on the closed-form local density
    from quadcircle.localdensities import sigma_p_closed

    p = 2
    partial = math.fsum(S_q(p**l, None, F4, 0, prime_power_route="split").value.real / p ** (4 * l)
                        for l in range(0, 40))
    assert partial == pytest.approx(float(sigma_p_closed(p, 4)), rel=1e-9)


def test_factorize_round_trip():
    for n in range(1, 2000):
        assert math.prod(p**k for p, k in factorize(n).items()) == n
