"""Small exact integer helpers shared by the number-theoretic modules."""

from __future__ import annotations

import math
from functools import lru_cache


def factorize(n: int) -> dict[int, int]:
    """Prime factorization of ``n >= 1`` by trial division."""
    if n < 1:
        raise ValueError(f"factorize expects n >= 1, got {n}")
    out: dict[int, int] = {}
    for p in (2, 3):
        while n % p == 0:
            out[p] = out.get(p, 0) + 1
            n //= p
    f = 5
    while f * f <= n:
        for p in (f, f + 2):
            while n % p == 0:
                out[p] = out.get(p, 0) + 1
                n //= p
        f += 6
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    return factorize(n) == {n: 1}


def primes_upto(n: int) -> list[int]:
    if n < 2:
        return []
    sieve = bytearray([1]) * (n + 1)
    sieve[0] = sieve[1] = 0
    for p in range(2, math.isqrt(n) + 1):
        if sieve[p]:
            sieve[p * p :: p] = bytearray(len(range(p * p, n + 1, p)))
    return [i for i, v in enumerate(sieve) if v]


def euler_phi(q: int) -> int:
    """Euler's totient."""
    if q < 1:
        raise ValueError(f"euler_phi expects q >= 1, got {q}")
    out = q
    for p in factorize(q):
        out = out // p * (p - 1)
    return out


def mobius(n: int) -> int:
    fac = factorize(n)
    if any(e > 1 for e in fac.values()):
        return 0
    return -1 if len(fac) % 2 else 1


def divisors(n: int) -> list[int]:
    divs = [1]
    for p, e in factorize(n).items():
        divs = [d * p**k for d in divs for k in range(e + 1)]
    return sorted(divs)


def ramanujan_sum(q: int, n: int) -> int:
    """c_q(n) = sum over units a mod q of e(an/q), as an exact integer."""
    g = math.gcd(q, n) if n else q
    return sum(mobius(q // d) * d for d in divisors(g))


@lru_cache(maxsize=256)
def ramanujan_table(q: int) -> tuple[int, ...]:
    """(c_q(0), ..., c_q(q-1)); c_q(n) depends on n only through gcd(n, q)."""
    by_gcd = {g: ramanujan_sum(q, g) for g in divisors(q)}
    return tuple(by_gcd[math.gcd(v, q) if v else q] for v in range(q))


def is_square(n: int) -> bool:
    return n >= 0 and math.isqrt(n) ** 2 == n


def padic_valuation(n: int, p: int) -> int:
    if n == 0:
        raise ValueError("valuation of 0 is infinite")
    v = 0
    while n % p == 0:
        n //= p
        v += 1
    return v
