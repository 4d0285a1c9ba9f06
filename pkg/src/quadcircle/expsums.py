"""Complete exponential sums

    S_q(c; A, t) = sum_{a mod q, (a,q)=1} sum_{b mod q} e_q(a (F(b) - t) + c.b)

Three routes:

naive   enumerate b mod q.  The a-sum is done first and exactly:
        sum_a e_q(a v) is the Ramanujan sum c_q(v), an integer, so we only
        need the joint histogram of (F(b) - t, c.b) mod q.  For c = 0 the
        result is an exact integer.
crt     c = 0 only: multiply prime-power values over the factorisation of q.
split   c = 0 prime powers beyond the naive budget: split A over Z_(p) into
        1x1 and 2x2 blocks and evaluate the block Gauss sums with the
        standard modulus-lowering recursions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numba as nb
import numpy as np

from .arith import euler_phi, factorize, ramanujan_table
from .forms import QuadraticForm

log = logging.getLogger(__name__)

WORK_BUDGET = 10**9

__all__ = [
    "BudgetExceeded",
    "ExpSumValue",
    "S_q_naive",
    "S_q",
    "S_prime_power_split",
    "euler_phi",
    "padic_split",
]


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class ExpSumValue:
    q: int
    c: tuple[int, ...]
    t: int
    value: complex
    route: str

    @property
    def real(self) -> float:
        return self.value.real


def _check_c(form: QuadraticForm, c) -> tuple[int, ...]:
    if c is None:
        return (0,) * form.dim
    c = tuple(int(x) for x in c)
    if len(c) != form.dim:
        raise ValueError(f"c has length {len(c)}, form has d={form.dim}")
    return c


@nb.njit(cache=True)
def _histogram(q, A, c, with_c):
    """hist[F(b) mod q, c.b mod q] over b in (Z/q)^d.

    Odometer over b_1..b_{d-1}; the innermost coordinate b_0 runs through a
    quadratic recurrence so each term costs O(1).
    """
    d = A.shape[0]
    ncol = q if with_c else 1
    hist = np.zeros((q, ncol), dtype=np.int64)
    half = np.empty(d, dtype=np.int64)
    for i in range(d):
        half[i] = (A[i, i] // 2) % q
    cm = np.empty(d, dtype=np.int64)
    for i in range(d):
        cm[i] = c[i] % q
    g = np.zeros(d, dtype=np.int64)  # A b mod q, with b_0 = 0
    b = np.zeros(d, dtype=np.int64)
    base = 0  # F(b) mod q with b_0 = 0
    cb = 0
    while True:
        f = base
        inc = (g[0] + half[0]) % q
        two = (2 * half[0]) % q
        cc = cb
        for _ in range(q):
            if with_c:
                hist[f, cc] += 1
                cc += cm[0]
                if cc >= q:
                    cc -= q
            else:
                hist[f, 0] += 1
            f += inc
            if f >= q:
                f -= q
            inc += two
            if inc >= q:
                inc -= q
        # advance the odometer on coordinates 1..d-1
        i = 1
        while i < d:
            base = (base + g[i] + half[i]) % q
            for r in range(d):
                g[r] = (g[r] + A[r, i]) % q
            cb = (cb + cm[i]) % q
            b[i] += 1
            if b[i] < q:
                break
            b[i] = 0
            i += 1
        if i == d:
            break
    return hist


def form_histogram(form: QuadraticForm, q: int, c=None) -> np.ndarray:
    """Joint counts of (F(b) mod q, c.b mod q); column axis has length 1 if c = 0."""
    c = _check_c(form, c)
    work = q**form.dim
    if work > WORK_BUDGET:
        raise BudgetExceeded(f"budget exceeded: q^d = {q}^{form.dim} = {work:.3g} > {WORK_BUDGET:.0e}")
    A = np.array(form.A, dtype=np.int64) % q if q > 1 else np.zeros((form.dim, form.dim), np.int64)
    # even diagonal: store A_ii so that A_ii // 2 is the true half before reduction
    for i in range(form.dim):
        A[i, i] = form.A[i][i] % (2 * q)
    with_c = any(x % q for x in c)
    return _histogram(q, A, np.array(c, dtype=np.int64), with_c)


def S_q_naive(q: int, c, form: QuadraticForm, t: int) -> ExpSumValue:
    q = int(q)
    if q < 1:
        raise ValueError("q must be >= 1")
    c = _check_c(form, c)
    t = int(t)
    if q == 1:
        return ExpSumValue(1, c, t, complex(1.0), "naive")
    hist = form_histogram(form, q, c)
    table = np.array(ramanujan_table(q), dtype=np.int64)
    # weight of F(b) = v is c_q(v - t)
    wts = np.roll(table, t % q)
    col = hist.T.astype(object) @ wts.astype(object)  # exact integers per c.b class
    if hist.shape[1] == 1:
        return ExpSumValue(q, c, t, complex(int(col[0])), "naive")
    w = np.arange(q)
    ang = 2.0 * np.pi * w / q
    ints = [int(x) for x in col]
    re = math.fsum(v * math.cos(a) for v, a in zip(ints, ang) if v)
    im = math.fsum(v * math.sin(a) for v, a in zip(ints, ang) if v)
    return ExpSumValue(q, c, t, complex(re, im), "naive")


# ---------------------------------------------------------------------------
# p-adic splitting


def _val(x: Fraction, p: int) -> int:
    if x == 0:
        return 10**9
    v = 0
    n, d = x.numerator, x.denominator
    while n % p == 0:
        n //= p
        v += 1
    while d % p == 0:
        d //= p
        v -= 1
    return v


@dataclass(frozen=True)
class Block:
    """F restricted to one block is p^v * phi with phi primitive.

    size 1: phi = u x^2.   size 2 (p = 2 only): phi = a x^2 + b xy + g y^2, b odd.
    Coefficients are p-adic integers stored as Fractions with p-free denominator.
    """

    size: int
    v: int
    coeffs: tuple[Fraction, ...]


@lru_cache(maxsize=256)
def padic_split(form: QuadraticForm, p: int) -> tuple[Block, ...]:
    """Block-diagonalise A over Z_(p) by symmetric elimination."""
    M = [[Fraction(x) for x in row] for row in form.A]
    active = list(range(form.dim))
    blocks: list[Block] = []
    while active:
        best = min(((_val(M[i][j], p), i, j) for i in active for j in active if i <= j), key=lambda r: r[0])
        vmin = best[0]
        diag = [i for i in active if _val(M[i][i], p) == vmin]
        if not diag and p != 2:
            # e_i <- e_i + e_j makes the diagonal attain the minimum for odd p
            _, i, j = best
            for k in range(len(M)):
                M[i][k] += M[j][k]
            for k in range(len(M)):
                M[k][i] += M[k][j]
            diag = [i]
        if diag:
            i = diag[0]
            piv = M[i][i]
            active.remove(i)
            for r in active:
                f = M[r][i] / piv
                if f:
                    for k in active:
                        M[r][k] -= f * M[i][k]
            for r in active:
                M[r][i] = M[i][r] = Fraction(0)
            half = piv / 2
            v = _val(half, p)
            blocks.append(Block(1, v, (half / Fraction(p) ** v,)))
        else:
            _, i, j = best
            B = [[M[i][i], M[i][j]], [M[j][i], M[j][j]]]
            det = B[0][0] * B[1][1] - B[0][1] ** 2
            inv = [[B[1][1] / det, -B[0][1] / det], [-B[1][0] / det, B[0][0] / det]]
            active.remove(i)
            active.remove(j)
            for r in active:
                for k in active:
                    cr = (M[r][i], M[r][j])
                    ck = (M[k][i], M[k][j])
                    M[r][k] -= sum(cr[s] * inv[s][u] * ck[u] for s in range(2) for u in range(2))
            for r in active:
                M[r][i] = M[i][r] = M[r][j] = M[j][r] = Fraction(0)
            scale = Fraction(2) ** vmin
            blocks.append(Block(2, vmin, (B[0][0] / 2 / scale, B[0][1] / scale, B[1][1] / 2 / scale)))
    return tuple(blocks)


def _mod(x: Fraction, m: int) -> int:
    return x.numerator * pow(x.denominator, -1, m) % m


def _direct1(coef: int, mod: int) -> complex:
    x = np.arange(mod, dtype=np.int64)
    return complex(np.exp(2j * np.pi * ((coef * x * x) % mod) / mod).sum())


def _direct2(a: int, b: int, g: int, mod: int) -> complex:
    x, y = np.meshgrid(np.arange(mod), np.arange(mod), indexing="ij")
    return complex(np.exp(2j * np.pi * ((a * x * x + b * x * y + g * y * y) % mod) / mod).sum())


def gauss_block(p: int, blk: Block, a: int, l: int) -> complex:
    """sum over x mod p^l (x in Z^size) of e(a F_blk(x) / p^l)."""
    if blk.v >= l:
        return complex(p ** (blk.size * l))
    lift = p ** (blk.size * blk.v)
    l -= blk.v
    # lower the modulus by p^2 while keeping the sum: G_l = K * G_{l-2}
    if blk.size == 1:
        floor_l, K = (1, p) if p != 2 else (3, 2)
    else:
        floor_l, K = 1, 4
    steps = max(0, (l - floor_l + 1) // 2)
    l -= 2 * steps
    mod = p**l
    if l == 0:
        base = complex(1.0)
    elif blk.size == 1:
        base = _direct1(a * _mod(blk.coeffs[0], mod) % mod, mod)
    else:
        base = _direct2(*(a * _mod(x, mod) % mod for x in blk.coeffs), mod)
    return lift * K**steps * base


def S_prime_power_split(p: int, l: int, form: QuadraticForm, t: int) -> ExpSumValue:
    """S_{p^l}(0; A, t) from the p-adic block splitting."""
    q = p**l
    t = int(t)
    zero = (0,) * form.dim
    if l == 0:
        return ExpSumValue(1, zero, t, complex(1.0), "split")
    blocks = padic_split(form, p)
    # the block sums depend on the unit a only through a mod m
    m = min(q, p if p != 2 else 8)
    k = q // m
    if t % k:
        return ExpSumValue(q, zero, t, complex(0.0), "split")
    terms = []
    for r in range(1, m):
        if r % p == 0:
            continue
        prod = complex(1.0)
        for blk in blocks:
            prod *= gauss_block(p, blk, r, l)
        terms.append(prod * k * np.exp(-2j * np.pi * ((r * t) % q) / q))
    val = complex(math.fsum(z.real for z in terms), math.fsum(z.imag for z in terms))
    return ExpSumValue(q, zero, t, val, "split")


def S_q(q: int, c, form: QuadraticForm, t: int, prime_power_route: str = "auto") -> ExpSumValue:
    """S_q(c) with the multiplicative assembly for c = 0.

    prime_power_route: "naive", "split" or "auto" (naive within budget, else split).
    """
    q = int(q)
    c = _check_c(form, c)
    t = int(t)
    if q == 1:
        return ExpSumValue(1, c, t, complex(1.0), "crt")
    if any(c):
        return S_q_naive(q, c, form, t)
    val = complex(1.0)
    for p, l in sorted(factorize(q).items()):
        pk = p**l
        if prime_power_route == "split" or (prime_power_route == "auto" and pk**form.dim > WORK_BUDGET):
            part = S_prime_power_split(p, l, form, t)
        else:
            part = S_q_naive(pk, c, form, t)
        val *= part.value
    return ExpSumValue(q, c, t, val, "crt")
