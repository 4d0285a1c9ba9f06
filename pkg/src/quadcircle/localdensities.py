"""Local densities sigma_p, the singular series and its d = 4 variants.

sigma_p^c(A, t) = sum_{l >= 0} p^{-dl} S_{p^l}(c; A, t), truncated adaptively.
The counting oracle N_p(d; k) = #{z mod p^k : F(z) = t mod p^k} is a separate
vectorised enumerator that shares no code with the exponential sums.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .arith import is_prime, is_square, primes_upto
from .expsums import WORK_BUDGET, BudgetExceeded, S_prime_power_split, S_q_naive
from .forms import QuadraticForm

log = logging.getLogger(__name__)


@dataclass
class SeriesResult:
    value: float
    lmax_used: dict[int, int]
    pmax: int
    tail_bound: float
    converged: bool
    factors: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "tail_bound": self.tail_bound,
            "converged": self.converged,
            "pmax": self.pmax,
            "lmax_used": {str(p): l for p, l in self.lmax_used.items()},
            "factors": {str(p): f for p, f in self.factors.items()},
        }


def decay_ratio(p: int, d: int) -> float:
    # terms of the p-series shrink at least like p^{-(d/2 - 1)} per level
    return float(p) ** (-(d / 2.0 - 1.0))


def _term(p: int, l: int, c, form: QuadraticForm, t: int, route: str) -> float:
    if l == 0:
        return 1.0
    q = p**l
    if route == "split":
        s = S_prime_power_split(p, l, form, t).value
    else:
        s = S_q_naive(q, c, form, t).value
    # real part: for c = 0 the sum is real; for c != 0 the p-series is real
    # after pairing c with -c, and the imaginary part is kept out of the product
    return s.real * float(p) ** (-form.dim * l)


def sigma_p(p: int, c, form: QuadraticForm, t: int, tol: float = 1e-8, lmax: int | None = None,
            route: str = "auto") -> SeriesResult:
    """Partial sum of the local p-series with a geometric tail estimate.

    Stops once max(|last two terms|) * r/(1-r) <= tol with r = p^{-(d/2-1)}.
    route: "split" (c = 0 only, no depth limit), "naive" (budget-limited),
    or "auto" (split when c = 0).
    """
    if not is_prime(p):
        raise ValueError(f"{p} is not prime")
    if tol <= 0:
        raise ValueError("tol must be positive")
    d = form.dim
    c = tuple(int(x) for x in c) if c is not None else (0,) * d
    if route == "auto":
        route = "naive" if any(c) else "split"
    if route == "split" and any(c):
        raise ValueError("split route handles c = 0 only")
    r = decay_ratio(p, d)
    if r >= 1:
        raise ValueError("local series needs d >= 3")
    if lmax is None:
        lmax = max(2, int(62 / math.log2(p)))
    terms = [1.0]
    tail = math.inf
    converged = False
    for l in range(1, lmax + 1):
        if route == "naive" and (p**l) ** d > WORK_BUDGET:
            log.info("sigma_p(%d): naive budget stops the series at l=%d", p, l - 1)
            break
        terms.append(_term(p, l, c, form, t, route))
        if l >= 2:
            tail = max(abs(terms[-1]), abs(terms[-2])) * r / (1 - r)
            if tail <= tol:
                converged = True
                break
    if not converged and len(terms) >= 2:
        tail = max(abs(x) for x in terms[-2:]) * r / (1 - r)
    value = math.fsum(terms)
    return SeriesResult(value, {p: len(terms) - 1}, p, tail, converged, {p: value})


def _product_tail(factors: dict[int, float], pmax: int) -> float:
    """Heuristic bound for prod_{p > pmax} from a power-law fit of |f_p - 1|."""
    ps = [p for p in factors if p > pmax / 3 and p > 7 and abs(factors[p] - 1) > 0]
    if len(ps) < 3:
        return math.nan
    x = np.log(ps)
    y = np.log([abs(factors[p] - 1) for p in ps])
    slope, icpt = np.polyfit(x, y, 1)
    kappa = -slope
    # envelope through the worst point with the fitted exponent
    C = max(abs(factors[p] - 1) * p**kappa for p in ps)
    if kappa <= 1.0:
        return math.inf
    # sum_{p > P} p^{-kappa} ~ P^{1-kappa} / ((kappa - 1) log P)
    return C * pmax ** (1 - kappa) / ((kappa - 1) * math.log(pmax))


def _euler_product(form, c, t, tol, pmax, weight_fn=None) -> SeriesResult:
    primes = primes_upto(pmax)
    per_tol = tol / max(1, len(primes))
    factors: dict[int, float] = {}
    lmaxes: dict[int, int] = {}
    value = 1.0
    ok = True
    tail_local = 0.0
    for p in primes:
        sp = sigma_p(p, c, form, t, per_tol)
        f = sp.value * (weight_fn(p) if weight_fn else 1.0)
        factors[p] = f
        lmaxes[p] = sp.lmax_used[p]
        ok &= sp.converged
        tail_local += sp.tail_bound / max(abs(sp.value), 1e-300)
        value *= f
    rel_tail = _product_tail(factors, pmax)
    tail = abs(value) * (tail_local + (rel_tail if rel_tail == rel_tail else 0.0))
    converged = ok and math.isfinite(tail) and tail <= tol
    return SeriesResult(value, lmaxes, pmax, tail, converged, factors)


def default_pmax(d: int) -> int:
    return 199 if d <= 6 else 97


def sigma(form: QuadraticForm, t: int, tol: float = 1e-6, pmax: int | None = None) -> SeriesResult:
    """Truncated singular series prod_{p <= pmax} sigma_p(A, t)."""
    pmax = default_pmax(form.dim) if pmax is None else pmax
    if form.dim < 5:
        log.warning("sigma: d = %d < 5, the Euler product need not converge", form.dim)
    return _euler_product(form, None, t, tol, pmax)


def sigma_star(form: QuadraticForm, c=None, tol: float = 1e-6, pmax: int | None = None) -> SeriesResult:
    """prod_{p <= pmax} (1 - 1/p) sigma_p^c(A, 0)."""
    pmax = default_pmax(form.dim) if pmax is None else pmax
    return _euler_product(form, c, 0, tol, pmax, weight_fn=lambda p: 1.0 - 1.0 / p)


# ---------------------------------------------------------------------------
# counting oracle


def count_Npk(p: int, k: int, form: QuadraticForm, t: int) -> int:
    """#{z mod p^k : F(z) = t mod p^k} by vectorised enumeration."""
    if not is_prime(p) or k < 1:
        raise ValueError("need p prime and k >= 1")
    q = p**k
    d = form.dim
    if q**d > WORK_BUDGET:
        raise BudgetExceeded(f"budget exceeded: p^(kd) = {q}^{d} > {WORK_BUDGET:.0e}")
    A = np.array(form.A, dtype=np.int64)
    # inner block: as many trailing coordinates as fit in ~4e6 grid points
    n_in = max(1, min(d, int(math.log(4e6) / math.log(q)))) if q > 1 else d
    n_out = d - n_in
    grid = np.indices((q,) * n_in, dtype=np.int64).reshape(n_in, -1)
    Aii = A[n_out:, n_out:]
    F_in = (np.einsum("ij,in,jn->n", Aii, grid, grid) // 2) % q
    Aoi = A[:n_out, n_out:]
    Aoo = A[:n_out, :n_out]
    total = 0
    target = t % q
    for outer in itertools.product(range(q), repeat=n_out):
        o = np.array(outer, dtype=np.int64)
        f_out = int(o @ Aoo @ o) // 2 if n_out else 0
        cross = (o @ Aoi) % q if n_out else np.zeros(n_in, dtype=np.int64)
        vals = (F_in + cross @ grid + f_out) % q
        total += int(np.count_nonzero(vals == target))
    return total


def sigma_p_from_counts(p: int, form: QuadraticForm, t: int, kmax: int) -> float:
    N = count_Npk(p, kmax, form, t)
    return float(Fraction(N, p ** ((form.dim - 1) * kmax)))


def calN_closed(p: int, d: int) -> int:
    """#{z mod p : F_d(z) = 0} for the split form F_d."""
    if d % 2 or d < 2:
        raise ValueError("closed form only for F_d (even d >= 2)")
    s = d // 2
    return p ** (d - 1) + p**s - p ** (s - 1)


def sigma_p_closed(p: int, d: int) -> Fraction:
    """lim_k N_p(d;k) / p^{(d-1)k} for F_d, exact.

    Primitive solutions lift p^{d-1}-to-one; a solution divisible by exactly
    p^j comes from a primitive class mod p^{k-2j} with p^{jd} lifts, so

        sigma_p = (calN_p - 1) p^{1-d} / (1 - p^{2-d})
                = (1 + p^{1-s})(1 - p^{-s}) / (1 - p^{2-d}).
    """
    if d % 2 or d < 4:
        raise ValueError("closed form only for F_d (even d >= 4)")
    s = d // 2
    P = Fraction(p)
    return (1 + P ** (1 - s)) * (1 - P ** (-s)) / (1 - P ** (2 - d))


def sigma_p_closed_alt(p: int, d: int) -> Fraction:
    """(calN_p - 1) p^{1-d} / (1 - p^{2-2d}).

    This variant drops the p^{jd} multiplicity of imprimitive solutions and
    does not equal the limit of N_p(d;k)/p^{(d-1)k}; kept for comparison.
    """
    if d % 2 or d < 2:
        raise ValueError("closed form only for F_d (even d >= 2)")
    s = d // 2
    P = Fraction(p)
    return (1 + P ** (1 - s)) * (1 - P ** (-s)) / (1 - P ** (2 - 2 * d))


# ---------------------------------------------------------------------------
# d = 4 constants


def eta(c, form: QuadraticForm) -> int:
    c = [Fraction(int(x)) for x in c]
    if len(c) != form.dim:
        raise ValueError("dimension mismatch")
    val = sum(ci * si for ci, si in zip(c, form.solve(c)))
    return int(val == 0 and is_square(form.det))


def jacobi(a: int, n: int) -> int:
    if n <= 0 or n % 2 == 0:
        raise ValueError(f"Jacobi symbol needs odd positive n, got {n}")
    a %= n
    result = 1
    while a:
        while a % 2 == 0:
            a //= 2
            if n % 8 in (3, 5):
                result = -result
        a, n = n, a
        if a % 4 == 3 and n % 4 == 3:
            result = -result
        a %= n
    return result if n == 1 else 0


def kronecker(D: int, n: int) -> int:
    """(D/n) for n >= 1: Jacobi on the odd part, Kronecker convention at 2."""
    if n < 1:
        raise ValueError("n must be positive")
    out = 1
    while n % 2 == 0:
        n //= 2
        if D % 2 == 0:
            return 0
        out *= 1 if D % 8 in (1, 7) else -1
    return out * (jacobi(D, n) if n > 1 else 1)


class NonConvergence(RuntimeError):
    def __init__(self, msg: str, partial: float):
        super().__init__(msg)
        self.partial = partial


def dirichlet_L1(Delta: int, tol: float = 1e-8, max_terms: int = 10**7) -> float:
    """L(1, chi) for chi(n) = (Delta/n), by doubly averaged partial sums.

    chi is periodic with period M | 4|Delta| and has mean zero, so averaging
    the partial sums over a full period twice removes the oscillating part
    up to O(M^2 / N^2).
    """
    if is_square(Delta):
        raise ValueError(f"Delta = {Delta} is a perfect square; the character is principal")
    M = 4 * abs(Delta)
    chi = np.array([kronecker(Delta, n) for n in range(1, M + 1)], dtype=float)
    N = max(64 * M, 4096)
    prev = None
    while True:
        N_eff = min(N, max_terms)
        n = np.arange(1, N_eff + 1)
        terms = np.tile(chi, N_eff // M + 1)[:N_eff] / n
        S = np.cumsum(terms)
        cs = np.concatenate([[0.0], np.cumsum(S)])
        lvl1 = (cs[M:] - cs[:-M]) / M
        est = float(np.mean(lvl1[-M:]))
        if prev is not None and abs(est - prev) < tol:
            return est
        if N_eff >= max_terms:
            raise NonConvergence(f"L(1, chi_{Delta}) not converged within {max_terms} terms", est)
        prev = est
        N *= 2


def sigma1_nonsquare(w, form: QuadraticForm, tol: float = 1e-6, pmax: int | None = None, **integral_kw) -> dict:
    """sigma_inf(w) L(1, chi) prod_p (1 - chi(p)/p) sigma_p(A, 0), chi = (det A / .)."""
    from .quadric_integrals import sigma_infinity

    if form.dim != 4:
        raise ValueError("sigma1 is defined for d = 4")
    D = form.det
    if is_square(D):
        raise ValueError("det A is a square; this constant is for non-square determinants")
    pmax = default_pmax(4) if pmax is None else pmax
    s_inf = sigma_infinity(w, form, 0.0, tol=max(tol, 1e-4), **integral_kw)
    L1 = dirichlet_L1(D, tol=tol)
    euler = _euler_product(form, None, 0, tol, pmax, weight_fn=lambda p: 1.0 - kronecker(D, p) / p)
    value = s_inf.value * L1 * euler.value
    return {
        "value": value,
        "sigma_inf": s_inf.value,
        "sigma_inf_err": s_inf.err_estimate,
        "L1": L1,
        "euler": euler.value,
        "euler_tail": euler.tail_bound,
        "chi_modulus": D,
    }
