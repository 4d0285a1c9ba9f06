"""Brute-force lattice point counts

    N_L(w; A, m) = sum_{z in Z^d/L, F(z) = m} w(z)
                 = sum_{z' in Z^d, F(z') = L^2 m} w(z'/L).

Solutions of F(z') = L^2 m inside the ball |z'| <= L R are enumerated with
exact integer arithmetic by one of three strategies:

hyperbolic  F = sum_k a_k x_k y_k + sum_i h_i u_i^2 up to a permutation of
            coordinates.  Loop over (u, x); the condition on y is linear and
            is solved on its solution lattice by one extended-gcd step.
lastcoord   A_dd != 0.  Loop over z'_1..z'_{d-1} and solve the quadratic in
            z'_d with an integer square root.
odometer    everything in the box, checked one by one.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numba as nb
import numpy as np

from .expsums import BudgetExceeded
from .forms import LatticeProblem, QuadraticForm
from .quadric_integrals import Weight

log = logging.getLogger(__name__)

ENUM_BUDGET = 4 * 10**9
STRATEGIES = ("hyperbolic", "lastcoord", "odometer")


class EnumerationBudgetExceeded(BudgetExceeded):
    pass


@dataclass(frozen=True)
class CountResult:
    value: float
    points: int
    radius: float
    truncation_bound: float
    strategy: str = ""
    workers: int = 1

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "points": self.points,
            "radius": self.radius,
            "truncation_bound": self.truncation_bound,
            "strategy": self.strategy,
        }


# ---------------------------------------------------------------------------
# structure detection


@dataclass(frozen=True)
class HyperbolicSplit:
    """F(z) = sum_k a[k] z[xs[k]] z[ys[k]] + sum_i half[i] z[us[i]]^2."""

    us: tuple[int, ...]
    half: tuple[int, ...]
    xs: tuple[int, ...]
    ys: tuple[int, ...]
    a: tuple[int, ...]


def detect_hyperbolic(form: QuadraticForm) -> HyperbolicSplit | None:
    A = form.A
    d = form.dim
    partner = {}
    for i in range(d):
        off = [j for j in range(d) if j != i and A[i][j] != 0]
        if A[i][i] != 0:
            if off:
                return None
        else:
            if len(off) != 1:
                return None
            partner[i] = off[0]
    pairs = []
    for i, j in partner.items():
        if partner.get(j) != i:
            return None
        if i < j:
            pairs.append((i, j))
    if not pairs:
        return None
    us = tuple(i for i in range(d) if A[i][i] != 0)
    return HyperbolicSplit(
        us=us,
        half=tuple(A[i][i] // 2 for i in us),
        xs=tuple(i for i, _ in pairs),
        ys=tuple(j for _, j in pairs),
        a=tuple(A[i][j] for i, j in pairs),
    )


def choose_strategy(form: QuadraticForm) -> str:
    if detect_hyperbolic(form) is not None:
        return "hyperbolic"
    if form.A[-1][-1] != 0:
        return "lastcoord"
    return "odometer"


def candidate_volume(form: QuadraticForm, B: int, strategy: str) -> float:
    """Number of outer-loop cells the strategy visits in the box [-B, B]^d."""
    side = 2 * B + 1
    d = form.dim
    if strategy == "hyperbolic":
        hs = detect_hyperbolic(form)
        outer = len(hs.us) + len(hs.xs)
        # each fiber also scans max(0, n - 2) free y-coordinates
        return float(side) ** (outer + max(0, len(hs.ys) - 2)) * 2
    if strategy == "lastcoord":
        return float(side) ** (d - 1)
    return float(side) ** d


# ---------------------------------------------------------------------------
# compiled kernels


@nb.njit(cache=True)
def _isqrt(n):
    if n < 0:
        return -1
    r = np.int64(math.sqrt(float(n)))
    while r * r > n:
        r -= 1
    while (r + 1) * (r + 1) <= n:
        r += 1
    return r


@nb.njit(cache=True)
def _egcd(a, b):
    # returns g >= 0, s, t with s a + t b = g
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r != 0:
        qq = old_r // r
        old_r, r = r, old_r - qq * r
        old_s, s = s, old_s - qq * s
        old_t, t = t, old_t - qq * t
    if old_r < 0:
        return -old_r, -old_s, -old_t
    return old_r, old_s, old_t


@nb.njit(cache=True)
def _push(buf, n, z):
    if n == buf.shape[0]:
        nbuf = np.empty((2 * buf.shape[0], buf.shape[1]), dtype=np.int64)
        nbuf[:n] = buf[:n]
        buf = nbuf
    buf[n, :] = z
    return buf, n + 1


@nb.njit(cache=True)
def _ceil_div(a, b):
    return -((-a) // b)


@nb.njit(cache=True, nogil=True)
def _kernel_hyperbolic(B, rad2, N0, us, half, xs, ys, a, lo, hi):
    """Outer loop over (u, x) with the first outer coordinate in [lo, hi]."""
    d = us.size + 2 * xs.size
    nu = us.size
    nx = xs.size
    outer = nu + nx
    buf = np.empty((1024, d), dtype=np.int64)
    cnt = 0
    v = np.full(outer, -B, dtype=np.int64)
    v[0] = lo
    z = np.zeros(d, dtype=np.int64)
    g = np.zeros(nx, dtype=np.int64)
    yv = np.zeros(nx, dtype=np.int64)
    while True:
        s = 0
        for i in range(outer):
            s += v[i] * v[i]
        if s <= rad2:
            N = N0
            for i in range(nu):
                N -= half[i] * v[i] * v[i]
                z[us[i]] = v[i]
            k1 = -1
            k2 = -1
            for k in range(nx):
                xk = v[nu + k]
                z[xs[k]] = xk
                g[k] = a[k] * xk
                if g[k] != 0:
                    if k1 < 0:
                        k1 = k
                    elif k2 < 0:
                        k2 = k
            rem = rad2 - s
            b = _isqrt(rem)
            # free coordinates: every y except k1, k2
            nfree = 0
            for k in range(nx):
                if k != k1 and k != k2:
                    nfree += 1
            free = np.empty(nfree, dtype=np.int64)
            j = 0
            for k in range(nx):
                if k != k1 and k != k2:
                    free[j] = k
                    j += 1
            for j in range(nfree):
                yv[free[j]] = -b
            while True:
                ss = 0
                Nr = N
                for j in range(nfree):
                    ss += yv[free[j]] * yv[free[j]]
                    Nr -= g[free[j]] * yv[free[j]]
                if ss <= rem:
                    if k1 < 0:
                        if Nr == 0:
                            for k in range(nx):
                                z[ys[k]] = yv[k]
                            buf, cnt = _push(buf, cnt, z)
                    elif k2 < 0:
                        if Nr % g[k1] == 0:
                            y1 = Nr // g[k1]
                            if ss + y1 * y1 <= rem:
                                yv[k1] = y1
                                for k in range(nx):
                                    z[ys[k]] = yv[k]
                                buf, cnt = _push(buf, cnt, z)
                    else:
                        g1 = g[k1]
                        g2 = g[k2]
                        gg, s1, s2 = _egcd(g1, g2)
                        if Nr % gg == 0:
                            f = Nr // gg
                            st1 = g2 // gg
                            st2 = -(g1 // gg)
                            # particular solution reduced mod |st1|
                            y1p = (s1 % abs(st1)) * (f % abs(st1)) % abs(st1)
                            y2p = (Nr - g1 * y1p) // g2
                            # y1 = y1p + t st1, y2 = y2p + t st2, both in [-bb, bb]
                            bb = _isqrt(rem - ss)
                            if st1 > 0:
                                t_lo = _ceil_div(-bb - y1p, st1)
                                t_hi = (bb - y1p) // st1
                            else:
                                t_lo = _ceil_div(bb - y1p, st1)
                                t_hi = (-bb - y1p) // st1
                            if st2 > 0:
                                t_lo = max(t_lo, _ceil_div(-bb - y2p, st2))
                                t_hi = min(t_hi, (bb - y2p) // st2)
                            else:
                                t_lo = max(t_lo, _ceil_div(bb - y2p, st2))
                                t_hi = min(t_hi, (-bb - y2p) // st2)
                            for tt in range(t_lo, t_hi + 1):
                                y1 = y1p + tt * st1
                                y2 = y2p + tt * st2
                                if ss + y1 * y1 + y2 * y2 <= rem:
                                    yv[k1] = y1
                                    yv[k2] = y2
                                    for k in range(nx):
                                        z[ys[k]] = yv[k]
                                    buf, cnt = _push(buf, cnt, z)
                # next free-y tuple
                j = 0
                while j < nfree:
                    yv[free[j]] += 1
                    if yv[free[j]] <= b:
                        break
                    yv[free[j]] = -b
                    j += 1
                if j == nfree:
                    break
        # next outer tuple; coordinate 0 is the partition coordinate
        i = outer - 1
        while i >= 0:
            v[i] += 1
            if v[i] <= (hi if i == 0 else B):
                break
            v[i] = lo if i == 0 else -B
            i -= 1
        if i < 0:
            break
    return buf[:cnt]


@nb.njit(cache=True, nogil=True)
def _partial_F(A, z, m):
    # F restricted to the first m coordinates; A has even diagonal
    tot = 0
    for i in range(m):
        tot += (A[i, i] // 2) * z[i] * z[i]
        for j in range(i + 1, m):
            tot += A[i, j] * z[i] * z[j]
    return tot


@nb.njit(cache=True, nogil=True)
def _kernel_lastcoord(A, B, rad2, N0, lo, hi):
    d = A.shape[0]
    buf = np.empty((1024, d), dtype=np.int64)
    cnt = 0
    z = np.full(d, -B, dtype=np.int64)
    z[0] = lo
    qa = A[d - 1, d - 1] // 2
    while True:
        s = 0
        for i in range(d - 1):
            s += z[i] * z[i]
        if s <= rad2:
            c = _partial_F(A, z, d - 1) - N0
            bl = 0
            for i in range(d - 1):
                bl += A[i, d - 1] * z[i]
            disc = bl * bl - 4 * qa * c
            if disc >= 0:
                r = _isqrt(disc)
                if r * r == disc:
                    for sgn in (-1, 1):
                        if r == 0 and sgn == 1:
                            break
                        num = -bl + sgn * r
                        if num % (2 * qa) == 0:
                            zd = num // (2 * qa)
                            if s + zd * zd <= rad2:
                                z[d - 1] = zd
                                buf, cnt = _push(buf, cnt, z)
        i = d - 2
        while i >= 0:
            z[i] += 1
            if z[i] <= (hi if i == 0 else B):
                break
            z[i] = lo if i == 0 else -B
            i -= 1
        if i < 0:
            break
    return buf[:cnt]


@nb.njit(cache=True, nogil=True)
def _kernel_odometer(A, B, rad2, N0, lo, hi):
    d = A.shape[0]
    buf = np.empty((1024, d), dtype=np.int64)
    cnt = 0
    z = np.full(d, -B, dtype=np.int64)
    z[0] = lo
    while True:
        s = 0
        for i in range(d):
            s += z[i] * z[i]
        if s <= rad2 and _partial_F(A, z, d) == N0:
            buf, cnt = _push(buf, cnt, z)
        i = d - 1
        while i >= 0:
            z[i] += 1
            if z[i] <= (hi if i == 0 else B):
                break
            z[i] = lo if i == 0 else -B
            i -= 1
        if i < 0:
            break
    return buf[:cnt]


# ---------------------------------------------------------------------------
# drivers


def _prepare(form: QuadraticForm, mL2: int, L: float, radius: float, strategy: str, budget: float):
    """Validate the request and return (strategy, B, runner) with runner(lo, hi) -> points."""
    mL2 = int(mL2)
    rad = float(L) * float(radius)
    if rad < 0:
        raise ValueError("radius must be >= 0")
    rad2 = math.floor(rad * rad)
    B = math.isqrt(rad2)
    if strategy == "auto":
        strategy = choose_strategy(form)
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    A = np.array(form.A, dtype=np.int64)
    if strategy == "hyperbolic":
        hs = detect_hyperbolic(form)
        if hs is None:
            raise ValueError("form has no hyperbolic block structure")
    elif strategy == "lastcoord":
        if form.A[-1][-1] == 0:
            raise ValueError("last-coordinate solve needs A_dd != 0")
        if form.dim == 1:
            strategy = "odometer"
    vol = candidate_volume(form, B, strategy)
    if vol > budget:
        raise EnumerationBudgetExceeded(f"budget exceeded: {strategy} enumeration would visit {vol:.3g} cells")
    log.debug("enumerate %s: B=%d, cells=%.3g", strategy, B, vol)

    if strategy == "hyperbolic":
        args = (
            np.array(hs.us, np.int64), np.array(hs.half, np.int64),
            np.array(hs.xs, np.int64), np.array(hs.ys, np.int64), np.array(hs.a, np.int64),
        )

        def run(lo, hi):
            return _kernel_hyperbolic(B, rad2, mL2, *args, lo, hi)
    elif strategy == "lastcoord":
        def run(lo, hi):
            return _kernel_lastcoord(A, B, rad2, mL2, lo, hi)
    else:
        def run(lo, hi):
            return _kernel_odometer(A, B, rad2, mL2, lo, hi)
    return strategy, B, run


def _slices(B: int, width: int) -> list[tuple[int, int]]:
    # fixed partition of the outer coordinate; it does not depend on the worker count
    return [(lo, min(lo + width - 1, B)) for lo in range(-B, B + 1, width)]


def _map_ordered(fn, jobs, workers: int):
    """fn over jobs, results yielded in job order."""
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            yield from ex.map(lambda j: fn(*j), jobs)
    else:
        for j in jobs:
            yield fn(*j)


def enumerate_solutions(form: QuadraticForm, mL2: int, L: float, radius: float, strategy: str = "auto",
                        workers: int = 1, budget: float = ENUM_BUDGET) -> np.ndarray:
    """All z' in Z^d with F(z') = mL2 and |z'| <= L radius, as rows sorted lexicographically."""
    _, B, run = _prepare(form, mL2, L, radius, strategy, budget)
    chunks = list(_map_ordered(run, _slices(B, max(1, (2 * B + 1) // max(1, workers) + 1)), workers))
    pts = np.concatenate(chunks, axis=0) if chunks else np.empty((0, form.dim), np.int64)
    if pts.shape[0] > 1:
        pts = pts[np.lexsort(pts.T[::-1])]
    return pts


def iter_solutions(form: QuadraticForm, mL2: int, L: float, radius: float, **kw):
    for row in enumerate_solutions(form, mL2, L, radius, **kw):
        yield tuple(int(v) for v in row)


def _truncation_radius(w: Weight, d: int, L: float, tol: float) -> float:
    # tol divided by a rough count of solutions in the effective ball
    R0 = max(w.support_radius(tol), 1.0)
    expected = max(1.0, (2.0 * R0 * L + 1.0) ** max(d - 2, 1))
    return max(w.support_radius(tol / expected), R0)


def weighted_sum(w: Weight, pts: np.ndarray, L: float, chunk: int = 1 << 18) -> float:
    if pts.shape[0] == 0:
        return 0.0
    vals = []
    for s in range(0, pts.shape[0], chunk):
        vals.append(np.asarray(w(pts[s : s + chunk].astype(float) / float(L)), dtype=float))
    # fsum is correctly rounded, so the result is independent of chunking
    return math.fsum(np.concatenate(vals))


def N_L_brute(w: Weight, form: QuadraticForm, m, L, tol: float = 1e-8, radius: float | None = None,
              strategy: str = "auto", workers: int = 1) -> CountResult:
    """sum of w(z'/L) over integer solutions of F(z') = L^2 m."""
    prob = LatticeProblem(form, Fraction(m), Fraction(L))
    Lf = float(prob.L)
    if radius is None:
        radius = _truncation_radius(w, form.dim, Lf, tol)
    used, B, run = _prepare(form, prob.mL2, Lf, radius, strategy, ENUM_BUDGET)

    def job(lo, hi):
        pts = run(lo, hi)
        return weighted_sum(w, pts, Lf), pts.shape[0]

    # one slice per value of the outer coordinate; partial sums reduced in slice order
    parts = list(_map_ordered(job, _slices(B, 1), workers))
    val = math.fsum(p[0] for p in parts)
    npts = sum(p[1] for p in parts)
    # crude tail: sup of |w| outside the ball times the solution count of the
    # doubled ball (points scale like R^{d-2}); reported, not certified
    edge = _weight_edge(w, radius)
    tail = edge * max(npts, 1) * 2.0 ** max(form.dim - 2, 1)
    return CountResult(val, int(npts), float(radius), float(tail), used, int(workers))


def _weight_edge(w: Weight, radius: float) -> float:
    # bisect for the smallest eps with support_radius(eps) <= radius
    lo, hi = 1e-300, max(w.C_w, 1.0)
    if w.support_radius(hi) > radius:
        return hi
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if w.support_radius(mid) <= radius:
            hi = mid
        else:
            lo = mid
        if hi / lo < 1.01:
            break
    return hi
