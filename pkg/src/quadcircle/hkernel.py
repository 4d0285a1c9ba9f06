"""The smooth delta-kernel h(x, y) and the normalising constant c_Q.

    w0(x)    = exp(1/(x^2 - 1)) on |x| < 1
    omega(x) = (4/c0) w0(4x - 3), supported on (1/2, 1), unit mass
    h1(x)    = sum_j omega(xj)/(xj)             j in (1/(2x), 1/x)
    h2(x,y)  = sum_j omega(|y|/(xj))/(xj)       j in (|y|/x, 2|y|/x)
    h = h1 - h2

Both j-ranges are enumerated in full.  Terms at the range ends carry
omega = 0 because the support of omega is open, so inclusive integer
ranges are safe.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy import integrate

from .arith import euler_phi, ramanujan_sum

log = logging.getLogger(__name__)

_U = 2.0**-53


@dataclass(frozen=True)
class KernelParams:
    c0: float
    omega_mass: float
    omega_inv_moment: float  # int omega(s)/s ds


_params: KernelParams | None = None
_params_lock = threading.Lock()


def _w0_scalar(x: float) -> float:
    return math.exp(1.0 / (x * x - 1.0)) if abs(x) < 1.0 else 0.0


def kernel_params() -> KernelParams:
    """c0 = int w0 and the mass of omega, computed once."""
    global _params
    if _params is None:
        with _params_lock:
            if _params is None:
                c0, _ = integrate.quad(_w0_scalar, -1.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
                mass, _ = integrate.quad(
                    lambda s: 4.0 / c0 * _w0_scalar(4.0 * s - 3.0), 0.5, 1.0, epsabs=1e-14, epsrel=1e-13
                )
                inv, _ = integrate.quad(
                    lambda s: 4.0 / c0 * _w0_scalar(4.0 * s - 3.0) / s, 0.5, 1.0, epsabs=1e-14, epsrel=1e-13
                )
                _params = KernelParams(c0=c0, omega_mass=mass, omega_inv_moment=inv)
                log.debug("kernel constants: c0=%.15g, mass(omega)=%.15g", c0, mass)
    return _params


def eval_w0(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    xi = x[inside]
    out[inside] = np.exp(1.0 / (xi * xi - 1.0))
    return out if out.ndim else float(out)


def omega(x):
    return 4.0 / kernel_params().c0 * eval_w0(4.0 * np.asarray(x, dtype=float) - 3.0)


@nb.njit(cache=True)
def _term(s, denom, k):
    """k * omega-shape(s) / denom and a first-order rounding-error bound."""
    v = 4.0 * s - 3.0
    if v <= -1.0 or v >= 1.0:
        return 0.0, 0.0
    arg = 1.0 / (v * v - 1.0)
    val = k * math.exp(arg) / denom
    # relative error: a few ulps from the arithmetic, amplified by |arg| in exp
    # and by arg^2 through the rounding of s
    return val, val * 16.0 * (1.0 + abs(arg)) ** 2 * 1.1102230246251565e-16


@nb.njit(cache=True)
def _h1(x, k):
    tot = 0.0
    err = 0.0
    j0 = max(1, int(math.floor(0.5 / x)))
    j1 = int(math.ceil(1.0 / x))
    for j in range(j0, j1 + 1):
        v, e = _term(x * j, x * j, k)
        tot += v
        err += e
    return tot, err


@nb.njit(cache=True)
def _h2(x, y, k):
    ay = abs(y)
    tot = 0.0
    err = 0.0
    if ay == 0.0:
        return tot, err
    j0 = max(1, int(math.floor(ay / x)))
    j1 = int(math.ceil(2.0 * ay / x))
    for j in range(j0, j1 + 1):
        v, e = _term(ay / (x * j), x * j, k)
        tot += v
        err += e
    return tot, err


@nb.njit(cache=True)
def _h_many(xs, ys, k, out, err):
    for i in range(xs.size):
        a, ea = _h1(xs[i], k)
        b, eb = _h2(xs[i], ys[i], k)
        out[i] = a - b
        err[i] = ea + eb + (a + b) * 4.0 * 1.1102230246251565e-16


def _norm() -> float:
    return 4.0 / kernel_params().c0


def h_with_error(x, y):
    """Vectorised h(x, y) with a pointwise floating-point error bound."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0):
        raise ValueError("h(x, y) needs x > 0")
    xb, yb = np.broadcast_arrays(x, y)
    xs = np.ascontiguousarray(xb.ravel())
    ys = np.ascontiguousarray(yb.ravel())
    out = np.empty(xs.size)
    err = np.empty(xs.size)
    _h_many(xs, ys, _norm(), out, err)
    return out.reshape(xb.shape), err.reshape(xb.shape)


def eval_h(x, y):
    """h(x, y) = h1(x) - h2(x, y); x > 0.  Scalars in, scalar out."""
    val, _ = h_with_error(x, y)
    return float(val) if val.ndim == 0 else val


def eval_h1(x: float) -> float:
    if x <= 0:
        raise ValueError("h1(x) needs x > 0")
    return _h1(float(x), _norm())[0]


def eval_h2(x: float, y: float) -> float:
    if x <= 0:
        raise ValueError("h2(x, y) needs x > 0")
    return _h2(float(x), float(y), _norm())[0]


def support_vanishes(x, y) -> np.ndarray:
    """Points where h must vanish: x > max(1, 2|y|)."""
    return np.asarray(x) > np.maximum(1.0, 2.0 * np.abs(y))


def _denominator(Q: float) -> tuple[float, float]:
    # D(Q) = sum_{q<Q} phi(q) h1(q/Q); c_Q = Q^2 / D(Q)
    k = _norm()
    vals, errs = [], []
    for q in range(1, math.ceil(Q)):
        v, e = _h1(q / Q, k)
        ph = euler_phi(q)
        vals.append(ph * v)
        errs.append(ph * e)
    if not vals:
        raise ValueError(f"Q too small: Q = {Q} leaves the sum over q < Q empty")
    D = math.fsum(vals)
    if D <= 0:
        # Q = 2: the only term q = 1 sits on the edge of the open support of omega
        raise ValueError(f"c_Q undefined at Q = {Q}: the normalising sum vanishes")
    return D, math.fsum(errs) + _U * D


def compute_cQ(Q: float) -> float:
    if Q <= 1.0 + 1e-12:
        raise ValueError(f"Q too small: Q = {Q} (need Q > 1)")
    D, _ = _denominator(float(Q))
    return Q * Q / D


@dataclass(frozen=True)
class DeltaValue:
    n: int
    Q: float
    value: float
    err_bound: float
    q_terms: int


def delta_terms(n: int, Q: float) -> DeltaValue:
    """c_Q Q^-2 sum_q c_q(n) h(q/Q, n/Q^2), with c_q(n) the exact Ramanujan sum.

    The q-range stops at Q max(1, 2|n|/Q^2) since h vanishes beyond it.
    Written as N/D with D the c_Q denominator so that n = 0 gives N = D and
    the value is exactly 1.
    """
    n = int(n)
    Q = float(Q)
    if Q < 2:
        raise ValueError(f"delta_rhs needs Q >= 2, got {Q}")
    D, eD = _denominator(Q)
    if n == 0:
        return DeltaValue(0, Q, 1.0, 0.0, math.ceil(Q) - 1)
    k = _norm()
    y = n / (Q * Q)
    qmax = math.floor(Q * max(1.0, 2.0 * abs(n) / (Q * Q))) + 1
    parts, errs = [], []
    for q in range(1, qmax + 1):
        cq = ramanujan_sum(q, n)
        if cq == 0:
            continue
        a, ea = _h1(q / Q, k)
        b, eb = _h2(q / Q, y, k)
        hv = a - b
        parts.append(cq * hv)
        errs.append(abs(cq) * (ea + eb + (a + b) * 4.0 * _U))
    num = math.fsum(parts)
    val = num / D
    err = (math.fsum(errs) + _U * abs(num)) / D + abs(val) * (eD / D + 2 * _U)
    return DeltaValue(n, Q, val, err, qmax)


def delta_rhs(n: int, Q: float) -> float:
    return delta_terms(n, Q).value


def tail_constant(x: float) -> float:
    """lim_{|y| -> oo} h(x, y) = h1(x) - (1/x) int omega(s)/s ds.

    h2(x, y) tends to the integral of the summand in j while h1(x) is the
    Riemann sum of the same integrand with step x, so h(x, .) is a delta-like
    bump sitting on this (small, nonzero) constant.
    """
    return eval_h1(x) - kernel_params().omega_inv_moment / x


@nb.njit(cache=True)
def _hhat_many(x, taus, k, out):
    for i in range(taus.size):
        u = x * abs(taus[i])
        if u <= 1.0:
            out[i] = 1.0
            continue
        y = 1.0 / u
        s = 0.0
        for n in range(max(1, int(math.floor(0.5 * u))), int(math.ceil(u)) + 1):
            v, _ = _term(n * y, 1.0, k)
            s += v
        out[i] = 1.0 - y * s


def h_fourier(x: float, tau) -> np.ndarray:
    """Regular part of the Fourier transform int h(x, y) e(-tau y) dy.

    By Poisson summation in j it equals 1 - u^{-1} sum_{n >= 1} omega(n/u)
    with u = x |tau|; in particular it is exactly 1 for |tau| <= 1/x.  The
    full transform adds tail_constant(x) * delta(tau).
    """
    if x <= 0:
        raise ValueError("need x > 0")
    tau = np.ascontiguousarray(np.asarray(tau, dtype=float).ravel())
    out = np.empty(tau.size)
    _hhat_many(float(x), tau, _norm(), out)
    return out


def integrate_h(x: float, X: float = 1.0, epsabs: float = 1e-13) -> tuple[float, float]:
    """int_{-X}^{X} h(x, y) dy, split at the multiples of x/2 where summands switch on."""
    if x <= 0 or X <= 0:
        raise ValueError("need x > 0 and X > 0")
    k = _norm()
    a1, _ = _h1(float(x), k)
    # h1 does not depend on y; integrate h2 over [0, X] and use evenness
    edges = np.arange(0.5 * x, X, 0.5 * x)
    edges = np.concatenate([edges, [X]]) if edges.size else np.array([X])
    edges = edges[edges > 0.5 * x - 1e-15]
    tot, err = [], 0.0
    lo = 0.5 * x
    for hi in edges:
        if hi <= lo:
            continue
        v, e = integrate.quad(lambda y: _h2(x, y, k)[0], lo, hi, epsabs=epsabs / max(1, edges.size), limit=200)
        tot.append(v)
        err += e
        lo = hi
    return 2.0 * X * a1 - 2.0 * math.fsum(tot), 2.0 * err


def integrate_yh(x: float, X: float = 1.0) -> float:
    """First moment int_{-X}^{X} y h(x, y) dy.

    h is even in y, so this vanishes identically; computed by quadrature
    anyway as a numerical diagnostic.
    """
    k = _norm()
    edges = np.union1d(np.arange(-X, X, 0.5 * x), [X])
    pieces = [
        integrate.quad(lambda y: y * (_h1(x, k)[0] - _h2(x, y, k)[0]), a, b, limit=200)[0]
        for a, b in zip(edges[:-1], edges[1:])
    ]
    return math.fsum(pieces)


def bound_constant(xs, ys) -> float:
    """max of x |h(x, y)| over a probe grid (empirical constant in |h| <= c/x)."""
    xg, yg = np.meshgrid(np.asarray(xs, float), np.asarray(ys, float), indexing="ij")
    hv, _ = h_with_error(xg, yg)
    return float(np.max(xg * np.abs(hv)))
