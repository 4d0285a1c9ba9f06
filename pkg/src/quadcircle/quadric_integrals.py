"""Singular integrals over the level sets Sigma_t = {F = t}.

The measure on Sigma_t is dS / |grad F| (equivalently |Az|^{-1} dz restricted
to the surface), so that int w dz = int dt I(t) with

    I(t) = sigma_inf(w; A, t) = d/dt int_{F < t} w(z) dz.

With a normalising map Z = L z, Q(Z) = +-F(z), this gives
sigma_inf(w; F, t) = |det L|^{-1} I_Q(w o L^{-1}, +-t).

For Q = |u|^2/2 + x.y with x != 0 the level set fibres over (u, x):
y = y_perp + (t - |u|^2/2) x/|x|^2 with y_perp in x^perp, and the measure is
du dx dy_perp / |x|.  In polar x = r theta this carries r^{d1-2} dr dtheta.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import interpolate

from .forms import NormalFormMap, QuadraticForm, normalize_form
from .hkernel import h_fourier, h_with_error, tail_constant

log = logging.getLogger(__name__)

METHODS = ("sphere_closed", "fibration", "thin_shell_mc", "coarea_1d", "tensor_quadrature")

NODE_BUDGET = 10**8


class IntegralBudgetExceeded(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# weights


@dataclass(frozen=True)
class Weight:
    """w : R^d -> R, evaluated on arrays of shape (N, d).

    Declared decay |w(z)| <= C_w <z>^{-d-gamma}; support_radius(eps) is the
    radius beyond which |w| < eps.
    """

    func: Callable[[np.ndarray], np.ndarray]
    dim: int
    decay_exponent: float
    C_w: float
    name: str = "custom"
    radius_fn: Callable[[float], float] | None = field(default=None, compare=False)
    # (amplitude, P) when w(z) = amplitude * exp(-z.P z); enables the Fourier route
    gauss: tuple | None = field(default=None, compare=False)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return self.func(z)

    def support_radius(self, eps: float) -> float:
        if self.radius_fn is not None:
            return self.radius_fn(eps)
        return (self.C_w / eps) ** (1.0 / (self.dim + self.decay_exponent))

    def scaled(self, k: float) -> "Weight":
        f = self.func
        return Weight(lambda z: k * f(z), self.dim, self.decay_exponent, abs(k) * self.C_w,
                      f"{k}*{self.name}", None if self.radius_fn is None else
                      (lambda eps, g=self.radius_fn: g(eps / max(abs(k), 1e-300))),
                      None if self.gauss is None else (k * self.gauss[0], self.gauss[1]))

    def composed(self, S: np.ndarray, name: str | None = None) -> "Weight":
        """z -> w(S z)."""
        S = np.asarray(S, dtype=float)
        f = self.func
        smin = np.linalg.svd(S, compute_uv=False).min()
        rf = (lambda eps, g=self.support_radius: g(eps) / smin)
        return Weight(lambda z: f(z @ S.T), self.dim, self.decay_exponent,
                      self.C_w * max(1.0, 1.0 / smin) ** (self.dim + self.decay_exponent),
                      name or f"{self.name}∘S", rf,
                      None if self.gauss is None else (self.gauss[0], S.T @ self.gauss[1] @ S))


def gaussian_weight(d: int, amplitude: float = 1.0, gamma: float = 2.0) -> Weight:
    """amplitude * exp(-|z|^2)."""
    k = (d + gamma) / 2.0
    # max_r exp(-r^2) (1 + r^2)^k = e^{1-k} k^k for k >= 1
    C = abs(amplitude) * (math.exp(1 - k) * k**k if k >= 1 else 1.0)

    def f(z):
        return amplitude * np.exp(-np.sum(z * z, axis=-1))

    def radius(eps):
        return math.sqrt(max(math.log(abs(amplitude) / eps), 0.0)) if eps < abs(amplitude) else 0.0

    return Weight(f, d, gamma, C, "gaussian" if amplitude == 1 else f"{amplitude}*gaussian", radius,
                  (float(amplitude), np.eye(d)))


def bump_weight(d: int, R: float = 2.0) -> Weight:
    """prod_i e w0(z_i / R), equal to 1 at the origin, supported in the cube of side 2R."""

    def f(z):
        s = z / R
        inside = np.all(np.abs(s) < 1.0, axis=-1)
        out = np.zeros(z.shape[:-1])
        si = s[inside]
        out[inside] = np.exp(np.sum(1.0 + 1.0 / (si * si - 1.0), axis=-1))
        return out

    return Weight(f, d, 1.0, (1 + d * R * R) ** ((d + 1) / 2.0), f"bump(R={R})", lambda eps: R * math.sqrt(d))


WEIGHTS = {"gaussian": gaussian_weight, "bump": bump_weight}


def make_weight(name: str, d: int) -> Weight:
    try:
        return WEIGHTS[name](d)
    except KeyError:
        raise ValueError(f"unknown weight {name!r}; choose from {sorted(WEIGHTS)}") from None


@dataclass
class IntegralResult:
    value: float | complex
    err_estimate: float
    method: str
    samples_or_nodes: int
    seed: int | None = None
    converged: bool = True

    def to_dict(self) -> dict:
        v = self.value
        out = {"method": self.method, "err_estimate": self.err_estimate,
               "samples_or_nodes": self.samples_or_nodes, "seed": self.seed, "converged": self.converged}
        if isinstance(v, complex):
            out.update(re=v.real, im=v.imag)
        else:
            out["value"] = v
        return out


# ---------------------------------------------------------------------------
# quadrature building blocks


def _gl(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def _composite(edges, n: int) -> tuple[np.ndarray, np.ndarray]:
    g, wg = np.polynomial.legendre.leggauss(n)
    edges = np.asarray(edges, dtype=float)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * g).ravel(), (half[:, None] * wg).ravel()


def _line_rule(R: float, n: int, panels: int = 4) -> tuple[np.ndarray, np.ndarray]:
    return _composite(np.linspace(-R, R, panels + 1), n)


def _radial_rule(R: float, n: int, depth: float = 1e-4, panels: int = 8) -> tuple[np.ndarray, np.ndarray]:
    # geometric panels towards r = 0 plus a uniform stretch
    edges = np.concatenate([[0.0], R * np.geomspace(depth, 0.125, panels), R * np.linspace(0.25, 1.0, 4)])
    return _composite(edges, n)


def _graded_edges(R: float, rho0: float, m: int) -> np.ndarray:
    """Panel edges on [0, R] graded geometrically towards 0 and towards rho0."""
    pts = [0.0, R, *(R * np.geomspace(1e-9, 1.0, m))]
    if 0.0 < rho0 < R:
        off = np.geomspace(1e-9, 1.0, m)
        pts += [rho0, *(rho0 - rho0 * 0.5 * off), *(rho0 + (R - rho0) * 0.5 * off)]
    return np.unique(np.clip(pts, 0.0, R))


def _polar_u_rule(k: int, R: float, rho0: float, n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    # with a one-dimensional x block the u-integrand is log-singular on |u| = rho0,
    # so grade the radial panels towards it
    rho, rw = _composite(_graded_edges(R, rho0, m), max(4, n // 3))
    om, ow = sphere_rule(k, max(4, n // 4 + 2))
    U = (rho[:, None, None] * om[None, :, :]).reshape(-1, k)
    UW = ((rw * rho ** (k - 1))[:, None] * ow[None, :]).ravel()
    return U, UW


def sphere_rule(k: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Product rule on S^{k-1} in R^k: points (N, k) and weights summing to |S^{k-1}|."""
    if k == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    phi = 2 * np.pi * np.arange(2 * n) / (2 * n)
    pts = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    wts = np.full(2 * n, np.pi / n)
    for m in range(3, k + 1):
        # add a polar angle psi in [0, pi] with weight sin^{m-2}
        c, wc = np.polynomial.legendre.leggauss(n)
        psi = 0.5 * np.pi * (c + 1)
        wpsi = 0.5 * np.pi * wc * np.sin(psi) ** (m - 2)
        new_pts = np.concatenate(
            [np.cos(psi)[:, None, None] * np.ones((1, pts.shape[0], 1)),
             np.sin(psi)[:, None, None] * pts[None, :, :]], axis=2
        ).reshape(-1, m)
        wts = (wpsi[:, None] * wts[None, :]).ravel()
        pts = new_pts
    return pts, wts


def _perp_basis(theta: np.ndarray) -> np.ndarray:
    """Orthonormal bases of theta^perp, shape (N, k, k-1), via Householder."""
    N, k = theta.shape
    e1 = np.zeros(k)
    e1[0] = 1.0
    v = e1[None, :] - theta
    nv = np.sum(v * v, axis=1)
    H = np.broadcast_to(np.eye(k), (N, k, k)).copy()
    ok = nv > 1e-24
    vv = v[ok]
    H[ok] -= 2.0 * vv[:, :, None] * vv[:, None, :] / nv[ok][:, None, None]
    return H[:, :, 1:]


def _unit_sphere_area(k: int) -> float:
    return 2 * math.pi ** (k / 2) / math.gamma(k / 2)


# ---------------------------------------------------------------------------
# the three routes


def _pullback(w: Weight, nf: NormalFormMap, phase: np.ndarray | None):
    """g(Z) = w(L^{-1} Z) e(-phase . L^{-1} Z) / |det L|."""
    Linv = nf.inverse
    scale = 1.0 / nf.detAbs

    def g(Z):
        z = Z @ Linv.T
        val = w(z) * scale
        if phase is not None:
            val = val * np.exp(-2j * np.pi * (z @ phase))
        return val

    return g


def _outer_radius(w: Weight, nf: NormalFormMap, tol: float) -> float:
    # cut relative to the weight's own scale so that tiny multiples of w keep the same box
    eps = min(tol, 1e-3) * 1e-4 * max(w.C_w, 1e-300)
    return float(np.linalg.norm(nf.L_map, 2)) * w.support_radius(eps)


def _fibration_value(g, nf: NormalFormMap, t: float, R: float, n: int, complex_out: bool):
    n_u, d1 = nf.n, nf.d1
    d = nf.dim
    rho0 = math.sqrt(2.0 * max(t, 0.0))
    if n_u and d1 == 1:
        U, UW = _polar_u_rule(n_u, R, rho0, n, 14)
    elif n_u == 1:
        # only a |s| log|s| kink at u = +-rho0: panel edges there suffice
        edges = [-R, 0.0, R] + ([-rho0, rho0] if 0.0 < rho0 < R else [])
        ux, uw = _composite(np.unique(edges), n)
        U, UW = ux[:, None], uw
    elif n_u:
        ux, uw = _line_rule(R, n, panels=2)
        U = np.stack(np.meshgrid(*([ux] * n_u), indexing="ij"), -1).reshape(-1, n_u)
        UW = np.prod(np.stack(np.meshgrid(*([uw] * n_u), indexing="ij"), -1).reshape(-1, n_u), axis=1)
        keep = np.sum(U * U, axis=1) <= R * R
        U, UW = U[keep], UW[keep]
    else:
        U, UW = np.zeros((1, 0)), np.ones(1)
    if d1 == 1:
        r, rw = _radial_rule(R, max(4, n // 2), depth=1e-9, panels=16)
    else:
        r, rw = _radial_rule(R, max(4, n // 2))
    th, thw = sphere_rule(d1, max(4, n // 2 + 2))
    B = _perp_basis(th)
    if d1 > 1:
        ex, ew = _line_rule(R, n, panels=2)
        E = np.stack(np.meshgrid(*([ex] * (d1 - 1)), indexing="ij"), -1).reshape(-1, d1 - 1)
        EW = np.prod(np.stack(np.meshgrid(*([ew] * (d1 - 1)), indexing="ij"), -1).reshape(-1, d1 - 1), axis=1)
    else:
        E, EW = np.zeros((1, 0)), np.ones(1)
    inner = th.shape[0] * E.shape[0]
    nodes = U.shape[0] * r.size * inner
    if nodes > NODE_BUDGET:
        raise IntegralBudgetExceeded(f"fibration needs {nodes:.3g} nodes > {NODE_BUDGET:.0e}")
    Yp = np.einsum("tkj,ej->tek", B, E)  # fibre directions, (Nth, NE, d1)
    rwt = rw * r ** (d1 - 2)
    angw = thw[:, None] * EW[None, :]
    rchunk = max(1, int(2e5 // inner))
    total = 0.0 + 0.0j if complex_out else 0.0
    for iu in range(U.shape[0]):
        u = U[iu]
        s = t - 0.5 * float(u @ u)
        for r0 in range(0, r.size, rchunk):
            rr = r[r0:r0 + rchunk]
            Z = np.empty((rr.size, th.shape[0], E.shape[0], d))
            Z[..., :n_u] = u
            Z[..., n_u:n_u + d1] = rr[:, None, None, None] * th[None, :, None, :]
            Z[..., n_u + d1:] = Yp[None] + (s / rr)[:, None, None, None] * th[None, :, None, :]
            vals = g(Z.reshape(-1, d)).reshape(rr.size, -1)
            contrib = (vals @ angw.ravel()) @ rwt[r0:r0 + rchunk]
            total += UW[iu] * (contrib if complex_out else float(np.real(contrib)))
    return total, nodes


def _sphere_value(g, nf: NormalFormMap, t: float, n: int):
    # Q = |U|^2 / 2 = t on the sphere of radius rho = sqrt(2t); dS/|grad Q| = rho^{k-2} dtheta
    k = nf.n
    rho = math.sqrt(2.0 * t)
    pts, wts = sphere_rule(k, n)
    vals = g(rho * pts)
    return float(np.real(np.sum(vals * wts))) * rho ** (k - 2), pts.shape[0]


def _adaptive(evaluate, tol: float, n0: int, nmax: int):
    n = n0
    prev, nodes = evaluate(n)
    while True:
        n2 = int(n * 1.5) + 2
        if n2 > nmax:
            return prev, math.inf, nodes, False
        try:
            cur, nodes = evaluate(n2)
        except IntegralBudgetExceeded as exc:
            # keep the last affordable estimate, flagged as unconverged
            log.warning("stopping refinement at n=%d: %s", n, exc)
            return prev, math.inf, nodes, False
        err = abs(cur - prev)
        if err <= tol * max(1.0, abs(cur)):
            return cur, err, nodes, True
        prev, n = cur, n2


def _signed_t(nf: NormalFormMap, t: float) -> float:
    return -t if nf.flipped else t


def sigma_infinity(w: Weight, form: QuadraticForm, t: float, method: str = "auto", tol: float = 1e-6,
                   seed: int | None = None, phase=None, nf: NormalFormMap | None = None,
                   n0: int = 12, nmax: int = 96, max_samples: int = 2 * 10**7) -> IntegralResult:
    """sigma_inf(w; A, t) = int_{Sigma_t} w dS/|grad F|.

    phase: optional real vector k; the weight becomes w(z) e(-k.z) (complex result).
    """
    nf = nf or normalize_form(form)
    ts = _signed_t(nf, float(t))
    if method == "auto":
        method = "sphere_closed" if nf.d1 == 0 else "fibration"
    complex_out = phase is not None
    g = _pullback(w, nf, None if phase is None else np.asarray(phase, dtype=float))
    if nf.d1 == 0 and ts <= 0 and method != "thin_shell_mc":
        # sign-definite: Sigma_t is empty for t < 0 and a point for t = 0
        return IntegralResult(0.0, 0.0, "sphere_closed", 0)
    if method == "sphere_closed":
        if nf.d1 != 0:
            raise ValueError("sphere_closed needs a sign-definite form")
        v, err, nodes, ok = _adaptive(lambda n: _sphere_value(g, nf, ts, n), tol, n0, 4 * nmax)
        return IntegralResult(v, err, "sphere_closed", nodes, converged=ok)
    if method == "fibration":
        if nf.d1 == 0:
            raise ValueError("fibration needs an indefinite form")
        R = _outer_radius(w, nf, tol)
        v, err, nodes, ok = _adaptive(lambda n: _fibration_value(g, nf, ts, R, n, complex_out), tol, n0, nmax)
        v = complex(v) if complex_out else float(v)
        return IntegralResult(v, float(err), "fibration", nodes, converged=ok)
    if method == "thin_shell_mc":
        if seed is None:
            raise ValueError("thin_shell_mc needs a seed")
        return thin_shell_mc(w, form, t, tol, seed, max_samples=max_samples)
    raise ValueError(f"unknown method {method!r}")


def thin_shell_mc(w: Weight, form: QuadraticForm, t: float, tol: float, seed: int, eps: float | None = None,
                  n_strata: int = 24, round_size: int = 2**17, max_samples: int = 4 * 10**7) -> IntegralResult:
    """(1/2eps) int_{|F - t| <= eps} w, Richardson-combined over the pair (eps, eps/2).

    The support ball is cut into radial shells (the strata).  Each shell is
    sampled uniformly by volume and every (stratum, round) pair has its own
    Philox stream keyed by (seed, stratum, round), so the estimate does not
    depend on scheduling.  After a pilot round samples are allocated to the
    shells in proportion to vol * sd (Neyman).
    """
    d = form.dim
    A = form.array.astype(float)
    tol = float(tol)
    if eps is None:
        eps = math.sqrt(tol) * math.sqrt(1.0 + t * t) ** 0.5
    indefinite = form.signature[0] > 0 and form.signature[1] > 0
    # across the singular level t = 0 of an indefinite form I has a |t|^a cusp,
    # a = min(d/2 - 1, 1), so the shell average is biased by O(eps^a); elsewhere
    # the bias is even in eps. Richardson weights for the two shell widths:
    kink = indefinite and abs(t) < eps
    if kink:
        two_a = 2.0 ** min(d / 2.0 - 1.0, 1.0)
        ca, cb = two_a / (two_a - 1.0), -1.0 / (two_a - 1.0)
    else:
        ca, cb = 4.0 / 3.0, -1.0 / 3.0
    R = w.support_radius(1e-3 * tol * max(w.C_w, 1e-300))
    radii = np.linspace(0.0, R, n_strata + 1)
    vols = _unit_sphere_area(d) / d * (radii[1:] ** d - radii[:-1] ** d)
    s1 = np.zeros(n_strata)
    s2 = np.zeros(n_strata)
    cnt = np.zeros(n_strata, dtype=np.int64)

    def draw(k: int, rnd: int, n: int):
        gen = np.random.Generator(np.random.Philox(key=[seed, k * 1_000_003 + rnd]))
        u = gen.standard_normal((n, d))
        u /= np.linalg.norm(u, axis=1)[:, None]
        r0, r1 = radii[k] ** d, radii[k + 1] ** d
        r = (r0 + (r1 - r0) * gen.random(n)) ** (1.0 / d)
        z = u * r[:, None]
        F = np.abs(0.5 * np.einsum("ni,ij,nj->n", z, A, z) - t)
        x = w(z) * (ca * (F <= 0.5 * eps) / eps + cb * (F <= eps) / (2.0 * eps))
        s1[k] += x.sum()
        s2[k] += (x * x).sum()
        cnt[k] += n

    alloc = np.full(n_strata, max(256, round_size // n_strata))
    rnd = 0
    est = err = math.inf
    target = tol / 3.0
    while True:
        for k in range(n_strata):
            if alloc[k]:
                draw(k, rnd, int(alloc[k]))
        rnd += 1
        means = s1 / cnt
        var = np.maximum(s2 / cnt - means**2, 0.0)
        est = float(np.sum(vols * means))
        err = float(math.sqrt(np.sum(vols**2 * var / cnt)))
        if (rnd >= 2 and err <= target * max(abs(est), 1e-300)) or cnt.sum() >= max_samples:
            break
        share = vols * np.sqrt(var)
        if share.sum() == 0:
            share = vols.copy()
        alloc = np.ceil(round_size * share / share.sum()).astype(np.int64)
        # keep a trickle in every shell so the variance estimates stay alive
        alloc = np.maximum(alloc, 64)
        round_size = min(2 * round_size, 2**22)
    converged = err <= target * max(abs(est), 1e-300)
    if not converged:
        log.warning("thin-shell MC stopped at %d samples with rel. err %.3g", cnt.sum(), err / max(abs(est), 1e-300))
    return IntegralResult(est, err, "thin_shell_mc", int(cnt.sum()), seed, converged=converged)


# ---------------------------------------------------------------------------
# profile of t -> I(t) and the integrals I_q(c)


_profile_cache: dict = {}


def profile_I(w: Weight, form: QuadraticForm, t_grid, method: str = "auto", tol: float = 1e-6,
              seed: int | None = None, phase=None) -> list[IntegralResult]:
    nf = normalize_form(form)
    key0 = (w.name, id(w.func), form.hash(), method, tol, seed,
            None if phase is None else tuple(np.round(np.asarray(phase, float), 14)))
    out = []
    for t in np.asarray(t_grid, dtype=float).ravel():
        key = key0 + (float(t),)
        res = _profile_cache.get(key)
        if res is None:
            res = sigma_infinity(w, form, float(t), method, tol, seed, phase=phase, nf=nf)
            if len(_profile_cache) > 20000:
                _profile_cache.clear()
            _profile_cache[key] = res
        out.append(res)
    return out


def _profile_nodes(center: float, T: float, spacing: float) -> np.ndarray:
    # uniform away from the kink at t = 0 plus geometric refinement towards it
    base = np.arange(center - T, center + T + 0.5 * spacing, spacing)
    near = np.concatenate([-np.geomspace(1e-4, 0.25, 28), [0.0], np.geomspace(1e-4, 0.25, 28)])
    return np.unique(np.concatenate([base, near]))


class _Profile:
    """Piecewise interpolant of I(t): cubic on each side of 0 beyond 0.25, linear near 0."""

    def __init__(self, ts: np.ndarray, vals: np.ndarray):
        self.ts = ts
        self.vals = vals
        self.cplx = np.iscomplexobj(vals)
        self.parts = []
        for sel in (ts <= 0, ts >= 0):
            tt, vv = ts[sel], vals[sel]
            if tt.size >= 4:
                self.parts.append((tt[0], tt[-1], interpolate.CubicSpline(tt, vv)))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.ts, self.vals.real) + (1j * np.interp(t, self.ts, self.vals.imag) if self.cplx else 0)
        far = np.abs(t) > 0.25
        for a, b, sp in self.parts:
            sel = far & (t >= a) & (t <= b)
            out[sel] = sp(t[sel])
        out[(t < self.ts[0]) | (t > self.ts[-1])] = 0.0
        return out


def _build_profile(w, form, m, tol, phase, T, spacing):
    ts = _profile_nodes(0.0, T, spacing)
    res = profile_I(w, form, ts, "auto", tol, phase=phase)
    vals = np.array([r.value for r in res])
    return _Profile(ts, vals), res


def _profile_extent(w, form, tol) -> float:
    # extend until the profile has decayed below tol relative to its peak
    peak = abs(profile_I(w, form, [0.0], tol=tol)[0].value)
    T = 2.0
    while T < 256:
        edge = max(abs(r.value) for r in profile_I(w, form, [-T, T], tol=tol))
        if edge <= 1e-3 * tol * max(peak, 1e-300):
            break
        T *= 1.5
    return T


def _kernel_integral(prof: _Profile, x: float, m: float, T: float, n: int) -> tuple[complex, float, float]:
    # int prof(m + t) h(x, t) dt over |m + t| <= T, panels of width <= x/8, split at t = -m
    lo, hi = -T - m, T - m
    npan = max(8, int(math.ceil((hi - lo) / (x / 8.0))))
    edges = np.union1d(np.linspace(lo, hi, npan + 1), [-m] if lo < -m < hi else [])
    tn, wn = _composite(edges, n)
    hv, herr = h_with_error(x, tn)
    pv = prof(m + tn)
    val = np.sum(wn * hv * pv)
    return val, float(np.sum(wn * herr * np.abs(pv))), float(np.sum(wn * np.abs(hv)))


# ---------------------------------------------------------------------------
# Gaussian weights: one-dimensional Fourier route


def gaussian_fourier(w: Weight, form: QuadraticForm, tau, k) -> np.ndarray:
    """G(tau, k) = int w(z) e(tau F(z) - k.z) dz in closed form for w = a exp(-z.P z).

    With M = P - i pi tau A the integral is a pi^{d/2} det(M)^{-1/2} exp(-pi^2 k.M^{-1}k);
    every factor 1 - i pi tau mu has positive real part, so principal roots are right.
    """
    if w.gauss is None:
        raise ValueError(f"weight {w.name!r} is not Gaussian")
    amp, P = w.gauss
    P = np.asarray(P, dtype=float)
    C = np.linalg.cholesky(P)
    Ci = np.linalg.inv(C)
    mu, V = np.linalg.eigh(Ci @ form.array.astype(float) @ Ci.T)
    kv = V.T @ (Ci @ np.asarray(k, dtype=float))
    tau = np.asarray(tau, dtype=float).ravel()
    fac = 1.0 - 1j * math.pi * np.outer(tau, mu)
    d = form.dim
    pref = amp * math.pi ** (d / 2.0) / math.sqrt(np.linalg.det(P))
    return pref * np.prod(fac**-0.5, axis=1) * np.exp(-(math.pi**2) * np.sum(kv**2 / fac, axis=1))


def _fourier_edges(x: float, m: float, kp: float, u_max: float) -> np.ndarray:
    # panel width limited by: G's own scale, the e(-tau m) phase, the phase of
    # exp(-pi^2 k.M^{-1}k), and the features of h_fourier (relative, for u > 1)
    t_end = u_max / x
    edges = [0.0]
    t = 0.0
    while t < t_end:
        wdt = 0.25 + 0.05 * t
        if m:
            wdt = min(wdt, 0.25 / abs(m))
        if kp > 0:
            wdt = min(wdt, max(1e-3, 0.5 * (0.5 + t) ** 2 / (math.pi * kp)))
        if x * t > 1.0:
            wdt = min(wdt, 0.02 * t)
        else:
            wdt = min(wdt, 1.0 / x - t) if t < 1.0 / x else wdt
        t = min(t + max(wdt, 1e-9), t_end)
        edges.append(t)
    return np.array(edges)


def _fourier_Iq(x: float, k, form: QuadraticForm, m: float, w: Weight) -> tuple[float, float, int]:
    """int w(z) h(x, F(z) - m) e(-k.z) dz = c G(0, k) + 2 Re int_0^oo hhat(tau) e(-tau m) G(tau, k) dtau.

    c is the tail constant of h (the delta part of its transform).  Returns
    (value, error estimate from a 12- vs 16-node comparison, nodes).
    """
    k = np.asarray(k, dtype=float)
    amp, P = w.gauss
    C = np.linalg.cholesky(np.asarray(P, float))
    Ci = np.linalg.inv(C)
    mu, V = np.linalg.eigh(Ci @ form.array.astype(float) @ Ci.T)
    kp = float(np.max((V.T @ (Ci @ k)) ** 2 / np.abs(mu)))
    edges = _fourier_edges(x, float(m), kp, u_max=450.0)
    vals = []
    nodes = 0
    for n in (12, 16):
        tn, wn = _composite(edges, n)
        f = h_fourier(x, tn) * np.exp(-2j * math.pi * tn * m) * gaussian_fourier(w, form, tn, k)
        vals.append(2.0 * float(np.sum(wn * f).real))
        nodes += tn.size
    delta = tail_constant(x) * float(gaussian_fourier(w, form, [0.0], k)[0].real)
    return vals[1] + delta, abs(vals[1] - vals[0]), nodes


def _coarea_Iq(q, k, form, m, L, w, tol, spacing):
    """L^{-d} I_q via the level-set profile of w(z) e(-k.z) against h(q/L, .)."""
    x = q / L
    phase = None if k is None else k
    T = _profile_extent(w, form, tol)
    prof, res = _build_profile(w, form, m, tol, phase, T, spacing)
    v1, herr, _ = _kernel_integral(prof, x, float(m), T, 8)
    v2, _, hnorm = _kernel_integral(prof, x, float(m), T, 12)
    # interpolation check at midpoints, including the refined cells near t = 0
    mids = np.arange(-T + spacing / 2, T, 0.5)
    near = prof.ts[np.abs(prof.ts) <= 0.25]
    mids = np.concatenate([mids, (0.5 * (near[1:] + near[:-1]))[::3]])
    direct = np.array([r.value for r in profile_I(w, form, mids, tol=tol, phase=phase)])
    interp_err = float(np.max(np.abs(prof(mids) - direct)))
    err = abs(v2 - v1) + herr + (interp_err + max(r.err_estimate for r in res)) * hnorm
    return v2, err, len(res) + mids.size


def _pick_route(method: str, w: Weight) -> str:
    if method == "auto":
        return "fourier_1d" if w.gauss is not None else "coarea_1d"
    if method not in ("fourier_1d", "coarea_1d"):
        raise ValueError(f"unknown I_q method {method!r}")
    if method == "fourier_1d" and w.gauss is None:
        raise ValueError("fourier_1d needs a Gaussian-family weight")
    return method


def I_q0(q: float, form: QuadraticForm, m: float, L: float, w: Weight, tol: float = 1e-6,
         method: str = "auto") -> IntegralResult:
    """I_q(0) = int w(z/L) h(q/L, F(z)/L^2 - m) dz = L^d int I(m + t) h(q/L, t) dt."""
    if q <= 0 or L <= 0:
        raise ValueError("need q > 0 and L > 0")
    d = form.dim
    route = _pick_route(method, w)
    if route == "fourier_1d":
        val, err, nodes = _fourier_Iq(q / L, np.zeros(d), form, float(m), w)
    else:
        val, err, nodes = _coarea_Iq(q, None, form, float(m), L, w, tol, 0.05)
        val = float(np.real(val))
    return IntegralResult(val * L**d, err * L**d, route, nodes)


def I_qc(q: int, c, form: QuadraticForm, m: float, L: float, w: Weight, tol: float = 1e-5,
         method: str = "auto", spacing: float | None = None) -> IntegralResult:
    """I_q(c) = int w(z/L) h(q/L, F(z)/L^2 - m) e_q(-z.c) dz.

    In rescaled variables this is L^d times the same integral with w(zeta),
    h(q/L, F(zeta) - m) and the phase e(-k.zeta), k = L c / q.
    """
    c = np.asarray(c, dtype=float)
    if c.shape != (form.dim,):
        raise ValueError("c has the wrong length")
    if not np.any(c):
        return I_q0(q, form, m, L, w, tol, method)
    d = form.dim
    k = L * c / q
    route = _pick_route(method, w)
    if route == "fourier_1d":
        val, err, nodes = _fourier_Iq(q / L, k, form, float(m), w)
        return IntegralResult(val * L**d, err * L**d, route, nodes)
    T = _profile_extent(w, form, tol)
    if spacing is None:
        spacing = min(0.05, 0.1 / (1.0 + float(np.linalg.norm(k))))
    npts = 2 * T / spacing
    if npts > 2e4:
        raise IntegralBudgetExceeded(f"I_q(c) profile would need {npts:.3g} nodes")
    val, err, nodes = _coarea_Iq(q, k, form, float(m), L, w, tol, spacing)
    # w and F are even, so I_q(c) is real; the imaginary part is quadrature noise
    return IntegralResult(float(np.real(val)) * L**d, (err + abs(np.imag(val))) * L**d, route, nodes)


def sphere_oracle(w_radial: Callable[[float], float], d: int, t: float) -> float:
    """F = |z|^2: (|S^{d-1}|/2) t^{(d-2)/2} w(sqrt(t)) for a radial weight."""
    if t <= 0:
        return 0.0
    return 0.5 * _unit_sphere_area(d) * t ** ((d - 2) / 2.0) * w_radial(math.sqrt(t))
