"""Integral quadratic forms F(z) = 1/2 A z.z and their real normal forms.

Everything that decides lattice membership (evaluation, inertia, A^{-1})
runs in exact rational arithmetic.  Only the real normalising map uses
floating point.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from numbers import Rational
from pathlib import Path
from typing import Sequence

import numpy as np


class FormError(ValueError):
    """A matrix or form file violates one of the QuadraticForm invariants."""


def as_fraction(v) -> Fraction:
    """Exact rational from int/Fraction/str; floats go through their repr."""
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, Rational):
        return Fraction(v.numerator, v.denominator)
    if isinstance(v, (float, np.floating)):
        return Fraction(repr(float(v)))
    return Fraction(str(v))


def _det_bareiss(rows: Sequence[Sequence[int]]) -> int:
    m = [list(r) for r in rows]
    n = len(m)
    sign = 1
    prev = 1
    for k in range(n - 1):
        if m[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if m[i][k] != 0), None)
            if swap is None:
                return 0
            m[k], m[swap] = m[swap], m[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


def rational_inertia(matrix: Sequence[Sequence]) -> tuple[int, int, int]:
    """(n_plus, n_minus, n_zero) of a symmetric matrix via exact LDL^T.

    Diagonal pivots are preferred; when the remaining diagonal is zero but
    an off-diagonal entry a_ij is not, the congruence e_i <- e_i + e_j
    produces the pivot 2 a_ij.
    """
    m = [[Fraction(x) for x in row] for row in matrix]
    n = len(m)
    plus = minus = 0
    active = list(range(n))
    while active:
        piv = next((i for i in active if m[i][i] != 0), None)
        if piv is None:
            pair = next(
                ((i, j) for i in active for j in active if i < j and m[i][j] != 0), None
            )
            if pair is None:
                break
            i, j = pair
            for k in range(n):
                m[i][k] += m[j][k]
            for k in range(n):
                m[k][i] += m[k][j]
            piv = i
        p = m[piv][piv]
        if p > 0:
            plus += 1
        else:
            minus += 1
        active.remove(piv)
        for i in active:
            f = m[i][piv] / p
            if f:
                for k in active:
                    m[i][k] -= f * m[piv][k]
        for i in active:
            m[i][piv] = m[piv][i] = Fraction(0)
    return plus, minus, n - plus - minus


@dataclass(frozen=True)
class QuadraticForm:
    """Non-degenerate integral symmetric matrix A with even diagonal."""

    A: tuple[tuple[int, ...], ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        rows = tuple(tuple(int(x) for x in r) for r in self.A)
        object.__setattr__(self, "A", rows)
        d = len(rows)
        if d < 1 or any(len(r) != d for r in rows):
            raise FormError("matrix must be square (dim x dim)")
        for i in range(d):
            for j in range(i + 1, d):
                if rows[i][j] != rows[j][i]:
                    raise FormError(f"symmetry violated: A[{i}][{j}] != A[{j}][{i}]")
        for i in range(d):
            if rows[i][i] % 2:
                raise FormError(f"even-diagonal invariant violated: A[{i}][{i}] = {rows[i][i]} is odd")
        if _det_bareiss(rows) == 0:
            raise FormError("non-degeneracy violated: det A = 0")

    @classmethod
    def from_matrix(cls, matrix, name: str = "") -> "QuadraticForm":
        return cls(tuple(tuple(int(x) for x in row) for row in matrix), name)

    @property
    def dim(self) -> int:
        return len(self.A)

    @cached_property
    def det(self) -> int:
        return _det_bareiss(self.A)

    @cached_property
    def signature(self) -> tuple[int, int]:
        return signature(self)

    @cached_property
    def inverse(self) -> tuple[tuple[Fraction, ...], ...]:
        """Exact A^{-1} by Gauss-Jordan over the rationals."""
        d = self.dim
        m = [[Fraction(x) for x in row] + [Fraction(int(i == j)) for j in range(d)]
             for i, row in enumerate(self.A)]
        for c in range(d):
            piv = next(r for r in range(c, d) if m[r][c] != 0)
            m[c], m[piv] = m[piv], m[c]
            pv = m[c][c]
            m[c] = [x / pv for x in m[c]]
            for r in range(d):
                if r != c and m[r][c] != 0:
                    f = m[r][c]
                    m[r] = [x - f * y for x, y in zip(m[r], m[c])]
        return tuple(tuple(row[d:]) for row in m)

    @cached_property
    def array(self) -> np.ndarray:
        return np.array(self.A, dtype=np.int64)

    def solve(self, v) -> tuple[Fraction, ...]:
        """A^{-1} v exactly."""
        v = [as_fraction(x) for x in v]
        return tuple(sum((a * b for a, b in zip(row, v)), Fraction(0)) for row in self.inverse)

    def quad(self, u, v):
        """Bilinear pairing u.A v (exact for int/Fraction entries)."""
        return sum(u[i] * self.A[i][j] * v[j] for i in range(self.dim) for j in range(self.dim))

    def hash(self) -> str:
        payload = json.dumps({"dim": self.dim, "matrix": [list(r) for r in self.A]})
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {"dim": self.dim, "matrix": [list(r) for r in self.A]}

    def __repr__(self) -> str:
        label = f"{self.name}, " if self.name else ""
        return f"QuadraticForm({label}d={self.dim}, det={self.det})"


def split_form(d: int) -> QuadraticForm:
    """F_d = x_1 y_1 + ... + x_s y_s on coordinates (x_1..x_s, y_1..y_s), d = 2s."""
    if d % 2:
        raise FormError("F_d needs even d")
    s = d // 2
    A = [[0] * d for _ in range(d)]
    for i in range(s):
        A[i][s + i] = A[s + i][i] = 1
    return QuadraticForm.from_matrix(A, name=f"F_{d}")


def diagonal_form(diag: Sequence[int], name: str = "") -> QuadraticForm:
    d = len(diag)
    return QuadraticForm.from_matrix(
        [[int(diag[i]) if i == j else 0 for j in range(d)] for i in range(d)], name=name
    )


def block_form(*blocks: Sequence[Sequence[int]], name: str = "") -> QuadraticForm:
    """Orthogonal direct sum of integral blocks."""
    d = sum(len(b) for b in blocks)
    A = [[0] * d for _ in range(d)]
    off = 0
    for b in blocks:
        k = len(b)
        for i in range(k):
            for j in range(k):
                A[off + i][off + j] = int(b[i][j])
        off += k
    return QuadraticForm.from_matrix(A, name=name)


def eval_form(form: QuadraticForm, z) -> Fraction:
    """F(z) = 1/2 z^T A z in exact rational arithmetic."""
    if len(z) != form.dim:
        raise ValueError(f"dimension mismatch: form has d={form.dim}, vector has {len(z)}")
    zz = [as_fraction(x) for x in z]
    return form.quad(zz, zz) / 2


def signature(form: QuadraticForm) -> tuple[int, int]:
    plus, minus, zero = rational_inertia(form.A)
    if zero:
        raise FormError(f"degenerate form: {zero} zero pivot(s)")
    return plus, minus


@dataclass(frozen=True)
class NormalFormMap:
    """Linear map Z = L z with Q(L z) = +-F(z), Q(u,x,y) = |u|^2/2 + x.y.

    ``L_map`` rows are ordered (u_1..u_n, x_1..x_d1, y_1..y_d1).  ``flipped``
    means the map normalises -F (the form had more negative than positive
    squares).
    """

    source: QuadraticForm | None
    L_map: np.ndarray
    n: int
    d1: int
    detAbs: float
    flipped: bool

    @property
    def dim(self) -> int:
        return self.n + 2 * self.d1

    @cached_property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.L_map)

    @property
    def sign(self) -> int:
        return -1 if self.flipped else 1


def eval_normal(Z: np.ndarray, n: int, d1: int) -> np.ndarray:
    """Q(u,x,y) on the trailing axis of Z."""
    Z = np.asarray(Z, dtype=float)
    u = Z[..., :n]
    x = Z[..., n : n + d1]
    y = Z[..., n + d1 :]
    return 0.5 * np.sum(u * u, axis=-1) + np.sum(x * y, axis=-1)


def _is_normal_layout(M: np.ndarray, n: int, d1: int) -> bool:
    target = np.zeros_like(M)
    target[:n, :n] = np.eye(n)
    target[n : n + d1, n + d1 :] = np.eye(d1)
    target[n + d1 :, n : n + d1] = np.eye(d1)
    return bool(np.array_equal(M, target))


def normalize_matrix(M, source: QuadraticForm | None = None) -> NormalFormMap:
    """Normalising map for the real form 1/2 z^T M z.

    Diagonalise with a symmetric eigendecomposition, rescale each axis to a
    +-1/2 coefficient, then rotate each (positive, negative) pair into a
    hyperbolic pair via x=(p+q)/sqrt2, y=(p-q)/sqrt2.
    """
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    if not np.allclose(M, M.T):
        raise FormError("symmetry violated")
    lam, V = np.linalg.eigh(M)
    scale = np.max(np.abs(lam))
    if np.any(np.abs(lam) <= 1e-12 * scale):
        raise FormError("degenerate form: zero eigenvalue")
    n_plus = int(np.sum(lam > 0))
    n_minus = d - n_plus
    flipped = n_minus > n_plus
    if flipped:
        lam = -lam
        n_plus, n_minus = n_minus, n_plus
    n, d1 = n_plus - n_minus, n_minus
    sign_M = -M if flipped else M
    if _is_normal_layout(sign_M, n, d1):
        return NormalFormMap(source, np.eye(d), n, d1, 1.0, flipped)

    # rows s_i = sqrt|lam_i| v_i^T so that +-F = 1/2 sum sign_i s_i^2
    pos = [i for i in range(d) if lam[i] > 0]
    neg = [i for i in range(d) if lam[i] < 0]
    S = (np.sqrt(np.abs(lam))[:, None] * V.T)
    rows_u = [S[i] for i in pos[d1:]]
    rows_x, rows_y = [], []
    r2 = np.sqrt(0.5)
    for k in range(d1):
        p, q = S[pos[k]], S[neg[k]]
        rows_x.append(r2 * (p + q))
        rows_y.append(r2 * (p - q))
    L_map = np.array(rows_u + rows_x + rows_y).reshape(d, d)
    detAbs = float(abs(np.linalg.det(L_map)))
    return NormalFormMap(source, L_map, n, d1, detAbs, flipped)


def normalize_form(form: QuadraticForm) -> NormalFormMap:
    form.signature  # raises on degenerate input
    return normalize_matrix(np.array(form.A, dtype=float), source=form)


def reduce_affine(form: QuadraticForm, z_star, tau, L) -> tuple[Fraction, tuple[Fraction, ...]]:
    """Shift 1/2 Az.z + z_star.z + tau to a homogeneous problem.

    Returns (m, shift) with shift = A^{-1} z_star so that the weighted count
    for the affine quadric equals N_L(w(. - shift); A, m).
    """
    L = as_fraction(L)
    tau = as_fraction(tau)
    shift = form.solve(z_star)
    if any((L * s).denominator != 1 for s in shift):
        raise FormError(f"shift A^-1 z_star = {[str(s) for s in shift]} is not on the lattice Z^d/L")
    if (tau * L * L).denominator != 1:
        raise FormError("tau L^2 must be an integer")
    m = form.quad(shift, shift) / 2 - tau
    return m, shift


@dataclass(frozen=True)
class LatticeProblem:
    form: QuadraticForm
    m: Fraction
    L: Fraction

    def __post_init__(self):
        object.__setattr__(self, "m", as_fraction(self.m))
        object.__setattr__(self, "L", as_fraction(self.L))
        if self.L < 1:
            raise FormError("L must be >= 1")
        if (self.m * self.L**2).denominator != 1:
            raise FormError(f"L^2 m = {self.m * self.L ** 2} is not an integer")

    @property
    def mL2(self) -> int:
        return int(self.m * self.L**2)


def load_form(path: str | Path) -> QuadraticForm:
    """Read a form file ``{"dim": d, "matrix": [[...], ...]}``."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "dim" not in doc or "matrix" not in doc:
        raise FormError(f"{path}: expected fields 'dim' and 'matrix'")
    d = doc["dim"]
    mat = doc["matrix"]
    if not isinstance(d, int) or d < 1:
        raise FormError(f"{path}: dim must be a positive integer")
    if len(mat) != d or any(len(r) != d for r in mat):
        raise FormError(f"{path}: matrix must be {d}x{d} to match dim")
    if any(not isinstance(x, int) for r in mat for x in r):
        raise FormError(f"{path}: matrix entries must be integers")
    return QuadraticForm.from_matrix(mat, name=doc.get("name", path.stem))
