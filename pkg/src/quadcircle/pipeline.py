"""Assembly of the circle-method expansion and asymptotic tables

With Q = L the delta representation turns the lattice count into

    N_L = c_L L^{-2} sum_c sum_{q <= q_max} q^{-d} S_q(c) I_q(c),

an identity once both sums are complete.  circle_rhs evaluates a truncation
of it term by term; asymptotic_table compares brute-force counts with the
main terms sigma_inf sigma L^{d-2} (d >= 5) and sigma_inf sigma* L^2 log L
(d = 4, m = 0).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .expsums import S_q
from .forms import LatticeProblem, QuadraticForm
from .hkernel import bound_constant, compute_cQ
from .lattice_enum import N_L_brute
from .localdensities import sigma, sigma_star
from .quadric_integrals import I_qc, Weight, sigma_infinity

log = logging.getLogger(__name__)


@dataclass
class TermRow:
    c: tuple[int, ...]
    q: int
    S_q: complex
    I_q: float
    I_err: float
    contribution: float  # q^{-d} Re(S_q(c) I_q(c))

    def to_dict(self) -> dict:
        return {
            "c": list(self.c),
            "q": self.q,
            "S_q_re": self.S_q.real,
            "S_q_im": self.S_q.imag,
            "I_q": self.I_q,
            "I_err": self.I_err,
            "contribution": self.contribution,
        }


@dataclass
class PipelineReport:
    N_brute: float | None
    N_circle: float
    leading: float
    residual: float | None
    params: dict
    per_term_table: list[TermRow] = field(default_factory=list)
    c_L: float = 1.0
    diagnostics: dict = field(default_factory=dict)

    def reconcile(self) -> float:
        """N_circle recomputed from the table."""
        return self.c_L / self.params["L"] ** 2 * math.fsum(r.contribution for r in self.per_term_table)

    def to_dict(self, with_table: bool = True) -> dict:
        out = {
            "N_brute": self.N_brute,
            "N_circle": self.N_circle,
            "leading": self.leading,
            "residual": self.residual,
            "c_L": self.c_L,
            "params": self.params,
            "diagnostics": self.diagnostics,
        }
        if with_table:
            out["per_term_table"] = [r.to_dict() for r in self.per_term_table]
        return out


def c_vectors(d: int, c_max: int) -> list[tuple[int, ...]]:
    """All c with |c|_oo <= c_max, ordered by (|c|_oo, lexicographic)."""
    rng = range(-c_max, c_max + 1)
    vs = list(itertools.product(rng, repeat=d))
    return sorted(vs, key=lambda c: (max((abs(x) for x in c), default=0), c))


def leading_term(w: Weight, form: QuadraticForm, m, L, tol: float = 1e-6) -> dict:
    """sigma_inf sigma L^{d-2} (d != 4) or sigma_inf sigma* L^2 log L (d = 4)."""
    prob = LatticeProblem(form, Fraction(m), Fraction(L))
    d = form.dim
    Lf = float(prob.L)
    s_inf = sigma_infinity(w, form, float(prob.m), tol=tol)
    if d == 4:
        if prob.m != 0:
            raise ValueError("the d = 4 log law is only available for m = 0")
        ser = sigma_star(form, tol=tol)
        lead = s_inf.value * ser.value * Lf**2 * math.log(Lf)
        kind = "sigma_star"
    else:
        ser = sigma(form, prob.mL2, tol=tol)
        lead = s_inf.value * ser.value * Lf ** (d - 2)
        kind = "sigma"
    return {
        "leading": float(lead),
        "sigma_inf": float(s_inf.value),
        "sigma_inf_err": float(s_inf.err_estimate),
        kind: float(ser.value),
        "series_tail": float(ser.tail_bound),
    }


def _q_tail(d: int, L: float, c_L: float, q_max: int, n_c: int, w_mass: float, hb: float) -> float:
    # |S_q(c)| <= phi(q) (2q)^{d/2} and |I_q| <= L^d |w|_1 sup|h| with sup|h(x,.)| <~ hb / x,
    # so a term is at most 2^{d/2} hb |w|_1 L^{d+1} q^{-d/2}; summed over q > q_max
    if d <= 2:
        return math.inf
    return c_L / L**2 * n_c * 2 ** (d / 2) * hb * w_mass * L ** (d + 1) * q_max ** (1 - d / 2) / (d / 2 - 1)


def circle_rhs(w: Weight, form: QuadraticForm, m, L, q_max: int | None = None, c_max: int | None = None,
               tol: float = 1e-6, brute: bool = True, with_leading: bool = True) -> PipelineReport:
    """Truncated circle-method expansion with Q = L."""
    prob = LatticeProblem(form, Fraction(m), Fraction(L))
    d = form.dim
    Lf = float(prob.L)
    if q_max is None:
        q_max = max(1, int(2 * Lf))
    if c_max is None:
        c_max = 1 if d == 4 else 0
    if q_max < 1 or c_max < 0:
        raise ValueError("need q_max >= 1 and c_max >= 0")
    if c_max > 0 and d > 5 and w.gauss is None:
        raise ValueError("c != 0 terms need d <= 5 unless the weight is Gaussian")
    c_L = compute_cQ(Lf)
    mf = float(prob.m)
    rows: list[TermRow] = []
    for c in c_vectors(d, c_max):
        for q in range(1, q_max + 1):
            S = S_q(q, c, form, prob.mL2).value
            if S == 0:
                rows.append(TermRow(c, q, complex(0.0), 0.0, 0.0, 0.0))
                continue
            I = I_qc(q, c, form, mf, Lf, w, tol=tol)
            contrib = (S * I.value).real / q**d
            rows.append(TermRow(c, q, complex(S), float(np.real(I.value)), float(I.err_estimate), contrib))
    N_circle = c_L / Lf**2 * math.fsum(r.contribution for r in rows)
    quad_err = c_L / Lf**2 * math.fsum(abs(r.S_q) * r.I_err / r.q**d for r in rows)

    # truncation diagnostics
    w_mass = math.pi ** (d / 2) * abs(w.gauss[0]) / math.sqrt(np.linalg.det(w.gauss[1])) if w.gauss else w.C_w
    hb = bound_constant(np.linspace(0.05, 2.0, 40), np.linspace(-4.0, 4.0, 81))
    n_c = (2 * c_max + 1) ** d
    shell = [r for r in rows if max((abs(x) for x in r.c), default=0) == c_max and c_max > 0]
    c_tail_ratio = (math.fsum(abs(r.contribution) for r in shell) / max(abs(N_circle) * Lf**2 / c_L, 1e-300)
                    if shell else 0.0)
    diagnostics = {
        "quadrature_err": quad_err,
        "q_tail_envelope": _q_tail(d, Lf, c_L, q_max, n_c, w_mass, hb),
        "c_shell_ratio": c_tail_ratio,
        "terms": len(rows),
    }

    lead = {"leading": math.nan}
    if with_leading:
        try:
            lead = leading_term(w, form, prob.m, prob.L, tol=tol)
        except ValueError as exc:
            log.info("no leading term: %s", exc)
    diagnostics.update({k: v for k, v in lead.items() if k != "leading"})

    N_b = None
    if brute:
        cr = N_L_brute(w, form, prob.m, prob.L, tol=min(tol, 1e-8))
        N_b = cr.value
        diagnostics["brute_points"] = cr.points
        diagnostics["brute_truncation"] = cr.truncation_bound
    residual = None if N_b is None or math.isnan(lead["leading"]) else N_b - lead["leading"]
    params = {"q_max": q_max, "c_max": c_max, "Q": Lf, "L": Lf, "m": str(prob.m), "tol": tol, "seeds": None}
    return PipelineReport(N_b, N_circle, lead["leading"], residual, params, rows, c_L, diagnostics)


def J_decomposition(report: PipelineReport, gamma1: float) -> dict:
    """Regroup the table into c = 0, 0 < |c|_oo <= L^gamma1 and |c|_oo > L^gamma1."""
    L = report.params["L"]
    cut = L**gamma1
    b0, b1, b2 = [], [], []
    for r in report.per_term_table:
        n = max((abs(x) for x in r.c), default=0)
        (b0 if n == 0 else b1 if n <= cut else b2).append(r.contribution)
    J0, Jl, Jg = math.fsum(b0), math.fsum(b1), math.fsum(b2)
    return {"J0": J0, "J_less": Jl, "J_greater": Jg, "total": math.fsum(b0 + b1 + b2), "cut": cut}


# ---------------------------------------------------------------------------
# asymptotic tables


@dataclass
class AsymptoticRow:
    L: float
    N_brute: float
    points: int
    leading: float
    residual: float
    truncation: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "L": self.L,
            "N_brute": self.N_brute,
            "points": self.points,
            "leading": self.leading,
            "residual": self.residual,
            "truncation_bound": self.truncation,
        }
        out.update(self.extra)
        return out


@dataclass
class AsymptoticTable:
    d: int
    rows: list[AsymptoticRow]
    constants: dict
    fit: tuple[float, float, float] | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([r.to_dict()[name] for r in self.rows], dtype=float)

    def to_dict(self) -> dict:
        out = {"d": self.d, "constants": self.constants, "rows": [r.to_dict() for r in self.rows]}
        if self.fit is not None:
            out["fit"] = {"slope": self.fit[0], "intercept": self.fit[1], "r2": self.fit[2]}
        return out


def asymptotic_table(w: Weight, form: QuadraticForm, m, L_list, tol: float = 1e-6, workers: int = 1) -> AsymptoticTable:
    d = form.dim
    if d == 4 and Fraction(m) != 0:
        raise ValueError("d = 4 tables need m = 0")
    rows = []
    const = None
    for L in L_list:
        prob = LatticeProblem(form, Fraction(m), Fraction(L))
        Lf = float(prob.L)
        if const is None or prob.m != 0:
            const = leading_term(w, form, prob.m, prob.L, tol=tol)
        cr = N_L_brute(w, form, prob.m, prob.L, tol=min(tol, 1e-8), workers=workers)
        if d == 4:
            lead = const["sigma_inf"] * const["sigma_star"] * Lf**2 * math.log(Lf)
        else:
            lead = const["sigma_inf"] * const["sigma"] * Lf ** (d - 2)
        res = cr.value - lead
        extra = {
            "residual_over_L^(d-2)": res / Lf ** (d - 2),
            "residual_over_L^(d/2+0.25)": res / Lf ** (d / 2 + 0.25),
            "residual_over_L^(d/2+0.5)": res / Lf ** (d / 2 + 0.5),
        }
        if d == 4:
            extra["N_over_L2"] = cr.value / Lf**2
            extra["logL"] = math.log(Lf)
        rows.append(AsymptoticRow(Lf, cr.value, cr.points, lead, res, cr.truncation_bound, extra))
        log.info("L=%g: N=%.10g leading=%.10g", Lf, cr.value, lead)
    table = AsymptoticTable(d, rows, dict(const or {}))
    if d == 4 and len(rows) >= 3:
        table.fit = fit_log_coefficient(table)
        slope, icpt, _ = table.fit
        # with the fitted sigma_1 L^2 added, the residual is the fit residual
        for r in rows:
            r.extra["leading_with_intercept"] = r.leading + icpt * r.L**2
            r.extra["fit_residual"] = r.N_brute - (slope * math.log(r.L) + icpt) * r.L**2
    return table


def fit_log_coefficient(table) -> tuple[float, float, float]:
    """Least squares of N/L^{d-2} against log L: (slope, intercept, r^2)."""
    if isinstance(table, AsymptoticTable):
        d = table.d
        pts = [(math.log(r.L), r.N_brute / r.L ** (d - 2)) for r in table.rows]
    else:
        pts = [(float(a), float(b)) for a, b in table]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 rows for a fit, got {len(pts)}")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    X = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(X, y, rcond=None)
    ss_res = float(np.sum((y - X @ np.array([slope, icpt])) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(slope), float(icpt), r2


def tail_scan(w: Weight, form: QuadraticForm, m, L, q_values, c_max: int = 0, tol: float = 1e-6) -> list[float]:
    """N_circle for increasing q_max (convergence diagnostic), sharing one table."""
    rep = circle_rhs(w, form, m, L, q_max=max(q_values), c_max=c_max, tol=tol, brute=False, with_leading=False)
    out = []
    for qm in q_values:
        s = math.fsum(r.contribution for r in rep.per_term_table if r.q <= qm)
        out.append(rep.c_L / rep.params["L"] ** 2 * s)
    return out


def phi_weighted_partial(form: QuadraticForm, m_L2: int, q_upto: int) -> float:
    """sum_{q <= q_upto} q^{-d} S_q(0): the singular-series partial sum."""
    return math.fsum((S_q(q, None, form, m_L2).value.real) / q**form.dim for q in range(1, q_upto + 1))


__all__ = [
    "PipelineReport",
    "TermRow",
    "circle_rhs",
    "J_decomposition",
    "asymptotic_table",
    "fit_log_coefficient",
    "leading_term",
    "c_vectors",
    "tail_scan",
    "phi_weighted_partial",
]
