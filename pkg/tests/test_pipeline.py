import math

import numpy as np
import pytest

from quadcircle.forms import block_form, split_form
from quadcircle.hkernel import compute_cQ
from quadcircle.pipeline import (J_decomposition, asymptotic_table, c_vectors, circle_rhs, fit_log_coefficient,
                                 leading_term, phi_weighted_partial, tail_scan)
from quadcircle.quadric_integrals import I_q0, gaussian_weight, sigma_infinity

HYP = [[0, 1], [1, 0]]
D5 = block_form(HYP, HYP, [[2]], name="D5")


@pytest.fixture(scope="module")
def f4_report():
    return circle_rhs(gaussian_weight(4), split_form(4), 0, 16, q_max=24, c_max=1)


def test_c_vectors_order():
    cs = c_vectors(3, 1)
    assert cs[0] == (0, 0, 0) and len(cs) == 27
    assert c_vectors(2, 2)[-1] == (2, 2)


def test_single_term_assembly(F4):
    w = gaussian_weight(4)
    L = 8
    rep = circle_rhs(w, F4, 0, L, q_max=1, c_max=0, brute=False, with_leading=False)
    expected = compute_cQ(L) / L**2 * I_q0(1, F4, 0.0, L, w).value
    assert rep.N_circle == pytest.approx(expected, rel=1e-12)
    assert len(rep.per_term_table) == 1 and rep.per_term_table[0].S_q == 1


def test_zero_weight(F4):
    rep = circle_rhs(gaussian_weight(4, amplitude=0.0), F4, 0, 8, q_max=4, c_max=0, with_leading=False)
    assert rep.N_circle == 0.0 and rep.N_brute == 0.0


def test_f4_gap_and_reconciliation(f4_report):
    rep = f4_report
    gap = abs(rep.N_circle - rep.N_brute) / rep.N_brute
    assert gap < 0.10
    assert rep.reconcile() == pytest.approx(rep.N_circle, rel=1e-12)
    assert rep.diagnostics["terms"] == 81 * 24


def test_J_decomposition(f4_report):
    J = J_decomposition(f4_report, 0.5)
    assert J["J_greater"] == 0.0  # cut L^0.5 = 4 exceeds |c| = 1
    total = math.fsum(r.contribution for r in f4_report.per_term_table)
    assert J["total"] == pytest.approx(total, rel=1e-12)
    assert J["J0"] + J["J_less"] + J["J_greater"] == pytest.approx(J["total"], rel=1e-12)
    # a cut below 1 moves every c != 0 term to J_greater
    J2 = J_decomposition(f4_report, -0.5)
    assert J2["J_less"] == 0.0 and J2["J_greater"] == pytest.approx(J["J_less"], rel=1e-12)


def test_J_decomposition_c_zero(F4):
    rep = circle_rhs(gaussian_weight(4), F4, 0, 8, q_max=8, c_max=0, brute=False, with_leading=False)
    J = J_decomposition(rep, 0.5)
    assert J["J_less"] == 0.0 and J["J_greater"] == 0.0


def test_q_max_convergence(F4):
    vals = tail_scan(gaussian_weight(4), F4, 0, 16, [8, 16, 32, 64], c_max=0)
    steps = [abs(b - a) for a, b in zip(vals, vals[1:])]
    assert steps[0] > steps[1] > steps[2]


def _small_q_ratio(form, L):
    w = gaussian_weight(4)
    Q = int(0.1 * L)
    rep = circle_rhs(w, form, 0, L, q_max=Q, c_max=0, brute=False, with_leading=False)
    num = math.fsum(r.contribution for r in rep.per_term_table)
    return num / phi_weighted_partial(form, 0, Q) / (L**4 * sigma_infinity(w, form, 0.0).value)


def test_small_q_partial_sum_matches_singular_integral(F4):
    # the c = 0, q <= 0.1 L terms divided by the matching singular-series
    # partial sum approach L^d sigma_inf from above
    r = [_small_q_ratio(F4, L) for L in (16, 32, 64)]
    assert abs(r[1] - 1) <= 0.05
    assert r[0] > r[1] > r[2] > 1.0


def test_leading_term_pieces(F4):
    lt = leading_term(gaussian_weight(4), F4, 0, 16)
    assert lt["sigma_inf"] == pytest.approx(math.pi**2, rel=1e-6)
    assert lt["leading"] == pytest.approx(lt["sigma_inf"] * lt["sigma_star"] * 256 * math.log(16), rel=1e-12)
    with pytest.raises(ValueError):
        leading_term(gaussian_weight(4), F4, 1, 16)


def test_d5_residual_trend():
    table = asymptotic_table(gaussian_weight(5), D5, 0, [4, 8, 16])
    r = [abs(x) for x in table.column("residual_over_L^(d-2)")]
    assert r[1] < r[0] and r[2] < r[1]
    assert table.fit is None


def test_singleton_table(F4):
    table = asymptotic_table(gaussian_weight(4), F4, 0, [8])
    assert len(table.rows) == 1 and table.fit is None
    assert "fit" not in table.to_dict()


def test_fit_log_coefficient():
    rows = [(math.log(L), 2 * math.log(L) + 3) for L in (4, 8, 16, 32)]
    slope, icpt, r2 = fit_log_coefficient(rows)
    assert slope == pytest.approx(2) and icpt == pytest.approx(3) and r2 == pytest.approx(1.0)
    slope, _, _ = fit_log_coefficient([(x, 5.0) for x in (1.0, 2.0, 3.0)])
    assert slope == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        fit_log_coefficient([(1.0, 1.0), (2.0, 2.0)])


def test_f4_slope_positive_small_L(F4):
    table = asymptotic_table(gaussian_weight(4), F4, 0, [8, 16, 32])
    assert table.fit[0] > 0


def test_brute_force_slope_confirms_sigma_star(F4):
    # the count itself pins sigma*: N/L^2 against log L has slope sigma_inf sigma*
    table = asymptotic_table(gaussian_weight(4), F4, 0, [16, 32, 64])
    slope = table.fit[0]
    assert slope / (math.pi**2) == pytest.approx(6 / math.pi**2, rel=0.01)
    assert abs(slope / math.pi**2 - 4 * math.pi**2 / 105) > 0.2


def test_phi_weighted_partial(F4):
    assert phi_weighted_partial(F4, 0, 1) == 1.0
    assert phi_weighted_partial(F4, 0, 2) == pytest.approx(1 + 4 / 16)
