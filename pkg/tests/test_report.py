import math

import pytest
from hypothesis import given, settings, strategies as st

from supershear.errors import DegenerateFit
from supershear.report import (ConvergenceReport, bound_check, decreasing_check, fit_slope,
                               slope_check, write_table)
from supershear.runner import energy_constant_trend

EPS = [0.2, 0.1, 0.05, 0.025]


def test_fit_of_exact_power():
    fit = fit_slope(EPS, [e ** 2 for e in EPS])
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert fit.residual <= 1e-12


def test_fit_intercept_is_log_constant():
    fit = fit_slope(EPS, [3 * e ** 1.5 for e in EPS])
    assert fit.slope == pytest.approx(1.5, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(k=st.floats(-3.0, 5.0), c=st.floats(1e-3, 1e3))
def test_fit_recovers_any_power(k, c):
    assert fit_slope(EPS, [c * e ** k for e in EPS]).slope == pytest.approx(k, abs=1e-9)


def test_zero_norms_are_degenerate_and_exact():
    with pytest.raises(DegenerateFit):
        fit_slope(EPS, [0.0] * 4)
    assert slope_check("x", EPS, [0.0] * 4, 1.9).verdict == "exact"


def test_fit_needs_three_points():
    with pytest.raises(ValueError):
        fit_slope([0.2, 0.1], [1.0, 0.5])


def test_checks_and_report_lines():
    rep = ConvergenceReport()
    rep.add("a", bound_check("m", EPS, [0.1, 0.2, 0.3, 0.4], 0.6))
    rep.add("b", decreasing_check("d", EPS, [4.0, 3.0, 3.0, 1.0]))
    assert rep.suite_passed("a") and not rep.suite_passed("b") and not rep.passed
    lines = rep.lines()
    assert lines[0] == "[a] PASS" and lines[-1] == "overall: FAIL"


def test_energy_trend_flat_and_growing():
    assert energy_constant_trend(EPS, [1.0, 1.0, 1.0, 1.0])[0]
    assert energy_constant_trend(EPS, [0.0] * 4)[0]
    assert not energy_constant_trend(EPS, [1.0, 1.5, 2.0, 2.5])[0]
    assert not energy_constant_trend(EPS, [1.0, math.inf, 1.0, 1.0])[0]


def test_table_format_is_stable(tmp_path):
    path = tmp_path / "t.csv"
    write_table([{"eps": 0.1, "n": 3, "x": 1 / 3}, {"eps": 0.05, "n": 4}], ("eps", "n", "x"), path)
    assert path.read_text() == "eps,n,x\n0.1,3,0.3333333333333333\n0.05,4,\n"
