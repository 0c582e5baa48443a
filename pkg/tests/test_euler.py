import math

import numpy as np
import pytest
from conftest import unit_params, uniform_grid
from hypothesis import given, settings, strategies as st

from supershear.domain import build_grid, chi, constant_flow, couette_flow, quartic_flow
from supershear.errors import CFLViolation, SubsonicPoint
from supershear.euler import (CornerTraces, HyperbolicSystem, InflowData, eigenvalues,
                              first_corrector_system, node_labels, partition_domain,
                              second_corrector_boundary_data, solve_hyperbolic, trace_characteristic)
from supershear.verify import hyperbolic_mms


def test_eigenvalues_examples():
    assert eigenvalues(2.0, 1.0) == pytest.approx((0.0, 1 / math.sqrt(3), -1 / math.sqrt(3)), abs=1e-15)
    assert eigenvalues(math.sqrt(2.0) * 1.3, 1.3) == pytest.approx((0.0, 1.0, -1.0), abs=1e-12)
    with pytest.raises(SubsonicPoint):
        eigenvalues(1.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(c=st.floats(0.2, 3.0), mach=st.floats(1.0001, 10.0))
def test_eigenvalue_ordering(c, mach):
    l1, l2, l3 = eigenvalues(mach * c, c)
    assert l3 < 0.0 == l1 < l2


def test_zero_speed_characteristic_is_constant():
    params = unit_params(L=0.1)
    y = trace_characteristic(1, 0.7, constant_flow(2.0), params)
    assert np.all(y == 0.7)


def test_characteristics_of_constant_flow():
    params = unit_params(L=0.1)
    x1 = np.linspace(0.0, 0.1, 65)
    y2 = trace_characteristic(2, 0.0, constant_flow(2.0), params, x1)
    y3 = trace_characteristic(3, 2.0, constant_flow(2.0), params, x1)
    assert y2[-1] == pytest.approx(0.057735, abs=5e-7)
    assert np.allclose(y2, x1 / math.sqrt(3), atol=1e-13)
    assert np.allclose(y3, 2.0 - x1 / math.sqrt(3), atol=1e-13)


def test_linear_profile_gives_zero_first_corrector():
    params = unit_params(eps=0.1)
    g = build_grid(params, 16, 32)
    e = solve_hyperbolic(first_corrector_system(couette_flow(), params, g.n2), g)
    assert not np.any(e.u) and not np.any(e.v) and not np.any(e.rho)


def test_manufactured_solution_first_order():
    r = hyperbolic_mms(levels=(16, 32, 64))
    assert all(b < a for a, b in zip(r["errors"], r["errors"][1:]))
    # asymptotic order of the upwind march is one
    assert r["orders"][-1] == pytest.approx(1.0, abs=0.05)


def test_curved_profile_flags_second_order_corner_warning():
    params = unit_params(eps=0.1)
    flow = quartic_flow(2.0, 2.0, 0.3, 0.0)          # mu = 2 + 0.3 x2 (2 - x2)
    g = build_grid(params, 32, 64)
    e = solve_hyperbolic(first_corrector_system(flow, params, g.n2), g)
    assert e.compatibility["violations"] == []
    assert any("second-order" in w for w in e.compatibility["warnings"])
    assert np.all(np.isfinite(e.rho)) and np.max(np.abs(e.rho)) > 0


def test_explicit_substeps_respect_cfl():
    params = unit_params(eps=0.1)
    g = build_grid(params, 8, 256)
    sys = first_corrector_system(quartic_flow(), params, g.n2)
    with pytest.raises(CFLViolation):
        solve_hyperbolic(sys, g, substeps=1)


def test_partition_bands_of_constant_flow():
    params = unit_params(L=0.1)
    g = uniform_grid(0.1, 32, 256)
    e = solve_hyperbolic(HyperbolicSystem(constant_flow(2.0), 1.0, InflowData.zero(g.n2 + 1)), g)
    assert e.lower_curve[-1] == pytest.approx(0.0577, abs=5e-5)
    assert 2.0 - e.upper_curve[-1] == pytest.approx(0.0577, abs=5e-5)
    labels = partition_domain(e)
    assert {1, 2, 3} <= set(np.unique(labels))
    # Omega_2 fills the whole inflow section
    assert np.all(node_labels(e)[0] == 2)


def test_second_corrector_data_zero_when_layer_velocity_vanishes():
    params = unit_params()
    x2 = np.linspace(0.0, 2.0, 101)
    data = second_corrector_boundary_data(CornerTraces(), 0.5, couette_flow(), params, x2)
    assert not np.any(data.u) and not np.any(data.v) and not np.any(data.rho)


def test_second_corrector_density_formula():
    params, flow, b, s = unit_params(), quartic_flow(), 0.5, 0.37
    x2 = np.linspace(0.0, 2.0, 201)
    data = second_corrector_boundary_data(CornerTraces(dv_lower=s), b, flow, params, x2)
    lower = x2 < 1.0
    expected = flow.mu(x2) / params.c ** 2 * s * x2 * chi(x2 / b)
    assert np.allclose(data.rho[lower], expected[lower], rtol=0, atol=1e-15)
    band = (x2 >= b) & (x2 <= 2.0 - b)
    assert np.all(data.rho[band] == 0.0) and np.all(data.v[band] == 0.0)


def test_second_corrector_data_support():
    params = unit_params()
    x2 = np.linspace(0.0, 2.0, 401)
    data = second_corrector_boundary_data(CornerTraces(0.2, -0.1, 0.3, 0.4), 0.3, quartic_flow(),
                                          params, x2)
    band = (x2 >= 0.3) & (x2 <= 1.7)
    assert np.all(data.v[band] == 0.0) and np.all(data.rho[band] == 0.0)
    assert data.v[0] == pytest.approx(-0.2) and data.v[-1] == pytest.approx(0.1)
