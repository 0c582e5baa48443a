import math
import types

import numpy as np
import pytest
from conftest import uniform_grid
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from supershear import fd
from supershear.domain import PhysicalParams, build_grid, quartic_flow
from supershear.linear import (LameOperator, LinearProblem, density_derivative_identity_check,
                               linear_fixed_point, mollify, solve_lame, solve_transport,
                               straighten_streamlines, supersonic_quadratic_form,
                               weighted_energy_report, x_norm)
from supershear.verify import lame_mms


# ---------------------------------------------------------------------------
# streamline straightening

def test_zero_vertical_velocity_gives_identity_map():
    g = build_grid(PhysicalParams(), 16, 64)
    cmap = straighten_streamlines(np.full(g.shape, 2.0), np.zeros(g.shape), g)
    assert cmap.is_identity and cmap.jacobian_deviation() == 0.0
    f = np.random.default_rng(1).normal(size=g.shape)
    assert np.array_equal(cmap.to_grid(cmap.to_labels(f)), f)


def test_constant_slope_streamlines():
    g = uniform_grid(0.1, 16, 64)
    s = 0.2
    cmap = straighten_streamlines(np.full(g.shape, 2.0), np.full(g.shape, s), g)
    band = (g.x2 > 0.5) & (g.x2 < 1.5)
    expected = g.x2[None, band] + 0.5 * s * g.x1[:, None]
    assert np.allclose(cmap.Z[:, band], expected, atol=1e-13)


def test_jacobian_deviation_tracks_vertical_velocity(small_bundle):
    ap = small_bundle.approx
    g = ap.grid
    cmap = straighten_streamlines(ap.u, ap.v, g)
    size = fd.norm_inf(ap.v) + fd.norm_inf(fd.d2(ap.v, g)) + fd.norm_inf(fd.d22(ap.v, g))
    ratio = cmap.jacobian_deviation() / size
    assert np.isfinite(ratio) and ratio < 1.0


# ---------------------------------------------------------------------------
# mollification

def test_mollify_zero_radius_is_identity():
    g = build_grid(PhysicalParams(), 16, 64)
    f = np.random.default_rng(2).normal(size=g.shape)
    assert mollify(f, g, 0.0) is f


def test_mollify_spike_keeps_mass():
    g = uniform_grid(1.0, 64, 128)
    f = np.zeros(g.shape)
    w = g.weights()
    f[32, 64] = 3.0 / w[32, 64]          # mass 3
    out = mollify(f, g, 0.1)
    assert float(np.sum(w * out)) == pytest.approx(3.0, abs=1e-10)
    assert np.count_nonzero(out) > 1


@settings(max_examples=30, deadline=None)
@given(value=st.floats(-1e3, 1e3), delta=st.floats(1e-3, 0.5))
def test_mollify_preserves_constants(value, delta):
    g = build_grid(PhysicalParams(), 16, 64)
    out = mollify(np.full(g.shape, value), g, delta)
    assert np.allclose(out, value, rtol=1e-12, atol=1e-12)


# ---------------------------------------------------------------------------
# transport

def test_transport_zero_data():
    x1 = np.linspace(0.0, 0.1, 11)
    z = np.zeros((11, 5))
    assert not np.any(solve_transport(np.full((11, 5), 2.0), z, z, x1))


def test_transport_unit_integrand():
    x1 = np.linspace(0.0, 0.1, 11)
    rho = solve_transport(np.full((11, 5), 2.0), np.full((11, 5), 2.0), np.zeros((11, 5)), x1)
    assert np.allclose(rho, x1[:, None], atol=1e-15)


def test_transport_manufactured_second_order():
    errs = []
    for n in (16, 32, 64):
        g = uniform_grid(1.0, n, 2 * n)
        X1, X2 = g.mesh()
        exact = np.sin(X1) * np.cos(math.pi * X2)
        f0 = 2.0 * np.cos(X1) * np.cos(math.pi * X2)
        rho = solve_transport(np.full(g.shape, 2.0), f0, np.zeros(g.shape), g.x1)
        errs.append(np.max(np.abs(rho - exact)))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 1.9


# ---------------------------------------------------------------------------
# Lame system

def test_lame_zero_rhs():
    g = build_grid(PhysicalParams(), 16, 32)
    z = np.zeros(g.shape)
    r = solve_lame((z, z), g, PhysicalParams())
    assert not np.any(r.u) and not np.any(r.v)


@pytest.mark.parametrize("method", ["direct", "cg"])
def test_lame_energy_identity(method):
    params = PhysicalParams(eps=0.1, lambda_bulk=1.0)
    g = build_grid(params, 32, 64)
    r = solve_lame((np.ones(g.shape), np.zeros(g.shape)), g, params, method=method)
    assert r.identity_gap <= 1e-8
    assert r.energy > 0


def test_lame_manufactured_second_order():
    r = lame_mms(levels=(8, 16, 32))
    assert min(r["orders"]) >= 1.9


@settings(max_examples=25, deadline=None)
@given(data=arrays(np.float64, (2, 9, 9), elements=st.floats(-1.0, 1.0)),
       lam=st.floats(0.1, 5.0), eps=st.floats(0.01, 1.0))
def test_lame_coercive(data, lam, eps):
    g = uniform_grid(1.0, 8, 8)
    op = LameOperator(g, eps, lam)
    u, v = data[0].copy(), data[1].copy()
    for f in (u, v):
        f[0] = f[-1] = 0.0
        f[:, 0] = f[:, -1] = 0.0
    q = op.quadratic_form(u, v)
    x = op.pack(u, v)
    # smallest eigenvalue of the scaled form is of order eps h^2
    assert q >= 1e-3 * eps * float(x @ (op.area * x)) - 1e-14


# ---------------------------------------------------------------------------
# coupled linear problem

def _problem(eps=0.1, L=0.05, scale=1e-3, n1=32, n2=64):
    params = PhysicalParams(eps=eps, L=L)
    g = build_grid(params, n1, n2)
    X1, X2 = g.mesh()
    us = quartic_flow().mu(X2)
    f = scale * np.sin(math.pi * X2 / 2) * np.cos(X1)
    return LinearProblem.from_fields(g, params, us, f0=f, f1=f, f2=0.5 * f)


def test_zero_forcing_gives_zero_solution_in_one_iteration():
    params = PhysicalParams()
    g = build_grid(params, 16, 64)
    pb = LinearProblem.from_fields(g, params, quartic_flow().mu(g.mesh()[1]))
    sol = linear_fixed_point(pb)
    assert sol.iterations == 1
    assert not (np.any(sol.u) or np.any(sol.v) or np.any(sol.rho))
    rep = weighted_energy_report(sol, pb)
    assert rep["lhs_weighted"] == rep["rhs_weighted"] == rep["lhs_trace"] == rep["rhs_trace"] == 0.0


def test_small_forcing_converges_with_energy_slack():
    pb = _problem()
    sol = linear_fixed_point(pb)
    assert sol.history[-1] <= 1e-10
    assert sol.energy["lhs_weighted"] < sol.energy["rhs_weighted"]
    assert sol.energy["C_trace"] <= 1e3
    assert np.all(sol.rho[0] == 0.0)
    assert sol.energy["quadratic_form_min"] >= 0.0


def test_gmres_and_damped_picard_agree():
    pb = _problem()
    a = linear_fixed_point(pb, method="gmres", tol=1e-10)
    b = linear_fixed_point(pb, method="picard", tol=1e-10)
    # both stop on an absolute X-norm step of 1e-10
    assert x_norm(a.u - b.u, a.v - b.v, pb.grid, pb.eps) <= 1e-9


def test_cg_and_direct_lame_agree_inside_fixed_point():
    pb = _problem()
    a = linear_fixed_point(pb, lame_method="direct")
    b = linear_fixed_point(pb, lame_method="cg")
    assert np.max(np.abs(a.u - b.u)) <= 1e-8 * np.max(np.abs(a.u))


def test_solution_satisfies_discrete_momentum():
    pb = _problem()
    sol = linear_fixed_point(pb)
    g, c2 = pb.grid, pb.params.c ** 2
    lu, lv = fd.lame_apply(sol.u, sol.v, g, pb.eps, pb.params.lambda_bulk)
    r1 = pb.us * fd.d1(sol.u, g) + pb.us_x2 * sol.v + lu + c2 * fd.d1(sol.rho, g) - pb.f1
    # the last iterate leaves a residual of the order of the stopping tolerance
    scale = np.max(np.abs(pb.f1))
    assert np.max(np.abs(r1[1:-1, 1:-1])) <= 1e-6 * scale


@settings(max_examples=60, deadline=None)
@given(us=st.floats(1.2, 10.0), u=st.floats(-1e3, 1e3), rho=st.floats(-1e3, 1e3),
       c=st.floats(0.1, 1.19))
def test_supersonic_quadratic_form_nonnegative(us, u, rho, c):
    q = supersonic_quadratic_form(np.array([us]), np.array([u]), np.array([rho]), c)
    assert q[0] >= 0.0


# ---------------------------------------------------------------------------
# density derivative identity

def test_identity_check_zero_solution():
    pb = _problem(scale=0.0)
    z = np.zeros(pb.grid.shape)
    rep = density_derivative_identity_check(types.SimpleNamespace(u=z, v=z, rho=z), pb)
    assert rep["mismatch"] == 0.0 and rep["passed"]


def _manufactured_identity(n: int) -> float:
    """Fields satisfying the continuous identity exactly; returns the discrete mismatch."""
    params = PhysicalParams(eps=0.1)
    g = uniform_grid(1.0, n, 2 * n)
    X1, X2 = g.mesh()
    c2, k = params.c ** 2, params.eps * (1 + params.lambda_bulk)
    rho = np.sin(X1) * np.sin(X2)
    u = np.sin(X1) * np.sin(X2)
    v = X1 * X2
    lhs = c2 * np.sin(X1) * np.cos(X2) + 2.0 * k * np.cos(X1) * np.cos(X2)
    f2 = lhs + 2.0 * X2 + params.eps * np.cos(X1) * np.cos(X2)
    pb = LinearProblem.from_fields(g, params, np.full(g.shape, 2.0), f0=0.0, f2=f2, delta=0.0)
    return density_derivative_identity_check(types.SimpleNamespace(u=u, v=v, rho=rho), pb)["mismatch"]


def test_identity_manufactured_truncation_order():
    m = [_manufactured_identity(n) for n in (16, 32, 64)]
    orders = [math.log2(a / b) for a, b in zip(m, m[1:])]
    assert min(orders) >= 1.8


def test_identity_holds_for_converged_solution():
    pb = _problem()
    rep = density_derivative_identity_check(linear_fixed_point(pb), pb)
    assert rep["passed"]
    assert rep["mismatch"] <= 10 * rep["estimate"]
