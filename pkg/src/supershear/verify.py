"""Manufactured-solution and similarity checks for the three building-block solvers."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc

from . import fd
from .domain import Grid, PhysicalParams, couette_flow
from .euler import HyperbolicSystem, InflowData, solve_hyperbolic
from .layer import make_layer_grid, solve_half_strip_parabolic
from .linear import solve_lame


def observed_orders(h, err) -> list:
    h, err = np.asarray(h, float), np.asarray(err, float)
    return [float(math.log(err[k] / err[k + 1]) / math.log(h[k] / h[k + 1])) for k in range(len(h) - 1)]


def _uniform_grid(L: float, n1: int, n2: int) -> Grid:
    return Grid(np.linspace(0.0, L, n1 + 1), np.linspace(0.0, 2.0, n2 + 1), "uniform")


# ---------------------------------------------------------------------------
# hyperbolic: A U_x1 + B U_x2 + D U = F with a smooth exact solution

def _hyperbolic_exact(x1, x2):
    s = np.sin(0.5 * math.pi * x2)
    u = np.cos(2.0 * x1) * np.cos(x2)
    v = np.exp(-x1) * s
    rho = np.sin(x1 + 0.7 * x2)
    return u, v, rho


def hyperbolic_mms(levels=(16, 32, 64, 128), L: float = 0.5, c: float = 1.0) -> dict:
    flow = couette_flow(2.0, 2.5)
    mu = lambda x2: flow.mu(x2)
    dmu = float(flow.mu(0.0, 1))

    def forcing(x1, x2):
        s, co = np.sin(0.5 * math.pi * x2), np.cos(0.5 * math.pi * x2)
        u_x1 = -2.0 * np.sin(2.0 * x1) * np.cos(x2)
        v = np.exp(-x1) * s
        v_x1 = -v
        v_x2 = np.exp(-x1) * 0.5 * math.pi * co
        r_x1 = np.cos(x1 + 0.7 * x2)
        r_x2 = 0.7 * r_x1
        m = mu(x2)
        return np.array([u_x1 + v_x2 + m * r_x1,
                         m * u_x1 + dmu * v + c * c * r_x1,
                         m * v_x1 + c * c * r_x2])

    errors, hs = [], []
    for n in levels:
        g = _uniform_grid(L, n, 2 * n)
        u0, v0, r0 = _hyperbolic_exact(0.0, g.x2)
        sys = HyperbolicSystem(flow, c, InflowData(u0, v0, r0), forcing, order=1)
        sol = solve_hyperbolic(sys, g, strict=False)
        X1, X2 = g.mesh()
        ue, ve, re = _hyperbolic_exact(X1, X2)
        err = max(fd.norm_inf(sol.u - ue), fd.norm_inf(sol.v - ve), fd.norm_inf(sol.rho - re))
        errors.append(err)
        hs.append(2.0 / (2 * n))
    orders = observed_orders(hs, errors)
    return {"h": hs, "errors": errors, "orders": orders, "min_order": min(orders)}


# ---------------------------------------------------------------------------
# parabolic: A u_x1 - u_YY = 0, u(x1, 0) = 1, u(0, Y) = 0 -> erfc(Y / (2 sqrt(x1 / A)))

def parabolic_erfc(A: float = 1.0, probe=(0.04, 0.2), levels=((32, 0.04), (64, 0.02), (128, 0.01)),
                   L: float = 0.1, substeps: int = 8) -> dict:
    errors, hs = [], []
    for n1, dY in levels:
        x1 = np.linspace(0.0, L, n1 + 1)
        lg = make_layer_grid(x1, dY=dY, substeps=substeps)
        sol = solve_half_strip_parabolic(A, np.zeros(len(lg.Y)), lambda s: -1.0, lg, check_corner=False)
        i = int(np.argmin(np.abs(x1 - probe[0])))
        j = int(np.argmin(np.abs(lg.Y - probe[1])))
        exact = erfc(lg.Y[j] / (2.0 * math.sqrt(x1[i] / A)))
        errors.append(float(abs(sol.u[i, j] - exact)))
        hs.append(L / n1)
    orders = observed_orders(hs, errors)
    default = errors[list(levels).index((64, 0.02))] if (64, 0.02) in levels else errors[-1]
    return {"h": hs, "errors": errors, "orders": orders, "min_order": min(orders),
            "default_grid_error": default}


# ---------------------------------------------------------------------------
# elliptic: Lame system with a trigonometric exact solution

def lame_mms(levels=(16, 32, 64, 128), L: float = 1.0, eps: float = 0.1, lam: float = 1.0,
             method: str = "direct") -> dict:
    params = PhysicalParams(eps=eps, lambda_bulk=lam, L=L)
    k1, k2 = math.pi / L, 0.5 * math.pi
    errors, hs = [], []
    for n in levels:
        g = _uniform_grid(L, n, 2 * n)
        X1, X2 = g.mesh()
        s1, c1 = np.sin(k1 * X1), np.cos(k1 * X1)
        s2, c2 = np.sin(k2 * X2), np.cos(k2 * X2)
        u = s1 * s2
        v = np.sin(2 * k1 * X1) * np.sin(2 * k2 * X2)
        u11, u22 = -k1 ** 2 * u, -k2 ** 2 * u
        v11, v22 = -4 * k1 ** 2 * v, -4 * k2 ** 2 * v
        u12 = k1 * k2 * c1 * c2
        v12 = 4 * k1 * k2 * np.cos(2 * k1 * X1) * np.cos(2 * k2 * X2)
        r1 = -eps * ((1 + lam) * u11 + u22 + lam * v12)
        r2 = -eps * (v11 + (1 + lam) * v22 + lam * u12)
        sol = solve_lame((r1, r2), g, params, method=method)
        errors.append(max(fd.norm_inf(sol.u - u), fd.norm_inf(sol.v - v)))
        hs.append(L / n)
    orders = observed_orders(hs, errors)
    return {"h": hs, "errors": errors, "orders": orders, "min_order": min(orders)}
