"""Approximate solution assembly and its forcing residuals.

u_s = mu + eps (U_e + U_p),  v_s = eps (V_e + sqrt(eps) V_p),  rho_s = rho* + eps P_e,
with U_e = u_e1 + sqrt(eps) u_e2 and U_p = u_p1 + sqrt(eps) u_p2 (likewise V, P).

The residual is evaluated twice: once from the expanded expression in which
the corrector equations have been used to cancel the O(eps) terms (the
canonical value), and once by applying the discrete steady operator to the
assembled fields.  Their difference measures truncation error.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import fd
from .domain import BaseFlow, Grid, PhysicalParams
from .errors import GridMismatch
from .euler import (EulerCorrector, first_corrector_system, second_corrector_boundary_data,
                    second_corrector_system, solve_hyperbolic)
from .layer import FIELD_NAMES, LayerCorrector, build_layer_corrector

log = logging.getLogger(__name__)


def _zeros_layer_fields(shape) -> dict:
    return {k: np.zeros(shape) for k in FIELD_NAMES}


@dataclass(frozen=True, eq=False)
class ApproxSolution:
    grid: Grid
    flow: BaseFlow
    params: PhysicalParams
    eps: float
    u: np.ndarray
    v: np.ndarray
    rho: np.ndarray
    Ue: np.ndarray
    Ve: np.ndarray
    Pe: np.ndarray
    Up: dict            # layer bundle u_p1 + sqrt(eps) u_p2 and its derivative fields
    Vp: dict            # same keys, vertical component (physical sign)
    C1: np.ndarray      # cut + frozen-coefficient error of the order-one layer
    C2: np.ndarray
    mu: np.ndarray      # base flow and derivatives broadcast to the grid
    dmu: np.ndarray
    ddmu: np.ndarray
    wall_report: dict = field(default_factory=dict)
    parts: dict = field(default_factory=dict)

    def trace(self, name: str, where: str) -> np.ndarray:
        f = getattr(self, name)
        return {"inflow": f[0], "outflow": f[-1], "lower": f[:, 0], "upper": f[:, -1]}[where]


def assemble(e1: EulerCorrector | None, e2: EulerCorrector | None, l1: LayerCorrector | None,
             l2: LayerCorrector | None, flow: BaseFlow, params: PhysicalParams, grid: Grid | None = None,
             eps: float | None = None) -> ApproxSolution:
    """Combine the correctors with their powers of eps; None stands for a zero corrector."""
    parts = [x for x in (e1, e2, l1, l2) if x is not None]
    if grid is None:
        if not parts:
            raise GridMismatch("no corrector supplied and no grid given")
        grid = parts[0].grid
    for x in parts:
        if not x.grid.same_as(grid):
            raise GridMismatch(f"order-{x.order} corrector lives on a different grid")
    eps = params.eps if eps is None else float(eps)
    rt = math.sqrt(eps)
    shape = grid.shape
    z = np.zeros(shape)

    def euler(e, name):
        return z if e is None else getattr(e, name)

    def layer(l):
        return _zeros_layer_fields(shape) if l is None else l.fields

    Ue = euler(e1, "u") + rt * euler(e2, "u")
    Ve = euler(e1, "v") + rt * euler(e2, "v")
    Pe = euler(e1, "rho") + rt * euler(e2, "rho")
    f1, f2 = layer(l1), layer(l2)
    Up = {k[1:] or "val": f1[k] + rt * f2[k] for k in FIELD_NAMES if k.startswith("u")}
    Vp = {k[1:] or "val": f1[k] + rt * f2[k] for k in FIELD_NAMES if k.startswith("v")}
    C1 = z if l1 is None else l1.cut_error + l1.app_error
    C2 = z if l2 is None else l2.cut_error + l2.app_error

    x2 = grid.x2
    mu = np.broadcast_to(flow.mu(x2), shape).copy()
    dmu = np.broadcast_to(flow.mu(x2, 1), shape).copy()
    ddmu = np.broadcast_to(flow.mu(x2, 2), shape).copy()
    u = mu + eps * (Ue + Up["val"])
    v = eps * (Ve + rt * Vp["val"])
    rho = params.rho_star + eps * Pe
    wall = {
        "u_lower": float(np.max(np.abs(u[:, 0] - flow.V0))),
        "u_upper": float(np.max(np.abs(u[:, -1] - flow.V1))),
        "v_walls": float(max(np.max(np.abs(v[:, 0])), np.max(np.abs(v[:, -1])))),
        "rho_min": float(np.min(rho)),
    }
    if wall["v_walls"] > 1e-12 or max(wall["u_lower"], wall["u_upper"]) > 1e-12:
        log.warning("wall traces of the approximate solution deviate: %s", wall)
    return ApproxSolution(grid, flow, params, eps, u, v, rho, Ue, Ve, Pe, Up, Vp, C1, C2,
                          mu, dmu, ddmu, wall, {"e1": e1, "e2": e2, "l1": l1, "l2": l2})


def _second(f: np.ndarray, x: np.ndarray, axis: int) -> np.ndarray:
    return np.gradient(np.gradient(f, x, axis=axis, edge_order=2), x, axis=axis, edge_order=2)


@dataclass(frozen=True, eq=False)
class ForcingResiduals:
    g0s: np.ndarray
    g1s: np.ndarray
    g2s: np.ndarray
    pressure_defect: tuple        # (P'(rho_s) - c^2) grad rho_s, kept apart from g_s
    direct: tuple                 # discrete operator applied to the assembled fields
    norms: dict

    @property
    def discrepancy(self) -> float:
        return self.norms["discrepancy_l2"]


def expanded_residual(ap: ApproxSolution) -> tuple:
    """Residual from the expansion with the corrector equations used for the O(eps) cancellations."""
    g, eps, lam = ap.grid, ap.eps, ap.params.lambda_bulk
    rt = math.sqrt(eps)
    x1, x2 = g.x1, g.x2
    P = ap.Pe
    Up, Vp = ap.Up, ap.Vp
    mu, dmu = ap.mu, ap.dmu
    U = ap.Ue + Up["val"]
    W = ap.Ve + rt * Vp["val"]
    P1, P2 = fd.d1(P, g), fd.d2(P, g)
    U1 = fd.d1(ap.Ue, g) + Up["_x1"]
    U2 = fd.d2(ap.Ue, g) + Up["_x2"]
    W1 = fd.d1(ap.Ve, g) + rt * Vp["_x1"]
    W2 = fd.d2(ap.Ve, g) + rt * Vp["_x2"]
    div_e = fd.d1(ap.Ue, g) + fd.d2(ap.Ve, g)
    lap_Ue = _second(ap.Ue, x1, 0) + _second(ap.Ue, x2, 1)
    lap_Ve = _second(ap.Ve, x1, 0) + _second(ap.Ve, x2, 1)
    rs = 1.0 + eps * P

    g0 = eps ** 2 * (P * div_e + U * P1 + W * P2)
    g1 = (eps * ap.C1 + eps ** 1.5 * ap.C2 + eps ** 1.5 * dmu * Vp["val"]
          + eps ** 2 * (rs * (U * U1 + W * U2) + P * mu * U1 + P * dmu * W
                        - lap_Ue - Up["_x1x1"] - lam * fd.d1(div_e, g)))
    g2 = (eps ** 1.5 * (mu * Vp["_x1"] - eps * Vp["_x2x2"])
          + eps ** 2 * (rs * (U * W1 + W * W2) + P * mu * W1 - lap_Ve - lam * fd.d2(div_e, g))
          - eps ** 2.5 * Vp["_x1x1"])
    return g0, g1, g2


def steady_operator(u, v, rho, grid: Grid, params: PhysicalParams, eps: float | None = None,
                    pressure: str = "linear") -> tuple:
    """Discrete steady operator; ``pressure`` 'linear' uses c^2 grad rho, 'full' uses P'(rho) grad rho.

    Momentum components are meaningful at interior nodes only.
    """
    eps = params.eps if eps is None else eps
    lam = params.lambda_bulk
    r1, r2 = fd.d1(rho, grid), fd.d2(rho, grid)
    u1, u2, v1, v2 = fd.d1(u, grid), fd.d2(u, grid), fd.d1(v, grid), fd.d2(v, grid)
    slope = params.c ** 2 if pressure == "linear" else params.pressure_slope(rho)
    lu, lv = fd.lame_apply(u, v, grid, eps, lam)
    n0 = rho * (u1 + v2) + u * r1 + v * r2
    n1 = rho * (u * u1 + v * u2) + lu + slope * r1
    n2 = rho * (u * v1 + v * v2) + lv + slope * r2
    return n0, n1, n2


def forcing_residuals(ap: ApproxSolution, params: PhysicalParams | None = None) -> ForcingResiduals:
    params = ap.params if params is None else params
    g = ap.grid
    g0, g1, g2 = expanded_residual(ap)
    d0, d1_, d2_ = steady_operator(ap.u, ap.v, ap.rho, g, params, ap.eps)
    slope = params.pressure_slope(ap.rho) - params.c ** 2
    pd = (slope * fd.d1(ap.rho, g), slope * fd.d2(ap.rho, g))
    p = params.p
    inner = np.zeros(g.shape, dtype=bool)
    inner[1:-1, 1:-1] = True
    gs = np.hypot(g1, g2)
    diff = np.sqrt((d0 - g0) ** 2 + (d1_ - g1) ** 2 + (d2_ - g2) ** 2)
    w1p = (fd.norm_lp(g0, g, p) ** p + fd.norm_lp(fd.d1(g0, g), g, p) ** p
           + fd.norm_lp(fd.d2(g0, g), g, p) ** p) ** (1.0 / p)
    norms = {
        "eps": ap.eps,
        "g0s_l2": fd.norm_lp(g0, g, 2.0),
        "g0s_w1p": w1p,
        "gs_lp": fd.norm_lp(gs, g, p),
        "gs_inf": fd.norm_inf(gs),
        "direct_g0s_l2": fd.norm_lp(d0, g, 2.0, inner),
        "direct_gs_lp": fd.norm_lp(np.hypot(d1_, d2_), g, p, inner),
        "discrepancy_l2": fd.norm_lp(diff, g, 2.0, inner),
        "pressure_defect_l2": fd.norm_lp(np.hypot(*pd), g, 2.0),
    }
    return ForcingResiduals(g0, g1, g2, pd, (d0, d1_, d2_), norms)


RESIDUAL_COLUMNS = ("eps", "g0s_l2", "g0s_w1p", "gs_lp", "gs_inf")


def write_residual_table(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESIDUAL_COLUMNS)
        for r in rows:
            w.writerow([repr(float(r[k])) for k in RESIDUAL_COLUMNS])


def divergence_free_layer_check(layers) -> dict:
    """Centred-difference continuity violation of the pre-cutoff profiles.

    Trapezoid integration followed by a centred difference leaves exactly a
    quarter of the second difference of u_x1 at each node; that is the
    estimate, and the check is made node by node.
    """
    worst, estimate, excess = 0.0, 0.0, 0.0
    per = []
    for lay in layers:
        if lay is None:
            continue
        for wall, pr in lay.profiles.items():
            dY = pr.Y[1] - pr.Y[0]
            q, v = pr.u_x1, pr.v
            if not q.size:
                continue
            dv = (v[:, 2:] - v[:, :-2]) / (2 * dY)
            viol = np.abs(q[:, 1:-1] + dv)
            est = np.abs(q[:, 2:] - 2 * q[:, 1:-1] + q[:, :-2]) / 4.0
            # node by node, with a round-off allowance
            floor = 1e-12 * max(1.0, float(np.max(np.abs(q))))
            over = float(np.max(viol - 10.0 * est - floor))
            per.append({"order": lay.order, "wall": wall, "violation": float(viol.max()),
                        "estimate": float(est.max()), "excess": over})
            worst, estimate = max(worst, float(viol.max())), max(estimate, float(est.max()))
            excess = max(excess, over)
    return {"violation": worst, "estimate": estimate, "passed": excess <= 0.0, "walls": per}


@dataclass(frozen=True, eq=False)
class Approximation:
    """Everything produced while building the approximate solution for one case."""

    approx: ApproxSolution
    e1: EulerCorrector
    e2: EulerCorrector
    l1: LayerCorrector
    l2: LayerCorrector


def build_approximation(params: PhysicalParams, flow: BaseFlow, grid: Grid, a0: float = 0.4,
                        b: float = 0.5, Y_max: float = 12.0, dY: float = 0.02,
                        layer_substeps: int = 8, strict: bool = True) -> Approximation:
    """Euler 1 -> layer 1 -> inflow data of Euler 2 -> Euler 2 -> layer 2 -> assembly."""
    if abs(params.rho_star - 1.0) > 1e-12:
        log.warning("corrector systems assume rho* = 1; residual orders degrade for rho* = %g",
                    params.rho_star)
    e1 = solve_hyperbolic(first_corrector_system(flow, params, grid.n2), grid, strict=strict)
    l1 = build_layer_corrector(1, e1, flow, params, a0, Y_max, dY, layer_substeps)
    inflow = second_corrector_boundary_data(l1, b, flow, params, grid.x2)
    sys2 = second_corrector_system(flow, params, inflow, grid.x1, -l1.wall_v("lower"), -l1.wall_v("upper"))
    e2 = solve_hyperbolic(sys2, grid, strict=strict)
    l2 = build_layer_corrector(2, e2, flow, params, a0, Y_max, dY, layer_substeps)
    return Approximation(assemble(e1, e2, l1, l2, flow, params, grid), e1, e2, l1, l2)
