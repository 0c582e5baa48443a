"""Weak boundary layers: A u_x1 - u_YY = 0 on the half strip, plus cutoff assembly.

Y is the stretched wall distance (x2 / sqrt(eps) at the lower wall,
(2 - x2) / sqrt(eps) at the upper one).  Profiles are computed once in Y and
mapped to the physical grid by cubic interpolation.  The vertical velocity of
the upper layer changes sign when written in physical coordinates.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import solve_banded

from .domain import _trapezoid_weights, BaseFlow, Grid, PhysicalParams, chi, decay_weight
from .errors import CornerMismatch
from .euler import WALLS, CornerTraces, EulerCorrector

WALL_SIGN = {"lower": 1.0, "upper": -1.0}


@dataclass(frozen=True, eq=False)
class LayerGrid:
    x1: np.ndarray
    Y: np.ndarray
    wall: str = "lower"
    substeps: int = 8

    def __post_init__(self):
        if self.Y[-1] < 8.0:
            raise ValueError("Y_max must be at least 8")
        if self.Y[1] - self.Y[0] > 0.05 + 1e-12:
            raise ValueError("Y spacing near the wall must not exceed 0.05")

    @property
    def dY(self) -> float:
        return float(self.Y[1] - self.Y[0])

    @property
    def Y_max(self) -> float:
        return float(self.Y[-1])


def make_layer_grid(x1, Y_max: float = 12.0, dY: float = 0.02, wall: str = "lower",
                    substeps: int = 8) -> LayerGrid:
    n = int(round(Y_max / dY))
    return LayerGrid(np.asarray(x1, dtype=float), np.linspace(0.0, Y_max, n + 1), wall, substeps)


def layer_initial_polynomial(order: int, corner_derivs, wall_const: float, Y) -> np.ndarray:
    """-(sum_k A^k d_k Y^2k / (2k)!) chi(Y), d_k = d^k u_e / dx1^k at the corner.

    k runs to 4 for order 1 and to 2 for order 2; ``corner_derivs[k]`` is d_k
    (entry 0, the corner value itself, is not used).
    """
    kmax = {1: 4, 2: 2}[order]
    Y = np.asarray(Y, dtype=float)
    d = np.zeros(kmax + 1)
    given = np.asarray(corner_derivs, dtype=float)[: kmax + 1]
    d[: len(given)] = given
    poly = np.zeros_like(Y)
    for k in range(1, kmax + 1):
        poly += wall_const ** k * d[k] * Y ** (2 * k) / math.factorial(2 * k)
    return -poly * chi(Y)


@dataclass(frozen=True, eq=False)
class ParabolicSolution:
    x1: np.ndarray
    Y: np.ndarray
    u: np.ndarray        # (n1 + 1, nY)
    dudx1: np.ndarray    # backward difference of the last implicit step
    wall_const: float
    residual: float


def solve_half_strip_parabolic(wall_const: float, init, wall_data, lgrid: LayerGrid, rhs=None,
                               check_corner: bool = True) -> ParabolicSolution:
    """Implicit Euler march of A u_x1 - u_YY = rhs with u(x1, 0) = -wall_data(x1), u(Y_max) = 0.

    ``wall_data`` is the Euler trace along the wall (array on ``lgrid.x1`` or
    a callable); the layer cancels it.  ``substeps`` implicit steps are taken
    between consecutive x1 nodes.
    """
    if wall_const <= 0:
        raise ValueError("wall constant must be positive")
    x1, Y = lgrid.x1, lgrid.Y
    A = float(wall_const)
    g = wall_data if callable(wall_data) else (
        lambda s, _w=np.asarray(wall_data, dtype=float): np.interp(s, x1, _w))
    init = np.asarray(init, dtype=float)
    if check_corner and abs(init[0] + g(0.0)) > 1e-12:
        raise CornerMismatch(f"init(0) = {init[0]:.3g} but -wall_data(0) = {-g(0.0):.3g}")
    nY = len(Y)
    dY = lgrid.dY
    m = lgrid.substeps
    F = None if rhs is None else np.asarray(rhs, dtype=float)

    def rhs_at(s):
        if F is None:
            return np.zeros(nY)
        return np.array([np.interp(s, x1, F[:, j]) for j in range(nY)])

    out = np.zeros((len(x1), nY))
    dudx1 = np.zeros_like(out)
    u = init.copy()
    u[0] = -g(0.0)
    u[-1] = 0.0
    out[0] = u
    lap0 = np.zeros(nY)
    lap0[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / dY ** 2
    dudx1[0] = (lap0 + rhs_at(0.0)) / A
    dudx1[0, 0] = -(g(x1[1] / m) - g(0.0)) / (x1[1] / m)
    dudx1[0, -1] = 0.0

    n_int = nY - 2
    resid = 0.0
    for n in range(len(x1) - 1):
        dx = (x1[n + 1] - x1[n]) / m
        ab = np.zeros((3, n_int))
        ab[0, 1:] = -1.0 / dY ** 2
        ab[1, :] = A / dx + 2.0 / dY ** 2
        ab[2, :-1] = -1.0 / dY ** 2
        s = x1[n]
        for _ in range(m):
            s_new = s + dx
            wall = -g(s_new)
            b = A / dx * u[1:-1] + rhs_at(s_new)[1:-1]
            b[0] += wall / dY ** 2
            new = np.empty_like(u)
            new[0] = wall
            new[-1] = 0.0
            new[1:-1] = solve_banded((1, 1), ab, b)
            prev, u, s = u, new, s_new
        out[n + 1] = u
        dudx1[n + 1] = (u - prev) / dx
        lap = (u[2:] - 2 * u[1:-1] + u[:-2]) / dY ** 2
        resid = max(resid, float(np.max(np.abs(A * dudx1[n + 1, 1:-1] - lap - rhs_at(s)[1:-1]))))
    return ParabolicSolution(x1, Y, out, dudx1, A, resid)


def vertical_velocity_from_continuity(u_p, Y, order: int, x1=None, dudx1=None) -> np.ndarray:
    """Profile vertical velocity from u_x1 + v_Y = 0 (trapezoid quadrature).

    order 1 integrates down from the far field (v(Y_max) = 0); order 2 up from
    the wall (v(0) = 0).  ``dudx1`` overrides the x1-derivative of ``u_p``.
    """
    Y = np.asarray(Y, dtype=float)
    if dudx1 is None:
        u_p = np.asarray(u_p, dtype=float)
        if u_p.ndim == 1 or x1 is None:
            q = np.zeros_like(u_p)
        else:
            q = np.gradient(u_p, x1, axis=0, edge_order=2)
    else:
        q = np.asarray(dudx1, dtype=float)
    if order == 1:
        total = np.trapezoid(q, Y, axis=-1)[..., None]
        return total - cumulative_trapezoid(q, Y, axis=-1, initial=0.0)
    if order == 2:
        return -cumulative_trapezoid(q, Y, axis=-1, initial=0.0)
    raise ValueError("order must be 1 or 2")


@dataclass(frozen=True, eq=False)
class LayerProfiles:
    """Pre-cutoff profiles on the layer grid for one wall and order."""

    order: int
    wall: str
    wall_const: float
    x1: np.ndarray
    Y: np.ndarray
    u: np.ndarray
    u_x1: np.ndarray
    v: np.ndarray
    residual: float

    def derived(self) -> dict:
        """Derivative fields needed by the cutoff assembly (all on the layer grid)."""
        Y, x1 = self.Y, self.x1
        gy = lambda f: np.gradient(f, Y, axis=1, edge_order=2)
        gx = lambda f: np.gradient(f, x1, axis=0, edge_order=2)
        u_Y = gy(self.u)
        q = self.u_x1
        I = cumulative_trapezoid(self.v, x1, axis=0, initial=0.0)
        return {
            "u": self.u, "u_Y": u_Y, "u_YY": gy(u_Y), "q": q, "q_x1": gx(q),
            "v": self.v, "v_x1": gx(self.v), "v_x1x1": gx(gx(self.v)),
            "v_Y": -q, "v_YY": -gy(q), "I": I,
            "I_Y": self.u[:1] - self.u, "I_YY": u_Y[:1] - u_Y,
        }


def _interp_in_Y(field: np.ndarray, Y: np.ndarray, Yq: np.ndarray, far: np.ndarray) -> np.ndarray:
    """Cubic interpolation along Y for every x1 row; ``far`` is used beyond Y_max."""
    inside = Yq <= Y[-1]
    out = np.repeat(far[:, None], len(Yq), axis=1).astype(float)
    if inside.any():
        out[:, inside] = CubicSpline(Y, field, axis=1)(Yq[inside])
    return out


@dataclass(frozen=True, eq=False)
class LayerCorrector:
    order: int
    grid: Grid
    a0: float
    eps: float
    profiles: dict          # wall -> LayerProfiles
    wall_const: dict        # wall -> A
    fields: dict            # physical-grid fields, summed over both walls
    cut_error: np.ndarray
    app_error: np.ndarray

    def __getattr__(self, name):
        f = self.__dict__.get("fields")
        if f is not None and name in f:
            return f[name]
        raise AttributeError(name)

    def wall_v(self, wall: str) -> np.ndarray:
        """Physical vertical velocity on the wall, along x1 nodes."""
        return self.fields["v"][:, 0] if wall == "lower" else self.fields["v"][:, -1]

    def corner_traces(self) -> CornerTraces:
        out = {}
        for wall in WALLS:
            pr = self.profiles[wall]
            sgn = WALL_SIGN[wall]
            v_x1 = np.gradient(pr.v[:, 0], pr.x1, edge_order=2)
            out[wall] = (sgn * pr.v[0, 0], sgn * v_x1[0])
        return CornerTraces(out["lower"][0], out["upper"][0], out["lower"][1], out["upper"][1])


FIELD_NAMES = ("u", "u_x1", "u_x1x1", "u_x2", "u_x2x2", "v", "v_x1", "v_x1x1", "v_x2", "v_x2x2")


def apply_cutoff(pre: dict, params: PhysicalParams, a0: float, grid: Grid, flow: BaseFlow,
                 eps: float | None = None) -> LayerCorrector:
    """Cut the profiles off at wall distance a0 and map them to the physical grid.

    u^cut = chi(t) u - (sqrt(eps)/a0) chi'(t) int_0^x1 v,  v^cut = chi(t) v,  t = sqrt(eps) Y / a0.
    The cut error is A u^cut_x1 - u^cut_YY (the profile equation itself removed)
    and the frozen-coefficient error is (mu(x2) - A) u^cut_x1.
    """
    if not 0.0 < a0 <= 0.5:
        raise ValueError("a0 must lie in (0, 1/2]")
    eps = params.eps if eps is None else eps
    rt = math.sqrt(eps)
    s = rt / a0
    shape = grid.shape
    fields = {k: np.zeros(shape) for k in FIELD_NAMES}
    cut = np.zeros(shape)
    app = np.zeros(shape)
    order = None
    consts = {}
    for wall, pr in pre.items():
        order = pr.order
        A = pr.wall_const
        consts[wall] = A
        sgn = WALL_SIGN[wall]
        cols = np.nonzero(grid.x2 <= 1.0)[0] if wall == "lower" else np.nonzero(grid.x2 >= 1.0)[0]
        dist = grid.x2[cols] if wall == "lower" else 2.0 - grid.x2[cols]
        keep = dist < a0
        cols, dist = cols[keep], dist[keep]
        if len(cols) == 0:
            continue
        Yq = dist / rt
        t = dist / a0
        c0, c1, c2, c3 = (chi(t, k)[None, :] for k in range(4))
        d = pr.derived()
        nrow = len(pr.x1)
        zero = np.zeros(nrow)
        far_v = pr.v[:, -1] if pr.order == 2 else zero
        far = {"v": far_v, "v_x1": d["v_x1"][:, -1] if pr.order == 2 else zero,
               "v_x1x1": d["v_x1x1"][:, -1] if pr.order == 2 else zero,
               "I": d["I"][:, -1] if pr.order == 2 else zero,
               "I_Y": d["I_Y"][:, -1], "I_YY": d["I_YY"][:, -1]}
        m = {k: _interp_in_Y(val, pr.Y, Yq, far.get(k, zero)) for k, val in d.items()}
        u0, uY, uYY, q, qx = m["u"], m["u_Y"], m["u_YY"], m["q"], m["q_x1"]
        v0, vx, vxx, vY, vYY = m["v"], m["v_x1"], m["v_x1x1"], m["v_Y"], m["v_YY"]
        I, IY, IYY = m["I"], m["I_Y"], m["I_YY"]

        u = c0 * u0 - s * c1 * I
        u_x1 = c0 * q - s * c1 * v0
        u_x1x1 = c0 * qx - s * c1 * vx
        u_Y = s * c1 * u0 + c0 * uY - s * s * c2 * I - s * c1 * IY
        u_YY = (s * s * c2 * u0 + 2 * s * c1 * uY + c0 * uYY
                - s ** 3 * c3 * I - 2 * s * s * c2 * IY - s * c1 * IYY)
        v = c0 * v0
        v_Y = s * c1 * v0 + c0 * vY
        v_YY = s * s * c2 * v0 + 2 * s * c1 * vY + c0 * vYY
        cc = (-s * A * c1 * v0 - s * s * c2 * u0 - 2 * s * c1 * uY
              + s ** 3 * c3 * I + 2 * s * s * c2 * IY + s * c1 * IYY)
        ca = (flow.mu(grid.x2[cols])[None, :] - A) * u_x1

        fields["u"][:, cols] += u
        fields["u_x1"][:, cols] += u_x1
        fields["u_x1x1"][:, cols] += u_x1x1
        fields["u_x2"][:, cols] += sgn * u_Y / rt
        fields["u_x2x2"][:, cols] += u_YY / eps
        fields["v"][:, cols] += sgn * v
        fields["v_x1"][:, cols] += sgn * c0 * vx
        fields["v_x1x1"][:, cols] += sgn * c0 * vxx
        fields["v_x2"][:, cols] += v_Y / rt
        fields["v_x2x2"][:, cols] += sgn * v_YY / eps
        cut[:, cols] += cc
        app[:, cols] += ca
    return LayerCorrector(order, grid, a0, eps, dict(pre), consts, fields, cut, app)


def build_layer_profiles(order: int, wall: str, euler: EulerCorrector, flow: BaseFlow,
                         Y_max: float = 12.0, dY: float = 0.02, substeps: int = 8) -> LayerProfiles:
    lgrid = make_layer_grid(euler.grid.x1, Y_max, dY, wall, substeps)
    A = float(flow.mu(0.0 if wall == "lower" else 2.0))
    derivs = euler.corner_derivs.get(wall, np.zeros(5))
    init = layer_initial_polynomial(order, derivs, A, lgrid.Y)
    trace = euler.wall_trace(wall, "u")
    sol = solve_half_strip_parabolic(A, init, trace, lgrid, check_corner=True)
    v = vertical_velocity_from_continuity(sol.u, lgrid.Y, order, dudx1=sol.dudx1)
    return LayerProfiles(order, wall, A, lgrid.x1, lgrid.Y, sol.u, sol.dudx1, v, sol.residual)


def build_layer_corrector(order: int, euler: EulerCorrector, flow: BaseFlow, params: PhysicalParams,
                          a0: float = 0.4, Y_max: float = 12.0, dY: float = 0.02,
                          substeps: int = 8) -> LayerCorrector:
    pre = {w: build_layer_profiles(order, w, euler, flow, Y_max, dY, substeps) for w in WALLS}
    return apply_cutoff(pre, params, a0, euler.grid, flow)


def weighted_decay_norms(u, Y, m: float = 0, j: int = 0, p: float = 2.0, x1=None) -> dict:
    """sup and L^p of (1 + Y)^m w(Y) d^j u / dY^j over the layer grid."""
    Y = np.asarray(Y, dtype=float)
    f = np.asarray(u, dtype=float)
    for _ in range(j):
        f = np.gradient(f, Y, axis=-1, edge_order=2)
    g = (1.0 + Y) ** m * decay_weight(Y) * f
    sup = float(np.max(np.abs(g))) if g.size else 0.0
    wy = _trapezoid_weights(Y)
    if f.ndim == 2 and x1 is not None:
        wx = _trapezoid_weights(np.asarray(x1, dtype=float))
        lp = float(np.sum(wx[:, None] * wy[None, :] * np.abs(g) ** p) ** (1.0 / p))
    else:
        lp = float(np.max(np.sum(wy * np.abs(np.atleast_2d(g)) ** p, axis=-1)) ** (1.0 / p))
    return {"sup": sup, "lp": lp}


def dump_profiles_csv(corrector: LayerCorrector, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["wall", "order", "x1", "Y", "u_p", "v_p"])
        for wall, pr in corrector.profiles.items():
            for i in range(len(pr.x1)):
                for j in range(0, len(pr.Y)):
                    w.writerow([wall, pr.order, repr(float(pr.x1[i])), repr(float(pr.Y[j])),
                                repr(float(pr.u[i, j])), repr(float(pr.v[i, j]))])
