"""Inviscid correctors: the linear hyperbolic system A U_x1 + B U_x2 + D U = F.

U = (u, v, rho).  With Delta = mu^2 - c^2 the coefficient matrices are

    A = [[1, 0, mu], [mu, 0, c^2], [0, mu, 0]],   B = [[0, 1, 0], [0, 0, 0], [0, 0, c^2]],
    D has the single entry D[1, 1] = mu',

so A^-1 B has eigenvalues 0 and +-c / sqrt(Delta).  x1 is time-like: all three
components are prescribed at x1 = 0 and v at each wall.  The march is explicit
first-order upwinding in characteristic variables.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .domain import BaseFlow, Grid, PhysicalParams, chi
from .errors import CFLViolation, CharacteristicsCross, CompatibilityViolation, SubsonicPoint

log = logging.getLogger(__name__)

CFL = 0.9
WALLS = ("lower", "upper")
WALL_X2 = {"lower": 0.0, "upper": 2.0}


def eigenvalues(mu_val: float, c: float) -> tuple[float, float, float]:
    delta = mu_val * mu_val - c * c
    if delta <= 0:
        raise SubsonicPoint(f"mu = {mu_val} is not supersonic for c = {c}", margin=delta)
    lam = c / math.sqrt(delta)
    return 0.0, lam, -lam


def coefficient_matrices(mu_val: float, dmu: float, c: float):
    A = np.array([[1.0, 0.0, mu_val], [mu_val, 0.0, c * c], [0.0, mu_val, 0.0]])
    B = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, c * c]])
    D = np.zeros((3, 3))
    D[1, 1] = dmu
    return A, B, D


# ---------------------------------------------------------------------------
# truncated Taylor series, used for exact corner traces

class Jet:
    """Taylor coefficients of a function about a wall point (index = power)."""

    __slots__ = ("c",)

    def __init__(self, coeffs):
        self.c = np.asarray(coeffs, dtype=float)

    @classmethod
    def from_derivatives(cls, derivs: Sequence[float]) -> "Jet":
        return cls([d / math.factorial(k) for k, d in enumerate(derivs)])

    @classmethod
    def const(cls, value: float, order: int) -> "Jet":
        c = np.zeros(order + 1)
        c[0] = value
        return cls(c)

    def _lift(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.const(float(other), len(self.c) - 1)

    def __add__(self, other):
        o = self._lift(other)
        n = min(len(self.c), len(o.c))
        return Jet(self.c[:n] + o.c[:n])

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c * float(other))
        n = min(len(self.c), len(other.c))
        return Jet(np.convolve(self.c[:n], other.c[:n])[:n])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c / float(other))
        n = min(len(self.c), len(other.c))
        a, b = self.c[:n], other.c[:n]
        q = np.zeros(n)
        for k in range(n):
            q[k] = (a[k] - np.dot(q[:k], b[k:0:-1])) / b[0]
        return Jet(q)

    def deriv(self) -> "Jet":
        k = np.arange(1, len(self.c))
        return Jet(self.c[1:] * k)

    def derivative_value(self, k: int) -> float:
        return float(self.c[k] * math.factorial(k))

    @property
    def value(self) -> float:
        return float(self.c[0])


def _apply_Ainv(mu, c, y1, y2, y3):
    delta = mu * mu - c * c
    return (mu * y2 - c * c * y1) / delta, y3 / mu, (mu * y1 - y2) / delta


def corner_x1_derivatives(flow: BaseFlow, c: float, x2_wall: float, inflow: Sequence[Jet],
                          forcing: Sequence[Jet] | None, kmax: int) -> np.ndarray:
    """Exact d^k U / dx1^k at (0, wall), k = 0..kmax, from the system restricted to x1 = 0.

    Returns an array of shape (kmax + 1, 3).  Each recursion step costs one
    order of the jets, so jets must carry at least kmax coefficients.
    """
    mu = Jet.from_derivatives(flow.derivatives_at(x2_wall))
    dmu = mu.deriv()
    U = list(inflow)
    out = [[u.value for u in U]]
    for k in range(kmax):
        f = forcing if (k == 0 and forcing is not None) else (0.0, 0.0, 0.0)
        y1 = f[0] - U[1].deriv()
        y2 = f[1] - dmu * U[1]
        y3 = f[2] - (c * c) * U[2].deriv()
        U = list(_apply_Ainv(mu, c, y1, y2, y3))
        out.append([u.value for u in U])
    return np.array(out)


# ---------------------------------------------------------------------------
# characteristics

def _char_speed(i: int, y, flow: BaseFlow, c: float):
    if i == 1:
        return 0.0 * y
    m = flow.mu(y)
    lam = c / np.sqrt(m * m - c * c)
    return lam if i == 2 else -lam


def trace_characteristic(i: int, y0: float, flow: BaseFlow, params: PhysicalParams,
                         x1: np.ndarray | None = None, substeps: int = 4) -> np.ndarray:
    """RK4 solution of dy/dx1 = lambda_i(y), sampled on ``x1`` and clamped to [0, 2]."""
    x1 = np.linspace(0.0, params.L, 65) if x1 is None else x1
    return _trace(i, y0, flow, params.c, np.asarray(x1, dtype=float), substeps)


def _trace(i: int, y0: float, flow: BaseFlow, c: float, x1: np.ndarray, substeps: int) -> np.ndarray:
    if i not in (1, 2, 3):
        raise ValueError("characteristic index must be 1, 2 or 3")
    if not 0.0 <= y0 <= 2.0:
        raise ValueError("y0 must lie in [0, 2]")
    y = np.empty_like(x1)
    y[0] = y0
    cur = float(y0)
    for n in range(len(x1) - 1):
        h = (x1[n + 1] - x1[n]) / substeps
        for _ in range(substeps):
            if i != 1 and (cur >= 2.0 or cur <= 0.0) and cur != y0:
                break

            def f(t):
                return float(_char_speed(i, min(max(t, 0.0), 2.0), flow, c))

            k1 = f(cur)
            k2 = f(cur + 0.5 * h * k1)
            k3 = f(cur + 0.5 * h * k2)
            k4 = f(cur + h * k3)
            cur = min(max(cur + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0, 0.0), 2.0)
        y[n + 1] = cur
    return y


# ---------------------------------------------------------------------------
# system description

@dataclass(frozen=True, eq=False)
class InflowData:
    """Traces at x1 = 0 on the x2 nodes, with optional wall jets for corner traces."""

    u: np.ndarray
    v: np.ndarray
    rho: np.ndarray
    jets: dict = field(default_factory=dict)

    @classmethod
    def zero(cls, n: int, order: int = 6) -> "InflowData":
        z = np.zeros(n)
        jz = tuple(Jet.const(0.0, order) for _ in range(3))
        return cls(z, z.copy(), z.copy(), {"lower": jz, "upper": jz})


@dataclass(frozen=True, eq=False)
class HyperbolicSystem:
    flow: BaseFlow
    c: float
    inflow: InflowData
    forcing: Callable[[float, np.ndarray], np.ndarray] | None = None
    wall_lower: Callable[[float], float] | None = None
    wall_upper: Callable[[float], float] | None = None
    forcing_jets: dict = field(default_factory=dict)
    order: int = 1
    kmax: int = 4

    def forcing_at(self, x1: float, x2: np.ndarray) -> np.ndarray:
        if self.forcing is None:
            return np.zeros((3, len(x2)))
        return np.asarray(self.forcing(x1, x2), dtype=float)

    def wall_value(self, wall: str, x1: float) -> float:
        fn = self.wall_lower if wall == "lower" else self.wall_upper
        return 0.0 if fn is None else float(fn(x1))


def first_corrector_system(flow: BaseFlow, params: PhysicalParams, n2: int) -> HyperbolicSystem:
    """Order-one corrector: forcing (0, mu'', 0), zero inflow, v = 0 at the walls."""
    jets = {}
    for wall in WALLS:
        d = flow.derivatives_at(WALL_X2[wall])
        ddmu = Jet.from_derivatives(d[2:])
        jets[wall] = (Jet.const(0.0, len(ddmu.c) - 1), ddmu, Jet.const(0.0, len(ddmu.c) - 1))

    def forcing(x1, x2):
        out = np.zeros((3, len(x2)))
        out[1] = flow.mu(x2, 2)
        return out

    return HyperbolicSystem(flow, params.c, InflowData.zero(n2 + 1), forcing,
                            forcing_jets=jets, order=1, kmax=4)


def second_corrector_system(flow: BaseFlow, params: PhysicalParams, inflow: InflowData,
                            x1_nodes: np.ndarray, wall_v_lower: np.ndarray,
                            wall_v_upper: np.ndarray) -> HyperbolicSystem:
    """Order-3/2 corrector: no forcing, inflow (0, v0, rho0), tabulated wall v traces."""
    lo = np.asarray(wall_v_lower, dtype=float)
    up = np.asarray(wall_v_upper, dtype=float)
    return HyperbolicSystem(flow, params.c, inflow, None,
                            wall_lower=lambda s: np.interp(s, x1_nodes, lo),
                            wall_upper=lambda s: np.interp(s, x1_nodes, up),
                            order=2, kmax=2)


# ---------------------------------------------------------------------------
# solver

@dataclass(frozen=True, eq=False)
class EulerCorrector:
    order: int
    grid: Grid
    u: np.ndarray
    v: np.ndarray
    rho: np.ndarray
    lower_curve: np.ndarray
    upper_curve: np.ndarray
    corner_derivs: dict
    compatibility: dict
    residual_l1: float
    substeps: int

    @property
    def partition(self) -> np.ndarray:
        return partition_domain(self)

    def wall_trace(self, wall: str, name: str = "u") -> np.ndarray:
        f = getattr(self, name)
        return f[:, 0] if wall == "lower" else f[:, -1]


def _eigensystem(mu: np.ndarray, c: float):
    delta = mu * mu - c * c
    lam = c / np.sqrt(delta)
    n = len(mu)
    R = np.zeros((n, 3, 3))
    R[:, 0, 0] = 1.0
    for col, sgn in ((1, 1.0), (2, -1.0)):
        lk = sgn * lam
        R[:, 0, col] = -c * c / (delta * lk)
        R[:, 1, col] = 1.0
        R[:, 2, col] = lk * mu / (c * c)
    Rinv = np.linalg.inv(R)
    Mp = lam[:, None, None] * R[:, :, 1:2] @ Rinv[:, 1:2, :]
    Mm = -lam[:, None, None] * R[:, :, 2:3] @ Rinv[:, 2:3, :]
    return lam, Rinv, Mp, Mm


def _source(U: np.ndarray, F: np.ndarray, mu: np.ndarray, dmu: np.ndarray, c: float) -> np.ndarray:
    """A^-1 (F - D U)."""
    y1 = F[0]
    y2 = F[1] - dmu * U[1]
    y3 = F[2]
    return np.array(_apply_Ainv(mu, c, y1, y2, y3))


def solve_hyperbolic(sys: HyperbolicSystem, grid: Grid, substeps: int | None = None,
                     strict: bool = True) -> EulerCorrector:
    c = sys.c
    x2 = grid.x2
    mu = sys.flow.mu(x2)
    if np.min(mu * mu - c * c) <= 0:
        j = int(np.argmin(mu * mu - c * c))
        raise SubsonicPoint("hyperbolic system needs mu^2 > c^2", x2=float(x2[j]))
    dmu = sys.flow.mu(x2, 1)
    lam, Rinv, Mp, Mm = _eigensystem(mu, c)
    h = np.diff(x2)
    dx_grid = float(np.max(np.diff(grid.x1)))
    dx_cfl = CFL * float(h.min()) / float(lam.max())
    needed = max(1, math.ceil(dx_grid / dx_cfl - 1e-12))
    if substeps is None:
        substeps = needed
    elif dx_grid / substeps > dx_cfl * (1 + 1e-12):
        raise CFLViolation(f"x1 step {dx_grid / substeps:.3g} exceeds CFL bound {dx_cfl:.3g}")

    compat = check_corner_compatibility(sys, grid)
    if strict and compat["violations"]:
        raise CompatibilityViolation("; ".join(compat["violations"]))
    for msg in compat["warnings"]:
        log.warning(msg)

    # wall projection: keep outgoing and zero-speed characteristic values, set v
    P_lo = np.array([Rinv[0, 0], Rinv[0, 2], [0.0, 1.0, 0.0]])
    P_up = np.array([Rinv[-1, 0], Rinv[-1, 1], [0.0, 1.0, 0.0]])
    P_lo_inv = np.linalg.inv(P_lo)
    P_up_inv = np.linalg.inv(P_up)

    n1 = grid.n1
    out = np.zeros((3, n1 + 1, len(x2)))
    U = np.array([sys.inflow.u, sys.inflow.v, sys.inflow.rho], dtype=float)
    out[:, 0] = U
    for i in range(n1):
        dx = (grid.x1[i + 1] - grid.x1[i]) / substeps
        s = grid.x1[i]
        for _ in range(substeps):
            F = sys.forcing_at(s, x2)
            S = _source(U, F, mu, dmu, c)
            Dm = np.zeros_like(U)
            Dp = np.zeros_like(U)
            Dm[:, 1:] = np.diff(U, axis=1) / h
            Dp[:, :-1] = Dm[:, 1:]
            flux = np.einsum("jab,bj->aj", Mp, Dm) + np.einsum("jab,bj->aj", Mm, Dp)
            new = U + dx * (S - flux)
            lo = U[:, 0] + dx * (S[:, 0] - Mm[0] @ Dp[:, 0])
            up = U[:, -1] + dx * (S[:, -1] - Mp[-1] @ Dm[:, -1])
            s += dx
            new[:, 0] = P_lo_inv @ np.array([Rinv[0, 0] @ lo, Rinv[0, 2] @ lo, sys.wall_value("lower", s)])
            new[:, -1] = P_up_inv @ np.array([Rinv[-1, 0] @ up, Rinv[-1, 1] @ up, sys.wall_value("upper", s)])
            new[1, 0] = sys.wall_value("lower", s)
            new[1, -1] = sys.wall_value("upper", s)
            U = new
        out[:, i + 1] = U

    lower = _trace(2, 0.0, sys.flow, c, grid.x1, 4)
    upper = _trace(3, 2.0, sys.flow, c, grid.x1, 4)
    if np.any(lower[1:] >= upper[1:]):
        raise CharacteristicsCross("characteristics from the two walls cross before x1 = L")

    corner = {}
    for wall in WALLS:
        jets = sys.inflow.jets.get(wall)
        if jets is None:
            continue
        fj = sys.forcing_jets.get(wall)
        corner[wall] = corner_x1_derivatives(sys.flow, c, WALL_X2[wall], jets, fj, sys.kmax)[:, 0]

    res = hyperbolic_residual(out[0], out[1], out[2], sys, grid)
    return EulerCorrector(sys.order, grid, out[0], out[1], out[2], lower, upper, corner, compat,
                          res, substeps)


def hyperbolic_residual(u, v, rho, sys: HyperbolicSystem, grid: Grid) -> float:
    """L1 norm over interior nodes of A U_x1 + B U_x2 + D U - F (centred differences)."""
    from .fd import d1, d2

    c = sys.c
    x1, x2 = grid.x1, grid.x2
    mu = sys.flow.mu(x2)[None, :]
    dmu = sys.flow.mu(x2, 1)[None, :]
    F = np.stack([sys.forcing_at(s, x2) for s in x1], axis=1)
    ux, vx, rx = d1(u, grid), d1(v, grid), d1(rho, grid)
    vy, ry = d2(v, grid), d2(rho, grid)
    r1 = ux + vy + mu * rx - F[0]
    r2 = mu * ux + dmu * v + c * c * rx - F[1]
    r3 = mu * vx + c * c * ry - F[2]
    w = grid.weights()[1:-1, 1:-1]
    tot = sum(np.abs(r[1:-1, 1:-1]) for r in (r1, r2, r3))
    return float(np.sum(w * tot))


def check_corner_compatibility(sys: HyperbolicSystem, grid: Grid) -> dict:
    """Zeroth-, first- and second-order corner checks.

    The first two raise (via ``violations``); the second-order mismatch in
    d^2 rho / dx1 dx2 is only a warning.
    """
    c = sys.c
    x2 = grid.x2
    mu = sys.flow.mu(x2)
    dmu = sys.flow.mu(x2, 1)
    U0 = np.array([sys.inflow.u, sys.inflow.v, sys.inflow.rho], dtype=float)
    F0 = sys.forcing_at(0.0, x2)
    dU0 = np.gradient(U0, x2, axis=1, edge_order=2)
    U1 = np.array(_apply_Ainv(mu, c, F0[0] - dU0[1], F0[1] - dmu * U0[1], F0[2] - c * c * dU0[2]))
    dU1 = np.gradient(U1, x2, axis=1, edge_order=2)
    hx = float(grid.x1[1] - grid.x1[0])
    report = {"violations": [], "warnings": [], "levels": {}}
    for wall, j, jn in (("lower", 0, 1), ("upper", -1, -2)):
        g0 = sys.wall_value(wall, 0.0)
        g1 = sys.wall_value(wall, hx)
        g2 = sys.wall_value(wall, 2 * hx)
        m0 = abs(U0[1, j] - g0)
        tol0 = 1e-10 * (1.0 + np.max(np.abs(U0[1])))
        slope_wall = (g1 - g0) / hx
        m1 = abs(U1[1, j] - slope_wall)
        hy = abs(x2[jn] - x2[j])
        rho_fd1 = (U0[2, jn] - U0[2, j]) / (x2[jn] - x2[j])
        trunc = abs(g2 - 2 * g1 + g0) / hx + c * c / abs(mu[j]) * abs(rho_fd1 - dU0[2, j]) + hy * 0.0
        tol1 = 10.0 * trunc + 1e-10
        # along the wall: d/dx1 rho_x2 = (dF3/dx1 - mu g'') / c^2
        F_h = sys.forcing_at(hx, x2)
        wall_side = ((F_h[2, j] - F0[2, j]) / hx - mu[j] * (g2 - 2 * g1 + g0) / hx ** 2) / (c * c)
        m2 = abs(dU1[2, j] - wall_side)
        tol2 = 10.0 * (hy * np.max(np.abs(np.gradient(dU1[2], x2))) + hx) + 1e-8
        report["levels"][wall] = {"zeroth": m0, "first": m1, "second": m2,
                                  "tol_first": tol1, "tol_second": tol2}
        if m0 > tol0:
            report["violations"].append(f"{wall} corner: v mismatch {m0:.3g}")
        if m1 > tol1:
            report["violations"].append(f"{wall} corner: first-order mismatch {m1:.3g} > {tol1:.3g}")
        if m2 > tol2:
            report["warnings"].append(
                f"{wall} corner: second-order compatibility fails (rho_x1x2 mismatch {m2:.3g})")
    return report


def partition_domain(corrector: EulerCorrector) -> np.ndarray:
    """Cell labels 1, 2, 3: below the lower wall characteristic, between, above the upper one."""
    g = corrector.grid
    xc2 = 0.5 * (g.x2[1:] + g.x2[:-1])
    lo = 0.5 * (corrector.lower_curve[1:] + corrector.lower_curve[:-1])
    up = 0.5 * (corrector.upper_curve[1:] + corrector.upper_curve[:-1])
    labels = np.full((g.n1, g.n2), 2, dtype=int)
    labels[xc2[None, :] < lo[:, None]] = 1
    labels[xc2[None, :] > up[:, None]] = 3
    return labels


def node_labels(corrector: EulerCorrector) -> np.ndarray:
    g = corrector.grid
    labels = np.full(g.shape, 2, dtype=int)
    labels[g.x2[None, :] < corrector.lower_curve[:, None]] = 1
    labels[g.x2[None, :] > corrector.upper_curve[:, None]] = 3
    return labels


# ---------------------------------------------------------------------------
# inflow data of the second corrector

@dataclass(frozen=True)
class CornerTraces:
    """Physical first-layer vertical velocity and its x1-derivative at the inflow corners."""

    v_lower: float = 0.0
    v_upper: float = 0.0
    dv_lower: float = 0.0
    dv_upper: float = 0.0


def second_corrector_boundary_data(v_p1, b: float, flow: BaseFlow, params: PhysicalParams,
                                   x2: np.ndarray, jet_order: int = 6) -> InflowData:
    """Inflow (0, v0, rho0) of the second corrector.

    ``v_p1`` is a :class:`CornerTraces` or anything with a ``corner_traces()``
    method.  v0 cancels the layer's wall velocity at the corners and rho0
    restores first-order corner compatibility; both vanish on [b, 2 - b].
    """
    if not 0.0 < b < 1.0:
        raise ValueError("cutoff width b must lie in (0, 1)")
    ct = v_p1.corner_traces() if hasattr(v_p1, "corner_traces") else v_p1
    c2 = params.c ** 2
    x2 = np.asarray(x2, dtype=float)
    mu = flow.mu(x2)
    lower = x2 < 1.0
    dist = np.where(lower, x2, 2.0 - x2)
    cut = chi(dist / b)
    v0 = np.where(lower, -ct.v_lower, -ct.v_upper) * cut
    rho0 = np.where(lower, mu / c2 * ct.dv_lower * x2, -mu / c2 * ct.dv_upper * (2.0 - x2)) * cut
    jets = {}
    # in the local variable t = x2 - wall both branches read (mu / c^2) * dv * t
    lin = Jet([0.0, 1.0] + [0.0] * (jet_order - 1))
    for wall, vv, dv in (("lower", ct.v_lower, ct.dv_lower), ("upper", ct.v_upper, ct.dv_upper)):
        m = Jet.from_derivatives(flow.derivatives_at(WALL_X2[wall]))
        jets[wall] = (Jet.const(0.0, jet_order), Jet.const(-vv, jet_order), m * lin * (dv / c2))
    return InflowData(np.zeros_like(x2), v0, rho0, jets)


def dump_csv(corrector: EulerCorrector, path) -> None:
    labels = node_labels(corrector)
    g = corrector.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "u_e", "v_e", "rho_e", "region"])
        for i in range(g.n1 + 1):
            for j in range(g.n2 + 1):
                w.writerow([repr(float(g.x1[i])), repr(float(g.x2[j])), repr(float(corrector.u[i, j])),
                            repr(float(corrector.v[i, j])), repr(float(corrector.rho[i, j])),
                            int(labels[i, j])])
