"""Outer Picard iteration for the remainder and the final norm report.

Unknowns: u^eps = u_s + b + u, v^eps = v_s + b2 + v, rho^eps = rho_s + beta + rho,
where (b1, b2, beta) lift the boundary data so that (u, v) vanish on the
boundary and rho vanishes at inflow.  Writing w = b + (u, v) and
N for the discrete steady operator with the full pressure law, the nonlinear
right-hand side is

    g_r(w, rho_w) = -[N(s + w) - N(s) - L(w, rho_w)],

with L the linear operator of one linear solve (transport along u^eps of
the previous iterate, convection by u_s, Lame, c^2 grad rho).  This is the
term-by-term expansion of the quadratic and pressure-law terms, evaluated
with the same difference quotients as N.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import fd
from .assembly import ApproxSolution, forcing_residuals, steady_operator
from .domain import BoundaryData, Grid, PhysicalParams
from .errors import DensityFloor, NoConvergence
from .linear import LameOperator, LinearProblem, append_ledger, linear_fixed_point, x_norm

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# boundary data and the shift

def approximate_traces(ap: ApproxSolution) -> BoundaryData:
    """Boundary data equal to the traces of the approximate solution."""
    return BoundaryData(ap.grid.x2, ap.u[0].copy(), ap.v[0].copy(), ap.u[-1].copy(),
                        ap.v[-1].copy(), ap.rho[0].copy(), 0.0)


def perturbed_boundary(ap: ApproxSolution, amplitude: float, seed: int = 0, modes: int = 3) -> BoundaryData:
    """Approximate traces plus random sine modes vanishing at both walls.

    Each of the five traces gets its own combination with sup norm equal to
    ``amplitude``; the result is reproducible for a given seed.
    """
    rng = np.random.default_rng(seed)
    x2 = ap.grid.x2
    base = approximate_traces(ap)
    k = np.arange(1, modes + 1)
    basis = np.sin(np.outer(x2, k) * math.pi / 2.0)
    basis[0] = basis[-1] = 0.0

    def bump():
        coef = rng.uniform(-1.0, 1.0, modes) / k
        phi = basis @ coef
        top = np.max(np.abs(phi))
        return amplitude * phi / top if top > 0 else phi

    return BoundaryData(x2, base.u_in + bump(), base.v_in + bump(), base.u_out + bump(),
                        base.v_out + bump(), base.rho_in + bump(), amplitude)


@dataclass(frozen=True, eq=False)
class HomogenizationShift:
    b1: np.ndarray
    b2: np.ndarray
    beta: np.ndarray         # rho_0 - rho_s(0, .) on the grid (constant in x1)
    beta_x2: np.ndarray
    gbar0: np.ndarray
    gbar1: np.ndarray
    gbar2: np.ndarray

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.b1) or np.any(self.b2) or np.any(self.beta))


def homogenize(boundary: BoundaryData, ap: ApproxSolution) -> HomogenizationShift:
    g, params = ap.grid, ap.params
    if not np.array_equal(boundary.x2, g.x2):
        raise ValueError("boundary data must be tabulated on the grid's x2 nodes")
    X1, _ = g.mesh()
    s = X1 / g.L
    b1 = (1 - s) * (boundary.u_in - ap.u[0])[None, :] + s * (boundary.u_out - ap.u[-1])[None, :]
    b2 = (1 - s) * (boundary.v_in - ap.v[0])[None, :] + s * (boundary.v_out - ap.v[-1])[None, :]
    beta1 = boundary.rho_in - ap.rho[0]
    beta = np.broadcast_to(beta1, g.shape).copy()
    beta_x2 = np.broadcast_to(np.gradient(beta1, g.x2, edge_order=2), g.shape).copy()
    lu, lv = fd.lame_apply(b1, b2, g, ap.eps, params.lambda_bulk)
    us = ap.u
    c2 = params.c ** 2
    gbar0 = -fd.divergence(b1, b2, g) - (ap.v + b2) * beta_x2
    gbar1 = -(us * fd.d1(b1, g) + fd.d2(us, g) * b2 + lu)
    gbar2 = -(us * fd.d1(b2, g) + lv + c2 * beta_x2)
    return HomogenizationShift(b1, b2, beta, beta_x2, gbar0, gbar1, gbar2)


# ---------------------------------------------------------------------------
# remainder state and right-hand side

@dataclass(frozen=True, eq=False)
class RemainderState:
    n: int
    u: np.ndarray
    v: np.ndarray
    rho: np.ndarray
    x_norm: float
    rho_w1p: float
    u_w2p: float            # eps ||(u, v)||_{W^{2,p}}
    history: list = field(default_factory=list)


def _w_norms(u, v, rho, grid: Grid, eps: float, p: float) -> tuple:
    lp = lambda f: fd.norm_lp(f, grid, p)
    rho_w1p = (lp(rho) ** p + lp(fd.d1(rho, grid)) ** p + lp(fd.d2(rho, grid)) ** p) ** (1 / p)
    tot = 0.0
    for f in (u, v):
        f1, f2 = fd.d1(f, grid), fd.d2(f, grid)
        parts = (f, f1, f2, fd.d1(f1, grid), fd.d2(f2, grid), fd.d2(f1, grid))
        tot += sum(lp(q) ** p for q in parts)
    return rho_w1p, eps * tot ** (1 / p)


def make_state(n: int, u, v, rho, ap: ApproxSolution, history=None) -> RemainderState:
    g = ap.grid
    r1, w2 = _w_norms(u, v, rho, g, ap.eps, ap.params.p)
    return RemainderState(n, u, v, rho, x_norm(u, v, g, ap.eps), r1, w2, list(history or []))


def pressure_coefficient_defect(rho_eps, params: PhysicalParams) -> np.ndarray:
    """c^2 - P'(rho^eps)."""
    return params.c ** 2 - params.pressure_slope(rho_eps)


def linear_part(w1, w2, rho_w, U, V, ap: ApproxSolution) -> tuple:
    g, params = ap.grid, ap.params
    lu, lv = fd.lame_apply(w1, w2, g, ap.eps, params.lambda_bulk)
    c2 = params.c ** 2
    r1, r2 = fd.d1(rho_w, g), fd.d2(rho_w, g)
    l0 = fd.divergence(w1, w2, g) + U * r1 + V * r2
    l1 = ap.u * fd.d1(w1, g) + fd.d2(ap.u, g) * w2 + lu + c2 * r1
    l2 = ap.u * fd.d1(w2, g) + lv + c2 * r2
    return l0, l1, l2


def nonlinear_rhs(state: RemainderState, ap: ApproxSolution, shift: HomogenizationShift,
                  residual=None) -> dict:
    """g_r at the current iterate, the shift forcing, and the total right-hand side."""
    g, params = ap.grid, ap.params
    for name in ("u", "v", "rho"):
        if not np.all(np.isfinite(getattr(state, name))):
            raise ValueError(f"state field {name} is not finite")
    w1 = shift.b1 + state.u
    w2 = shift.b2 + state.v
    rho_w = shift.beta + state.rho
    rho_eps = ap.rho + rho_w
    if np.min(rho_eps) <= 0:
        raise DensityFloor(f"density reached {float(np.min(rho_eps)):.3e}")
    if np.max(np.abs(rho_w)) > 0.5 * params.rho_star:
        raise DensityFloor(f"density remainder {float(np.max(np.abs(rho_w))):.3e} exceeds rho*/2")
    U, V = ap.u + w1, ap.v + w2
    full = steady_operator(ap.u + w1, ap.v + w2, rho_eps, g, params, ap.eps, pressure="full")
    base = steady_operator(ap.u, ap.v, ap.rho, g, params, ap.eps, pressure="full")
    lin = linear_part(w1, w2, rho_w, U, V, ap)
    gr = tuple(-(f - b - l) for f, b, l in zip(full, base, lin))
    res = residual or forcing_residuals(ap)
    pd1, pd2 = res.pressure_defect
    extra0 = -state.v * shift.beta_x2
    f0 = -res.g0s + gr[0] + shift.gbar0 + extra0
    f1 = -res.g1s - pd1 + gr[1] + shift.gbar1
    f2 = -res.g2s - pd2 + gr[2] + shift.gbar2
    return {"g0r": gr[0], "g1r": gr[1], "g2r": gr[2], "f0": f0, "f1": f1, "f2": f2, "U": U, "V": V}


# ---------------------------------------------------------------------------
# Picard iteration

@dataclass(frozen=True, eq=False)
class PicardResult:
    state: RemainderState
    shift: HomogenizationShift
    deltas: list
    ratios: list
    states: list            # X-norm, rho L2, W proxies per iterate
    linear_iterations: list
    energy: list            # energy report of every linear solve
    last_problem: LinearProblem | None = None
    last_solution: object = None


def picard_iterate(ap: ApproxSolution, boundary: BoundaryData | None = None, tol: float = 1e-9,
                   max_outer: int = 50, delta: float | None = None, method: str = "gmres",
                   ledger=None, residual=None) -> PicardResult:
    """(u, rho)^{n+1} = LinearSolve(rhs(u^n, rho^n)) from zero; stops on the X + L2 difference."""
    g = ap.grid
    boundary = boundary or approximate_traces(ap)
    shift = homogenize(boundary, ap)
    res = residual or forcing_residuals(ap)
    op = LameOperator(g, ap.eps, ap.params.lambda_bulk)
    zero = np.zeros(g.shape)
    state = make_state(0, zero, zero.copy(), zero.copy(), ap)
    deltas, ratios, rows, lin_its, energies = [], [], [], [], []
    for n in range(max_outer):
        rhs = nonlinear_rhs(state, ap, shift, res)
        pb = LinearProblem.from_fields(g, ap.params, ap.u, U=rhs["U"], V=rhs["V"], f0=rhs["f0"],
                                       f1=rhs["f1"], f2=rhs["f2"], delta=delta, eps=ap.eps)
        sol = linear_fixed_point(pb, method=method, operator=op)
        d = (x_norm(sol.u - state.u, sol.v - state.v, g, ap.eps)
             + fd.norm_lp(sol.rho - state.rho, g, 2.0))
        deltas.append(d)
        if len(deltas) > 1:
            ratios.append(d / deltas[-2] if deltas[-2] > 0 else 0.0)
        lin_its.append(sol.iterations)
        energies.append(sol.energy)
        state = make_state(n + 1, sol.u, sol.v, sol.rho, ap, deltas)
        row = {"n": n + 1, "delta": d, "x_norm": state.x_norm, "rho_l2": fd.norm_lp(sol.rho, g, 2.0),
               "rho_w1p": state.rho_w1p, "u_w2p": state.u_w2p, "linear_iterations": sol.iterations,
               "q": ratios[-1] if ratios else None, "eps": ap.eps}
        rows.append(row)
        if ledger is not None:
            append_ledger(ledger, row)
        if not np.isfinite(d):
            raise NoConvergence("outer iteration produced non-finite values", deltas)
        if d <= tol:
            return PicardResult(state, shift, deltas, ratios, rows, lin_its, energies, pb, sol)
    raise NoConvergence(f"outer iteration not converged after {max_outer} steps "
                        f"(last difference {deltas[-1]:.3e})", deltas)


# ---------------------------------------------------------------------------
# reconstruction and report

def reconstruct(ap: ApproxSolution, result: PicardResult) -> tuple:
    sh, st = result.shift, result.state
    return ap.u + sh.b1 + st.u, ap.v + sh.b2 + st.v, ap.rho + sh.beta + st.rho


def ns_residual(u, v, rho, grid: Grid, params: PhysicalParams, eps: float | None = None) -> dict:
    """Discrete steady compressible system with the full pressure law, interior nodes."""
    n0, n1, n2 = steady_operator(u, v, rho, grid, params, eps, pressure="full")
    inner = np.zeros(grid.shape, dtype=bool)
    inner[1:-1, 1:-1] = True
    l2 = lambda f: fd.norm_lp(f, grid, 2.0, inner)
    return {"mass_l2": l2(n0), "momentum_l2": math.hypot(l2(n1), l2(n2)),
            "total_l2": math.sqrt(l2(n0) ** 2 + l2(n1) ** 2 + l2(n2) ** 2)}


def transport_consistency(ap: ApproxSolution, result: PicardResult) -> float:
    """L2 size of the difference-quotient mass residual of the final linear step.

    The density comes from streamline quadrature, so the centred-difference
    mass equation holds only up to this truncation error.
    """
    g = ap.grid
    st, sh = result.state, result.shift
    rhs = nonlinear_rhs(st, ap, sh)
    l0 = fd.divergence(st.u, st.v, g) + rhs["U"] * fd.d1(st.rho, g) + rhs["V"] * fd.d2(st.rho, g)
    inner = np.zeros(g.shape, dtype=bool)
    inner[1:-1, 1:-1] = True
    return fd.norm_lp(l0 - rhs["f0"], g, 2.0, inner)


FINAL_COLUMNS = ("eps", "dev_u", "dev_v", "dev_rho", "dev_total", "grad_dev", "rem_l2", "rem_grad",
                 "rem_rho_l2", "rem_rho_w1p", "rem_u_w2p", "residual_l2", "outer_iterations")


def final_report(ap: ApproxSolution, result: PicardResult, ledger=None) -> dict:
    g, params = ap.grid, ap.params
    u, v, rho = reconstruct(ap, result)
    st = result.state
    dev_u = fd.norm_inf(u - ap.mu)
    dev_v = fd.norm_inf(v)
    dev_rho = fd.norm_inf(rho - params.rho_star)
    grad = max(fd.norm_inf(fd.d1(u, g)), fd.norm_inf(fd.d2(u, g) - ap.dmu),
               fd.norm_inf(fd.d1(v, g)), fd.norm_inf(fd.d2(v, g)))
    l2 = lambda f: fd.norm_lp(f, g, 2.0)
    res = ns_residual(u, v, rho, g, params, ap.eps)
    rep = {"eps": ap.eps, "dev_u": dev_u, "dev_v": dev_v, "dev_rho": dev_rho,
           "dev_total": dev_u + dev_v + dev_rho, "grad_dev": grad,
           "rem_l2": math.hypot(l2(st.u), l2(st.v)),
           "rem_grad": math.sqrt(ap.eps * (fd.grad_l2_sq(st.u, g) + fd.grad_l2_sq(st.v, g))),
           "rem_rho_l2": l2(st.rho), "rem_rho_w1p": st.rho_w1p, "rem_u_w2p": st.u_w2p,
           "residual_l2": res["total_l2"], "outer_iterations": st.n}
    if ledger is not None:
        append_ledger(ledger, dict(rep, kind="final"))
    return rep
