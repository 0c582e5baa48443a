"""One linear solve of the remainder system.

    div u + U rho_x1 + V rho_x2 = f0
    u_s u_x1 + u_s,x2 v - eps Lap u - eps lam d1 div u + c^2 rho_x1 = f1
    u_s v_x1            - eps Lap v - eps lam d2 div u + c^2 rho_x2 = f2
    u = v = 0 on the boundary, rho = 0 at x1 = 0.

rho is obtained by integrating along the streamlines of (U, V), which are
straight lines in the label coordinate.  The velocity solves a Lame problem
with convection and the pressure gradient moved to the right side.  The
coupling is a fixed point u = T(u); it is solved either by damped Picard or by
GMRES on u - T(u) = 0 with the Lame operator as preconditioner.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import cumulative_trapezoid
from scipy.sparse.linalg import LinearOperator, cg, gmres, splu

from . import fd
from .domain import Grid, PhysicalParams
from .errors import NoConvergence, SolverDiverged, StreamlineCrossing

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# streamline straightening

def _interp_weights(xp: np.ndarray, xq: np.ndarray):
    """Index/weight pair for linear interpolation of data on ``xp`` at ``xq``."""
    k = np.clip(np.searchsorted(xp, xq, side="right") - 1, 0, len(xp) - 2)
    w = (xq - xp[k]) / (xp[k + 1] - xp[k])
    return k, np.clip(w, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class CoordinateMap:
    """Streamline positions Z[i, j] = x2 at x1_i of the streamline leaving (0, x2_j)."""

    grid: Grid
    Z: np.ndarray
    label: np.ndarray          # forward map: label of the streamline through each grid node
    jacobian: np.ndarray       # d label / d x2 on the grid

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.Z, np.broadcast_to(self.grid.x2, self.Z.shape)))

    def jacobian_deviation(self) -> float:
        return float(np.max(np.abs(self.jacobian - 1.0)))

    def to_labels(self, f: np.ndarray) -> np.ndarray:
        """Sample a grid field along the streamlines (rows: x1 nodes, columns: labels)."""
        if self.is_identity:
            return np.array(f, dtype=float)
        k, w = self._fwd
        rows = np.arange(f.shape[0])[:, None]
        return f[rows, k] * (1 - w) + f[rows, k + 1] * w

    def to_grid(self, f: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`to_labels`: values known on streamlines back to grid nodes."""
        if self.is_identity:
            return np.array(f, dtype=float)
        k, w = self._bwd
        rows = np.arange(f.shape[0])[:, None]
        return f[rows, k] * (1 - w) + f[rows, k + 1] * w

    def __post_init__(self):
        x2 = self.grid.x2
        fwd = [_interp_weights(x2, self.Z[i]) for i in range(self.Z.shape[0])]
        bwd = [_interp_weights(self.Z[i], x2) for i in range(self.Z.shape[0])]
        object.__setattr__(self, "_fwd", (np.array([a for a, _ in fwd]), np.array([b for _, b in fwd])))
        object.__setattr__(self, "_bwd", (np.array([a for a, _ in bwd]), np.array([b for _, b in bwd])))


def straighten_streamlines(u_eps: np.ndarray, v_eps: np.ndarray, grid: Grid) -> CoordinateMap:
    """RK4 integration of dx2/dx1 = V/U from every inflow node; walls stay fixed."""
    x1, x2 = grid.x1, grid.x2
    if np.min(u_eps) <= 0:
        raise ValueError("transport speed must stay positive")
    slope = v_eps / u_eps
    if not np.any(slope):
        Z = np.broadcast_to(x2, grid.shape).copy()
        return CoordinateMap(grid, Z, Z.copy(), np.ones(grid.shape))

    def f(i_lo: int, theta: float, y: np.ndarray) -> np.ndarray:
        a = np.interp(y, x2, slope[i_lo])
        if theta == 0.0:
            return a
        b = np.interp(y, x2, slope[i_lo + 1])
        return (1 - theta) * a + theta * b

    Z = np.empty(grid.shape)
    Z[0] = x2
    for i in range(grid.n1):
        h = x1[i + 1] - x1[i]
        y = Z[i]
        k1 = f(i, 0.0, y)
        k2 = f(i, 0.5, y + 0.5 * h * k1)
        k3 = f(i, 0.5, y + 0.5 * h * k2)
        k4 = f(i, 1.0, y + h * k3)
        Z[i + 1] = np.clip(y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0, 0.0, 2.0)
        Z[i + 1, 0], Z[i + 1, -1] = 0.0, 2.0
    if np.any(np.diff(Z, axis=1) <= 0):
        i = int(np.argmax(np.any(np.diff(Z, axis=1) <= 0, axis=1)))
        raise StreamlineCrossing(f"streamlines cross before x1 = {x1[i]:.4g}")
    label = np.array([np.interp(x2, Z[i], x2) for i in range(grid.n1 + 1)])
    jac = np.gradient(label, x2, axis=1, edge_order=2)
    return CoordinateMap(grid, Z, label, jac)


# ---------------------------------------------------------------------------
# mollification

def _bump(r: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def _mollifier_matrix(x: np.ndarray, delta: float) -> np.ndarray:
    """Row-normalised bump convolution with mirror images at both ends."""
    w = np.empty_like(x)
    w[1:-1] = 0.5 * (x[2:] - x[:-2])
    w[0], w[-1] = 0.5 * (x[1] - x[0]), 0.5 * (x[-1] - x[-2])
    a, b = x[0], x[-1]
    K = np.zeros((len(x), len(x)))
    for image in (x, 2 * a - x, 2 * b - x):
        K += _bump((x[:, None] - image[None, :]) / delta) * w[None, :]
    return K / K.sum(axis=1, keepdims=True)


def mollify(field: np.ndarray, grid: Grid, delta: float) -> np.ndarray:
    if delta <= 0:
        return field
    K1 = _mollifier_matrix(grid.x1, delta)
    K2 = _mollifier_matrix(grid.x2, delta)
    return K1 @ field @ K2.T


# ---------------------------------------------------------------------------
# transport

def solve_transport(u_s_field: np.ndarray, f0: np.ndarray, div_u: np.ndarray, x1: np.ndarray) -> np.ndarray:
    """rho(x1, .) = int_0^x1 (f0 - div u) / u_s ds along rows (straightened coordinates)."""
    u_s_field = np.asarray(u_s_field, dtype=float)
    if np.min(u_s_field) <= 0:
        raise ValueError("transport speed must stay positive")
    q = (np.asarray(f0, dtype=float) - np.asarray(div_u, dtype=float)) / u_s_field
    return cumulative_trapezoid(q, x1, axis=0, initial=0.0)


# ---------------------------------------------------------------------------
# Lame operator

def _second_1d(x: np.ndarray) -> sp.csr_matrix:
    n = len(x)
    h = np.diff(x)
    rows, cols, vals = [], [], []
    for i in range(1, n - 1):
        m = 0.5 * (h[i - 1] + h[i])
        rows += [i, i, i]
        cols += [i - 1, i, i + 1]
        vals += [1 / (h[i - 1] * m), -(1 / h[i - 1] + 1 / h[i]) / m, 1 / (h[i] * m)]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _wide_first_1d(x: np.ndarray) -> sp.csr_matrix:
    n = len(x)
    rows, cols, vals = [], [], []
    for i in range(1, n - 1):
        d = x[i + 1] - x[i - 1]
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-1 / d, 1 / d]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


class LameOperator:
    """-eps (Lap + lam grad div) on interior nodes with zero Dirichlet data.

    Rows are scaled by the dual-cell area, which makes the matrix symmetric;
    the unscaled operator matches :func:`fd.lame_apply` node by node.
    """

    def __init__(self, grid: Grid, eps: float, lam: float):
        self.grid, self.eps, self.lam = grid, eps, lam
        n1, n2 = grid.n1 + 1, grid.n2 + 1
        I1, I2 = sp.identity(n1, format="csr"), sp.identity(n2, format="csr")
        D11 = sp.kron(_second_1d(grid.x1), I2)
        D22 = sp.kron(I1, _second_1d(grid.x2))
        D12 = sp.kron(_wide_first_1d(grid.x1), _wide_first_1d(grid.x2))
        inner = np.zeros((n1, n2), dtype=bool)
        inner[1:-1, 1:-1] = True
        self.inner = inner
        idx = np.flatnonzero(inner.ravel())
        sel = lambda M: M.tocsr()[idx][:, idx]
        A = -eps * sp.bmat([[sel((1 + lam) * D11 + D22), sel(lam * D12)],
                            [sel(lam * D12), sel(D11 + (1 + lam) * D22)]], format="csr")
        m1 = np.gradient(grid.x1)
        m2 = np.gradient(grid.x2)
        area = np.outer(m1, m2)[inner]
        self.area = np.concatenate([area, area])
        self.A = A
        self.S = (sp.diags(self.area) @ A).tocsr()
        self.S = 0.5 * (self.S + self.S.T)
        self._lu = None
        self.size = A.shape[0]

    def pack(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.concatenate([u[self.inner], v[self.inner]])

    def unpack(self, x: np.ndarray) -> tuple:
        m = self.size // 2
        u = np.zeros(self.grid.shape)
        v = np.zeros(self.grid.shape)
        u[self.inner] = x[:m]
        v[self.inner] = x[m:]
        return u, v

    def quadratic_form(self, u: np.ndarray, v: np.ndarray) -> float:
        x = self.pack(u, v)
        return float(x @ (self.S @ x))

    def solve(self, r1: np.ndarray, r2: np.ndarray, method: str = "direct", rtol: float = 1e-12,
              maxiter: int | None = None) -> tuple:
        b = self.area * self.pack(r1, r2)
        if not np.any(b):
            return np.zeros(self.grid.shape), np.zeros(self.grid.shape)
        if method == "direct":
            if self._lu is None:
                self._lu = splu(self.S.tocsc())
            x = self._lu.solve(b)
        elif method == "cg":
            diag = self.S.diagonal()
            M = sp.diags(1.0 / diag)
            x, info = cg(self.S, b, rtol=rtol, atol=0.0, maxiter=maxiter or 20 * self.size, M=M)
            if info != 0:
                res = float(np.linalg.norm(self.S @ x - b) / np.linalg.norm(b))
                raise SolverDiverged(f"CG stopped after its iteration cap (relative residual {res:.2e})", res)
        else:
            raise ValueError(f"unknown Lame method {method!r}")
        return self.unpack(x)


@dataclass(frozen=True)
class LameResult:
    u: np.ndarray
    v: np.ndarray
    energy: float          # eps (|grad u|^2 + lam (div u)^2) in its discrete quadratic form
    work: float            # int rhs . u with the same cell areas

    @property
    def identity_gap(self) -> float:
        scale = max(abs(self.energy), abs(self.work), 1e-300)
        return abs(self.energy - self.work) / scale


def solve_lame(rhs: tuple, grid: Grid, params: PhysicalParams, eps: float | None = None,
               method: str = "cg", rtol: float = 1e-12, maxiter: int | None = None,
               operator: LameOperator | None = None) -> LameResult:
    eps = params.eps if eps is None else eps
    op = operator or LameOperator(grid, eps, params.lambda_bulk)
    r1, r2 = rhs
    u, v = op.solve(np.asarray(r1, dtype=float), np.asarray(r2, dtype=float), method, rtol, maxiter)
    energy = op.quadratic_form(u, v)
    work = float(op.area @ (op.pack(r1, r2) * op.pack(u, v)))
    return LameResult(u, v, energy, work)


# ---------------------------------------------------------------------------
# coupled linear problem

@dataclass(frozen=True, eq=False)
class LinearProblem:
    grid: Grid
    params: PhysicalParams
    eps: float
    us: np.ndarray          # convection coefficient u_s
    us_x2: np.ndarray
    U: np.ndarray           # transport velocity of rho
    V: np.ndarray
    f0: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    delta: float = 0.0
    t: float = 1.0

    @classmethod
    def from_fields(cls, grid: Grid, params: PhysicalParams, us, U=None, V=None, f0=None, f1=None,
                    f2=None, delta: float | None = None, eps: float | None = None, t: float = 1.0):
        shape = grid.shape
        full = lambda a: np.zeros(shape) if a is None else np.broadcast_to(np.asarray(a, float), shape).copy()
        us = full(us)
        delta = 2.0 * float(np.min(np.diff(grid.x1))) if delta is None else delta
        eps = params.eps if eps is None else eps
        if delta > 0.1 * math.sqrt(eps):
            log.warning("mollification radius %.3g is not small against the layer width %.3g",
                        delta, math.sqrt(eps))
        return cls(grid, params, eps, us, fd.d2(us, grid), us if U is None else full(U), full(V),
                   full(f0), full(f1), full(f2), delta, t)

    def check(self) -> None:
        for name in ("f0", "f1", "f2", "U", "V", "us"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} is not finite")
        if np.min(self.U) <= self.params.c:
            log.warning("transport speed drops to %.4g, below the sound speed", float(np.min(self.U)))


@dataclass(frozen=True, eq=False)
class LinearSolution:
    u: np.ndarray
    v: np.ndarray
    rho: np.ndarray
    iterations: int
    history: list
    method: str
    cmap: CoordinateMap
    energy: dict = field(default_factory=dict)

    @property
    def rho_outflow(self) -> np.ndarray:
        return self.rho[-1]


def x_norm(u: np.ndarray, v: np.ndarray, grid: Grid, eps: float) -> float:
    """sqrt(eps) ||grad (u, v)||_L2 + ||(u, v)||_L2."""
    grad = fd.grad_l2_sq(u, grid) + fd.grad_l2_sq(v, grid)
    l2 = fd.inner(u, u, grid) + fd.inner(v, v, grid)
    return math.sqrt(eps) * math.sqrt(grad) + math.sqrt(l2)


class _Coupling:
    """The affine map T and its pieces for one linear problem."""

    def __init__(self, pb: LinearProblem, lame_method: str = "direct",
                 operator: LameOperator | None = None):
        self.pb = pb
        g = pb.grid
        self.cmap = straighten_streamlines(pb.U, pb.V, g)
        self.U_lab = self.cmap.to_labels(pb.U)
        self.op = operator or LameOperator(g, pb.eps, pb.params.lambda_bulk)
        self.lame_method = lame_method
        self.c2 = pb.params.c ** 2

    def density(self, u: np.ndarray, v: np.ndarray, with_source: bool = True) -> np.ndarray:
        pb, g = self.pb, self.pb.grid
        q = (pb.f0 if with_source else 0.0) - fd.divergence(u, v, g)
        q = mollify(q, g, pb.delta)
        rho_lab = solve_transport(self.U_lab, self.cmap.to_labels(q), 0.0, g.x1)
        rho = self.cmap.to_grid(rho_lab)
        rho[0] = 0.0
        return rho

    def lame_rhs(self, u, v, rho, with_source: bool = True) -> tuple:
        pb, g = self.pb, self.pb.grid
        r1 = -(pb.us * fd.d1(u, g) + pb.us_x2 * v) - self.c2 * fd.d1(rho, g)
        r2 = -pb.us * fd.d1(v, g) - self.c2 * fd.d2(rho, g)
        if with_source:
            r1 = r1 + pb.t * pb.f1
            r2 = r2 + pb.t * pb.f2
        return r1, r2

    def T(self, u, v, with_source: bool = True) -> tuple:
        rho = self.density(u, v, with_source)
        r1, r2 = self.lame_rhs(u, v, rho, with_source)
        un, vn = self.op.solve(r1, r2, self.lame_method)
        return un, vn, rho


def linear_fixed_point(pb: LinearProblem, tol: float = 1e-10, max_iter: int = 200,
                       method: str = "gmres", damping: float = 0.7,
                       lame_method: str = "direct",
                       operator: LameOperator | None = None) -> LinearSolution:
    """Solve the coupled problem; iteration counts refer to applications of T.

    ``operator`` reuses a factorised Lame operator across solves on one grid.
    """
    pb.check()
    g = pb.grid
    cp = _Coupling(pb, lame_method, operator)
    zero = np.zeros(g.shape)
    history: list = []
    if not (np.any(pb.f0) or np.any(pb.f1) or np.any(pb.f2)):
        sol = LinearSolution(zero, zero.copy(), zero.copy(), 1, [0.0], method, cp.cmap)
        return _with_energy(sol, pb)

    if method == "gmres":
        u0, v0, _ = cp.T(zero, zero)
        b = cp.op.pack(u0, v0)
        count = [1]

        def matvec(x):
            u, v = cp.op.unpack(x)
            tu, tv, _ = cp.T(u, v, with_source=False)
            count[0] += 1
            return x - cp.op.pack(tu, tv)

        A = LinearOperator((cp.op.size, cp.op.size), matvec=matvec, dtype=float)
        x, info = gmres(A, b, rtol=1e-13, atol=0.0, restart=80, maxiter=max(1, max_iter // 80 + 1))
        u, v = cp.op.unpack(x)
        tu, tv, rho = cp.T(u, v)
        diff = x_norm(tu - u, tv - v, g, pb.eps)
        history.append(diff)
        it = count[0]
        # a few plain sweeps remove the last GMRES residual
        while diff > tol and it < max_iter + count[0]:
            u, v = tu, tv
            tu, tv, rho = cp.T(u, v)
            diff = x_norm(tu - u, tv - v, g, pb.eps)
            history.append(diff)
            it += 1
            if len(history) > 20 and history[-1] > 0.99 * history[-2]:
                break
        if diff > tol:
            raise NoConvergence(f"linear fixed point stalled at X-difference {diff:.3e}", history)
        u, v = tu, tv
        rho = cp.density(u, v)
    elif method == "picard":
        u, v = zero.copy(), zero.copy()
        it = 0
        while True:
            tu, tv, _ = cp.T(u, v)
            it += 1
            du, dv = damping * (tu - u), damping * (tv - v)
            u, v = u + du, v + dv
            diff = x_norm(du, dv, g, pb.eps)
            history.append(diff)
            if diff <= tol:
                break
            if it >= max_iter or not np.isfinite(diff):
                raise NoConvergence(f"damped Picard did not converge in {it} sweeps "
                                    f"(last X-difference {diff:.3e})", history)
        rho = cp.density(u, v)
    else:
        raise ValueError(f"unknown method {method!r}")
    sol = LinearSolution(u, v, rho, it, history, method, cp.cmap)
    return _with_energy(sol, pb)


def _with_energy(sol: LinearSolution, pb: LinearProblem) -> LinearSolution:
    return LinearSolution(sol.u, sol.v, sol.rho, sol.iterations, sol.history, sol.method, sol.cmap,
                          weighted_energy_report(sol, pb))


def supersonic_quadratic_form(us, u, rho, c: float) -> np.ndarray:
    return (us - c) * u ** 2 + c * (c * rho + u) ** 2 + c ** 2 * (us - c) * rho ** 2


def weighted_energy_report(sol, pb: LinearProblem) -> dict:
    """Left and right sides of the two weighted energy inequalities plus the pointwise form."""
    g, eps, t = pb.grid, pb.eps, pb.t
    lam = pb.params.lambda_bulk
    u, v, rho = sol.u, sol.v, sol.rho
    X1, _ = g.mesh()
    wgt = g.L - X1
    l2 = lambda f: fd.inner(f, f, g)
    grad_w = fd.grad_l2_sq(u, g, wgt) + fd.grad_l2_sq(v, g, wgt)
    grad = fd.grad_l2_sq(u, g) + fd.grad_l2_sq(v, g)
    h1 = l2(u) + l2(v) + grad
    lhs1 = t * (l2(u) + l2(v)) + t * l2(rho) + eps * grad_w
    rhs1 = (l2(pb.f0) + eps ** 2 * lam ** 2 * l2(fd.d2(v, g)) + pb.delta * h1
            + abs(fd.inner(wgt * u, pb.f1, g) + fd.inner(wgt * v, pb.f2, g)))
    w2 = np.gradient(g.x2)
    lhs2 = t * float(np.sum(w2 * rho[-1] ** 2)) + eps * grad
    rhs2 = l2(pb.f0) + l2(u) + l2(v) + l2(rho) + abs(fd.inner(u, pb.f1, g) + fd.inner(v, pb.f2, g))
    q = supersonic_quadratic_form(pb.U, u, rho, pb.params.c)
    ratio = lambda a, b: 0.0 if a == 0 else (a / b if b > 0 else math.inf)
    return {"lhs_weighted": lhs1, "rhs_weighted": rhs1, "C_weighted": ratio(lhs1, rhs1),
            "lhs_trace": lhs2, "rhs_trace": rhs2, "C_trace": ratio(lhs2, rhs2),
            "quadratic_form_min": float(np.min(q)), "eps": eps, "delta": pb.delta,
            "iterations": getattr(sol, "iterations", 0)}


def _identity_terms(u, v, rho, pb: LinearProblem, grid: Grid, sub=None):
    """Both sides of the y-momentum identity with the mass equation substituted.

    c^2 rho_x2 + eps (1+lam) d2(U rho_x1 + V rho_x2)
        = f2 + eps (1+lam) d2 f0 - u_s v_x1 - eps d1(u_x2 - v_x1)
    """
    s = (slice(None), slice(None)) if sub is None else sub
    U, V, us, f0, f2 = (a[s] for a in (pb.U, pb.V, pb.us, pb.f0, pb.f2))
    k = pb.eps * (1 + pb.params.lambda_bulk)
    c2 = pb.params.c ** 2
    d1 = lambda f: fd.d1(f, grid)
    d2 = lambda f: fd.d2(f, grid)
    lhs = c2 * d2(rho) + k * d2(U * d1(rho) + V * d2(rho))
    rhs = f2 + k * d2(f0) - us * d1(v) - pb.eps * d1(d2(u) - d1(v))
    return lhs, rhs


def density_derivative_identity_check(sol, pb: LinearProblem) -> dict:
    """Mismatch of the identity on the grid and a stride-two Richardson-type estimate."""
    g = pb.grid
    lhs, rhs = _identity_terms(sol.u, sol.v, sol.rho, pb, g)
    m_h = lhs - rhs
    coarse = Grid(g.x1[::2], g.x2[::2], g.grading)
    s = (slice(None, None, 2), slice(None, None, 2))
    lc, rc = _identity_terms(sol.u[s], sol.v[s], sol.rho[s], pb, coarse, s)
    m_2h = lc - rc
    core = (slice(2, -2), slice(2, -2))
    mism = float(np.max(np.abs(m_h[s][core]))) if m_h[s][core].size else 0.0
    est = float(np.max(np.abs(m_2h[core] - m_h[s][core]))) if m_2h[core].size else 0.0
    scale = float(np.max(np.abs(lhs[s][core]))) if lhs[s][core].size else 0.0
    return {"mismatch": mism, "estimate": est, "scale": scale,
            "passed": mism <= 10.0 * est + 1e-14}


def append_ledger(path, record: dict) -> None:
    """Append one JSON line; floats are written with repr precision."""
    with open(path, "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")
