"""Physical constants, base shear profiles, tensor grids and boundary traces.

The channel is (0, L) x (0, 2) with x1 the streamwise (time-like) direction.
Fields on a :class:`Grid` are arrays of shape ``(n1 + 1, n2 + 1)`` indexed
``[i, j]`` with ``i`` along x1 and ``j`` along x2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import make_interp_spline

from .errors import ConfigError, GridTooCoarse, SubsonicPoint

MAX_PROFILE_DERIVATIVE = 6


@dataclass(frozen=True)
class PhysicalParams:
    eps: float = 0.1
    a: float = 1.0
    gamma: float = 1.4
    rho_star: float = 1.0
    lambda_bulk: float = 1.0
    L: float = 0.1
    p: float = 2.5
    sigma: float = 0.05
    p0: float = 8.0 / 3.0

    def __post_init__(self):
        if not (self.gamma > 1 and self.a > 0 and self.rho_star > 0 and self.eps > 0 and self.L > 0):
            raise ConfigError("need gamma > 1 and a, rho_star, eps, L > 0")
        if self.eps > 1:
            raise ConfigError(f"eps must lie in (0, 1], got {self.eps}")
        if self.lambda_bulk <= 0:
            raise ConfigError("lambda_bulk must be positive")
        if not (2 < self.p < self.p0 <= 8.0 / 3.0 + 1e-12):
            raise ConfigError(f"need 2 < p < p0 <= 8/3, got p={self.p}, p0={self.p0}")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")

    @property
    def c(self) -> float:
        return sound_speed(self)

    def pressure(self, rho):
        return self.a * np.asarray(rho) ** self.gamma

    def pressure_slope(self, rho):
        """p'(rho) = a gamma rho^(gamma-1)."""
        return self.a * self.gamma * np.asarray(rho) ** (self.gamma - 1.0)

    def perturbation_exponent(self) -> float:
        """Exponent of the admissible boundary perturbation amplitude."""
        return 2.5 - 2.0 / self.p + self.sigma


def sound_speed(params: PhysicalParams) -> float:
    return math.sqrt(params.a * params.gamma * params.rho_star ** (params.gamma - 1.0))


# ---------------------------------------------------------------------------
# cutoff functions

# C^4 smoothstep: 0 -> 1 on [0, 1] with four vanishing derivatives at both ends
_STEP = Polynomial([0, 0, 0, 0, 0, 126, -420, 540, -315, 70])
_STEP_DERIVS = [_STEP.deriv(k) for k in range(6)]


def smoothstep(z, k: int = 0):
    """k-th derivative of the C^4 smoothstep, clamped outside [0, 1]."""
    z = np.asarray(z, dtype=float)
    inside = (z > 0) & (z < 1)
    out = np.where(inside, _STEP_DERIVS[k](np.clip(z, 0, 1)), 0.0)
    if k == 0:
        out = np.where(z >= 1, 1.0, out)
    return out


def chi(t, k: int = 0):
    """Cutoff equal to 1 on [0, 3/4] and 0 on [1, inf); k-th derivative."""
    return -(4.0 ** k) * smoothstep(4.0 * (np.asarray(t, dtype=float) - 0.75), k) if k else \
        1.0 - smoothstep(4.0 * (np.asarray(t, dtype=float) - 0.75))


def decay_weight(Y, k: int = 0):
    """Weight equal to 0 for Y < 3 and 1 for Y > 4."""
    return smoothstep(np.asarray(Y, dtype=float) - 3.0, k)


# ---------------------------------------------------------------------------
# base flow

@dataclass(frozen=True)
class BaseFlow:
    """Shear profile mu(x2) with derivatives up to order six."""

    name: str
    evaluator: Callable[[np.ndarray, int], np.ndarray] = field(repr=False)

    def mu(self, x2, k: int = 0):
        if not 0 <= k <= MAX_PROFILE_DERIVATIVE:
            raise ValueError(f"derivative order {k} not tabulated")
        return self.evaluator(np.asarray(x2, dtype=float), k)

    def __call__(self, x2, k: int = 0):
        return self.mu(x2, k)

    @property
    def V0(self) -> float:
        return float(self.mu(0.0))

    @property
    def V1(self) -> float:
        return float(self.mu(2.0))

    def derivatives_at(self, x2: float) -> np.ndarray:
        return np.array([float(self.mu(x2, k)) for k in range(MAX_PROFILE_DERIVATIVE + 1)])


def _polynomial_flow(name: str, poly: Polynomial) -> BaseFlow:
    derivs = [poly.deriv(k) if k else poly for k in range(MAX_PROFILE_DERIVATIVE + 1)]

    def evaluate(x2, k):
        return derivs[k](x2) + 0.0 * x2

    return BaseFlow(name, evaluate)


def constant_flow(V: float) -> BaseFlow:
    return _polynomial_flow("constant", Polynomial([V]))


def couette_flow(V0: float = 2.0, V1: float = 2.5) -> BaseFlow:
    return _polynomial_flow("couette", Polynomial([V0, (V1 - V0) / 2.0]))


def quartic_flow(V0: float = 2.0, V1: float = 2.5, kappa: float = 0.3, tau: float = 0.05) -> BaseFlow:
    """Linear blend plus kappa*x2(2-x2) + tau*x2^2(2-x2)^2; mu'' != 0 at walls."""
    bump = Polynomial([0, 2, -1])
    poly = Polynomial([V0, (V1 - V0) / 2.0]) + kappa * bump + tau * bump * bump
    return _polynomial_flow("quartic", poly)


def sine_flow(mean: float = 2.0, amplitude: float = 0.1) -> BaseFlow:
    def evaluate(x2, k):
        w = math.pi
        phase = [np.sin, np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t)][k % 4]
        return (mean if k == 0 else 0.0) + amplitude * w ** k * phase(w * x2)

    return BaseFlow("sine", evaluate)


def tabulated_flow(x2_samples, mu_samples) -> BaseFlow:
    """Degree-7 interpolating spline, so six derivatives are continuous."""
    x2_samples = np.asarray(x2_samples, dtype=float)
    mu_samples = np.asarray(mu_samples, dtype=float)
    if x2_samples[0] != 0.0 or x2_samples[-1] != 2.0 or len(x2_samples) < 8:
        raise ConfigError("tabulated profile needs >= 8 samples spanning [0, 2]")
    spline = make_interp_spline(x2_samples, mu_samples, k=7)
    derivs = [spline.derivative(k) if k else spline for k in range(MAX_PROFILE_DERIVATIVE + 1)]

    def evaluate(x2, k):
        return derivs[k](x2)

    return BaseFlow("tabulated", evaluate)


def make_flow(kind: str, **kw) -> BaseFlow:
    builders = {
        "couette": couette_flow,
        "quartic": quartic_flow,
        "sine": sine_flow,
        "constant": constant_flow,
    }
    if kind == "tabulated":
        return tabulated_flow(kw["x2"], kw["mu"])
    if kind not in builders:
        raise ConfigError(f"unknown flow profile {kind!r}")
    return builders[kind](**kw)


@dataclass(frozen=True)
class SupersonicReport:
    min_margin: float
    x2_at_min: float
    passed: bool


def validate_supersonic(flow: BaseFlow, params: PhysicalParams, x2=None) -> SupersonicReport:
    """Check mu^2 - c^2 > 0 at every node (plus a fine sampling of [0, 2])."""
    pts = np.linspace(0.0, 2.0, 2001)
    if x2 is not None:
        pts = np.union1d(pts, np.asarray(x2, dtype=float))
    margin = flow.mu(pts) ** 2 - params.c ** 2
    j = int(np.argmin(margin))
    report = SupersonicReport(float(margin[j]), float(pts[j]), bool(margin[j] > 0))
    if not report.passed:
        raise SubsonicPoint(
            f"mu^2 - c^2 = {report.min_margin:.6g} <= 0 at x2 = {report.x2_at_min:.6g}",
            x2=report.x2_at_min, margin=report.min_margin)
    if flow.V0 <= 0 or flow.V1 <= 0:
        raise SubsonicPoint("wall speeds must be positive", x2=0.0, margin=report.min_margin)
    return report


# ---------------------------------------------------------------------------
# grid

@dataclass(frozen=True, eq=False)
class Grid:
    x1: np.ndarray
    x2: np.ndarray
    grading: str = "stretched"

    @property
    def n1(self) -> int:
        return len(self.x1) - 1

    @property
    def n2(self) -> int:
        return len(self.x2) - 1

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.x1), len(self.x2))

    @property
    def L(self) -> float:
        return float(self.x1[-1])

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def weights(self) -> np.ndarray:
        """Tensor trapezoid quadrature weights."""
        return np.outer(_trapezoid_weights(self.x1), _trapezoid_weights(self.x2))

    def same_as(self, other: "Grid") -> bool:
        return (self.shape == other.shape and np.array_equal(self.x1, other.x1)
                and np.array_equal(self.x2, other.x2))

    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return m

    def spacing_ratio(self) -> float:
        h = np.diff(self.x2)
        return float(np.max(np.maximum(h[1:] / h[:-1], h[:-1] / h[1:])))


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    h = np.diff(x)
    w = np.zeros_like(x)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def _half_channel(m: int, beta: float) -> np.ndarray:
    """Nodes on [0, 1] clustered at 0 by a tanh map; beta -> 0 is uniform."""
    xi = np.linspace(0.0, 1.0, m + 1)
    if beta < 1e-8:
        return xi
    x = 1.0 - np.tanh(beta * (1.0 - xi)) / math.tanh(beta)
    x[0], x[-1] = 0.0, 1.0
    return x


def build_grid(params: PhysicalParams, n1: int, n2: int, grading: str = "stretched",
               max_ratio: float = 1.15, wall_spacing: float | None = None) -> Grid:
    """Tensor grid on [0, L] x [0, 2], symmetric about x2 = 1.

    ``wall_spacing`` is the target first cell next to each wall (default
    sqrt(eps)/8); the stretched grading picks the mildest tanh clustering
    that reaches it.
    """
    if n1 < 8 or n2 < 8:
        raise GridTooCoarse(f"need n1, n2 >= 8, got {n1}, {n2}")
    if n2 % 2:
        raise GridTooCoarse("n2 must be even so that x2 = 1 is a node")
    x1 = np.linspace(0.0, params.L, n1 + 1)
    m = n2 // 2
    target = wall_spacing if wall_spacing is not None else math.sqrt(params.eps) / 8.0
    if grading == "uniform":
        half = _half_channel(m, 0.0)
    elif grading == "stretched":
        if 1.0 / m <= target:
            half = _half_channel(m, 0.0)
        else:
            lo, hi = 0.0, 30.0
            if _half_channel(m, hi)[1] > target:
                raise GridTooCoarse("wall spacing target unreachable")
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if _half_channel(m, mid)[1] > target:
                    lo = mid
                else:
                    hi = mid
            half = _half_channel(m, hi)
    else:
        raise ConfigError(f"unknown grading {grading!r}")
    x2 = np.concatenate([half, 2.0 - half[::-1][1:]])
    grid = Grid(x1, x2, grading)
    _check_wall_resolution(grid, params, max_ratio if grading == "stretched" else None)
    return grid


def _check_wall_resolution(grid: Grid, params: PhysicalParams, max_ratio: float | None) -> None:
    rt = math.sqrt(params.eps)
    h = np.diff(grid.x2)
    near_lower = grid.x2[1:] <= rt + 1e-14
    near_upper = grid.x2[:-1] >= 2.0 - rt - 1e-14
    for near, side in ((near_lower, "lower"), (near_upper, "upper")):
        if not near.any() or h[near].min() > rt / 4.0:
            raise GridTooCoarse(
                f"{side} wall: spacing {h.min():.3g} does not resolve sqrt(eps)/4 = {rt / 4:.3g}")
    if max_ratio is not None and grid.spacing_ratio() > max_ratio + 1e-12:
        raise GridTooCoarse(
            f"adjacent spacing ratio {grid.spacing_ratio():.3f} exceeds {max_ratio}; raise n2")


# ---------------------------------------------------------------------------
# boundary data

@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Traces on the x2 nodes of a grid."""

    x2: np.ndarray
    u_in: np.ndarray
    v_in: np.ndarray
    u_out: np.ndarray
    v_out: np.ndarray
    rho_in: np.ndarray
    amplitude: float = 0.0

    def corner_mismatch(self, flow: BaseFlow) -> float:
        errs = [self.u_in[0] - flow.V0, self.u_out[0] - flow.V0,
                self.u_in[-1] - flow.V1, self.u_out[-1] - flow.V1,
                self.v_in[0], self.v_in[-1], self.v_out[0], self.v_out[-1]]
        return float(np.max(np.abs(errs)))


def admissible_amplitude(params: PhysicalParams, scale: float = 1.0) -> float:
    return scale * params.eps ** params.perturbation_exponent()
