"""Finite-difference operators on a tensor grid.

First derivatives are second-order three-point formulas (one-sided at the
edges).  The viscous operators use the compact flux form for pure second
derivatives and the wide centred stencil for the mixed one, which makes the
cell-volume weighted Lamé matrix symmetric.
"""
from __future__ import annotations

import numpy as np

from .domain import Grid


def d1(f: np.ndarray, grid: Grid) -> np.ndarray:
    return np.gradient(f, grid.x1, axis=0, edge_order=2)


def d2(f: np.ndarray, grid: Grid) -> np.ndarray:
    return np.gradient(f, grid.x2, axis=1, edge_order=2)


def _compact_second(f: np.ndarray, x: np.ndarray, axis: int) -> np.ndarray:
    """Flux-form second derivative at interior nodes; zero on the edges."""
    f = np.moveaxis(f, axis, 0)
    h = np.diff(x)
    shape = (-1,) + (1,) * (f.ndim - 1)
    hp = h[1:].reshape(shape)
    hm = h[:-1].reshape(shape)
    out = np.zeros_like(f)
    out[1:-1] = ((f[2:] - f[1:-1]) / hp - (f[1:-1] - f[:-2]) / hm) / (0.5 * (hp + hm))
    return np.moveaxis(out, 0, axis)


def d11(f: np.ndarray, grid: Grid) -> np.ndarray:
    return _compact_second(f, grid.x1, 0)


def d22(f: np.ndarray, grid: Grid) -> np.ndarray:
    return _compact_second(f, grid.x2, 1)


def d12(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Wide centred mixed derivative at interior nodes; zero on the edges."""
    out = np.zeros_like(f)
    w1 = (grid.x1[2:] - grid.x1[:-2])[:, None]
    w2 = (grid.x2[2:] - grid.x2[:-2])[None, :]
    out[1:-1, 1:-1] = (f[2:, 2:] - f[2:, :-2] - f[:-2, 2:] + f[:-2, :-2]) / (w1 * w2)
    return out


def laplacian(f: np.ndarray, grid: Grid) -> np.ndarray:
    return d11(f, grid) + d22(f, grid)


def lame_apply(u: np.ndarray, v: np.ndarray, grid: Grid, eps: float, lam: float):
    """(-eps Lap u - eps lam d1 div, -eps Lap v - eps lam d2 div) at interior nodes."""
    ru = -eps * ((1.0 + lam) * d11(u, grid) + d22(u, grid) + lam * d12(v, grid))
    rv = -eps * (d11(v, grid) + (1.0 + lam) * d22(v, grid) + lam * d12(u, grid))
    return ru, rv


def divergence(u: np.ndarray, v: np.ndarray, grid: Grid) -> np.ndarray:
    return d1(u, grid) + d2(v, grid)


def interior(f: np.ndarray) -> np.ndarray:
    return f[1:-1, 1:-1]


def norm_lp(f: np.ndarray, grid: Grid, p: float = 2.0, mask: np.ndarray | None = None) -> float:
    """Trapezoid L^p norm; ``mask`` restricts to a node subset."""
    w = grid.weights()
    a = np.abs(f) ** p
    if mask is not None:
        a = np.where(mask, a, 0.0)
    return float(np.sum(w * a) ** (1.0 / p))


def norm_inf(f: np.ndarray) -> float:
    return float(np.max(np.abs(f))) if f.size else 0.0


def grad_l2_sq(f: np.ndarray, grid: Grid, weight: np.ndarray | None = None) -> float:
    w = grid.weights() if weight is None else grid.weights() * weight
    return float(np.sum(w * (d1(f, grid) ** 2 + d2(f, grid) ** 2)))


def inner(f: np.ndarray, g: np.ndarray, grid: Grid) -> float:
    return float(np.sum(grid.weights() * f * g))
