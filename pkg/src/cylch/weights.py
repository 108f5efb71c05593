"""Exponential weights, weighted Sobolev norms and uniformly-local norms.

The weight family is phi(x1) = exp(-eps * sqrt((x1 - s)^2 + 1)).  Weighted
gradient terms are evaluated on grid edges (phi at the edge midpoint for axial
edges, at the node abscissa for transverse ones) so that they are the exact
summation-by-parts partners of the discrete Laplacian.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.integrate import trapezoid

from .domain import GridSpec, ScalarField, forward_differences, inverse_laplacian, pad_zero
from .errors import InsufficientSnapshots, UnsupportedCombination
from .potentials import PotentialSpec


@dataclass(frozen=True)
class WeightSpec:
    eps: float = 0.1
    s: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.eps <= 1.0):
            raise ValueError("weight eps must lie in (0, 1]")
        if not math.isfinite(self.s):
            raise ValueError("weight centre must be finite")

    def phi(self, x1):
        return np.exp(-self.eps * np.sqrt((np.asarray(x1, dtype=float) - self.s) ** 2 + 1.0))

    def shifted(self, ds: float) -> "WeightSpec":
        return WeightSpec(self.eps, self.s + ds)

    def to_dict(self) -> dict:
        return {"eps": self.eps, "s": self.s}


class WeightValues(NamedTuple):
    phi: object
    dphi: object
    ddphi: object


def eval_weight(spec: WeightSpec, x1) -> WeightValues:
    x = np.asarray(x1, dtype=float) - spec.s
    r = np.sqrt(x * x + 1.0)
    phi = np.exp(-spec.eps * r)
    dphi = -spec.eps * (x / r) * phi
    ddphi = phi * (spec.eps ** 2 * (x / r) ** 2 - spec.eps / r ** 3)
    return WeightValues(phi, dphi, ddphi)


def _expand(a: np.ndarray, ndim: int) -> np.ndarray:
    return a.reshape((-1,) + (1,) * (ndim - 1))


def node_weight(grid: GridSpec, weight: WeightSpec | None) -> np.ndarray:
    """phi at interior nodes, broadcastable to ``grid.shape``."""
    if weight is None:
        return np.ones((grid.shape[0],) + (1,) * (grid.ndim - 1))
    return _expand(weight.phi(grid.x1), grid.ndim)


def edge_weights(grid: GridSpec, weight: WeightSpec | None) -> list:
    """phi on the edges returned by :func:`forward_differences`, per axis."""
    out = []
    for axis in range(grid.ndim):
        if weight is None:
            n = grid.cells[0] if axis == 0 else grid.shape[0]
            out.append(np.ones((n,) + (1,) * (grid.ndim - 1)))
        else:
            x = grid.x1_edges if axis == 0 else grid.x1
            out.append(_expand(weight.phi(x), grid.ndim))
    return out


def weighted_l2_sq(u: np.ndarray, grid: GridSpec, weight: WeightSpec | None) -> float:
    return float(np.sum(node_weight(grid, weight) * u * u)) * grid.cell_volume


def weighted_grad_sq(u: np.ndarray, grid: GridSpec, weight: WeightSpec | None) -> float:
    """(phi, |grad_h u|^2) with edge differences."""
    total = 0.0
    for d, w in zip(forward_differences(u, grid), edge_weights(grid, weight)):
        total += float(np.sum(w * d * d))
    return total * grid.cell_volume


def weighted_grad_product(u: np.ndarray, v: np.ndarray, grid: GridSpec,
                          weight: WeightSpec | None) -> float:
    """(phi grad_h u, grad_h v) with edge differences."""
    total = 0.0
    for du, dv, w in zip(forward_differences(u, grid), forward_differences(v, grid),
                         edge_weights(grid, weight)):
        total += float(np.sum(w * du * dv))
    return total * grid.cell_volume


def _second_differences(u: np.ndarray, grid: GridSpec) -> list:
    """(values, on_axial_edges) pairs for every Hessian entry; mixed ones doubled."""
    p = pad_zero(u)
    nd = grid.ndim
    out = []
    for a, h in enumerate(grid.h):
        c = [slice(1, -1)] * nd
        lo, hi = list(c), list(c)
        lo[a], hi[a] = slice(None, -2), slice(2, None)
        out.append(((p[tuple(hi)] - 2.0 * p[tuple(c)] + p[tuple(lo)]) / (h * h), False, 1.0))
    for a in range(nd):
        for b in range(a + 1, nd):
            d = np.diff(np.diff(p, axis=a), axis=b) / (grid.h[a] * grid.h[b])
            idx = [slice(1, -1)] * nd
            idx[a] = idx[b] = slice(None)
            out.append((d[tuple(idx)], a == 0, 2.0))
    return out


def weighted_hessian_sq(u: np.ndarray, grid: GridSpec, weight: WeightSpec | None) -> float:
    total = 0.0
    for vals, on_edges, mult in _second_differences(u, grid):
        if weight is None:
            w = 1.0
        else:
            w = _expand(weight.phi(grid.x1_edges if on_edges else grid.x1), grid.ndim)
        total += mult * float(np.sum(w * vals * vals))
    return total * grid.cell_volume


def hminus1_norm(u: np.ndarray, grid: GridSpec, weight: WeightSpec | None, tol: float = 1e-10) -> float:
    """||grad (-Lap)^{-1} u||_{L^2_phi}."""
    v = inverse_laplacian(ScalarField(grid, u), tol=tol).values
    return math.sqrt(weighted_grad_sq(v, grid, weight))


def weighted_norm(u: ScalarField, weight: WeightSpec | None = None, p: float = 2.0, order: int = 0) -> float:
    """Weighted L^p (order 0), H^1, H^2 or H^{-1} norm; ``weight=None`` means phi = 1."""
    if order not in (-1, 0, 1, 2) or p < 1:
        raise UnsupportedCombination(f"order={order}, p={p}")
    if order != 0 and p != 2:
        raise UnsupportedCombination("Sobolev orders other than 0 require p = 2")
    grid, v = u.grid, u.values
    if order == 0:
        return float(np.sum(node_weight(grid, weight) * np.abs(v) ** p) * grid.cell_volume) ** (1.0 / p)
    if order == -1:
        return hminus1_norm(v, grid, weight)
    total = weighted_l2_sq(v, grid, weight) + weighted_grad_sq(v, grid, weight)
    if order == 2:
        total += weighted_hessian_sq(v, grid, weight)
    return math.sqrt(total)


# ---------------------------------------------------------------------------
# uniformly-local norms
# ---------------------------------------------------------------------------
@dataclass
class WindowSet:
    """Unit-width axial windows [s, s+1] inside [-L, L]."""

    grid: GridSpec
    stride: float | None = None
    anchors: np.ndarray = field(init=False)
    anchor_index: np.ndarray = field(init=False)

    def __post_init__(self):
        g = self.grid
        stride = g.hx if self.stride is None else float(self.stride)
        step = stride / g.hx
        if stride <= 0 or abs(step - round(step)) > 1e-9:
            raise ValueError("window stride must be a positive multiple of the axial spacing")
        self.stride = stride
        last = g.nx - g.cells_per_unit
        self.anchor_index = np.arange(0, last + 1, int(round(step)))
        if self.anchor_index.size == 0:
            raise ValueError("domain shorter than one window")
        self.anchors = -g.L + g.hx * self.anchor_index


class ULNorm(NamedTuple):
    value: float
    argmax_window: float


def _node_density(q: np.ndarray, grid: GridSpec, p: float) -> np.ndarray:
    """Cross-section integral of |q|^p at every axial node, boundary nodes included."""
    axes = tuple(range(1, grid.ndim))
    inner = np.sum(np.abs(q) ** p, axis=axes) * grid.cross_section_volume
    return np.concatenate(([0.0], inner, [0.0]))


def _slab_densities(u: np.ndarray, grid: GridSpec, p: float, order: int):
    axes = tuple(range(1, grid.ndim))
    cv = grid.cross_section_volume
    node = _node_density(u, grid, p)
    edge = np.zeros(grid.nx)
    if order >= 1:
        diffs = forward_differences(u, grid)
        edge += np.sum(diffs[0] ** 2, axis=axes) * cv
        for d in diffs[1:]:
            node[1:-1] += np.sum(d * d, axis=axes) * cv
    if order >= 2:
        for vals, on_edges, mult in _second_differences(u, grid):
            dens = mult * np.sum(vals * vals, axis=axes) * cv
            if on_edges:
                edge += dens
            else:
                node[1:-1] += dens
    return node, edge


def window_integrals(node: np.ndarray, edge: np.ndarray, grid: GridSpec, index: np.ndarray) -> np.ndarray:
    """Trapezoidal integrals of axial densities over [s, s+1] for each anchor index."""
    m = grid.cells_per_unit
    nc = np.concatenate(([0.0], np.cumsum(node)))
    ec = np.concatenate(([0.0], np.cumsum(edge)))
    k = np.asarray(index)
    nodes = nc[k + m + 1] - nc[k] - 0.5 * (node[k] + node[k + m])
    edges = ec[k + m] - ec[k]
    return grid.hx * (nodes + edges)


def _window_values(u: np.ndarray, grid: GridSpec, windows: WindowSet, p: float, order: int) -> np.ndarray:
    if order not in (0, 1, 2) or p < 1:
        raise UnsupportedCombination(f"order={order}, p={p}")
    if order > 0 and p != 2:
        raise UnsupportedCombination("Sobolev orders other than 0 require p = 2")
    node, edge = _slab_densities(u, grid, p, order)
    return window_integrals(node, edge, grid, windows.anchor_index)


def uniformly_local_norm(u: ScalarField, windows: WindowSet, p: float = 2.0, order: int = 0) -> ULNorm:
    if windows.grid != u.grid:
        raise ValueError("window set built for a different grid")
    vals = _window_values(u.values, u.grid, windows, p, order)
    k = int(np.argmax(vals))
    return ULNorm(float(max(vals[k], 0.0)) ** (1.0 / p), float(windows.anchors[k]))


def phase_functional(u: np.ndarray, grid: GridSpec, spec: PotentialSpec, windows: WindowSet) -> float:
    """||u||_{H^1_b}^2 + ||F(u)||_{L^1_b}: the uniformly-local phase-space size."""
    h1 = float(np.max(_window_values(u, grid, windows, 2.0, 1)))
    f1 = float(np.max(_window_values(spec.F(u), grid, windows, 1.0, 0)))
    return h1 + f1


GRADIENT_QUANTITIES = ("grad_u", "grad_mu")


def spacetime_ul_norm(record, t0: float, p: float, quantity: str, windows: WindowSet | None = None) -> float:
    """sup over windows of (int_{t0}^{t0+1} ||q(t)||_{L^p(window)}^p dt)^{1/p}.

    ``record`` must expose ``grid``, ``snapshot_times`` and ``quantity(name, k)``
    returning the named field at snapshot k.  Time integration is trapezoidal
    over the stored snapshots in [t0, t0 + 1].
    """
    grid = record.grid
    windows = windows or WindowSet(grid)
    times = np.asarray(record.snapshot_times, dtype=float)
    tiny = 1e-9 * max(1.0, abs(t0))
    sel = np.flatnonzero((times >= t0 - tiny) & (times <= t0 + 1.0 + tiny))
    if sel.size < 4 or times[sel[0]] > t0 + tiny or times[sel[-1]] < t0 + 1.0 - tiny:
        raise InsufficientSnapshots(f"need >= 4 snapshots covering [{t0}, {t0 + 1}], found {sel.size}")
    if quantity in GRADIENT_QUANTITIES and p != 2:
        raise UnsupportedCombination("gradient quantities need p = 2")
    rows = []
    for k in sel:
        q = record.quantity(quantity, int(k))
        if quantity in GRADIENT_QUANTITIES:
            node, edge = _slab_densities(q, grid, 2.0, 1)
            node = node - _node_density(q, grid, 2.0)
        else:
            node, edge = _node_density(q, grid, p), np.zeros(grid.nx)
        rows.append(window_integrals(node, edge, grid, windows.anchor_index))
    integral = trapezoid(np.array(rows), times[sel], axis=0)
    return float(max(np.max(integral), 0.0)) ** (1.0 / p)
