"""Finite-difference discretization of the truncated strip/cylinder.

The domain is [-L, L] x (0,1) (strip) or [-L, L] x (0,1)^2 (cylinder mode) with
homogeneous Dirichlet data on every face.  Fields live on interior nodes,
stored as numpy arrays of shape ``grid.shape`` (axis 0 is the axial direction
x1, row-major).  The boundary nodes carry the value 0 implicitly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainViolation, GridMismatch, NewtonFailure, NoConvergence
from .potentials import EVAL_MARGIN, PotentialSpec


@dataclass(frozen=True)
class GridSpec:
    L: float = 16.0
    nx: int = 256
    ny: int = 16
    nz: int | None = None

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("axial half-length L must be positive")
        counts = [self.nx, self.ny] + ([self.nz] if self.nz is not None else [])
        if any(int(n) != n or n < 4 for n in counts):
            raise ValueError("cell counts must be integers >= 4")
        per_unit = self.nx / (2.0 * self.L)
        if abs(per_unit - round(per_unit)) > 1e-9 or round(per_unit) < 1:
            raise ValueError(f"1/h_axial = {per_unit:g} must be a positive integer so unit windows are exact")

    @property
    def ndim(self) -> int:
        return 2 if self.nz is None else 3

    @property
    def cells(self) -> tuple:
        return (self.nx, self.ny) if self.nz is None else (self.nx, self.ny, self.nz)

    @property
    def shape(self) -> tuple:
        return tuple(n - 1 for n in self.cells)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def h(self) -> tuple:
        return (2.0 * self.L / self.nx,) + tuple(1.0 / n for n in self.cells[1:])

    @property
    def hx(self) -> float:
        return self.h[0]

    @property
    def cells_per_unit(self) -> int:
        return int(round(self.nx / (2.0 * self.L)))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.h)

    @property
    def cross_section_volume(self) -> float:
        return math.prod(self.h[1:])

    @property
    def x1(self) -> np.ndarray:
        """Axial coordinates of interior nodes."""
        return -self.L + self.hx * np.arange(1, self.nx)

    @property
    def x1_all(self) -> np.ndarray:
        """Axial coordinates of all nodes, boundary included."""
        return -self.L + self.hx * np.arange(self.nx + 1)

    @property
    def x1_edges(self) -> np.ndarray:
        """Axial midpoints between consecutive nodes (nx of them)."""
        return -self.L + self.hx * (np.arange(self.nx) + 0.5)

    def coords(self) -> tuple:
        axes = [self.x1] + [h * np.arange(1, n) for h, n in zip(self.h[1:], self.cells[1:])]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def to_dict(self) -> dict:
        d = {"L": self.L, "nx": self.nx, "ny": self.ny}
        if self.nz is not None:
            d["nz"] = self.nz
        return d


@dataclass
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != self.grid.size:
            raise GridMismatch(f"field has {v.size} values, grid has {self.grid.size} interior nodes")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "ScalarField":
        return cls(grid, fn(*grid.coords()))

    def _other(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise GridMismatch("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other(other))

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)


def _same_grid(*fields):
    grids = {f.grid for f in fields if isinstance(f, ScalarField)}
    if len(grids) > 1:
        raise GridMismatch("fields live on different grids")


# ---------------------------------------------------------------------------
# cached operators
# ---------------------------------------------------------------------------
def _second_difference(n_interior: int, h: float) -> sp.csr_matrix:
    main = -2.0 * np.ones(n_interior)
    off = np.ones(n_interior - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / (h * h)


def _to_banded(M: sp.spmatrix, bw: int) -> np.ndarray:
    """LAPACK general band storage with bw sub- and super-diagonals."""
    D = M.todia()
    ab = np.zeros((2 * bw + 1, M.shape[0]))
    for k, off in enumerate(D.offsets):
        if abs(off) > bw:
            raise ValueError("matrix exceeds the declared bandwidth")
        ab[bw - off, :] += D.data[k]
    return ab


class Operators:
    """Sparse Dirichlet Laplacian and the factorizations built on it."""

    def __init__(self, grid: GridSpec):
        self.grid = grid
        shape = grid.shape
        mats = []
        for axis, (n, h) in enumerate(zip(shape, grid.h)):
            factors = [sp.identity(m, format="csr") for m in shape]
            factors[axis] = _second_difference(n, h)
            M = factors[0]
            for F in factors[1:]:
                M = sp.kron(M, F, format="csr")
            mats.append(M)
        self.lap = sum(mats[1:], mats[0]).tocsr()
        self.n = grid.size
        # distance of the axial neighbour in flattened (row-major) storage
        self.bandwidth = math.prod(shape[1:])
        self.banded = grid.ndim == 2

    @cached_property
    def lap_sq(self) -> sp.csr_matrix:
        return (self.lap @ self.lap).tocsr()

    @cached_property
    def _poisson_solve(self):
        return spla.factorized((-self.lap).tocsc())

    @cached_property
    def _step_bands(self):
        bw = 2 * self.bandwidth
        eye = sp.identity(self.n, format="csr")
        return bw, _to_banded(eye, bw), _to_banded(self.lap, bw), _to_banded(self.lap_sq, bw)

    @cached_property
    def _elliptic_bands(self):
        bw = self.bandwidth
        return bw, _to_banded(self.lap, bw)

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        return (self.lap @ u.ravel()).reshape(u.shape)

    def poisson(self, w: np.ndarray) -> np.ndarray:
        """Solve -Lap v = w by the cached sparse factorization."""
        return self._poisson_solve(w.ravel()).reshape(w.shape)

    def solve_step_jacobian(self, dt: float, d: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Solve (I + dt Lap^2 - dt Lap diag(d)) x = rhs."""
        d = d.ravel()
        if self.banded:
            bw, eye, lap, lap_sq = self._step_bands
            ab = eye + dt * lap_sq - dt * lap * d[None, :]
            x = sla.solve_banded((bw, bw), ab, rhs.ravel(), check_finite=False)
        else:
            J = sp.identity(self.n) + dt * self.lap_sq - dt * (self.lap @ sp.diags(d))
            x = spla.splu(J.tocsc()).solve(rhs.ravel())
        return x.reshape(rhs.shape)

    def solve_elliptic_jacobian(self, d: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Solve (Lap - diag(d)) x = rhs."""
        d = d.ravel()
        if self.banded:
            bw, lap = self._elliptic_bands
            ab = lap.copy()
            ab[bw, :] -= d
            x = sla.solve_banded((bw, bw), ab, rhs.ravel(), check_finite=False)
        else:
            x = spla.splu((self.lap - sp.diags(d)).tocsc()).solve(rhs.ravel())
        return x.reshape(rhs.shape)


@lru_cache(maxsize=16)
def operators(grid: GridSpec) -> Operators:
    return Operators(grid)


def pad_zero(u: np.ndarray) -> np.ndarray:
    """Append the Dirichlet boundary nodes (value 0) on every face."""
    return np.pad(u, 1)


def forward_differences(u: np.ndarray, grid: GridSpec) -> list:
    """One-sided differences across every grid edge, boundary edges included.

    Entry k has the interior node count on every axis except axis k, which has
    ``cells[k]`` edges.  Their squared sum times the cell volume equals
    -(Lap u, u) exactly (summation by parts).
    """
    p = pad_zero(u)
    out = []
    for axis, h in enumerate(grid.h):
        d = np.diff(p, axis=axis) / h
        idx = [slice(1, -1)] * grid.ndim
        idx[axis] = slice(None)
        out.append(d[tuple(idx)])
    return out


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------
def apply_laplacian(u: ScalarField) -> ScalarField:
    return ScalarField(u.grid, operators(u.grid).laplacian(u.values))


def apply_gradient(u: ScalarField) -> tuple:
    """Centered differences using the Dirichlet value 0 beyond the last node.

    Node-centred values for display and pointwise use; energies use the
    summation-by-parts edge differences of :func:`forward_differences`.
    """
    p = pad_zero(u.values)
    comps = []
    for axis, h in enumerate(u.grid.h):
        hi = [slice(1, -1)] * u.grid.ndim
        lo = list(hi)
        hi[axis] = slice(2, None)
        lo[axis] = slice(None, -2)
        comps.append(ScalarField(u.grid, (p[tuple(hi)] - p[tuple(lo)]) / (2.0 * h)))
    return tuple(comps)


def gradient_norm_sq(u) -> float:
    """||grad_h u||^2 with edge differences; equals -(Lap u, u)."""
    grid = u.grid
    return grid.cell_volume * sum(float(np.sum(d * d)) for d in forward_differences(u.values, grid))


def cg_iteration_cap(n: int, tol: float) -> int:
    return int(math.ceil(10.0 * math.sqrt(n) * max(1.0, math.log(1.0 / tol))))


def inverse_laplacian(w: ScalarField, tol: float = 1e-10, method: str = "direct") -> ScalarField:
    """Return v with -Lap_h v = w and v = 0 on the boundary.

    ``method="direct"`` uses a cached sparse factorization, ``"cg"`` runs
    conjugate gradients capped at 10 sqrt(n) log(1/tol) iterations.  Either
    way the relative residual must reach ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    ops = operators(w.grid)
    rhs = w.values.ravel()
    wnorm = float(np.linalg.norm(rhs))
    if wnorm == 0.0:
        return ScalarField.zeros(w.grid)
    A = -ops.lap
    if method == "direct":
        v = ops.poisson(w.values).ravel()
        iterations = 1
    elif method == "cg":
        cap = cg_iteration_cap(ops.n, tol)
        count = [0]

        def cb(_):
            count[0] += 1

        v, _ = spla.cg(A, rhs, rtol=tol, atol=0.0, maxiter=cap, callback=cb)
        iterations = count[0]
    else:
        raise ValueError(f"unknown method {method!r}")
    res = float(np.linalg.norm(A @ v - rhs))
    if res > tol * wnorm:
        raise NoConvergence(iterations, res / wnorm)
    return ScalarField(w.grid, v.reshape(w.grid.shape))


def inner_product(u: ScalarField, v: ScalarField, weight=None) -> float:
    """Sum of u*v*weight*cell_volume over interior nodes.

    Boundary nodes carry zero Dirichlet values, so this is the trapezoidal rule
    on the closed domain.  ``weight`` is an array of per-node weights.
    """
    if u.grid != v.grid:
        raise GridMismatch("inner product of fields on different grids")
    prod = u.values * v.values
    if weight is not None:
        w = _values(weight)
        if w.shape != u.grid.shape and w.size != u.grid.size:
            w = np.broadcast_to(w, u.grid.shape)
        prod = prod * w.reshape(u.grid.shape)
    return float(np.sum(prod)) * u.grid.cell_volume


def boundary_flux(mu: ScalarField) -> float:
    """Integral of Lap_h mu; the sum telescopes to boundary stencil terms."""
    return float(np.sum(operators(mu.grid).laplacian(mu.values))) * mu.grid.cell_volume


_ELLIPTIC_HINT = "tol may be below roundoff for this grid, or supply an initial guess"


def solve_semilinear_elliptic(h: ScalarField, spec: PotentialSpec, tol: float = 1e-10,
                              initial: ScalarField | None = None, max_iter: int = 100,
                              margin: float = EVAL_MARGIN) -> ScalarField:
    """Damped Newton for Lap_h u - f(u) = h with u = 0 on the boundary."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    grid = h.grid
    ops = operators(grid)
    u = np.zeros(grid.shape) if initial is None else initial.values.copy()
    bound = 1.0 - margin

    def residual(x):
        return ops.laplacian(x) - spec.f(x) - h.values

    r = residual(u)
    history = [float(np.max(np.abs(r)))]
    for _ in range(max_iter):
        if history[-1] <= tol:
            return ScalarField(grid, u)
        delta = ops.solve_elliptic_jacobian(spec.f_prime(u), -r)
        lam = 1.0
        for _ in range(31):
            trial = u + lam * delta
            if not spec.singular or np.max(np.abs(trial)) <= bound:
                r_trial = residual(trial)
                if np.linalg.norm(r_trial) <= (1.0 - 1e-4 * lam) * np.linalg.norm(r):
                    break
            lam *= 0.5
        else:
            if spec.singular and np.max(np.abs(u + lam * delta)) > bound:
                raise DomainViolation("step damping could not keep the Newton iterate admissible")
            raise NewtonFailure(history, "semilinear elliptic Newton stalled", _ELLIPTIC_HINT)
        u, r = trial, r_trial
        history.append(float(np.max(np.abs(r))))
    if history[-1] <= tol:
        return ScalarField(grid, u)
    raise NewtonFailure(history, "semilinear elliptic Newton hit its iteration cap", _ELLIPTIC_HINT)
