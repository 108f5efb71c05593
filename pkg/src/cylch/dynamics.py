"""Time integration of du/dt = Lap mu, mu = -Lap u + f(u) + g.

The main scheme is first-order convex splitting along f = f0 - K u: the
monotone part f0 and the biharmonic term are implicit, the concave part -K u is
explicit.  Each step is a damped Newton solve for

    (u+ - u)/dt = Lap( -Lap u+ + f0(u+) - K u + g ).

Classical RK4 on the method-of-lines system serves as an independent oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import GridSpec, ScalarField, operators, pad_zero
from .errors import DomainViolation, Instability, NewtonFailure
from .potentials import EVAL_MARGIN, PotentialSpec
from .weights import (WeightSpec, WindowSet, _window_values, edge_weights, hminus1_norm, node_weight,
                      weighted_grad_sq)

SCHEMES = ("convex_splitting", "rk4")
INITIAL_KINDS = ("tanh_interface", "spinodal_noise", "rough_hminus1", "eigenmode", "zero")

SERIES = ("E_phi", "E_plus_ug", "grad_mu_L2phi", "u_H1b", "F_L1b", "f_u_L2b", "f_Linf",
          "min_separation", "mass", "boundary_flux", "dtu_Hm1phi", "energy_residual")
# recorded alongside but not part of the CSV contract
EXTRA_SERIES = ("E", "grad_mu_pure_L2phi", "newton_iterations")


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-3
    scheme: str = "convex_splitting"
    newton_tol: float = 1e-11
    newton_max_iters: int = 50
    admissibility_margin: float = 1e-4
    record_every: int = 1
    snapshot_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not (0 < self.newton_tol < 1e-6):
            raise ValueError("newton_tol must lie in (0, 1e-6)")
        if not (0 < self.admissibility_margin <= 1e-3):
            raise ValueError("admissibility_margin must lie in (0, 1e-3]")
        if self.newton_max_iters < 1 or self.record_every < 1 or self.snapshot_every < 1:
            raise ValueError("iteration and recording counts must be positive")

    def to_dict(self) -> dict:
        return {"dt": self.dt, "scheme": self.scheme, "newton_tol": self.newton_tol,
                "newton_max_iters": self.newton_max_iters,
                "admissibility_margin": self.admissibility_margin,
                "record_every": self.record_every, "snapshot_every": self.snapshot_every}


@dataclass
class State:
    t: float
    u: ScalarField


def rk4_stable_dt(grid: GridSpec, safety: float = 0.9) -> float:
    """Largest dt for which RK4 is stable on the linear part (dt ~ h^4)."""
    rho = sum(4.0 / h ** 2 for h in grid.h)
    return safety * 2.78 / rho ** 2


def _g_values(g, grid: GridSpec) -> np.ndarray:
    if g is None:
        return np.zeros(grid.shape)
    return g.values if isinstance(g, ScalarField) else np.broadcast_to(np.asarray(g, float), grid.shape)


def chemical_potential(u: ScalarField, spec: PotentialSpec, g: ScalarField | None = None) -> ScalarField:
    ops = operators(u.grid)
    return ScalarField(u.grid, -ops.laplacian(u.values) + spec.f(u.values) + _g_values(g, u.grid))


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------
@dataclass
class StepResult:
    u: np.ndarray
    mu: np.ndarray          # scheme-consistent chemical potential at the step end
    flux: float             # integral of Lap mu over the step (per unit time)
    iterations: int = 0
    residuals: list = field(default_factory=list)


def _admissible(spec: PotentialSpec, u: np.ndarray, margin: float):
    if spec.singular and np.max(np.abs(u)) > 1.0 - margin:
        raise DomainViolation(f"max|u| = {np.max(np.abs(u)):.12g} violates the admissibility margin {margin:g}")


def _convex_splitting(u: np.ndarray, spec: PotentialSpec, g: np.ndarray, cfg: SolverConfig,
                      grid: GridSpec) -> StepResult:
    ops = operators(grid)
    dt = cfg.dt
    explicit = -spec.K * u + g
    bound = 1.0 - EVAL_MARGIN

    def mu_of(v):
        return -ops.laplacian(v) + spec.f0(v) + explicit

    def residual(v):
        mu = mu_of(v)
        return v - u - dt * ops.laplacian(mu), mu

    v = u.copy()
    r, mu = residual(v)
    history = [float(np.max(np.abs(r)))]
    polished = False
    for it in range(cfg.newton_max_iters + 1):
        if history[-1] <= cfg.newton_tol and polished:
            break
        converged = history[-1] <= cfg.newton_tol
        delta = ops.solve_step_jacobian(dt, spec.f0_prime(v), -r)
        rnorm = float(np.linalg.norm(r))
        lam = 1.0
        accepted = False
        for _ in range(31):
            trial = v + lam * delta
            if not spec.singular or np.max(np.abs(trial)) <= bound:
                r_trial, mu_trial = residual(trial)
                tn = float(np.linalg.norm(r_trial))
                if converged:
                    accepted = tn <= rnorm
                    break
                if tn <= (1.0 - 1e-4 * lam) * rnorm:
                    accepted = True
                    break
            lam *= 0.5
        if converged:
            # one polishing step drives the residual to roundoff
            if accepted:
                v, r, mu = trial, r_trial, mu_trial
                history.append(float(np.max(np.abs(r))))
            polished = True
            continue
        if not accepted:
            if spec.singular and np.max(np.abs(v + lam * delta)) > bound:
                raise DomainViolation("Newton damping could not keep the iterate inside (-1, 1)")
            raise NewtonFailure(history, "convex-splitting Newton stalled")
        v, r, mu = trial, r_trial, mu_trial
        history.append(float(np.max(np.abs(r))))
    else:
        if history[-1] > cfg.newton_tol:
            raise NewtonFailure(history, "convex-splitting Newton hit its iteration cap")
    _admissible(spec, v, cfg.admissibility_margin)
    flux = float(np.sum(ops.laplacian(mu))) * grid.cell_volume
    return StepResult(v, mu, flux, len(history) - 1, history)


def _rk4(u: np.ndarray, spec: PotentialSpec, g: np.ndarray, cfg: SolverConfig, grid: GridSpec) -> StepResult:
    ops = operators(grid)
    dt = cfg.dt
    flux = 0.0
    stages = []
    with np.errstate(over="ignore", invalid="ignore"):
        def rhs(v):
            if not np.all(np.isfinite(v)):
                raise Instability("non-finite value in an RK4 stage")
            mu = -ops.laplacian(v) + spec.f(v) + g
            lap_mu = ops.laplacian(mu)
            return mu, lap_mu

        mu1, k1 = rhs(u)
        mu2, k2 = rhs(u + 0.5 * dt * k1)
        mu3, k3 = rhs(u + 0.5 * dt * k2)
        mu4, k4 = rhs(u + dt * k3)
        stages = (k1, k2, k3, k4)
        v = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(v)):
        raise Instability("RK4 step produced non-finite values; dt exceeds the stability bound")
    flux = sum(w * float(np.sum(k)) for w, k in zip((1, 2, 2, 1), stages)) * grid.cell_volume / 6.0
    _admissible(spec, v, cfg.admissibility_margin)
    mu = -ops.laplacian(v) + spec.f(v) + g
    return StepResult(v, mu, flux, 0, [])


def _step(u, spec, g, cfg, grid) -> StepResult:
    if cfg.scheme == "convex_splitting":
        return _convex_splitting(u, spec, g, cfg, grid)
    return _rk4(u, spec, g, cfg, grid)


def step_convex_splitting(state: State, spec: PotentialSpec, g: ScalarField | None,
                          cfg: SolverConfig) -> State:
    grid = state.u.grid
    _admissible(spec, state.u.values, cfg.admissibility_margin)
    res = _convex_splitting(state.u.values, spec, _g_values(g, grid), cfg, grid)
    return State(state.t + cfg.dt, ScalarField(grid, res.u))


def step_explicit_rk4(state: State, spec: PotentialSpec, g: ScalarField | None, cfg: SolverConfig) -> State:
    grid = state.u.grid
    _admissible(spec, state.u.values, cfg.admissibility_margin)
    res = _rk4(state.u.values, spec, _g_values(g, grid), cfg, grid)
    return State(state.t + cfg.dt, ScalarField(grid, res.u))


# ---------------------------------------------------------------------------
# weighted energy bookkeeping
# ---------------------------------------------------------------------------
def weighted_laplacian(u: np.ndarray, grid: GridSpec, weight: WeightSpec | None) -> np.ndarray:
    """div_h(phi grad_h u), the adjoint of the weighted edge-gradient energy."""
    p = pad_zero(u)
    out = np.zeros(grid.shape)
    for axis, (h, w) in enumerate(zip(grid.h, edge_weights(grid, weight))):
        idx = [slice(1, -1)] * grid.ndim
        idx[axis] = slice(None)
        flux = w * np.diff(p, axis=axis)[tuple(idx)] / h
        out += np.diff(flux, axis=axis) / h
    return out


def energies(u: np.ndarray, grid: GridSpec, spec: PotentialSpec, g: np.ndarray,
             weight: WeightSpec | None) -> tuple:
    """(E_phi, E_phi + (u phi, g)) with E_phi = 1/2 (phi, |grad u|^2) + (phi, F(u))."""
    w = node_weight(grid, weight)
    e = 0.5 * weighted_grad_sq(u, grid, weight) + float(np.sum(w * spec.F(u))) * grid.cell_volume
    return e, e + float(np.sum(w * u * g)) * grid.cell_volume


def identity_terms(u: np.ndarray, u_t: np.ndarray, mu: np.ndarray, grid: GridSpec,
                   weight: WeightSpec | None) -> tuple:
    """Discrete (phi,|grad mu|^2), (u_t, phi' d1 u) and (d1 mu, phi' mu).

    The weight-derivative terms are defined as the exact remainders of summation
    by parts, so the semi-discrete energy identity holds with no spatial error.
    """
    ops = operators(grid)
    w = node_weight(grid, weight)
    vol = grid.cell_volume
    grad_mu = weighted_grad_sq(mu, grid, weight)
    lap_u = ops.laplacian(u)
    term_u = float(np.sum((weighted_laplacian(u, grid, weight) - w * lap_u) * u_t)) * vol
    term_mu = -float(np.sum(w * mu * ops.laplacian(mu))) * vol - grad_mu
    return grad_mu, term_u, term_mu


def step_energy_residual(u_prev: np.ndarray, u: np.ndarray, mu: np.ndarray, dt: float, grid: GridSpec,
                         spec: PotentialSpec, g: np.ndarray, weight: WeightSpec | None) -> float:
    _, e_prev = energies(u_prev, grid, spec, g, weight)
    _, e_new = energies(u, grid, spec, g, weight)
    grad_mu, term_u, term_mu = identity_terms(u, (u - u_prev) / dt, mu, grid, weight)
    return (e_new - e_prev) / dt + grad_mu + term_u + term_mu


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------
@dataclass
class TrajectoryRecord:
    grid: GridSpec
    spec: PotentialSpec
    g: np.ndarray
    weight: WeightSpec | None
    dt: float
    scheme: str = "convex_splitting"
    label: str = ""
    times: list = field(default_factory=list)
    series: dict = field(default_factory=lambda: {k: [] for k in SERIES + EXTRA_SERIES})
    snapshot_times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    def array(self, name: str) -> np.ndarray:
        return np.asarray(self.series[name], dtype=float)

    @property
    def final_state(self) -> State:
        return State(self.snapshot_times[-1], ScalarField(self.grid, self.snapshots[-1]))

    def quantity(self, name: str, k: int) -> np.ndarray:
        u = self.snapshots[k]
        if name in ("u", "grad_u"):
            return u
        if name == "f_u":
            return self.spec.f(u)
        if name == "lap_u":
            return operators(self.grid).laplacian(u)
        if name in ("mu", "grad_mu"):
            return -operators(self.grid).laplacian(u) + self.spec.f(u) + self.g
        raise KeyError(f"unknown quantity {name!r}")

    def phase_functional(self) -> np.ndarray:
        """||u||_{H^1_b}^2 + ||F(u)||_{L^1_b} along the recorded times."""
        return self.array("u_H1b") ** 2 + self.array("F_L1b")


def _record(rec: TrajectoryRecord, t: float, u: np.ndarray, u_prev, mu: np.ndarray, mu_pure: np.ndarray,
            flux: float, dt: float, windows: WindowSet, newton_its: int):
    grid, spec, g, weight = rec.grid, rec.spec, rec.g, rec.weight
    ops = operators(grid)
    s = rec.series
    e_phi, e_plus = energies(u, grid, spec, g, weight)
    e_plain, _ = energies(u, grid, spec, g, None)
    fu = spec.f(u)
    if u_prev is None:
        u_t = ops.laplacian(mu_pure)
        residual = 0.0
    else:
        u_t = (u - u_prev) / dt
        residual = step_energy_residual(u_prev, u, mu, dt, grid, spec, g, weight)
    s["E_phi"].append(e_phi)
    s["E_plus_ug"].append(e_plus)
    s["grad_mu_L2phi"].append(math.sqrt(weighted_grad_sq(mu, grid, weight)))
    s["u_H1b"].append(math.sqrt(max(float(np.max(_window_values(u, grid, windows, 2.0, 1))), 0.0)))
    s["F_L1b"].append(float(np.max(_window_values(spec.F(u), grid, windows, 1.0, 0))))
    s["f_u_L2b"].append(math.sqrt(float(np.max(_window_values(fu, grid, windows, 2.0, 0)))))
    s["f_Linf"].append(float(np.max(np.abs(fu))) if fu.size else 0.0)
    s["min_separation"].append(1.0 - float(np.max(np.abs(u))))
    s["mass"].append(float(np.sum(u)) * grid.cell_volume)
    s["boundary_flux"].append(flux)
    s["dtu_Hm1phi"].append(hminus1_norm(u_t, grid, weight) if np.any(u_t) else 0.0)
    s["energy_residual"].append(residual)
    s["E"].append(e_plain)
    s["grad_mu_pure_L2phi"].append(math.sqrt(weighted_grad_sq(mu_pure, grid, weight)))
    s["newton_iterations"].append(float(newton_its))
    rec.times.append(t)


def integrate(u0: ScalarField, T: float, spec: PotentialSpec, g: ScalarField | None = None,
              cfg: SolverConfig = SolverConfig(), windows: WindowSet | None = None,
              weight: WeightSpec | None = None, label: str = "", t0: float = 0.0) -> TrajectoryRecord:
    """Step from ``u0`` at time ``t0`` for ``round(T/dt)`` steps, recording every series."""
    if not T >= cfg.dt * (1.0 - 1e-12):
        raise ValueError("horizon T must be at least one time step")
    grid = u0.grid
    windows = windows or WindowSet(grid)
    gv = np.array(_g_values(g, grid), dtype=float)
    n_steps = int(round(T / cfg.dt))
    _admissible(spec, u0.values, cfg.admissibility_margin)
    rec = TrajectoryRecord(grid, spec, gv, weight, cfg.dt, cfg.scheme, label)
    ops = operators(grid)
    u = u0.values.copy()
    mu0 = -ops.laplacian(u) + spec.f(u) + gv
    flux0 = float(np.sum(ops.laplacian(mu0))) * grid.cell_volume
    _record(rec, t0, u, None, mu0, mu0, flux0, cfg.dt, windows, 0)
    rec.snapshot_times.append(t0)
    rec.snapshots.append(u.copy())
    flux_acc, steps_acc = 0.0, 0
    for k in range(1, n_steps + 1):
        t = t0 + k * cfg.dt
        try:
            res = _step(u, spec, gv, cfg, grid)
        except (NewtonFailure, DomainViolation, Instability) as exc:
            exc.args = (f"{exc.args[0] if exc.args else exc} [at t = {t - cfg.dt:.6g}]",) + exc.args[1:]
            exc.failed_time = t - cfg.dt
            raise
        flux_acc += res.flux
        steps_acc += 1
        if k % cfg.record_every == 0 or k == n_steps:
            mu_pure = -ops.laplacian(res.u) + spec.f(res.u) + gv
            _record(rec, t, res.u, u, res.mu, mu_pure, flux_acc / steps_acc, cfg.dt, windows,
                    res.iterations)
            flux_acc, steps_acc = 0.0, 0
        if k % cfg.snapshot_every == 0 or k == n_steps:
            rec.snapshot_times.append(t)
            rec.snapshots.append(res.u.copy())
        u = res.u
    return rec


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------
def _sine_basis(n_cells: int) -> np.ndarray:
    """S[i, k] = sin(pi (k+1) (i+1) / n_cells) for interior node i and mode k+1."""
    idx = np.arange(1, n_cells)
    return np.sin(np.pi * np.outer(idx, idx) / n_cells)


def _rough_coefficients(grid: GridSpec, seed: int) -> np.ndarray:
    shape = grid.shape
    z = np.empty(shape)
    for k in range(shape[0]):
        # one stream per axial mode keeps low modes fixed under refinement
        rng = np.random.default_rng([int(seed), k + 1])
        z[k] = rng.standard_normal(shape[1:])
    modes = np.meshgrid(*[np.arange(1, n + 1) for n in shape], indexing="ij")
    lengths = (2.0 * grid.L,) + (1.0,) * (grid.ndim - 1)
    kappa = np.sqrt(sum((m / ell) ** 2 for m, ell in zip(modes, lengths)))
    return z / kappa


def make_initial_data(kind: str, amplitude: float, seed: int, grid: GridSpec,
                      spec: PotentialSpec | None = None, modes: tuple = (1, 1, 1),
                      margin: float = 1e-4) -> ScalarField:
    """Seeded initial conditions.

    ``rough_hminus1`` is a random sine series with mode amplitude ~ a/|k|: its
    H^{-1} norm is O(a) at any resolution while the H^1 norm grows with it.
    """
    if kind not in INITIAL_KINDS:
        raise ValueError(f"unknown initial data {kind!r}; expected one of {INITIAL_KINDS}")
    a = float(amplitude)
    shape = grid.shape
    if kind == "zero" or a == 0.0:
        u = np.zeros(shape)
    elif kind == "tanh_interface":
        x1 = grid.coords()[0]
        u = a * np.tanh(x1 / math.sqrt(2.0))
    elif kind == "spinodal_noise":
        u = np.random.default_rng(int(seed)).uniform(-a, a, size=shape)
    elif kind == "eigenmode":
        u = np.full(shape, a)
        for axis, n in enumerate(grid.cells):
            m = modes[axis] if axis < len(modes) else 1
            prof = np.sin(np.pi * m * np.arange(1, n) / n)
            u = u * prof.reshape((1,) * axis + (-1,) + (1,) * (grid.ndim - axis - 1))
    else:
        c = a * _rough_coefficients(grid, seed)
        u = c
        for axis, n in enumerate(grid.cells):
            u = np.moveaxis(np.tensordot(_sine_basis(n), u, axes=([1], [axis])), 0, axis)
    if spec is not None and spec.singular and u.size and np.max(np.abs(u)) > 1.0 - margin:
        raise DomainViolation(f"amplitude {a} gives max|u| = {np.max(np.abs(u)):.4g}, "
                              f"not admissible for the {spec.kind} potential")
    return ScalarField(grid, u)


def with_dt(cfg: SolverConfig, dt: float) -> SolverConfig:
    return replace(cfg, dt=dt)
