"""Empirical checks of the dissipative, smoothing, Lipschitz and separation estimates.

Every check returns a :class:`CheckEntry`; a :class:`DiagnosticsReport` collects
them and serializes to stable-key JSON.  Fitted constants are least squares on
log-transformed series after discarding the first 5% of samples.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .domain import ScalarField, operators, pad_zero
from .dynamics import (SolverConfig, TrajectoryRecord, _g_values, energies, integrate,
                       step_energy_residual)
from .errors import DegenerateDirection, InsufficientSnapshots, NotSingular
from .potentials import PotentialSpec
from .weights import (WeightSpec, WindowSet, _node_density, edge_weights, hminus1_norm,
                      uniformly_local_norm, window_integrals)

TRANSIENT_FRACTION = 0.05
TAIL_FRACTION = 0.2


@dataclass
class CheckEntry:
    name: str
    estimate: str
    passed: bool
    measured: dict = field(default_factory=dict)
    tolerance_used: dict = field(default_factory=dict)
    notes: str = ""
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {"name": self.name, "estimate": self.estimate, "pass": bool(self.passed),
                "measured": _clean(self.measured), "tolerance_used": _clean(self.tolerance_used),
                "notes": self.notes, "degenerate": bool(self.degenerate)}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass
class DiagnosticsReport:
    entries: list = field(default_factory=list)
    error: str | None = None

    def add(self, entry: CheckEntry) -> CheckEntry:
        self.entries.append(entry)
        return entry

    @property
    def passed(self) -> bool:
        return self.error is None and all(e.passed for e in self.entries)

    def to_dict(self) -> dict:
        return {"pass": self.passed, "error": self.error, "checks": [e.to_dict() for e in self.entries]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def fit_line(x: np.ndarray, y: np.ndarray, discard: float = TRANSIENT_FRACTION) -> tuple:
    """Least-squares (slope, intercept, rms residual) after dropping the leading transient."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    start = int(math.floor(discard * x.size))
    x, y = x[start:], y[start:]
    if x.size < 2:
        return math.nan, math.nan, math.nan
    slope, intercept = np.polyfit(x, y, 1)
    rms = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return float(slope), float(intercept), rms


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------
def energy_functional(u: ScalarField, spec: PotentialSpec, g: ScalarField | None = None,
                      weight: WeightSpec | None = None) -> dict:
    spec.check(u.values)
    e, e_plus = energies(u.values, u.grid, spec, _g_values(g, u.grid), weight)
    return {"E_phi": e, "E_plus": e_plus}


def energy_identity_residual(record: TrajectoryRecord, spec: PotentialSpec | None = None,
                             g: ScalarField | None = None, weight: WeightSpec | None = None,
                             t_range: tuple | None = None) -> dict:
    """Per-step residual of the weighted energy identity from consecutive snapshots.

    d/dt is the backward difference; mu is the scheme-consistent chemical
    potential of the step, so for weight 1 the residual is the defect of the
    discrete energy law.
    """
    spec = spec or record.spec
    grid = record.grid
    gv = record.g if g is None else _g_values(g, grid)
    weight = record.weight if weight is None else weight
    times = np.asarray(record.snapshot_times)
    lo, hi = (times[0], times[-1]) if t_range is None else t_range
    ops = operators(grid)
    out_t, out_r = [], []
    for k in range(1, times.size):
        t = times[k]
        if t <= lo + 1e-12 or t > hi + 1e-12:
            continue
        dt = t - times[k - 1]
        if abs(dt - record.dt) > 1e-9 * record.dt:
            raise InsufficientSnapshots("energy identity needs snapshots at consecutive steps")
        u_prev, u = record.snapshots[k - 1], record.snapshots[k]
        if record.scheme == "convex_splitting":
            mu = -ops.laplacian(u) + spec.f0(u) - spec.K * u_prev + gv
        else:
            mu = -ops.laplacian(u) + spec.f(u) + gv
        out_t.append(t)
        out_r.append(step_energy_residual(u_prev, u, mu, dt, grid, spec, gv, weight))
    if len(out_r) == 0:
        raise InsufficientSnapshots("no consecutive snapshot pairs in the requested interval")
    series = np.array(out_r)
    return {"times": out_t, "series": series.tolist(),
            "integrated_abs": float(np.sum(np.abs(series)) * record.dt)}


def energy_stability_check(record: TrajectoryRecord, tol: float = 1e-10) -> CheckEntry:
    """Unweighted energy must not increase between consecutive recorded steps."""
    E = record.array("E")
    jumps = np.diff(E)
    worst = float(np.max(jumps)) if jumps.size else 0.0
    forced = bool(np.any(record.g))
    return CheckEntry("energy_stability", "discrete energy decay (convex splitting, g = 0)",
                      passed=(worst <= tol) or forced,
                      measured={"max_increase": worst, "steps": int(jumps.size), "forced": forced},
                      tolerance_used={"max_increase": tol},
                      notes="not applicable with nonzero forcing" if forced else "")


# ---------------------------------------------------------------------------
# dissipativity
# ---------------------------------------------------------------------------
def l2_l6_ul_norm(record: TrajectoryRecord, t0: float, stride: float = 1.0) -> float:
    """sup over unit-stride windows of ||f(u)||_{L^2(t0, t0+1; L^6(window))}."""
    grid = record.grid
    windows = WindowSet(grid, stride=stride)
    times = np.asarray(record.snapshot_times)
    sel = np.flatnonzero((times >= t0 - 1e-9) & (times <= t0 + 1.0 + 1e-9))
    if sel.size < 4:
        raise InsufficientSnapshots(f"need >= 4 snapshots in [{t0}, {t0 + 1}]")
    rows = []
    for k in sel:
        fu = record.spec.f(record.snapshots[k])
        node = _node_density(fu, grid, 6.0)
        l6 = np.maximum(window_integrals(node, np.zeros(grid.nx), grid, windows.anchor_index), 0.0)
        rows.append(l6 ** (1.0 / 3.0))
    return float(np.max(trapezoid(np.array(rows), times[sel], axis=0))) ** 0.5


def dissipativity_report(records: list, g: ScalarField | None = None, *, plateau_tol: float = 0.10,
                         bound_factor: float = 1.05, floor: float = 1e-9) -> CheckEntry:
    """Plateau agreement and exponential decay of the excess over the plateau.

    For each record N(t) = ||u||_{H^1_b}^2 + ||F(u)||_{L^1_b}.  The plateau is
    the median of N over the last 20% of the horizon and "eventually bounded"
    means max N there is within ``bound_factor`` of it.  The decay rate is fitted
    on the largest-datum record over samples whose excess exceeds ``floor``
    times the plateau.
    """
    name, estimate = "dissipativity", "dissipative estimate in uniformly local norms"
    if len(records) < 2:
        raise ValueError("dissipativity needs at least two records")
    measured, plateaus, bounded, finite = {}, [], [], True
    for rec in records:
        N = rec.phase_functional()
        finite &= bool(np.all(np.isfinite(N)) and np.all(np.isfinite(rec.array("grad_mu_L2phi")))
                       and np.all(np.isfinite(rec.array("f_u_L2b"))))
        t = np.asarray(rec.times)
        tail = t >= t[0] + (1.0 - TAIL_FRACTION) * (t[-1] - t[0])
        p = float(np.median(N[tail]))
        plateaus.append(p)
        bounded.append(bool(np.max(N[tail]) <= bound_factor * p + 1e-12))
        measured[f"plateau[{rec.label}]"] = p
        measured[f"initial[{rec.label}]"] = float(N[0])
    top = max(plateaus)
    if top <= 1e-14 and all(float(r.phase_functional()[0]) <= 1e-14 for r in records):
        return CheckEntry(name, estimate, True, measured, {"plateau_rel": plateau_tol},
                          "all records identically zero; decay rate undefined", degenerate=True)
    spread = (max(plateaus) - min(plateaus)) / top if top > 0 else 0.0
    i_big = max(range(len(records)), key=lambda i: float(records[i].phase_functional()[0]))
    big = records[i_big]
    N = big.phase_functional()
    t = np.asarray(big.times)
    p = plateaus[i_big]
    excess = np.maximum(N - p, 0.0)
    keep = excess > floor * max(p, 1.0)
    # contiguous decaying head only
    stop = int(np.argmin(keep)) if not np.all(keep) else keep.size
    alpha, intercept, rms = math.nan, math.nan, math.nan
    if stop >= 3:
        slope, intercept, rms = fit_line(t[:stop], np.log(excess[:stop]))
        alpha = -slope
    l6 = []
    for rec in records:
        horizon = rec.snapshot_times[-1]
        vals = []
        for t0 in np.arange(rec.snapshot_times[0], horizon - 1.0 + 1e-9, 1.0):
            try:
                vals.append(l2_l6_ul_norm(rec, float(t0)))
            except InsufficientSnapshots:
                break
        l6.append(max(vals) if vals else math.nan)
        measured[f"f_L2L6b_max[{rec.label}]"] = l6[-1]
    l6_ok = all(math.isfinite(v) for v in l6)
    measured.update({"plateau_spread": spread, "alpha_hat": alpha, "C_hat": math.exp(intercept)
                     if math.isfinite(intercept) else math.nan, "fit_residual": rms,
                     "fit_samples": int(stop), "eventually_bounded": all(bounded), "finite": finite})
    passed = finite and all(bounded) and spread <= plateau_tol and alpha > 0 and l6_ok
    return CheckEntry(name, estimate, passed, measured,
                      {"plateau_rel": plateau_tol, "bound_factor": bound_factor, "excess_floor": floor})


# ---------------------------------------------------------------------------
# uniqueness / Lipschitz
# ---------------------------------------------------------------------------
def _ratio_series(base: TrajectoryRecord, pert: TrajectoryRecord, weight) -> tuple:
    grid = base.grid
    w0 = pert.snapshots[0] - base.snapshots[0]
    n0 = hminus1_norm(w0, grid, weight)
    if n0 < 1e-14:
        raise DegenerateDirection(f"||w(0)||_H^-1 = {n0:.2e} below 1e-14")
    r = [hminus1_norm(b - a, grid, weight) / n0 for a, b in zip(base.snapshots, pert.snapshots)]
    return np.asarray(base.snapshot_times), np.asarray(r)


def _affine_fit(t, r) -> dict:
    logr = np.log(np.maximum(r, 1e-300))
    K_hat, _, rms = fit_line(t, logr)
    C_hat = float(np.max(logr - K_hat * t))
    return {"K_hat": K_hat, "C_hat": C_hat, "fit_residual": rms}


def uniqueness_probe(u0: ScalarField, delta: float, direction: ScalarField, T: float, spec: PotentialSpec,
                     g: ScalarField | None, cfg: SolverConfig, weight: WeightSpec | None, *,
                     recenter_shift: float | None = 2.0, lin_tol: float = 0.05,
                     recenter_tol: float = 0.10) -> CheckEntry:
    """Growth of ||u1(t) - u2(t)||_{H^-1_phi} relative to its initial value.

    Two perturbations (delta and delta/10) share one base trajectory; the
    affine bound log r(t) <= C + K t is fitted, and K is refitted with the
    weight centre moved by ``recenter_shift``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    base = integrate(u0, T, spec, g, cfg, weight=weight, label="base")
    measured = {}
    fits = {}
    r_final = []
    for tag, d in (("delta", delta), ("delta_over_10", delta / 10.0)):
        w0 = d * direction.values
        if hminus1_norm(w0, u0.grid, weight) < 1e-14:
            raise DegenerateDirection("perturbation has vanishing H^-1 norm")
        pert = integrate(ScalarField(u0.grid, u0.values + w0), T, spec, g, cfg, weight=weight, label=tag)
        t, r = _ratio_series(base, pert, weight)
        fits[tag] = _affine_fit(t, r)
        r_final.append(float(r[-1]))
        measured[f"r_T[{tag}]"] = float(r[-1])
        measured[f"r_0[{tag}]"] = float(r[0])
        measured[f"r_max[{tag}]"] = float(np.max(r))
        if tag == "delta":
            measured.update(fits[tag])
            if recenter_shift is not None and weight is not None:
                shifted = weight.shifted(recenter_shift)
                ts, rs = _ratio_series(base, pert, shifted)
                fs = _affine_fit(ts, rs)
                measured["K_hat_recentered"] = fs["K_hat"]
                measured["C_hat_recentered"] = fs["C_hat"]
    lin_gap = abs(r_final[0] - r_final[1]) / max(abs(r_final[1]), 1e-300)
    measured["linearization_gap"] = lin_gap
    ok = all(math.isfinite(v) for v in (fits["delta"]["K_hat"], fits["delta"]["C_hat"])) and lin_gap <= lin_tol
    tol = {"linearization_rel": lin_tol}
    if "K_hat_recentered" in measured:
        K, Ks = measured["K_hat"], measured["K_hat_recentered"]
        gap = abs(K - Ks) / max(abs(K), 1e-300)
        measured["recentering_gap"] = gap
        tol["recentering_rel"] = recenter_tol
        ok = ok and gap <= recenter_tol
    notes = "" if spec.kind != "logarithmic" else "informational: uniqueness is not established for this potential"
    return CheckEntry("uniqueness_probe", "weighted Lipschitz continuity in H^-1", bool(ok), measured, tol, notes)


# ---------------------------------------------------------------------------
# smoothing
# ---------------------------------------------------------------------------
def smoothing_probe(u0: ScalarField, spec: PotentialSpec, g: ScalarField | None, cfg: SolverConfig,
                    weight: WeightSpec | None = None, *, t_min: float = 1e-4, t_max: float = 1e-2,
                    n_samples: int = 21, slope_min: float = -0.6, ratio_slope_min: float = -0.25) -> CheckEntry:
    """Short-time growth of the phase functional for rough data.

    The slope of log sqrt(N(u(t))) against log t is fitted on log-spaced
    samples in [t_min, t_max].  Boundedness of t ||u_t||^2_{H^-1_phi} is judged
    relative to the data it is controlled by: restarting the smoothing bound
    at t/2 gives t ||u_t(t)||^2 <= C (N(u(t/2)) + 1 + ||g||^2), so the ratio of
    the two sides must not grow as t decreases.
    """
    rec = integrate(u0, t_max, spec, g, cfg, weight=weight, label="smoothing")
    times = np.asarray(rec.times)
    N = rec.phase_functional()
    dtu = rec.array("dtu_Hm1phi")
    gv = _g_values(g, u0.grid)
    windows = WindowSet(u0.grid)
    g_b2 = uniformly_local_norm(ScalarField(u0.grid, gv), windows, 2.0, 0).value ** 2

    def nearest(t):
        return int(np.argmin(np.abs(times - t)))

    targets = np.geomspace(t_min, t_max, n_samples)
    idx = sorted({nearest(t) for t in targets if times[nearest(t)] > 0})
    ts = times[idx]
    norm = np.sqrt(N[idx])
    slope, _, rms = fit_line(np.log(ts), np.log(norm))
    q = ts * dtu[idx] ** 2
    ref = np.array([N[nearest(0.5 * t)] for t in ts]) + 1.0 + g_b2
    ratio = q / ref
    rslope, _, rrms = fit_line(np.log(ts), np.log(np.maximum(ratio, 1e-300)))
    qslope, _, _ = fit_line(np.log(ts), np.log(np.maximum(q, 1e-300)))
    u0_hm1 = hminus1_norm(u0.values, u0.grid, None)
    measured = {"slope": slope, "slope_fit_residual": rms, "samples": len(idx),
                "t_dtu_sq_max": float(np.max(q)), "t_dtu_sq_slope": qslope,
                "bound_ratio_max": float(np.max(ratio)), "bound_ratio_slope": rslope,
                "bound_ratio_fit_residual": rrms,
                "envelope_C": float(np.max(norm * np.sqrt(ts) / max(u0_hm1, 1e-300))),
                "u0_Hm1": u0_hm1, "Phi_b_initial": float(N[0])}
    finite = bool(np.all(np.isfinite(q)) and np.all(np.isfinite(norm)))
    passed = finite and slope >= slope_min and rslope >= ratio_slope_min
    return CheckEntry("smoothing_probe", "H^-1 to Phi_b smoothing for t <= 1", passed, measured,
                      {"slope_min": slope_min, "bound_ratio_slope_min": ratio_slope_min,
                       "t_range": [t_min, t_max]})


# ---------------------------------------------------------------------------
# separation
# ---------------------------------------------------------------------------
def separation_probe(record: TrajectoryRecord, spec: PotentialSpec | None = None, t_star: float = 0.1,
                     margin: float = 1e-4, tail: float = TAIL_FRACTION,
                     clearance: float = 10.0) -> CheckEntry:
    """Distance of u from +-1 after t* and the behaviour of ||f(u)||_inf.

    Passes when min(1 - |u|) over t >= t* exceeds ``clearance`` times the
    solver's admissibility margin, so the separation is not an artifact of the
    margin itself.
    """
    spec = spec or record.spec
    if not spec.singular:
        raise NotSingular("separation is only defined for singular potentials")
    t = np.asarray(record.times)
    sel = t >= t_star - 1e-12
    if not np.any(sel):
        raise InsufficientSnapshots(f"record ends before t* = {t_star}")
    sep = record.array("min_separation")[sel]
    f_inf = record.array("f_Linf")[sel]
    ts = t[sel]
    delta_hat = float(np.min(sep))
    f_max = float(np.max(f_inf))
    last = ts >= t[-1] - tail * (t[-1] - t[0])
    jumps = np.diff(f_inf[last])
    worst = float(np.max(jumps)) if jumps.size else 0.0
    non_increasing = worst <= 1e-9 * max(1.0, f_max)
    measured = {"delta_hat": delta_hat, "f_Linf_max": f_max, "f_Linf_final": float(f_inf[-1]),
                "tail_max_increase": worst, "tail_non_increasing": non_increasing}
    passed = delta_hat > clearance * margin and math.isfinite(f_max) and non_increasing
    return CheckEntry("separation_probe", "separation from the singular values +-1", passed, measured,
                      {"t_star": t_star, "margin": margin, "delta_min": clearance * margin,
                       "tail_fraction": tail})


# ---------------------------------------------------------------------------
# exact discrete identities
# ---------------------------------------------------------------------------
def _edge_diffs_of(values_padded: np.ndarray, grid) -> list:
    out = []
    for axis, h in enumerate(grid.h):
        d = np.diff(values_padded, axis=axis) / h
        idx = [slice(1, -1)] * grid.ndim
        idx[axis] = slice(None)
        out.append(d[tuple(idx)])
    return out


def f_half_identity_check(u: ScalarField, spec: PotentialSpec, weight: WeightSpec | None = None) -> dict:
    """Both sides of (div(phi grad u), f0(u)) = -(phi, |grad F_half(u)|^2).

    The left side is taken in summation-by-parts form -(phi grad u, grad f0(u))
    with edge differences, which is the exact discrete adjoint of the weighted
    Laplacian; the right side differences F_half(u) on the same edges.
    """
    grid = u.grid
    spec.check(u.values)
    p = pad_zero(u.values)
    du = _edge_diffs_of(p, grid)
    df0 = _edge_diffs_of(spec.f0(p), grid)
    dfh = _edge_diffs_of(spec.F_half(p), grid)
    ew = edge_weights(grid, weight)
    vol = grid.cell_volume
    lhs = -sum(float(np.sum(w * a * b)) for w, a, b in zip(ew, du, df0)) * vol
    rhs = -sum(float(np.sum(w * d * d)) for w, d in zip(ew, dfh)) * vol
    return {"lhs": lhs, "rhs": rhs, "gap": abs(lhs - rhs)}


def mass_balance_check(record: TrajectoryRecord) -> dict:
    """max over recorded intervals of |mass change - elapsed time * mean flux|."""
    m = record.array("mass")
    fl = record.array("boundary_flux")
    t = np.asarray(record.times)
    if m.size < 2:
        return {"max_violation": 0.0}
    viol = np.abs(np.diff(m) - np.diff(t) * fl[1:])
    return {"max_violation": float(np.max(viol))}


# ---------------------------------------------------------------------------
# absorbing ball
# ---------------------------------------------------------------------------
def h2b_series(record: TrajectoryRecord) -> np.ndarray:
    windows = WindowSet(record.grid)
    return np.array([uniformly_local_norm(ScalarField(record.grid, u), windows, 2.0, 2).value
                     for u in record.snapshots])


def absorbing_entry_time(records: list, radius: float) -> dict:
    """First snapshot time after which ||u||_{H^2_b} <= radius for at least one time unit."""
    out = {}
    for i, rec in enumerate(records):
        key = rec.label or f"record_{i}"
        if math.isinf(radius):
            out[key] = 0.0
            continue
        t = np.asarray(rec.snapshot_times)
        inside = h2b_series(rec) <= radius
        entry = math.inf
        for k in range(t.size):
            if t[k] + 1.0 > t[-1] + 1e-9:
                break
            span = (t >= t[k] - 1e-12) & (t <= t[k] + 1.0 + 1e-12)
            if np.all(inside[span]):
                entry = float(t[k])
                break
        out[key] = entry
    return out
