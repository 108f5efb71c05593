"""Nonlinearities f = f0 - K*u for the Cahn-Hilliard chemical potential.

Three families are supported:

* ``polynomial``  -- f0 is a polynomial (ascending ``coefficients``) with odd
  degree and positive leading coefficient; defined on the whole real line.
* ``powerlaw``    -- f0(u) = u / (1 - u^2)^gamma on (-1, 1).
* ``logarithmic`` -- f0(u) = log((1 + u) / (1 - u)) on (-1, 1).

F is the antiderivative of f with F(0) = 0 and ``F_half`` is the antiderivative
of sqrt(f0'), also vanishing at zero.  All evaluators accept scalars or numpy
arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import integrate

from .errors import DomainViolation, QuadratureFailure

KINDS = ("polynomial", "powerlaw", "logarithmic")

# evaluation is refused closer than this to the singular endpoints
EVAL_MARGIN = 1e-9
QUAD_RTOL = 1e-10
UNIQUENESS_GAMMA = 5.0 / 3.0


@dataclass(frozen=True)
class PotentialSpec:
    kind: str = "polynomial"
    K: float = 1.0
    coefficients: tuple = (0.0, 0.0, 0.0, 1.0)
    gamma: float = 2.0
    _poly: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")
        if not (self.K >= 0 and math.isfinite(self.K)):
            raise ValueError("K must be a finite nonnegative number")
        coeffs = np.trim_zeros(np.asarray(self.coefficients, dtype=float), "b")
        if self.kind == "polynomial" and coeffs.size:
            degree = coeffs.size - 1
            if coeffs[-1] <= 0 or degree % 2 == 0:
                raise ValueError("polynomial f0 needs odd degree and a positive leading coefficient")
        if self.kind == "powerlaw" and not self.gamma > 0:
            raise ValueError("power-law exponent gamma must be positive")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        object.__setattr__(self, "_poly", coeffs if coeffs.size else np.zeros(1))

    @classmethod
    def polynomial(cls, coefficients, K=1.0):
        return cls("polynomial", K=float(K), coefficients=tuple(coefficients))

    @classmethod
    def cubic(cls):
        """The double well f(u) = u^3 - u."""
        return cls.polynomial((0.0, 0.0, 0.0, 1.0), K=1.0)

    @classmethod
    def power_law(cls, gamma, K=1.0):
        return cls("powerlaw", K=float(K), gamma=float(gamma))

    @classmethod
    def logarithmic(cls, K=1.0):
        return cls("logarithmic", K=float(K))

    @property
    def singular(self) -> bool:
        return self.kind != "polynomial"

    @property
    def degree(self) -> int:
        return self._poly.size - 1

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "K": self.K}
        if self.kind == "polynomial":
            d["coefficients"] = list(self.coefficients)
        if self.kind == "powerlaw":
            d["gamma"] = self.gamma
        return d

    # -- evaluators -----------------------------------------------------
    def check(self, u, margin: float = EVAL_MARGIN):
        u = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(u)):
            raise DomainViolation("non-finite order parameter")
        if self.singular and u.size and np.max(np.abs(u)) > 1.0 - margin:
            raise DomainViolation(
                f"|u| = {np.max(np.abs(u)):.12g} exceeds 1 - {margin:g} for the {self.kind} potential")
        return u

    def f0(self, u):
        u = self.check(u)
        if self.kind == "polynomial":
            return npoly.polyval(u, self._poly)
        if self.kind == "powerlaw":
            return u * np.exp(-self.gamma * np.log1p(-u * u))
        return np.log1p(u) - np.log1p(-u)

    def f0_prime(self, u):
        u = self.check(u)
        if self.kind == "polynomial":
            return npoly.polyval(u, npoly.polyder(self._poly)) + 0.0 * u
        if self.kind == "powerlaw":
            g = self.gamma
            return (1.0 + (2.0 * g - 1.0) * u * u) * np.exp(-(g + 1.0) * np.log1p(-u * u))
        return 2.0 / ((1.0 - u) * (1.0 + u))

    def f(self, u):
        u = np.asarray(u, dtype=float)
        return self.f0(u) - self.K * u

    def f_prime(self, u):
        return self.f0_prime(u) - self.K

    def F0(self, u):
        """Antiderivative of f0 vanishing at 0."""
        u = self.check(u)
        if self.kind == "polynomial":
            return npoly.polyval(u, npoly.polyint(self._poly))
        if self.kind == "powerlaw":
            g = self.gamma
            lg = np.log1p(-u * u)
            if g == 1.0:
                return -0.5 * lg
            return np.expm1((1.0 - g) * lg) / (2.0 * (g - 1.0))
        return (1.0 + u) * np.log1p(u) + (1.0 - u) * np.log1p(-u)

    def F(self, u):
        u = np.asarray(u, dtype=float)
        return self.F0(u) - 0.5 * self.K * u * u

    def F_half(self, u):
        """Integral of sqrt(max(f0', 0)) from 0 to u."""
        u = self.check(u)
        if self.kind == "logarithmic":
            return math.sqrt(2.0) * np.arcsin(u)
        if self.kind == "polynomial":
            nz = np.flatnonzero(self._poly)
            if nz.size == 0:
                return np.zeros_like(u)
            if nz.size == 1:
                p, c = int(nz[0]), self._poly[nz[0]]
                if p == 0:
                    return np.zeros_like(u)
                e = 0.5 * (p + 1)
                return math.sqrt(p * c) * np.sign(u) * np.abs(u) ** e / e
        return _quad_vectorized(self._sqrt_f0_prime, u)

    def _sqrt_f0_prime(self, v: float) -> float:
        return math.sqrt(max(float(self.f0_prime(v)), 0.0))


class PotentialValues(NamedTuple):
    f: object
    f_prime: object
    F: object
    f0: object
    F_half: object


def _quad_scalar(fun, x: float) -> float:
    if x == 0.0:
        return 0.0
    val, err, info = integrate.quad(fun, 0.0, x, epsabs=0.0, epsrel=QUAD_RTOL, limit=400,
                                    full_output=True)[:3]
    if not err <= max(QUAD_RTOL * abs(val), 1e-14) * 10:
        raise QuadratureFailure(f"quadrature on [0, {x}] reached error {err:.2e} (value {val:.6g})")
    return val


def _quad_vectorized(fun, u: np.ndarray) -> np.ndarray:
    flat = u.ravel()
    uniq, inverse = np.unique(flat, return_inverse=True)
    vals = np.array([_quad_scalar(fun, float(x)) for x in uniq])
    out = vals[inverse].reshape(u.shape)
    return out if u.ndim else float(out)


def evaluate_potential(spec: PotentialSpec, u) -> PotentialValues:
    u = spec.check(u)
    return PotentialValues(f=spec.f(u), f_prime=spec.f_prime(u), F=spec.F(u), f0=spec.f0(u),
                           F_half=spec.F_half(u))


def admissible_interval(spec: PotentialSpec) -> tuple[float, float]:
    if spec.singular:
        return (-1.0, 1.0)
    return (-math.inf, math.inf)


# ---------------------------------------------------------------------------
# structural conditions
# ---------------------------------------------------------------------------
@dataclass
class ValidationReport:
    regular_conditions: dict
    singular_conditions: dict
    measured_constants: dict
    uniqueness_threshold: bool | None

    def to_dict(self) -> dict:
        return {
            "regular_conditions": dict(self.regular_conditions),
            "singular_conditions": dict(self.singular_conditions),
            "measured_constants": dict(self.measured_constants),
            "uniqueness_threshold": self.uniqueness_threshold,
        }


def _stable(small: float, large: float) -> bool:
    # a sampled sup is "finite" when widening the sampling range does not raise it
    return math.isfinite(large) and large <= small * (1.0 + 1e-9) + 1e-12


def _regular_report(spec: PotentialSpec, samples: int, R: float) -> tuple[dict, dict]:
    conds, consts = {}, {}

    def measures(r):
        u = np.linspace(-r, r, samples)
        f, fp, F = spec.f(u), spec.f_prime(u), spec.F(u)
        C = max(0.0, -float(np.min(f * u)))
        K_min = max(0.0, -float(np.min(fp)))
        shift = 1.0 - min(0.0, float(np.min(F)))
        C1 = float(np.max(np.abs(fp) / (F + shift)))
        return u, C, K_min, C1, shift

    u, C, K_min, C1, shift = measures(R)
    _, C_w, K_w, C1_w, shift_w = measures(2.0 * R)
    conds["continuous_derivative"] = True
    conds["f_times_u_bounded_below"] = _stable(C, C_w)
    conds["f_prime_bounded_below"] = _stable(K_min, K_w)
    conds["monotone_split"] = bool(np.all(spec.f0_prime(u) >= -1e-12))
    p = spec.degree
    tail = np.abs(u) >= 0.5 * R
    if p >= 1:
        growth = float(np.min((spec.f(u[tail]) * u[tail] + C) / np.abs(u[tail]) ** (p + 1)))
    else:
        growth = 0.0
    conds["polynomial_growth"] = growth > 0.0
    conds["derivative_controlled_by_F"] = _stable(C1, C1_w)
    consts.update({"C": C, "K_min": K_min, "K": spec.K, "C1_growth": growth,
                   "C1": C1_w, "C2": C1_w * shift_w, "degree": float(p)})
    return conds, consts


def _endpoint_sequence(fun, kmin=1, kmax=9):
    ks = np.arange(kmin, kmax + 1)
    return fun(1.0 - 10.0 ** (-ks.astype(float))), fun(-1.0 + 10.0 ** (-ks.astype(float)))


def _diverges(seq: np.ndarray) -> bool:
    inc = np.diff(seq)
    return bool(np.all(inc > 0) and inc[-1] >= 0.5 * inc[0])


def _singular_report(spec: PotentialSpec, samples: int) -> tuple[dict, dict]:
    conds, consts = {}, {}
    u = np.linspace(-1.0 + 1e-6, 1.0 - 1e-6, samples)
    f = spec.f(u)
    conds["continuous_derivative"] = True
    fp_right, fp_left = _endpoint_sequence(spec.f)
    conds["f_blows_up"] = _diverges(fp_right) and _diverges(-fp_left)
    dp_right, dp_left = _endpoint_sequence(spec.f_prime)
    conds["f_prime_blows_up"] = _diverges(dp_right) and _diverges(dp_left)
    C = max(0.0, -float(np.min(f * u)))
    conds["f_times_u_bounded_below"] = math.isfinite(C)
    conds["monotone_split"] = bool(np.all(spec.f0_prime(u) >= -1e-12))
    # |f'| <= a3 |f|^(8/5) + C3: the ratio must stay bounded approaching +-1
    ks = np.arange(2, 10).astype(float)
    uk = 1.0 - 10.0 ** (-ks)
    ratio = np.abs(spec.f_prime(uk)) / (np.abs(spec.f(uk)) ** 1.6 + 1.0)
    conds["strong_singularity"] = bool(ratio[-1] <= 1.05 * np.max(ratio[:-1]))
    consts.update({"C": C, "K": spec.K, "K_min": max(0.0, -float(np.min(spec.f_prime(u)))),
                   "alpha3": float(np.max(ratio)), "ratio_growth_last_decade": float(ratio[-1] / ratio[-2])})
    if spec.kind == "powerlaw":
        consts["gamma"] = spec.gamma
    return conds, consts


def validate_spec(spec: PotentialSpec, samples: int = 2001) -> ValidationReport:
    """Sample f, f', F and report which structural conditions hold.

    Constants are the smallest ones consistent with the samples; nothing in
    ``spec`` is modified.
    """
    if samples < 100:
        raise ValueError("validate_spec needs at least 100 samples")
    if spec.singular:
        conds, consts = _singular_report(spec, samples)
        threshold = bool(spec.gamma >= UNIQUENESS_GAMMA) if spec.kind == "powerlaw" else False
        return ValidationReport({}, conds, consts, threshold)
    conds, consts = _regular_report(spec, samples, R=10.0)
    return ValidationReport(conds, {}, consts, conds["derivative_controlled_by_F"])
