import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cylch.errors import DomainViolation
from cylch.potentials import (EVAL_MARGIN, PotentialSpec, admissible_interval, evaluate_potential,
                              validate_spec)

SPECS = [PotentialSpec.cubic(), PotentialSpec.power_law(5 / 3, 1.0), PotentialSpec.power_law(2.0, 0.5),
         PotentialSpec.logarithmic(1.0), PotentialSpec.polynomial((0, 1, 0, 2, 0, 1), 3.0)]
inner = st.floats(-0.999, 0.999, allow_nan=False)


def test_log_origin_is_zero():
    v = evaluate_potential(PotentialSpec.logarithmic(1.0), 0.0)
    assert v.f == v.F == v.f0 == v.F_half == 0.0


def test_log_half_matches_closed_forms():
    u = 0.5
    v = evaluate_potential(PotentialSpec.logarithmic(1.0), u)
    f0 = math.log(1.5 / 0.5)
    F0 = 1.5 * math.log(1.5) + 0.5 * math.log(0.5)
    assert v.f0 == pytest.approx(f0, rel=1e-14)
    assert v.f == pytest.approx(f0 - u, rel=1e-14)
    assert v.F == pytest.approx(F0 - u * u / 2, rel=1e-13)
    assert v.F_half == pytest.approx(math.sqrt(2) * math.asin(u), rel=1e-14)
    assert (round(float(v.f), 4), round(float(v.f0), 4), round(float(v.F), 4), round(float(v.F_half), 4)) == \
        (0.5986, 1.0986, 0.1366, 0.7405)


def test_cubic_at_two():
    v = evaluate_potential(PotentialSpec.cubic(), 2.0)
    assert (float(v.f), float(v.f0)) == (6.0, 8.0)


def test_power_law_F_against_quadrature():
    from scipy.integrate import quad
    spec = PotentialSpec.power_law(5 / 3, 1.0)
    for u in (-0.9, 0.3, 0.99):
        ref = quad(lambda v: v / (1 - v * v) ** (5 / 3) - v, 0, u, epsabs=0, epsrel=1e-13)[0]
        assert float(spec.F(u)) == pytest.approx(ref, rel=1e-10)


def test_admissible_intervals():
    assert admissible_interval(PotentialSpec.logarithmic()) == (-1.0, 1.0)
    assert admissible_interval(PotentialSpec.power_law(2.0)) == (-1.0, 1.0)
    assert admissible_interval(PotentialSpec.cubic()) == (-math.inf, math.inf)


@pytest.mark.parametrize("spec", [PotentialSpec.logarithmic(), PotentialSpec.power_law(2.0)])
def test_singular_refuses_outside_margin(spec):
    with pytest.raises(DomainViolation):
        spec.f(1.0)
    with pytest.raises(DomainViolation):
        spec.F_half(np.array([0.0, -1.0 + EVAL_MARGIN / 2]))
    spec.f(1.0 - 2 * EVAL_MARGIN)


def test_invalid_specs():
    with pytest.raises(ValueError):
        PotentialSpec.polynomial((0, 0, 1))  # even degree
    with pytest.raises(ValueError):
        PotentialSpec.polynomial((0, 0, 0, -1))
    with pytest.raises(ValueError):
        PotentialSpec.power_law(0.0)
    with pytest.raises(ValueError):
        PotentialSpec.logarithmic(-1.0)


def test_uniqueness_threshold():
    assert validate_spec(PotentialSpec.power_law(5 / 3, 1.0)).uniqueness_threshold is True
    assert validate_spec(PotentialSpec.power_law(1.0, 1.0)).uniqueness_threshold is False
    rep = validate_spec(PotentialSpec.power_law(5 / 3, 1.0))
    assert rep.singular_conditions["strong_singularity"]
    assert not validate_spec(PotentialSpec.power_law(1.0, 1.0)).singular_conditions["strong_singularity"]


def test_cubic_regular_clauses():
    rep = validate_spec(PotentialSpec.cubic())
    assert all(rep.regular_conditions.values())
    c = rep.measured_constants
    assert math.isfinite(c["C1"]) and math.isfinite(c["C2"])
    # |3u^2 - 1| <= C1 F + C2 on a denser, wider grid; 1% slack for the sampled sup
    u = np.linspace(-40, 40, 200001)
    F = u ** 4 / 4 - u ** 2 / 2
    assert np.all(np.abs(3 * u ** 2 - 1) <= 1.01 * (c["C1"] * F + c["C2"]))


def test_log_singular_clauses_and_no_mutation():
    spec = PotentialSpec.logarithmic(2.0)
    before = spec.to_dict()
    rep = validate_spec(spec, samples=500)
    assert rep.singular_conditions["f_blows_up"] and rep.singular_conditions["monotone_split"]
    assert rep.uniqueness_threshold is False
    assert spec.to_dict() == before


def test_validate_needs_samples():
    with pytest.raises(ValueError):
        validate_spec(PotentialSpec.cubic(), samples=99)


@pytest.mark.parametrize("spec", SPECS)
@given(u=inner)
def test_split_identity(spec, u):
    assert float(spec.f0(u)) == pytest.approx(float(spec.f(u)) + spec.K * u, rel=1e-14, abs=1e-14)


@pytest.mark.parametrize("spec", SPECS)
@given(a=inner, b=inner)
def test_f0_monotone(spec, a, b):
    lo, hi = min(a, b), max(a, b)
    assert float(spec.f0(lo)) <= float(spec.f0(hi)) + 1e-12


@pytest.mark.parametrize("spec", SPECS)
@given(u=inner)
def test_oddness(spec, u):
    assert float(spec.f(-u)) == pytest.approx(-float(spec.f(u)), abs=1e-13)
    assert float(spec.F(-u)) == pytest.approx(float(spec.F(u)), abs=1e-13)
    assert float(spec.F_half(-u)) == pytest.approx(-float(spec.F_half(u)), abs=1e-9)


@pytest.mark.parametrize("spec", SPECS)
@pytest.mark.parametrize("u", [-0.7, 0.1, 0.6])
def test_derivative_consistency(spec, u):
    # central-difference errors must fall ~4x per step halving
    def errs(fun, deriv):
        out = []
        for h in (1e-2, 5e-3, 2.5e-3):
            out.append(abs((fun(u + h) - fun(u - h)) / (2 * h) - deriv(u)))
        return out

    for fun, deriv in ((spec.F, spec.f), (spec.F_half, lambda x: math.sqrt(spec.f0_prime(x)))):
        e = errs(lambda x: float(fun(x)), lambda x: float(deriv(x)))
        assert e[0] < 1e-2
        # O(h^2), with a floor for antiderivatives the difference quotient resolves exactly
        assert e[1] <= 0.3 * e[0] + 1e-10 and e[2] <= 0.3 * e[1] + 1e-10


def test_f_half_polynomial_closed_form_vs_quadrature():
    spec = PotentialSpec.polynomial((0, 1, 0, 2, 0, 1))
    from scipy.integrate import quad
    for u in (0.3, -1.7):
        ref = quad(lambda v: math.sqrt(1 + 6 * v * v + 5 * v ** 4), 0, u, epsrel=1e-12)[0]
        assert float(spec.F_half(u)) == pytest.approx(ref, rel=1e-9)
    cubic = PotentialSpec.cubic()
    assert float(cubic.F_half(0.8)) == pytest.approx(math.sqrt(3) * 0.8 ** 2 / 2, rel=1e-14)
