import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from cylch.domain import (GridSpec, ScalarField, apply_gradient, apply_laplacian, boundary_flux,
                          cg_iteration_cap, gradient_norm_sq, inner_product, inverse_laplacian,
                          solve_semilinear_elliptic)
from cylch.errors import GridMismatch, NoConvergence
from cylch.potentials import PotentialSpec

from conftest import sine_mode, unit_square

PI = math.pi
SMALL = GridSpec(L=1.0, nx=12, ny=6)
fields_small = arrays(np.float64, SMALL.shape, elements=st.floats(-3, 3, allow_nan=False))


def manufactured(n):
    """u = e^x sin(pi x) sin(pi y) on the unit square with its exact Laplacian."""
    g = unit_square(n)
    x1, y = g.coords()
    x = x1 + 0.5
    a = np.exp(x) * np.sin(PI * x)
    a2 = np.exp(x) * ((1 - PI ** 2) * np.sin(PI * x) + 2 * PI * np.cos(PI * x))
    b = np.sin(PI * y)
    return g, a * b, a2 * b - PI ** 2 * a * b


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(nx=3)
    with pytest.raises(ValueError):
        GridSpec(L=16.0, nx=100)  # 1/h not an integer
    g = GridSpec()
    assert g.shape == (255, 15) and g.hx == 0.125 and g.cells_per_unit == 8
    assert GridSpec(L=2.0, nx=16, ny=4, nz=4).ndim == 3


def test_field_checks():
    with pytest.raises(GridMismatch):
        ScalarField(SMALL, np.zeros(3))
    with pytest.raises(ValueError):
        ScalarField(SMALL, np.full(SMALL.shape, np.nan))
    with pytest.raises(GridMismatch):
        ScalarField.zeros(SMALL) + ScalarField.zeros(unit_square(8))


def test_laplacian_of_zero():
    assert not np.any(apply_laplacian(ScalarField.zeros(SMALL)).values)


def test_laplacian_eigenfunction(square):
    u = sine_mode(square)
    err = np.max(np.abs(apply_laplacian(u).values + 2 * PI ** 2 * u.values))
    lam_h = 2 * (4 / square.hx ** 2) * math.sin(PI * square.hx / 2) ** 2
    assert err == pytest.approx(abs(lam_h - 2 * PI ** 2), rel=1e-8)


@pytest.mark.parametrize("op", ["lap", "inv", "ell"])
def test_second_order_convergence(op):
    errs = []
    cubic = PotentialSpec.cubic()
    for n in (16, 32, 64):
        g, u, lu = manufactured(n)
        if op == "lap":
            approx = apply_laplacian(ScalarField(g, u)).values
            ref = lu
        elif op == "inv":
            approx, ref = inverse_laplacian(ScalarField(g, -lu), 1e-12).values, u
        else:
            ref = 0.5 * u
            approx = solve_semilinear_elliptic(ScalarField(g, 0.5 * lu - cubic.f(ref)), cubic, 1e-10).values
        errs.append(np.max(np.abs(approx - ref)))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.2)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.2)


def test_gradient_examples():
    g = GridSpec(L=2.0, nx=32, ny=8)
    x1, y = g.coords()
    gx, gy = apply_gradient(ScalarField(g, x1))
    assert np.allclose(gx.values[1:-1, :], 1.0)
    c = apply_gradient(ScalarField(g, np.full(g.shape, 3.0)))
    assert np.allclose(c[0].values[1:-1, 1:-1], 0) and np.allclose(c[1].values[1:-1, 1:-1], 0)


def test_gradient_norm_of_mode():
    errs = []
    for n in (16, 32, 64):
        errs.append(abs(gradient_norm_sq(sine_mode(unit_square(n))) - PI ** 2 / 2))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.2)


@given(fields_small)
def test_summation_by_parts(a):
    u = ScalarField(SMALL, a)
    assert gradient_norm_sq(u) == pytest.approx(-inner_product(apply_laplacian(u), u), rel=1e-12, abs=1e-10)


@given(fields_small, fields_small)
def test_laplacian_symmetric(a, b):
    u, v = ScalarField(SMALL, a), ScalarField(SMALL, b)
    lhs, rhs = inner_product(apply_laplacian(u), v), inner_product(u, apply_laplacian(v))
    assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(lhs)) * 1e3)


@given(fields_small)
def test_laplacian_negative(a):
    u = ScalarField(SMALL, a)
    assert inner_product(apply_laplacian(u), u) <= 1e-12


def test_friedrichs_constant_independent_of_length():
    # smallest Dirichlet eigenvalue stays near pi^2 (cross-section) as L grows
    ratios = []
    for L in (2.0, 8.0, 32.0):
        g = GridSpec(L=L, nx=int(16 * L), ny=16)
        from scipy.sparse.linalg import eigsh
        from cylch.domain import operators
        lam = eigsh(-operators(g).lap, k=1, sigma=0, which="LM", return_eigenvectors=False)[0]
        ratios.append(1 / math.sqrt(lam))
    assert max(ratios) <= 1 / PI * 1.01
    assert ratios[-1] / ratios[0] < 1.05


def test_inverse_laplacian_examples(square):
    assert not np.any(inverse_laplacian(ScalarField.zeros(square)).values)
    u = sine_mode(square)
    lam_h = 2 * (4 / square.hx ** 2) * math.sin(PI * square.hx / 2) ** 2
    assert np.allclose(inverse_laplacian(u).values, u.values / lam_h, atol=1e-12)
    assert np.max(np.abs(inverse_laplacian(u).values - u.values / (2 * PI ** 2))) < 1e-3


@pytest.mark.parametrize("method", ["direct", "cg"])
def test_inverse_round_trip(method):
    rng = np.random.default_rng(0)
    w = ScalarField(SMALL, rng.standard_normal(SMALL.shape))
    v = inverse_laplacian(w, tol=1e-10, method=method)
    res = np.linalg.norm(apply_laplacian(v).values + w.values)
    assert res <= 1e-10 * np.linalg.norm(w.values) * 1.0001
    back = inverse_laplacian(ScalarField(SMALL, -apply_laplacian(w).values), 1e-12)
    assert np.allclose(back.values, w.values, atol=1e-9)


def test_cg_cap_reported():
    g = GridSpec(L=8.0, nx=128, ny=16)
    w = ScalarField(g, np.random.default_rng(1).standard_normal(g.shape))
    with pytest.raises(NoConvergence) as info:
        inverse_laplacian(w, tol=1e-300, method="cg")
    assert 0 < info.value.iterations <= cg_iteration_cap(g.size, 1e-300)
    assert info.value.residual > 1e-300


def test_inner_product_examples(square):
    one = ScalarField(square, np.ones(square.shape))
    # interior-node quadrature: area minus an O(h) boundary strip
    assert inner_product(one, one) == pytest.approx(1.0, abs=2 * square.hx)
    u = sine_mode(square)
    assert inner_product(u, u) == pytest.approx(0.25, rel=1e-12)
    assert inner_product(u, u, weight=np.zeros(square.shape)) == 0.0
    with pytest.raises(GridMismatch):
        inner_product(u, ScalarField.zeros(SMALL))


def test_boundary_flux_examples():
    assert boundary_flux(ScalarField.zeros(SMALL)) == 0.0
    errs = [abs(boundary_flux(sine_mode(unit_square(n))) + 8.0) for n in (16, 32, 64)]
    assert errs[-1] < 0.02 and errs[0] > errs[1] > errs[2]


def test_semilinear_examples(square):
    cubic = PotentialSpec.cubic()
    assert not np.any(solve_semilinear_elliptic(ScalarField.zeros(square), cubic).values)
    zero_f = PotentialSpec.polynomial((), K=0.0)
    h = sine_mode(square)
    u = solve_semilinear_elliptic(h, zero_f, tol=1e-10)
    assert np.allclose(u.values, -inverse_laplacian(h, 1e-12).values, atol=1e-11)


def test_semilinear_singular_stays_admissible(square):
    log = PotentialSpec.logarithmic(1.0)
    h = ScalarField(square, -20.0 * sine_mode(square).values)
    u = solve_semilinear_elliptic(h, log, tol=1e-10)
    assert np.max(np.abs(u.values)) < 1
    r = apply_laplacian(u).values - log.f(u.values) - h.values
    assert np.max(np.abs(r)) <= 1e-10
