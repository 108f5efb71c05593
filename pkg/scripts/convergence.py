"""Temporal and spatial convergence tables for the convex-splitting scheme.

Time: self-convergence of u(T) on a dt ladder (expected order 1).
Space: error of the discrete Laplacian against a closed form (expected order 2).
"""
import numpy as np

from cylch.domain import GridSpec, ScalarField, apply_laplacian
from cylch.dynamics import SolverConfig, integrate, make_initial_data
from cylch.potentials import PotentialSpec


def temporal(T=0.1):
    grid = GridSpec(L=2.0, nx=32, ny=8)
    spec = PotentialSpec.cubic()
    u0 = make_initial_data("eigenmode", 1.0, 0, grid, modes=(1, 1))
    dts = [4e-3, 2e-3, 1e-3, 5e-4, 2.5e-4]
    finals = [integrate(u0, T, spec, None, SolverConfig(dt=dt)).snapshots[-1] for dt in dts]
    ref = integrate(u0, T, spec, None, SolverConfig(dt=dts[-1] / 8)).snapshots[-1]
    errs = [np.linalg.norm(u - ref) for u in finals]
    print("dt        error      order")
    for i, (dt, e) in enumerate(zip(dts, errs)):
        order = "" if i == 0 else f"{np.log2(errs[i - 1] / e):.2f}"
        print(f"{dt:<9.2e} {e:<10.3e} {order}")


def spatial():
    print("n    max error  order")
    prev = None
    for n in (8, 16, 32, 64):
        grid = GridSpec(L=1.0, nx=2 * n, ny=n)
        x, y = grid.coords()
        u = np.cos(np.pi * x / 2) * np.sin(np.pi * y)
        lu = -(np.pi ** 2 / 4 + np.pi ** 2) * u
        err = np.max(np.abs(apply_laplacian(ScalarField(grid, u)).values - lu))
        print(f"{n:<4} {err:<10.3e} {'' if prev is None else f'{np.log2(prev / err):.2f}'}")
        prev = err


if __name__ == "__main__":
    temporal()
    spatial()
