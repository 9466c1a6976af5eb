import numpy as np
import pytest

import torusmfg as tm
from torusmfg import models


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240801)


def _solve(name, grid, **kw):
    spec = models.get(name)
    model = spec.on_grid(grid)
    opts = tm.SolveOptions(**kw)
    if grid.stationary:
        lam, primal, dual, report = tm.solve_stationary(model, grid, opts)
        return model, primal, dual, report
    primal, dual, report = tm.solve_time_dependent(model, grid, opts)
    return model, primal, dual, report


@pytest.fixture(scope="session")
def td_bump_1d_solved():
    """Converged 1-D bump run shared by solver and diagnostics tests."""
    grid = tm.GridSpec(dim=1, n_space=64, n_time=32, T=1.0)
    return _solve("td-bump-1d", grid, gap_tol=1e-8, residual_tol=1e-8, max_iters=5000)


@pytest.fixture(scope="session")
def td_bump_2d_solved():
    grid = tm.GridSpec(dim=2, n_space=32, n_time=16, T=1.0)
    return _solve("td-bump-2d", grid, gap_tol=1e-8, residual_tol=1e-8, max_iters=5000)


@pytest.fixture(scope="session")
def stat_bump_1d_solved():
    grid = tm.GridSpec(dim=1, n_space=128, n_time=0)
    return _solve("stat-bump-1d", grid, gap_tol=1e-12, residual_tol=1e-10, max_iters=20000)


@pytest.fixture(scope="session")
def stat_bump_2d_solved():
    grid = tm.GridSpec(dim=2, n_space=64, n_time=0)
    return _solve("stat-bump-2d", grid, gap_tol=1e-12, residual_tol=1e-10, max_iters=20000)
