"""Splitting solver: anchors, contracts, determinism, resume."""

import numpy as np
import pytest

import torusmfg as tm
from torusmfg import energies, models, solver
from torusmfg.grid import GridSpec
from torusmfg.model import InfeasibleModel, ModelSpec


def solve_td(name, grid, **kw):
    model = models.get(name).on_grid(grid)
    return model, *tm.solve_time_dependent(model, grid, tm.SolveOptions(**kw))


class TestAnchors:
    def test_homogeneous_td(self):
        grid = GridSpec(dim=1, n_space=32, n_time=16, T=1.0)
        model, primal, dual, report = solve_td(
            "td-hom-1d", grid, gap_tol=1e-8, residual_tol=1e-8
        )
        assert report.converged
        assert np.max(np.abs(primal.m.values - 1.0)) < 1e-6
        t = grid.time_nodes().reshape(-1, 1)
        # phi = T - t up to one additive constant
        diff = dual.phi.values - (model.T - t)
        assert np.max(np.abs(diff - diff.mean())) < 1e-6

    def test_homogeneous_stationary(self):
        grid = GridSpec(dim=1, n_space=32)
        model = models.get("stat-hom-1d").on_grid(grid)
        lam, primal, dual, report = tm.solve_stationary(
            model, grid, tm.SolveOptions(gap_tol=1e-8, residual_tol=1e-8)
        )
        assert lam == pytest.approx(1.0, abs=1e-6)
        assert np.max(np.abs(primal.m.values - 1.0)) < 1e-6
        assert np.max(np.abs(dual.phi.values)) < 1e-6

    def test_homogeneous_stationary_scaled_coupling(self):
        # lam converges to f(1) = c1 for constant coefficients
        grid = GridSpec(dim=1, n_space=16)
        model = models.homogeneous(1, c=1.7).on_grid(grid)
        lam, _, _, _ = tm.solve_stationary(
            model, grid, tm.SolveOptions(gap_tol=1e-9, residual_tol=1e-9)
        )
        assert lam == pytest.approx(1.7, abs=1e-6)


class TestContracts:
    def test_td_bump_postconditions(self, td_bump_1d_solved):
        model, primal, dual, report = td_bump_1d_solved
        grid = primal.grid
        assert report.converged
        assert report.gap_rel <= 1e-8
        # the returned state is feasibility-projected
        assert primal.m.values.min() >= 0.0
        masses = primal.m.values.sum(axis=1) * grid.cell_volume
        assert np.max(np.abs(masses - 1.0)) < 1e-10
        np.testing.assert_array_equal(primal.m.values[0], model.m0)
        assert report.residuals.continuity < 1e-10
        assert report.residuals.hj == 0.0
        assert report.residuals.trace == 0.0

    def test_optimality_system(self, td_bump_1d_solved):
        model, primal, dual, report = td_bump_1d_solved
        # w = -m D_xi H(x, grad phi) and alpha = f(x, m) where m > 0
        assert report.optimality_w < 1e-5
        assert report.complementarity_mean < 1e-5 * (1.0 + np.abs(dual.alpha.values).max())

    def test_stationary_bump_postconditions(self, stat_bump_1d_solved):
        model, primal, dual, report = stat_bump_1d_solved
        grid = primal.grid
        assert report.converged
        assert float(primal.m.values.sum() * grid.cell_volume) == pytest.approx(1.0, abs=1e-12)
        assert abs(float(dual.phi.values.sum() * grid.cell_volume)) < 1e-12
        assert report.residuals.continuity < 1e-12  # div-free after projection
        # pointwise coupling: lam + H = f(m) on the support
        level = dual.lam + model.hamiltonian(energies.slab_gradient(dual.phi, grid))
        f_of_m = model.coupling(primal.m.values)
        mask = primal.m.values > 1e-6
        assert np.max(np.abs((level - f_of_m)[mask])) < 1e-6

    def test_weak_duality_along_trace(self, td_bump_1d_solved):
        _, _, _, report = td_bump_1d_solved
        assert all(row.gap_abs >= -1e-8 for row in report.trace)

    def test_gap_matches_energies_recomputation(self, td_bump_1d_solved):
        model, primal, dual, report = td_bump_1d_solved
        total, rel = energies.duality_gap(model, primal, dual)
        assert rel == report.gap_rel  # bitwise: same code path, same arrays
        assert total == report.gap_abs


class TestMonotoneTrend:
    @pytest.mark.parametrize("name", ["td-bump-1d", "td-bump-q3-1d"])
    def test_smoothed_gap_nonincreasing(self, name):
        grid = GridSpec(dim=1, n_space=32, n_time=16, T=1.0)
        model = models.get(name).on_grid(grid)
        opts = tm.SolveOptions(gap_tol=1e-30, residual_tol=1e-30, max_iters=200)
        with pytest.raises(solver.NonConvergence) as exc:
            tm.solve_time_dependent(model, grid, opts)
        gaps = np.array([row.gap_rel for row in exc.value.report.trace])
        window = 10
        smooth = np.convolve(gaps, np.ones(window) / window, mode="valid")
        tail = smooth[50:]
        assert np.all(np.diff(tail) <= 1e-12 + 1e-6 * tail[:-1])


class TestUniqueness:
    def test_two_seeds_reach_the_same_density(self):
        grid = GridSpec(dim=1, n_space=32, n_time=16, T=1.0)
        model = models.get("td-bump-1d").on_grid(grid)
        runs = []
        for seed in (1, 2):
            opts = tm.SolveOptions(gap_tol=1e-10, residual_tol=1e-9, seed=seed)
            primal, _, _ = tm.solve_time_dependent(model, grid, opts)
            runs.append(primal.m.values.copy())
        assert np.max(np.abs(runs[0] - runs[1])) < 1e-5

    def test_trajectories_actually_differ(self):
        grid = GridSpec(dim=1, n_space=16, n_time=8, T=1.0)
        model = models.get("td-bump-1d").on_grid(grid)
        fields = []
        for seed in (1, 2):
            opts = tm.SolveOptions(gap_tol=1e-30, residual_tol=1e-30, max_iters=3, seed=seed)
            with pytest.raises(solver.NonConvergence) as exc:
                tm.solve_time_dependent(model, grid, opts)
            fields.append(exc.value.primal.m.values.copy())
        assert np.max(np.abs(fields[0] - fields[1])) > 0.0


class TestErrors:
    def test_nonconvergence_carries_best_iterate(self):
        grid = GridSpec(dim=1, n_space=16, n_time=8, T=1.0)
        model = models.get("td-bump-1d").on_grid(grid)
        with pytest.raises(solver.NonConvergence) as exc:
            tm.solve_time_dependent(model, grid, tm.SolveOptions(max_iters=2))
        err = exc.value
        assert err.primal.m.values.shape == (9, 16)
        assert err.report.iterations == 2
        assert len(err.report.trace) == 2

    def test_infeasible_model_rejected_before_solving(self):
        def m0(x):
            return np.cos(2 * np.pi * x)  # hits zero and negative values

        spec = ModelSpec(r=2.0, q=2.0, dim=1, T=1.0, m0=m0)
        grid = GridSpec(dim=1, n_space=16, n_time=4, T=1.0)
        with pytest.raises(InfeasibleModel):
            spec.on_grid(grid)

    def test_grid_kind_mismatch(self):
        grid = GridSpec(dim=1, n_space=16, n_time=4, T=1.0)
        model = models.get("td-hom-1d").on_grid(grid)
        with pytest.raises(ValueError):
            tm.solve_stationary(model, grid, tm.SolveOptions())


class TestCheckpointResume:
    def _run_iters(self, model, grid, n, ck=None, seed=0):
        opts = tm.SolveOptions(gap_tol=1e-30, residual_tol=1e-30, max_iters=n, seed=seed)
        try:
            tm.solve_time_dependent(model, grid, opts, checkpoint_dir=ck)
        except solver.NonConvergence as exc:
            return exc
        raise AssertionError("expected NonConvergence with zero tolerances")

    def test_resume_matches_straight_run(self, tmp_path):
        grid = GridSpec(dim=1, n_space=32, n_time=8, T=1.0)
        model = models.get("td-bump-1d").on_grid(grid)
        full = self._run_iters(model, grid, 13)
        self._run_iters(model, grid, 6, ck=tmp_path / "ck")
        opts = tm.SolveOptions(gap_tol=1e-30, residual_tol=1e-30, max_iters=13)
        with pytest.raises(solver.NonConvergence) as exc:
            solver.resume(tmp_path / "ck", opts)
        resumed = exc.value
        assert np.array_equal(full.primal.m.values, resumed.primal.m.values)
        assert np.array_equal(full.dual.phi.values, resumed.dual.phi.values)
        assert np.array_equal(full.primal.w.values, resumed.primal.w.values)

    def test_resume_with_changed_penalty_is_flagged(self, tmp_path):
        grid = GridSpec(dim=1, n_space=16, n_time=4, T=1.0)
        model = models.get("td-bump-1d").on_grid(grid)
        self._run_iters(model, grid, 4, ck=tmp_path / "ck")
        opts = tm.SolveOptions(penalty=2.0, gap_tol=1e-6, residual_tol=1e-6, max_iters=500)
        result = solver.resume(tmp_path / "ck", opts)
        report = result[-1]
        assert report.penalty_changed

    def test_checkpoint_model_hash_guard(self, tmp_path):
        grid = GridSpec(dim=1, n_space=16, n_time=4, T=1.0)
        model = models.get("td-bump-1d").on_grid(grid)
        self._run_iters(model, grid, 3, ck=tmp_path / "ck")
        manifest = (tmp_path / "ck" / "manifest.txt").read_text()
        (tmp_path / "ck" / "manifest.txt").write_text(
            manifest.replace("model_hash = ", "model_hash = 00")
        )
        with pytest.raises(solver.CheckpointError):
            solver.load_checkpoint(tmp_path / "ck")

    def test_stationary_resume(self, tmp_path):
        grid = GridSpec(dim=1, n_space=32)
        model = models.get("stat-bump-1d").on_grid(grid)
        opts = tm.SolveOptions(gap_tol=1e-30, residual_tol=1e-30, max_iters=5)
        with pytest.raises(solver.NonConvergence):
            tm.solve_stationary(model, grid, opts, checkpoint_dir=tmp_path / "ck")
        opts2 = tm.SolveOptions(gap_tol=1e-10, residual_tol=1e-9, max_iters=2000)
        lam, primal, dual, report = solver.resume(tmp_path / "ck", opts2)
        assert report.converged


class TestRefinementConsistency:
    def test_optimal_value_cauchy_trend(self):
        # optimal transport-energy values along a dyadic ladder settle down:
        # |B(2n) - B(n)| < 5 |B(n) - B(n/2)|
        spec = models.get("td-bump-1d")
        values = []
        for n in (16, 32, 64):
            grid = GridSpec(dim=1, n_space=n, n_time=16, T=1.0)
            model = spec.on_grid(grid)
            primal, _, _ = tm.solve_time_dependent(
                model, grid, tm.SolveOptions(gap_tol=1e-9, residual_tol=1e-9)
            )
            values.append(energies.eval_B_td(model, primal).value)
        d1 = abs(values[1] - values[0])
        d2 = abs(values[2] - values[1])
        assert d2 < 5.0 * d1
