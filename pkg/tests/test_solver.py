import numpy as np
import pytest
from scipy.optimize import bisect
from scipy.sparse.linalg import spsolve

from hpicone.hcalc import GridFunction, HGrid, d1p_norm, read_csv
from hpicone.nonlinearity import constant_source, homogeneous, shifted_power
from hpicone.solver import (DivergenceError, SolverConfig, bump, energy, energy_difference, first_variation,
                            initial_guess, residual, solve, write_history)


def smooth_dirichlet(grid, rng):
    c = grid.coords
    poly = 1.0 + 0.5 * rng.standard_normal() * c[0] + 0.5 * rng.standard_normal() * c[1] * c[2]
    return GridFunction(grid, bump(grid).values * poly)


def random_dirichlet(grid, rng):
    return GridFunction(grid, rng.standard_normal(grid.shape)).with_zero_boundary()


class TestConfig:
    def test_roundtrip(self):
        c = SolverConfig(p=2.5, eps=1e-6, init="random:0.5", seed=3)
        assert SolverConfig.from_dict(c.to_dict()) == c

    @pytest.mark.parametrize("kw", [dict(p=1.0), dict(p=0.5), dict(tol_residual=0.0), dict(metric="x")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


class TestEnergy:
    def test_zero(self, grid9):
        assert energy(GridFunction.zeros(grid9), shifted_power(), 2.5) == 0.0

    def test_seminorm_term(self, grid9, rng):
        u = random_dirichlet(grid9, rng)
        zero_f = homogeneous(0.0, 0.0, 3.0)
        assert energy(u, zero_f, 3.0) == pytest.approx(d1p_norm(u, 3.0) ** 3 / 3.0, rel=1e-14)

    @pytest.mark.parametrize("p,eps", [(1.5, 1e-3), (2.0, 0.0), (3.0, 0.0)])
    def test_energy_difference(self, grid9, rng, p, eps):
        spec = shifted_power(0.5, weighted=True)
        u = smooth_dirichlet(grid9, rng)
        w = u + random_dirichlet(grid9, rng) * 0.1
        assert energy_difference(u, w, spec, p, eps) == pytest.approx(
            energy(w, spec, p, eps) - energy(u, spec, p, eps), rel=1e-9, abs=1e-15)

    @pytest.mark.parametrize("p,eps", [(1.5, 1e-8), (2.5, 0.0), (3.0, 0.0)])
    def test_gradient_consistency(self, grid9, rng, p, eps):
        spec = shifted_power(0.5, weighted=True)
        u = smooth_dirichlet(grid9, rng)
        s = 1e-5
        for _ in range(5):
            phi = random_dirichlet(grid9, rng)
            fd = (energy(u + phi * s, spec, p, eps) - energy(u + phi * -s, spec, p, eps)) / (2 * s)
            assert first_variation(u, phi, spec, p, eps) == pytest.approx(fd, rel=1e-4)

    def test_residual_vanishes_on_boundary(self, grid9, rng):
        r = residual(smooth_dirichlet(grid9, rng), shifted_power(), 2.0)
        assert r.dirichlet and not r.values[grid9.boundary_mask].any()


class TestInitialGuess:
    def test_kinds(self, grid9):
        assert initial_guess("const:2", grid9).interior.min() == 2.0
        r = initial_guess("random", grid9, seed=4)
        assert np.array_equal(r.values, initial_guess("random", grid9, seed=4).values)
        assert r.interior.min() >= 0.05 and r.dirichlet
        assert initial_guess("bump:3", grid9).sup() == pytest.approx(3.0)
        e = initial_guess("eigen", grid9)
        assert np.max(np.abs(e.values)) == pytest.approx(1.0) and e.values.sum() >= 0

    def test_unknown(self, grid9):
        with pytest.raises(ValueError):
            initial_guess("zigzag", grid9)


class TestSolve:
    def test_linear_oracle(self, grid17):
        res = solve(constant_source(1.0), SolverConfig(p=2.0), grid17)
        w = grid17.weights.ravel()[grid17.interior_index]
        direct = spsolve(grid17.stiffness_matrix, w)
        assert res.converged
        assert np.max(np.abs(res.u.interior - direct)) <= 1e-8 * np.max(np.abs(direct))

    @pytest.mark.parametrize("p,f", [(2.0, lambda c: np.sqrt(c + 1.0)), (3.0, lambda c: np.sqrt(c + 1.0)),
                                     (2.5, lambda c: 1.0)])
    def test_single_node_bisection(self, p, f):
        grid = HGrid.box(3)
        h = grid.spacing[0]
        # only the four x- and y-face neighbours see a gradient (c/h); t-faces and the centre see none
        c_star = bisect(lambda c: 2.0 * h ** -p * c ** (p - 1) - f(c), 1e-12, 10.0, xtol=1e-15, rtol=1e-15)
        spec = shifted_power(0.5) if p != 2.5 else constant_source(1.0)
        res = solve(spec, SolverConfig(p=p, tol_residual=1e-13), grid)
        assert res.converged
        assert res.u.interior[0] == pytest.approx(c_star, rel=1e-10)

    def test_positive_solution(self, grid17):
        res = solve(shifted_power(0.5), SolverConfig(p=2.0), grid17)
        assert res.converged and res.positive
        assert res.residual <= 1e-9 * np.sqrt(grid17.volume)

    def test_energy_monotone(self, grid9):
        res = solve(shifted_power(0.5), SolverConfig(p=3.0, init="const:10"), grid9)
        energies = [row[1] for row in res.history]
        assert res.converged
        assert all(b <= a for a, b in zip(energies, energies[1:]))

    def test_l2_metric_still_descends(self, grid9):
        res = solve(shifted_power(0.5), SolverConfig(p=2.0, metric="l2", max_iter=200), grid9)
        energies = [row[1] for row in res.history]
        assert all(b <= a for a, b in zip(energies, energies[1:]))
        assert energies[-1] < energies[0]

    def test_max_iter_flag(self, grid9):
        res = solve(shifted_power(0.5), SolverConfig(p=3.0, max_iter=1), grid9)
        assert not res.converged and res.iterations == 1

    def test_p_below_two_needs_eps(self, grid9):
        with pytest.raises(ValueError):
            solve(shifted_power(0.5), SolverConfig(p=1.5, eps=0.0), grid9)

    def test_p_below_two(self, grid9):
        res = solve(shifted_power(0.25), SolverConfig(p=1.5), grid9)
        assert res.converged and res.positive

    def test_divergence(self, grid9):
        bad = homogeneous(float("nan"), 1.0, 2.0)
        with pytest.raises(DivergenceError, match="divergence"):
            solve(bad, SolverConfig(p=2.0), grid9)

    def test_deterministic(self, grid9):
        a = solve(shifted_power(0.5), SolverConfig(p=3.0, init="random", seed=5), grid9)
        b = solve(shifted_power(0.5), SolverConfig(p=3.0, init="random", seed=5), grid9)
        assert np.array_equal(a.u.values, b.u.values) and a.history == b.history

    def test_outputs(self, grid9, tmp_path):
        from hpicone.hcalc import write_csv
        res = solve(shifted_power(0.5), SolverConfig(p=2.0), grid9)
        lines = write_history(res, tmp_path / "h.csv").read_text().splitlines()
        assert lines[0] == "iteration,energy,residual,step" and len(lines) == len(res.history) + 1
        back = read_csv(write_csv(res.u, tmp_path / "u.csv"))
        assert np.array_equal(back.values, res.u.values)
        assert set(res.to_dict()) >= {"energy", "residual", "iterations", "min_interior", "converged"}
