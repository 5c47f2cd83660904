import math

import numpy as np
import pytest

from hpicone.eigen import EigenConvergenceError, existence_check, lambda1, linear_oracle
from hpicone.hcalc import GridFunction, HGrid
from hpicone.nonlinearity import homogeneous, shifted_power
from hpicone.solver import SolverConfig


@pytest.fixture(scope="module")
def base9():
    grid = HGrid.box(9)
    return grid, lambda1(GridFunction.zeros(grid), 2.0, SolverConfig(), grid)


def test_matches_eigensolver(base9):
    grid, res = base9
    oracle = linear_oracle(grid)
    assert res.value > 0
    assert res.value == pytest.approx(oracle, rel=1e-6)


def test_parity_classes(base9):
    grid, res = base9
    assert set(res.class_values) == {0, 1}
    assert res.value == min(res.class_values.values())
    # the minimizer lives on a single parity sublattice
    nz = res.eigenfunction.values != 0
    assert len(np.unique(grid.parity[nz])) == 1


def test_shift_identity(base9, rng):
    grid, res = base9
    a = GridFunction(grid, rng.uniform(-1, 1, grid.shape))
    la = lambda1(a, 2.0, SolverConfig(), grid).value
    for c in rng.uniform(-20, 20, 2):
        assert lambda1(a + c, 2.0, SolverConfig(), grid).value == pytest.approx(la - c, abs=1e-8)


def test_restart_from_scaled_eigenfunction(base9):
    grid, res = base9
    again = lambda1(GridFunction.zeros(grid), 2.0, SolverConfig(), grid, init=res.eigenfunction * 2.0)
    assert again.iterations <= 2
    assert again.value == pytest.approx(res.value, abs=1e-10)


def test_initializer_independence(base9):
    grid, res = base9
    values = [lambda1(GridFunction.zeros(grid), 2.0, SolverConfig(init="random", seed=s), grid).value
              for s in range(5)]
    assert max(values) - min(values) <= 1e-8
    assert np.allclose(values, res.value, atol=1e-8)


def test_p3_record_spread():
    grid = HGrid.box(7)
    results = [lambda1(GridFunction.zeros(grid), 3.0, SolverConfig(init="random", seed=s), grid)
               for s in range(3)]
    # p != 2 has local minima: every start's value is recorded and the smallest is returned
    for res in results:
        assert len(res.start_values) == 3
        assert res.value == min(res.start_values) > 0
    values = [res.value for res in results]
    assert max(values) - min(values) <= 1e-8 * max(values)


def test_nonconvergence_raises():
    grid = HGrid.box(7)
    with pytest.raises(EigenConvergenceError) as info:
        lambda1(GridFunction.zeros(grid), 2.0, SolverConfig(max_iter=1), grid)
    assert info.value.trace


def test_invalid_p(base9):
    grid, _ = base9
    with pytest.raises(ValueError, match="p must exceed 1"):
        lambda1(GridFunction.zeros(grid), 1.0, SolverConfig(), grid)


class TestExistence:
    def test_shifted_power_satisfied(self, base9):
        grid, res = base9
        chk = existence_check(shifted_power(0.5), 2.0, SolverConfig(), grid, base=res.value)
        assert chk["verdict"] == "satisfied"
        ladder = chk["condition_a0"]["values"]
        assert ladder == [res.value - m for m in (10.0, 100.0, 1000.0)]

    def test_supercritical_a_inf(self, base9):
        grid, res = base9
        spec = shifted_power(0.5).with_limits(a_inf=res.value + 1.0)
        chk = existence_check(spec, 2.0, SolverConfig(), grid, base=res.value)
        assert chk["condition_a_inf"]["status"] == "unsatisfied"
        assert chk["condition_a_inf"]["value"] == pytest.approx(-1.0, abs=1e-8)
        assert chk["verdict"] == "unsatisfied"

    def test_zero_limits(self, base9):
        grid, res = base9
        chk = existence_check(homogeneous(0.0, 0.0, 2.0), 2.0, SolverConfig(), grid, base=res.value)
        assert chk["condition_a0"]["status"] == "unsatisfied"
        assert chk["verdict"] == "unsatisfied"

    def test_infinite_a_inf_unsatisfied(self, base9):
        grid, res = base9
        chk = existence_check(shifted_power(0.5).with_limits(a_inf=math.inf), 2.0, SolverConfig(), grid,
                              base=res.value)
        assert chk["condition_a_inf"]["status"] == "unsatisfied"
