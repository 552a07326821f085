from __future__ import annotations

import numpy as np
import pytest

import oracles
from rmtkit import SolverConfig
from rmtkit.errors import DegenerateMeasure, NonConvergence
from rmtkit.free_sum import solve_sum, solve_sum_grid, sum_residual
from rmtkit.measures import SpectralMeasure, discretize_family, point_mass
from rmtkit.stieltjes import transform

SEMI = discretize_family("semicircle", variance=1.0, atom_count=4096)
PM1 = discretize_family("bernoulli", p=0.5, lo=-1, hi=1)


def _defects(measures, state):
    """Both sum equations evaluated by hand at the stored values."""
    z, g = state.z, state.g
    J = len(measures)
    inv = [1 / r for r in state.rho]
    # E[1/(X + w)] = -sum_k w_k / (-x_k - w)
    out = [abs(g + oracles.atom_transform(-m.locations, m.weights, w)) for m, w in zip(measures, inv)]
    if J > 1:
        out.append(abs(g - (J - 1) / (z + sum(inv))))
    return max(out)


class TestSolveSum:
    def test_point_masses(self):
        s = solve_sum([point_mass(2), point_mass(3)], 1j)
        assert s.g == pytest.approx(1 / (5 - 1j), abs=1e-12)
        assert abs(s.g - (0.19231 + 0.03846j)) < 1e-5

    def test_three_point_masses(self):
        z = 0.7 + 0.3j
        s = solve_sum([point_mass(1), point_mass(-2), point_mass(4)], z)
        assert s.g == pytest.approx(1 / (3 - z), abs=1e-11)

    def test_semicircle_pair(self):
        s = solve_sum([SEMI, SEMI], 1j)
        assert abs(s.g - 0.5j) < 2e-3
        assert abs(s.g - oracles.semicircle_g(1j, 2.0)) < 2e-3

    def test_semicircle_triple(self):
        z = 0.5 + 0.5j
        s = solve_sum([SEMI, SEMI, SEMI], z)
        assert abs(s.g - oracles.semicircle_g(z, 3.0)) < 2e-3

    def test_arcsine(self):
        s = solve_sum([PM1, PM1], 1j)
        assert abs(s.g - 0.44721j) < 1e-5
        assert abs(s.g - oracles.arcsine_g(1j)) < 1e-6

    @pytest.mark.parametrize("z", [0.3 + 0.1j, -1.5 + 0.05j, 2.5 + 1j])
    def test_arcsine_off_axis(self, z):
        assert abs(solve_sum([PM1, PM1], z).g - oracles.arcsine_g(z)) < 1e-6

    def test_state_contract(self):
        ms = [discretize_family("exponential", mean=1.0, atom_count=64), SEMI]
        s = solve_sum(ms, 0.4 + 0.2j)
        assert s.residual <= 1e-10
        assert _defects(ms, s) <= 1e-10
        assert sum_residual(ms, s.z, s.g, s.rho) == s.residual
        assert s.g.imag > 0
        assert all(r.imag > 0 for r in s.rho)

    def test_single_measure(self):
        m = discretize_family("exponential", mean=1.0, atom_count=64)
        z = 0.5 + 0.25j
        s = solve_sum([m], z)
        assert s.g == transform(m, z)
        assert s.residual <= 1e-10
        assert s.iterations == 0

    def test_translation(self):
        a = discretize_family("uniform", a=0, b=2, atom_count=128)
        b = discretize_family("exponential", mean=1.0, atom_count=128)
        z = 0.8 + 0.3j
        shifted = solve_sum([a.shifted(1.0), b], z).g
        assert shifted == pytest.approx(solve_sum([a, b], z - 1.0).g, abs=1e-9)

    def test_degenerate(self):
        with pytest.raises(DegenerateMeasure):
            solve_sum([point_mass(0), point_mass(1)], 1j)

    def test_mean_zero_accepted(self):
        assert solve_sum([SEMI, PM1], 1j).residual <= 1e-10

    def test_invalid_z(self):
        with pytest.raises(ValueError):
            solve_sum([point_mass(1), point_mass(2)], 1.0)

    def test_nonconvergence(self):
        with pytest.raises(NonConvergence) as info:
            solve_sum([SEMI, PM1], 0.1 + 0.01j, SolverConfig(max_iterations=2))
        assert info.value.iterations is not None

    def test_uniqueness_check_passes(self):
        s = solve_sum([SEMI, PM1], 0.2 + 0.3j, SolverConfig(check_uniqueness=True))
        assert s.residual <= 1e-10


class TestSolveSumGrid:
    def test_single_point(self):
        ms = [SEMI, PM1]
        z = 0.1 + 0.4j
        assert solve_sum_grid(ms, [z])[0].g == pytest.approx(solve_sum(ms, z).g, abs=1e-10)

    def test_point_masses(self):
        zs = [complex(x, y) for x in (-1, 2.5, 5, 7) for y in (0.1, 1.0)]
        for z, s in zip(zs, solve_sum_grid([point_mass(2), point_mass(3)], zs)):
            assert s.g == pytest.approx(1 / (5 - z), abs=1e-10)
            assert s.z == z

    def test_warm_start_saves_iterations(self):
        zs = [1j, 0.5j, 0.2j]
        warm = sum(s.iterations for s in solve_sum_grid([SEMI, SEMI], zs))
        cold = sum(s.iterations for s in solve_sum_grid([SEMI, SEMI], zs, warm_start=False))
        assert warm <= cold

    def test_failure_index(self):
        zs = [2j, 1j, 0.01 + 0.001j]
        with pytest.raises(NonConvergence) as info:
            solve_sum_grid([SEMI, PM1], zs, SolverConfig(max_iterations=6))
        assert info.value.index == 2

    def test_non_strict_keeps_other_points(self):
        zs = [2j, 0.01 + 0.001j, 1.5j]
        out = solve_sum_grid([SEMI, PM1], zs, SolverConfig(max_iterations=6), strict=False)
        assert isinstance(out[1], NonConvergence)
        assert out[0].residual <= 1e-10 and out[2].residual <= 1e-10

    def test_empty(self):
        with pytest.raises(ValueError):
            solve_sum_grid([SEMI], [])


def test_rho_matches_subordination_identity():
    # with w_j = 1/rho_j, G(z) = g_j(w_j) and sum_j w_j = -z + (J - 1)/G
    ms = [discretize_family("uniform", a=-1, b=1, atom_count=200), point_mass(0.5)]
    s = solve_sum(ms, 0.3 + 0.6j)
    w = np.array([1 / r for r in s.rho])
    assert w.sum() == pytest.approx(-s.z + 1 / s.g, abs=1e-9)
