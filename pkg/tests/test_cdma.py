from __future__ import annotations

import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from scenarios import tse_hanly, two_exponential
from rmtkit import SolverConfig
from rmtkit.cdma import (
    CdmaScenario,
    TransmitterSpec,
    cdma_residual,
    eval_calH,
    eval_calP,
    noise_for_snr,
    sinr,
    sinr_sweep,
    solve_theorem1,
    solve_theorem1_grid,
)
from rmtkit.errors import DegenerateMeasure, EvaluationPole, InvalidScenario, NonConvergence, SpectralEdge
from rmtkit.measures import JointChannelMeasure, SpectralMeasure, discretize_family, joint_independent, point_mass

TH_RHO = (math.sqrt(41) - 1) / 2
TWO_ATOMS = SpectralMeasure.from_atoms([(1, 0.5), (4, 0.5)])


class TestEvalCalP:
    def test_point_mass(self):
        assert eval_calP(point_mass(1), 1) == 0.5

    def test_zero_rho_gives_mean(self):
        assert eval_calP(TWO_ATOMS, 0) == 2.5

    def test_two_atoms_at_i(self):
        v = eval_calP(TWO_ATOMS, 1j)
        assert v == pytest.approx(oracles.calP_direct([1, 4], [0.5, 0.5], 1j), abs=1e-15)
        assert abs(v - (0.36765 - 0.72059j)) < 1e-5

    def test_pole(self):
        with pytest.raises(EvaluationPole):
            eval_calP(point_mass(2), -0.5)


class TestEvalCalH:
    def test_joint_point_mass(self):
        ch = JointChannelMeasure.from_atoms([((1.0, 1.0), 1.0)])
        assert eval_calH(ch, 0, (0, 0), 1j) == pytest.approx(1j, abs=1e-15)

    def test_single_atom(self):
        ch = JointChannelMeasure.from_atoms([((2.0, 3.0), 1.0)])
        v = eval_calH(ch, 1, (1, 1), 1j)
        assert v == pytest.approx(3 / (5 - 1j), abs=1e-15)
        assert abs(v - (0.57692 + 0.11538j)) < 1e-5

    @pytest.mark.parametrize("j", [0, 1])
    def test_double_sum(self, j):
        a = SpectralMeasure.from_atoms([(0.5, 0.3), (2.0, 0.7)])
        b = SpectralMeasure.from_atoms([(1.0, 0.6), (3.0, 0.4)])
        w, z = (0.4 - 0.1j, 0.7 - 0.05j), -0.2 + 0.3j
        expect = oracles.calH_double_sum(a.locations, a.weights, b.locations, b.weights, j, w, z)
        assert eval_calH(joint_independent([a, b]), j, w, z) == pytest.approx(expect, abs=1e-14)


class TestScenarioValidation:
    def test_isometric_alpha(self):
        with pytest.raises(InvalidScenario, match="isometric requires alpha <= 1"):
            TransmitterSpec(1.5, "isometric", point_mass(1))

    def test_iid_alpha_above_one_allowed(self):
        assert TransmitterSpec(1.5, "iid", point_mass(1)).alpha == 1.5

    @pytest.mark.parametrize("args", [
        (0.0, "iid", point_mass(1)),
        (-1.0, "iid", point_mass(1)),
        (0.5, "gaussian", point_mass(1)),
        (0.5, "iid", point_mass(-1)),
    ])
    def test_transmitter_invalid(self, args):
        with pytest.raises(InvalidScenario):
            TransmitterSpec(*args)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidScenario):
            CdmaScenario([TransmitterSpec(0.5, "iid", point_mass(1))], joint_independent([point_mass(1)] * 2), 0.1)

    def test_empty(self):
        with pytest.raises(InvalidScenario):
            CdmaScenario([], joint_independent([point_mass(1)]), 0.1)

    @pytest.mark.parametrize("s2", [-0.1, math.nan, math.inf])
    def test_noise(self, s2):
        with pytest.raises(InvalidScenario):
            tse_hanly(sigma2=s2)

    def test_degenerate_power(self):
        with pytest.raises(DegenerateMeasure):
            solve_theorem1(tse_hanly(power=0.0), 1j)

    def test_degenerate_channel(self):
        sc = CdmaScenario([TransmitterSpec(0.5, "iid", point_mass(1))], joint_independent([point_mass(0)]), 0.1)
        with pytest.raises(DegenerateMeasure):
            solve_theorem1(sc, 1j)


class TestSolveTheorem1:
    def test_tse_hanly(self):
        s = solve_theorem1(tse_hanly(), complex(-0.1, 1e-8))
        assert s.rho[0].real == pytest.approx(TH_RHO, abs=1e-8)
        assert abs(s.rho[0].real - 2.70156) < 1e-5
        assert 0 < s.rho[0].imag < 1e-6

    @pytest.mark.parametrize("alpha,power,sigma2", list(itertools.product((0.25, 1.0, 2.0), (0.5, 1.0, 4.0),
                                                                          (0.05, 0.1, 1.0))))
    def test_tse_hanly_grid(self, alpha, power, sigma2):
        s = solve_theorem1(tse_hanly(alpha, power, sigma2), complex(-sigma2, 1e-8))
        assert abs(s.rho[0].real - oracles.tse_hanly_rho(alpha, power, sigma2)) < 1e-8

    def test_vanishing_load(self):
        s = solve_theorem1(tse_hanly(1e-6, 4.0, 1.0), complex(-1, 1e-8))
        assert abs(s.rho[0] - 1.0) < 1e-4

    def test_state_invariants(self):
        sc = two_exponential(("iid", "isometric"), atom_count=32)
        z = -0.3 + 0.4j
        s = solve_theorem1(sc, z)
        assert s.residual <= 1e-10
        assert cdma_residual(sc, z, s.g, s.rho, s.tau) == s.residual
        for j in range(2):
            assert s.calP[j] == pytest.approx(eval_calP(sc.transmitters[j].power, s.rho[j]), abs=1e-14)
            w = [a * p - t for a, p, t in zip(sc.alphas, sc.pbar, s.tau)]
            assert s.calH[j] == pytest.approx(eval_calH(sc.channel, j, w, z), abs=1e-14)
        assert s.pbar == (1.0, 1.0)

    def test_mixed_kind_branches(self):
        sc = two_exponential(("iid", "isometric"), alpha=1.2, atom_count=32)
        s = solve_theorem1(sc, complex(-0.1, 1e-3))
        a = sc.alphas
        z = s.z
        # per-kind equations written out by hand
        assert abs(s.rho[0] - s.calH[0]) < 1e-10
        assert abs(s.tau[0] - a[0] * (1 - s.calP[0])) < 1e-10
        assert abs(s.rho[1] - s.calH[1] / (1 - a[1] * s.rho[1] * s.calP[1])) < 1e-10
        assert abs(s.tau[1] - (a[1] * (1 - s.calP[1]) - (a[1] - s.tau[1]) ** 2 * s.calH[1])) < 1e-10
        assert abs(s.g + (1 - sum(a * np.array(s.rho) * np.array(s.calP))) / z) < 1e-10

    def test_kind_reduction(self):
        for power, sigma2 in ((1.0, 0.1), (4.0, 1.0)):
            iid = solve_theorem1(tse_hanly(1e-6, power, sigma2), complex(-sigma2, 1e-8)).rho[0]
            iso = solve_theorem1(tse_hanly(1e-6, power, sigma2, "isometric"), complex(-sigma2, 1e-8)).rho[0]
            assert abs(iid - iso) < 1e-4

    def test_isometric_beats_iid(self):
        # orthogonal signatures interfere less at equal load
        iid = solve_theorem1(tse_hanly(0.5), complex(-0.1, 1e-8)).rho[0].real
        iso = solve_theorem1(tse_hanly(0.5, kind="isometric"), complex(-0.1, 1e-8)).rho[0].real
        assert iso > iid

    def test_isometric_full_load_is_noise_limited(self):
        # unitary signatures at alpha = 1 are interference free: rho = E[H] / sigma^2
        s = solve_theorem1(tse_hanly(1.0, 1.0, 0.1, "isometric"), complex(-0.1, 1e-8))
        assert s.rho[0].real == pytest.approx(10.0, abs=1e-6)

    @pytest.mark.parametrize("h", [0.5, 1.0, 3.0])
    @pytest.mark.parametrize("z", [1 + 1j, -2 + 0.1j])
    def test_isometric_full_load_noiseless_is_diagonal(self, h, z):
        # unitary signatures at alpha = 1 leave the spectrum of H itself
        sc = CdmaScenario([TransmitterSpec(1.0, "isometric", point_mass(1.0))], joint_independent([point_mass(h)]), 0.0)
        s = solve_theorem1(sc, z)
        assert s.g == pytest.approx(1 / (h - z), abs=1e-12)

    def test_root_at_infinity_rejected(self):
        # next to the atom the iteration can drift to |tau| ~ 1e20, where the defect is tiny
        # but G is wrong; such roots break |tau| <= mass / Im z and must not be returned
        h, z = 0.5, 0.5 + 1e-4j
        sc = CdmaScenario([TransmitterSpec(1.0, "isometric", point_mass(1.0))], joint_independent([point_mass(h)]), 0.0)
        try:
            s = solve_theorem1(sc, z, SolverConfig(max_iterations=1000))
        except NonConvergence:
            return
        assert s.g == pytest.approx(1 / (h - z), rel=1e-6)

    def test_uniqueness_check(self):
        s = solve_theorem1(tse_hanly(), 0.5 + 0.5j, SolverConfig(check_uniqueness=True))
        assert s.residual <= 1e-10

    def test_nonconvergence(self):
        with pytest.raises(NonConvergence):
            solve_theorem1(tse_hanly(), complex(-0.1, 1e-8), SolverConfig(max_iterations=2))

    def test_invalid_z(self):
        with pytest.raises(ValueError):
            solve_theorem1(tse_hanly(), -0.1)


pos_atoms = st.lists(st.tuples(st.floats(0.1, 4.0), st.floats(0.05, 1.0)), min_size=1, max_size=3)


def _law(atoms):
    total = sum(w for _, w in atoms)
    return SpectralMeasure.from_atoms([(x, w / total) for x, w in atoms])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["iid", "isometric"]), st.floats(0.05, 0.9), pos_atoms, pos_atoms),
                min_size=1, max_size=2),
       st.floats(-3, 3), st.floats(0.05, 2.0))
def test_half_plane_property(txs, re, im):
    sc = CdmaScenario([TransmitterSpec(a, k, _law(p)) for k, a, p, _ in txs],
                      joint_independent([_law(h) for *_, h in txs]), 0.1)
    s = solve_theorem1(sc, complex(re, im))
    assert s.residual <= 1e-10
    assert s.g.imag > 0
    assert all(r.imag > 0 for r in s.rho)
    assert all(t.imag > 0 for t in s.tau)


class TestGrid:
    def test_matches_pointwise(self):
        sc = tse_hanly(0.5)
        zs = [complex(x, 0.1) for x in (-1, 0, 1, 2)]
        for z, s in zip(zs, solve_theorem1_grid(sc, zs)):
            assert s.g == pytest.approx(solve_theorem1(sc, z).g, abs=1e-9)

    def test_failure_index(self):
        with pytest.raises(NonConvergence) as info:
            solve_theorem1_grid(tse_hanly(), [5j, complex(-0.1, 1e-8)], SolverConfig(max_iterations=8))
        assert info.value.index == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            solve_theorem1_grid(tse_hanly(), [])


class TestSinr:
    def test_tse_hanly(self):
        v = sinr(tse_hanly(), 1.0, 0)
        assert v == pytest.approx(TH_RHO, abs=1e-8)
        assert 10 * math.log10(v) == pytest.approx(4.317, abs=1e-3)

    def test_zero_power(self):
        assert sinr(tse_hanly(), 0.0, 0) == 0.0

    def test_vanishing_load(self):
        sc = tse_hanly(1e-6, 4.0, 1.0)
        assert sinr(sc, 4.0, 0) == pytest.approx(4.0, abs=4e-4)

    def test_level_off_atoms_warns(self):
        with pytest.warns(UserWarning, match="not an atom"):
            v = sinr(tse_hanly(), 2.0, 0)
        assert v == pytest.approx(2 * TH_RHO, abs=1e-7)

    def test_level_on_atom_silent(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            sinr(tse_hanly(), 1.0, 0)

    def test_spectral_edge(self):
        # no noise and load below one: the spectrum has an atom at 0
        with pytest.raises(SpectralEdge):
            sinr(tse_hanly(0.5, sigma2=0.0), 1.0, 0)

    def test_noiseless_overloaded(self):
        # iid load 2 keeps 0 outside the spectrum; SINR tends to 1/(alpha - 1)
        assert sinr(tse_hanly(2.0, sigma2=0.0), 1.0, 0) == pytest.approx(1.0, abs=1e-6)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            sinr(tse_hanly(), 1.0, 0, epsilon=0)
        with pytest.raises(IndexError):
            sinr(tse_hanly(), 1.0, 1)


class TestSweep:
    def test_noise_for_snr(self):
        assert noise_for_snr(tse_hanly(), 10) == pytest.approx(0.1)
        assert noise_for_snr(tse_hanly(power=4.0), 0) == pytest.approx(4.0)

    def test_single_point_matches_sinr(self):
        row, = sinr_sweep(tse_hanly(), [10])
        assert row.sinr == pytest.approx(sinr(tse_hanly(sigma2=0.1), 1.0, 0), abs=1e-9)
        assert row.sinr_db == pytest.approx(4.317, abs=1e-3)
        assert row.status == "ok" and row.transmitter == 0

    def test_monotone(self):
        rows = sinr_sweep(tse_hanly(0.75), np.arange(0, 21, 2))
        values = [r.sinr for r in rows]
        assert all(b >= a for a, b in zip(values, values[1:]))
        for r in rows:
            assert r.sinr == pytest.approx(oracles.tse_hanly_rho(0.75, 1.0, r.noise_variance), abs=1e-8)

    def test_two_transmitter_rows(self):
        rows = sinr_sweep(two_exponential(("iid", "isometric"), atom_count=32), [0, 10])
        assert [(r.snr_db, r.transmitter) for r in rows] == [(0, 0), (0, 1), (10, 0), (10, 1)]
        assert rows[3].sinr > rows[2].sinr  # isometric stream ahead of the iid one

    def test_failure_index(self):
        with pytest.raises(NonConvergence) as info:
            sinr_sweep(tse_hanly(), [0, 10], SolverConfig(max_iterations=3))
        assert info.value.index == 0

    def test_non_strict(self):
        rows = sinr_sweep(tse_hanly(), [0, 10], SolverConfig(max_iterations=3), strict=False)
        assert all(r.status == "nonconvergence" and math.isnan(r.sinr) for r in rows)

    def test_empty(self):
        with pytest.raises(ValueError):
            sinr_sweep(tse_hanly(), [])
