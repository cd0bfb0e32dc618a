"""Tests for Husimi fields and semiclassical densities."""

import numpy as np
import pytest

from gyrolab.basis import Truncation, make_scaling
from gyrolab.coherent import CoherentLabel, coherent_coeffs
from gyrolab.grids import BoxSpec
from gyrolab.hartree import DensityMatrix, HartreeEngine, LatticeSpec, dt_cap, initial_state
from gyrolab.husimi import (
    DegenerateNormalizationError,
    cutoff_schedule,
    husimi_field,
    husimi_value,
    level_capture,
    semiclassical_density,
)
from gyrolab.metrics import TestFunction
from gyrolab.potentials import GaussianBump, PotentialSpec


def saturated_coherent_state(s, t, z0, n0):
    """gamma = 2 pi l_b^2 |psi_{z0,n0}><psi_{z0,n0}| (Pauli-saturated)."""
    c, _ = coherent_coeffs(CoherentLabel(z0, n0), t, s, tail_tol=1e-8)
    orb = np.zeros((t.size, 1), dtype=complex)
    m1 = t.m_ang + 1
    orb[n0 * m1:(n0 + 1) * m1, 0] = c
    orb[:, 0] /= np.linalg.norm(orb[:, 0])
    return DensityMatrix(np.array([s.pauli_cap]), orb, s, t)


def basis_state(s, t, n, m):
    orb = np.zeros((t.size, 1), dtype=complex)
    orb[t.flat(n, m), 0] = 1.0
    return DensityMatrix(np.array([1.0]), orb, s, t)


class TestHusimiValue:
    def setup_method(self):
        self.s = make_scaling(4.0)
        self.t = Truncation(4, 30)
        self.z0 = 0.25 - 0.1j

    def test_saturated_unit_value(self):
        gamma = saturated_coherent_state(self.s, self.t, self.z0, 2)
        assert abs(husimi_value(gamma, self.z0, 2) - 1.0) < 1e-9

    def test_level_orthogonality(self):
        gamma = saturated_coherent_state(self.s, self.t, self.z0, 2)
        assert husimi_value(gamma, self.z0, 1) == 0.0
        assert husimi_value(gamma, self.z0, 3) == 0.0

    def test_displacement_overlap(self):
        # oracle: coherent overlap |<psi_{z,0}, psi_{z',0}>|^2 = e^{-|d|^2/2l_b^2}
        gamma = saturated_coherent_state(self.s, self.t, 0.0, 0)
        d = 0.3 * self.s.l_b * np.exp(1j * 1.1)
        val = husimi_value(gamma, d, 0)
        assert abs(val - np.exp(-abs(d) ** 2 / (2 * self.s.l_b ** 2))) < 1e-9

    def test_bounded_by_one(self):
        rng = np.random.default_rng(0)
        t = Truncation(3, 12)
        nb = t.size
        M = rng.normal(size=(nb, nb)) + 1j * rng.normal(size=(nb, nb))
        M = M @ M.conj().T
        M *= self.s.pauli_cap / np.linalg.eigvalsh(M).max()
        M *= 1.0 / np.trace(M).real * min(1.0, np.trace(M).real)  # keep <= cap
        gamma = DensityMatrix.from_matrix(M, self.s, t, check=False)
        for z in (0.0, 0.2 + 0.1j):
            for n in range(3):
                assert husimi_value(gamma, z, n) <= 1.0 + 1e-9

    def test_tail_gate(self):
        gamma = saturated_coherent_state(self.s, self.t, self.z0, 0)
        from gyrolab.coherent import TruncationInsufficientError
        with pytest.raises(TruncationInsufficientError):
            husimi_value(gamma, 3.0 + 0.0j, 0)


class TestHusimiField:
    def test_level_masses_match_occupations(self):
        s = make_scaling(4.0)
        t = Truncation(4, 24)
        gamma = initial_state(3, LatticeSpec(), s, t)
        box = BoxSpec(2.6, 96)
        fld = husimi_field(gamma, box, 3)
        occ = gamma.landau_occupations()
        np.testing.assert_allclose(fld.level_masses(), occ[:4], atol=2e-6)

    def test_positivity_and_bound(self):
        s = make_scaling(4.0)
        t = Truncation(4, 24)
        gamma = initial_state(3, LatticeSpec(), s, t)
        fld = husimi_field(gamma, BoxSpec(2.6, 64), 2)
        assert fld.values.min() >= 0.0
        assert fld.values.max() <= 1.0 + 1e-9


class TestSemiclassicalDensity:
    def test_full_capture_mass(self):
        s = make_scaling(4.0)
        t = Truncation(2, 24)
        gamma = initial_state(3, LatticeSpec(), s, t)   # pure LLL
        rho = semiclassical_density(gamma, 0, BoxSpec(2.8, 128), normalized=False)
        assert abs(rho.mass - 1.0) < 1e-6
        assert abs(level_capture(gamma, 0) - 1.0) < 1e-12

    def test_orthogonal_level_mass_zero(self):
        s = make_scaling(4.0)
        t = Truncation(2, 8)
        gamma = basis_state(s, t, 1, 0)
        rho = semiclassical_density(gamma, 0, BoxSpec(2.0, 64))
        assert rho.mass < 1e-12

    def test_ground_state_closed_form(self):
        # oracle: Gaussian overlap gives rho^{sc,<=0}(z) = e^{-|z|^2/2l_b^2}/(2 pi l_b^2)
        s = make_scaling(4.0)
        t = Truncation(2, 26)
        gamma = basis_state(s, t, 0, 0)
        box = BoxSpec(2.0, 96)
        rho = semiclassical_density(gamma, 0, box)
        X, Y = box.mesh()
        expect = np.exp(-(X ** 2 + Y ** 2) / (2 * s.l_b ** 2)) / (2 * np.pi * s.l_b ** 2)
        inside = X ** 2 + Y ** 2 < 1.0  # truncation tails matter far out
        assert np.abs(rho.values - expect)[inside].max() < 1e-9

    def test_degenerate_normalization(self):
        s = make_scaling(4.0)
        t = Truncation(3, 8)
        gamma = basis_state(s, t, 2, 1)
        with pytest.raises(DegenerateNormalizationError):
            semiclassical_density(gamma, 0, BoxSpec(2.0, 48), normalized=True)

    def test_normalized_mass_one(self):
        s = make_scaling(4.0)
        t = Truncation(4, 24)
        gamma = initial_state(3, LatticeSpec(), s, t)
        rho = semiclassical_density(gamma, 2, BoxSpec(2.8, 128), normalized=True)
        assert abs(rho.mass - 1.0) < 1e-8


class TestCutoffSchedule:
    @pytest.mark.parametrize("b,expect", [(4.0, 3), (8.0, 6), (16.0, 7)])
    def test_schedule(self, b, expect):
        # M(b) = round(l_b^{-6/7}) clamped to [2, n_max - 1] with n_max = 8
        assert cutoff_schedule(make_scaling(b), 8) == expect

    def test_clamp_low(self):
        assert cutoff_schedule(make_scaling(1.0), 8) == 2


class TestCaptureProperties:
    def setup_method(self):
        self.s = make_scaling(4.0)
        self.t = Truncation(10, 28)
        pot = PotentialSpec(
            bumps=(GaussianBump(0.4, (0.3, 0.0), 0.6),
                   GaussianBump(-0.3, (-0.3, 0.2), 0.55)),
            w_amplitude=0.3, w_width=0.7)
        eng = HartreeEngine(self.t, self.s, pot, BoxSpec(2.6, 96))
        g = initial_state(3, LatticeSpec(), self.s, self.t)
        dt = dt_cap(pot, self.s)
        for _ in range(12):
            g = eng.step(g, dt)
        self.gamma = g

    def test_monotone_capture(self):
        caps = [level_capture(self.gamma, M) for M in range(self.t.n_max + 1)]
        assert all(b >= a - 1e-14 for a, b in zip(caps, caps[1:]))
        assert abs(caps[-1] - 1.0) <= 1e-10

    @pytest.mark.parametrize("M", [2, 4, 8])
    def test_normalization_lower_bound(self, M):
        # Tr gamma Pi_{<=M} >= 1 - Tr(gamma L_b)/M
        cap = level_capture(self.gamma, M)
        assert cap >= 1.0 - self.gamma.kinetic_moment(1) / M - 1e-12


class TestWeakCloseness:
    @pytest.mark.parametrize("b", [4.0, 8.0])
    @pytest.mark.parametrize("M", [2, 4, 8])
    def test_gyro_inequality(self, b, M):
        # measured |int phi (rho_gamma - rho^sc)| vs the displayed bound,
        # k = 1, C = 10
        s = make_scaling(b)
        t = Truncation(10, 30 if b == 4.0 else 90)
        K = 3 if b == 4.0 else 11
        gamma = initial_state(K, LatticeSpec(), s, t)
        box = BoxSpec(2.4, 128)
        from gyrolab.hartree import density_of
        rho_q = density_of(gamma, box)
        rho_sc = semiclassical_density(gamma, M, box)
        occ = gamma.landau_occupations()
        eps = 2.0 * np.arange(t.n_max + 1) + 1.0
        tail_energy = float((occ[M + 1:] * eps[M + 1:]).sum())
        kin = gamma.kinetic_moment(1)
        for phi in (TestFunction(1.0, (0.0, 0.1), 0.5),
                    TestFunction(0.8, (0.3, -0.2), 0.45, tilt=(0.5, -0.2))):
            X, Y = box.mesh()
            vals = phi(X, Y)
            lhs = abs(float(((rho_q.values - rho_sc.values) * vals).sum()
                            * box.cell_area))
            rhs = (phi.sup_norm * M ** -0.5 * np.sqrt(max(tail_energy, 0.0))
                   + 10.0 * phi.grad_l2 * np.sqrt(kin) * np.sqrt(M) * s.l_b)
            assert lhs <= rhs
