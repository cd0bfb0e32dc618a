"""Tests for vortex coherent states, projector kernels, and closure relations."""

import numpy as np
import pytest
from scipy import integrate
from scipy.special import gammaln

from gyrolab.basis import Truncation, eval_basis_block, ladder_matrix, make_scaling
from gyrolab.coherent import (
    CoherentLabel,
    TruncationInsufficientError,
    coherent_coeffs,
    coherent_coeff_matrix,
    eval_coherent,
    gaussian_tail_moment_odd,
    pi_z_kernel,
    projector_kernel,
    truncated_projector_sum,
)


def complex_perp_fd(f, zv, h):
    """Complex pairing v1 + i v2 of the perp z-gradient (-d2 f, d1 f) by
    central differences; f maps an (2,) array to a complex value."""
    e1, e2 = np.array([h, 0.0]), np.array([0.0, h])
    d1 = (f(zv + e1) - f(zv - e1)) / (2 * h)
    d2 = (f(zv + e2) - f(zv - e2)) / (2 * h)
    return -d2 + 1j * d1


class TestEvalCoherent:
    def test_reduces_to_ground_state(self):
        s = make_scaling(1.0)
        val = eval_coherent(CoherentLabel(0.0, 0), np.array([0.0, 0.0]), s)
        assert abs(val - 1.0 / np.sqrt(2 * np.pi)) < 1e-14

    def test_zero_at_center_for_excited(self):
        s = make_scaling(2.0)
        z = 0.3 + 0.1j
        val = eval_coherent(CoherentLabel(z, 1), np.array([0.3, 0.1]), s)
        assert val == 0.0

    @pytest.mark.parametrize("n", range(0, 9))
    def test_l2_normalized(self, n):
        # oracle: radial quadrature of |psi|^2 (modulus is radial around z)
        s = make_scaling(2.0)
        lab = CoherentLabel(0.37 - 0.21j, n)
        r = np.linspace(0, 14 * s.l_b, 4001)
        pts = np.stack([r + 0.37, np.full_like(r, -0.21)], axis=-1)
        vals = np.abs(eval_coherent(lab, pts, s)) ** 2
        nrm = 2 * np.pi * integrate.simpson(vals * r, x=r)
        assert abs(nrm - 1.0) < 1e-8


class TestCoeffs:
    def test_origin_is_delta(self):
        s = make_scaling(4.0)
        c, tail = coherent_coeffs(CoherentLabel(0.0, 0), Truncation(2, 8), s)
        assert c[0] == 1.0 and np.all(c[1:] == 0.0) and tail == 0.0

    def test_poisson_weights(self):
        # |z| = sqrt(2) l_b gives |c_m|^2 = e^{-1}/m!
        s = make_scaling(4.0)
        z = np.sqrt(2) * s.l_b * np.exp(1j * 0.3)
        c, tail = coherent_coeffs(CoherentLabel(z, 0), Truncation(2, 30), s)
        m = np.arange(31)
        expected = np.exp(-1.0 - gammaln(m + 1.0))
        np.testing.assert_allclose(np.abs(c) ** 2, expected, rtol=1e-12)
        assert abs(np.sum(np.abs(c) ** 2) + tail - 1.0) < 1e-14

    def test_overlap_vs_quadrature(self):
        # oracle: 2D tensor quadrature of conj(phi_{n,m}) psi_{z,n}
        s = make_scaling(2.0)
        t = Truncation(4, 10)
        z = 0.55 - 0.3j
        spacing = 0.22 * s.l_b
        radius = 11 * s.l_b + abs(z)
        ax = np.arange(-radius, radius + spacing / 2, spacing)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
        Phi = eval_basis_block(t, s, pts)
        for n in (0, 2, 4):
            psi = eval_coherent(CoherentLabel(z, n), pts, s)
            ov = (Phi.conj().T @ psi) * spacing ** 2
            c, _ = coherent_coeffs(CoherentLabel(z, n), t, s, tail_tol=1e-6)
            for m in range(11):
                assert abs(ov[t.flat(n, m)] - c[m]) < 1e-8

    def test_tail_gate(self):
        s = make_scaling(8.0)
        with pytest.raises(TruncationInsufficientError):
            coherent_coeffs(CoherentLabel(1.5, 0), Truncation(2, 10), s)

    def test_matrix_matches_rows(self):
        s = make_scaling(4.0)
        zs = np.array([0.0, 0.2 + 0.1j, -0.4j])
        C, tails = coherent_coeff_matrix(zs, 25, s)
        for i, z in enumerate(zs):
            c, tail = coherent_coeffs(CoherentLabel(complex(z), 0), Truncation(0, 25), s,
                                      tail_tol=1.0)
            np.testing.assert_allclose(C[i], c, atol=1e-15)
            assert abs(tails[i] - tail) < 1e-14

    def test_eigenrelation_defect(self):
        # c psi_{z,n} = (zbar / sqrt2 l_b) psi_{z,n}; on the truncated basis the
        # defect is exactly sqrt(lambda)|c_M| with lambda = |z|^2/2l_b^2, which
        # is <= 10 sqrt(tail) whenever m_ang <= 99.
        s = make_scaling(4.0)
        t = Truncation(3, 40)
        z = 0.61 * np.exp(0.9j)
        c, tail = coherent_coeffs(CoherentLabel(z, 1), t, s, tail_tol=1.0)
        C = ladder_matrix("c", t).A
        vec = np.zeros(t.size, dtype=complex)
        cols = [t.flat(1, m) for m in range(t.m_ang + 1)]
        vec[cols] = c
        defect = np.linalg.norm(C @ vec - np.conj(z) / (np.sqrt(2) * s.l_b) * vec)
        lam = abs(z) ** 2 / (2 * s.l_b ** 2)
        assert abs(defect - np.sqrt(lam) * abs(c[-1])) < 1e-12
        assert defect <= 10.0 * np.sqrt(tail)


class TestProjectorKernels:
    def setup_method(self):
        self.s = make_scaling(4.0)

    def test_coincidence_values(self):
        z = 0.4 - 0.2j
        pt = np.array([0.4, -0.2])
        v0 = projector_kernel(CoherentLabel(z, 0), pt, pt, self.s)
        assert abs(v0 - 1.0 / (2 * np.pi * self.s.l_b ** 2)) < 1e-10
        for n in (1, 3):
            assert projector_kernel(CoherentLabel(z, n), pt, pt, self.s) == 0.0

    def test_rank_one_product(self):
        rng = np.random.default_rng(3)
        lab = CoherentLabel(0.3 + 0.27j, 2)
        for _ in range(5):
            x = rng.normal(scale=0.5, size=2) + np.array([0.3, 0.27])
            y = rng.normal(scale=0.5, size=2) + np.array([0.3, 0.27])
            k = projector_kernel(lab, x, y, self.s)
            p = eval_coherent(lab, x, self.s) * np.conj(eval_coherent(lab, y, self.s))
            assert abs(k - p) <= 1e-12 * max(abs(k), 1e-300)

    def test_hermitian_symmetry(self):
        rng = np.random.default_rng(11)
        lab = CoherentLabel(-0.2 + 0.5j, 1)
        for _ in range(5):
            x = rng.normal(scale=0.4, size=2)
            y = rng.normal(scale=0.4, size=2)
            assert projector_kernel(lab, x, y, self.s) == np.conj(
                projector_kernel(lab, y, x, self.s))

    def test_pi_z_diagonal_independent_of_z(self):
        pt = np.array([0.15, 0.7])
        for z in (0.0, 0.3 + 0.2j, -1.1j):
            v = pi_z_kernel(z, pt, pt, self.s)
            assert abs(v - 1.0 / (2 * np.pi * self.s.l_b ** 2)) < 1e-12

    def test_partial_sums_converge(self):
        z = 0.2 + 0.1j
        lb = self.s.l_b
        x = np.array([0.2 + 1.4 * lb, 0.1 - 0.9 * lb])
        y = np.array([0.2 - 0.6 * lb, 0.1 + 1.8 * lb])
        full = pi_z_kernel(z, x, y, self.s)
        errs = [abs(truncated_projector_sum(z, x, y, self.s, N) - full)
                for N in (10, 20, 40)]
        assert errs[2] <= 1e-6
        assert errs[2] <= errs[1] <= errs[0]

    def test_grad_perp_identity_fd(self):
        # grad_perp_z Pi_z = ((y - x)/(i l_b^2)) Pi_z, complex pairing, FD in z
        lb = self.s.l_b
        x = np.array([0.2 + 1.4 * lb, 0.1])
        y = np.array([0.15, 0.1 - 0.5 * lb])
        zv = np.array([0.2, 0.1])
        lhs = complex_perp_fd(lambda w: pi_z_kernel(w[0] + 1j * w[1], x, y, self.s),
                              zv, 1e-6)
        xc, yc = x[0] + 1j * x[1], y[0] + 1j * y[1]
        rhs = (yc - xc) / (1j * lb ** 2) * pi_z_kernel(zv[0] + 1j * zv[1], x, y, self.s)
        assert abs(lhs - rhs) <= 1e-5 * abs(rhs)

    @pytest.mark.parametrize("M", [2, 5])
    def test_truncated_derivative_identity(self, M):
        # Lemma form: the truncated projector obeys the commutator identity up
        # to the boundary dyad with coefficient sqrt(M+1)/(sqrt2 l_b); in the
        # complex pairing the dyad contributes -sqrt(2(M+1))/l_b psi_M(x)conj(psi_{M+1}(y)).
        s = self.s
        lb = s.l_b
        x = np.array([0.2 + 1.1 * lb, 0.1 - 0.4 * lb])
        y = np.array([0.2 - 0.7 * lb, 0.1 + 0.8 * lb])
        zv = np.array([0.2, 0.1])
        z = zv[0] + 1j * zv[1]
        lhs = complex_perp_fd(
            lambda w: truncated_projector_sum(w[0] + 1j * w[1], x, y, s, M), zv, 1e-6)
        xc, yc = x[0] + 1j * x[1], y[0] + 1j * y[1]
        comm = (yc - xc) / (1j * lb ** 2) * truncated_projector_sum(z, x, y, s, M)
        dyad = (np.sqrt(2.0 * (M + 1)) / lb
                * eval_coherent(CoherentLabel(z, M), x, s)
                * np.conj(eval_coherent(CoherentLabel(z, M + 1), y, s)))
        rhs = comm - dyad
        assert abs(lhs - rhs) <= 1e-4 * abs(rhs)


class TestResolutionOfIdentity:
    def test_closure_quadrature(self):
        # (1/2 pi l_b^2) Int <phi_{n,m}|Pi_{z,n}|phi_{n,m'}> dz -> delta_{mm'}
        s = make_scaling(4.0)
        m_ang = 12
        radius = (np.sqrt(2.0 * m_ang) + 6.0) * s.l_b
        spacing = s.l_b / 3.0
        ax = np.arange(-radius, radius + spacing / 2, spacing)
        Zx, Zy = np.meshgrid(ax, ax, indexing="ij")
        zs = (Zx + 1j * Zy).ravel()
        C, _ = coherent_coeff_matrix(zs, m_ang, s)
        G = (C.conj().T @ C) * spacing ** 2 / (2 * np.pi * s.l_b ** 2)
        sub = G[: m_ang // 2 + 1, : m_ang // 2 + 1]
        dev = np.abs(sub - np.eye(sub.shape[0])).max()
        assert dev <= 1e-6


class TestIntegrationLemmas:
    def test_l1_growth(self):
        # ||psi_{z,n}||_L1 / ((n+1)^{1/4} l_b): bounded, approaching 2^{5/4} pi^{3/4}.
        s = make_scaling(2.0)
        asym = 2.0 ** 1.25 * np.pi ** 0.75
        ratios = []
        for n in range(0, 31, 5):
            r = np.linspace(0, (10 + 2 * np.sqrt(n + 1)) * s.l_b, 6001)[1:]
            pts = np.stack([r, np.zeros_like(r)], axis=-1)
            vals = np.abs(eval_coherent(CoherentLabel(0.0, n), pts, s))
            l1 = 2 * np.pi * integrate.trapezoid(vals * r, r)
            ratios.append(l1 / ((n + 1) ** 0.25 * s.l_b))
        ratios = np.array(ratios)
        assert np.all(ratios <= 6.0)
        assert abs(ratios[-1] / asym - 1.0) < 0.02

    def test_odd_moment_base_cases(self):
        for a in (0.0, 1.0, 3.0):
            assert abs(gaussian_tail_moment_odd(0, a) - np.exp(-a * a / 2)) < 1e-15
        assert abs(gaussian_tail_moment_odd(1, 1.0) - 3.0 * np.exp(-0.5)) < 1e-14
        assert abs(gaussian_tail_moment_odd(1, 1.0) - 1.81959198) < 1e-7

    @pytest.mark.parametrize("a", [0.0, 1.0, 3.0])
    @pytest.mark.parametrize("n", range(7))
    def test_odd_moment_vs_quadrature(self, n, a):
        val, err = integrate.quad(lambda t: t ** (2 * n + 1) * np.exp(-t * t / 2),
                                  a, np.inf, epsabs=1e-13, epsrel=1e-13)
        assert abs(gaussian_tail_moment_odd(n, a) - val) < 1e-10
