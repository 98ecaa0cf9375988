"""Unit tests for opom_mpc.certificates.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""
import unittest

import numpy as np
from numpy.testing import assert_allclose

from opom_mpc.certificates import (
    c3,
    certify_setpoint,
    certify_zone,
    check_certificates,
    check_reference_admissible,
    check_Su,
    check_target_admissible,
    default_Su,
    gamma,
    gram_G,
    kernel_decomposition,
    lyapunov_residual,
    matrix_H,
    matrix_Z,
    phi_lower_bound,
    project_Ur,
    s_hat,
    slack_weight,
    terminal_weight,
)
from opom_mpc.exceptions import MpcException
from opom_mpc.helpers import Rectangle
from opom_mpc.tests.fixtures import first_order_scalar, random_stable_model, static_scalar, wide_rank_one


def _matrix_of_rank(rng, ny, nu, rank):
    return rng.standard_normal((ny, rank)) @ rng.standard_normal((rank, nu))


class KernelDecompositionTestCase(unittest.TestCase):
    """Test kernel_decomposition."""

    def test_regular(self):
        """Verify a regular matrix has an empty kernel and cokernel."""
        decomp = kernel_decomposition(np.eye(2))
        self.assertEqual(decomp.rank, 2)
        self.assertEqual(decomp.Vker.shape, (2, 0))
        self.assertEqual(decomp.W2.shape, (2, 0))
        self.assertTrue(decomp.injective)

    def test_coordinate_aligned(self):
        """Verify diag(1, 0) has kernel span(e2) and image span(e1)."""
        decomp = kernel_decomposition(np.diag([1.0, 0.0]))
        self.assertEqual(decomp.rank, 1)
        assert_allclose(np.abs(decomp.Vker[:, 0]), [0.0, 1.0], atol=1e-12)
        assert_allclose(np.abs(decomp.W1[:, 0]), [1.0, 0.0], atol=1e-12)

    def test_row_vector(self):
        """Verify ker [[1, 1]] = span((1, −1)/√2)."""
        decomp = kernel_decomposition([[1.0, 1.0]])
        self.assertEqual(decomp.rank, 1)
        assert_allclose(np.abs(decomp.Vker[:, 0]), [2**-0.5, 2**-0.5], atol=1e-12)
        self.assertAlmostEqual(decomp.Vker[0, 0], -decomp.Vker[1, 0], places=12)


class TerminalWeightTestCase(unittest.TestCase):
    """Test terminal_weight, gram_G and matrix_Z."""

    def test_scalar_geometric_series(self):
        """Verify Q̄ = Σ_{j≥1} 0.25^j = 1/3."""
        assert_allclose(terminal_weight([[0.5]], [[1.0]], [[1.0]]), [[1.0 / 3.0]], rtol=1e-14)

    def test_zero_dynamics(self):
        """Verify F = 0 gives Q̄ = 0."""
        assert_allclose(terminal_weight(np.zeros((2, 2)), np.eye(2), np.eye(2)), np.zeros((2, 2)))

    def test_scaled_output(self):
        """Verify F = 0.9, Ψ = 2 gives 4·0.81/0.19."""
        assert_allclose(terminal_weight([[0.9]], [[2.0]], [[1.0]]), [[324.0 / 19.0]], rtol=1e-12)

    def test_unstable(self):
        """Verify ρ(F) >= 1 is rejected."""
        with self.assertRaises(MpcException) as exc_info:
            terminal_weight([[1.0]], [[1.0]], [[1.0]])
        self.assertEqual(exc_info.exception.reason, "fail-unstable")

    def test_random_lyapunov_residual_and_series(self):
        """Verify the residual bound and the truncated-series oracle on random stable models."""
        rng = np.random.default_rng(11)
        for _ in range(100):
            nd = int(rng.integers(1, 9))
            model = random_stable_model(rng, 2, 2, nd, rho=rng.uniform(0.1, 0.95))
            Q = np.eye(2) + 0.1 * np.ones((2, 2))
            Qbar = terminal_weight(model.F, model.Psi, Q)
            norm = np.max(np.sum(np.abs(Qbar), axis=1))
            self.assertLessEqual(lyapunov_residual(model.F, model.Psi, Q, Qbar), 1e-10 * (1.0 + norm))

        for _ in range(20):
            nd = int(rng.integers(1, 6))
            model = random_stable_model(rng, 2, 1, nd, rho=0.6)
            Q = np.eye(2)
            series = np.zeros((nd, nd))
            power = np.eye(nd)
            for _ in range(400):
                power = model.F @ power
                series += power.T @ model.Psi.T @ Q @ model.Psi @ power
            Qbar = terminal_weight(model.F, model.Psi, Q)
            assert_allclose(Qbar, series, atol=1e-8 * (1.0 + np.max(np.abs(series))))

    def test_random_terminal_weight_is_psd(self):
        """Verify Q̄ is symmetric positive semidefinite on random stable models of every shape."""
        rng = np.random.default_rng(12)
        for _ in range(100):
            ny, nu, nd = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 9))
            model = random_stable_model(rng, ny, nu, nd, rho=rng.uniform(0.05, 0.95))
            B = rng.standard_normal((ny, ny))
            Q = B @ B.T + 0.01 * np.eye(ny)
            Qbar = terminal_weight(model.F, model.Psi, Q)
            scale = 1.0 + np.max(np.abs(Qbar))
            assert_allclose(Qbar, Qbar.T, atol=1e-12 * scale)
            self.assertGreaterEqual(np.min(np.linalg.eigvalsh(Qbar)), -1e-10 * scale)
            self.assertLessEqual(lyapunov_residual(model.F, model.Psi, Q, Qbar), 1e-10 * scale * nd)

    def test_gram_collapses(self):
        """Verify G = ΨᵀQΨ + Q̄ for every horizon."""
        Qbar = terminal_weight([[0.5]], [[1.0]], [[1.0]])
        for m in (1, 2, 3, 7):
            assert_allclose(gram_G(np.array([[0.5]]), np.array([[1.0]]), np.array([[1.0]]), Qbar, m), [[4.0 / 3.0]])

    def test_gram_empty(self):
        """Verify nd = 0 gives an empty G and Z = R."""
        G = gram_G(np.zeros((0, 0)), np.zeros((1, 0)), np.eye(1), np.zeros((0, 0)), 3)
        self.assertEqual(G.shape, (0, 0))
        assert_allclose(matrix_Z(np.eye(1), np.zeros((0, 1)), G), np.eye(1))

    def test_matrix_Z(self):
        """Verify Z = R + DdᵀGDd on scalars."""
        assert_allclose(matrix_Z([[1.0]], [[1.0]], np.array([[4.0 / 3.0]])), [[7.0 / 3.0]])
        assert_allclose(matrix_Z([[2.0]], [[0.0]], np.array([[4.0 / 3.0]])), [[2.0]])


class SHatTestCase(unittest.TestCase):
    """Test s_hat and project_Ur."""

    def test_examples(self):
        """Verify Ŝ on a scalar, the identity and diag(1, 0)."""
        assert_allclose(s_hat([[2.0]], kernel_decomposition([[2.0]])), [[0.25]])
        assert_allclose(s_hat(np.eye(3), kernel_decomposition(np.eye(3))), np.eye(3), atol=1e-14)
        D0 = np.diag([1.0, 0.0])
        assert_allclose(s_hat(D0, kernel_decomposition(D0)), np.eye(2), atol=1e-14)

    def test_isometry_on_kernel_complement(self):
        """Verify ‖D0·v‖²_Ŝ = ‖v‖² for v ⊥ ker D0 across ranks."""
        rng = np.random.default_rng(5)
        for ny, nu in ((3, 3), (2, 4), (4, 2)):
            for rank in sorted({min(ny, nu), min(ny, nu) - 1, 1}):
                D0 = _matrix_of_rank(rng, ny, nu, rank)
                decomp = kernel_decomposition(D0)
                self.assertEqual(decomp.rank, rank)
                S = s_hat(D0, decomp)
                for _ in range(100):
                    v = decomp.Vperp @ rng.standard_normal(rank)
                    image = D0 @ v
                    self.assertAlmostEqual(image @ S @ image, v @ v, delta=1e-9 * (1.0 + v @ v))

    def test_regular_shortcut(self):
        """Verify Ŝ = (D0⁻¹)ᵀD0⁻¹ for regular D0."""
        rng = np.random.default_rng(6)
        for _ in range(20):
            D0 = rng.standard_normal((3, 3)) + 3.0 * np.eye(3)
            inverse = np.linalg.inv(D0)
            assert_allclose(s_hat(D0, kernel_decomposition(D0)), inverse.T @ inverse, atol=1e-9)

    def test_projection(self):
        """Verify P_r on the kernel of [[1, 0]]."""
        decomp = kernel_decomposition([[1.0, 0.0]])
        assert_allclose(project_Ur([2.0, 3.0], [1.0, 0.0], decomp), [1.0, 3.0], atol=1e-14)
        assert_allclose(project_Ur([1.0, 0.0], [1.0, 0.0], decomp), [1.0, 0.0], atol=1e-14)
        regular = kernel_decomposition([[2.0]])
        assert_allclose(project_Ur([7.0], [0.5], regular), [0.5])

    def test_projection_properties(self):
        """Verify P_r is idempotent and lands on the reference-reaching inputs."""
        rng = np.random.default_rng(7)
        for ny, nu in ((1, 3), (2, 4), (3, 3), (2, 2)):
            for rank in sorted({min(ny, nu), 1}):
                D0 = _matrix_of_rank(rng, ny, nu, rank)
                decomp = kernel_decomposition(D0)
                u_r = decomp.Vperp @ rng.standard_normal(rank)
                r = D0 @ u_r
                for _ in range(50):
                    u = 3.0 * rng.standard_normal(nu)
                    projected = project_Ur(u, u_r, decomp)
                    assert_allclose(project_Ur(projected, u_r, decomp), projected, atol=1e-12)
                    assert_allclose(D0 @ projected, r, atol=1e-10 * (1.0 + np.max(np.abs(r))))
                    # the residual u − P_r u is orthogonal to ker D0
                    assert_allclose(decomp.Vker.T @ (u - projected), 0.0, atol=1e-10)


class PhiTestCase(unittest.TestCase):
    """Test phi_lower_bound."""

    def test_regular_is_one(self):
        """Verify φ = 1 when D0 is injective."""
        U = Rectangle.symmetric(1.0, 2)
        self.assertEqual(phi_lower_bound(np.eye(2), U, np.zeros(2), kernel_decomposition(np.eye(2))), 1.0)

    def test_aligned_kernel(self):
        """Verify φ = safety when Π_r and P_r coincide."""
        D0 = np.array([[1.0, 0.0]])
        phi = phi_lower_bound(
            D0, Rectangle.symmetric(1.0, 2), np.zeros(2), kernel_decomposition(D0), n_samples=200, safety=0.9
        )
        self.assertAlmostEqual(phi, 0.9, places=6)

    def test_no_samples(self):
        """Verify n_samples = 0 is rejected."""
        D0 = np.array([[1.0, 0.0]])
        with self.assertRaises(MpcException) as exc_info:
            phi_lower_bound(D0, Rectangle.symmetric(1.0, 2), np.zeros(2), kernel_decomposition(D0), n_samples=0)
        self.assertEqual(exc_info.exception.reason, "fail-samples")

    def test_phi_in_unit_interval(self):
        """Verify the estimate lies in (0, 1] for a rank-deficient D0 with a tilted kernel."""
        D0 = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]])
        decomp = kernel_decomposition(D0)
        u_r = np.array([0.5, 0.5, 0.0])
        phi = phi_lower_bound(D0, Rectangle.symmetric(1.0, 3), u_r, decomp, n_samples=300, seed=1)
        self.assertGreater(phi, 0.0)
        self.assertLessEqual(phi, 1.0)

    def test_sampling_progress_logged(self):
        """Verify sampling reports progress ten times at INFO level."""
        D0 = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]])
        u_r = np.array([0.5, 0.5, 0.0])
        with self.assertLogs("opom_mpc", level="INFO") as logs:
            phi_lower_bound(D0, Rectangle.symmetric(1.0, 3), u_r, kernel_decomposition(D0), n_samples=50, seed=1)
        progress = [line for line in logs.output if "phi sampling" in line]
        self.assertEqual(len(progress), 10)
        self.assertIn("50/50", progress[-1])


class ScalarCertificateTestCase(unittest.TestCase):
    """Test gamma, c3, slack_weight, matrix_H and Su."""

    def test_gamma(self):
        """Verify Γ on small matrices."""
        self.assertEqual(gamma([[4.0]]), 2.0)
        self.assertAlmostEqual(gamma(np.diag([1.0, 9.0])), 3.0, places=12)
        self.assertEqual(gamma(np.zeros((2, 2))), 0.0)

    def test_c3(self):
        """Verify C₃ on scalars and its φ⁻² scaling."""
        self.assertAlmostEqual(c3([[4.0]], [[1.0]], [[1.0]], 1.0), 8.0, places=12)
        self.assertAlmostEqual(c3([[4.0]], [[1.0]], [[1.0]], 0.5), 32.0, places=10)
        self.assertAlmostEqual(c3([[3.0]], np.zeros((0, 0)), [[3.0]], 1.0), 6.0, places=12)

    def test_c3_homogeneous_and_monotone(self):
        """Verify C₃ scales linearly with the weights and decreases as φ grows."""
        rng = np.random.default_rng(8)
        for _ in range(50):
            nu, nd = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            B = rng.standard_normal((nu, nu))
            R = B @ B.T + 0.1 * np.eye(nu)
            C = rng.standard_normal((nu, nu))
            Z = R + C @ C.T
            D = rng.standard_normal((nd, nd))
            Qbar = D @ D.T
            phi = rng.uniform(0.05, 1.0)
            base = c3(Z, Qbar, R, phi)
            self.assertGreater(base, 0.0)
            for factor in (1e-3, 2.0, 1e3):
                scaled = c3(factor * Z, factor * Qbar, factor * R, phi)
                self.assertAlmostEqual(scaled, factor * base, delta=1e-9 * factor * base)
            phis = np.sort(rng.uniform(0.05, 1.0, 5))
            values = [c3(Z, Qbar, R, value) for value in phis]
            self.assertTrue(all(later <= earlier for earlier, later in zip(values, values[1:])))

    def test_slack_weight(self):
        """Verify β = 6·C₃·(1 + margin) and S = β·Ŝ."""
        beta, S = slack_weight([[0.25]], 8.0, 0.1)
        self.assertAlmostEqual(beta, 52.8, places=10)
        assert_allclose(S, [[13.2]])
        with self.assertRaises(MpcException) as exc_info:
            slack_weight([[0.25]], 8.0, 0.0)
        self.assertEqual(exc_info.exception.reason, "fail-domain")

    def test_matrix_H(self):
        """Verify H on static and first-order scalars."""
        assert_allclose(
            matrix_H([[1.0]], np.zeros((0, 1)), np.zeros((1, 0)), np.zeros((0, 0)), [[1.0]], [[1.0]], [[1.0]], 1),
            [[1.0]],
        )
        Qbar = np.array([[1.0 / 3.0]])
        H = matrix_H([[1.0]], [[1.0]], [[1.0]], Qbar, [[1.0]], [[1.0]], [[1.0]], 2)
        assert_allclose(H, [[13.0 / 3.0]])
        doubled = matrix_H([[1.0]], [[1.0]], [[1.0]], Qbar, [[2.0]], [[1.0]], [[1.0]], 2)
        assert_allclose(doubled - H, [[2.0]])

    def test_su(self):
        """Verify Sᵤ = H + c·I and the strict check."""
        H = np.array([[1.0]])
        Su = default_Su(H, 2.0)
        assert_allclose(Su, [[3.0]])
        self.assertTrue(check_Su(Su, H))
        self.assertFalse(check_Su(H + np.eye(1), H))
        self.assertFalse(check_Su(H + 0.5 * np.eye(1), H))
        with self.assertRaises(MpcException) as exc_info:
            default_Su(H, 1.0)
        self.assertEqual(exc_info.exception.reason, "fail-domain")


class AdmissibilityTestCase(unittest.TestCase):
    """Test reference and target admissibility."""

    def test_reference(self):
        """Verify the three scalar reference cases."""
        U = Rectangle.symmetric(1.0, 1)
        zero = check_reference_admissible([[2.0]], U, [0.0])
        self.assertTrue(zero.admissible)
        assert_allclose(zero.u_r, [0.0], atol=1e-12)

        reachable = check_reference_admissible([[2.0]], U, [1.0])
        self.assertTrue(reachable.admissible)
        assert_allclose(reachable.u_r, [0.5], atol=1e-9)

        saturated = check_reference_admissible([[2.0]], U, [3.0])
        self.assertFalse(saturated.admissible)
        self.assertAlmostEqual(saturated.residual, 1.0, places=6)

    def test_target(self):
        """Verify input targets against U and Y."""
        U, Y = Rectangle.symmetric(1.0, 1), Rectangle(lo=[0.0], hi=[2.0])
        self.assertTrue(check_target_admissible([[1.0]], U, Y, [0.0]))
        self.assertTrue(check_target_admissible([[1.0]], U, Y, [0.5]))
        self.assertFalse(check_target_admissible([[1.0]], U, Y, [1.5]))


class CertifyTestCase(unittest.TestCase):
    """Test the certificate pipelines."""

    def test_setpoint_scalar(self):
        """Verify the certified bundle of the first-order scalar benchmark."""
        model = first_order_scalar()
        bundle = certify_setpoint(model, np.eye(1), np.eye(1), 3, Rectangle.symmetric(5.0, 1), [1.0])
        assert_allclose(bundle.Qbar, [[1.0 / 3.0]])
        assert_allclose(bundle.Z, [[7.0 / 3.0]])
        self.assertEqual(bundle.phi, 1.0)
        self.assertFalse(bundle.phi_heuristic)
        self.assertAlmostEqual(bundle.C3, 2.0 * 49.0 / 9.0, places=10)
        self.assertAlmostEqual(bundle.beta, 6.6 * bundle.C3, places=10)
        assert_allclose(bundle.S, bundle.beta * np.eye(1))
        self.assertTrue(bundle.beta_ok)
        self.assertEqual(check_certificates(bundle), [])

    def test_setpoint_overrides(self):
        """Verify φ and β overrides; a small β fails the β check."""
        model = static_scalar()
        box = Rectangle.symmetric(5.0, 1)
        bundle = certify_setpoint(model, np.eye(1), np.eye(1), 1, box, [1.0], phi=0.5, beta=1.0)
        self.assertEqual(bundle.phi, 0.5)
        self.assertEqual(bundle.beta, 1.0)
        self.assertFalse(bundle.beta_ok)
        self.assertIn("beta", check_certificates(bundle))

    def test_setpoint_rank_deficient_is_heuristic(self):
        """Verify a sampled φ is flagged heuristic."""
        model = wide_rank_one()
        bundle = certify_setpoint(
            model, np.eye(2), np.eye(3), 2, Rectangle.symmetric(5.0, 3), [1.0, 2.0], n_samples=300
        )
        self.assertTrue(bundle.phi_heuristic)
        self.assertTrue(bundle.reference_admissible)
        self.assertEqual(check_certificates(bundle), [])

    def test_unreachable_reference_flagged(self):
        """Verify an unreachable reference is reported, not raised."""
        bundle = certify_setpoint(static_scalar(), np.eye(1), np.eye(1), 1, Rectangle.symmetric(1.0, 1), [3.0])
        self.assertFalse(bundle.reference_admissible)
        self.assertIn("reference-admissible", check_certificates(bundle))

    def test_zone_scalar(self):
        """Verify Sᵤ = H + 2I on the first-order scalar benchmark."""
        model = first_order_scalar()
        U, Y = Rectangle.symmetric(5.0, 1), Rectangle(lo=[-1.0], hi=[2.0])
        bundle = certify_zone(model, np.eye(1), np.eye(1), np.eye(1), 2, U, Y, [1.0])
        assert_allclose(bundle.H, [[13.0 / 3.0]])
        assert_allclose(bundle.Su, [[19.0 / 3.0]])
        self.assertTrue(bundle.su_ok)
        self.assertTrue(bundle.target_admissible)
        self.assertEqual(check_certificates(bundle), [])

    def test_zone_explicit_su(self):
        """Verify an explicit Sᵤ below H + I fails the check."""
        model = static_scalar()
        bundle = certify_zone(
            model,
            np.eye(1),
            np.eye(1),
            np.eye(1),
            1,
            Rectangle.symmetric(5.0, 1),
            Rectangle.symmetric(2.0, 1),
            [1.0],
            Su=[[1.5]],
        )
        self.assertFalse(bundle.su_ok)
        self.assertIn("su", check_certificates(bundle))


if __name__ == "__main__":
    unittest.main()
