"""Unit tests for opom_mpc.qp.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from opom_mpc.choices import QpStatusChoices
from opom_mpc.exceptions import MpcException
from opom_mpc.qp import QpSolution, QuadProgram, brute_force, kkt_residual, random_qp, solve, verify_qp


def clamped():
    """Return min (z − 1)² s.t. 0 ≤ z ≤ 0.5 (constant dropped)."""
    return QuadProgram(P=[[2.0]], q=[-2.0], Aineq=[[1.0]], lo=[0.0], hi=[0.5])


def symmetric_equality():
    """Return min z₁² + z₂² s.t. z₁ + z₂ = 1."""
    return QuadProgram(P=2.0 * np.eye(2), q=np.zeros(2), Aeq=[[1.0, 1.0]], beq=[1.0])


def scalar_setpoint():
    """Return min z² + (z − 1)² (constant dropped)."""
    return QuadProgram(P=[[4.0]], q=[-2.0])


class QuadProgramTestCase(unittest.TestCase):
    """Test QuadProgram validation."""

    def test_not_positive_definite(self):
        """Verify a singular Hessian is rejected."""
        with self.assertRaises(MpcException) as exc_info:
            QuadProgram(P=np.diag([1.0, 0.0]), q=np.zeros(2))
        self.assertEqual(exc_info.exception.reason, "fail-domain")

    def test_rank_deficient_equalities(self):
        """Verify repeated equality rows are rejected."""
        with self.assertRaises(MpcException) as exc_info:
            QuadProgram(P=np.eye(2), q=np.zeros(2), Aeq=[[1.0, 1.0], [2.0, 2.0]], beq=[1.0, 2.0])
        self.assertEqual(exc_info.exception.reason, "fail-rank")

    def test_crossed_bounds(self):
        """Verify lo > hi is rejected."""
        with self.assertRaises(MpcException) as exc_info:
            QuadProgram(P=np.eye(1), q=[0.0], Aineq=[[1.0]], lo=[1.0], hi=[0.0])
        self.assertEqual(exc_info.exception.reason, "fail-domain")

    def test_dimension(self):
        """Verify q must match P."""
        with self.assertRaises(MpcException) as exc_info:
            QuadProgram(P=np.eye(2), q=np.zeros(3))
        self.assertEqual(exc_info.exception.reason, "fail-dimension")


class SolveTestCase(unittest.TestCase):
    """Test the dual active-set solver."""

    def test_clamped(self):
        """Verify the unconstrained optimum is clamped to the upper bound."""
        solution = solve(clamped())
        self.assertTrue(solution.optimal)
        assert_allclose(solution.z, [0.5], atol=1e-12)
        self.assertGreater(solution.duals_ineq[0], 0.0)

    def test_symmetric_equality(self):
        """Verify the equality-constrained minimizer is (0.5, 0.5)."""
        solution = solve(symmetric_equality())
        self.assertTrue(solution.optimal)
        assert_allclose(solution.z, [0.5, 0.5], atol=1e-12)

    def test_unconstrained(self):
        """Verify the scalar set-point minimizer z = 0.5 with cost 0.5."""
        solution = solve(scalar_setpoint())
        assert_allclose(solution.z, [0.5], atol=1e-12)
        self.assertAlmostEqual(solution.objective + 1.0, 0.5, places=12)

    def test_lower_bound_dual_sign(self):
        """Verify a row active at its lower bound gets a non-positive multiplier."""
        qp = QuadProgram(P=[[2.0]], q=[2.0], Aineq=[[1.0]], lo=[0.0], hi=[np.inf])
        solution = solve(qp)
        assert_allclose(solution.z, [0.0], atol=1e-12)
        self.assertLess(solution.duals_ineq[0], 0.0)

    def test_infeasible(self):
        """Verify infeasibility is a status, not an exception."""
        qp = QuadProgram(
            P=np.eye(2), q=np.zeros(2), Aeq=[[1.0, 1.0]], beq=[5.0], Aineq=np.eye(2), lo=[-1.0, -1.0], hi=[1.0, 1.0]
        )
        solution = solve(qp)
        self.assertEqual(solution.status, QpStatusChoices.STATUS_INFEASIBLE)
        self.assertFalse(solution.optimal)

    def test_random_programs_meet_kkt(self):
        """Verify random feasible programs solve to the KKT tolerance."""
        rng = np.random.default_rng(2)
        for _ in range(200):
            qp = random_qp(rng)
            solution = solve(qp)
            self.assertTrue(solution.optimal)
            self.assertLessEqual(kkt_residual(qp, solution), 1e-9 * (1.0 + np.max(np.abs(qp.q))))

    def test_added_row_never_lowers_optimum(self):
        """Verify one more inequality row leaves the optimum equal or higher."""
        rng = np.random.default_rng(5)
        tightened = 0
        for _ in range(200):
            qp = random_qp(rng)
            before = solve(qp)
            row = rng.standard_normal(qp.n)
            lo = row @ before.z + rng.uniform(-1.0, 0.3)
            after = solve(qp.with_row(row, lo, lo + 0.5))
            if after.status == QpStatusChoices.STATUS_INFEASIBLE:
                continue
            self.assertTrue(after.optimal)
            self.assertGreaterEqual(after.objective, before.objective - 1e-9 * (1.0 + abs(before.objective)))
            tightened += int(after.objective > before.objective + 1e-9)
        self.assertGreater(tightened, 0)

    def test_scaled_objective_keeps_minimizer(self):
        """Verify multiplying P and q by t leaves the minimizer unchanged."""
        rng = np.random.default_rng(6)
        for _ in range(100):
            qp = random_qp(rng)
            reference = solve(qp).z
            for factor in (1e-3, 1.0, 1e3):
                solution = solve(qp.scaled(factor))
                self.assertTrue(solution.optimal)
                assert_allclose(solution.z, reference, rtol=0.0, atol=1e-7)

    def test_repeated_solves_identical(self):
        """Verify solving the same program twice gives bitwise identical results."""
        rng = np.random.default_rng(7)
        for _ in range(100):
            qp = random_qp(rng)
            first, second = solve(qp), solve(qp)
            assert_array_equal(first.z, second.z)
            assert_array_equal(first.duals_ineq, second.duals_ineq)
            self.assertEqual(first.objective, second.objective)


class KktResidualTestCase(unittest.TestCase):
    """Test kkt_residual."""

    def test_exact(self):
        """Verify the analytic solution has zero residual."""
        qp = scalar_setpoint()
        exact = QpSolution(np.array([0.5]), np.zeros(0), np.zeros(0), qp.objective(np.array([0.5])), "optimal", 0.0)
        self.assertLessEqual(kkt_residual(qp, exact), 1e-12)

    def test_perturbed(self):
        """Verify a 1e-3 drift is detected."""
        qp = scalar_setpoint()
        drifted = QpSolution(np.array([0.501]), np.zeros(0), np.zeros(0), 0.0, "optimal", 0.0)
        self.assertGreaterEqual(kkt_residual(qp, drifted), 1e-4)

    def test_infeasible_point(self):
        """Verify a point outside the box has a feasibility residual."""
        qp = clamped()
        outside = QpSolution(np.array([0.8]), np.zeros(0), np.zeros(1), 0.0, "optimal", 0.0)
        self.assertGreater(kkt_residual(qp, outside), 0.0)


class BruteForceTestCase(unittest.TestCase):
    """Test the brute-force oracle."""

    def test_examples(self):
        """Verify the oracle reproduces the solver examples."""
        for qp in (clamped(), symmetric_equality(), scalar_setpoint()):
            self.assertAlmostEqual(qp.objective(brute_force(qp)), solve(qp).objective, delta=1e-6)

    def test_equality_only_matches_kkt(self):
        """Verify a pure equality program against the KKT linear system."""
        P = np.array([[3.0, 1.0, 0.0], [1.0, 2.0, 0.5], [0.0, 0.5, 1.0]])
        q = np.array([1.0, -1.0, 2.0])
        A = np.array([[1.0, 2.0, -1.0]])
        kkt = np.block([[P, A.T], [A, np.zeros((1, 1))]])
        expected = np.linalg.solve(kkt, np.concatenate([-q, [0.5]]))[:3]
        assert_allclose(brute_force(QuadProgram(P=P, q=q, Aeq=A, beq=[0.5])), expected, atol=1e-10)

    def test_unsupported(self):
        """Verify more than 4 variables are refused."""
        with self.assertRaises(MpcException) as exc_info:
            brute_force(QuadProgram(P=np.eye(5), q=np.zeros(5)))
        self.assertEqual(exc_info.exception.reason, "fail-unsupported")

    def test_oracle_equivalence(self):
        """Verify solver and oracle agree on random strictly convex programs."""
        result = verify_qp(instances=500, seed=0)
        self.assertEqual(result.failures, 0)
        self.assertLessEqual(result.max_gap, 1e-6)
        self.assertTrue(result.passed())


if __name__ == "__main__":
    unittest.main()
