"""Unit tests for the closed-loop simulator, the trace analyzer and the stability sweep.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""
import dataclasses
import unittest
from unittest import mock

import numpy as np
from numpy.testing import assert_allclose

from opom_mpc.analyzer import analyze
from opom_mpc.choices import ControllerChoices
from opom_mpc.controllers import SetpointController, SetpointSpec
from opom_mpc.exceptions import MpcException
from opom_mpc.helpers import Rectangle
from opom_mpc.opom import PlantState
from opom_mpc.simulator import run_closed_loop, stability_sweep
from opom_mpc.tests.fixtures import (
    complex_pair_2x2,
    first_order_scalar,
    setpoint_spec,
    static_scalar,
    tall_rank_one,
    wide_rank_one,
    zone_spec,
)

STEPS = 400


def static_setpoint(r=1.0):
    """Return the static scalar set-point spec with wide boxes."""
    return SetpointSpec(
        model=static_scalar(),
        m=1,
        Q=[[1.0]],
        R=[[1.0]],
        S=[[1.0]],
        U=Rectangle.symmetric(10.0, 1),
        dU=Rectangle.symmetric(10.0, 1),
        r=[r],
    )


class RunClosedLoopTestCase(unittest.TestCase):
    """Test run_closed_loop."""

    def test_zero_reference_stays_at_rest(self):
        """Verify r = 0 from the origin records zero costs and passes every check."""
        trace = run_closed_loop(static_setpoint(r=0.0), steps=5)
        self.assertEqual(len(trace), 5)
        assert_allclose(trace.V_star, np.zeros(5), atol=1e-12)
        report = analyze(trace)
        self.assertTrue(report.passed, report.failed())
        self.assertTrue(report.converged)

    def test_first_record(self):
        """Verify the k = 1 record of the static scalar example."""
        trace = run_closed_loop(static_setpoint(), steps=3)
        first = trace.records[0]
        self.assertEqual(first.k, 1)
        assert_allclose(first.du0, [0.5], atol=1e-9)
        assert_allclose(first.slacks["delta"], [-0.5], atol=1e-9)
        assert_allclose(first.y, [0.0])
        self.assertAlmostEqual(first.V_star, 0.5, places=9)
        self.assertEqual(trace.kind, ControllerChoices.CONTROLLER_SETPOINT)

    def test_state_follows_first_move(self):
        """Verify each recorded state is the previous state advanced by the applied move."""
        spec, _ = setpoint_spec(first_order_scalar(), [1.0], n_samples=200)
        trace = run_closed_loop(spec, steps=4)
        assert_allclose(trace.records[1].state.u, trace.records[0].du0)
        assert_allclose(trace.final_state().u, sum(record.du0 for record in trace.records))

    def test_steps_validated(self):
        """Verify steps < 1 is rejected."""
        with self.assertRaises(MpcException) as exc_info:
            run_closed_loop(static_setpoint(), steps=0)
        self.assertEqual(exc_info.exception.reason, "fail-domain")

    def test_failure_keeps_partial_trace(self):
        """Verify a solver failure is re-raised with the steps recorded so far."""
        controller = SetpointController(static_setpoint())
        solve = controller.solve
        calls = []

        def failing_solve(state):
            calls.append(state)
            if len(calls) == 3:
                raise MpcException(reason="fail-infeasible", message="set-point QP is infeasible")
            return solve(state)

        with mock.patch.object(controller, "solve", side_effect=failing_solve):
            with self.assertRaises(MpcException) as exc_info:
                run_closed_loop(controller, steps=5)
        self.assertEqual(exc_info.exception.reason, "fail-infeasible")
        self.assertEqual(len(exc_info.exception.trace), 2)

    def test_initial_state(self):
        """Verify a non-origin start is recorded and skips the upper-bound check."""
        state = PlantState(xs=[0.5], xd=np.zeros(0), u=[0.5])
        trace = run_closed_loop(SetpointController(static_setpoint()), initial_state=state, steps=10)
        assert_allclose(trace.records[0].y, [0.5])
        report = analyze(trace)
        self.assertNotIn("upper-bound", report.checks)
        self.assertFalse(report.assumptions_met)


class ConvergenceTestCase(unittest.TestCase):
    """Test that the certified configurations converge and satisfy the trace checks."""

    def assert_converges(self, spec):
        """Run from the origin and require every applicable check to pass."""
        trace = run_closed_loop(spec, steps=STEPS)
        report = analyze(trace)
        self.assertTrue(report.assumptions_met)
        self.assertTrue(report.passed, report.failed())
        self.assertLessEqual(report.V_final, 1e-6)
        self.assertTrue(report.upper_bound_ok)
        self.assertIn("converged", report.checks)
        return report

    def test_setpoint_scalar(self):
        """Verify the first-order scalar set-point loop."""
        report = self.assert_converges(setpoint_spec(first_order_scalar(), [1.0])[0])
        self.assertLessEqual(report.projection_gap_final, 1e-5)

    def test_setpoint_tall(self):
        """Verify a tall rank-one plant with a reachable reference."""
        self.assert_converges(setpoint_spec(tall_rank_one(), [1.0, 0.5])[0])

    def test_setpoint_rank_deficient(self):
        """Verify a wide rank-deficient plant with the certified slack weight."""
        report = self.assert_converges(setpoint_spec(wide_rank_one(), [1.0, 2.0])[0])
        self.assertLessEqual(report.perp_component_final, 1e-5)

    def test_zone_scalar(self):
        """Verify the first-order scalar zone loop reaches its input target."""
        report = self.assert_converges(zone_spec(first_order_scalar(), [1.0], Rectangle(lo=[-0.5], hi=[2.0]))[0])
        self.assertLessEqual(report.target_gap_final, 1e-4)

    def test_zone_complex_pair(self):
        """Verify the 2×2 zone loop with a complex pole pair."""
        self.assert_converges(zone_spec(complex_pair_2x2(), [0.5, -0.5], Rectangle.symmetric(2.0, 2))[0])

    def test_zone_rank_deficient(self):
        """Verify the zone loop on a wide rank-deficient plant."""
        self.assert_converges(zone_spec(wide_rank_one(), [0.3, 0.2, 0.1], Rectangle.symmetric(3.0, 2))[0])


class AnalyzeTestCase(unittest.TestCase):
    """Test analyze on tampered traces."""

    def test_increasing_cost_detected(self):
        """Verify an inflated V* breaks monotonicity."""
        trace = run_closed_loop(static_setpoint(), steps=6)
        trace.records[3] = dataclasses.replace(trace.records[3], V_star=trace.records[3].V_star + 1.0)
        report = analyze(trace)
        self.assertFalse(report.monotone_ok)
        self.assertFalse(report.passed)
        self.assertIn("monotone", report.failed())

    def test_upper_bound_detected(self):
        """Verify a cost above the initial-strategy bound is reported."""
        trace = run_closed_loop(static_setpoint(), steps=3)
        trace.records[0] = dataclasses.replace(trace.records[0], V_star=10.0)
        report = analyze(trace)
        self.assertFalse(report.upper_bound_ok)
        self.assertIn("upper-bound", report.failed())

    def test_unreachable_reference_skips_limits(self):
        """Verify convergence checks are not applied when the reference is not admissible."""
        trace = run_closed_loop(static_setpoint(r=30.0), steps=20)
        report = analyze(trace)
        self.assertFalse(report.assumptions_met)
        self.assertNotIn("converged", report.checks)
        self.assertTrue(report.monotone_ok)

    def test_uncertified_slack_weight_skips_limits(self):
        """Verify an arbitrary S on a rank-deficient D0 voids the convergence checks."""
        spec, _ = setpoint_spec(wide_rank_one(), [1.0, 2.0], S=np.eye(2))
        self.assertTrue(spec.reference_admissible)
        report = analyze(run_closed_loop(spec, steps=50))
        self.assertFalse(report.assumptions_met)
        self.assertNotIn("converged", report.checks)
        self.assertTrue(report.monotone_ok)


class StabilitySweepTestCase(unittest.TestCase):
    """Test stability_sweep."""

    def test_gain_bounded(self):
        """Verify the gains of small targets stay below 1.5 times the full-scale gain."""
        spec, _ = setpoint_spec(first_order_scalar(), [1.0], n_samples=200)
        rows = stability_sweep(spec, [1.0, 0.1, 0.01, 0.001], steps=60)
        self.assertEqual([row.scale for row in rows], [1.0, 0.1, 0.01, 0.001])
        for row in rows[1:]:
            self.assertLessEqual(row.gain, 1.5 * rows[0].gain)

    def test_zone_gain_bounded(self):
        """Verify the zone sweep gains stay bounded."""
        spec, _ = zone_spec(first_order_scalar(), [1.0], Rectangle(lo=[-0.5], hi=[2.0]))
        rows = stability_sweep(spec, [1.0, 0.1], steps=60)
        self.assertLessEqual(rows[1].gain, 1.5 * rows[0].gain)

    def test_zero_scale(self):
        """Verify a zero scale is rejected."""
        with self.assertRaises(MpcException) as exc_info:
            stability_sweep(static_setpoint(), [1.0, 0.0], steps=5)
        self.assertEqual(exc_info.exception.reason, "fail-domain")


if __name__ == "__main__":
    unittest.main()
