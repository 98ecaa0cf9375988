"""Trace analyzers for the convergence and stability properties of both controllers.

Every quantity is computed from the recorded states, move sequences, slacks and costs;
nothing is re-solved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import SETTINGS
from .certificates import kernel_decomposition, project_Ur
from .choices import ControllerChoices
from .helpers import weighted_sq
from .metrics import analysis_checks_counter

logger = logging.getLogger(SETTINGS["logger_name"])


@dataclass
class AnalysisReport:  # pylint: disable=too-many-instance-attributes
    """Outcome of the trace checks.

    ``checks`` maps every applicable check name to its pass flag. Convergence and limit
    checks apply only when the run starts at the origin steady state and the controller
    assumptions hold (``assumptions_met``).
    """

    controller: str
    steps: int
    monotone_ok: bool = True
    monotone_max_violation: float = 0.0
    decrease_identity_max_err: float = 0.0
    V_final: float = 0.0
    xd_final_norm: float = 0.0
    perp_component_final: float = None
    projection_gap_final: float = None
    sum_du_final: float = None
    slack_limit_err: float = None
    move_cost_final: float = None
    target_gap_final: float = None
    upper_bound: float = 0.0
    upper_bound_ok: bool = True
    converged: bool = False
    assumptions_met: bool = False
    checks: dict = field(default_factory=dict)

    @property
    def passed(self):
        """True when every applicable check passed."""
        return all(self.checks.values())

    def failed(self):
        """Return the names of failed checks."""
        return [name for name, ok in self.checks.items() if not ok]


def _at_origin(trace):
    state = trace.initial_state
    return not (np.any(state.xs) or np.any(state.xd) or np.any(state.u))


def analyze(
    trace,
    monotone_tol=SETTINGS["monotone_tol"],
    convergence_tol=SETTINGS["convergence_tol"],
    limit_tol=SETTINGS["limit_tol"],
    bound_tol=SETTINGS["identity_tol"],
    target_tol=1e-4,
):
    """Check a closed-loop trace against the monotonicity, bound and limit properties.

    Args:
        trace (ClosedLoopTrace): Non-empty trace
        monotone_tol (float): Relative slack of V*_{k+1} ≤ V*_k and of the decrease inequality
        convergence_tol (float): Threshold on V*_K
        limit_tol (float): Threshold on the limit quantities at the last step
        bound_tol (float): Relative slack of V*_k ≤ initial-strategy bound
        target_tol (float): Threshold on ‖u − u_des‖ at the last step (zone, interior targets)
    """
    controller = trace.controller
    spec = controller.spec
    model = controller.model
    V = trace.V_star
    report = AnalysisReport(controller=controller.kind, steps=len(trace))
    if not len(trace):
        return report

    logger.info("START: analyze %s trace with %s steps", controller.kind, len(trace))
    solutions = [trace.solution(index) for index in range(len(trace))]

    violations = [max(0.0, V[k + 1] - V[k]) / (1.0 + V[k]) for k in range(len(V) - 1)]
    report.monotone_max_violation = float(max(violations, default=0.0))
    report.monotone_ok = report.monotone_max_violation <= monotone_tol

    decrease = [
        max(0.0, V[k + 1] - (V[k] - controller.decrement(solutions[k]))) / (1.0 + V[k]) for k in range(len(V) - 1)
    ]
    report.decrease_identity_max_err = float(max(decrease, default=0.0))

    last = solutions[-1]
    report.V_final = float(V[-1])
    report.converged = report.V_final <= convergence_tol
    report.xd_final_norm = float(np.linalg.norm(last.predicted.xd[0]))
    report.assumptions_met = _at_origin(trace) and bool(controller.guarantees_hold())

    report.upper_bound = float(controller.initial_bound())
    report.upper_bound_ok = bool(np.all(V <= report.upper_bound + bound_tol * (1.0 + report.upper_bound)))

    checks = {"monotone": report.monotone_ok, "decrease": report.decrease_identity_max_err <= monotone_tol}
    if _at_origin(trace):
        checks["upper-bound"] = report.upper_bound_ok

    total = last.du.sum(axis=0)
    u_first = last.predicted.u[0]
    if controller.kind == ControllerChoices.CONTROLLER_SETPOINT:
        decomp = kernel_decomposition(model.D0)
        report.perp_component_final = float(np.linalg.norm(decomp.perp(total)))
        report.projection_gap_final = float(np.linalg.norm(u_first - project_Ur(u_first, spec.u_r, decomp)))
        limits = {
            "xd-limit": (report.xd_final_norm, limit_tol),
            "perp-limit": (report.perp_component_final, limit_tol),
            "projection-limit": (report.projection_gap_final, limit_tol),
        }
    else:
        report.sum_du_final = float(np.linalg.norm(total))
        slack_cost = weighted_sq(last.delta_y, spec.Sy) + weighted_sq(last.delta_u, spec.Su)
        report.slack_limit_err = float(abs(report.V_final - slack_cost))
        report.move_cost_final = float(sum(weighted_sq(move, spec.R) for move in last.du))
        report.target_gap_final = float(np.linalg.norm(u_first - spec.u_des))
        limits = {
            "xd-limit": (report.xd_final_norm, limit_tol),
            "sum-du-limit": (report.sum_du_final, limit_tol),
            "slack-limit": (report.slack_limit_err, convergence_tol),
            "move-cost-limit": (report.move_cost_final, convergence_tol),
            "slack-y-limit": (float(np.linalg.norm(last.delta_y)), limit_tol),
            "slack-u-limit": (float(np.linalg.norm(last.delta_u)), limit_tol),
        }
        interior = spec.U.contains(spec.u_des, -limit_tol) and spec.Y.contains(model.D0 @ spec.u_des, -limit_tol)
        if report.assumptions_met and interior:
            checks["target"] = report.target_gap_final <= target_tol

    if report.assumptions_met:
        checks["converged"] = report.converged
        for name, (value, threshold) in limits.items():
            checks[name] = value <= threshold

    report.checks = checks
    for name, ok in checks.items():
        analysis_checks_counter.labels(check=name, result="pass" if ok else "fail").inc()
        if not ok:
            logger.warning("CHECK: %s failed on %s trace", name, controller.kind)
    logger.info("FINISH: analyze, %s of %s checks passed", sum(checks.values()), len(checks))
    return report
