"""Closed-loop receding-horizon simulation.

Every step solves the controller problem at the current plant state, records the optimum and
applies only the first move to the nominal plant.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import SETTINGS
from .controllers import Controller, controller_for
from .exceptions import MpcException
from .metrics import STEP_TIME
from .opom import output, plant_step

logger = logging.getLogger(SETTINGS["logger_name"])


@dataclass(frozen=True, eq=False)
class StepRecord:
    """One receding-horizon step; ``state`` is the plant state before the move."""

    k: int
    state: object
    du: np.ndarray
    slacks: dict
    y: np.ndarray
    V_star: float
    kkt_residual: float
    wall_time: float = 0.0

    @property
    def du0(self):
        """Applied move."""
        return self.du[0]


@dataclass(eq=False)
class ClosedLoopTrace:
    """Records of one closed-loop run with the controller (spec snapshot) that produced them."""

    controller: Controller
    initial_state: object
    records: list = field(default_factory=list)
    certificates: object = None

    def __len__(self):
        """Number of recorded steps."""
        return len(self.records)

    @property
    def kind(self):
        """Controller kind of the run."""
        return self.controller.kind

    @property
    def V_star(self):
        """Array of V*_k over the run."""
        return np.array([record.V_star for record in self.records])

    def final_state(self):
        """Return the plant state after the last applied move."""
        if not self.records:
            return self.initial_state
        last = self.records[-1]
        return plant_step(self.controller.model, last.state, last.du0)

    def solution(self, index):
        """Return the solution object of record ``index`` rebuilt by prediction."""
        record = self.records[index]
        return self.controller.solution_from(record.state, record.du, record.slacks, record.V_star, record.kkt_residual)


def _as_controller(spec_or_controller):
    if isinstance(spec_or_controller, Controller):
        return spec_or_controller
    return controller_for(spec_or_controller)


def run_closed_loop(spec, initial_state=None, steps=100, certificates=None):
    """Run ``steps`` receding-horizon steps from ``initial_state`` (origin steady state by default).

    Args:
        spec (SetpointSpec, ZoneSpec or Controller): Controller configuration
        initial_state (PlantState): Starting plant state
        steps (int): Number of steps, at least 1
        certificates (CertificateBundle): Snapshot stored in the trace

    Raises:
      MpcException("fail-domain"):
        When steps < 1
      MpcException:
        Any solver failure, re-raised with the partial trace attached as ``trace``
    """
    controller = _as_controller(spec)
    model = controller.model
    if int(steps) != steps or steps < 1:
        raise MpcException(reason="fail-domain", message=f"steps must be an integer >= 1, got {steps}")
    state = model.origin() if initial_state is None else initial_state.check(model)
    trace = ClosedLoopTrace(controller=controller, initial_state=state, certificates=certificates)

    logger.info("START: %s closed loop, %s steps", controller.kind, steps)
    for k in range(1, int(steps) + 1):
        started = time.perf_counter()
        try:
            with STEP_TIME.time():
                solution = controller.solve(state)
        except MpcException as exc:
            logger.error("ERROR step %s: %s", k, exc)
            exc.trace = trace
            raise

        trace.records.append(
            StepRecord(
                k=k,
                state=state,
                du=solution.du,
                slacks=controller.slacks(solution),
                y=output(model, state),
                V_star=solution.V_star,
                kkt_residual=solution.kkt_residual,
                wall_time=time.perf_counter() - started,
            )
        )
        state = plant_step(model, state, solution.du[0])

    logger.info("FINISH: %s closed loop, V_final=%.3e", controller.kind, trace.records[-1].V_star)
    return trace


@dataclass(frozen=True)
class SweepRow:
    """Empirical gain of one scaled run."""

    scale: float
    gain: float
    V_final: float


def stability_sweep(spec_template, scales, steps=100, initial_state=None):
    """Run one closed loop per scale with the reference (or input target) multiplied by the scale.

    The gain of a run is sup_k of the controller tracking error divided by the scale.

    Raises:
      MpcException("fail-domain"):
        When a scale is outside (0, 1]
    """
    base = _as_controller(spec_template)
    rows = []
    for scale in scales:
        if not 0.0 < scale <= 1.0:
            raise MpcException(reason="fail-domain", message=f"sweep scales must be in (0, 1], got {scale}")
        controller = base.with_target(scale)
        trace = run_closed_loop(controller, initial_state=initial_state, steps=steps)
        errors = [controller.tracking_error(trace.solution(index)) for index in range(len(trace))]
        rows.append(SweepRow(scale=float(scale), gain=max(errors) / scale, V_final=trace.records[-1].V_star))
        logger.info("COLLECT: sweep scale %.3g gain %.6g", scale, rows[-1].gain)
    return rows
