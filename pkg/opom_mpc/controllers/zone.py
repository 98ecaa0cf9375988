"""Zone-control MPC with input targets.

Per step the controller solves, over z = [du(0); ...; du(m−1); y_sp; δ_y; δ_u],

    min Σ_{j<m}‖y(j) − y_sp − δ_y‖²_Qy + ‖xd(m−1)‖²_Q̄ + Σ_{j<m}‖u(j) − u_des − δ_u‖²_Qu
        + Σ_{j<m}‖du(j)‖²_R + ‖δ_y‖²_Sy + ‖δ_u‖²_Su
    s.t. xs(m−1) = y_sp + δ_y,  u(m−1) = u_des + δ_u,  du(j) ∈ dU,  u(j) ∈ U,  y_sp ∈ Y

The set-point y_sp is a free decision variable kept inside the zone Y.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from opom_mpc import SETTINGS
from opom_mpc.certificates import check_Su, check_target_admissible, gram_G, matrix_H, terminal_weight
from opom_mpc.choices import ControllerChoices
from opom_mpc.controllers.base import (
    Controller,
    QuadraticCost,
    Strategy,
    check_moves,
    move_rows,
    prediction_maps,
    raise_for_status,
    selector,
)
from opom_mpc.exceptions import MpcException
from opom_mpc.helpers import Rectangle, as_matrix, as_vector, check_positive_definite, weighted_sq
from opom_mpc.opom import OpomModel, PlantState, Prediction, plant_step, predict
from opom_mpc.qp import solve as solve_qp

logger = logging.getLogger(SETTINGS["logger_name"])


@dataclass(frozen=True, eq=False)
class ZoneSpec:
    """Zone controller configuration.

    With ``certificate_mode`` on, construction requires Su − H − I to be positive definite.
    With it off any PD Su is accepted and ``su_ok`` records whether the bound holds.
    """

    model: OpomModel
    m: int
    Qy: np.ndarray
    Qu: np.ndarray
    R: np.ndarray
    Sy: np.ndarray
    Su: np.ndarray
    U: Rectangle
    dU: Rectangle
    Y: Rectangle
    u_des: np.ndarray
    certificate_mode: bool = True
    Qbar: np.ndarray = field(init=False, repr=False)
    G: np.ndarray = field(init=False, repr=False)
    H: np.ndarray = field(init=False, repr=False)
    su_ok: bool = field(init=False)
    target_admissible: bool = field(init=False)

    def __post_init__(self):
        """Validate weights and boxes, then derive Q̄, G and H.

        Raises:
          MpcException("fail-domain"):
            When m < 1, a weight is not symmetric PD, or Su − H − I is not PD in certificate mode
          MpcException("fail-dimension"):
            When a weight, box or the target does not match the model
        """
        model = self.model
        if int(self.m) != self.m or self.m < 1:
            raise MpcException(reason="fail-domain", message=f"horizon m must be an integer >= 1, got {self.m}")
        object.__setattr__(self, "m", int(self.m))
        sizes = {"Qy": model.ny, "Qu": model.nu, "R": model.nu, "Sy": model.ny, "Su": model.nu}
        for name, size in sizes.items():
            weight = as_matrix(getattr(self, name), name, (size, size))
            object.__setattr__(self, name, check_positive_definite(weight, name))
        for name, size in (("U", model.nu), ("dU", model.nu), ("Y", model.ny)):
            if getattr(self, name).dim != size:
                raise MpcException(reason="fail-dimension", message=f"{name} must have {size} coordinates")
        object.__setattr__(self, "u_des", as_vector(self.u_des, "u_des", model.nu))

        Qbar = terminal_weight(model.F, model.Psi, self.Qy)
        H = matrix_H(model.D0, model.Dd, model.Psi, Qbar, self.Qy, self.Qu, self.R, self.m)
        object.__setattr__(self, "Qbar", Qbar)
        object.__setattr__(self, "G", gram_G(model.F, model.Psi, self.Qy, Qbar, self.m))
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "su_ok", check_Su(self.Su, H))
        object.__setattr__(self, "target_admissible", check_target_admissible(model.D0, self.U, self.Y, self.u_des))
        if self.certificate_mode and not self.su_ok:
            raise MpcException(reason="fail-domain", message="Su - H - I must be positive definite in certificate mode")
        if not self.target_admissible:
            logger.warning("CHECK: input target %s is not admissible, convergence guarantees void", self.u_des)

    @property
    def size(self):
        """Length of the decision vector."""
        return self.m * self.model.nu + 2 * self.model.ny + self.model.nu

    def replace(self, **changes):
        """Return a copy with some constructor fields replaced."""
        names = ("model", "m", "Qy", "Qu", "R", "Sy", "Su", "U", "dU", "Y", "u_des", "certificate_mode")
        values = {name: getattr(self, name) for name in names}
        values.update(changes)
        return ZoneSpec(**values)


@dataclass(frozen=True, eq=False)
class ZoneCandidate:
    """Moves, set-point and slacks; any feasible point of the per-step problem."""

    du: np.ndarray
    y_sp: np.ndarray
    delta_y: np.ndarray
    delta_u: np.ndarray


@dataclass(frozen=True, eq=False)
class ZoneSolution(ZoneCandidate):
    """Optimal point of the per-step problem at ``state``."""

    V_star: float
    predicted: Prediction
    state: PlantState
    kkt_residual: float


def _layout(spec):
    """Return the start offsets of (y_sp, δ_y, δ_u) in z."""
    moves = spec.m * spec.model.nu
    ny = spec.model.ny
    return moves, moves + ny, moves + 2 * ny


def _build(spec, state):
    model, m = spec.model, spec.m
    nu, ny = model.nu, model.ny
    state.check(model)
    maps = prediction_maps(model, state, m)
    size = spec.size
    moves = m * nu
    at_ysp, at_dy, at_du = _layout(spec)

    cost = QuadraticCost(size)
    minus_target = -selector(size, at_ysp, ny) - selector(size, at_dy, ny)
    minus_input_slack = -selector(size, at_du, nu)
    for j in range(m):
        jacobian = minus_target.copy()
        jacobian[:, :moves] = maps.y_jac[j]
        cost.add(maps.y_offset[j], jacobian, spec.Qy)
    if model.nd:
        terminal = np.zeros((model.nd, size))
        terminal[:, :moves] = maps.xd_jac
        cost.add(maps.xd_offset, terminal, spec.Qbar)
    for j in range(m):
        jacobian = minus_input_slack.copy()
        jacobian[:, :moves] = maps.u_jac[j]
        cost.add(maps.u_offset - spec.u_des, jacobian, spec.Qu)
    for j in range(m):
        cost.add(np.zeros(nu), selector(size, j * nu, nu), spec.R)
    cost.add(np.zeros(ny), selector(size, at_dy, ny), spec.Sy)
    cost.add(np.zeros(nu), selector(size, at_du, nu), spec.Su)

    output_rows = minus_target.copy()
    output_rows[:, :moves] = np.tile(model.D0, (1, m))
    input_rows = minus_input_slack.copy()
    input_rows[:, :moves] = np.tile(np.eye(nu), (1, m))
    Aeq = np.vstack([output_rows, input_rows])
    beq = np.concatenate([-state.xs, spec.u_des - state.u])

    Aineq, lo, hi = move_rows(model, state, m, size, spec.dU, spec.U)
    Aineq = np.vstack([Aineq, selector(size, at_ysp, ny)])
    lo = np.concatenate([lo, spec.Y.lo])
    hi = np.concatenate([hi, spec.Y.hi])
    return cost.program(Aeq=Aeq, beq=beq, Aineq=Aineq, lo=lo, hi=hi), cost.constant


def assemble_zone(spec, state):
    """Return the per-step QuadProgram at ``state``."""
    return _build(spec, state)[0]


def objective_constant_zone(spec, state):
    """Return the constant dropped from the assembled cost."""
    return _build(spec, state)[1]


def cost_of_zone(spec, state, du_seq, y_sp, delta_y, delta_u):
    """Evaluate the zone cost by prediction; constraints are not checked."""
    du_seq = np.reshape(np.asarray(du_seq, dtype=float), (spec.m, spec.model.nu))
    target = np.asarray(y_sp, dtype=float) + np.asarray(delta_y, dtype=float)
    input_target = spec.u_des + np.asarray(delta_u, dtype=float)
    prediction = predict(spec.model, state, du_seq)
    value = sum(weighted_sq(y - target, spec.Qy) for y in prediction.y)
    value += weighted_sq(prediction.xd[-1], spec.Qbar)
    value += sum(weighted_sq(u - input_target, spec.Qu) for u in prediction.u)
    value += sum(weighted_sq(move, spec.R) for move in du_seq)
    return float(value + weighted_sq(delta_y, spec.Sy) + weighted_sq(delta_u, spec.Su))


def _candidate_cost(spec, state, candidate):
    return cost_of_zone(spec, state, candidate.du, candidate.y_sp, candidate.delta_y, candidate.delta_u)


def feasibility_violation_zone(spec, state, candidate):
    """Return the largest violation of the two terminal equalities and the boxes by ``candidate``."""
    du = np.reshape(candidate.du, (spec.m, spec.model.nu))
    total = du.sum(axis=0)
    output_gap = state.xs + spec.model.D0 @ total - candidate.y_sp - candidate.delta_y
    input_gap = state.u + total - spec.u_des - candidate.delta_u
    levels = state.u + np.cumsum(du, axis=0)
    parts = [np.max(np.abs(output_gap), initial=0.0), np.max(np.abs(input_gap), initial=0.0)]
    for values, box in ((du, spec.dU), (levels, spec.U), (np.atleast_2d(candidate.y_sp), spec.Y)):
        parts.append(np.max(np.maximum(box.lo - values, values - box.hi), initial=0.0))
    return float(max(parts))


def solve_step_zone(spec, state, tol=SETTINGS["qp_tol"]):
    """Solve the per-step zone problem at ``state``.

    Raises:
      MpcException("fail-infeasible"):
        When the per-step QP has no feasible point
      MpcException("fail-numerical"):
        When the QP fails or its minimizer breaks a terminal equality or a box
    """
    model, m = spec.model, spec.m
    solution = solve_qp(assemble_zone(spec, state), tol=tol)
    raise_for_status(solution, "zone")

    at_ysp, at_dy, at_du = _layout(spec)
    du = solution.z[:at_ysp].reshape(m, model.nu)
    y_sp = solution.z[at_ysp:at_dy]
    delta_y = solution.z[at_dy:at_du]
    delta_u = solution.z[at_du:]
    prediction = predict(model, state, du)

    scale = 1.0 + np.max(np.abs(spec.u_des)) + np.max(np.abs(state.xs), initial=0.0)
    output_gap = np.max(np.abs(prediction.xs[-1] - y_sp - delta_y))
    input_gap = np.max(np.abs(prediction.u[-1] - spec.u_des - delta_u))
    if max(output_gap, input_gap) > SETTINGS["terminal_tol"] * scale:
        raise MpcException(
            reason="fail-numerical",
            message=f"terminal equalities violated by {output_gap:.3e} (output), {input_gap:.3e} (input)",
        )
    check_moves(spec, state, du, SETTINGS["box_tol"])
    if not spec.Y.contains(y_sp, SETTINGS["box_tol"]):
        raise MpcException(reason="fail-numerical", message="optimal set-point leaves the zone")

    return ZoneSolution(
        du=du,
        y_sp=y_sp,
        delta_y=delta_y,
        delta_u=delta_u,
        V_star=cost_of_zone(spec, state, du, y_sp, delta_y, delta_u),
        predicted=prediction,
        state=state,
        kkt_residual=solution.kkt_residual,
    )


def _check_successor(spec, prev, state):
    expected = plant_step(spec.model, prev.state, prev.du[0])
    for name in ("xs", "xd", "u"):
        if not np.allclose(getattr(state, name), getattr(expected, name), rtol=1e-12, atol=1e-12):
            raise MpcException(
                reason="fail-state-mismatch",
                message=f"state {name} does not follow from applying the first optimal move",
            )


def zone_decrement(spec, solution):
    """Return ‖y*(0) − y_sp* − δ_y*‖²_Qy + ‖u*(0) − u_des − δ_u*‖²_Qu + ‖du*(0)‖²_R."""
    prediction = solution.predicted
    return (
        weighted_sq(prediction.y[0] - solution.y_sp - solution.delta_y, spec.Qy)
        + weighted_sq(prediction.u[0] - spec.u_des - solution.delta_u, spec.Qu)
        + weighted_sq(solution.du[0], spec.R)
    )


def shifted_strategy_zone(spec, prev, state_after_move):
    """Return the shifted strategy (moves advanced, last move zero, set-point and slacks kept).

    Raises:
      MpcException("fail-state-mismatch"):
        When ``state_after_move`` is not the plant state after prev.du(0)
    """
    _check_successor(spec, prev, state_after_move)
    candidate = ZoneCandidate(
        du=np.vstack([prev.du[1:], np.zeros((1, spec.model.nu))]),
        y_sp=prev.y_sp.copy(),
        delta_y=prev.delta_y.copy(),
        delta_u=prev.delta_u.copy(),
    )
    return Strategy(
        candidate=candidate,
        V_tilde=_candidate_cost(spec, state_after_move, candidate),
        V_closed_form=prev.V_star - zone_decrement(spec, prev),
    )


def consolidated_strategy_zone(spec, prev_state, prev):
    """Apply the whole optimal move sum at once: du(0) = Σ du*, the rest zero.

    ``V_closed_form`` is ‖F·xd + Dd·Σdu*‖²_G + ‖Σdu*‖²_R + ‖δ_y*‖²_Sy + ‖δ_u*‖²_Su.

    Raises:
      MpcException("fail-state-mismatch"):
        When ``prev_state`` is not the state ``prev`` was computed at
      MpcException("fail-not-applicable"):
        When Σ du* lies outside dU
    """
    for name in ("xs", "xd", "u"):
        if not np.array_equal(getattr(prev_state, name), getattr(prev.state, name)):
            raise MpcException(reason="fail-state-mismatch", message="prev_state is not the state of the solution")
    model = spec.model
    total = prev.du.sum(axis=0)
    if not spec.dU.contains(total, SETTINGS["box_tol"]):
        raise MpcException(reason="fail-not-applicable", message="consolidated move leaves dU")
    du = np.zeros_like(prev.du)
    du[0] = total
    candidate = ZoneCandidate(du=du, y_sp=prev.y_sp.copy(), delta_y=prev.delta_y.copy(), delta_u=prev.delta_u.copy())
    closed_form = (
        weighted_sq(model.F @ prev_state.xd + model.Dd @ total, spec.G)
        + weighted_sq(total, spec.R)
        + weighted_sq(prev.delta_y, spec.Sy)
        + weighted_sq(prev.delta_u, spec.Su)
    )
    return Strategy(
        candidate=candidate, V_tilde=_candidate_cost(spec, prev_state, candidate), V_closed_form=closed_form
    )


def _alpha_excess(spec, sol, alpha):
    """Return (Ṽ − V*)/(1 − α) for the α-contracted candidate, by expansion around the optimum."""
    model, m = spec.model, spec.m
    prediction = sol.predicted
    d = sol.delta_u
    target = sol.y_sp + sol.delta_y
    cross = 0.0
    for j in range(m - 1):
        cross += (prediction.y[j] - target) @ spec.Qy @ (model.D0 @ d)
        cross += (prediction.u[j] - spec.u_des - d) @ spec.Qu @ d
    tail = prediction.xd[-1]
    cross -= (model.Psi @ tail) @ spec.Qy @ (model.Psi @ model.Dd @ d)
    cross -= tail @ spec.Qbar @ (model.Dd @ d)
    cross -= sol.du[-1] @ spec.R @ d
    return (
        2.0 * cross
        - (1.0 + alpha) * weighted_sq(sol.delta_y, spec.Sy)
        + (1.0 - alpha) * weighted_sq(d, spec.H)
        - (1.0 + alpha) * weighted_sq(d, spec.Su)
    )


def alpha_strategy_zone(spec, state, sol, alpha):
    """Contract the solution towards the input target by ``alpha``.

    The last move loses (1 − α)δ_u*, y_sp becomes α·y_sp* + (1 − α)D0·u_des and both slacks are
    multiplied by α. The candidate is feasible when the state is on a steady-state-consistent
    trajectory (xs = D0·u), the shortened move stays in dU and the target is admissible.

    Raises:
      MpcException("fail-not-applicable"):
        When alpha ∉ (0, 1) or the contracted candidate is infeasible
    """
    if not 0.0 < alpha < 1.0:
        raise MpcException(reason="fail-not-applicable", message=f"alpha must be in (0, 1), got {alpha}")
    model = spec.model
    du = sol.du.copy()
    du[-1] = du[-1] - (1.0 - alpha) * sol.delta_u
    candidate = ZoneCandidate(
        du=du,
        y_sp=alpha * sol.y_sp + (1.0 - alpha) * model.D0 @ spec.u_des,
        delta_y=alpha * sol.delta_y,
        delta_u=alpha * sol.delta_u,
    )
    scale = 1.0 + np.max(np.abs(du)) + np.max(np.abs(candidate.y_sp), initial=0.0)
    violation = feasibility_violation_zone(spec, state, candidate)
    if violation > SETTINGS["terminal_tol"] * scale:
        raise MpcException(
            reason="fail-not-applicable", message=f"contracted candidate violates constraints by {violation:.3e}"
        )
    return Strategy(
        candidate=candidate,
        V_tilde=_candidate_cost(spec, state, candidate),
        V_closed_form=sol.V_star + (1.0 - alpha) * _alpha_excess(spec, sol, alpha),
    )


def initial_strategy_zone(spec, state):
    """Return the hold strategy du = 0, y_sp = D0·u_des, δ_y = xs − D0·u_des, δ_u = u − u_des."""
    y_sp = spec.model.D0 @ spec.u_des
    candidate = ZoneCandidate(
        du=np.zeros((spec.m, spec.model.nu)),
        y_sp=y_sp,
        delta_y=state.xs - y_sp,
        delta_u=state.u - spec.u_des,
    )
    return Strategy(candidate=candidate, V_tilde=_candidate_cost(spec, state, candidate))


def initial_bound_zone(spec):
    """Return ‖D0·u_des‖²_Sy + ‖u_des‖²_Su, the initial-strategy cost at the origin steady state."""
    return weighted_sq(spec.model.D0 @ spec.u_des, spec.Sy) + weighted_sq(spec.u_des, spec.Su)


class ZoneController(Controller):
    """Zone controller with input target."""

    kind = ControllerChoices.CONTROLLER_ZONE
    slack_names = ("y_sp", "delta_y", "delta_u")

    def solve(self, state):
        """Solve the per-step problem."""
        return solve_step_zone(self.spec, state)

    def shifted(self, solution, state_after_move):
        """Return the shifted strategy."""
        return shifted_strategy_zone(self.spec, solution, state_after_move)

    def decrement(self, solution):
        """Return the stage cost of the first predicted step."""
        return zone_decrement(self.spec, solution)

    def initial_bound(self):
        """Return ‖D0·u_des‖²_Sy + ‖u_des‖²_Su."""
        return initial_bound_zone(self.spec)

    def guarantees_hold(self):
        """True when the target is admissible and Su − H − I is PD."""
        return self.spec.target_admissible and self.spec.su_ok

    def with_target(self, scale):
        """Return a controller pursuing ``scale``·u_des."""
        return ZoneController(self.spec.replace(u_des=scale * self.spec.u_des))

    def tracking_error(self, solution):
        """Return ‖(y*(0) − D0·u_des, u*(0) − u_des)‖."""
        prediction = solution.predicted
        return float(
            np.linalg.norm(
                np.concatenate(
                    [prediction.y[0] - self.model.D0 @ self.spec.u_des, prediction.u[0] - self.spec.u_des]
                )
            )
        )

    def solution_from(self, state, du, slacks, V_star, kkt_residual=0.0):
        """Rebuild a ZoneSolution from recorded values."""
        du = np.reshape(np.asarray(du, dtype=float), (self.spec.m, self.model.nu))
        return ZoneSolution(
            du=du,
            y_sp=np.asarray(slacks["y_sp"], dtype=float),
            delta_y=np.asarray(slacks["delta_y"], dtype=float),
            delta_u=np.asarray(slacks["delta_u"], dtype=float),
            V_star=float(V_star),
            predicted=predict(self.model, state, du),
            state=state,
            kkt_residual=float(kkt_residual),
        )
