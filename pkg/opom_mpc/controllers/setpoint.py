"""Infinite-horizon set-point MPC with a terminal slack.

Per step the controller solves, over z = [du(0); ...; du(m−1); δ],

    min Σ_{j<m}‖e(j) − δ‖²_Q + ‖xd(m−1)‖²_Q̄ + Σ_{j<m}‖du(j)‖²_R + ‖δ‖²_S
    s.t. xs(m−1) − δ = r,  du(j) ∈ dU,  u(j) ∈ U

with e(j) = y(j) − r. The terminal weight Q̄ sums the output error over the infinite tail.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from opom_mpc import SETTINGS
from opom_mpc.certificates import (
    c3,
    check_reference_admissible,
    gram_G,
    kernel_decomposition,
    matrix_Z,
    nearest_admissible_input,
    s_hat,
    terminal_weight,
)
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
class SetpointSpec:  # pylint: disable=too-many-instance-attributes
    """Set-point controller configuration.

    Construction never fails on an unreachable reference or an uncertified slack weight;
    ``reference_admissible`` or ``slack_ok`` is then False and the convergence guarantees
    are void. ``slack_ok`` holds when S = β·Ŝ with β > 6·C₃. C₃ uses the supplied ``phi``, or
    φ = 1 for an injective D0; a rank-deficient D0 without ``phi`` leaves S uncertified.
    """

    model: OpomModel
    m: int
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray
    U: Rectangle
    dU: Rectangle
    r: np.ndarray
    phi: float = None
    Qbar: np.ndarray = field(init=False, repr=False)
    G: np.ndarray = field(init=False, repr=False)
    u_r: np.ndarray = field(init=False, repr=False)
    reference_admissible: bool = field(init=False)
    beta: float = field(init=False)
    C3: float = field(init=False)
    slack_ok: bool = field(init=False)

    def __post_init__(self):
        """Validate weights and boxes, then derive Q̄, G, the reference input u_r and the slack certificate.

        Raises:
          MpcException("fail-domain"):
            When m < 1, a weight is not symmetric positive definite or phi is outside (0, 1]
          MpcException("fail-dimension"):
            When a weight, box or the reference does not match the model
        """
        model = self.model
        if int(self.m) != self.m or self.m < 1:
            raise MpcException(reason="fail-domain", message=f"horizon m must be an integer >= 1, got {self.m}")
        object.__setattr__(self, "m", int(self.m))
        for name, size in (("Q", model.ny), ("R", model.nu), ("S", model.ny)):
            weight = as_matrix(getattr(self, name), name, (size, size))
            object.__setattr__(self, name, check_positive_definite(weight, name))
        for name in ("U", "dU"):
            if getattr(self, name).dim != model.nu:
                raise MpcException(reason="fail-dimension", message=f"{name} must have {model.nu} coordinates")
        object.__setattr__(self, "r", as_vector(self.r, "r", model.ny))
        if self.phi is not None and not 0.0 < self.phi <= 1.0:
            raise MpcException(reason="fail-domain", message=f"phi must lie in (0, 1], got {self.phi}")

        Qbar = terminal_weight(model.F, model.Psi, self.Q)
        object.__setattr__(self, "Qbar", Qbar)
        object.__setattr__(self, "G", gram_G(model.F, model.Psi, self.Q, Qbar, self.m))
        reference = check_reference_admissible(model.D0, self.U, self.r)
        object.__setattr__(self, "u_r", reference.u_r)
        object.__setattr__(self, "reference_admissible", reference.admissible)
        if not reference.admissible:
            logger.warning("CHECK: reference %s is not admissible, convergence guarantees void", self.r)
        self._certify_slack()

    def _certify_slack(self):
        model = self.model
        decomp = kernel_decomposition(model.D0)
        phi = self.phi
        if phi is None and decomp.injective:
            phi = 1.0
        S_hat = s_hat(model.D0, decomp)
        beta = float(np.trace(self.S) / np.trace(S_hat))
        if not np.allclose(self.S, beta * S_hat, rtol=1e-9, atol=1e-12 * np.max(np.abs(self.S))):
            beta = None
        C3 = None if phi is None else c3(matrix_Z(self.R, model.Dd, self.G), self.Qbar, self.R, phi)
        slack_ok = beta is not None and C3 is not None and beta > 6.0 * C3
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "C3", C3)
        object.__setattr__(self, "slack_ok", slack_ok)
        if not slack_ok:
            logger.warning("CHECK: slack weight S is not certified (beta=%s, C3=%s), guarantees void", beta, C3)

    @property
    def size(self):
        """Length of the decision vector."""
        return self.m * self.model.nu + self.model.ny

    def replace(self, **changes):
        """Return a copy with some constructor fields replaced."""
        values = {name: getattr(self, name) for name in ("model", "m", "Q", "R", "S", "U", "dU", "r", "phi")}
        values.update(changes)
        return SetpointSpec(**values)


@dataclass(frozen=True, eq=False)
class SetpointCandidate:
    """Move sequence and slack; any feasible point of the per-step problem."""

    du: np.ndarray
    delta: np.ndarray


@dataclass(frozen=True, eq=False)
class SetpointSolution(SetpointCandidate):
    """Optimal point of the per-step problem at ``state``."""

    V_star: float
    predicted: Prediction
    e0: np.ndarray
    state: PlantState
    kkt_residual: float


def _build(spec, state):
    model, m = spec.model, spec.m
    nu, ny = model.nu, model.ny
    state.check(model)
    maps = prediction_maps(model, state, m)
    size = spec.size
    moves = m * nu

    cost = QuadraticCost(size)
    minus_delta = -selector(size, moves, ny)
    for j in range(m):
        jacobian = minus_delta.copy()
        jacobian[:, :moves] = maps.y_jac[j]
        cost.add(maps.y_offset[j] - spec.r, jacobian, spec.Q)
    if model.nd:
        terminal = np.zeros((model.nd, size))
        terminal[:, :moves] = maps.xd_jac
        cost.add(maps.xd_offset, terminal, spec.Qbar)
    for j in range(m):
        cost.add(np.zeros(nu), selector(size, j * nu, nu), spec.R)
    cost.add(np.zeros(ny), selector(size, moves, ny), spec.S)

    Aeq = np.hstack([np.tile(model.D0, (1, m)), -np.eye(ny)])
    Aineq, lo, hi = move_rows(model, state, m, size, spec.dU, spec.U)
    return cost.program(Aeq=Aeq, beq=spec.r - state.xs, Aineq=Aineq, lo=lo, hi=hi), cost.constant


def assemble(spec, state):
    """Return the per-step QuadProgram at ``state``; ½zᵀPz + qᵀz + objective_constant(spec, state) is the cost."""
    return _build(spec, state)[0]


def objective_constant(spec, state):
    """Return the constant dropped from the assembled cost."""
    return _build(spec, state)[1]


def cost_of(spec, state, du_seq, delta):
    """Evaluate the cost by prediction; boxes and the terminal equality are not checked."""
    du_seq = np.reshape(np.asarray(du_seq, dtype=float), (spec.m, spec.model.nu))
    delta = np.asarray(delta, dtype=float)
    prediction = predict(spec.model, state, du_seq)
    value = sum(weighted_sq(e - delta, spec.Q) for e in prediction.y - spec.r)
    value += weighted_sq(prediction.xd[-1], spec.Qbar)
    value += sum(weighted_sq(move, spec.R) for move in du_seq)
    return float(value + weighted_sq(delta, spec.S))


def feasibility_violation(spec, state, candidate):
    """Return the largest violation of the terminal equality and the input boxes by ``candidate``."""
    du = np.reshape(candidate.du, (spec.m, spec.model.nu))
    terminal = state.xs + spec.model.D0 @ du.sum(axis=0) - candidate.delta - spec.r
    levels = state.u + np.cumsum(du, axis=0)
    parts = [np.max(np.abs(terminal), initial=0.0)]
    for values, box in ((du, spec.dU), (levels, spec.U)):
        parts.append(np.max(np.maximum(box.lo - values, values - box.hi), initial=0.0))
    return float(max(parts))


def solve_step(spec, state, tol=SETTINGS["qp_tol"]):
    """Solve the per-step problem at ``state``.

    Raises:
      MpcException("fail-infeasible"):
        When the per-step QP has no feasible point
      MpcException("fail-numerical"):
        When the QP fails or its minimizer breaks the terminal equality or the boxes
    """
    model, m = spec.model, spec.m
    qp = assemble(spec, state)
    solution = solve_qp(qp, tol=tol)
    raise_for_status(solution, "set-point")

    moves = m * model.nu
    du = solution.z[:moves].reshape(m, model.nu)
    delta = solution.z[moves:]
    prediction = predict(model, state, du)
    terminal = np.max(np.abs(prediction.xs[-1] - delta - spec.r))
    if terminal > SETTINGS["terminal_tol"] * (1.0 + np.max(np.abs(spec.r))):
        raise MpcException(reason="fail-numerical", message=f"terminal equality violated by {terminal:.3e}")
    check_moves(spec, state, du, SETTINGS["box_tol"])

    return SetpointSolution(
        du=du,
        delta=delta,
        V_star=cost_of(spec, state, du, delta),
        predicted=prediction,
        e0=prediction.y[0] - spec.r,
        state=state,
        kkt_residual=solution.kkt_residual,
    )


def _check_successor(spec, prev, state_after_move):
    expected = plant_step(spec.model, prev.state, prev.du[0])
    for name in ("xs", "xd", "u"):
        actual, wanted = getattr(state_after_move, name), getattr(expected, name)
        if not np.allclose(actual, wanted, rtol=1e-12, atol=1e-12):
            raise MpcException(
                reason="fail-state-mismatch",
                message=f"state {name} does not follow from applying the first optimal move",
            )


def shifted_strategy(spec, prev, state_after_move):
    """Return the shifted strategy (moves advanced by one, last move zero, δ kept).

    ``V_closed_form`` is V* − ‖e*(0) − δ*‖²_Q − ‖du*(0)‖²_R.

    Raises:
      MpcException("fail-state-mismatch"):
        When ``state_after_move`` is not the plant state after prev.du(0)
    """
    _check_successor(spec, prev, state_after_move)
    du = np.vstack([prev.du[1:], np.zeros((1, spec.model.nu))])
    candidate = SetpointCandidate(du=du, delta=prev.delta.copy())
    return Strategy(
        candidate=candidate,
        V_tilde=cost_of(spec, state_after_move, du, candidate.delta),
        V_closed_form=prev.V_star - setpoint_decrement(spec, prev),
    )


def setpoint_decrement(spec, solution):
    """Return ‖e*(0) − δ*‖²_Q + ‖du*(0)‖²_R."""
    return weighted_sq(solution.e0 - solution.delta, spec.Q) + weighted_sq(solution.du[0], spec.R)


def null_strategy_cost(spec, state):
    """Return ‖F·xd‖²_G + ‖xs − r‖²_S, the cost of du = 0, δ = xs − r."""
    return weighted_sq(spec.model.F @ state.xd, spec.G) + weighted_sq(state.xs - spec.r, spec.S)


def projection_strategy(spec, state, alpha, u_r=None, decomp=None):
    """Move a fraction ``alpha`` of the way from u to Π_r u in one move, then hold.

    The candidate is du(0) = α(Π_r u − u), du(j) = 0 for j ≥ 1, δ = xs − r + D0·du(0).

    Raises:
      MpcException("fail-not-applicable"):
        When alpha ∉ (0, 1] or du(0) ∉ dU
    """
    if not 0.0 < alpha <= 1.0:
        raise MpcException(reason="fail-not-applicable", message=f"alpha must be in (0, 1], got {alpha}")
    model = spec.model
    u_r = spec.u_r if u_r is None else as_vector(u_r, "u_r", model.nu)
    decomp = kernel_decomposition(model.D0) if decomp is None else decomp
    move = alpha * (nearest_admissible_input(state.u, u_r, decomp, spec.U) - state.u)
    if not spec.dU.contains(move, SETTINGS["box_tol"]):
        raise MpcException(reason="fail-not-applicable", message="projection move leaves dU")
    du = np.zeros((spec.m, model.nu))
    du[0] = move
    candidate = SetpointCandidate(du=du, delta=state.xs - spec.r + model.D0 @ move)
    return Strategy(candidate=candidate, V_tilde=cost_of(spec, state, du, candidate.delta))


def initial_bound(spec):
    """Return ‖r‖²_S, the null-strategy cost at the origin steady state."""
    return null_strategy_cost(spec, spec.model.origin())


class SetpointController(Controller):
    """Set-point tracking controller."""

    kind = ControllerChoices.CONTROLLER_SETPOINT
    slack_names = ("delta",)

    def solve(self, state):
        """Solve the per-step problem."""
        return solve_step(self.spec, state)

    def shifted(self, solution, state_after_move):
        """Return the shifted strategy."""
        return shifted_strategy(self.spec, solution, state_after_move)

    def decrement(self, solution):
        """Return ‖e*(0) − δ*‖²_Q + ‖du*(0)‖²_R."""
        return setpoint_decrement(self.spec, solution)

    def initial_bound(self):
        """Return ‖r‖²_S."""
        return initial_bound(self.spec)

    def guarantees_hold(self):
        """True when the reference is admissible and the slack weight is certified."""
        return self.spec.reference_admissible and self.spec.slack_ok

    def with_target(self, scale):
        """Return a controller tracking ``scale``·r."""
        return SetpointController(self.spec.replace(r=scale * self.spec.r))

    def tracking_error(self, solution):
        """Return ‖e*(0)‖."""
        return float(np.linalg.norm(solution.e0))

    def solution_from(self, state, du, slacks, V_star, kkt_residual=0.0):
        """Rebuild a SetpointSolution from recorded values."""
        du = np.reshape(np.asarray(du, dtype=float), (self.spec.m, self.model.nu))
        prediction = predict(self.model, state, du)
        return SetpointSolution(
            du=du,
            delta=np.asarray(slacks["delta"], dtype=float),
            V_star=float(V_star),
            predicted=prediction,
            e0=prediction.y[0] - self.spec.r,
            state=state,
            kkt_residual=float(kkt_residual),
        )
