"""Pieces shared by the set-point and zone controllers.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""

from dataclasses import dataclass

import numpy as np

from opom_mpc.choices import QpStatusChoices
from opom_mpc.exceptions import MpcException
from opom_mpc.helpers import matrix_powers, symmetrize
from opom_mpc.qp import QuadProgram


@dataclass(frozen=True, eq=False)
class PredictionMaps:
    """Affine maps from the stacked moves [du(0); ...; du(m−1)] to the predictions.

    y(j) = y_offset[j] + y_jac[j]·du, xd(m−1) = xd_offset + xd_jac·du, u(j) = u_offset + u_jac[j]·du.
    """

    y_offset: np.ndarray
    y_jac: np.ndarray
    xd_offset: np.ndarray
    xd_jac: np.ndarray
    u_offset: np.ndarray
    u_jac: np.ndarray


def prediction_maps(model, state, m):
    """Return the prediction maps at ``state`` for an m-move horizon (move j included in prediction j)."""
    ny, nu, nd = model.ny, model.nu, model.nd
    powers = matrix_powers(model.F, m)
    y_offset = np.empty((m, ny))
    y_jac = np.zeros((m, ny, m * nu))
    u_jac = np.zeros((m, nu, m * nu))
    xd_jac = np.zeros((nd, m * nu))
    for j in range(m):
        y_offset[j] = state.xs + model.Psi @ powers[j + 1] @ state.xd
        for i in range(j + 1):
            y_jac[j][:, i * nu : (i + 1) * nu] = model.D0 + model.Psi @ powers[j - i] @ model.Dd
            u_jac[j][:, i * nu : (i + 1) * nu] = np.eye(nu)
    for i in range(m):
        xd_jac[:, i * nu : (i + 1) * nu] = powers[m - 1 - i] @ model.Dd
    return PredictionMaps(
        y_offset=y_offset,
        y_jac=y_jac,
        xd_offset=powers[m] @ state.xd,
        xd_jac=xd_jac,
        u_offset=state.u.copy(),
        u_jac=u_jac,
    )


class QuadraticCost:
    """Accumulate terms ‖c + E·z‖²_W into ½zᵀPz + qᵀz + const."""

    def __init__(self, size):
        """Start from the zero cost over ``size`` variables."""
        self.size = size
        self.P = np.zeros((size, size))
        self.q = np.zeros(size)
        self.constant = 0.0

    def add(self, offset, jacobian, weight):
        """Add ‖offset + jacobian·z‖²_weight."""
        weighted = jacobian.T @ weight
        self.P += 2.0 * weighted @ jacobian
        self.q += 2.0 * weighted @ offset
        self.constant += float(offset @ weight @ offset)

    def program(self, Aeq, beq, Aineq, lo, hi):
        """Return the QuadProgram of this cost under the given rows."""
        return QuadProgram(P=symmetrize(self.P), q=self.q, Aeq=Aeq, beq=beq, Aineq=Aineq, lo=lo, hi=hi)


def selector(size, start, width):
    """Return the width×size matrix picking z[start:start+width]."""
    matrix = np.zeros((width, size))
    matrix[:, start : start + width] = np.eye(width)
    return matrix


def move_rows(model, state, m, size, dU, U):
    """Return (Aineq, lo, hi) for du(j) ∈ dU and u(j) = u + Σ_{i≤j} du(i) ∈ U, moves first in z."""
    nu = model.nu
    block = np.zeros((m * nu, size))
    block[:, : m * nu] = np.eye(m * nu)
    cumulative = np.zeros((m * nu, size))
    cumulative[:, : m * nu] = np.kron(np.tril(np.ones((m, m))), np.eye(nu))
    Aineq = np.vstack([block, cumulative])
    lo = np.concatenate([np.tile(dU.lo, m), np.tile(U.lo - state.u, m)])
    hi = np.concatenate([np.tile(dU.hi, m), np.tile(U.hi - state.u, m)])
    return Aineq, lo, hi


def raise_for_status(solution, label):
    """Turn a non-optimal QP status into an exception.

    Raises:
      MpcException("fail-infeasible"):
        When the QP is infeasible
      MpcException("fail-numerical"):
        When the QP did not reach the KKT tolerance
    """
    if solution.status == QpStatusChoices.STATUS_INFEASIBLE:
        raise MpcException(reason="fail-infeasible", message=f"{label} QP is infeasible")
    if solution.status != QpStatusChoices.STATUS_OPTIMAL:
        raise MpcException(
            reason="fail-numerical", message=f"{label} QP failed with KKT residual {solution.kkt_residual:.3e}"
        )


def check_moves(spec, state, du, tol):
    """Raise unless every move lies in dU and every predicted input in U (within ``tol``)."""
    levels = state.u + np.cumsum(du, axis=0)
    if not all(spec.dU.contains(move, tol) for move in du) or not all(spec.U.contains(u, tol) for u in levels):
        raise MpcException(reason="fail-numerical", message="optimal moves violate the input boxes")


@dataclass(frozen=True, eq=False)
class Strategy:
    """A feasible competitor of the optimal solution and its cost.

    ``V_closed_form`` is the same cost obtained from an algebraic identity, when one exists.
    """

    candidate: object
    V_tilde: float
    V_closed_form: float = None


class Controller:
    """Generic receding-horizon controller bound to one spec."""

    kind = None
    slack_names = ()

    def __init__(self, spec):
        """Init the class."""
        self.spec = spec

    @property
    def model(self):
        """OPOM model the controller is configured for."""
        return self.spec.model

    def solve(self, state):
        """Return the optimal solution at ``state``."""
        raise NotImplementedError

    def shifted(self, solution, state_after_move):
        """Return the shifted strategy built from ``solution`` at the next state."""
        raise NotImplementedError

    def decrement(self, solution):
        """Return the guaranteed cost decrease V*_k − Ṽ_{k+1} of the shifted strategy."""
        raise NotImplementedError

    def initial_bound(self):
        """Return the cost of the initial strategy at the origin steady state."""
        raise NotImplementedError

    def slacks(self, solution):
        """Return the slack vectors of ``solution`` keyed by ``slack_names``."""
        return {name: getattr(solution, name) for name in self.slack_names}

    def guarantees_hold(self):
        """True when the convergence assumptions of the configuration are met."""
        raise NotImplementedError

    def with_target(self, scale):
        """Return a controller with the reference or input target scaled by ``scale``."""
        raise NotImplementedError

    def tracking_error(self, solution):
        """Return the deviation norm reported by the stability sweep."""
        raise NotImplementedError

    def solution_from(self, state, du, slacks, V_star, kkt_residual=0.0):
        """Rebuild a solution object from recorded values by prediction only."""
        raise NotImplementedError
