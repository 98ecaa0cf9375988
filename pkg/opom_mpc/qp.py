"""Dense strictly convex quadratic programming.

    min ½ zᵀPz + qᵀz   s.t.   Aeq z = beq,   lo ≤ Aineq z ≤ hi

``solve`` is a dual active-set method on the Cholesky factor of P: it starts from the
unconstrained minimizer, adds the equality rows, then repeatedly adds the most violated
one-sided inequality, dropping active rows whose multiplier would turn negative. The final
active set is polished with one equality-constrained KKT solve. ``brute_force`` is an
independent oracle for tiny problems.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import SETTINGS
from .choices import QpStatusChoices
from .exceptions import MpcException
from .helpers import as_matrix, as_vector, is_symmetric, min_eigenvalue
from .metrics import qp_results_counter

logger = logging.getLogger(SETTINGS["logger_name"])


@dataclass(frozen=True, eq=False)
class QuadProgram:
    """Canonical QP. Infinite entries of ``lo``/``hi`` mark unbounded sides."""

    P: np.ndarray
    q: np.ndarray
    Aeq: np.ndarray = None
    beq: np.ndarray = None
    Aineq: np.ndarray = None
    lo: np.ndarray = None
    hi: np.ndarray = None

    def __post_init__(self):
        """Coerce arrays and check the QP invariants.

        Raises:
          MpcException("fail-dimension"):
            When shapes disagree
          MpcException("fail-domain"):
            When P is not symmetric positive definite or lo > hi somewhere
          MpcException("fail-rank"):
            When Aeq is not of full row rank
        """
        P = as_matrix(self.P, "P")
        n = P.shape[0]
        if P.shape != (n, n):
            raise MpcException(reason="fail-dimension", message=f"P must be square, got {P.shape}")
        q = as_vector(self.q, "q", n)
        Aeq = np.zeros((0, n)) if self.Aeq is None else as_matrix(np.reshape(self.Aeq, (-1, n)), "Aeq", (None, n))
        beq = np.zeros(0) if self.beq is None else as_vector(self.beq, "beq", Aeq.shape[0])
        if self.Aineq is None:
            Aineq, lo, hi = np.zeros((0, n)), np.zeros(0), np.zeros(0)
        else:
            Aineq = as_matrix(np.reshape(self.Aineq, (-1, n)), "Aineq", (None, n))
            lo = np.array(self.lo, dtype=float).reshape(-1)
            hi = np.array(self.hi, dtype=float).reshape(-1)
            if lo.size != Aineq.shape[0] or hi.size != Aineq.shape[0]:
                raise MpcException(reason="fail-dimension", message="lo and hi must have one entry per Aineq row")
            if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo == np.inf) or np.any(hi == -np.inf):
                raise MpcException(reason="fail-domain", message="bounds must be numbers with lo < +inf and hi > -inf")
            if np.any(lo > hi):
                raise MpcException(reason="fail-domain", message="every lower bound must not exceed its upper bound")

        if not is_symmetric(P):
            raise MpcException(reason="fail-domain", message="P must be symmetric")
        if n and min_eigenvalue(P) <= 0.0:
            raise MpcException(reason="fail-domain", message="P must be positive definite")
        if Aeq.shape[0]:
            sigma = np.linalg.svd(Aeq, compute_uv=False)
            if Aeq.shape[0] > n or sigma[-1] <= SETTINGS["rank_tol"] * max(sigma[0], 1.0):
                raise MpcException(reason="fail-rank", message="Aeq must have full row rank")

        for name, value in (("P", P), ("q", q), ("Aeq", Aeq), ("beq", beq), ("Aineq", Aineq), ("lo", lo), ("hi", hi)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n(self):
        """Number of decision variables."""
        return self.P.shape[0]

    def objective(self, z):
        """Return ½zᵀPz + qᵀz."""
        return float(0.5 * z @ self.P @ z + self.q @ z)

    def with_row(self, row, lo, hi):
        """Return a copy with one more two-sided inequality row."""
        return QuadProgram(
            P=self.P,
            q=self.q,
            Aeq=self.Aeq,
            beq=self.beq,
            Aineq=np.vstack([self.Aineq, np.reshape(row, (1, -1))]),
            lo=np.append(self.lo, lo),
            hi=np.append(self.hi, hi),
        )

    def scaled(self, factor):
        """Return the program with objective multiplied by ``factor``."""
        return QuadProgram(
            P=factor * self.P, q=factor * self.q, Aeq=self.Aeq, beq=self.beq, Aineq=self.Aineq, lo=self.lo, hi=self.hi
        )


@dataclass(frozen=True, eq=False)
class QpSolution:
    """Minimizer and duals.

    Duals follow Pz + q + Aeqᵀ·duals_eq + Aineqᵀ·duals_ineq = 0 with duals_ineq ≤ 0 on rows
    at their lower bound and ≥ 0 on rows at their upper bound.
    """

    z: np.ndarray
    duals_eq: np.ndarray
    duals_ineq: np.ndarray
    objective: float
    status: str
    kkt_residual: float
    iterations: int = 0

    @property
    def optimal(self):
        """True when the solver reached the KKT tolerance."""
        return self.status == QpStatusChoices.STATUS_OPTIMAL


def kkt_residual(qp, solution):
    """Return the max of the stationarity, primal feasibility and complementarity norms."""
    z = np.asarray(solution.z, dtype=float)
    y_eq = np.asarray(solution.duals_eq, dtype=float)
    y_in = np.asarray(solution.duals_ineq, dtype=float)

    stationarity = qp.P @ z + qp.q + qp.Aeq.T @ y_eq + qp.Aineq.T @ y_in
    parts = [np.max(np.abs(stationarity), initial=0.0)]
    parts.append(np.max(np.abs(qp.Aeq @ z - qp.beq), initial=0.0))

    Az = qp.Aineq @ z
    parts.append(np.max(np.concatenate([qp.lo - Az, Az - qp.hi, [0.0]])))

    # a multiplier on an infinite side is itself the violation
    for bound, multiplier in ((qp.lo, np.maximum(-y_in, 0.0)), (qp.hi, np.maximum(y_in, 0.0))):
        finite = np.isfinite(bound)
        gap = np.abs(Az - np.where(finite, bound, 0.0))
        parts.append(np.max(np.where(finite, multiplier * gap, multiplier), initial=0.0))
    return float(max(parts))


class _DualActiveSet:
    """Working data of one dual active-set solve.

    One-sided constraints are stored as nᵢᵀz ≥ bᵢ. Equality rows come first and are never
    dropped; ``sides`` maps every inequality to (Aineq row, -1 for lower / +1 for upper).
    """

    def __init__(self, qp, max_iter):
        """Split the rows and factor P."""
        self.qp = qp
        self.max_iter = max_iter
        n = qp.n

        normals, rhs, sides = [], [], []
        for row in range(qp.Aineq.shape[0]):
            if np.isfinite(qp.lo[row]):
                normals.append(qp.Aineq[row])
                rhs.append(qp.lo[row])
                sides.append((row, -1))
            if np.isfinite(qp.hi[row]):
                normals.append(-qp.Aineq[row])
                rhs.append(-qp.hi[row])
                sides.append((row, 1))
        self.n_eq = qp.Aeq.shape[0]
        self.normals = np.vstack([qp.Aeq] + [np.reshape(normals, (-1, n))]) if normals else qp.Aeq.copy()
        self.rhs = np.concatenate([qp.beq, np.asarray(rhs, dtype=float)])
        self.sides = sides

        chol = linalg.cholesky(qp.P, lower=True)
        self.L_inv = linalg.solve_triangular(chol, np.eye(n), lower=True)
        self.active = []
        self.multipliers = np.zeros(0)
        self.z = -self.L_inv.T @ (self.L_inv @ qp.q)
        self.iterations = 0

    def _directions(self, normal):
        """Return (primal step H·n, dual step N*·n) for the current active set."""
        w = self.L_inv @ normal
        if not self.active:
            return self.L_inv.T @ w, np.zeros(0)
        M = self.L_inv @ self.normals[self.active].T
        Qm, Rm = linalg.qr(M, mode="economic")
        projected = Qm.T @ w
        w_perp = w - Qm @ projected
        if np.linalg.norm(w_perp) <= 1e-12 * max(np.linalg.norm(w), 1e-300):
            w_perp = np.zeros_like(w_perp)
        return self.L_inv.T @ w_perp, linalg.solve_triangular(Rm, projected)

    def _add_equalities(self):
        for index in range(self.n_eq):
            normal = self.normals[index]
            step, dual = self._directions(normal)
            curvature = normal @ step
            if curvature <= 1e-14 * max(normal @ normal, 1e-300):
                return False
            t = (self.rhs[index] - normal @ self.z) / curvature
            self.z = self.z + t * step
            self.multipliers = np.append(self.multipliers - t * dual, t)
            self.active.append(index)
        return True

    def _violated(self):
        """Return the index of the most violated inactive inequality, or None."""
        worst, worst_index = 0.0, None
        active = set(self.active)
        z_norm = np.linalg.norm(self.z)
        for index in range(self.n_eq, self.rhs.size):
            if index in active:
                continue
            normal = self.normals[index]
            slack = normal @ self.z - self.rhs[index]
            tolerance = 1e-12 * (1.0 + abs(self.rhs[index]) + np.linalg.norm(normal) * z_norm)
            if slack < -tolerance and slack < worst:
                worst, worst_index = slack, index
        return worst_index

    def _drop(self, position, multipliers):
        del self.active[position]
        return np.delete(multipliers, position)

    def run(self):
        """Return the final status."""
        if not self._add_equalities():
            return QpStatusChoices.STATUS_NUMERICAL_FAILURE

        while True:
            added = self._violated()
            if added is None:
                return QpStatusChoices.STATUS_OPTIMAL
            normal = self.normals[added]
            multipliers = np.append(self.multipliers, 0.0)

            while True:
                self.iterations += 1
                if self.iterations > self.max_iter:
                    return QpStatusChoices.STATUS_NUMERICAL_FAILURE
                step, dual = self._directions(normal)

                partial, drop_at = np.inf, None
                if dual.size:
                    threshold = 1e-14 * max(1.0, np.max(np.abs(dual)))
                    for position, index in enumerate(self.active):
                        if index < self.n_eq or dual[position] <= threshold:
                            continue
                        ratio = multipliers[position] / dual[position]
                        if ratio < partial:
                            partial, drop_at = ratio, position

                curvature = normal @ step
                full = np.inf
                if curvature > 1e-14 * max(normal @ normal, 1e-300):
                    full = -(normal @ self.z - self.rhs[added]) / curvature

                t = min(partial, full)
                if not np.isfinite(t):
                    return QpStatusChoices.STATUS_INFEASIBLE

                if np.isfinite(full):
                    self.z = self.z + t * step
                multipliers[:-1] -= t * dual
                multipliers[-1] += t

                if np.isfinite(full) and full <= partial:
                    self.active.append(added)
                    self.multipliers = multipliers
                    break
                multipliers[drop_at] = 0.0
                multipliers = self._drop(drop_at, multipliers)

    def polish(self):
        """Re-solve the KKT system of the final active set; keep the result only if it is better."""
        if not self.active:
            return self.z, self.multipliers
        n = self.qp.n
        N = self.normals[self.active].T
        kkt = np.block([[self.qp.P, -N], [N.T, np.zeros((N.shape[1], N.shape[1]))]])
        rhs = np.concatenate([-self.qp.q, self.rhs[self.active]])
        try:
            solution = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            return self.z, self.multipliers
        multipliers = solution[n:]
        ineq = np.array([index >= self.n_eq for index in self.active])
        if np.any(multipliers[ineq] < 0.0):
            return self.z, self.multipliers
        return solution[:n], multipliers

    def duals(self, multipliers):
        """Map active-set multipliers to (duals_eq, duals_ineq) in the QpSolution sign convention."""
        duals_eq = np.zeros(self.n_eq)
        duals_ineq = np.zeros(self.qp.Aineq.shape[0])
        for position, index in enumerate(self.active):
            if index < self.n_eq:
                duals_eq[index] = -multipliers[position]
            else:
                row, side = self.sides[index - self.n_eq]
                duals_ineq[row] += side * multipliers[position]
        return duals_eq, duals_ineq


def solve(qp, tol=SETTINGS["qp_tol"], max_iter=SETTINGS["qp_max_iter"]):
    """Return the unique minimizer of ``qp`` with its duals.

    The status is ``optimal`` when the KKT residual is at most tol·(1 + ‖q‖∞), ``infeasible``
    when the constraints admit no point and ``numerical-failure`` otherwise. Never raises on
    those outcomes; the caller decides.
    """
    solver = _DualActiveSet(qp, max_iter)
    status = solver.run()
    z, multipliers = solver.z, solver.multipliers

    if status == QpStatusChoices.STATUS_OPTIMAL:
        duals_eq, duals_ineq = solver.duals(multipliers)
        candidate = QpSolution(z, duals_eq, duals_ineq, qp.objective(z), status, 0.0)
        residual = kkt_residual(qp, candidate)
        polished_z, polished_mult = solver.polish()
        polished_eq, polished_ineq = solver.duals(polished_mult)
        polished = QpSolution(polished_z, polished_eq, polished_ineq, qp.objective(polished_z), status, 0.0)
        polished_residual = kkt_residual(qp, polished)
        if polished_residual < residual:
            z, duals_eq, duals_ineq, residual = polished_z, polished_eq, polished_ineq, polished_residual
        if residual > tol * (1.0 + np.max(np.abs(qp.q), initial=0.0)):
            logger.warning("ERROR QP stopped with KKT residual %.3e above tolerance", residual)
            status = QpStatusChoices.STATUS_NUMERICAL_FAILURE
    else:
        duals_eq, duals_ineq = np.zeros(qp.Aeq.shape[0]), np.zeros(qp.Aineq.shape[0])
        residual = np.inf
        logger.info("QP finished with status %s after %s iterations", status, solver.iterations)

    qp_results_counter.labels(status=status).inc()
    return QpSolution(
        z=z,
        duals_eq=duals_eq,
        duals_ineq=duals_ineq,
        objective=qp.objective(z),
        status=status,
        kkt_residual=float(residual),
        iterations=solver.iterations,
    )


def _coordinate_box(qp):
    """Return finite per-variable bounds implied by unit rows of Aineq, or None."""
    lower = np.full(qp.n, -np.inf)
    upper = np.full(qp.n, np.inf)
    for row, lo, hi in zip(qp.Aineq, qp.lo, qp.hi):
        support = np.flatnonzero(row)
        if support.size != 1:
            continue
        coordinate, scale = support[0], row[support[0]]
        bounds = sorted((lo / scale, hi / scale))
        lower[coordinate] = max(lower[coordinate], bounds[0])
        upper[coordinate] = min(upper[coordinate], bounds[1])
    if np.all(np.isfinite(lower)) and np.all(np.isfinite(upper)):
        return lower, upper
    return None


def _feasible(qp, z, tol):
    scale = 1.0 + np.max(np.abs(z), initial=0.0)
    if np.max(np.abs(qp.Aeq @ z - qp.beq), initial=0.0) > tol * scale:
        return False
    Az = qp.Aineq @ z
    return bool(np.all(Az >= qp.lo - tol * scale) and np.all(Az <= qp.hi + tol * scale))


def brute_force(qp, resolution=SETTINGS["brute_force_resolution"]):
    """Oracle minimizer for QPs with at most 4 variables.

    Every face of the feasible set (each inequality row inactive, at its lower or at its upper
    bound) gets one equality-constrained KKT solve; the best feasible candidate wins. When
    the inequality rows bound every variable, a grid of ``resolution`` points per axis of the
    equality manifold cross-checks that no sampled point beats it.

    Raises:
      MpcException("fail-unsupported"):
        When the program has more than 4 variables or more than 8 inequality rows
      MpcException("fail-infeasible"):
        When no face yields a feasible point
      MpcException("fail-numerical"):
        When the grid finds a point better than every face candidate
    """
    n = qp.n
    rows = qp.Aineq.shape[0]
    if n > 4 or rows > 8:
        raise MpcException(
            reason="fail-unsupported", message=f"brute force supports n <= 4 and <= 8 rows, got n={n}, rows={rows}"
        )

    best_z, best_objective = None, np.inf
    for pattern in itertools.product((0, -1, 1), repeat=rows):
        normals, targets = [qp.Aeq], [qp.beq]
        skip = False
        for row, side in enumerate(pattern):
            if side == 0:
                continue
            bound = qp.lo[row] if side < 0 else qp.hi[row]
            if not np.isfinite(bound):
                skip = True
                break
            normals.append(qp.Aineq[row : row + 1])
            targets.append([bound])
        if skip:
            continue
        A = np.vstack(normals)
        b = np.concatenate([np.asarray(t, dtype=float) for t in targets])
        kkt = np.block([[qp.P, A.T], [A, np.zeros((A.shape[0], A.shape[0]))]])
        rhs = np.concatenate([-qp.q, b])
        solution = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        if np.linalg.norm(kkt @ solution - rhs) > 1e-9 * (1.0 + np.linalg.norm(rhs)):
            continue
        z = solution[:n]
        if not _feasible(qp, z, 1e-9):
            continue
        objective = qp.objective(z)
        if objective < best_objective:
            best_z, best_objective = z, objective

    if best_z is None:
        raise MpcException(reason="fail-infeasible", message="no face of the feasible set yields a feasible point")

    box = _coordinate_box(qp)
    if box is not None and resolution >= 2:
        z0 = np.linalg.lstsq(qp.Aeq, qp.beq, rcond=None)[0] if qp.Aeq.shape[0] else np.zeros(n)
        basis = linalg.null_space(qp.Aeq) if qp.Aeq.shape[0] else np.eye(n)
        if basis.shape[1]:
            center = basis.T @ (0.5 * (box[0] + box[1]) - z0)
            radius = 0.5 * np.linalg.norm(box[1] - box[0])
            axes = [np.linspace(c - radius, c + radius, resolution) for c in center]
            grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(basis.shape[1], -1).T
            points = z0 + grid @ basis.T
            Az = points @ qp.Aineq.T
            feasible = np.all((Az >= qp.lo) & (Az <= qp.hi), axis=1)
            if np.any(feasible):
                candidates = points[feasible]
                values = 0.5 * np.einsum("ij,jk,ik->i", candidates, qp.P, candidates) + candidates @ qp.q
                if np.min(values) < best_objective - 1e-6 * (1.0 + abs(best_objective)):
                    raise MpcException(
                        reason="fail-numerical", message="grid sample beats every face candidate; oracle inconsistent"
                    )
    return best_z


def random_qp(rng, n=None, p=None):
    """Return a random strictly convex QP that is feasible by construction.

    The box surrounds a known point, the equality rows and one general two-sided row are
    consistent with that same point.
    """
    n = int(rng.integers(1, 5)) if n is None else n
    p = int(rng.integers(0, min(2, n) + 1)) if p is None else p
    B = rng.standard_normal((n, n))
    P = B @ B.T + 0.1 * np.eye(n)
    q = 2.0 * rng.standard_normal(n)
    anchor = rng.uniform(-1.0, 1.0, n)
    Aeq = rng.standard_normal((p, n))
    general = rng.standard_normal(n)
    Aineq = np.vstack([np.eye(n), general])
    lo = np.append(anchor - rng.uniform(0.1, 1.5, n), general @ anchor - rng.uniform(0.0, 1.0))
    hi = np.append(anchor + rng.uniform(0.1, 1.5, n), general @ anchor + rng.uniform(0.0, 1.0))
    return QuadProgram(P=P, q=q, Aeq=Aeq, beq=Aeq @ anchor, Aineq=Aineq, lo=lo, hi=hi)


@dataclass(frozen=True)
class QpVerification:
    """Solver-versus-oracle statistics."""

    instances: int
    max_gap: float
    mean_gap: float
    failures: int

    def passed(self, threshold=1e-6):
        """True when every instance solved and the worst scaled gap is within ``threshold``."""
        return self.failures == 0 and self.max_gap <= threshold


def verify_qp(instances=500, seed=0, resolution=SETTINGS["brute_force_resolution"]):
    """Compare ``solve`` against ``brute_force`` on random programs.

    The gap of one instance is |obj(solve) − obj(oracle)| / (1 + |obj(oracle)|).
    """
    rng = np.random.default_rng(seed)
    gaps, failures = [], 0
    logger.info("START: QP oracle comparison on %s instances (seed %s)", instances, seed)
    for _ in range(instances):
        qp = random_qp(rng)
        solution = solve(qp)
        if not solution.optimal:
            failures += 1
            continue
        try:
            reference = qp.objective(brute_force(qp, resolution=resolution))
        except MpcException as exc:
            logger.warning("CHECK: oracle failed on a random program: %s", exc)
            failures += 1
            continue
        gaps.append(abs(solution.objective - reference) / (1.0 + abs(reference)))
    result = QpVerification(
        instances=instances,
        max_gap=float(max(gaps, default=0.0)),
        mean_gap=float(np.mean(gaps)) if gaps else 0.0,
        failures=failures,
    )
    logger.info("FINISH: QP oracle comparison max gap %.3e, %s failures", result.max_gap, result.failures)
    return result
