"""Stability certificates for the set-point and zone controllers.

The set-point controller converges when its slack weight is S = βŜ with β > 6·C₃, where
Ŝ makes D0 an isometry from (ker D0)^⊥ onto Im D0 and C₃ depends on Z = R + DdᵀGDd, Q̄ and
the geometric constant φ of the input box. The zone controller converges when Sᵤ > H + I.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import SETTINGS
from .choices import ControllerChoices, QpStatusChoices
from .exceptions import MpcException
from .helpers import as_matrix, as_vector, is_symmetric, min_eigenvalue, symmetrize
from .opom import spectral_radius
from .qp import QuadProgram, solve as solve_qp

logger = logging.getLogger(SETTINGS["logger_name"])


@dataclass(frozen=True, eq=False)
class KernelDecomposition:
    """Orthonormal bases of (ker D0)^⊥, ker D0, Im D0 and (Im D0)^⊥."""

    rank: int
    Vperp: np.ndarray
    Vker: np.ndarray
    W1: np.ndarray
    W2: np.ndarray

    def perp(self, v):
        """Return the component of ``v`` in (ker D0)^⊥, in Vperp coordinates."""
        return self.Vperp.T @ np.asarray(v, dtype=float)

    @property
    def injective(self):
        """True when ker D0 = {0}."""
        return self.Vker.shape[1] == 0


@dataclass(frozen=True)
class ReferenceCheck:
    """Outcome of the output-reference admissibility test."""

    admissible: bool
    u_r: np.ndarray
    residual: float


@dataclass(frozen=True, eq=False)
class CertificateBundle:
    """Certificate matrices, scalars and validity flags for one controller configuration.

    Set-point bundles leave H and Su unset; zone bundles leave the slack-weight fields unset.
    """

    controller: str
    Qbar: np.ndarray
    G: np.ndarray
    lyapunov_residual: float
    Z: np.ndarray = None
    S_hat: np.ndarray = None
    beta: float = None
    S: np.ndarray = None
    C3: float = None
    phi: float = None
    phi_heuristic: bool = False
    gammaZ: float = None
    gammaQbar: float = None
    gammaZminusR: float = None
    u_r: np.ndarray = None
    reference_admissible: bool = None
    beta_ok: bool = None
    H: np.ndarray = None
    Su: np.ndarray = None
    su_ok: bool = None
    target_admissible: bool = None


def kernel_decomposition(D0, rank_tol=SETTINGS["rank_tol"]):
    """Split input and output spaces of D0 by a singular value decomposition.

    Singular values above rank_tol·σ_max count towards the rank; D0 = 0 gives rank 0.
    """
    D0 = as_matrix(D0, "D0")
    U, sigma, Vt = np.linalg.svd(D0, full_matrices=True)
    top = sigma[0] if sigma.size else 0.0
    rank = int(np.sum(sigma > rank_tol * top)) if top > 0.0 else 0
    return KernelDecomposition(
        rank=rank,
        Vperp=Vt[:rank].T,
        Vker=Vt[rank:].T,
        W1=U[:, :rank],
        W2=U[:, rank:],
    )


def terminal_weight(F, Psi, Q):
    """Return Q̄ solving Q̄ − FᵀQ̄F = FᵀΨᵀQΨF by Kronecker vectorization.

    Raises:
      MpcException("fail-unstable"):
        When the spectral radius of F is not below 1
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    nd = F.shape[0] if F.size else 0
    if nd == 0:
        return np.zeros((0, 0))
    rho = spectral_radius(F)
    if rho >= 1.0:
        raise MpcException(
            reason="fail-unstable", message=f"terminal weight needs spectral radius of F < 1, got {rho!r}"
        )
    Psi = np.asarray(Psi, dtype=float)
    Q = np.asarray(Q, dtype=float)
    rhs = F.T @ Psi.T @ Q @ Psi @ F
    system = np.eye(nd * nd) - np.kron(F.T, F.T)
    Qbar = np.linalg.solve(system, rhs.reshape(-1, order="F")).reshape((nd, nd), order="F")
    return symmetrize(Qbar)


def lyapunov_residual(F, Psi, Q, Qbar):
    """Return ‖Q̄ − FᵀQ̄F − FᵀΨᵀQΨF‖∞ (max abs entry)."""
    if Qbar.size == 0:
        return 0.0
    return float(np.max(np.abs(Qbar - F.T @ Qbar @ F - F.T @ Psi.T @ Q @ Psi @ F)))


def gram_G(F, Psi, Q, Qbar, m):
    """Return G = Σ_{j<m}(F^j)ᵀΨᵀQΨF^j + (F^{m−1})ᵀQ̄F^{m−1}; equals ΨᵀQΨ + Q̄ for any m.

    Raises:
      MpcException("fail-domain"):
        When m < 1
    """
    if m < 1:
        raise MpcException(reason="fail-domain", message=f"horizon m must be >= 1, got {m}")
    F = np.asarray(F, dtype=float)
    nd = Qbar.shape[0]
    if nd == 0:
        return np.zeros((0, 0))
    output_weight = Psi.T @ Q @ Psi
    G = output_weight.copy()
    power = np.eye(nd)
    for _ in range(1, m):
        power = F @ power
        G += power.T @ output_weight @ power
    return symmetrize(G + power.T @ Qbar @ power)


def matrix_Z(R, Dd, G):
    """Return Z = R + DdᵀGDd."""
    R = np.asarray(R, dtype=float)
    Dd = np.asarray(Dd, dtype=float).reshape(G.shape[0], R.shape[0])
    return symmetrize(R + Dd.T @ G @ Dd)


def s_hat(D0, decomp):
    """Return Ŝ = W1·L⁻ᵀL⁻¹·W1ᵀ + W2·W2ᵀ where W1ᵀD0Vperp = L·O, L lower triangular, O orthogonal.

    ‖D0v‖²_Ŝ = ‖v‖² holds for every v in (ker D0)^⊥.

    Raises:
      MpcException("fail-rank"):
        When L is numerically singular
    """
    D0 = as_matrix(D0, "D0")
    ny = D0.shape[0]
    S = decomp.W2 @ decomp.W2.T
    if decomp.rank:
        M = decomp.W1.T @ D0 @ decomp.Vperp
        _, upper = linalg.qr(M.T)
        lower = upper.T
        diagonal = np.abs(np.diag(lower))
        if np.min(diagonal) <= SETTINGS["rank_tol"] * max(np.max(diagonal), 1e-300):
            raise MpcException(reason="fail-rank", message="triangular factor of D0 on its image is singular")
        lower_inv = linalg.solve_triangular(lower, np.eye(decomp.rank), lower=True)
        S = S + decomp.W1 @ lower_inv.T @ lower_inv @ decomp.W1.T
    return symmetrize(S.reshape(ny, ny))


def project_Ur(u, u_r, decomp):
    """Return P_r u = u_r + Vker·Vkerᵀ·(u − u_r), the orthogonal projection onto u_r + ker D0."""
    u = np.asarray(u, dtype=float)
    u_r = np.asarray(u_r, dtype=float)
    return u_r + decomp.Vker @ (decomp.Vker.T @ (u - u_r))


def nearest_admissible_input(u, u_r, decomp, U):
    """Return Π_r u, the point of U ∩ (u_r + ker D0) closest to ``u``.

    Raises:
      MpcException("fail-infeasible-reference"):
        When U ∩ (u_r + ker D0) is empty
      MpcException("fail-numerical"):
        When the projection QP does not converge
    """
    u = np.asarray(u, dtype=float)
    nu = u.size
    qp = QuadProgram(
        P=2.0 * np.eye(nu),
        q=-2.0 * u,
        Aeq=decomp.Vperp.T,
        beq=decomp.Vperp.T @ np.asarray(u_r, dtype=float),
        Aineq=np.eye(nu),
        lo=U.lo,
        hi=U.hi,
    )
    solution = solve_qp(qp)
    if solution.status == QpStatusChoices.STATUS_INFEASIBLE:
        raise MpcException(
            reason="fail-infeasible-reference", message="input box does not meet the affine set u_r + ker D0"
        )
    if not solution.optimal:
        raise MpcException(reason="fail-numerical", message="projection onto U ∩ U_r did not converge")
    return solution.z


def phi_lower_bound(
    D0,
    U,
    u_r,
    decomp,
    n_samples=SETTINGS["phi_samples"],
    safety=SETTINGS["phi_safety"],
    seed=SETTINGS["phi_seed"],
):
    """Estimate φ = inf |cos θ_x| over x ∈ U ∖ (u_r + ker D0).

    θ_x is the angle between P_r x − x and Π_r x − x. φ is exactly 1 when D0 is injective;
    otherwise the minimum over uniform samples of U is multiplied by ``safety``.

    Raises:
      MpcException("fail-samples"):
        When n_samples < 1 or no sample lies off u_r + ker D0
      MpcException("fail-domain"):
        When safety is outside (0, 1]
      MpcException("fail-infeasible-reference"):
        When U ∩ (u_r + ker D0) is empty
    """
    if n_samples < 1:
        raise MpcException(reason="fail-samples", message=f"phi estimate needs at least one sample, got {n_samples}")
    if not 0.0 < safety <= 1.0:
        raise MpcException(reason="fail-domain", message=f"phi safety factor must be in (0, 1], got {safety}")
    if decomp.injective:
        return 1.0

    u_r = as_vector(u_r, "u_r", U.dim)
    nearest_admissible_input(u_r, u_r, decomp, U)

    rng = np.random.default_rng(seed)
    samples = rng.uniform(U.lo, U.hi, size=(int(n_samples), U.dim))
    smallest, used = np.inf, 0
    report_every = max(len(samples) // 10, 1)
    for index, x in enumerate(samples, start=1):
        if index % report_every == 0:
            logger.info("COLLECT: phi sampling %s/%s", index, len(samples))
        offset = x - u_r
        if np.linalg.norm(decomp.perp(offset)) <= 1e-9 * (1.0 + np.linalg.norm(offset)):
            continue
        to_plane = project_Ur(x, u_r, decomp) - x
        to_feasible = nearest_admissible_input(x, u_r, decomp, U) - x
        scale = np.linalg.norm(to_plane) * np.linalg.norm(to_feasible)
        if scale == 0.0:
            continue
        smallest = min(smallest, abs(to_plane @ to_feasible) / scale)
        used += 1

    if used == 0 or smallest <= 0.0:
        raise MpcException(reason="fail-samples", message="no usable sample for the phi estimate")
    phi = min(safety * smallest, 1.0)
    logger.debug("COLLECT: phi estimate %.6g from %s samples", phi, used)
    return phi


def gamma(M):
    """Return Γ_M = sqrt(ρ(M)) for a symmetric PSD matrix (0 when empty).

    Raises:
      MpcException("fail-domain"):
        When M is not symmetric PSD within tolerance
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    if not is_symmetric(M) or min_eigenvalue(M) < -1e-10 * (1.0 + np.max(np.abs(M))):
        raise MpcException(reason="fail-domain", message="gamma needs a symmetric positive semidefinite matrix")
    return float(np.sqrt(max(spectral_radius(M), 0.0)))


def c3(Z, Qbar, R, phi):
    """Return C₃ = 2φ⁻²·max(Γ_Z², 2·Γ_Q̄·Γ_{Z−R}).

    Raises:
      MpcException("fail-domain"):
        When phi is outside (0, 1] or Z − R is not PSD
    """
    if not 0.0 < phi <= 1.0:
        raise MpcException(reason="fail-domain", message=f"phi must be in (0, 1], got {phi}")
    Z = np.asarray(Z, dtype=float)
    gamma_z = gamma(Z)
    return 2.0 / phi**2 * max(gamma_z**2, 2.0 * gamma(Qbar) * gamma(Z - np.asarray(R, dtype=float)))


def slack_weight(S_hat, C3, margin=SETTINGS["beta_margin"]):
    """Return (β, S) with β = 6·C₃·(1 + margin) and S = β·Ŝ.

    Raises:
      MpcException("fail-domain"):
        When margin <= 0
    """
    if margin <= 0.0:
        raise MpcException(reason="fail-domain", message=f"beta margin must be > 0, got {margin}")
    beta = 6.0 * C3 * (1.0 + margin)
    return beta, beta * np.asarray(S_hat, dtype=float)


def matrix_H(D0, Dd, Psi, Qbar, Qy, Qu, R, m):
    """Return H = (m−1)D0ᵀQyD0 + (ΨDd)ᵀQy(ΨDd) + DdᵀQ̄Dd + (m−1)Qu + R."""
    if m < 1:
        raise MpcException(reason="fail-domain", message=f"horizon m must be >= 1, got {m}")
    D0 = np.asarray(D0, dtype=float)
    nu = D0.shape[1]
    Dd = np.asarray(Dd, dtype=float).reshape(-1, nu)
    Psi = np.asarray(Psi, dtype=float).reshape(D0.shape[0], Dd.shape[0])
    Qy = np.asarray(Qy, dtype=float)
    PsiDd = Psi @ Dd
    H = (m - 1) * D0.T @ Qy @ D0 + PsiDd.T @ Qy @ PsiDd + Dd.T @ Qbar @ Dd + (m - 1) * np.asarray(Qu) + np.asarray(R)
    return symmetrize(H)


def default_Su(H, c=SETTINGS["su_shift"]):
    """Return Sᵤ = H + c·I.

    Raises:
      MpcException("fail-domain"):
        When c <= 1
    """
    if c <= 1.0:
        raise MpcException(reason="fail-domain", message=f"Su shift must be > 1, got {c}")
    return H + c * np.eye(H.shape[0])


def check_Su(Su, H):
    """Return True when Sᵤ − H − I is positive definite."""
    return min_eigenvalue(np.asarray(Su) - np.asarray(H) - np.eye(np.asarray(H).shape[0])) > 0.0


def check_reference_admissible(D0, U, r, tol=SETTINGS["admissibility_tol"]):
    """Test r = D0·u_r for some u_r ∈ U by minimizing ‖D0u − r‖² over U.

    A Tikhonov term 1e-12·‖u‖² keeps the QP strictly convex for rank-deficient D0 and picks
    the smallest such u_r.
    """
    D0 = as_matrix(D0, "D0")
    r = as_vector(r, "r", D0.shape[0])
    nu = D0.shape[1]
    regularization = 1e-12 * (1.0 + np.max(np.abs(D0), initial=0.0) ** 2)
    qp = QuadProgram(
        P=2.0 * (D0.T @ D0 + regularization * np.eye(nu)),
        q=-2.0 * D0.T @ r,
        Aineq=np.eye(nu),
        lo=U.lo,
        hi=U.hi,
    )
    solution = solve_qp(qp)
    if not solution.optimal:
        raise MpcException(reason="fail-numerical", message="reference admissibility QP did not converge")
    residual = float(np.linalg.norm(D0 @ solution.z - r))
    return ReferenceCheck(
        admissible=residual <= tol * (1.0 + np.linalg.norm(r)), u_r=solution.z, residual=residual
    )


def check_target_admissible(D0, U, Y, u_des, tol=SETTINGS["box_tol"]):
    """Return True when u_des ∈ U and D0·u_des ∈ Y."""
    u_des = np.asarray(u_des, dtype=float)
    return U.contains(u_des, tol) and Y.contains(np.asarray(D0, dtype=float) @ u_des, tol)


def certify_setpoint(
    model,
    Q,
    R,
    m,
    U,
    r,
    phi=None,
    beta=None,
    margin=SETTINGS["beta_margin"],
    n_samples=SETTINGS["phi_samples"],
    safety=SETTINGS["phi_safety"],
    seed=SETTINGS["phi_seed"],
    rank_tol=SETTINGS["rank_tol"],
):
    """Compute every set-point certificate for one reference.

    ``phi`` and ``beta`` override the sampled φ and the margin-derived β.
    """
    logger.info("START: set-point certificates (ny=%s, nu=%s, nd=%s, m=%s)", model.ny, model.nu, model.nd, m)
    Q = as_matrix(Q, "Q", (model.ny, model.ny))
    R = as_matrix(R, "R", (model.nu, model.nu))
    Qbar = terminal_weight(model.F, model.Psi, Q)
    G = gram_G(model.F, model.Psi, Q, Qbar, m)
    Z = matrix_Z(R, model.Dd, G)
    decomp = kernel_decomposition(model.D0, rank_tol)
    S_hat = s_hat(model.D0, decomp)

    reference = check_reference_admissible(model.D0, U, r)
    if not reference.admissible:
        logger.warning("CHECK: reference %s is not reachable inside U (residual %.3e)", r, reference.residual)

    heuristic = False
    if phi is None:
        phi = phi_lower_bound(model.D0, U, reference.u_r, decomp, n_samples=n_samples, safety=safety, seed=seed)
        heuristic = not decomp.injective

    C3 = c3(Z, Qbar, R, phi)
    if beta is None:
        beta, S = slack_weight(S_hat, C3, margin)
    else:
        beta, S = float(beta), float(beta) * S_hat

    bundle = CertificateBundle(
        controller=ControllerChoices.CONTROLLER_SETPOINT,
        Qbar=Qbar,
        G=G,
        lyapunov_residual=lyapunov_residual(model.F, model.Psi, Q, Qbar),
        Z=Z,
        S_hat=S_hat,
        beta=float(beta),
        S=S,
        C3=float(C3),
        phi=float(phi),
        phi_heuristic=heuristic,
        gammaZ=gamma(Z),
        gammaQbar=gamma(Qbar),
        gammaZminusR=gamma(Z - R),
        u_r=reference.u_r,
        reference_admissible=reference.admissible,
        beta_ok=bool(beta > 6.0 * C3),
    )
    logger.info("FINISH: set-point certificates beta=%.6g C3=%.6g phi=%.6g", bundle.beta, bundle.C3, bundle.phi)
    return bundle


def certify_zone(model, Qy, Qu, R, m, U, Y, u_des, su_shift=SETTINGS["su_shift"], Su=None):
    """Compute the zone-controller certificates; ``Su`` overrides H + su_shift·I."""
    logger.info("START: zone certificates (ny=%s, nu=%s, nd=%s, m=%s)", model.ny, model.nu, model.nd, m)
    Qy = as_matrix(Qy, "Qy", (model.ny, model.ny))
    Qbar = terminal_weight(model.F, model.Psi, Qy)
    G = gram_G(model.F, model.Psi, Qy, Qbar, m)
    H = matrix_H(model.D0, model.Dd, model.Psi, Qbar, Qy, Qu, R, m)
    Su = default_Su(H, su_shift) if Su is None else as_matrix(Su, "Su", (model.nu, model.nu))
    target = check_target_admissible(model.D0, U, Y, u_des)
    if not target:
        logger.warning("CHECK: input target %s violates U or D0·u_des ∉ Y", u_des)

    bundle = CertificateBundle(
        controller=ControllerChoices.CONTROLLER_ZONE,
        Qbar=Qbar,
        G=G,
        lyapunov_residual=lyapunov_residual(model.F, model.Psi, Qy, Qbar),
        H=H,
        Su=Su,
        su_ok=check_Su(Su, H),
        target_admissible=target,
    )
    logger.info("FINISH: zone certificates su_ok=%s target_admissible=%s", bundle.su_ok, target)
    return bundle


def check_certificates(bundle):
    """Return the names of the certificate conditions ``bundle`` fails (empty when all hold)."""
    failed = []
    if bundle.lyapunov_residual > 1e-10 * (1.0 + np.max(np.abs(bundle.Qbar), initial=0.0)):
        failed.append("lyapunov")
    if min_eigenvalue(bundle.Qbar) < -1e-10:
        failed.append("qbar-psd")

    if bundle.controller == ControllerChoices.CONTROLLER_SETPOINT:
        if not bundle.reference_admissible:
            failed.append("reference-admissible")
        if not 0.0 < bundle.phi <= 1.0:
            failed.append("phi")
        if not bundle.beta > 6.0 * bundle.C3:
            failed.append("beta")
        if not np.allclose(bundle.S, bundle.beta * bundle.S_hat, rtol=1e-12, atol=0.0):
            failed.append("slack-weight")
    else:
        if not check_Su(bundle.Su, bundle.H):
            failed.append("su")
        if not bundle.target_admissible:
            failed.append("target-admissible")
    return failed
