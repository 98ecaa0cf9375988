"""OPOM state-space models: construction, plant stepping and m-step prediction.

The static part ``xs`` integrates D0·Δu and equals the steady-state output prediction,
the dynamic part ``xd`` is driven by F and Dd and decays when the spectral radius of F is
below one. Complex poles are realified into 2×2 rotation-scaling blocks so every matrix in
the package is real.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import SETTINGS
from .exceptions import MpcException
from .helpers import as_matrix, as_vector

logger = logging.getLogger(SETTINGS["logger_name"])


def spectral_radius(M):
    """Return max |eigenvalue| of a square matrix (0 for an empty matrix).

    Raises:
      MpcException("fail-dimension"):
        When M is not square
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise MpcException(reason="fail-dimension", message=f"spectral radius needs a square matrix, got {M.shape}")
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


@dataclass(frozen=True, eq=False)
class OpomModel:
    """Real OPOM model x_s' = x_s + D0Δu, x_d' = F x_d + Dd Δu, y = x_s + Ψ x_d."""

    F: np.ndarray
    D0: np.ndarray
    Dd: np.ndarray
    Psi: np.ndarray

    def __post_init__(self):
        """Coerce to float arrays, check dimensions and open-loop stability."""
        D0 = as_matrix(self.D0, "D0")
        ny, nu = D0.shape
        F = np.asarray(self.F, dtype=float)
        nd = F.shape[0] if F.size else 0
        F = as_matrix(F.reshape(nd, nd) if nd == 0 else F, "F", (nd, nd))
        Dd = as_matrix(np.asarray(self.Dd, dtype=float).reshape(nd, nu) if nd == 0 else self.Dd, "Dd", (nd, nu))
        Psi = as_matrix(np.asarray(self.Psi, dtype=float).reshape(ny, nd) if nd == 0 else self.Psi, "Psi", (ny, nd))
        for name, value in (("F", F), ("D0", D0), ("Dd", Dd), ("Psi", Psi)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

        rho = spectral_radius(F)
        if rho >= 1.0:
            raise MpcException(
                reason="fail-unstable",
                message=(
                    "Assumption 1 (open-loop stability assumption) violated: "
                    f"spectral radius of F is {rho!r} (must be < 1)"
                ),
            )

    @property
    def ny(self):
        """Output dimension."""
        return self.D0.shape[0]

    @property
    def nu(self):
        """Input dimension."""
        return self.D0.shape[1]

    @property
    def nd(self):
        """Dynamic-state dimension."""
        return self.F.shape[0]

    def origin(self):
        """Return the steady state at the origin."""
        return PlantState(np.zeros(self.ny), np.zeros(self.nd), np.zeros(self.nu))


@dataclass(frozen=True, eq=False)
class PlantState:
    """Value type (x_s, x_d, u)."""

    xs: np.ndarray
    xd: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        """Coerce to finite float vectors."""
        for name in ("xs", "xd", "u"):
            object.__setattr__(self, name, as_vector(getattr(self, name), name))

    def check(self, model):
        """Raise unless the state dimensions match ``model``."""
        if self.xs.size != model.ny or self.xd.size != model.nd or self.u.size != model.nu:
            raise MpcException(
                reason="fail-dimension",
                message=f"state sizes ({self.xs.size}, {self.xd.size}, {self.u.size}) do not match model "
                f"({model.ny}, {model.nd}, {model.nu})",
            )
        return self


@dataclass(frozen=True)
class Mode:
    """One transfer mode: pole, residue and the (output, input) channel it couples."""

    pole: complex
    output_index: int
    input_index: int
    residue: complex = 1.0


def build_from_modes(D0, modes):
    """Assemble F, Dd and Ψ from a static gain and a list of modes.

    A real pole ``p`` adds one state with F block ``p``, Dd entry ``residue`` and Ψ entry 1.
    A complex pole ``a+bi`` (supplied once per conjugate pair) adds two states with F block
    ``[[a, b], [-b, a]]``, Dd column ``[Re c, -Im c]`` and Ψ row ``[2, 0]``, so the pair
    contributes 2·Re(z) with z' = p z + c Δu.

    Raises:
      MpcException("fail-unstable"):
        When a mode has |pole| >= 1
      MpcException("fail-dimension"):
        When an output or input index is out of range
    """
    D0 = as_matrix(D0, "D0")
    ny, nu = D0.shape
    blocks = []
    for position, mode in enumerate(modes):
        pole = complex(mode.pole)
        residue = complex(mode.residue)
        if abs(pole) >= 1.0:
            raise MpcException(
                reason="fail-unstable",
                message=(
                    "Assumption 1 (open-loop stability assumption) violated: "
                    f"mode {position} has |pole| = {abs(pole)!r} >= 1"
                ),
            )
        if not (0 <= mode.output_index < ny and 0 <= mode.input_index < nu):
            raise MpcException(
                reason="fail-dimension",
                message=f"mode {position} channel ({mode.output_index}, {mode.input_index}) outside ({ny}, {nu})",
            )
        if pole.imag == 0.0:
            blocks.append((np.array([[pole.real]]), np.array([residue.real]), np.array([1.0]), mode))
        else:
            a, b = pole.real, pole.imag
            blocks.append(
                (np.array([[a, b], [-b, a]]), np.array([residue.real, -residue.imag]), np.array([2.0, 0.0]), mode)
            )

    nd = sum(block[0].shape[0] for block in blocks)
    F = np.zeros((nd, nd))
    Dd = np.zeros((nd, nu))
    Psi = np.zeros((ny, nd))
    offset = 0
    for f_block, dd_column, psi_row, mode in blocks:
        size = f_block.shape[0]
        F[offset : offset + size, offset : offset + size] = f_block
        Dd[offset : offset + size, mode.input_index] = dd_column
        Psi[mode.output_index, offset : offset + size] = psi_row
        offset += size

    logger.debug("COLLECT: built OPOM model ny=%s nu=%s nd=%s from %s modes", ny, nu, nd, len(blocks))
    return OpomModel(F=F, D0=D0, Dd=Dd, Psi=Psi)


def plant_step(model, state, du):
    """Apply one input increment: xs' = xs + D0Δu, xd' = F xd + DdΔu, u' = u + Δu."""
    state.check(model)
    du = as_vector(du, "du", model.nu)
    return PlantState(
        xs=state.xs + model.D0 @ du,
        xd=model.F @ state.xd + model.Dd @ du,
        u=state.u + du,
    )


def output(model, state):
    """Return y = xs + Ψ xd."""
    state.check(model)
    return state.xs + model.Psi @ state.xd


@dataclass(frozen=True, eq=False)
class Prediction:
    """Predicted trajectory; row j includes moves 0..j."""

    xs: np.ndarray
    xd: np.ndarray
    y: np.ndarray
    u: np.ndarray

    @property
    def horizon(self):
        """Number of predicted steps."""
        return self.xs.shape[0]


def predict(model, state, du_seq):
    """Predict xs(j), xd(j), y(j) and u(j) for j = 0..m-1 under the move sequence ``du_seq``.

    Raises:
      MpcException("fail-dimension"):
        When the sequence is empty or its rows are not nu long
    """
    state.check(model)
    du_seq = np.atleast_2d(np.asarray(du_seq, dtype=float))
    if du_seq.size == 0 or du_seq.shape[1] != model.nu:
        raise MpcException(
            reason="fail-dimension", message=f"move sequence must be a non-empty m x {model.nu} array"
        )
    m = du_seq.shape[0]
    xs = np.empty((m, model.ny))
    xd = np.empty((m, model.nd))
    u = np.empty((m, model.nu))
    xs_j, xd_j, u_j = state.xs, state.xd, state.u
    for j in range(m):
        xs_j = xs_j + model.D0 @ du_seq[j]
        xd_j = model.F @ xd_j + model.Dd @ du_seq[j]
        u_j = u_j + du_seq[j]
        xs[j], xd[j], u[j] = xs_j, xd_j, u_j
    y = xs + xd @ model.Psi.T
    return Prediction(xs=xs, xd=xd, y=y, u=u)
