"""Models and controller configurations shared by the unit tests."""

import numpy as np

from opom_mpc.certificates import certify_setpoint, certify_zone
from opom_mpc.controllers import SetpointSpec, ZoneSpec
from opom_mpc.helpers import Rectangle
from opom_mpc.opom import Mode, OpomModel, build_from_modes


def static_scalar():
    """Return the purely static model y = xs, D0 = 1."""
    return build_from_modes([[1.0]], [])


def first_order_scalar():
    """Return D0 = 1 with one real mode at 0.5."""
    return build_from_modes([[1.0]], [Mode(pole=0.5, output_index=0, input_index=0, residue=1.0)])


def complex_pair_2x2():
    """Return a 2×2 model whose first channel carries a realified pole pair 0.3 ± 0.4i."""
    return build_from_modes(
        [[1.0, 0.2], [0.1, 0.8]],
        [
            Mode(pole=0.3 + 0.4j, output_index=0, input_index=0, residue=0.5 + 0.2j),
            Mode(pole=0.6, output_index=1, input_index=1, residue=-0.4),
        ],
    )


def tall_rank_one():
    """Return ny = 2, nu = 1 with D0 = [[1], [0.5]]."""
    return build_from_modes(
        [[1.0], [0.5]],
        [Mode(pole=0.4, output_index=0, input_index=0), Mode(pole=0.7, output_index=1, input_index=0, residue=0.3)],
    )


def wide_rank_one():
    """Return ny = 2, nu = 3 with rank(D0) = 1."""
    return build_from_modes(
        [[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]],
        [Mode(pole=0.5, output_index=0, input_index=0), Mode(pole=0.2, output_index=1, input_index=2, residue=0.5)],
    )


def random_stable_model(rng, ny, nu, nd, rho=0.8):
    """Return a random model whose F has spectral radius ``rho``."""
    F = rng.standard_normal((nd, nd))
    if nd:
        F *= rho / np.max(np.abs(np.linalg.eigvals(F)))
    return OpomModel(
        F=F,
        D0=rng.standard_normal((ny, nu)),
        Dd=rng.standard_normal((nd, nu)),
        Psi=rng.standard_normal((ny, nd)),
    )


def setpoint_spec(model, r, m=3, S=None, U=5.0, dU=2.0, n_samples=500):
    """Return a set-point spec with unit weights; S defaults to the certified β·Ŝ."""
    Q, R = np.eye(model.ny), np.eye(model.nu)
    box, moves = Rectangle.symmetric(U, model.nu), Rectangle.symmetric(dU, model.nu)
    bundle, phi = None, None
    if S is None:
        bundle = certify_setpoint(model, Q, R, m, box, r, n_samples=n_samples)
        S, phi = bundle.S, bundle.phi
    return SetpointSpec(model=model, m=m, Q=Q, R=R, S=S, U=box, dU=moves, r=r, phi=phi), bundle


def zone_spec(model, u_des, Y, m=2, Su=None, U=5.0, dU=2.0):
    """Return a zone spec with unit weights; Su defaults to H + 2I."""
    Qy, Qu, R, Sy = np.eye(model.ny), np.eye(model.nu), np.eye(model.nu), np.eye(model.ny)
    box, moves = Rectangle.symmetric(U, model.nu), Rectangle.symmetric(dU, model.nu)
    bundle = None
    if Su is None:
        bundle = certify_zone(model, Qy, Qu, R, m, box, Y, u_des)
        Su = bundle.Su
    spec = ZoneSpec(model=model, m=m, Qy=Qy, Qu=Qu, R=R, Sy=Sy, Su=Su, U=box, dU=moves, Y=Y, u_des=u_des)
    return spec, bundle
