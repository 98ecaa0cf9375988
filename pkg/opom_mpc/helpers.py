"""Array coercion and matrix property helpers shared by every module.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import MpcException


def as_matrix(value, name, shape=None):
    """Return ``value`` as a finite 2-D float array.

    Args:
        value (array_like): Nested sequence or array
        name (str): Name used in error messages
        shape (tuple): Expected shape; ``None`` entries are not checked

    Raises:
      MpcException("fail-dimension"):
        When the value is not 2-D or does not have the expected shape
      MpcException("fail-domain"):
        When an entry is not finite
    """
    try:
        matrix = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise MpcException(reason="fail-dimension", message=f"{name} is not a numeric matrix")
    if matrix.ndim != 2:
        raise MpcException(reason="fail-dimension", message=f"{name} must be 2-D, got {matrix.ndim}-D")
    if shape is not None:
        for axis, expected in enumerate(shape):
            if expected is not None and matrix.shape[axis] != expected:
                raise MpcException(
                    reason="fail-dimension", message=f"{name} has shape {matrix.shape}, expected {tuple(shape)}"
                )
    if not np.all(np.isfinite(matrix)):
        raise MpcException(reason="fail-domain", message=f"{name} has non-finite entries")
    return matrix


def as_vector(value, name, size=None):
    """Return ``value`` as a finite 1-D float array of the given size."""
    try:
        vector = np.array(value, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise MpcException(reason="fail-dimension", message=f"{name} is not a numeric vector")
    if size is not None and vector.size != size:
        raise MpcException(reason="fail-dimension", message=f"{name} has length {vector.size}, expected {size}")
    if not np.all(np.isfinite(vector)):
        raise MpcException(reason="fail-domain", message=f"{name} has non-finite entries")
    return vector


def symmetrize(matrix):
    """Return (M + Mᵀ)/2."""
    return 0.5 * (matrix + matrix.T)


def min_eigenvalue(matrix):
    """Smallest eigenvalue of the symmetric part of a square matrix (``inf`` when empty)."""
    if matrix.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(symmetrize(matrix))[0])


def is_symmetric(matrix, tol=1e-10):
    """Return True when ``matrix`` is square and symmetric within ``tol`` relative to its size."""
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        return False
    return bool(np.max(np.abs(matrix - matrix.T), initial=0.0) <= tol * (1.0 + np.max(np.abs(matrix), initial=0.0)))


def check_positive_definite(matrix, name):
    """Raise unless ``matrix`` is symmetric positive definite.

    Raises:
      MpcException("fail-domain"):
        When the matrix is not symmetric or has a nonpositive eigenvalue
    """
    if not is_symmetric(matrix):
        raise MpcException(reason="fail-domain", message=f"{name} must be symmetric")
    if min_eigenvalue(matrix) <= 0.0:
        raise MpcException(reason="fail-domain", message=f"{name} must be positive definite")
    return matrix


def weighted_sq(vector, weight):
    """Return ‖v‖²_W = vᵀWv."""
    vector = np.asarray(vector, dtype=float)
    if vector.size == 0:
        return 0.0
    return float(vector @ weight @ vector)


def matrix_powers(F, count):
    """Return [F⁰, F¹, ..., F^count]."""
    powers = [np.eye(F.shape[0])]
    for _ in range(count):
        powers.append(F @ powers[-1])
    return powers


@dataclass(frozen=True, eq=False)
class Rectangle:
    """Coordinatewise box lo ≤ x ≤ hi that contains the origin."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        """Coerce bounds and check that the box contains the origin.

        Raises:
          MpcException("fail-dimension"):
            When lo and hi differ in length
          MpcException("fail-domain"):
            When some lo > 0 or hi < 0
        """
        lo = as_vector(self.lo, "lo")
        hi = as_vector(self.hi, "hi")
        if lo.size != hi.size:
            raise MpcException(
                reason="fail-dimension", message=f"rectangle bounds differ in length: {lo.size}, {hi.size}"
            )
        if np.any(lo > 0.0) or np.any(hi < 0.0):
            raise MpcException(reason="fail-domain", message=f"rectangle [{lo}, {hi}] must contain origin")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def symmetric(cls, half_width, dim):
        """Return [-w, w]^dim."""
        return cls(lo=-np.full(dim, float(half_width)), hi=np.full(dim, float(half_width)))

    @property
    def dim(self):
        """Number of coordinates."""
        return self.lo.size

    def contains(self, x, tol=0.0):
        """Return True when lo - tol ≤ x ≤ hi + tol coordinatewise."""
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))
