"""
Linear Algebra Module for Unitary Learner
Dense complex matrix helpers, Gram-Schmidt orthonormalization and
unitarity diagnostics

Matrices and state vectors are plain numpy complex128 arrays:
a ComplexMatrix is 2-D, a StateVector is 1-D. All storage is row-major.
"""

import logging

import numpy as np

from . import UnitaryLearnerError

logger = logging.getLogger(__name__)

# Residual norm below this fraction of the original column norm counts as
# linearly dependent and triggers the rescue path
DEPENDENCE_THRESHOLD = 1e-12

# Rescue perturbation is RESCUE_SCALE * max(1, |column|)
RESCUE_SCALE = 1e-8

NORMALIZED_TOL = 1e-10


class ShapeError(UnitaryLearnerError, ValueError):
    """Operand shapes are incompatible with the requested operation"""


class NonFiniteError(UnitaryLearnerError, ValueError):
    """A matrix or vector contains NaN or Inf entries"""


def as_complex_matrix(obj, name="matrix"):
    """
    Coerce input to a finite 2-D complex128 array

    Args:
        obj: Array-like input
        name (str): Name used in error messages

    Returns:
        np.ndarray: complex128 matrix
    """
    m = np.asarray(obj, dtype=np.complex128)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return m


def as_state(obj, normalized=False, name="state"):
    """
    Coerce input to a finite 1-D complex128 state vector

    Args:
        obj: Array-like input
        normalized (bool): Require unit norm within NORMALIZED_TOL
        name (str): Name used in error messages

    Returns:
        np.ndarray: complex128 vector
    """
    v = np.asarray(obj, dtype=np.complex128)
    if v.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    if normalized and abs(np.linalg.norm(v) - 1.0) > NORMALIZED_TOL:
        raise ShapeError(f"{name} is not normalized (norm={np.linalg.norm(v):.3e})")
    return v


def _require_square(m, name="matrix"):
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {m.shape}")


def matmul(a, b):
    """
    Complex matrix product a @ b

    `b` may be a matrix or a state vector (Eq. W x = O).

    Raises:
        ShapeError: if a.cols != b.rows
    """
    a = as_complex_matrix(a, "a")
    b = np.asarray(b, dtype=np.complex128)
    if b.ndim not in (1, 2):
        raise ShapeError(f"b must be 1-D or 2-D, got shape {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def conj_transpose(m):
    """Return the conjugate transpose m^dagger"""
    m = as_complex_matrix(m)
    return np.ascontiguousarray(m.conj().T)


def unitarity_error(m):
    """
    Frobenius norm of (m^dagger m - I)

    Args:
        m: Square complex matrix

    Returns:
        float: 0 for an exactly unitary matrix
    """
    m = as_complex_matrix(m)
    _require_square(m)
    gram = m.conj().T @ m
    return float(np.linalg.norm(gram - np.eye(m.shape[0]), ord="fro"))


def is_unitary(m, tol=1e-10):
    return unitarity_error(m) <= tol


def rescue_dependent_column(v, epsilon, start=0):
    """
    Perturb a linearly dependent column so it becomes independent

    Adds `epsilon` to the first nonzero component at index >= `start`;
    if there is none, to component `start` itself (component 0 for the
    zero vector). The caller re-runs orthogonalization on the result.

    Args:
        v: Column vector whose orthogonal residual vanished
        epsilon (float): Perturbation size
        start (int): First component index eligible for the perturbation

    Returns:
        np.ndarray: Perturbed copy of v
    """
    v = as_state(v, name="column")
    if not 0 <= start < v.shape[0]:
        raise ShapeError(f"start index {start} outside vector of length {v.shape[0]}")
    out = v.copy()
    nonzero = np.flatnonzero(out[start:] != 0)
    index = start + int(nonzero[0]) if nonzero.size else start
    out[index] += epsilon
    return out


def _residual(v, basis):
    # Modified Gram-Schmidt pass, one finalized column at a time,
    # followed by a single re-orthogonalization sweep
    v = v.copy()
    k = basis.shape[1]
    if k == 0:
        return v
    for j in range(k):
        q = basis[:, j]
        v -= np.vdot(q, v) * q
    v -= basis @ (basis.conj().T @ v)
    return v


def _orthonormal_column(column, basis):
    col_norm = np.linalg.norm(column)
    residual = _residual(column, basis)
    r_norm = np.linalg.norm(residual)
    if col_norm > 0 and r_norm >= DEPENDENCE_THRESHOLD * col_norm:
        return residual / r_norm

    epsilon = RESCUE_SCALE * max(1.0, col_norm)
    for start in range(column.shape[0]):
        candidate = rescue_dependent_column(column, epsilon, start=start)
        residual = _residual(candidate, basis)
        r_norm = np.linalg.norm(residual)
        if r_norm > 0 and r_norm >= DEPENDENCE_THRESHOLD * np.linalg.norm(candidate):
            logger.debug("Rescued dependent column (epsilon=%.1e, component>=%d)", epsilon, start)
            return residual / r_norm
    # basis has fewer columns than the dimension, so some component always works
    raise ShapeError("could not complete orthonormal basis")


def gram_schmidt(m):
    """
    Orthonormalize the columns of a square matrix

    Uses Modified Gram-Schmidt with one re-orthogonalization sweep.
    Columns whose residual vanishes (linear dependence, zero columns) are
    perturbed by `rescue_dependent_column` and orthogonalized again, so the
    result is always unitary. Normalization divides by the real norm only,
    no phase is fixed.

    Args:
        m: Square complex matrix

    Returns:
        np.ndarray: Unitary matrix whose first k columns span the first k
        input columns whenever those are independent
    """
    m = as_complex_matrix(m)
    _require_square(m)
    dim = m.shape[0]
    q = np.zeros((dim, dim), dtype=np.complex128)
    for k in range(dim):
        q[:, k] = _orthonormal_column(m[:, k], q[:, :k])
    return q


def phase_aligned_distance(a, b):
    """
    Frobenius distance between a and b after optimal global phase alignment

    Returns:
        float: min over phi of |a - e^{i phi} b|_F
    """
    a = as_complex_matrix(a, "a")
    b = as_complex_matrix(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    overlap = np.trace(b.conj().T @ a)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.linalg.norm(a - phase * b, ord="fro"))


def random_unitary(dim, rng):
    """Gram-Schmidt of a complex standard normal dim x dim matrix"""
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return gram_schmidt(z)
