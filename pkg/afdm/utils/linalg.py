"""Small linear algebra helpers shared by the channel, BEM and estimator modules."""

import logging

import numpy as np

from afdm.errors import DimensionError, NumericalDegeneracyError

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12


def circshift(x: np.ndarray, shift: int, axis: int = 0) -> np.ndarray:
    """
    Cyclically shift toward increasing index, the convention of the delay matrix Π^l.

    ``circshift(x, l)[n] == x[(n - l) mod N]``. Every delay-shift in the package goes through here.

    :param x: Vector or matrix to shift
    :type x: np.ndarray
    :param shift: Number of positions (delay in samples)
    :type shift: int
    :param axis: Axis along which to shift (rows for matrices)
    :type axis: int
    :return: Shifted copy
    :rtype: np.ndarray
    """
    return np.roll(x, shift, axis=axis)


def shift_matrix(x: np.ndarray, num_shifts: int) -> np.ndarray:
    """
    Stack the first ``num_shifts`` cyclic shifts of ``x`` as columns.

    :param x: Length-N vector
    :type x: np.ndarray
    :param num_shifts: Number of columns (L + 1)
    :type num_shifts: int
    :return: N x num_shifts matrix whose column l is circshift(x, l)
    :rtype: np.ndarray
    """
    return np.stack([circshift(x, l) for l in range(num_shifts)], axis=1)


def hermitian_part(m: np.ndarray) -> np.ndarray:
    """Return (M + Mᴴ)/2, removing round-off asymmetry."""
    return 0.5 * (m + m.conj().T)


def is_hermitian(m: np.ndarray, atol: float = 1e-9) -> bool:
    """
    Check Hermitian symmetry relative to the largest entry.

    :param m: Square matrix
    :type m: np.ndarray
    :param atol: Relative tolerance
    :type atol: float
    :return: True if ‖M − Mᴴ‖_max ≤ atol·max(1, ‖M‖_max)
    :rtype: bool
    """
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= atol * scale)


def is_psd(m: np.ndarray, rtol: float = 1e-9) -> bool:
    """
    Check positive semi-definiteness with an eigenvalue tolerance relative to the spectrum.

    :param m: Hermitian matrix
    :type m: np.ndarray
    :param rtol: Smallest eigenvalue may be as low as −rtol·max eigenvalue
    :type rtol: float
    :return: True if the matrix is PSD within tolerance
    :rtype: bool
    """
    eigenvalues = np.linalg.eigvalsh(hermitian_part(m))
    if eigenvalues.size == 0:
        return True
    top = max(float(eigenvalues[-1]), 0.0)
    return bool(eigenvalues[0] >= -rtol * max(top, 1e-300))


def checked_condition(m: np.ndarray, what: str, limit: float = MAX_CONDITION) -> float:
    """
    Measure the 2-norm condition number and refuse matrices beyond ``limit``.

    :param m: Square matrix about to be inverted
    :type m: np.ndarray
    :param what: Name used in the error message
    :type what: str
    :param limit: Largest acceptable condition number
    :type limit: float
    :return: The condition number
    :rtype: float
    :raises NumericalDegeneracyError: If the condition number exceeds ``limit``
    """
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{what} must be square, got shape {m.shape}")
    cond = float(np.linalg.cond(m))
    if not np.isfinite(cond) or cond > limit:
        raise NumericalDegeneracyError(what, cond)
    if cond > 1e8:
        logger.warning("%s is poorly conditioned (%.2e)", what, cond)
    return cond


def require_vector(x: np.ndarray, length: int, what: str) -> np.ndarray:
    """
    Validate a 1-D vector length and return it as a complex array.

    :raises DimensionError: On a length or rank mismatch
    """
    arr = np.asarray(x)
    if arr.ndim != 1 or arr.shape[0] != length:
        raise DimensionError(f"{what} must be a vector of length {length}, got shape {arr.shape}")
    return arr.astype(complex, copy=False)
