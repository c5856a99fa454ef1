"""Discrete affine Fourier transform (DAFT) and the chirp matrices that define AFDM."""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import numpy as np
from scipy import fft

from afdm.errors import ParameterError
from afdm.utils.linalg import require_vector

DEFAULT_C2 = 1e-5


def chirp_diag(c: float, n: int) -> np.ndarray:
    """
    Build Λ_c = diag(exp(−j2π c k²)), k = 0..n−1.

    :param c: Chirp rate
    :type c: float
    :param n: Size of the matrix
    :type n: int
    :return: n x n diagonal unit-modulus matrix
    :rtype: np.ndarray
    """
    if n < 1:
        raise ParameterError(f"chirp size must be positive, got {n}")
    return np.diag(chirp_vector(c, n))


def chirp_vector(c: float, n: int) -> np.ndarray:
    """Diagonal of :func:`chirp_diag` as a vector."""
    k = np.arange(n, dtype=float)
    # reduce c·k² mod 1 before the exponential to keep the phase exact for large k
    phase = np.mod(float(c) * k * k, 1.0)
    return np.exp(-2j * np.pi * phase)


def dft_matrix(n: int) -> np.ndarray:
    """
    Unitary n-point DFT matrix, F[k, m] = exp(−j2π km/n)/√n.

    :param n: Transform size
    :type n: int
    :return: n x n unitary matrix
    :rtype: np.ndarray
    """
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.mod(np.outer(k, k), n) / n) / np.sqrt(n)


@dataclass(frozen=True)
class AfdmGrid:
    """
    Modulation geometry of one AFDM symbol.

    Instances are immutable and safe to share between trial workers. The DAFT matrix
    ``A = Λ_c2 F Λ_c1`` is materialized at construction.
    """

    n_subcarriers: int
    c1: Fraction
    c2: float = DEFAULT_C2
    k_nu: int = 0
    alpha_max: int = 0
    daft_matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_subcarriers < 1:
            raise ParameterError(f"n_subcarriers must be positive, got {self.n_subcarriers}")
        if self.k_nu < 0 or self.alpha_max < 0:
            raise ParameterError("k_nu and alpha_max must be non-negative")
        object.__setattr__(self, "c1", Fraction(self.c1).limit_denominator(10**12))
        object.__setattr__(self, "daft_matrix", build_daft_matrix(self))

    @classmethod
    def recommended(cls, n_subcarriers: int, alpha_max: int, k_nu: int, c2: float = DEFAULT_C2) -> "AfdmGrid":
        """
        Build a grid with c1 = (2(α_max + k_ν) + 1)/(2N).

        :param n_subcarriers: Number of chirp subcarriers N
        :type n_subcarriers: int
        :param alpha_max: Maximum integer Doppler, normalized to the subcarrier spacing
        :type alpha_max: int
        :param k_nu: Fractional-Doppler guard
        :type k_nu: int
        :param c2: Second chirp rate, sufficiently less than 1/(2N)
        :type c2: float
        :return: The grid
        :rtype: AfdmGrid
        """
        if alpha_max < 0 or k_nu < 0:
            raise ParameterError("alpha_max and k_nu must be non-negative")
        c1 = Fraction(2 * (alpha_max + k_nu) + 1, 2 * n_subcarriers)
        return cls(n_subcarriers=n_subcarriers, c1=c1, c2=c2, k_nu=k_nu, alpha_max=alpha_max)

    @property
    def n(self) -> int:
        return self.n_subcarriers

    @property
    def delay_doppler_step(self) -> int:
        """
        The integer 2·N·c1: DAFT-domain displacement per sample of delay.

        :raises ParameterError: If 2·N·c1 is not an integer
        """
        step = 2 * self.n_subcarriers * self.c1
        if step.denominator != 1:
            raise ParameterError(f"2*N*c1 = {step} is not an integer")
        return int(step)

    def loc(self, alpha: Union[int, float], delay: int) -> float:
        """DAFT-domain location (α + 2Nc1·l) mod N of a path's main lobe."""
        return float(np.mod(alpha + self.delay_doppler_step * delay, self.n_subcarriers))


def build_daft_matrix(grid: AfdmGrid) -> np.ndarray:
    """
    Return A = Λ_c2 F Λ_c1 with the unitary DFT F.

    :param grid: Grid parameters (only N, c1, c2 are read)
    :type grid: AfdmGrid
    :return: N x N unitary matrix
    :rtype: np.ndarray
    """
    n = grid.n_subcarriers
    lam1 = chirp_vector(float(grid.c1), n)
    lam2 = chirp_vector(grid.c2, n)
    return lam2[:, None] * dft_matrix(n) * lam1[None, :]


def idaft(grid: AfdmGrid, x: np.ndarray) -> np.ndarray:
    """
    Map DAFT-domain symbols to the time domain, s = Aᴴx.

    :raises DimensionError: If ``x`` is not of length N
    """
    x = require_vector(x, grid.n_subcarriers, "DAFT-domain vector")
    return grid.daft_matrix.conj().T @ x


def daft(grid: AfdmGrid, s: np.ndarray) -> np.ndarray:
    """
    Map time-domain samples to the DAFT domain, y = As.

    :raises DimensionError: If ``s`` is not of length N
    """
    s = require_vector(s, grid.n_subcarriers, "time-domain vector")
    return grid.daft_matrix @ s


def daft_fft(grid: AfdmGrid, s: np.ndarray) -> np.ndarray:
    """FFT-backed DAFT; matches :func:`daft` without forming A."""
    s = require_vector(s, grid.n_subcarriers, "time-domain vector")
    n = grid.n_subcarriers
    return chirp_vector(grid.c2, n) * fft.fft(chirp_vector(float(grid.c1), n) * s, norm="ortho")


def idaft_fft(grid: AfdmGrid, x: np.ndarray) -> np.ndarray:
    """FFT-backed IDAFT; matches :func:`idaft` without forming A."""
    x = require_vector(x, grid.n_subcarriers, "DAFT-domain vector")
    n = grid.n_subcarriers
    return np.conj(chirp_vector(float(grid.c1), n)) * fft.ifft(np.conj(chirp_vector(grid.c2, n)) * x, norm="ortho")
