"""Generalized complex-exponential basis expansion model (GCE-BEM) of a time-varying channel."""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from afdm.channel import cpp_phase_taps
from afdm.errors import DimensionError, ParameterError
from afdm.transforms import AfdmGrid, dft_matrix
from afdm.utils.linalg import hermitian_part

logger = logging.getLogger(__name__)


def min_bem_order(alpha_max: float, oversampling: int) -> int:
    """
    Smallest order satisfying Q ≥ 2⌈R·f_max·N·T_s⌉, with f_max·N·T_s given as α_max.

    :param alpha_max: Maximum Doppler normalized to the subcarrier spacing
    :type alpha_max: float
    :param oversampling: Oversampling factor R
    :type oversampling: int
    :return: The (even) order Q
    :rtype: int
    """
    if alpha_max < 0:
        raise ParameterError(f"alpha_max must be non-negative, got {alpha_max}")
    if oversampling < 1:
        raise ParameterError(f"oversampling must be a positive integer, got {oversampling}")
    return 2 * math.ceil(oversampling * alpha_max - 1e-12)


@dataclass(frozen=True)
class BemBasis:
    """Basis vectors b_q(n) = exp(j2π (q − ⌈Q/2⌉) n/(RN)) as columns of B, with Φ = I − B(BᴴB)⁻¹Bᴴ."""

    order: int
    oversampling: int
    length: int
    basis_matrix: np.ndarray = field(repr=False, compare=False)
    pseudo_inverse: np.ndarray = field(repr=False, compare=False)
    projector_complement: np.ndarray = field(repr=False, compare=False)

    @property
    def num_basis(self) -> int:
        return self.order + 1

    def frequencies(self) -> np.ndarray:
        """Basis frequencies in cycles per sample."""
        q = np.arange(self.order + 1)
        return (q - math.ceil(self.order / 2)) / (self.oversampling * self.length)

    def theta(self, num_taps: int) -> np.ndarray:
        """Θ = B ⊗ I_{L+1}, mapping the coefficient vector g to the stacked tap vector."""
        return np.kron(self.basis_matrix, np.eye(num_taps))

    def theta_pinv(self, num_taps: int) -> np.ndarray:
        """Θ⁺ = B⁺ ⊗ I_{L+1}."""
        return np.kron(self.pseudo_inverse, np.eye(num_taps))


def build_basis(n: int, order: int, oversampling: int) -> BemBasis:
    """
    Build the GCE-BEM basis for a block of ``n`` samples.

    :param n: Block length N
    :type n: int
    :param order: BEM order Q
    :type order: int
    :param oversampling: Frequency oversampling factor R
    :type oversampling: int
    :return: The basis
    :rtype: BemBasis
    :raises ParameterError: If Q ≥ RN (aliased basis) or an argument is non-positive
    """
    if n < 1 or oversampling < 1 or order < 0:
        raise ParameterError(f"invalid basis parameters N={n}, Q={order}, R={oversampling}")
    if order >= oversampling * n:
        raise ParameterError(f"Q={order} must be below R*N={oversampling * n} (aliased basis)")
    q = np.arange(order + 1)
    freqs = (q - math.ceil(order / 2)) / (oversampling * n)
    b = np.exp(2j * np.pi * np.outer(np.arange(n), freqs))
    b_pinv = linalg.pinv(b)
    phi = hermitian_part(np.eye(n) - b @ b_pinv)
    logger.debug("GCE-BEM basis N=%d Q=%d R=%d", n, order, oversampling)
    return BemBasis(order=order, oversampling=oversampling, length=n, basis_matrix=b,
                    pseudo_inverse=b_pinv, projector_complement=phi)


@dataclass(frozen=True)
class BemCoefficients:
    """Coefficient vector g = [g_0ᵀ, ..., g_Qᵀ]ᵀ with blocks g_q of length L+1."""

    g: np.ndarray
    order: int
    num_taps: int

    def __post_init__(self):
        g = np.asarray(self.g, dtype=complex).reshape(-1)
        if g.size != (self.order + 1) * self.num_taps:
            raise DimensionError(f"g has {g.size} entries, expected {(self.order + 1) * self.num_taps}")
        if not np.all(np.isfinite(g)):
            raise ParameterError("BEM coefficients must be finite")
        object.__setattr__(self, "g", g)

    @property
    def blocks(self) -> np.ndarray:
        """(Q+1) x (L+1) view, row q holds g_q."""
        return self.g.reshape(self.order + 1, self.num_taps)

    @classmethod
    def from_blocks(cls, blocks: np.ndarray) -> "BemCoefficients":
        blocks = np.asarray(blocks)
        return cls(g=blocks.reshape(-1), order=blocks.shape[0] - 1, num_taps=blocks.shape[1])


def fit_coefficients(tap_gains: np.ndarray, basis: BemBasis) -> BemCoefficients:
    """
    Least-squares projection of each tap's gain onto the basis, ĝ(·, l) = (BᴴB)⁻¹Bᴴ h_l.

    :param tap_gains: (L+1) x N gains h_l(n)
    :type tap_gains: np.ndarray
    :param basis: GCE-BEM basis of length N
    :type basis: BemBasis
    :return: Fitted coefficients
    :rtype: BemCoefficients
    """
    tap_gains = np.atleast_2d(tap_gains)
    if tap_gains.shape[1] != basis.length:
        raise DimensionError(f"tap gains have length {tap_gains.shape[1]}, basis has {basis.length}")
    coeffs, _, _, _ = linalg.lstsq(basis.basis_matrix, tap_gains.T)
    return BemCoefficients.from_blocks(coeffs)


def fit_residual(tap_gains: np.ndarray, basis: BemBasis) -> np.ndarray:
    """Model error Φ h_l of every tap, returned as an (L+1) x N array."""
    return (basis.projector_complement @ np.atleast_2d(tap_gains).T).T


def reconstruct_taps(coeffs: BemCoefficients, basis: BemBasis) -> np.ndarray:
    """Tap gains of the BEM channel, h̄_l(n) = Σ_q b_q(n) g_q(l), as an (L+1) x N array."""
    if coeffs.order != basis.order:
        raise DimensionError(f"coefficients have order {coeffs.order}, basis has {basis.order}")
    return (basis.basis_matrix @ coeffs.blocks).T


def reconstruct_channel(coeffs: BemCoefficients, basis: BemBasis, grid: AfdmGrid) -> np.ndarray:
    """
    H_bem = Σ_q diag{b_q} Fᴴ diag{F_L g_q} F with F_L the first L+1 columns of √N·F.

    Wrapped entries (n < l) then carry the chirp-periodic prefix phase γ_l(n), as in the true channel.

    :return: N x N time-domain matrix
    :rtype: np.ndarray
    """
    n = grid.n_subcarriers
    if basis.length != n:
        raise DimensionError(f"basis length {basis.length} does not match N={n}")
    f = dft_matrix(n)
    f_l = np.sqrt(n) * f[:, :coeffs.num_taps]
    h = np.zeros((n, n), dtype=complex)
    for q, g_q in enumerate(coeffs.blocks):
        circulant = f.conj().T @ ((f_l @ g_q)[:, None] * f)
        h += basis.basis_matrix[:, q][:, None] * circulant
    gammas = cpp_phase_taps(grid, coeffs.num_taps)
    for l in range(1, coeffs.num_taps):
        rows = np.arange(min(l, n))
        h[rows, (rows - l) % n] *= gammas[l, rows]
    return h


def reconstruct_channel_taps(coeffs: BemCoefficients, basis: BemBasis, grid: Optional[AfdmGrid] = None) -> np.ndarray:
    """
    Same matrix as :func:`reconstruct_channel`, filled entrywise: H(n, (n − l) mod N) = γ_l(n) h̄_l(n).

    Without a grid the prefix phase is left out, which only matters for odd N.
    """
    taps = reconstruct_taps(coeffs, basis)
    if grid is not None:
        taps = taps * cpp_phase_taps(grid, coeffs.num_taps)
    n = basis.length
    rows = np.arange(n)
    h = np.zeros((n, n), dtype=complex)
    for l, gains in enumerate(taps):
        np.add.at(h, (rows, (rows - l) % n), gains)
    return h


def model_error_covariance(basis: BemBasis, r_hh_l: np.ndarray) -> np.ndarray:
    """
    Covariance of one tap's model error, R_mod,l = Φ R_hh,l Φᴴ.

    :param basis: GCE-BEM basis
    :type basis: BemBasis
    :param r_hh_l: N x N tap autocorrelation (or an (L+1) x N x N stack)
    :type r_hh_l: np.ndarray
    :return: Matrix (or stack) of the same shape
    :rtype: np.ndarray
    """
    phi = basis.projector_complement
    if r_hh_l.shape[-2:] != phi.shape:
        raise DimensionError(f"R_hh has shape {r_hh_l.shape}, expected trailing {phi.shape}")
    r_mod = phi @ r_hh_l @ phi.conj().T
    return 0.5 * (r_mod + np.swapaxes(r_mod.conj(), -1, -2))
