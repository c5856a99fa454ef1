"""Pilot cancellation, MMSE equalization, QAM detection and the analytical BER of the equalized link."""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, special

from afdm.bem import BemBasis
from afdm.errors import DimensionError, NumericalDegeneracyError, ParameterError, SaturationError
from afdm.estimator import bem_interference_covariance
from afdm.frame import PilotFrame
from afdm.transforms import AfdmGrid
from afdm.utils.linalg import hermitian_part

logger = logging.getLogger(__name__)

SATURATION = 1.0 - 1e-12
IMAG_TOLERANCE = 1e-8


def _gray_to_binary(g: int) -> int:
    b = 0
    while g:
        b ^= g
        g >>= 1
    return b


@dataclass(frozen=True)
class QamConstellation:
    """
    Square Gray-mapped QAM with unit average energy.

    ``points[label]`` is the symbol carrying the bits of ``label`` (MSB first). The BER approximation
    a_M·erfc(√(b_M·ζ)) takes ζ as the SINR per symbol.
    """

    order: int
    points: np.ndarray = field(repr=False, compare=False)
    a_m: float
    b_m: float

    @classmethod
    def square(cls, order: int = 4, a_m: Optional[float] = None, b_m: Optional[float] = None) -> "QamConstellation":
        """
        Build an M-QAM constellation (M a power of 4).

        :param order: Constellation size M
        :type order: int
        :param a_m: Override of the BER prefactor, default (2/log2 M)(1 − 1/√M)
        :type a_m: Optional[float]
        :param b_m: Override of the erfc argument scale, default 3/(2(M − 1))
        :type b_m: Optional[float]
        :return: The constellation
        :rtype: QamConstellation
        """
        bits = int(round(math.log2(order))) if order > 1 else 0
        if order < 4 or 2 ** bits != order or bits % 2:
            raise ParameterError(f"QAM order must be a power of 4, got {order}")
        side = int(round(math.sqrt(order)))
        half = bits // 2
        points = np.empty(order, dtype=complex)
        for label in range(order):
            i = _gray_to_binary(label >> half)
            q = _gray_to_binary(label & (side - 1))
            points[label] = (2 * i - side + 1) + 1j * (2 * q - side + 1)
        points /= np.sqrt(np.mean(np.abs(points) ** 2))
        a_default = 2.0 / bits * (1.0 - 1.0 / side)
        b_default = 3.0 / (2.0 * (order - 1))
        return cls(order=order, points=points, a_m=a_default if a_m is None else a_m,
                   b_m=b_default if b_m is None else b_m)

    @property
    def bits_per_symbol(self) -> int:
        return int(round(math.log2(self.order)))

    def map_labels(self, labels: np.ndarray) -> np.ndarray:
        return self.points[np.asarray(labels, dtype=int)]

    def labels_to_bits(self, labels: np.ndarray) -> np.ndarray:
        k = self.bits_per_symbol
        shifts = np.arange(k - 1, -1, -1)
        return ((np.asarray(labels, dtype=int)[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)

    def bits_to_labels(self, bits: np.ndarray) -> np.ndarray:
        k = self.bits_per_symbol
        bits = np.asarray(bits, dtype=int).reshape(-1, k)
        return bits @ (1 << np.arange(k - 1, -1, -1))

    def modulate(self, bits: np.ndarray) -> np.ndarray:
        """Gray-map a bit vector (length a multiple of log2 M) to symbols."""
        bits = np.asarray(bits).reshape(-1)
        if bits.size % self.bits_per_symbol:
            raise DimensionError(f"{bits.size} bits is not a multiple of {self.bits_per_symbol}")
        return self.map_labels(self.bits_to_labels(bits))

    def demap(self, symbols: np.ndarray) -> np.ndarray:
        """Nearest-point decision, returned as labels."""
        symbols = np.asarray(symbols).reshape(-1)
        return np.argmin(np.abs(symbols[:, None] - self.points[None, :]), axis=1)

    def theoretical_ber(self, sinr: np.ndarray) -> np.ndarray:
        """a_M erfc(√(b_M ζ)), elementwise."""
        return self.a_m * special.erfc(np.sqrt(self.b_m * np.asarray(sinr, dtype=float)))


def cancel_pilot(y: np.ndarray, h_eff_hat: np.ndarray, x_p: np.ndarray) -> np.ndarray:
    """ŷ = y − Ĥ_eff x_p."""
    if h_eff_hat.shape != (y.size, x_p.size):
        raise DimensionError(f"Ĥ_eff shape {h_eff_hat.shape} does not match y ({y.size}) and x_p ({x_p.size})")
    return y - h_eff_hat @ x_p


def expected_error_term(grid: AfdmGrid, basis: BemBasis, r_x: np.ndarray, r_g_tilde: np.ndarray,
                        num_taps: int) -> np.ndarray:
    """
    E{H̃_eff R_x H̃_effᴴ} propagated from the coefficient error covariance R_g̃.

    :param r_x: Covariance of the whole transmitted symbol, x_p x_pᴴ + R_{x_d}
    :type r_x: np.ndarray
    """
    return bem_interference_covariance(grid, basis, r_x, r_g_tilde, num_taps)


def genie_error_term(h_eff_tilde: np.ndarray, r_x: np.ndarray) -> np.ndarray:
    """H̃_eff R_x H̃_effᴴ for a known estimation error, for validation runs."""
    return hermitian_part(h_eff_tilde @ r_x @ h_eff_tilde.conj().T)


def equalizer_bracket(h_eff_hat: np.ndarray, r_x_d: np.ndarray, error_term: np.ndarray,
                      r_n: np.ndarray) -> np.ndarray:
    """Ĥ_eff R_{x_d} Ĥ_effᴴ + E{H̃_eff R_x H̃_effᴴ} + R_n."""
    return hermitian_part(h_eff_hat @ r_x_d @ h_eff_hat.conj().T + error_term + r_n)


def mmse_equalizer(h_eff_hat: np.ndarray, r_x_d: np.ndarray, error_term: np.ndarray, r_n: np.ndarray) -> np.ndarray:
    """
    G = R_{x_d} Ĥ_effᴴ (Ĥ_eff R_{x_d} Ĥ_effᴴ + H̃_eff R_x H̃_effᴴ + R_n)⁻¹, with R_n = R_z + σ_w² I.

    :param error_term: The H̃_eff term, from :func:`expected_error_term` or :func:`genie_error_term`
    :type error_term: np.ndarray
    :raises NumericalDegeneracyError: If the bracket is singular
    """
    bracket = equalizer_bracket(h_eff_hat, r_x_d, error_term, r_n)
    try:
        solved = linalg.solve(bracket, h_eff_hat @ r_x_d, assume_a='her')
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalDegeneracyError("equalizer bracket", float("inf")) from e
    return solved.conj().T


def equalizer_output_power(g: np.ndarray, bracket: np.ndarray) -> np.ndarray:
    """E{|x̂_d(i)|²} = G_i (bracket) G_iᴴ for every row i."""
    return np.einsum('ij,jk,ik->i', g, bracket, g.conj()).real


def _diag_real(t: np.ndarray, indices: Optional[np.ndarray]) -> np.ndarray:
    diag = np.diag(t) if indices is None else np.diag(t)[indices]
    if diag.size and np.max(np.abs(diag.imag)) > IMAG_TOLERANCE:
        raise ParameterError(f"T(i,i) has imaginary residue {np.max(np.abs(diag.imag)):.2e}")
    return diag.real


def per_subcarrier_sinr(t: np.ndarray, indices: Optional[np.ndarray] = None) -> np.ndarray:
    """
    ζ_i = T(i,i)/(1 − T(i,i)) from the real part of T(i,i).

    Saturated entries (T(i,i) ≥ 1 − 1e−12) come back as ``inf``.

    :param t: Equivalent matrix T = G Ĥ_eff
    :type t: np.ndarray
    :param indices: Restrict to these subcarriers
    :type indices: Optional[np.ndarray]
    :raises ParameterError: If T(i,i) is negative or carries a non-negligible imaginary part
    """
    diag = _diag_real(t, indices)
    if np.any(diag < -1e-9):
        raise ParameterError(f"T(i,i) must be non-negative, got minimum {diag.min():.3e}")
    diag = np.clip(diag, 0.0, None)
    saturated = diag >= SATURATION
    sinr = np.empty_like(diag)
    sinr[saturated] = np.inf
    sinr[~saturated] = diag[~saturated] / (1.0 - diag[~saturated])
    if np.any(saturated):
        logger.warning("%d subcarrier(s) saturated: infinite SINR", int(saturated.sum()))
    return sinr


@dataclass(frozen=True)
class BerAnalysis:
    """Jensen lower bound and per-subcarrier average of the analytical BER."""

    bound: float
    average: float
    mean_gain: float


def ber_lower_bound(t: np.ndarray, constellation: QamConstellation,
                    indices: Optional[np.ndarray] = None) -> BerAnalysis:
    """
    P ≥ a_M erfc(√(b_M T̄/(1 − T̄))) and the average (1/N)Σ a_M erfc(√(b_M ζ_i)).

    :param indices: Subcarriers averaged over; data subcarriers in the simulation
    :type indices: Optional[np.ndarray]
    :raises SaturationError: If T̄ is outside (0, 1)
    """
    diag = _diag_real(t, indices)
    mean_gain = float(np.mean(diag))
    if not 0.0 < mean_gain < 1.0:
        raise SaturationError(f"average equalizer gain {mean_gain} is outside (0, 1)")
    bound = float(constellation.theoretical_ber(mean_gain / (1.0 - mean_gain)))
    average = float(np.mean(constellation.theoretical_ber(per_subcarrier_sinr(t, indices))))
    return BerAnalysis(bound=bound, average=average, mean_gain=mean_gain)


@dataclass(frozen=True)
class DetectionResult:
    """Equalizer output and decisions for the data subcarriers of one symbol."""

    equalizer: np.ndarray = field(repr=False)
    soft_symbols: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    hard_bits: np.ndarray = field(repr=False)
    t_matrix: Optional[np.ndarray] = field(default=None, repr=False)
    sinr: Optional[np.ndarray] = field(default=None, repr=False)
    ber_bound: Optional[float] = None
    ber_theoretical: Optional[float] = None


def detect(y_hat: np.ndarray, g: np.ndarray, constellation: QamConstellation, frame: PilotFrame,
           h_eff_hat: Optional[np.ndarray] = None) -> DetectionResult:
    """
    x̂_d = G ŷ on the data subcarriers, nearest-point decisions and Gray demapping.

    When ``h_eff_hat`` is given, T = G Ĥ_eff, the SINR and the analytical BER figures are filled in too.
    """
    if g.shape != (frame.n, y_hat.size):
        raise DimensionError(f"G has shape {g.shape}, expected ({frame.n}, {y_hat.size})")
    soft = (g @ y_hat)[frame.data_indices]
    labels = constellation.demap(soft)
    bits = constellation.labels_to_bits(labels)
    if h_eff_hat is None:
        return DetectionResult(equalizer=g, soft_symbols=soft, labels=labels, hard_bits=bits)
    t = g @ h_eff_hat
    analysis = ber_lower_bound(t, constellation, frame.data_indices)
    return DetectionResult(equalizer=g, soft_symbols=soft, labels=labels, hard_bits=bits, t_matrix=t,
                           sinr=per_subcarrier_sinr(t, frame.data_indices), ber_bound=analysis.bound,
                           ber_theoretical=analysis.average)
