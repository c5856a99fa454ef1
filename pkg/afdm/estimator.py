"""
Embedded-pilot MMSE estimation of the GCE-BEM coefficients.

The estimator works on the 2Q_B+2 observation window only. Everything that does not depend on
the received samples (dictionary, covariances, gain matrix, error covariance, closed-form NMSE)
is computed once per configuration by :class:`BemMmseEstimator` and shared read-only by trials.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import linalg

from afdm.bem import BemBasis, BemCoefficients, model_error_covariance, reconstruct_channel_taps
from afdm.channel import DopplerProfile, build_effective_matrix, channel_autocorrelation, cpp_phase_taps
from afdm.errors import DimensionError, NumericalDegeneracyError
from afdm.frame import PilotFrame
from afdm.transforms import AfdmGrid
from afdm.utils.linalg import checked_condition, circshift, hermitian_part, require_vector, shift_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PilotDictionary:
    """Ψ_p = [D_0,p, ..., D_Q,p] and its observation-window rows Ψ_pp = T_p Ψ_p."""

    psi_p: np.ndarray = field(repr=False)
    obs_indices: np.ndarray = field(repr=False)
    num_taps: int

    @property
    def psi_pp(self) -> np.ndarray:
        return self.psi_p[self.obs_indices]


def signal_dictionary(grid: AfdmGrid, basis: BemBasis, x: np.ndarray, num_taps: int) -> np.ndarray:
    """
    Linearize the BEM channel response to a DAFT-domain symbol x in the coefficients g.

    D_q = A diag{b_q} Fᴴ diag{F Aᴴ x} F_L. The product Fᴴ diag{F s} F_L is the matrix of the first
    L+1 cyclic shifts of s = Aᴴx, which is how it is formed here. Column l is weighted by the
    prefix phase γ_l so the dictionary matches the channel for odd N too.

    :return: N x (Q+1)(L+1) matrix Ψ with Ψ g = A H_bem(g) Aᴴ x
    :rtype: np.ndarray
    """
    if basis.length != grid.n_subcarriers:
        raise DimensionError(f"basis length {basis.length} does not match N={grid.n_subcarriers}")
    x = require_vector(x, grid.n_subcarriers, "DAFT-domain symbol")
    a = grid.daft_matrix
    shifts = shift_matrix(a.conj().T @ x, num_taps) * cpp_phase_taps(grid, num_taps).T
    blocks = [basis.basis_matrix[:, q][:, None] * shifts for q in range(basis.num_basis)]
    return a @ np.hstack(blocks)


def build_pilot_dictionary(frame: PilotFrame, grid: AfdmGrid, basis: BemBasis, num_taps: int) -> PilotDictionary:
    """Pilot dictionary of a frame, restricted to its observation window."""
    if frame.n != grid.n_subcarriers:
        raise DimensionError(f"frame has N={frame.n}, grid has N={grid.n_subcarriers}")
    psi_p = signal_dictionary(grid, basis, frame.pilot_vector(), num_taps)
    return PilotDictionary(psi_p=psi_p, obs_indices=frame.obs_indices, num_taps=num_taps)


def bem_prior_covariance(r_hh: np.ndarray, basis: BemBasis, num_taps: int) -> np.ndarray:
    """
    Covariance of the LS-fit coefficients, R_g = Θ⁺ R_hh (Θ⁺)ᴴ with Θ = B ⊗ I_{L+1}.

    :param r_hh: N(L+1) square covariance of the stacked tap vector
    :type r_hh: np.ndarray
    :raises NumericalDegeneracyError: If BᴴB is rank deficient
    """
    size = basis.length * num_taps
    if r_hh.shape != (size, size):
        raise DimensionError(f"R_hh must be {size}x{size}, got {r_hh.shape}")
    b = basis.basis_matrix
    checked_condition(b.conj().T @ b, "B^H B")
    theta_pinv = basis.theta_pinv(num_taps)
    return hermitian_part(theta_pinv @ r_hh @ theta_pinv.conj().T)


def bem_interference_covariance(grid: AfdmGrid, basis: BemBasis, signal_cov: np.ndarray,
                                coeff_cov: np.ndarray, num_taps: int) -> np.ndarray:
    """
    E{Ψ(x) g gᴴ Ψ(x)ᴴ} for independent zero-mean x and g.

    Evaluated per pair of delay taps in the time domain:
    A [Σ_{l,l'} (γ_l γ_{l'}ᴴ) ⊙ (Π^l R_s Π^{-l'}) ⊙ (B C_{l,l'} Bᴴ)] Aᴴ, with R_s = Aᴴ R_x A and
    C_{l,l'} the (Q+1) square block of R_g coupling taps l and l'. Without the prefix phase this equals
    Υ (J_{Q+1} ⊗ (F R_s Fᴴ)) ⊙ (Ξ R_g Ξᴴ) Υᴴ with Υ_q = A diag{b_q} Fᴴ and Ξ = I_{Q+1} ⊗ F_L.

    :param signal_cov: N x N DAFT-domain covariance R_x of the transmitted symbol
    :type signal_cov: np.ndarray
    :param coeff_cov: (Q+1)(L+1) square covariance of the coefficient vector
    :type coeff_cov: np.ndarray
    :return: N x N covariance
    :rtype: np.ndarray
    """
    size = basis.num_basis * num_taps
    if coeff_cov.shape != (size, size):
        raise DimensionError(f"coefficient covariance must be {size}x{size}, got {coeff_cov.shape}")
    a = grid.daft_matrix
    b = basis.basis_matrix
    r_s = a.conj().T @ signal_cov @ a
    gammas = cpp_phase_taps(grid, num_taps)
    time_cov = np.zeros_like(r_s, dtype=complex)
    for l in range(num_taps):
        rows = circshift(r_s, l, axis=0)
        for lp in range(num_taps):
            c_block = coeff_cov[l::num_taps, lp::num_taps]
            phase = gammas[l][:, None] * gammas[lp].conj()[None, :]
            time_cov += phase * circshift(rows, lp, axis=1) * (b @ c_block @ b.conj().T)
    return hermitian_part(a @ time_cov @ a.conj().T)


def data_covariance(frame: PilotFrame, grid: AfdmGrid, basis: BemBasis, r_g: np.ndarray,
                    data_power: float, num_taps: int) -> np.ndarray:
    """R_d = E{Ψ_d g gᴴ Ψ_dᴴ} with R_{x_d} = data_power on the data indices."""
    r_x_d = data_power * np.diag(frame.data_mask().astype(float))
    if frame.num_data == 0 or data_power == 0:
        return np.zeros((grid.n_subcarriers, grid.n_subcarriers), dtype=complex)
    return bem_interference_covariance(grid, basis, r_x_d, r_g, num_taps)


def model_error_rx_covariance(grid: AfdmGrid, r_mod: np.ndarray, pilot: np.ndarray,
                              r_x_d: np.ndarray) -> np.ndarray:
    """
    Covariance of the BEM model error seen at the receiver, R_z = E{z_mod z_modᴴ}.

    Pilot term Σ_l A c_{l,p} R_mod,l c_{l,p}ᴴ Aᴴ with c_{l,p} = diag{γ_l ⊙ circshift(s_p, l)}, plus data term
    Σ_l A ((c_{A,l} R_{x_d} c_{A,l}ᴴ) ⊙ R_mod,l) Aᴴ with c_{A,l} = diag{γ_l} circshift(Aᴴ, l).

    :param r_mod: (L+1) x N x N per-tap model error covariances
    :type r_mod: np.ndarray
    :param pilot: DAFT-domain pilot symbol x_p
    :type pilot: np.ndarray
    :param r_x_d: N x N data covariance in the DAFT domain
    :type r_x_d: np.ndarray
    """
    n = grid.n_subcarriers
    a = grid.daft_matrix
    a_h = a.conj().T
    s_p = a_h @ require_vector(pilot, n, "pilot symbol")
    with_data = bool(np.any(r_x_d))
    gammas = cpp_phase_taps(grid, len(r_mod))
    time_cov = np.zeros((n, n), dtype=complex)
    for l, r_mod_l in enumerate(r_mod):
        c_p = gammas[l] * circshift(s_p, l)
        time_cov += c_p[:, None] * r_mod_l * c_p.conj()[None, :]
        if with_data:
            c_a = gammas[l][:, None] * circshift(a_h, l, axis=0)
            time_cov += (c_a @ r_x_d @ c_a.conj().T) * r_mod_l
    return hermitian_part(a @ time_cov @ a_h)


@dataclass(frozen=True)
class CovarianceSet:
    """Second-order statistics feeding the estimator gain and the closed-form NMSE."""

    r_hh_taps: np.ndarray = field(repr=False)
    r_hh: np.ndarray = field(repr=False)
    r_mod_taps: np.ndarray = field(repr=False)
    r_g: np.ndarray = field(repr=False)
    r_d: np.ndarray = field(repr=False)
    r_z: np.ndarray = field(repr=False)
    r_x_d: np.ndarray = field(repr=False)
    noise_var: float
    obs_indices: np.ndarray = field(repr=False)

    def _restrict(self, m: np.ndarray) -> np.ndarray:
        return m[np.ix_(self.obs_indices, self.obs_indices)]

    @property
    def r_w(self) -> np.ndarray:
        return self.noise_var * np.eye(self.r_d.shape[0])

    @property
    def r_d_p(self) -> np.ndarray:
        return self._restrict(self.r_d)

    @property
    def r_z_p(self) -> np.ndarray:
        return self._restrict(self.r_z)

    @property
    def r_w_p(self) -> np.ndarray:
        return self.noise_var * np.eye(self.obs_indices.size)


def build_covariance_set(frame: PilotFrame, grid: AfdmGrid, basis: BemBasis, profile: DopplerProfile,
                         num_taps: int, noise_var: float, data_power: float = 1.0) -> CovarianceSet:
    """
    Assemble R_hh, R_mod, R_g, R_d, R_z and the noise level for one configuration.

    :param num_taps: L + 1, the number of delay taps modeled by the estimator
    :type num_taps: int
    :param noise_var: σ_w²
    :type noise_var: float
    :param data_power: Average data symbol energy ε_{x_d}
    :type data_power: float
    """
    r_hh_taps, r_hh = channel_autocorrelation(profile, grid.n_subcarriers, num_taps)
    r_mod_taps = model_error_covariance(basis, r_hh_taps)
    r_g = bem_prior_covariance(r_hh, basis, num_taps)
    r_x_d = data_power * np.diag(frame.data_mask().astype(float))
    r_d = data_covariance(frame, grid, basis, r_g, data_power, num_taps)
    r_z = model_error_rx_covariance(grid, r_mod_taps, frame.pilot_vector(), r_x_d)
    logger.debug("covariances ready: tr R_g=%.4g tr R_d=%.4g tr R_z=%.4g",
                 np.trace(r_g).real, np.trace(r_d).real, np.trace(r_z).real)
    return CovarianceSet(r_hh_taps=r_hh_taps, r_hh=r_hh, r_mod_taps=r_mod_taps, r_g=r_g, r_d=r_d, r_z=r_z,
                         r_x_d=r_x_d, noise_var=float(noise_var), obs_indices=frame.obs_indices)


@dataclass(frozen=True)
class EstimationDiagnostics:
    """Per-configuration estimator figures, serializable for the run sidecar."""

    gram_dim: int
    gram_condition: float
    nmse_model_floor: float
    nmse_estimation: float
    nmse_total: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class EstimationResult:
    """Outcome of one estimate: ĝ, Ĥ, Ĥ_eff and the (configuration-wide) error statistics."""

    g_hat: BemCoefficients
    h_hat: np.ndarray = field(repr=False)
    h_eff_hat: np.ndarray = field(repr=False)
    r_g_tilde: np.ndarray = field(repr=False)
    nmse_closed_form: float
    diagnostics: Optional[EstimationDiagnostics] = None


def closed_form_nmse(basis: BemBasis, covariances: CovarianceSet, r_g_tilde: np.ndarray) -> float:
    """
    [Σ_l tr{Φ R_hh,l} + tr{Θ R_g̃ Θᴴ}] / tr{R_hh}.

    :return: Non-negative NMSE (linear scale)
    :rtype: float
    """
    floor, estimation = nmse_terms(basis, covariances, r_g_tilde)
    return floor + estimation


def nmse_terms(basis: BemBasis, covariances: CovarianceSet, r_g_tilde: np.ndarray) -> Tuple[float, float]:
    """Split the closed-form NMSE into its modeling-error floor and estimation-error part."""
    num_taps = covariances.r_hh_taps.shape[0]
    total = float(np.trace(covariances.r_hh).real)
    phi = basis.projector_complement
    model = sum(float(np.trace(phi @ r).real) for r in covariances.r_hh_taps)
    b = basis.basis_matrix
    gram_theta = np.kron(b.conj().T @ b, np.eye(num_taps))
    estimation = float(np.trace(r_g_tilde @ gram_theta).real)
    return max(model, 0.0) / total, max(estimation, 0.0) / total


def mmse_gain(psi: np.ndarray, r_g: np.ndarray, r_disturbance: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    V = R_g Ψᴴ (Ψ R_g Ψᴴ + R_dist)⁻¹ through a Cholesky factor of the Gram matrix.

    :param psi: Dictionary restricted to the observed samples
    :type psi: np.ndarray
    :param r_g: Prior covariance of the coefficients
    :type r_g: np.ndarray
    :param r_disturbance: Covariance of everything else in the observation (data, model error, noise)
    :type r_disturbance: np.ndarray
    :return: (gain V, Gram matrix, its condition number)
    :rtype: Tuple[np.ndarray, np.ndarray, float]
    :raises NumericalDegeneracyError: If the Gram matrix is not safely positive definite
    """
    gram = hermitian_part(psi @ r_g @ psi.conj().T + r_disturbance)
    condition = checked_condition(gram, "estimator Gram matrix")
    try:
        factor = linalg.cho_factor(gram)
    except linalg.LinAlgError as e:
        raise NumericalDegeneracyError("estimator Gram matrix", float("inf")) from e
    return linalg.cho_solve(factor, psi @ r_g).conj().T, gram, condition


class BemMmseEstimator:
    """
    MMSE estimator of the BEM coefficients from the pilot observation window.

    ĝ = R_g Ψ_ppᴴ (Ψ_pp R_g Ψ_ppᴴ + R_d,p + R_z,p + R_w,p)⁻¹ y_p. The gain V_MMSE, the error covariance
    R_g̃ = R_g − V_MMSE Ψ_pp R_gᴴ and the closed-form NMSE are fixed at construction.
    """

    def __init__(self, dictionary: PilotDictionary, covariances: CovarianceSet, basis: BemBasis, grid: AfdmGrid):
        self.dictionary = dictionary
        self.covariances = covariances
        self.basis = basis
        self.grid = grid

        psi = dictionary.psi_pp
        r_g = covariances.r_g
        disturbance = covariances.r_d_p + covariances.r_z_p + covariances.r_w_p
        self.gain, gram, self.gram_condition = mmse_gain(psi, r_g, disturbance)
        self.gram_dim = gram.shape[0]
        self.r_g_tilde = hermitian_part(r_g - self.gain @ psi @ r_g.conj().T)
        floor, estimation = nmse_terms(basis, covariances, self.r_g_tilde)
        self.diagnostics = EstimationDiagnostics(gram_dim=self.gram_dim, gram_condition=self.gram_condition,
                                                 nmse_model_floor=floor, nmse_estimation=estimation,
                                                 nmse_total=floor + estimation)
        logger.debug("estimator Gram %dx%d, cond %.3e, closed-form NMSE %.4e",
                     self.gram_dim, self.gram_dim, self.gram_condition, self.diagnostics.nmse_total)

    @property
    def nmse_closed_form(self) -> float:
        return self.diagnostics.nmse_total

    def estimate(self, y_p: np.ndarray) -> EstimationResult:
        """
        Estimate the channel from one observation window.

        :param y_p: Received samples at the observation indices
        :type y_p: np.ndarray
        :return: ĝ together with the reconstructed Ĥ and Ĥ_eff
        :rtype: EstimationResult
        """
        y_p = require_vector(y_p, self.gram_dim, "observation window")
        g_hat = BemCoefficients(g=self.gain @ y_p, order=self.basis.order, num_taps=self.dictionary.num_taps)
        h_hat = reconstruct_channel_taps(g_hat, self.basis, self.grid)
        return EstimationResult(g_hat=g_hat, h_hat=h_hat, h_eff_hat=build_effective_matrix(h_hat, self.grid),
                                r_g_tilde=self.r_g_tilde, nmse_closed_form=self.nmse_closed_form,
                                diagnostics=self.diagnostics)


def mmse_estimate(y_p: np.ndarray, dictionary: PilotDictionary, covariances: CovarianceSet, basis: BemBasis,
                  grid: AfdmGrid) -> EstimationResult:
    """One-shot form of :class:`BemMmseEstimator`."""
    return BemMmseEstimator(dictionary, covariances, basis, grid).estimate(y_p)


class NaiveMmseEstimator:
    """
    Unstructured MMSE baseline: every one of the N(L+1) time-varying tap gains is a parameter and the
    whole received vector is observed, so the Gram matrix is N x N.
    """

    def __init__(self, grid: AfdmGrid, pilot: np.ndarray, r_hh: np.ndarray, noise_var: float, num_taps: int):
        n = grid.n_subcarriers
        a = grid.daft_matrix
        s_p = a.conj().T @ require_vector(pilot, n, "pilot symbol")
        gammas = cpp_phase_taps(grid, num_taps)
        psi = np.zeros((n, n * num_taps), dtype=complex)
        for l in range(num_taps):
            psi[:, l::num_taps] = a * (gammas[l] * circshift(s_p, l))[None, :]
        gram = psi @ r_hh @ psi.conj().T + noise_var * np.eye(n)
        self.gram_dim = n
        self.gain = linalg.solve(gram, psi @ r_hh, assume_a='her').conj().T
        self.num_taps = num_taps

    def estimate(self, y: np.ndarray) -> np.ndarray:
        """Stacked tap-gain estimate [ĥ(0, 0..L), ĥ(1, 0..L), ...]."""
        return self.gain @ y


def naive_mmse_estimate(y: np.ndarray, grid: AfdmGrid, pilot: np.ndarray, r_hh: np.ndarray, noise_var: float,
                        num_taps: int) -> np.ndarray:
    """One-shot form of :class:`NaiveMmseEstimator`."""
    return NaiveMmseEstimator(grid, pilot, r_hh, noise_var, num_taps).estimate(y)
