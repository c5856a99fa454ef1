"""Doubly selective channel realizations, their matrices, and their second-order statistics."""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import special

from afdm.errors import DimensionError, ParameterError
from afdm.transforms import AfdmGrid
from afdm.utils.linalg import circshift, hermitian_part

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 3.0e8  # m/s, rounded so that 675 km/h at 24 GHz / 15 kHz is exactly alpha_max = 1
DEFAULT_CARRIER_HZ = 24e9
DEFAULT_SPACING_HZ = 15e3

DOPPLER_MODES = ("jakes", "integer")


@dataclass(frozen=True)
class ChannelPath:
    """One propagation path: complex gain, integer delay, normalized per-sample Doppler f = α/N."""

    gain: complex
    delay: int
    doppler: float

    def alpha(self, n_subcarriers: int) -> float:
        """Doppler normalized to the subcarrier spacing."""
        return self.doppler * n_subcarriers


@dataclass(frozen=True)
class DopplerProfile:
    """
    Statistical description of the channel ensemble.

    :param alpha_max: Maximum normalized Doppler (may be fractional)
    :param path_powers: Per-path average powers, summing to one
    :param delays: Per-path integer delays
    :param same_delay: Allow several paths to share a delay
    :param doppler_mode: ``jakes`` (α = α_max cos θ) or ``integer`` (same, rounded)
    """

    alpha_max: float
    path_powers: Tuple[float, ...]
    delays: Tuple[int, ...]
    same_delay: bool = False
    doppler_mode: str = "jakes"

    def __post_init__(self):
        object.__setattr__(self, "path_powers", tuple(float(p) for p in self.path_powers))
        object.__setattr__(self, "delays", tuple(int(d) for d in self.delays))
        if self.alpha_max < 0:
            raise ParameterError(f"alpha_max must be non-negative, got {self.alpha_max}")
        if len(self.path_powers) != len(self.delays) or not self.delays:
            raise DimensionError("path_powers and delays must be non-empty and of equal length")
        if any(p < 0 for p in self.path_powers) or abs(sum(self.path_powers) - 1.0) > 1e-12:
            raise ParameterError(f"path powers must be non-negative and sum to 1, got {self.path_powers}")
        if any(d < 0 for d in self.delays):
            raise ParameterError("delays must be non-negative")
        if not self.same_delay and len(set(self.delays)) != len(self.delays):
            raise ParameterError(f"delays {self.delays} repeat but same-delay mode is off")
        if self.doppler_mode not in DOPPLER_MODES:
            raise ParameterError(f"unknown doppler_mode {self.doppler_mode!r}")

    @classmethod
    def uniform(cls, alpha_max: float, delays: Sequence[int], same_delay: bool = False,
                doppler_mode: str = "jakes") -> "DopplerProfile":
        """Profile with equal power 1/P on every path."""
        p = len(delays)
        return cls(alpha_max=alpha_max, path_powers=tuple([1.0 / p] * p), delays=tuple(delays),
                   same_delay=same_delay, doppler_mode=doppler_mode)

    @property
    def num_paths(self) -> int:
        return len(self.delays)

    @property
    def l_max(self) -> int:
        return max(self.delays)

    def tap_powers(self, num_taps: int) -> np.ndarray:
        """
        Average power σ_l² carried by each delay tap l = 0..num_taps−1.

        :raises ParameterError: If a path delay does not fit in ``num_taps`` taps
        """
        if self.l_max >= num_taps:
            raise ParameterError(f"delay {self.l_max} does not fit in {num_taps} taps")
        powers = np.zeros(num_taps)
        for delay, power in zip(self.delays, self.path_powers):
            powers[delay] += power
        return powers


@dataclass(frozen=True)
class ChannelRealization:
    """A drawn set of paths for one AFDM symbol of length N."""

    n_subcarriers: int
    paths: Tuple[ChannelPath, ...]
    thetas: Optional[Tuple[float, ...]] = field(default=None, compare=False)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([p.alpha(self.n_subcarriers) for p in self.paths])

    def tap_gains(self, num_taps: int) -> np.ndarray:
        """
        Time-varying gain of every delay tap, h_l(n) = Σ_{i: l_i = l} h_i exp(−j2π f_i n).

        :param num_taps: L + 1
        :type num_taps: int
        :return: (L+1) x N array
        :rtype: np.ndarray
        """
        n = np.arange(self.n_subcarriers)
        gains = np.zeros((num_taps, self.n_subcarriers), dtype=complex)
        for path in self.paths:
            if path.delay >= num_taps:
                raise ParameterError(f"path delay {path.delay} exceeds {num_taps - 1}")
            gains[path.delay] += path.gain * np.exp(-2j * np.pi * path.doppler * n)
        return gains


def sample_jakes_paths(profile: DopplerProfile, rng: np.random.Generator, n_subcarriers: int,
                       thetas: Optional[Sequence[float]] = None) -> ChannelRealization:
    """
    Draw one channel with Jakes Doppler, α_i = α_max cos θ_i, θ_i ~ U[−π, π].

    :param profile: Ensemble description
    :type profile: DopplerProfile
    :param rng: Per-trial generator
    :type rng: np.random.Generator
    :param n_subcarriers: Symbol length N, converts α to per-sample frequency
    :type n_subcarriers: int
    :param thetas: Force the arrival angles instead of drawing them
    :type thetas: Optional[Sequence[float]]
    :return: The realization
    :rtype: ChannelRealization
    """
    p = profile.num_paths
    if thetas is None:
        theta = rng.uniform(-np.pi, np.pi, size=p)
    else:
        theta = np.asarray(thetas, dtype=float)
        if theta.shape != (p,):
            raise DimensionError(f"expected {p} angles, got {theta.shape}")
    alpha = profile.alpha_max * np.cos(theta)
    if profile.doppler_mode == "integer":
        alpha = np.round(alpha)
    sigma = np.sqrt(np.asarray(profile.path_powers) / 2.0)
    gains = sigma * (rng.standard_normal(p) + 1j * rng.standard_normal(p))
    paths = tuple(
        ChannelPath(gain=complex(g), delay=d, doppler=float(a) / n_subcarriers)
        for g, d, a in zip(gains, profile.delays, alpha)
    )
    return ChannelRealization(n_subcarriers=n_subcarriers, paths=paths, thetas=tuple(float(t) for t in theta))


def cpp_phase(grid: AfdmGrid, delay: int) -> np.ndarray:
    """
    Chirp-periodic prefix phase per received sample for a path of the given delay.

    Samples n < l read the prefix and pick up exp(−j2π c1 (N² − 2N(l − n))); all others are 1.

    :return: Length-N unit-modulus vector
    :rtype: np.ndarray
    """
    n_sub = grid.n_subcarriers
    gamma = np.ones(n_sub, dtype=complex)
    n = np.arange(min(delay, n_sub))
    c1 = grid.c1
    # exact rational phase, reduced mod 1
    phase = np.array([float((c1 * (n_sub * n_sub - 2 * n_sub * (delay - int(k)))) % 1) for k in n])
    gamma[:len(n)] = np.exp(-2j * np.pi * phase)
    return gamma


def cpp_phase_taps(grid: AfdmGrid, num_taps: int) -> np.ndarray:
    """(L+1) x N array whose row l is :func:`cpp_phase` for delay l."""
    return np.stack([cpp_phase(grid, l) for l in range(num_taps)])


def _check_delays(realization: ChannelRealization, grid: AfdmGrid) -> None:
    if realization.n_subcarriers != grid.n_subcarriers:
        raise DimensionError(f"realization has N={realization.n_subcarriers}, grid has N={grid.n_subcarriers}")
    for path in realization.paths:
        if not 0 <= path.delay < grid.n_subcarriers:
            raise ParameterError(f"path delay {path.delay} must lie in [0, {grid.n_subcarriers})")


def build_time_domain_matrix(realization: ChannelRealization, grid: AfdmGrid) -> np.ndarray:
    """
    Assemble the time-domain channel matrix H path by path.

    Entry (n, (n − l_i) mod N) accumulates h_i·exp(−j2π f_i n)·γ_i(n).

    :raises ParameterError: If a delay is not in [0, N)
    """
    _check_delays(realization, grid)
    n_sub = grid.n_subcarriers
    n = np.arange(n_sub)
    h = np.zeros((n_sub, n_sub), dtype=complex)
    for path in realization.paths:
        values = path.gain * np.exp(-2j * np.pi * path.doppler * n) * cpp_phase(grid, path.delay)
        np.add.at(h, (n, (n - path.delay) % n_sub), values)
    return h


def doppler_matrix(doppler: float, n_subcarriers: int) -> np.ndarray:
    """Δ_f = diag(exp(−j2π f n))."""
    return np.diag(np.exp(-2j * np.pi * doppler * np.arange(n_subcarriers)))


def delay_matrix(delay: int, n_subcarriers: int) -> np.ndarray:
    """Π^l, the cyclic delay by l samples."""
    return circshift(np.eye(n_subcarriers, dtype=complex), delay, axis=0)


def build_time_domain_matrix_factored(realization: ChannelRealization, grid: AfdmGrid) -> np.ndarray:
    """H = Σ_i h_i Γ_CPP,i Δ_{f_i} Π^{l_i}, built factor by factor as a reference for the path-wise form."""
    _check_delays(realization, grid)
    n_sub = grid.n_subcarriers
    h = np.zeros((n_sub, n_sub), dtype=complex)
    for path in realization.paths:
        gamma = np.diag(cpp_phase(grid, path.delay))
        h += path.gain * gamma @ doppler_matrix(path.doppler, n_sub) @ delay_matrix(path.delay, n_sub)
    return h


def build_effective_matrix(h: np.ndarray, grid: AfdmGrid) -> np.ndarray:
    """
    DAFT-domain channel H_eff = A H Aᴴ.

    :raises DimensionError: If H is not N x N
    """
    n_sub = grid.n_subcarriers
    if h.shape != (n_sub, n_sub):
        raise DimensionError(f"H must be {n_sub}x{n_sub}, got {h.shape}")
    a = grid.daft_matrix
    return a @ h @ a.conj().T


def jakes_correlation(alpha_max: float, lags: np.ndarray, n_subcarriers: int) -> np.ndarray:
    """J₀(2π α_max·lag/N), the normalized Jakes time autocorrelation."""
    return special.j0(2.0 * np.pi * alpha_max * np.asarray(lags, dtype=float) / n_subcarriers)


def channel_autocorrelation(profile: DopplerProfile, n_subcarriers: int,
                            num_taps: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-tap autocorrelation R_hh,l(n, m) = σ_l² J₀(2π α_max (n − m)/N) and the stacked R_hh.

    The stacked matrix follows the coefficient vectorization h = [h(0, 0..L), h(1, 0..L), ...],
    so R_hh = Σ_l R_hh,l ⊗ e_l e_lᵀ.

    :param profile: Ensemble description
    :type profile: DopplerProfile
    :param n_subcarriers: N
    :type n_subcarriers: int
    :param num_taps: L + 1; defaults to l_max + 1
    :type num_taps: Optional[int]
    :return: ((L+1) x N x N per-tap array, N(L+1) x N(L+1) stacked matrix)
    :rtype: Tuple[np.ndarray, np.ndarray]
    """
    num_taps = profile.l_max + 1 if num_taps is None else num_taps
    n = np.arange(n_subcarriers)
    base = jakes_correlation(profile.alpha_max, n[:, None] - n[None, :], n_subcarriers)
    powers = profile.tap_powers(num_taps)
    per_tap = powers[:, None, None] * base[None, :, :]
    logger.debug("R_hh built for %d taps, N=%d, alpha_max=%.3f", num_taps, n_subcarriers, profile.alpha_max)
    return per_tap.astype(complex), stack_tap_covariances(per_tap)


def stack_tap_covariances(per_tap: np.ndarray) -> np.ndarray:
    """
    Interleave per-tap N x N covariances into the N(L+1) square matrix of the stacked tap vector.

    :param per_tap: (L+1) x N x N array
    :type per_tap: np.ndarray
    :return: Σ_l per_tap[l] ⊗ e_l e_lᵀ
    :rtype: np.ndarray
    """
    num_taps = per_tap.shape[0]
    stacked = np.zeros((per_tap.shape[1] * num_taps,) * 2, dtype=complex)
    for l in range(num_taps):
        selector = np.zeros((num_taps, num_taps))
        selector[l, l] = 1.0
        stacked += np.kron(per_tap[l], selector)
    return hermitian_part(stacked)


def stack_tap_gains(tap_gains: np.ndarray) -> np.ndarray:
    """Flatten (L+1) x N tap gains to the vector [h(0, 0..L), h(1, 0..L), ...]."""
    return tap_gains.T.reshape(-1)


def speed_to_alpha_max(speed_kmh: float, carrier_hz: float = DEFAULT_CARRIER_HZ,
                       spacing_hz: float = DEFAULT_SPACING_HZ) -> float:
    """
    Convert terminal speed to the maximum Doppler normalized to the subcarrier spacing.

    :param speed_kmh: Speed in km/h
    :type speed_kmh: float
    :param carrier_hz: Carrier frequency
    :type carrier_hz: float
    :param spacing_hz: Subcarrier spacing
    :type spacing_hz: float
    :return: α_max = v·f_c/(c·Δf)
    :rtype: float
    """
    if speed_kmh < 0:
        raise ParameterError(f"speed must be non-negative, got {speed_kmh}")
    f_max = speed_kmh / 3.6 * carrier_hz / SPEED_OF_LIGHT
    return f_max / spacing_hz
