"""
Seeded Monte Carlo engine: per-trial link simulation, sweeps, the complexity benchmark and result export.

Every trial draws from its own generator derived from (seed, trial_index), so records do not depend on
which worker ran them or in which order they finished. Sums are formed in trial-index order.
"""

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import stats

from afdm.bem import BemBasis, build_basis
from afdm.channel import (DopplerProfile, build_effective_matrix, build_time_domain_matrix, channel_autocorrelation,
                          sample_jakes_paths)
from afdm.config import SimConfig
from afdm.detector import (QamConstellation, ber_lower_bound, cancel_pilot, detect, expected_error_term,
                           genie_error_term, mmse_equalizer)
from afdm.errors import AfdmError, ConfigError, SaturationError, TrialError
from afdm.estimator import (BemMmseEstimator, CovarianceSet, NaiveMmseEstimator, build_covariance_set,
                            build_pilot_dictionary, mmse_gain)
from afdm.frame import PilotFrame, design_pilot_frame, embed, extract_observation
from afdm.transforms import AfdmGrid
from afdm.utils.config_utils import normalize_sweep_var

logger = logging.getLogger(__name__)

CSV_HEADER = ("sweep_var", "nmse_mc_db", "nmse_closed_db", "ber_mc", "ber_bound", "ber_theory",
              "ci_halfwidth", "trials")
BENCH_HEADER = ("n", "gram_dim_bem", "gram_dim_naive", "t_bem_s", "t_naive_s", "speedup")
NUMBER_FORMAT = "%.10e"
CONFIDENCE = 0.95


def snr_to_noise_var(snr_d_db: float) -> float:
    """σ_w² for unit-energy data at the given SNR_d."""
    return 10.0 ** (-snr_d_db / 10.0)


def pilot_power(snr_p_db: float, noise_var: float) -> float:
    """|x_p|² = σ_w²·10^(SNR_p/10)."""
    return noise_var * 10.0 ** (snr_p_db / 10.0)


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    """Independent generator for one trial, keyed by the root seed and the trial counter."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial_index,)))


def to_db(value: float) -> float:
    return 10.0 * math.log10(value) if value > 0 else -math.inf


@dataclass(frozen=True)
class SimulationContext:
    """Per-configuration objects shared read-only by every trial."""

    config: SimConfig
    grid: AfdmGrid
    profile: DopplerProfile
    basis: BemBasis
    frame: PilotFrame
    covariances: CovarianceSet
    estimator: BemMmseEstimator
    constellation: QamConstellation
    noise_var: float
    num_taps: int
    r_x: np.ndarray = field(repr=False)
    r_n: np.ndarray = field(repr=False)
    error_term: Optional[np.ndarray] = field(repr=False)


def build_context(config: SimConfig) -> SimulationContext:
    """
    Assemble grid, channel statistics, frame, estimator and equalizer statistics for one configuration.

    :param config: Validated configuration
    :type config: SimConfig
    :return: The shared context
    :rtype: SimulationContext
    """
    g, ch = config.grid, config.channel
    grid = AfdmGrid.recommended(g.n_subcarriers, g.alpha_max, g.k_nu, g.c2)
    profile = DopplerProfile(alpha_max=config.channel_alpha_max, path_powers=ch.effective_powers(),
                             delays=ch.effective_delays(), same_delay=ch.same_delay, doppler_mode=ch.doppler_mode)
    num_taps = config.frame.l_max + 1
    noise_var = snr_to_noise_var(config.detection.snr_d_db)
    basis = build_basis(g.n_subcarriers, config.bem.order, config.bem.oversampling)
    frame = design_pilot_frame(grid, config.bem.order, config.frame.l_max,
                               pilot_power(config.frame.snr_p_db, noise_var))
    covariances = build_covariance_set(frame, grid, basis, profile, num_taps, noise_var)
    estimator = BemMmseEstimator(build_pilot_dictionary(frame, grid, basis, num_taps), covariances, basis, grid)
    x_p = frame.pilot_vector()
    r_x = np.outer(x_p, x_p.conj()) + covariances.r_x_d
    error_term = None
    if config.detection.error_term == "expected":
        error_term = expected_error_term(grid, basis, r_x, estimator.r_g_tilde, num_taps)
    constellation = QamConstellation.square(config.detection.constellation_order, config.detection.a_m,
                                            config.detection.b_m)
    logger.debug("context: N=%d Q_B=%d SNR_p=%.1f dB SNR_d=%.1f dB alpha_max=%.3f",
                 g.n_subcarriers, frame.q_guard, config.frame.snr_p_db, config.detection.snr_d_db,
                 profile.alpha_max)
    return SimulationContext(config=config, grid=grid, profile=profile, basis=basis, frame=frame,
                             covariances=covariances, estimator=estimator, constellation=constellation,
                             noise_var=noise_var, num_taps=num_taps, r_x=r_x,
                             r_n=covariances.r_z + noise_var * np.eye(g.n_subcarriers), error_term=error_term)


@dataclass(frozen=True)
class TrialRecord:
    """Outcome of one trial. ``ber_bound``/``ber_theory`` are None when the equalizer saturated."""

    trial_index: int
    error_energy: float
    channel_energy: float
    bit_errors: int
    bits: int
    ber_bound: Optional[float] = None
    ber_theory: Optional[float] = None

    @property
    def nmse(self) -> float:
        """‖H − Ĥ‖_F² / ‖H‖_F² of this trial."""
        return self.error_energy / self.channel_energy


def run_trial(config: SimConfig, trial_index: int, context: Optional[SimulationContext] = None) -> TrialRecord:
    """
    Simulate one AFDM symbol end to end.

    Draw the channel, transmit pilots plus random data through H_eff with noise, estimate the channel from
    the observation window, cancel the pilots, equalize and detect.

    :param config: Configuration (used to build the context when none is given)
    :type config: SimConfig
    :param trial_index: Counter selecting the trial's random stream
    :type trial_index: int
    :param context: Shared per-configuration objects
    :type context: Optional[SimulationContext]
    :return: NMSE sample, bit error count and analytical BER figures
    :rtype: TrialRecord
    :raises TrialError: Wrapping any simulator error with the trial's index and seed
    """
    try:
        ctx = context if context is not None else build_context(config)
        return _simulate(ctx, trial_index)
    except (AfdmError, np.linalg.LinAlgError) as e:
        if isinstance(e, TrialError):
            raise
        raise TrialError(trial_index, config.seed, e) from e


def _simulate(ctx: SimulationContext, trial_index: int) -> TrialRecord:
    rng = trial_rng(ctx.config.seed, trial_index)
    frame, grid = ctx.frame, ctx.grid
    realization = sample_jakes_paths(ctx.profile, rng, grid.n_subcarriers)
    h = build_time_domain_matrix(realization, grid)
    h_eff = build_effective_matrix(h, grid)

    bits = rng.integers(0, 2, size=frame.num_data * ctx.constellation.bits_per_symbol)
    signal = embed(frame, ctx.constellation.modulate(bits))
    noise = np.sqrt(ctx.noise_var / 2.0) * (rng.standard_normal(grid.n_subcarriers)
                                            + 1j * rng.standard_normal(grid.n_subcarriers))
    y = h_eff @ signal.x + noise

    estimate = ctx.estimator.estimate(extract_observation(frame, y))
    error_energy = float(np.linalg.norm(h - estimate.h_hat) ** 2)
    channel_energy = float(np.linalg.norm(h) ** 2)

    y_hat = cancel_pilot(y, estimate.h_eff_hat, signal.pilot)
    if ctx.error_term is None:
        error_term = genie_error_term(h_eff - estimate.h_eff_hat, ctx.r_x)
    else:
        error_term = ctx.error_term
    g = mmse_equalizer(estimate.h_eff_hat, ctx.covariances.r_x_d, error_term, ctx.r_n)
    result = detect(y_hat, g, ctx.constellation, frame)
    bit_errors = int(np.count_nonzero(result.hard_bits != bits))

    bound = theory = None
    try:
        analysis = ber_lower_bound(g @ estimate.h_eff_hat, ctx.constellation, frame.data_indices)
        bound, theory = analysis.bound, analysis.average
    except SaturationError as e:
        logger.debug("trial %d: %s", trial_index, e)
    logger.debug("trial %d: nmse=%.3e bit errors=%d/%d", trial_index, error_energy / channel_energy, bit_errors,
                 bits.size)
    return TrialRecord(trial_index=trial_index, error_energy=error_energy, channel_energy=channel_energy,
                       bit_errors=bit_errors, bits=int(bits.size), ber_bound=bound, ber_theory=theory)


def binomial_halfwidth(errors: int, total: int, confidence: float = CONFIDENCE) -> float:
    """Normal-approximation half-width of the binomial confidence interval of errors/total."""
    if total <= 0:
        return 0.0
    p = errors / total
    z = float(stats.norm.ppf(0.5 + confidence / 2.0))
    return z * math.sqrt(p * (1.0 - p) / total)


@dataclass(frozen=True)
class CurvePoint:
    """Aggregated result of one sweep point. NMSE values are in dB."""

    x: float
    nmse_mc: float
    nmse_closed: float
    ber_mc: float
    ber_bound: float
    ber_theory: float
    trials_used: int
    ci_halfwidth: float
    bit_errors: int = 0
    bits: int = 0
    failures: int = 0
    diagnostics: Dict[str, Any] = field(default_factory=dict, compare=False)

    def csv_row(self) -> List[str]:
        values = (self.x, self.nmse_mc, self.nmse_closed, self.ber_mc, self.ber_bound, self.ber_theory,
                  self.ci_halfwidth)
        return [NUMBER_FORMAT % v for v in values] + [str(self.trials_used)]


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values) if values else math.nan


def aggregate(x: float, records: Sequence[TrialRecord], nmse_closed: float, failures: int = 0,
              diagnostics: Optional[Dict[str, Any]] = None) -> CurvePoint:
    """
    Reduce trial records to a curve point.

    Counts and energies are summed: BER is total errors over total bits and the Monte Carlo NMSE is total
    error energy over total channel energy, the sample counterpart of E‖H − Ĥ‖² / E‖H‖².

    :param records: Records ordered by trial index
    :type records: Sequence[TrialRecord]
    """
    bit_errors = sum(r.bit_errors for r in records)
    bits = sum(r.bits for r in records)
    bounds = [r.ber_bound for r in records if r.ber_bound is not None]
    theories = [r.ber_theory for r in records if r.ber_theory is not None]
    nmse_mc = math.fsum(r.error_energy for r in records) / max(math.fsum(r.channel_energy for r in records), 1e-300)
    return CurvePoint(
        x=float(x),
        nmse_mc=to_db(nmse_mc) if records else math.nan,
        nmse_closed=to_db(nmse_closed),
        ber_mc=bit_errors / bits if bits else math.nan,
        ber_bound=_mean(bounds),
        ber_theory=_mean(theories),
        trials_used=len(records),
        ci_halfwidth=binomial_halfwidth(bit_errors, bits),
        bit_errors=bit_errors,
        bits=bits,
        failures=failures,
        diagnostics=diagnostics or {},
    )


def _stop_index(records: Sequence[TrialRecord], config: SimConfig) -> Optional[int]:
    """Index into ``records`` after which the adaptive BER stopping rule is met, if any."""
    if not config.min_bit_errors and not config.max_bits:
        return None
    errors = bits = 0
    for i, record in enumerate(records):
        errors += record.bit_errors
        bits += record.bits
        if (config.min_bit_errors and errors >= config.min_bit_errors) or (config.max_bits and bits >= config.max_bits):
            return i
    return None


def run_point(config: SimConfig, x: float = math.nan) -> CurvePoint:
    """
    Run the trials of one configuration and aggregate them.

    Trials are dispatched in batches to a thread pool and consumed in index order. Failed trials are counted
    and skipped unless ``config.fail_fast`` is set. With ``min_bit_errors`` or ``max_bits`` set, the point
    stops at the first trial index where either target is reached.
    """
    ctx = build_context(config)

    def guarded(index: int) -> Union[TrialRecord, TrialError]:
        try:
            return run_trial(config, index, ctx)
        except TrialError as e:
            if config.fail_fast:
                raise
            return e

    records: List[TrialRecord] = []
    failed: List[int] = []
    batch = max(config.workers * 8, 1)
    with ThreadPoolExecutor(max_workers=config.workers) as executor:
        for start in range(0, config.trials, batch):
            outcomes = list(executor.map(guarded, range(start, min(start + batch, config.trials))))
            for outcome in outcomes:
                if isinstance(outcome, TrialError):
                    failed.append(outcome.trial_index)
                    logger.warning("%s", outcome)
                    continue
                records.append(outcome)
            stop = _stop_index(records, config)
            if stop is not None:
                last = records[stop].trial_index
                del records[stop + 1:]
                failed = [i for i in failed if i < last]
                break
    failures = len(failed)
    point = aggregate(x, records, ctx.estimator.nmse_closed_form, failures, ctx.estimator.diagnostics.to_dict())
    logger.info("point %s: %d trials, NMSE %.2f dB (closed %.2f dB), BER %.3e (%d errors)",
                x, point.trials_used, point.nmse_mc, point.nmse_closed, point.ber_mc, point.bit_errors)
    return point


def run_sweep(config: SimConfig, sweep_var: str, grid: Sequence[float],
              on_point: Optional[Callable[[CurvePoint], None]] = None) -> List[CurvePoint]:
    """
    One curve point per grid value of the swept variable.

    :param config: Base configuration
    :type config: SimConfig
    :param sweep_var: ``snr_p``, ``snr_d``, ``speed`` or ``alpha_max``
    :type sweep_var: str
    :param grid: Values of the swept variable
    :type grid: Sequence[float]
    :param on_point: Called after each point, e.g. to advance a progress bar
    :type on_point: Optional[Callable[[CurvePoint], None]]
    :return: The curve
    :rtype: List[CurvePoint]
    """
    var = normalize_sweep_var(sweep_var)
    if not len(grid):
        raise ConfigError("sweep grid is empty")
    curve = []
    for value in grid:
        point = run_point(config.with_value(var, value), value)
        curve.append(point)
        if on_point is not None:
            on_point(point)
    return curve


@dataclass(frozen=True)
class BenchRow:
    n: int
    gram_dim_bem: int
    gram_dim_naive: int
    t_bem_s: float
    t_naive_s: float

    @property
    def speedup(self) -> float:
        return self.t_naive_s / self.t_bem_s if self.t_bem_s > 0 else math.inf

    def csv_row(self) -> List[str]:
        return [str(self.n), str(self.gram_dim_bem), str(self.gram_dim_naive), NUMBER_FORMAT % self.t_bem_s,
                NUMBER_FORMAT % self.t_naive_s, NUMBER_FORMAT % self.speedup]


def complexity_benchmark(config: SimConfig, sizes: Sequence[int], repeats: int = 3) -> List[BenchRow]:
    """
    Time one channel estimate with the BEM-structured estimator and with the naive full-N baseline.

    Second-order statistics are prepared outside the timed region for both. The BEM timing covers the pilot
    dictionary, the (2Q_B+2)-dimensional Gram solve and the coefficient estimate; the naive timing covers its
    dictionary, the N x N Gram solve and the tap estimate. The best of ``repeats`` runs is kept.

    :param sizes: Values of N
    :type sizes: Sequence[int]
    :return: One row per N
    :rtype: List[BenchRow]
    """
    rows = []
    for n in sizes:
        cfg = replace(config, grid=replace(config.grid, n_subcarriers=int(n)))
        ctx = build_context(cfg)
        cov = ctx.covariances
        pilot = ctx.frame.pilot_vector()
        rng = trial_rng(cfg.seed, 0)
        y = rng.standard_normal(ctx.grid.n) + 1j * rng.standard_normal(ctx.grid.n)
        y_p = extract_observation(ctx.frame, y)
        disturbance = cov.r_d_p + cov.r_z_p + cov.r_w_p
        _, r_hh = channel_autocorrelation(ctx.profile, ctx.grid.n, ctx.num_taps)

        t_bem = t_naive = math.inf
        gram_dim_naive = gram_dim_bem = 0
        for _ in range(repeats):
            start = time.perf_counter()
            dictionary = build_pilot_dictionary(ctx.frame, ctx.grid, ctx.basis, ctx.num_taps)
            gain, gram, _ = mmse_gain(dictionary.psi_pp, cov.r_g, disturbance)
            _ = gain @ y_p
            t_bem = min(t_bem, time.perf_counter() - start)
            gram_dim_bem = gram.shape[0]

            start = time.perf_counter()
            naive = NaiveMmseEstimator(ctx.grid, pilot, r_hh, ctx.noise_var, ctx.num_taps)
            naive.estimate(y)
            t_naive = min(t_naive, time.perf_counter() - start)
            gram_dim_naive = naive.gram_dim
        row = BenchRow(n=int(n), gram_dim_bem=gram_dim_bem, gram_dim_naive=gram_dim_naive, t_bem_s=t_bem,
                       t_naive_s=t_naive)
        logger.info("bench N=%d: BEM %.3e s (Gram %d), naive %.3e s (Gram %d), speedup %.1fx",
                    row.n, row.t_bem_s, row.gram_dim_bem, row.t_naive_s, row.gram_dim_naive, row.speedup)
        rows.append(row)
    return rows


def write_curve_csv(curve: Sequence[CurvePoint], path: Union[str, Path]) -> Path:
    """Write a curve with the fixed header; numbers use a fixed format so equal runs give equal bytes."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(CSV_HEADER)
        for point in curve:
            writer.writerow(point.csv_row())
    return target


def write_bench_csv(rows: Sequence[BenchRow], path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(BENCH_HEADER)
        for row in rows:
            writer.writerow(row.csv_row())
    return target


def sidecar_path(csv_path: Union[str, Path]) -> Path:
    """``results.csv`` -> ``results.json``."""
    return Path(csv_path).with_suffix('.json')


def write_sidecar(csv_path: Union[str, Path], config: SimConfig, sweep_var: str, curve: Sequence[CurvePoint],
                  profile: Optional[str] = None) -> Path:
    """
    Write the JSON provenance file next to a curve CSV.

    It holds the resolved configuration, the sweep variable and each point's counts and estimator diagnostics.
    """
    target = sidecar_path(csv_path)
    payload = {'profile': profile, 'sweep_var': normalize_sweep_var(sweep_var), 'config': config.to_dict(),
               'points': [asdict(point) for point in curve]}
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, 'w') as f:
        json.dump(payload, f, indent=2, default=float)
    return target
