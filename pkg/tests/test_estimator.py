"""Tests for the embedded-pilot GCE-BEM MMSE estimator."""

import numpy as np
import pytest

from afdm.bem import BemCoefficients, build_basis, fit_coefficients, reconstruct_channel_taps
from afdm.channel import (ChannelPath, ChannelRealization, DopplerProfile, build_effective_matrix,
                          build_time_domain_matrix, channel_autocorrelation, sample_jakes_paths, stack_tap_gains)
from afdm.errors import DimensionError
from afdm.estimator import (BemMmseEstimator, CovarianceSet, NaiveMmseEstimator, PilotDictionary,
                            bem_interference_covariance, bem_prior_covariance, build_covariance_set,
                            build_pilot_dictionary, mmse_estimate, mmse_gain, naive_mmse_estimate, signal_dictionary)
from afdm.frame import design_pilot_frame
from afdm.transforms import AfdmGrid
from afdm.utils.linalg import is_hermitian, is_psd


def make_estimator(snr_p_db=30.0, noise_var=0.01, n=64, alpha_max=1.0, pilot_power=None):
    if pilot_power is None:
        pilot_power = noise_var * 10 ** (snr_p_db / 10)
    grid = AfdmGrid.recommended(n, alpha_max=1, k_nu=1)
    basis = build_basis(n, order=4, oversampling=2)
    profile = DopplerProfile.uniform(alpha_max, [0, 1, 2])
    frame = design_pilot_frame(grid, order=4, l_max=2, pilot_power=pilot_power)
    covariances = build_covariance_set(frame, grid, basis, profile, num_taps=3, noise_var=noise_var)
    dictionary = build_pilot_dictionary(frame, grid, basis, num_taps=3)
    return BemMmseEstimator(dictionary, covariances, basis, grid), frame


@pytest.fixture(scope="module")
def estimator_and_frame():
    return make_estimator()


class TestCovariances:
    """Second-order statistics of the observation."""

    def test_all_covariances_are_psd(self, estimator_and_frame):
        cov = estimator_and_frame[0].covariances
        for name in ("r_g", "r_d", "r_z"):
            m = getattr(cov, name)
            assert is_hermitian(m), name
            assert is_psd(m, rtol=1e-8), name

    def test_restrictions_have_window_size(self, estimator_and_frame):
        cov = estimator_and_frame[0].covariances
        assert cov.r_d_p.shape == (30, 30)
        assert cov.r_z_p.shape == (30, 30)
        np.testing.assert_allclose(cov.r_w_p, 0.01 * np.eye(30))

    def test_prior_covariance_size_check(self):
        basis = build_basis(16, order=2, oversampling=2)
        with pytest.raises(DimensionError):
            bem_prior_covariance(np.eye(10), basis, num_taps=2)

    def test_prior_covariance_recovers_coefficient_covariance(self):
        """Test R_g = C when R_hh = Θ C Θᴴ."""
        rng = np.random.default_rng(21)
        basis = build_basis(64, order=4, oversampling=2)
        m = rng.standard_normal((15, 15)) + 1j * rng.standard_normal((15, 15))
        c = m @ m.conj().T / 15
        theta = basis.theta(3)
        np.testing.assert_allclose(bem_prior_covariance(theta @ c @ theta.conj().T, basis, 3), c, atol=1e-8)

    def test_prior_covariance_matches_ls_fit_samples(self):
        """Test R_g against the sample covariance of LS-fit coefficients of 5000 Jakes channels."""
        n, num_taps, draws = 16, 2, 5000
        basis = build_basis(n, order=2, oversampling=2)
        profile = DopplerProfile.uniform(1.0, [0, 1])
        _, r_hh = channel_autocorrelation(profile, n)
        rng = np.random.default_rng(12)
        acc = np.zeros((basis.num_basis * num_taps,) * 2, dtype=complex)
        for _ in range(draws):
            g = fit_coefficients(sample_jakes_paths(profile, rng, n).tap_gains(num_taps), basis).g
            acc += np.outer(g, g.conj())
        r_g = bem_prior_covariance(r_hh, basis, num_taps)
        assert np.max(np.abs(acc / draws - r_g)) < 0.1 * np.max(np.abs(r_g))

    @pytest.mark.parametrize("n", [16, 15])
    def test_interference_covariance_is_exact_expectation(self, n):
        """Test E{Ψ(x) g gᴴ Ψ(x)ᴴ} against Σ_k λ_k M(u_k) R_x M(u_k)ᴴ over the eigenpairs of R_g."""
        rng = np.random.default_rng(n)
        num_taps = 2
        grid = AfdmGrid.recommended(n, alpha_max=0, k_nu=1)
        basis = build_basis(n, order=2, oversampling=2)
        m = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        r_g = m @ m.conj().T / 6
        w = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        r_x = w @ w.conj().T / n
        a = grid.daft_matrix

        expected = np.zeros((n, n), dtype=complex)
        lam, vecs = np.linalg.eigh(r_g)
        for k in range(6):
            coeffs = BemCoefficients(g=vecs[:, k], order=2, num_taps=num_taps)
            h_eff = a @ reconstruct_channel_taps(coeffs, basis, grid) @ a.conj().T
            expected += lam[k] * h_eff @ r_x @ h_eff.conj().T
        actual = bem_interference_covariance(grid, basis, r_x, r_g, num_taps)
        np.testing.assert_allclose(actual, expected, atol=1e-9 * np.max(np.abs(expected)))

    def test_interference_covariance_size_check(self):
        grid = AfdmGrid.recommended(16, alpha_max=0, k_nu=1)
        basis = build_basis(16, order=2, oversampling=2)
        with pytest.raises(DimensionError):
            bem_interference_covariance(grid, basis, np.eye(16), np.eye(5), num_taps=2)


class TestBemMmseEstimator:
    """Gain, closed-form NMSE and estimates."""

    def test_gram_dimension_is_window_size(self, estimator_and_frame):
        estimator, frame = estimator_and_frame
        assert estimator.gram_dim == 2 * frame.q_guard + 2
        assert estimator.diagnostics.gram_dim == 30
        assert estimator.gain.shape == (15, 30)

    def test_closed_form_nmse_split(self, estimator_and_frame):
        d = estimator_and_frame[0].diagnostics
        assert 0 < d.nmse_model_floor < d.nmse_total < 1
        assert d.nmse_total == pytest.approx(d.nmse_model_floor + d.nmse_estimation)
        assert set(d.to_dict()) == {'gram_dim', 'gram_condition', 'nmse_model_floor', 'nmse_estimation',
                                    'nmse_total'}

    def test_nmse_decreases_with_pilot_power(self):
        low, _ = make_estimator(snr_p_db=20.0)
        high, _ = make_estimator(snr_p_db=35.0)
        assert high.nmse_closed_form < low.nmse_closed_form
        assert high.diagnostics.nmse_model_floor == pytest.approx(low.diagnostics.nmse_model_floor)

    def test_nmse_increases_with_doppler(self):
        slow, _ = make_estimator(alpha_max=0.2)
        fast, _ = make_estimator(alpha_max=1.0)
        assert slow.nmse_closed_form < fast.nmse_closed_form

    def test_error_covariance_is_psd_and_below_prior(self, estimator_and_frame):
        estimator = estimator_and_frame[0]
        r_g_tilde, r_g = estimator.r_g_tilde, estimator.covariances.r_g
        assert is_hermitian(r_g_tilde)
        assert is_psd(r_g_tilde, rtol=1e-8)
        assert np.trace(r_g_tilde).real <= np.trace(r_g).real

    def test_closed_form_nmse_grows_with_noise(self):
        noise_grid = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0]
        nmse = [make_estimator(noise_var=v, pilot_power=1.0)[0].nmse_closed_form for v in noise_grid]
        assert all(lo < hi for lo, hi in zip(nmse, nmse[1:]))
        assert nmse[-1] < 1.0

    def test_error_is_orthogonal_to_estimate(self, estimator_and_frame):
        """Test E{(g − ĝ) ĝᴴ} = R_g Ψᴴ Vᴴ − V (Ψ R_g Ψᴴ + R_dist) Vᴴ = 0."""
        estimator = estimator_and_frame[0]
        cov = estimator.covariances
        psi = estimator.dictionary.psi_pp
        gram = psi @ cov.r_g @ psi.conj().T + cov.r_d_p + cov.r_z_p + cov.r_w_p
        v = estimator.gain
        cross = cov.r_g @ psi.conj().T @ v.conj().T - v @ gram @ v.conj().T
        assert np.max(np.abs(cross)) < 1e-6 * np.max(np.abs(cov.r_g))

    def test_estimate_vanishes_as_noise_grows(self):
        y_p = np.ones(30, dtype=complex)
        quiet, _ = make_estimator(noise_var=1e-2, pilot_power=1.0)
        loud, _ = make_estimator(noise_var=1e8, pilot_power=1.0)
        g_quiet = np.linalg.norm(quiet.estimate(y_p).g_hat.g)
        g_loud = np.linalg.norm(loud.estimate(y_p).g_hat.g)
        assert g_loud < 1e-6
        assert g_loud < 1e-4 * g_quiet

    def test_estimate_shapes(self, estimator_and_frame):
        estimator, _ = estimator_and_frame
        result = estimator.estimate(np.ones(30, dtype=complex))
        assert result.g_hat.blocks.shape == (5, 3)
        assert result.h_hat.shape == (64, 64)
        assert result.h_eff_hat.shape == (64, 64)
        assert result.nmse_closed_form == estimator.nmse_closed_form

    def test_estimate_wrong_window(self, estimator_and_frame):
        with pytest.raises(DimensionError):
            estimator_and_frame[0].estimate(np.ones(64))

    def test_one_shot_matches_class(self, estimator_and_frame):
        estimator, _ = estimator_and_frame
        y_p = np.arange(30) * (1 - 0.5j)
        one_shot = mmse_estimate(y_p, estimator.dictionary, estimator.covariances, estimator.basis, estimator.grid)
        np.testing.assert_allclose(one_shot.g_hat.g, estimator.estimate(y_p).g_hat.g)

    def test_noiseless_estimate_of_in_span_channel(self):
        """Test that a constant channel is recovered from a high-SNR pilot-only observation."""
        grid = AfdmGrid.recommended(64, alpha_max=1, k_nu=1)
        basis = build_basis(64, order=4, oversampling=2)
        frame = design_pilot_frame(grid, order=4, l_max=2, pilot_power=1.0)
        # σ_w² much below 1e-6 drives the Gram condition number past the degeneracy limit
        covariances = build_covariance_set(frame, grid, basis, DopplerProfile.uniform(0.2, [0, 1, 2]), num_taps=3,
                                           noise_var=1e-6, data_power=0.0)
        estimator = BemMmseEstimator(build_pilot_dictionary(frame, grid, basis, 3), covariances, basis, grid)
        taps = np.zeros((3, 64), dtype=complex)
        taps[0], taps[2] = 0.9, 0.3j
        g = fit_coefficients(taps, basis)
        h = reconstruct_channel_taps(g, basis, grid)
        a = grid.daft_matrix
        y = a @ h @ a.conj().T @ frame.pilot_vector()
        result = estimator.estimate(y[frame.obs_indices])
        assert np.linalg.norm(result.h_hat - h) / np.linalg.norm(h) < 1e-3


@pytest.mark.parametrize("n", [16, 15])
def test_dictionary_linearizes_bem_channel(n):
    """Test Ψ(x) g = A H_bem(g) Aᴴ x, including the prefix phase of odd N."""
    rng = np.random.default_rng(5)
    grid = AfdmGrid.recommended(n, alpha_max=0, k_nu=1)
    basis = build_basis(n, order=2, oversampling=2)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    blocks = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    coeffs = BemCoefficients.from_blocks(blocks)
    a = grid.daft_matrix
    direct = a @ reconstruct_channel_taps(coeffs, basis, grid) @ a.conj().T @ x
    np.testing.assert_allclose(signal_dictionary(grid, basis, x, 2) @ coeffs.g, direct, atol=1e-10)


def test_naive_dictionary_matches_odd_n_channel():
    """Test that the naive estimator recovers a static tap-1 channel at odd N, where wrapped samples flip sign."""
    n = 15
    grid = AfdmGrid.recommended(n, alpha_max=0, k_nu=1)
    profile = DopplerProfile.uniform(0.0, [0, 1])
    _, r_hh = channel_autocorrelation(profile, n)
    pilot = np.zeros(n, dtype=complex)
    pilot[2] = 10.0
    realization = ChannelRealization(n_subcarriers=n, paths=(ChannelPath(gain=0.7, delay=0, doppler=0.0),
                                                             ChannelPath(gain=-0.4j, delay=1, doppler=0.0)))
    h_eff = build_effective_matrix(build_time_domain_matrix(realization, grid), grid)
    estimate = naive_mmse_estimate(h_eff @ pilot, grid, pilot, r_hh, noise_var=1e-6, num_taps=2)
    np.testing.assert_allclose(estimate, stack_tap_gains(realization.tap_gains(2)), atol=1e-3)


def test_estimate_equals_gaussian_conditional_mean():
    """Test ĝ against E{g | y} from the joint covariance of (g, y) with no data and no model error."""
    rng = np.random.default_rng(17)
    n, num_taps, noise_var = 8, 2, 0.05
    grid = AfdmGrid.recommended(n, alpha_max=0, k_nu=0)
    basis = build_basis(n, order=2, oversampling=2)
    pilot = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    psi = signal_dictionary(grid, basis, pilot, num_taps)
    profile = DopplerProfile.uniform(0.5, [0, 1])
    per_tap, r_hh = channel_autocorrelation(profile, n)
    r_g = bem_prior_covariance(r_hh, basis, num_taps)
    zeros = np.zeros((n, n), dtype=complex)
    covariances = CovarianceSet(r_hh_taps=per_tap, r_hh=r_hh, r_mod_taps=np.zeros_like(per_tap), r_g=r_g, r_d=zeros,
                                r_z=zeros, r_x_d=zeros, noise_var=noise_var, obs_indices=np.arange(n))
    dictionary = PilotDictionary(psi_p=psi, obs_indices=np.arange(n), num_taps=num_taps)
    estimator = BemMmseEstimator(dictionary, covariances, basis, grid)

    y = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    c_gy = r_g @ psi.conj().T
    c_yy = psi @ r_g @ psi.conj().T + noise_var * np.eye(n)
    expected = c_gy @ np.linalg.solve(c_yy, y)
    np.testing.assert_allclose(estimator.estimate(y).g_hat.g, expected, atol=1e-8)


def test_mmse_gain_returns_gram():
    psi = np.eye(3, dtype=complex)
    gain, gram, cond = mmse_gain(psi, 2.0 * np.eye(3), np.eye(3))
    np.testing.assert_allclose(gain, 2.0 / 3.0 * np.eye(3))
    np.testing.assert_allclose(gram, 3.0 * np.eye(3))
    assert cond == pytest.approx(1.0)


def test_naive_estimator_dimensions():
    grid = AfdmGrid.recommended(16, alpha_max=1, k_nu=1)
    _, r_hh = channel_autocorrelation(DopplerProfile.uniform(1.0, [0, 1]), 16)
    pilot = np.zeros(16, dtype=complex)
    pilot[3] = 4.0
    naive = NaiveMmseEstimator(grid, pilot, r_hh, noise_var=0.01, num_taps=2)
    assert naive.gram_dim == 16
    y = np.ones(16, dtype=complex)
    estimate = naive.estimate(y)
    assert estimate.shape == (32,)
    np.testing.assert_allclose(naive_mmse_estimate(y, grid, pilot, r_hh, 0.01, 2), estimate)


@pytest.mark.slow
def test_interference_covariances_match_monte_carlo():
    """Test R_d and R_z against outer-product averages over Jakes channels and random data."""
    n, num_taps, draws = 16, 2, 20000
    grid = AfdmGrid.recommended(n, alpha_max=0, k_nu=0)
    basis = build_basis(n, order=2, oversampling=2)
    profile = DopplerProfile.uniform(0.5, [0, 1])
    frame = design_pilot_frame(grid, order=2, l_max=1, pilot_power=2.0)
    cov = build_covariance_set(frame, grid, basis, profile, num_taps, noise_var=0.1)
    a = grid.daft_matrix
    qpsk = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2)
    rng = np.random.default_rng(8)

    acc_d = np.zeros((n, n), dtype=complex)
    acc_z = np.zeros((n, n), dtype=complex)
    rows = np.arange(n)
    for _ in range(draws):
        taps = sample_jakes_paths(profile, rng, n).tap_gains(num_taps)
        coeffs = fit_coefficients(taps, basis)
        x_d = np.zeros(n, dtype=complex)
        x_d[frame.data_indices] = rng.choice(qpsk, size=frame.num_data)
        d = signal_dictionary(grid, basis, x_d, num_taps) @ coeffs.g
        acc_d += np.outer(d, d.conj())

        h = np.zeros((n, n), dtype=complex)
        for l in range(num_taps):
            h[rows, (rows - l) % n] += taps[l]
        h_mod = h - reconstruct_channel_taps(coeffs, basis)
        z = a @ h_mod @ a.conj().T @ (frame.pilot_vector() + x_d)
        acc_z += np.outer(z, z.conj())

    for mc, closed in ((acc_d / draws, cov.r_d), (acc_z / draws, cov.r_z)):
        assert np.max(np.abs(mc - closed)) < 0.1 * np.max(np.abs(closed))
