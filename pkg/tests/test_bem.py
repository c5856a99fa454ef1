"""Tests for the GCE-BEM basis and coefficient handling."""

import numpy as np
import pytest

from afdm.bem import (BemCoefficients, build_basis, fit_coefficients, fit_residual, min_bem_order,
                      model_error_covariance, reconstruct_channel, reconstruct_channel_taps, reconstruct_taps)
from afdm.channel import (ChannelPath, ChannelRealization, DopplerProfile, build_time_domain_matrix,
                          channel_autocorrelation, sample_jakes_paths)
from afdm.errors import DimensionError, ParameterError
from afdm.transforms import AfdmGrid


@pytest.fixture
def basis():
    return build_basis(64, order=4, oversampling=2)


@pytest.mark.parametrize("alpha, r, expected", [(1.0, 2, 4), (0.2, 2, 2), (0.0, 2, 0), (0.6, 2, 4), (1.0, 1, 2)])
def test_min_bem_order(alpha, r, expected):
    assert min_bem_order(alpha, r) == expected


def test_min_bem_order_rejects_bad_input():
    with pytest.raises(ParameterError):
        min_bem_order(-0.5, 2)
    with pytest.raises(ParameterError):
        min_bem_order(1.0, 0)


def test_aliased_basis_rejected():
    """Test Q ≥ RN is refused."""
    with pytest.raises(ParameterError):
        build_basis(4, order=8, oversampling=2)


def test_basis_frequencies(basis):
    np.testing.assert_allclose(basis.frequencies(), (np.arange(5) - 2) / 128)
    np.testing.assert_allclose(basis.basis_matrix[1, :], np.exp(2j * np.pi * basis.frequencies()))
    assert basis.num_basis == 5


def test_projector_complement(basis):
    """Test Φ annihilates the basis and is an orthogonal projector."""
    phi = basis.projector_complement
    assert np.max(np.abs(phi @ basis.basis_matrix)) < 1e-9
    np.testing.assert_allclose(phi @ phi, phi, atol=1e-9)
    np.testing.assert_allclose(phi, phi.conj().T, atol=1e-12)


def test_theta_kron_layout(basis):
    theta = basis.theta(3)
    assert theta.shape == (64 * 3, 5 * 3)
    assert theta[3 * 10 + 2, 3 * 4 + 2] == pytest.approx(basis.basis_matrix[10, 4])
    assert theta[3 * 10 + 1, 3 * 4 + 2] == 0
    np.testing.assert_allclose(basis.theta_pinv(3) @ theta, np.eye(15), atol=1e-9)


class TestCoefficients:
    """Fitting and reconstruction."""

    @pytest.fixture
    def coeffs(self):
        rng = np.random.default_rng(3)
        return BemCoefficients(g=rng.standard_normal(15) + 1j * rng.standard_normal(15), order=4, num_taps=3)

    def test_blocks_round_trip(self, coeffs):
        assert coeffs.blocks.shape == (5, 3)
        rebuilt = BemCoefficients.from_blocks(coeffs.blocks)
        assert (rebuilt.order, rebuilt.num_taps) == (4, 3)
        np.testing.assert_array_equal(rebuilt.g, coeffs.g)

    def test_size_and_finiteness_checks(self):
        with pytest.raises(DimensionError):
            BemCoefficients(g=np.zeros(7), order=4, num_taps=3)
        with pytest.raises(ParameterError):
            BemCoefficients(g=np.full(15, np.nan), order=4, num_taps=3)

    def test_in_span_taps_fit_exactly(self, basis, coeffs):
        taps = reconstruct_taps(coeffs, basis)
        fitted = fit_coefficients(taps, basis)
        np.testing.assert_allclose(fitted.g, coeffs.g, atol=1e-9)
        assert np.max(np.abs(fit_residual(taps, basis))) < 1e-9

    def test_matrix_and_entrywise_reconstruction_agree(self, basis, coeffs):
        grid = AfdmGrid.recommended(64, alpha_max=1, k_nu=1)
        np.testing.assert_allclose(reconstruct_channel(coeffs, basis, grid), reconstruct_channel_taps(coeffs, basis),
                                   atol=1e-9)

    def test_odd_n_reconstruction_carries_prefix_phase(self):
        """Test that for odd N both reconstructions flip the sign of wrapped entries, like the true channel."""
        n = 63
        grid = AfdmGrid.recommended(n, alpha_max=1, k_nu=1)
        basis = build_basis(n, order=4, oversampling=2)
        paths = (ChannelPath(gain=0.8, delay=0, doppler=0.0), ChannelPath(gain=0.5j, delay=2, doppler=0.0))
        realization = ChannelRealization(n_subcarriers=n, paths=paths)
        coeffs = fit_coefficients(realization.tap_gains(3), basis)

        h_true = build_time_domain_matrix(realization, grid)
        np.testing.assert_allclose(reconstruct_channel_taps(coeffs, basis, grid), h_true, atol=1e-9)
        np.testing.assert_allclose(reconstruct_channel(coeffs, basis, grid), h_true, atol=1e-9)
        assert h_true[0, n - 2] == pytest.approx(-0.5j)
        assert reconstruct_channel_taps(coeffs, basis)[0, n - 2] == pytest.approx(0.5j)

    def test_reconstructed_matrix_places_taps(self, basis, coeffs):
        h = reconstruct_channel_taps(coeffs, basis)
        taps = reconstruct_taps(coeffs, basis)
        assert h[10, 8] == pytest.approx(taps[2, 10])
        assert h[0, 62] == pytest.approx(taps[2, 0])
        assert h[10, 5] == 0

    def test_order_mismatch(self, coeffs):
        with pytest.raises(DimensionError):
            reconstruct_taps(coeffs, build_basis(64, order=2, oversampling=2))


def test_model_error_covariance_trace(basis):
    """Test tr{Φ R Φᴴ} = tr{Φ R} for each tap and the stacked form."""
    per_tap, _ = channel_autocorrelation(DopplerProfile.uniform(1.0, [0, 1, 2]), 64)
    r_mod = model_error_covariance(basis, per_tap)
    assert r_mod.shape == per_tap.shape
    for l in range(3):
        assert np.trace(r_mod[l]).real == pytest.approx(np.trace(basis.projector_complement @ per_tap[l]).real)
    with pytest.raises(DimensionError):
        model_error_covariance(basis, np.eye(8))


@pytest.mark.slow
def test_residual_fraction_matches_closed_form(basis):
    """Test the empirical modeling-error fraction ‖Φh_l‖²/‖h_l‖² against tr{ΦR_hh,l}/tr{R_hh,l}."""
    profile = DopplerProfile.uniform(1.0, [0, 1, 2])
    per_tap, _ = channel_autocorrelation(profile, 64)
    expected = np.trace(basis.projector_complement @ per_tap[0]).real / np.trace(per_tap[0]).real
    rng = np.random.default_rng(99)
    fractions = []
    for _ in range(2000):
        taps = sample_jakes_paths(profile, rng, 64).tap_gains(3)
        residual = fit_residual(taps, basis)
        fractions.extend(np.sum(np.abs(residual) ** 2, axis=1) / np.sum(np.abs(taps) ** 2, axis=1))
    assert np.mean(fractions) == pytest.approx(expected, rel=0.05)
