"""Tests for Tx/Rx factorization, break detection, and the combined runner."""

import numpy as np
import pytest

from vacal import (
    ArrayGeometry,
    CleanConfig,
    EstimatorConfig,
    ImbalanceProfile,
    NoiseModel,
    SbbConfig,
    SbbReport,
    SignalVector,
    TargetSet,
    TxRxGpi,
    apply_imbalance,
    estimate_txrx_gpi,
    factor_to_va,
    run_combined,
    sbb_check,
    synthesize_ideal,
)

GEOM = ArrayGeometry(k_t=3, k_r=4, spacing_over_lambda=0.5)


def _random_factors(rng, phase_deg=30.0, gain=0.3):
    phi_t = np.deg2rad(rng.uniform(-phase_deg, phase_deg, GEOM.k_t))
    phi_r = np.deg2rad(rng.uniform(-phase_deg, phase_deg, GEOM.k_r))
    g_t = rng.uniform(-gain, gain, GEOM.k_t)
    g_r = rng.uniform(-gain, gain, GEOM.k_r)
    phi_t[0] = phi_r[0] = g_t[0] = g_r[0] = 0.0
    return (1.0 + g_t) * np.exp(1j * phi_t), (1.0 + g_r) * np.exp(1j * phi_r)


class TestEstimateTxRxGpi:
    def test_all_ones_gives_zero_gpis(self):
        gpi = estimate_txrx_gpi(np.ones(12, dtype=complex), GEOM)
        np.testing.assert_array_equal(gpi.gamma_t, np.zeros(3))
        np.testing.assert_array_equal(gpi.phi_t, np.zeros(3))
        np.testing.assert_array_equal(gpi.gamma_r, np.zeros(4))
        np.testing.assert_array_equal(gpi.phi_r, np.zeros(4))

    def test_round_trip_through_kronecker(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            xi_t, xi_r = _random_factors(rng)
            gpi = estimate_txrx_gpi(factor_to_va(xi_t, xi_r), GEOM)
            np.testing.assert_allclose(gpi.xi_t, xi_t, atol=1e-9)
            np.testing.assert_allclose(gpi.xi_r, xi_r, atol=1e-9)

    def test_reference_elements_exactly_zero(self):
        rng = np.random.default_rng(1)
        xi_t, xi_r = _random_factors(rng)
        gpi = estimate_txrx_gpi(factor_to_va(xi_t, xi_r), GEOM)
        assert gpi.gamma_t[0] == 0.0 and gpi.phi_t[0] == 0.0
        assert gpi.gamma_r[0] == 0.0 and gpi.phi_r[0] == 0.0

    def test_separable_rows_and_columns_individually(self):
        # When the input factors exactly, every normalized row equals the
        # Tx factor and every normalized column equals the Rx factor, so
        # the averaging is a no-op.
        rng = np.random.default_rng(2)
        xi_t, xi_r = _random_factors(rng)
        xi = factor_to_va(xi_t, xi_r)
        matrix = xi.reshape((GEOM.k_r, GEOM.k_t), order="F")
        for r in range(GEOM.k_r):
            np.testing.assert_allclose(matrix[r, :] / matrix[r, 0], xi_t, atol=1e-12)
        for t in range(GEOM.k_t):
            np.testing.assert_allclose(matrix[:, t] / matrix[0, t], xi_r, atol=1e-12)

    def test_perturbation_error_is_first_order(self):
        rng = np.random.default_rng(3)
        xi_t, xi_r = _random_factors(rng)
        xi = factor_to_va(xi_t, xi_r)
        eps = 1e-3
        worst = 0.0
        for _ in range(20):
            noise = eps * (rng.standard_normal(12) + 1j * rng.standard_normal(12))
            gpi = estimate_txrx_gpi(xi + noise, GEOM)
            err = max(
                np.abs(gpi.xi_t - xi_t).max(),
                np.abs(gpi.xi_r - xi_r).max(),
            )
            worst = max(worst, err)
        assert worst < 10 * eps

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            estimate_txrx_gpi(np.ones(10, dtype=complex), GEOM)


class TestSbbCheck:
    def test_all_phases_zero_not_detected(self):
        gpi = TxRxGpi(np.zeros(3), np.zeros(3), np.zeros(4), np.zeros(4))
        report = sbb_check(gpi, SbbConfig(delta=15.0), iteration=7)
        assert not report.detected
        assert report.channel is None
        assert report.detection_iteration is None

    def test_thirty_degrees_on_third_rx(self):
        phi_r = np.zeros(4)
        phi_r[2] = np.deg2rad(30.0)
        gpi = TxRxGpi(np.zeros(3), np.zeros(3), np.zeros(4), phi_r)
        report = sbb_check(gpi, SbbConfig(delta=15.0), iteration=1003)
        assert report.detected
        assert report.channel == ("rx", 3)
        assert report.detection_iteration == 1003

    def test_boundary_is_strict(self):
        phi_t = np.zeros(3)
        phi_t[1] = np.deg2rad(14.9)
        gpi = TxRxGpi(np.zeros(3), phi_t, np.zeros(4), np.zeros(4))
        assert not sbb_check(gpi, SbbConfig(delta=15.0), iteration=1).detected

    def test_simultaneous_crossings_report_all_rx_first(self):
        phi_t = np.deg2rad(np.array([0.0, 20.0, 0.0]))
        phi_r = np.deg2rad(np.array([0.0, 0.0, -25.0, 18.0]))
        report = sbb_check(
            TxRxGpi(np.zeros(3), phi_t, np.zeros(4), phi_r),
            SbbConfig(delta=15.0),
            iteration=42,
        )
        assert report.channels == (("rx", 3), ("rx", 4), ("tx", 2))
        assert report.channel == ("rx", 3)

    def test_gains_are_ignored(self):
        gpi = TxRxGpi(np.full(3, 0.9), np.zeros(3), np.full(4, 0.9), np.zeros(4))
        assert not sbb_check(gpi, SbbConfig(delta=15.0), iteration=1).detected

    def test_report_consistency_enforced(self):
        with pytest.raises(ValueError):
            SbbReport(detected=True)


class TestRunCombined:
    CLEAN = CleanConfig(fft_len=256, stop_ratio_db=-15.0, max_targets=6)

    def _stream(self, rng, profile, n, sbb_at=None, offset_deg=30.0):
        """Noiseless random single/two-target vectors, break injected midway."""
        vectors = []
        for i in range(1, n + 1):
            prof = profile
            if sbb_at is not None and i >= sbb_at:
                mask = np.ones(4, dtype=complex)
                mask[2] = np.exp(1j * np.deg2rad(offset_deg))
                prof = ImbalanceProfile.from_factors(profile.xi_t, profile.xi_r * mask)
            q = int(rng.integers(1, 3))
            amps = 10 ** (rng.uniform(-6, 0, q) / 20) * np.exp(
                1j * rng.uniform(-np.pi, np.pi, q)
            )
            freqs = 0.5 * np.sin(np.deg2rad(rng.uniform(-80, 80, q)))
            ideal = synthesize_ideal(TargetSet(amps, freqs), GEOM)
            vectors.append(apply_imbalance(ideal, prof, NoiseModel(enabled=False)))
        return vectors

    def test_detects_injected_break(self):
        rng = np.random.default_rng(4)
        profile = ImbalanceProfile.from_factors(*_random_factors(rng, 4.0, 0.04))
        profile = profile.detrended(GEOM)
        stream = self._stream(rng, profile, 80, sbb_at=41)
        trace, report = run_combined(
            stream,
            GEOM,
            EstimatorConfig.constant(0.1, 12),
            SbbConfig(delta=15.0, mu_0_fast=3.0),
            self.CLEAN,
        )
        assert len(trace) == 80
        assert report.detected
        assert report.channel == ("rx", 3)
        assert report.detection_iteration >= 41
        assert report.detection_iteration <= 41 + 20

    def test_no_break_no_detection(self):
        rng = np.random.default_rng(5)
        profile = ImbalanceProfile.from_factors(*_random_factors(rng, 4.0, 0.04))
        profile = profile.detrended(GEOM)
        stream = self._stream(rng, profile, 60)
        _, report = run_combined(
            stream,
            GEOM,
            EstimatorConfig.constant(0.1, 12),
            SbbConfig(delta=15.0, mu_0_fast=3.0),
            self.CLEAN,
        )
        assert not report.detected

    def test_fast_bank_never_influences_predistortion(self):
        # The calibration trace of the combined structure must be identical
        # regardless of the fast bank's step size, because predistortion
        # consumes only the calibration estimate.
        rng = np.random.default_rng(6)
        profile = ImbalanceProfile.from_factors(*_random_factors(rng, 8.0, 0.08))
        profile = profile.detrended(GEOM)
        stream = self._stream(rng, profile, 40)
        calib_cfg = EstimatorConfig.constant(0.2, 12)
        trace_a, _ = run_combined(
            stream, GEOM, calib_cfg, SbbConfig(delta=15.0, mu_0_fast=3.0), self.CLEAN
        )
        trace_b, _ = run_combined(
            stream, GEOM, calib_cfg, SbbConfig(delta=15.0, mu_0_fast=0.5), self.CLEAN
        )
        for row_a, row_b in zip(trace_a, trace_b):
            np.testing.assert_array_equal(row_a.xi_hat_calibration, row_b.xi_hat_calibration)

    def test_detection_monotone_for_persistent_offset(self):
        # With a persistent offset well above the threshold and exact
        # reconstruction-quality streams, the fast estimate must end up
        # permanently above the threshold.
        rng = np.random.default_rng(7)
        profile = ImbalanceProfile.from_factors(np.ones(3), np.ones(4))
        stream = self._stream(rng, profile, 120, sbb_at=31)
        trace, report = run_combined(
            stream,
            GEOM,
            EstimatorConfig.constant(0.1, 12),
            SbbConfig(delta=15.0, mu_0_fast=3.0),
            self.CLEAN,
        )
        assert report.detected
        tail = [np.rad2deg(np.abs(row.fast_gpi.phi_r[2])) for row in trace[60:]]
        assert min(tail) > 15.0
