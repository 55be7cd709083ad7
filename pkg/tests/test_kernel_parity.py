"""Equivalence of the compiled trial kernels with the reference pipelines.

The kernels re-implement predistortion, CLEAN, NLMS, normalization,
detrending, and factorization for speed; these tests pin them to the
plain-numpy reference implementations on shared inputs.
"""

import numpy as np
import pytest

from vacal import ArrayGeometry, CleanConfig, EstimatorConfig, SbbConfig
from vacal.factorization import estimate_txrx_gpi
from vacal.harness import CalibrationPipeline, CombinedPipeline
from vacal.harness import _kernels
from vacal.harness.scenario import ImbalanceSpec, ScenarioConfig, draw_profile_timeline, scene_batch
from vacal.nlms import normalize_and_detrend, schedule_per_iteration
from vacal.reconstruction import clean_core, dft_operator

GEOM = ArrayGeometry(3, 4, 0.5)
CLEAN = CleanConfig(1024, -15.0, 10)
K = 12


def _random_vectors(rng, n):
    out = np.empty((n, K), dtype=complex)
    for i in range(n):
        q = int(rng.integers(1, 5))
        amps = 10 ** (rng.uniform(-10, 0, q) / 20) * np.exp(1j * rng.uniform(-np.pi, np.pi, q))
        freqs = 0.5 * np.sin(np.deg2rad(rng.uniform(-90, 90, q)))
        out[i] = amps @ np.exp(2j * np.pi * np.outer(freqs, np.arange(K)))
        out[i] += 0.05 * (rng.standard_normal(K) + 1j * rng.standard_normal(K))
    return out


class TestCleanParity:
    def test_kernel_clean_matches_reference(self):
        rng = np.random.default_rng(0)
        w, grid = dft_operator(CLEAN.fft_len, K)
        amps_buf = np.empty(10, dtype=complex)
        freqs_buf = np.empty(10)
        for _ in range(50):
            x = _random_vectors(rng, 1)[0]
            ref_amps, ref_freqs = clean_core(
                x, CLEAN.fft_len, CLEAN.stop_ratio_linear, CLEAN.max_targets
            )
            n_found = _kernels._clean(
                x.copy(), w, grid, CLEAN.stop_ratio_linear, CLEAN.max_targets,
                amps_buf, freqs_buf,
            )
            assert n_found == len(ref_amps)
            np.testing.assert_allclose(amps_buf[:n_found], ref_amps, atol=1e-12)
            np.testing.assert_array_equal(freqs_buf[:n_found], ref_freqs)


class TestCanonParity:
    def test_kernel_canon_matches_normalize_and_detrend(self):
        rng = np.random.default_rng(1)
        xi = np.empty(K, dtype=complex)
        gamma = np.empty(K)
        phi = np.empty(K)
        for _ in range(100):
            psi = (1.0 + rng.uniform(-0.4, 0.4, K)) * np.exp(1j * rng.uniform(-2.0, 2.0, K))
            _kernels._canon(psi, xi, gamma, phi)
            xi_ref, gamma_ref, phi_ref = normalize_and_detrend(psi)
            np.testing.assert_allclose(xi, xi_ref, atol=1e-12)
            np.testing.assert_allclose(gamma, gamma_ref, atol=1e-12)
            np.testing.assert_allclose(phi, phi_ref, atol=1e-12)


class TestTxRxParity:
    def test_kernel_txrx_matches_reference(self):
        rng = np.random.default_rng(2)
        gain = np.zeros(K + 7)
        phase = np.zeros(K + 7)
        for _ in range(50):
            xi = (1.0 + rng.uniform(-0.4, 0.4, K)) * np.exp(1j * rng.uniform(-1.0, 1.0, K))
            xi[0] = 1.0
            _kernels._txrx(xi, GEOM.k_t, GEOM.k_r, gain, phase, K)
            ref = estimate_txrx_gpi(xi, GEOM)
            np.testing.assert_allclose(gain[K : K + 3], ref.gamma_t, atol=1e-12)
            np.testing.assert_allclose(phase[K : K + 3], ref.phi_t, atol=1e-12)
            np.testing.assert_allclose(gain[K + 3 :], ref.gamma_r, atol=1e-12)
            np.testing.assert_allclose(phase[K + 3 :], ref.phi_r, atol=1e-12)


def _run_kernel_on_vectors(vectors, est_cfg, with_st=False, mu_fast=None, combined=None):
    """Drive calibration_trial in provided-vectors mode."""
    n = vectors.shape[0]
    w, grid = dft_operator(CLEAN.fft_len, K)
    mu_rows = schedule_per_iteration(est_cfg, n)
    dummy_f = np.zeros((1, 1))
    dummy_c = np.zeros((1, 1), dtype=complex)
    ones_row = np.ones((1, K), dtype=complex)
    zeros_row = np.zeros((1, K + 7))
    p_xi_trace = np.zeros((n, K), dtype=complex)
    s_xi_trace = np.zeros((n, K), dtype=complex)
    finals = [np.ones(K, dtype=complex) for _ in range(4)]
    _kernels.calibration_trial(
        w, grid, GEOM.spacing_over_lambda,
        np.ascontiguousarray(vectors), 1,
        np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64),
        dummy_f, dummy_f, dummy_f, dummy_f, dummy_c, 0, 0.0,
        ones_row, zeros_row, zeros_row, 0,
        mu_rows, CLEAN.stop_ratio_linear, CLEAN.max_targets,
        1, 1 if with_st else 0, 0, 0, 1, -1,
        GEOM.k_t, GEOM.k_r,
        dummy_f, dummy_f, np.zeros(1), p_xi_trace, finals[0], finals[1],
        dummy_f, dummy_f, s_xi_trace, finals[2], finals[3],
        np.zeros(K), np.zeros(K, dtype=complex), np.zeros(K, dtype=complex),
    )
    return finals, p_xi_trace, s_xi_trace


class TestTrialParity:
    def test_kernel_trajectory_matches_reference_pipeline(self):
        rng = np.random.default_rng(3)
        vectors = _random_vectors(rng, 40)
        est_cfg = EstimatorConfig(step_schedule=((1, 1.0), (20, 0.4)), k=K)
        finals, p_trace, _ = _run_kernel_on_vectors(vectors, est_cfg)
        pipe = CalibrationPipeline(GEOM, est_cfg, CLEAN)
        for i in range(40):
            pipe.step(vectors[i])
            np.testing.assert_allclose(p_trace[i], pipe.state.xi_hat, atol=1e-9)
        np.testing.assert_allclose(finals[0], pipe.state.psi_hat, atol=1e-9)
        np.testing.assert_allclose(finals[1], pipe.state.xi_hat, atol=1e-9)

    def test_kernel_st_gating_matches_reference(self):
        rng = np.random.default_rng(4)
        vectors = _random_vectors(rng, 40)
        est_cfg = EstimatorConfig.constant(0.5, K)
        finals, _, s_trace = _run_kernel_on_vectors(vectors, est_cfg, with_st=True)
        pipe = CalibrationPipeline(GEOM, est_cfg, CLEAN, single_target_only=True)
        for i in range(40):
            pipe.step(vectors[i])
            np.testing.assert_allclose(s_trace[i], pipe.state.xi_hat, atol=1e-9)
        np.testing.assert_allclose(finals[3], pipe.state.xi_hat, atol=1e-9)

    def test_st_identical_to_proposed_on_single_target_stream(self):
        # Noiseless single-target scenes: the gate always passes, so the
        # baseline trace must equal the unrestricted trace bit for bit.
        rng = np.random.default_rng(5)
        vectors = np.empty((30, K), dtype=complex)
        for i in range(30):
            f = 0.5 * np.sin(np.deg2rad(rng.uniform(-80, 80)))
            a = 10 ** (rng.uniform(-6, 0) / 20) * np.exp(1j * rng.uniform(-np.pi, np.pi))
            vectors[i] = a * np.exp(2j * np.pi * f * np.arange(K))
        est_cfg = EstimatorConfig.constant(0.5, K)
        finals, p_trace, s_trace = _run_kernel_on_vectors(vectors, est_cfg, with_st=True)
        np.testing.assert_array_equal(p_trace, s_trace)
        np.testing.assert_array_equal(finals[1], finals[3])


class TestSbbKernelParity:
    def test_combined_kernel_matches_reference_combined_pipeline(self):
        rng = np.random.default_rng(6)
        cfg = ScenarioConfig(
            imbalance=ImbalanceSpec(phase_range_deg=(-5.0, 5.0), gain_range=(-0.05, 0.05)),
            sbb_injection=None,
            n_iterations=30,
            seed=77,
        )
        timeline = draw_profile_timeline(cfg, rng)
        batch = scene_batch(cfg, rng, 30)
        w, grid = dft_operator(CLEAN.fft_len, K)
        est_cfg = EstimatorConfig.constant(0.1, K)
        sbb_cfg = SbbConfig(delta=15.0, mu_0_fast=3.0)
        mu_rows = schedule_per_iteration(est_cfg, 30)
        trace = np.zeros((30, 7))
        sigma_scale = 10.0 ** (-cfg.snr_db / 20.0)
        first, rx_mask, tx_mask, skips = _kernels.sbb_trial(
            w, grid, GEOM.spacing_over_lambda,
            batch["q1s"], batch["q2s"], batch["p_db"], batch["s_db"],
            batch["phases"], batch["doas"], batch["noise"], 1, sigma_scale,
            timeline.psi_rows, 0,
            mu_rows, sbb_cfg.mu_0_fast, 1,
            CLEAN.stop_ratio_linear, CLEAN.max_targets,
            float(np.deg2rad(sbb_cfg.delta)), GEOM.k_t, GEOM.k_r, 1, trace,
        )
        # Reference: rebuild the same measured vectors and drive the
        # reference combined pipeline.
        pipe = CombinedPipeline(GEOM, est_cfg, sbb_cfg, CLEAN)
        from vacal.array_model import synthesize_targets

        for i in range(30):
            q1, q2 = int(batch["q1s"][i]), int(batch["q2s"][i])
            db = np.concatenate(
                [
                    batch["p_db"][i, :q1],
                    batch["p_db"][i, :q1].max() + batch["s_db"][i, :q2],
                ]
            )
            amps = 10 ** (db / 20) * np.exp(1j * batch["phases"][i, : q1 + q2])
            freqs = 0.5 * np.sin(np.deg2rad(batch["doas"][i, : q1 + q2]))
            s = synthesize_targets(amps, freqs, K)
            sigma = 10 ** (db.max() / 20) * sigma_scale
            x = timeline.psi_rows[0] * s + sigma * batch["noise"][i]
            pipe.step(x)
            gpi = estimate_txrx_gpi(pipe.fast.xi_hat, GEOM)
            np.testing.assert_allclose(trace[i, :3], gpi.phi_t, atol=1e-9)
            np.testing.assert_allclose(trace[i, 3:], gpi.phi_r, atol=1e-9)
        assert first == -1
        assert skips == 0
