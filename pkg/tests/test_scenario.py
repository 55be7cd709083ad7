"""Tests for scene generation and ground-truth imbalance timelines."""

import numpy as np
import pytest

from vacal import ArrayGeometry, split_linear_phase
from vacal.harness import (
    ImbalanceSpec,
    SbbInjection,
    ScenarioConfig,
    draw_profile_timeline,
    generate_scene,
)
from vacal.harness.scenario import draw_targets, scene_batch
from vacal.nlms import fit_phase_line

GEOM = ArrayGeometry(3, 4, 0.5)


class TestConfigValidation:
    def test_default_config_is_valid(self):
        cfg = ScenarioConfig()
        assert cfg.geom.k == 12
        assert sum(cfg.primary_count_pmf.values()) == pytest.approx(1.0)

    def test_pmf_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            ScenarioConfig(primary_count_pmf={1: 0.5, 2: 0.4})

    def test_ranges_must_be_ordered(self):
        with pytest.raises(ValueError):
            ScenarioConfig(primary_amp_db_range=(0.0, -10.0))

    def test_unknown_imbalance_kind(self):
        with pytest.raises(ValueError):
            ImbalanceSpec(kind="sinusoidal")


class TestTargetDraws:
    def test_primary_count_frequencies_match_pmf(self):
        # 1e5 draws: each empirical frequency within +/-1% absolute.
        cfg = ScenarioConfig(seed=42)
        rng = np.random.default_rng(42)
        counts = np.zeros(6)
        n = 100_000
        batch = scene_batch(cfg, rng, n)
        for q in batch["q1s"]:
            counts[q] += 1
        freqs = counts[1:] / n
        expected = [0.40, 0.30, 0.15, 0.10, 0.05]
        for got, want in zip(freqs, expected):
            assert abs(got - want) < 0.01

    def test_secondary_amplitudes_relative_to_dominant(self):
        cfg = ScenarioConfig(seed=7)
        rng = np.random.default_rng(7)
        checked = 0
        for _ in range(2000):
            targets = draw_targets(cfg, rng)
            q = targets.q
            # Primary dominant is the overall strongest by construction.
            dominant = np.abs(targets.amplitudes).max()
            rel_db = 20 * np.log10(np.abs(targets.amplitudes) / dominant)
            weak = rel_db[rel_db < -10.0]
            checked += weak.size
            assert np.all(weak >= -20.0)
        assert checked > 1000

    def test_frequencies_stay_in_half_open_domain(self):
        cfg = ScenarioConfig(seed=9, doa_range_deg=(-90.0, 90.0))
        rng = np.random.default_rng(9)
        for _ in range(500):
            targets = draw_targets(cfg, rng)
            assert np.all(targets.frequencies >= -0.5)
            assert np.all(targets.frequencies < 0.5)

    def test_single_target_forced_by_degenerate_pmf(self):
        cfg = ScenarioConfig(
            primary_count_pmf={1: 1.0}, secondary_count_pmf={0: 1.0}, seed=1
        )
        targets = draw_targets(cfg, np.random.default_rng(1))
        assert targets.q == 1


class TestProfileTimeline:
    def test_random_profile_is_detrended_and_referenced(self):
        cfg = ScenarioConfig(seed=3)
        timeline = draw_profile_timeline(cfg, np.random.default_rng(3))
        assert not timeline.varying
        xi = timeline.psi_rows[0]
        assert xi[0] == 1.0 + 0j
        f_delta, _ = split_linear_phase(np.unwrap(np.angle(xi)))
        assert abs(f_delta) < 1e-12

    def test_heatup_profile_ramps_and_freezes(self):
        cfg = ScenarioConfig(
            imbalance=ImbalanceSpec(kind="heatup", tau=100.0, ramp_iterations=200),
            n_iterations=400,
            seed=5,
        )
        timeline = draw_profile_timeline(cfg, np.random.default_rng(5))
        assert timeline.varying
        phases = timeline.phase_rows[:, :12]
        scale_50 = np.abs(phases[49]).max()
        scale_200 = np.abs(phases[199]).max()
        assert scale_50 < scale_200
        np.testing.assert_allclose(phases[200], phases[399], atol=1e-12)
        gains = timeline.gain_rows[:, :12]
        np.testing.assert_allclose(gains[0], gains[-1], atol=1e-12)

    def test_heatup_truth_slope_is_zero_every_iteration(self):
        cfg = ScenarioConfig(
            imbalance=ImbalanceSpec(kind="heatup"), n_iterations=100, seed=6
        )
        timeline = draw_profile_timeline(cfg, np.random.default_rng(6))
        for i in (0, 49, 99):
            assert abs(fit_phase_line(timeline.phase_rows[i, :12]).p1) < 1e-12

    def test_sbb_injection_switches_truth(self):
        cfg = ScenarioConfig(
            sbb_injection=SbbInjection(side="rx", index=3, offset_deg=30.0, at_iteration=50),
            n_iterations=100,
            imbalance=ImbalanceSpec(phase_range_deg=(0.0, 0.0), gain_range=(0.0, 0.0)),
            seed=8,
        )
        timeline = draw_profile_timeline(cfg, np.random.default_rng(8))
        assert timeline.varying
        before = timeline.psi_rows[48]
        after = timeline.psi_rows[49]
        np.testing.assert_allclose(before, np.ones(12), atol=1e-12)
        mask = np.arange(12) % 4 == 2
        np.testing.assert_allclose(
            after[mask] / before[mask], np.exp(1j * np.deg2rad(30.0)), atol=1e-12
        )
        np.testing.assert_allclose(after[~mask], before[~mask], atol=1e-12)

    def test_explicit_profile(self):
        xi_t = (1.0, 1.1 * np.exp(0.1j), 0.9)
        xi_r = (1.0, 1.0, 1.0, np.exp(-0.2j))
        cfg = ScenarioConfig(
            imbalance=ImbalanceSpec(kind="explicit", xi_t=xi_t, xi_r=xi_r, detrend=False)
        )
        timeline = draw_profile_timeline(cfg, np.random.default_rng(0))
        np.testing.assert_allclose(
            timeline.psi_rows[0], np.kron(np.asarray(xi_t), np.asarray(xi_r)), atol=1e-12
        )


class TestGenerateScene:
    def test_measured_vector_composition(self):
        cfg = ScenarioConfig(noise_enabled=False, seed=11)
        rng = np.random.default_rng(11)
        targets, prof, measured = generate_scene(cfg, rng)
        from vacal.array_model import synthesize_targets

        expected = prof.psi * synthesize_targets(targets.amplitudes, targets.frequencies, 12)
        np.testing.assert_allclose(measured.samples, expected, atol=1e-12)

    def test_noise_scale_follows_dominant_amplitude(self):
        cfg = ScenarioConfig(
            snr_db=20.0,
            primary_count_pmf={1: 1.0},
            secondary_count_pmf={0: 1.0},
            seed=12,
        )
        rng = np.random.default_rng(12)
        acc = 0.0
        n = 4000
        from vacal.array_model import synthesize_targets

        for _ in range(n):
            targets, prof, measured = generate_scene(cfg, rng)
            clean = prof.psi * synthesize_targets(
                targets.amplitudes, targets.frequencies, 12
            )
            peak2 = float(np.abs(targets.amplitudes).max()) ** 2
            acc += float(np.mean(np.abs(measured.samples - clean) ** 2)) / peak2
        # Per-element noise variance over dominant power = 10^(-SNR/10).
        assert acc / n == pytest.approx(0.01, rel=0.1)
