"""Sidelobe-level suppression (SLLS) evaluation.

Calibration quality is scored on an evaluation vector with known targets:
SLLS is the maximum sidelobe level of the uncalibrated spectrum minus that
of the calibrated spectrum, both in dB relative to their main peaks. The
sidelobe search region excludes a mainlobe guard of two aperture-resolution
bins around each true target frequency.
"""

from dataclasses import dataclass, field

import numpy as np

from ..array_model import ArrayGeometry, SignalVector, TargetSet, synthesize_targets
from ..errors import DegenerateSpectrumError
from ..nlms import EstimatorConfig, schedule_per_iteration
from ..reconstruction import CleanConfig, dft_operator
from . import _kernels
from .experiments import _TrialSpec, pool_map, run_single_trial, trial_seeds
from .scenario import ScenarioConfig

MAINLOBE_GUARD_APERTURE_BINS = 2.0


def _sidelobe_masks(freqs: np.ndarray, k: int, fft_len: int) -> tuple[np.ndarray, np.ndarray]:
    """(mainlobe mask, sidelobe mask) over the shifted frequency grid."""
    _, grid = dft_operator(fft_len, k)
    guard = MAINLOBE_GUARD_APERTURE_BINS / k
    main = np.zeros(fft_len, dtype=bool)
    for f in freqs:
        dist = np.abs(grid - f)
        dist = np.minimum(dist, 1.0 - dist)  # circular frequency distance
        main |= dist <= guard
    return main, ~main


def max_sidelobe_level_db(
    samples: np.ndarray, freqs: np.ndarray, fft_len: int
) -> float:
    """Max sidelobe level in dB relative to the main peak."""
    k = len(samples)
    w, _ = dft_operator(fft_len, k)
    mag = np.abs(w @ np.asarray(samples, dtype=complex))
    main, side = _sidelobe_masks(freqs, k, fft_len)
    if not side.any() or not main.any():
        raise DegenerateSpectrumError("no sidelobe region outside the mainlobe guards")
    peak = mag[main].max()
    if peak <= 0.0:
        raise DegenerateSpectrumError("no detectable main peak")
    return 20.0 * np.log10(mag[side].max() / peak)


def compute_slls(
    uncalibrated: SignalVector,
    calibration: np.ndarray,
    ideal_targets: TargetSet,
    fft_len: int,
) -> float:
    """SLLS in dB of a calibration vector on one evaluation vector."""
    x = uncalibrated.samples
    sll_uncal = max_sidelobe_level_db(x, ideal_targets.frequencies, fft_len)
    sll_cal = max_sidelobe_level_db(
        np.asarray(calibration, dtype=complex) * x, ideal_targets.frequencies, fft_len
    )
    return sll_uncal - sll_cal


@dataclass
class SllsStats:
    """Per-trial SLLS values and summaries for each calibration source."""

    values: dict[str, np.ndarray]
    mean: dict[str, float] = field(default_factory=dict)
    max: dict[str, float] = field(default_factory=dict)
    failures: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self):
        self.mean = {k: float(np.mean(v)) for k, v in self.values.items()}
        self.max = {k: float(np.max(v)) for k, v in self.values.items()}


def run_slls_study(
    scenario: ScenarioConfig,
    estimator_cfg: EstimatorConfig,
    clean_cfg: CleanConfig,
    eval_targets: TargetSet,
    workers: int = 1,
    include_st: bool = True,
) -> SllsStats:
    """Estimate imbalances per trial, then score calibrations on a
    noise-free evaluation vector distorted by that trial's ground truth.

    Scores three calibration sources per trial: the unrestricted
    estimator's final estimate ("proposed"), the single-target baseline's
    ("st", optional), and the exact injected imbalances ("ideal").
    """
    geom = scenario.geom
    seeds = trial_seeds(scenario.seed, scenario.n_mcs)
    specs = [
        _TrialSpec(
            scenario=scenario,
            estimator=estimator_cfg,
            clean=clean_cfg,
            mode="calibration",
            sbb=None,
            seed_entropy=tuple(np.atleast_1d(seeds[t + 1].entropy)),
            spawn_key=seeds[t + 1].spawn_key,
            run_prop=True,
            run_st=include_st,
            record_err=False,
            record_xi=False,
            record_trace=False,
            exact_recon=False,
            bias_from=-1,
            fixed_psi=None,
        )
        for t in range(scenario.n_mcs)
    ]
    results = pool_map(run_single_trial, specs, workers)
    s_eval = synthesize_targets(eval_targets.amplitudes, eval_targets.frequencies, geom.k)
    methods = ["proposed", "ideal"] + (["st"] if include_st else [])
    values = {m: [] for m in methods}
    failures: list[tuple[int, str]] = []
    for t, res in enumerate(results):
        xi_truth = res["psi_truth"]
        x_eval = SignalVector(xi_truth * s_eval, kind="measured")
        try:
            values["proposed"].append(
                compute_slls(x_eval, 1.0 / res["p_xi_final"], eval_targets, clean_cfg.fft_len)
            )
            values["ideal"].append(
                compute_slls(x_eval, 1.0 / xi_truth, eval_targets, clean_cfg.fft_len)
            )
            if include_st:
                values["st"].append(
                    compute_slls(x_eval, 1.0 / res["s_xi_final"], eval_targets, clean_cfg.fft_len)
                )
        except (DegenerateSpectrumError, FloatingPointError) as exc:
            failures.append((t, str(exc)))
    return SllsStats(values={m: np.asarray(v) for m, v in values.items()}, failures=failures)


@dataclass
class HeatmapCell:
    snr_db: float
    level: int
    stats: SllsStats


def imbalance_level_ranges(level: int) -> tuple[tuple[float, float], tuple[float, float]]:
    """Phase/gain ranges of injected-imbalance level l: +/- l*10 deg, +/- l*0.1."""
    if level < 1:
        raise ValueError("imbalance level is 1-based")
    return (-10.0 * level, 10.0 * level), (-0.1 * level, 0.1 * level)


def slls_heatmap(
    scenario: ScenarioConfig,
    estimator_cfg: EstimatorConfig,
    clean_cfg: CleanConfig,
    snr_grid: list[float],
    levels: list[int],
    eval_theta_deg: float = -20.0,
    workers: int = 1,
) -> list[HeatmapCell]:
    """SLLS study over an SNR x imbalance-level grid.

    Each cell re-runs the full estimation scenario at that SNR with
    imbalances drawn from the level's ranges, then evaluates on a single
    noise-free target at ``eval_theta_deg``.
    """
    if not snr_grid or not levels:
        raise ValueError("snr_grid and levels must be non-empty")
    geom = scenario.geom
    f_eval = geom.spacing_over_lambda * np.sin(np.deg2rad(eval_theta_deg))
    eval_targets = TargetSet([1.0 + 0j], [f_eval])
    cells = []
    for cell_index, (snr, level) in enumerate((s, l) for s in snr_grid for l in levels):
        phase_range, gain_range = imbalance_level_ranges(level)
        cell_cfg = scenario.with_updates(
            snr_db=float(snr),
            imbalance=scenario.imbalance.__class__(
                kind="random", phase_range_deg=phase_range, gain_range=gain_range
            ),
            seed=scenario.seed + 7919 * (cell_index + 1),
        )
        stats = run_slls_study(
            cell_cfg, estimator_cfg, clean_cfg, eval_targets, workers=workers
        )
        cells.append(HeatmapCell(snr_db=float(snr), level=int(level), stats=stats))
    return cells
