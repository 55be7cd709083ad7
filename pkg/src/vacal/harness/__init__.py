"""Simulation harness: scenarios, Monte Carlo experiments, metrics, CLI."""

from .bias import BiasOracleResult, empirical_bias_oracle
from .doa import DoaBiasObservation, estimate_doa_bias
from .experiments import (
    ExperimentResult,
    GpiErrorCurves,
    Metrics,
    SbbStats,
    TrialTrace,
    run_experiment,
)
from .pipeline import CalibrationPipeline, CombinedPipeline, st_baseline_step
from .replay import (
    RelativeEstimationResult,
    read_replay_file,
    relative_estimation,
    synthesize_replay_file,
    write_replay_file,
)
from .scenario import (
    ImbalanceSpec,
    ProfileTimeline,
    SbbInjection,
    ScenarioConfig,
    draw_profile_timeline,
    generate_scene,
)
from .slls import HeatmapCell, SllsStats, compute_slls, run_slls_study, slls_heatmap

__all__ = [
    "BiasOracleResult",
    "CalibrationPipeline",
    "CombinedPipeline",
    "DoaBiasObservation",
    "ExperimentResult",
    "GpiErrorCurves",
    "HeatmapCell",
    "ImbalanceSpec",
    "Metrics",
    "ProfileTimeline",
    "RelativeEstimationResult",
    "SbbInjection",
    "SbbStats",
    "ScenarioConfig",
    "SllsStats",
    "TrialTrace",
    "compute_slls",
    "draw_profile_timeline",
    "empirical_bias_oracle",
    "estimate_doa_bias",
    "generate_scene",
    "read_replay_file",
    "relative_estimation",
    "run_experiment",
    "run_slls_study",
    "slls_heatmap",
    "st_baseline_step",
    "synthesize_replay_file",
    "write_replay_file",
]
