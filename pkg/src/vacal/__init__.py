"""Online MIMO-radar channel imbalance estimation.

Core building blocks:

- :mod:`vacal.array_model` -- virtual-array geometry, signal synthesis,
  imbalance algebra (Kronecker factorization, gain/phase decomposition,
  linear-phase split).
- :mod:`vacal.reconstruction` -- predistortion, CLEAN parameter
  estimation, and signal re-integration.
- :mod:`vacal.nlms` -- the bank of single-tap NLMS filters with shared
  normalized step size, normalization, and phase detrending.
- :mod:`vacal.factorization` -- Tx/Rx imbalance factorization, solder
  ball break detection, and the combined calibration/detection structure.
- :mod:`vacal.harness` -- scenario generation, Monte Carlo experiments,
  metrics, file formats, and the command-line interface.
"""

from .array_model import (
    ArrayGeometry,
    ImbalanceProfile,
    NoiseModel,
    SignalVector,
    TargetSet,
    angle_to_frequency,
    apply_imbalance,
    factor_to_va,
    frequency_to_angle,
    split_linear_phase,
    synthesize_ideal,
)
from .factorization import (
    SbbConfig,
    SbbReport,
    TxRxGpi,
    estimate_txrx_gpi,
    run_combined,
    sbb_check,
)
from .nlms import (
    DetrendFit,
    EstimatorConfig,
    EstimatorState,
    current_calibration,
    nlms_step,
    normalize_and_detrend,
    step_size_at,
)
from .reconstruction import (
    CleanConfig,
    ReconstructionResult,
    clean_estimate,
    predistort,
    reconstruct,
)

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry",
    "CleanConfig",
    "DetrendFit",
    "EstimatorConfig",
    "EstimatorState",
    "ImbalanceProfile",
    "NoiseModel",
    "ReconstructionResult",
    "SbbConfig",
    "SbbReport",
    "SignalVector",
    "TargetSet",
    "TxRxGpi",
    "angle_to_frequency",
    "apply_imbalance",
    "clean_estimate",
    "current_calibration",
    "estimate_txrx_gpi",
    "factor_to_va",
    "frequency_to_angle",
    "nlms_step",
    "normalize_and_detrend",
    "predistort",
    "reconstruct",
    "run_combined",
    "sbb_check",
    "split_linear_phase",
    "step_size_at",
    "synthesize_ideal",
]
