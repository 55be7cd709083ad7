"""Reference per-iteration pipelines used by experiments and parity tests.

These are the plain-numpy counterparts of the compiled trial kernels: one
reconstruction (predistort, CLEAN, integrate) feeding one or two NLMS
filter banks. The compiled kernels are equivalence-tested against these.
"""

from dataclasses import dataclass

import numpy as np

from ..array_model import ArrayGeometry, SignalVector
from ..factorization import SbbConfig, SbbReport, estimate_txrx_gpi, sbb_check
from ..nlms import EstimatorConfig, EstimatorState, nlms_step
from ..reconstruction import CleanConfig, ReconstructionResult, reconstruct


def st_baseline_step(
    state: EstimatorState, x: np.ndarray, recon: ReconstructionResult
) -> EstimatorState:
    """Single-target-gated update: identical to nlms_step, applied only
    when the reconstruction reports exactly one detected target.

    This is the single-target baseline used for comparisons; it shares the
    whole pipeline with the unrestricted estimator and differs only in the
    gating, so it is faithful in spirit rather than a bit-level port of
    any particular published single-target method.
    """
    if recon.estimated_targets.q != 1:
        return state
    return nlms_step(state, x, recon.reconstructed.samples)


@dataclass
class StepOutcome:
    """What one pipeline iteration produced."""

    s_hat: np.ndarray
    q_detected: int
    updated: bool


class CalibrationPipeline:
    """Self-calibrating loop: predistort with own estimate, reconstruct, update.

    With ``single_target_only`` the update is gated on exactly one detected
    target (the ST baseline); gated iterations are counted separately from
    zero-energy skips.
    """

    def __init__(
        self,
        geom: ArrayGeometry,
        estimator_cfg: EstimatorConfig,
        clean_cfg: CleanConfig,
        single_target_only: bool = False,
    ):
        self.geom = geom
        self.clean_cfg = clean_cfg
        self.state = EstimatorState.initial(estimator_cfg)
        self.single_target_only = single_target_only
        self.gated = 0

    def step(self, x: np.ndarray | SignalVector) -> StepOutcome:
        xv = x if isinstance(x, SignalVector) else SignalVector(x, kind="measured")
        recon = reconstruct(xv, self.state.xi_hat, self.clean_cfg, self.geom)
        q = recon.estimated_targets.q
        if self.single_target_only and q != 1:
            self.gated += 1
            return StepOutcome(recon.reconstructed.samples, q, False)
        iteration_before = self.state.iteration
        nlms_step(self.state, xv.samples, recon.reconstructed.samples)
        return StepOutcome(
            recon.reconstructed.samples, q, self.state.iteration > iteration_before
        )


class CombinedPipeline:
    """Shared-reconstruction structure: slow calibration bank plus fast
    detection bank, predistorted by the calibration estimate only."""

    def __init__(
        self,
        geom: ArrayGeometry,
        calib_cfg: EstimatorConfig,
        sbb_cfg: SbbConfig,
        clean_cfg: CleanConfig,
    ):
        self.geom = geom
        self.clean_cfg = clean_cfg
        self.sbb_cfg = sbb_cfg
        self.calibration = EstimatorState.initial(calib_cfg)
        self.fast = EstimatorState.initial(
            EstimatorConfig.constant(sbb_cfg.mu_0_fast, calib_cfg.k)
        )
        self.report = SbbReport(detected=False)
        self.iteration = 0

    def step(self, x: np.ndarray | SignalVector) -> StepOutcome:
        self.iteration += 1
        xv = x if isinstance(x, SignalVector) else SignalVector(x, kind="measured")
        recon = reconstruct(xv, self.calibration.xi_hat, self.clean_cfg, self.geom)
        s_hat = recon.reconstructed.samples
        iteration_before = self.calibration.iteration
        nlms_step(self.calibration, xv.samples, s_hat)
        nlms_step(self.fast, xv.samples, s_hat)
        if not self.report.detected:
            gpi = estimate_txrx_gpi(self.fast.xi_hat, self.geom)
            check = sbb_check(gpi, self.sbb_cfg, self.iteration)
            if check.detected:
                self.report = check
        return StepOutcome(
            s_hat, recon.estimated_targets.q, self.calibration.iteration > iteration_before
        )
