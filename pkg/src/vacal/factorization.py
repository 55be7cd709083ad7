"""Tx/Rx imbalance factorization, solder-ball-break detection, and the
combined calibration-plus-detection structure.

The virtual-array imbalance vector of a collocated MIMO radar separates
into transmit and receive factors. Reshaping the length-K estimate into a
K_r x K_t matrix (receive index fastest) makes every column proportional
to the receive factor and every row proportional to the transmit factor;
normalizing each row/column by its first element and averaging gives the
factor estimates, from which gain and phase imbalances follow.

A solder ball break shows up as a large persistent phase offset on one
channel, so detection reduces to comparing the factored phase imbalances
against a threshold. Calibration needs a small step size for accuracy
while detection needs a large one for speed; the combined structure runs
both filter banks off one shared reconstruction that is predistorted with
the calibration estimate, halving the reconstruction cost.
"""

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .array_model import ArrayGeometry, SignalVector
from .nlms import EstimatorConfig, EstimatorState, nlms_step
from .reconstruction import CleanConfig, reconstruct


@dataclass
class TxRxGpi:
    """Gain and phase imbalances of the transmit and receive channels."""

    gamma_t: np.ndarray
    phi_t: np.ndarray
    gamma_r: np.ndarray
    phi_r: np.ndarray

    @property
    def xi_t(self) -> np.ndarray:
        return (1.0 + self.gamma_t) * np.exp(1j * self.phi_t)

    @property
    def xi_r(self) -> np.ndarray:
        return (1.0 + self.gamma_r) * np.exp(1j * self.phi_r)


def estimate_txrx_gpi(xi_hat: np.ndarray, geom: ArrayGeometry) -> TxRxGpi:
    """Factor a virtual-array imbalance estimate into Tx and Rx imbalances.

    The estimate is reshaped column-major into K_r x K_t (receive index
    fastest, matching the Kronecker ordering of ``factor_to_va``). Each
    row is normalized by its first element and the rows are averaged to
    give the Tx factor; columns likewise give the Rx factor. Gain and
    phase imbalances are the magnitude minus one and the angle of the
    averaged complex factors. Reference elements come out exactly zero.
    """
    xi_hat = np.asarray(xi_hat, dtype=complex)
    if xi_hat.shape != (geom.k,):
        raise ValueError(f"estimate length {xi_hat.size} != array size {geom.k}")
    matrix = xi_hat.reshape((geom.k_r, geom.k_t), order="F")
    xi_t = (matrix / matrix[:, :1]).mean(axis=0)
    xi_r = (matrix / matrix[:1, :]).mean(axis=1)
    # Reference factors are averages of self-divisions, i.e. one by
    # definition; complex division may leave rounding residue.
    xi_t[0] = 1.0
    xi_r[0] = 1.0
    return TxRxGpi(
        gamma_t=np.abs(xi_t) - 1.0,
        phi_t=np.angle(xi_t),
        gamma_r=np.abs(xi_r) - 1.0,
        phi_r=np.angle(xi_r),
    )


@dataclass(frozen=True)
class SbbConfig:
    """Detection threshold (degrees) and step size of the fast filter bank."""

    delta: float = 15.0
    mu_0_fast: float = 3.0

    def __post_init__(self):
        if not self.delta > 0.0:
            raise ValueError("delta must be positive")


@dataclass(frozen=True)
class SbbReport:
    """Outcome of threshold monitoring on the factored phase imbalances.

    ``channels`` lists every channel whose phase magnitude exceeded the
    threshold at the detection iteration, receive channels first, each
    side in ascending index order (indices are 1-based).
    """

    detected: bool
    channels: tuple[tuple[str, int], ...] = ()
    detection_iteration: int | None = None

    def __post_init__(self):
        if self.detected != (self.detection_iteration is not None):
            raise ValueError("detection_iteration must be present iff detected")

    @property
    def channel(self) -> tuple[str, int] | None:
        """Primary crossing channel: lowest Rx index, then lowest Tx index."""
        return self.channels[0] if self.channels else None


def sbb_check(gpi: TxRxGpi, cfg: SbbConfig, iteration: int) -> SbbReport:
    """Compare Tx and Rx phase imbalances (strictly) against the threshold.

    Gain imbalances are ignored: a solder ball break is modeled as a pure
    phase offset, and its effect on the gains is taken as negligible.
    """
    delta_rad = np.deg2rad(cfg.delta)
    crossed = [("rx", i + 1) for i in np.flatnonzero(np.abs(gpi.phi_r) > delta_rad)]
    crossed += [("tx", i + 1) for i in np.flatnonzero(np.abs(gpi.phi_t) > delta_rad)]
    if not crossed:
        return SbbReport(detected=False)
    return SbbReport(detected=True, channels=tuple(crossed), detection_iteration=iteration)


@dataclass
class CombinedTraceRow:
    """Per-iteration snapshot of the combined structure."""

    iteration: int
    xi_hat_calibration: np.ndarray
    calibration_gpi: TxRxGpi
    fast_gpi: TxRxGpi
    skipped: bool


def run_combined(
    stream: Iterable[SignalVector | np.ndarray],
    geom: ArrayGeometry,
    calib_cfg: EstimatorConfig,
    sbb_cfg: SbbConfig,
    clean_cfg: CleanConfig,
) -> tuple[list[CombinedTraceRow], SbbReport]:
    """Run calibration and break detection off one shared reconstruction.

    Each measured vector is predistorted with the calibration estimator's
    current imbalance estimate; the resulting reconstruction feeds both
    the slow (scheduled) calibration filter bank and the fast detection
    bank. The detection bank never influences predistortion. The report
    latches the first threshold crossing of the fast bank's Tx/Rx phases.
    """
    calib = EstimatorState.initial(calib_cfg)
    fast = EstimatorState.initial(
        EstimatorConfig.constant(sbb_cfg.mu_0_fast, calib_cfg.k)
    )
    trace: list[CombinedTraceRow] = []
    report = SbbReport(detected=False)
    iteration = 0
    for item in stream:
        iteration += 1
        x = item if isinstance(item, SignalVector) else SignalVector(item, kind="measured")
        result = reconstruct(x, calib.xi_hat, clean_cfg, geom)
        s_hat = result.reconstructed.samples
        skips_before = calib.skips
        nlms_step(calib, x.samples, s_hat)
        nlms_step(fast, x.samples, s_hat)
        skipped = calib.skips > skips_before
        fast_gpi = estimate_txrx_gpi(fast.xi_hat, geom)
        calib_gpi = estimate_txrx_gpi(calib.xi_hat, geom)
        if not report.detected:
            check = sbb_check(fast_gpi, sbb_cfg, iteration)
            if check.detected:
                report = check
        trace.append(
            CombinedTraceRow(
                iteration=iteration,
                xi_hat_calibration=calib.xi_hat.copy(),
                calibration_gpi=calib_gpi,
                fast_gpi=fast_gpi,
                skipped=skipped,
            )
        )
    return trace, report
