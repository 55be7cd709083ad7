"""Signal-vector reconstruction: predistortion, CLEAN, and re-integration.

The adaptive filters need the undistorted signal vector as input, but only
its imbalance-distorted version is measured. Reconstruction therefore runs
in three steps: divide the measurement by the latest imbalance estimate
(predistortion), estimate the per-target complex amplitudes and angular
frequencies of the result (CLEAN), and re-synthesize the signal vector
from those parameters (integration).

CLEAN iteratively takes an N-point zero-padded spectrum of the residual,
extracts the strongest bin as a target, subtracts the corresponding
sinusoid, and stops once a newly found peak (after the first) falls below
the termination ratio relative to the first peak. Because the recorded
amplitude is the peak bin value divided by the aperture length K, each
subtraction is an orthogonal projection, so the residual power never
increases.
"""

from dataclasses import dataclass

import numpy as np

from .array_model import ArrayGeometry, SignalVector, TargetSet, synthesize_targets
from .errors import DegenerateCalibrationError
from .nlms import TWO_PI, CALIBRATION_FLOOR


@dataclass(frozen=True)
class CleanConfig:
    """CLEAN parameters: FFT length, stop threshold in dB, iteration cap."""

    fft_len: int = 1024
    stop_ratio_db: float = -15.0
    max_targets: int = 10

    def __post_init__(self):
        if self.fft_len < 1 or self.fft_len & (self.fft_len - 1):
            raise ValueError("fft_len must be a power of two")
        if not self.stop_ratio_db < 0.0:
            raise ValueError("stop_ratio_db must be negative")
        if self.max_targets < 1:
            raise ValueError("max_targets must be at least 1")

    @property
    def stop_ratio_linear(self) -> float:
        return 10.0 ** (self.stop_ratio_db / 20.0)


# Spectrum-evaluation operators, cached per (fft_len, k). Row l of the
# matrix evaluates the zero-padded DFT at f_l = -0.5 + l / N, i.e. the
# spectrum comes out in fftshift order and ties resolve to the lowest
# shifted bin index.
_DFT_CACHE: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def dft_operator(fft_len: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (W, grid) with spectrum = W @ x and grid[l] = -0.5 + l / N."""
    key = (fft_len, k)
    cached = _DFT_CACHE.get(key)
    if cached is None:
        grid = -0.5 + np.arange(fft_len) / fft_len
        w = np.exp((-TWO_PI * 1j) * np.outer(grid, np.arange(k)))
        cached = (w, grid)
        _DFT_CACHE[key] = cached
    return cached


def spectrum(samples: np.ndarray, fft_len: int) -> np.ndarray:
    """Zero-padded spectrum in fftshift order (bin l at f = -0.5 + l / N)."""
    w, _ = dft_operator(fft_len, len(samples))
    return w @ np.asarray(samples, dtype=complex)


def predistort(x: SignalVector, xi_hat: np.ndarray) -> SignalVector:
    """Divide a measured vector elementwise by the current imbalance estimate."""
    xi_hat = np.asarray(xi_hat, dtype=complex)
    if len(x) != xi_hat.size:
        raise ValueError(f"signal length {len(x)} != estimate length {xi_hat.size}")
    mags = np.abs(xi_hat)
    if mags.min() < CALIBRATION_FLOOR:
        worst = int(mags.argmin())
        raise DegenerateCalibrationError(
            f"imbalance estimate magnitude {mags[worst]:.3e} at channel "
            f"{worst + 1} is below {CALIBRATION_FLOOR:.0e}"
        )
    return SignalVector(x.samples / xi_hat, kind="predistorted")


def clean_core(
    samples: np.ndarray,
    fft_len: int,
    stop_ratio_linear: float,
    max_targets: int,
    residual_powers: list | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Array-level CLEAN loop; returns (amplitudes, frequencies).

    ``residual_powers`` (if given) collects the residual energy at the top
    of every pass, before that pass's subtraction.
    """
    k = len(samples)
    w, grid = dft_operator(fft_len, k)
    work = np.array(samples, dtype=complex)
    m = np.arange(k)
    amps: list[complex] = []
    freqs: list[float] = []
    first_mag = 0.0
    while len(amps) < max_targets:
        if residual_powers is not None:
            residual_powers.append(float(work.real @ work.real + work.imag @ work.imag))
        y = w @ work
        power = y.real * y.real + y.imag * y.imag
        peak = int(np.argmax(power))
        mag = float(np.sqrt(power[peak]))
        if mag == 0.0:
            break
        frequency = float(grid[peak])
        amplitude = y[peak] / k
        work -= amplitude * np.exp((TWO_PI * 1j * frequency) * m)
        if amps and mag < stop_ratio_linear * first_mag:
            break
        if not amps:
            first_mag = mag
        amps.append(amplitude)
        freqs.append(frequency)
    return np.asarray(amps, dtype=complex), np.asarray(freqs, dtype=float)


def clean_estimate(x_pd: SignalVector, cfg: CleanConfig) -> TargetSet:
    """Estimate target count, amplitudes and frequencies of a signal vector.

    An all-zero input yields an empty target set. Otherwise at least one
    target is always reported, even if the strongest bin is pure noise;
    gating uninformative vectors is the caller's concern.
    """
    if len(x_pd) > cfg.fft_len:
        raise ValueError(f"signal length {len(x_pd)} exceeds fft_len {cfg.fft_len}")
    amps, freqs = clean_core(
        x_pd.samples, cfg.fft_len, cfg.stop_ratio_linear, cfg.max_targets
    )
    return TargetSet(amps, freqs)


@dataclass
class ReconstructionResult:
    """Estimated targets plus the reconstructed and predistorted vectors."""

    estimated_targets: TargetSet
    reconstructed: SignalVector
    predistorted: SignalVector


def reconstruct(
    x: SignalVector, xi_hat: np.ndarray, cfg: CleanConfig, geom: ArrayGeometry
) -> ReconstructionResult:
    """Predistort, estimate target parameters, and re-integrate."""
    if len(x) != geom.k:
        raise ValueError(f"signal length {len(x)} != array size {geom.k}")
    x_pd = predistort(x, xi_hat)
    targets = clean_estimate(x_pd, cfg)
    s_hat = synthesize_targets(targets.amplitudes, targets.frequencies, geom.k)
    return ReconstructionResult(
        estimated_targets=targets,
        reconstructed=SignalVector(s_hat, kind="reconstructed"),
        predistorted=x_pd,
    )
