"""Virtual-array geometry, signal synthesis, and channel-imbalance algebra.

The virtual array of a collocated MIMO radar with ``k_t`` transmitters and
``k_r`` receivers is a uniform linear array of ``k_t * k_r`` elements. A
signal vector is the complex sample at one detected range-Doppler peak
across those elements:

    s[m] = sum_q alpha_q * exp(j 2 pi f_q m),   m = 0 .. K-1

with per-target complex amplitude alpha_q and angular frequency f_q in
cycles per element. The first element carries zero phase, so a target at
frequency zero produces an all-ones vector; each target's absolute phase
is folded into its complex amplitude.

Channel imbalances are the per-channel complex gains relative to the first
(reference) channel. They factor across the transmit and receive sides as
a Kronecker product with the receive index varying fastest, and decompose
into real gain/phase imbalances via xi = (1 + gamma) * exp(j phi).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidReferenceError,
    InvalidTargetSetError,
    OutOfRangeError,
    UnmappableFrequencyError,
)
from .nlms import TWO_PI, detrend, fit_phase_line, normalize_and_detrend, unwrap_phase

SIGNAL_KINDS = ("ideal", "measured", "predistorted", "reconstructed")

REFERENCE_TOL = 1e-12


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear virtual array of ``k_t * k_r`` elements.

    ``spacing_over_lambda`` is the inter-element spacing in wavelengths
    (0.5 for the simulated array, 0.6 for the measured one).
    """

    k_t: int
    k_r: int
    spacing_over_lambda: float = 0.5

    def __post_init__(self):
        if self.k_t < 1 or self.k_r < 1:
            raise ValueError("k_t and k_r must be positive")
        if not self.spacing_over_lambda > 0.0:
            raise ValueError("spacing_over_lambda must be positive")

    @property
    def k(self) -> int:
        return self.k_t * self.k_r


@dataclass
class TargetSet:
    """Sinusoid parameters of the targets present in one signal vector."""

    amplitudes: np.ndarray
    frequencies: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.atleast_1d(np.asarray(self.amplitudes, dtype=complex))
        self.frequencies = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        if self.amplitudes.shape != self.frequencies.shape:
            raise InvalidTargetSetError(
                f"{self.amplitudes.size} amplitudes vs {self.frequencies.size} frequencies"
            )
        if self.q and (self.frequencies.min() < -0.5 or self.frequencies.max() >= 0.5):
            raise InvalidTargetSetError("frequencies must lie in [-0.5, 0.5)")

    @property
    def q(self) -> int:
        return self.amplitudes.size

    @classmethod
    def empty(cls) -> "TargetSet":
        return cls(np.empty(0, dtype=complex), np.empty(0, dtype=float))


@dataclass
class SignalVector:
    """Length-K complex samples along the virtual array."""

    samples: np.ndarray
    kind: str = "ideal"

    def __post_init__(self):
        self.samples = np.atleast_1d(np.asarray(self.samples, dtype=complex))
        if self.kind not in SIGNAL_KINDS:
            raise ValueError(f"kind must be one of {SIGNAL_KINDS}")

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class NoiseModel:
    """Additive circularly-symmetric complex Gaussian noise.

    ``snr_db`` is the ratio of the dominant target's per-element power to
    the per-element noise variance, in decibels.
    """

    snr_db: float = 20.0
    enabled: bool = True

    def __post_init__(self):
        if self.enabled and not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite when noise is enabled")

    def sigma(self, peak_amplitude: float) -> float:
        """Noise standard deviation for a given dominant-target amplitude."""
        if not self.enabled:
            return 0.0
        return peak_amplitude / 10.0 ** (self.snr_db / 20.0)


def synthesize_targets(amplitudes: np.ndarray, frequencies: np.ndarray, k: int) -> np.ndarray:
    """Array-level synthesis of the ideal signal vector (length ``k``)."""
    if len(amplitudes) == 0:
        return np.zeros(k, dtype=complex)
    m = np.arange(k)
    return np.asarray(amplitudes, dtype=complex) @ np.exp(
        (TWO_PI * 1j) * np.outer(np.asarray(frequencies, dtype=float), m)
    )


def synthesize_ideal(targets: TargetSet, geom: ArrayGeometry) -> SignalVector:
    """Sum of target sinusoids over the virtual array, zero phase at element one."""
    return SignalVector(
        synthesize_targets(targets.amplitudes, targets.frequencies, geom.k), kind="ideal"
    )


def angle_to_frequency(theta_deg: float, geom: ArrayGeometry) -> float:
    """Map a direction of arrival in degrees to cycles per element."""
    if abs(theta_deg) > 90.0:
        raise OutOfRangeError(f"|theta| = {abs(theta_deg)} deg exceeds 90 deg")
    return geom.spacing_over_lambda * math.sin(math.radians(theta_deg))


def frequency_to_angle(frequency: float, geom: ArrayGeometry) -> float:
    """Inverse of :func:`angle_to_frequency`; result in degrees."""
    ratio = frequency / geom.spacing_over_lambda
    if abs(ratio) > 1.0:
        raise UnmappableFrequencyError(
            f"|f| = {abs(frequency)} exceeds d/lambda = {geom.spacing_over_lambda}"
        )
    return math.degrees(math.asin(ratio))


def factor_to_va(xi_t: np.ndarray, xi_r: np.ndarray) -> np.ndarray:
    """Combine Tx and Rx imbalance factors into the virtual-array vector.

    Kronecker product with the receive index varying fastest:
    xi[(t * K_r) + r] = xi_t[t] * xi_r[r]. Both factors must have their
    first (reference) element equal to one.
    """
    xi_t = np.asarray(xi_t, dtype=complex)
    xi_r = np.asarray(xi_r, dtype=complex)
    for name, vec in (("xi_t", xi_t), ("xi_r", xi_r)):
        if abs(vec[0] - 1.0) > REFERENCE_TOL:
            raise InvalidReferenceError(f"{name}[1] must equal 1, got {vec[0]}")
    return np.kron(xi_t, xi_r)


def split_linear_phase(phi: np.ndarray) -> tuple[float, np.ndarray]:
    """Split an unwrapped phase vector into a linear slope and a residual.

    The least-squares line over element indices 1..K is removed; the
    returned slope is in cycles per element and the residual has zero
    fitted slope.
    """
    residual, fit = detrend(phi)
    return fit.p1 / TWO_PI, residual


@dataclass
class ImbalanceProfile:
    """Per-channel complex offsets with their factorized and real decompositions.

    ``psi`` are the absolute channel offsets, ``xi = psi / psi[0]`` the
    imbalances relative to the reference channel, ``xi_t``/``xi_r`` the
    transmit/receive factors, ``gamma``/``phi`` the gain and phase
    imbalances with ``xi = (1 + gamma) e^{j phi}``, and ``f_delta`` the
    fitted linear-phase slope of ``phi`` in cycles per element.
    """

    psi: np.ndarray
    xi: np.ndarray
    xi_t: np.ndarray
    xi_r: np.ndarray
    gamma: np.ndarray
    phi: np.ndarray
    f_delta: float = field(default=0.0)

    def __post_init__(self):
        if abs(self.xi[0] - 1.0) > REFERENCE_TOL:
            raise InvalidReferenceError(f"xi[1] must equal 1, got {self.xi[0]}")

    @property
    def k(self) -> int:
        return self.xi.size

    @classmethod
    def from_factors(
        cls, xi_t: np.ndarray, xi_r: np.ndarray, psi_scale: complex = 1.0
    ) -> "ImbalanceProfile":
        """Build a profile from Tx/Rx factors (reference elements equal to one)."""
        xi = factor_to_va(xi_t, xi_r)
        gamma = np.abs(xi) - 1.0
        phi = unwrap_phase(np.angle(xi))
        return cls(
            psi=psi_scale * xi,
            xi=xi,
            xi_t=np.asarray(xi_t, dtype=complex),
            xi_r=np.asarray(xi_r, dtype=complex),
            gamma=gamma,
            phi=phi,
            f_delta=fit_phase_line(phi).p1 / TWO_PI,
        )

    @classmethod
    def from_gpi(
        cls, gamma: np.ndarray, phi: np.ndarray, geom: ArrayGeometry, psi_scale: complex = 1.0
    ) -> "ImbalanceProfile":
        """Build a profile from virtual-array gain and phase imbalances."""
        gamma = np.asarray(gamma, dtype=float)
        phi = np.asarray(phi, dtype=float)
        xi = (1.0 + gamma) * np.exp(1j * phi)
        # Factors via the row/column averaging used for Tx/Rx estimation;
        # exact whenever xi is separable.
        from .factorization import estimate_txrx_gpi

        gpi = estimate_txrx_gpi(xi, geom)
        return cls(
            psi=psi_scale * xi,
            xi=xi,
            xi_t=gpi.xi_t,
            xi_r=gpi.xi_r,
            gamma=gamma,
            phi=phi,
            f_delta=fit_phase_line(phi).p1 / TWO_PI,
        )

    def detrended(self, geom: ArrayGeometry) -> "ImbalanceProfile":
        """Profile with the linear phase trend removed and re-referenced.

        The result lives in the quotient space the estimator reports in:
        unit reference element and zero fitted phase slope. The removed
        linear phase factors across the Tx/Rx sides, so separability is
        preserved exactly.
        """
        xi, gamma, phi = normalize_and_detrend(self.xi)
        return ImbalanceProfile.from_gpi(gamma, phi, geom, psi_scale=self.psi[0])


def apply_imbalance(
    ideal: SignalVector,
    prof: ImbalanceProfile,
    noise: NoiseModel,
    rng: np.random.Generator | int | None = None,
    peak_amplitude: float = 1.0,
) -> SignalVector:
    """Distort an ideal signal vector by channel offsets plus receiver noise.

    ``peak_amplitude`` is the dominant target's amplitude, which anchors the
    SNR definition: noise variance sigma^2 satisfies
    peak_amplitude^2 / sigma^2 = 10^(snr_db / 10).
    """
    if len(ideal) != prof.k:
        raise ValueError(f"signal length {len(ideal)} != profile length {prof.k}")
    samples = prof.psi * ideal.samples
    if noise.enabled:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        sigma = noise.sigma(peak_amplitude)
        scale = sigma * math.sqrt(0.5)
        samples = samples + scale * (
            gen.standard_normal(prof.k) + 1j * gen.standard_normal(prof.k)
        )
    return SignalVector(samples, kind="measured")
