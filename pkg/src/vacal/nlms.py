"""Bank of single-tap NLMS filters for channel-offset estimation.

One complex weight per virtual-array channel models that channel's gain
offset. All weights share a single scalar step size normalized by the
energy of the reconstructed input vector, so only one hyperparameter
(the normalized step size) is needed. After every update the weight
vector is mapped to a channel-imbalance estimate by normalizing to the
reference channel and removing the least-squares linear phase trend,
which pins down the scale and linear-phase ambiguities of the
reconstruction feedback loop.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCalibrationError, ReferenceChannelDegenerateError

TWO_PI = 2.0 * np.pi

# Magnitude floors below which normalization / inversion is refused.
REFERENCE_FLOOR = 1e-9
CALIBRATION_FLOOR = 1e-6


@dataclass(frozen=True)
class DetrendFit:
    """Slope and intercept of the least-squares line through a phase vector."""

    p1: float
    p2: float


def fit_phase_line(values: np.ndarray) -> DetrendFit:
    """Fit ``values[k] ~ p1*k + p2`` for k = 1..K by closed-form normal equations.

    For K == 1 the slope is defined as zero and the intercept as the value
    itself (a line cannot be constrained by a single point).
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        return DetrendFit(0.0, float(values[0]) if n else 0.0)
    k = np.arange(1.0, n + 1.0)
    sk = k.sum()
    skk = k @ k
    sy = values.sum()
    syk = values @ k
    det = n * skk - sk * sk
    p1 = (n * syk - sk * sy) / det
    p2 = (sy - p1 * sk) / n
    return DetrendFit(float(p1), float(p2))


def detrend(values: np.ndarray) -> tuple[np.ndarray, DetrendFit]:
    """Remove the least-squares line from ``values``; return residual and fit."""
    fit = fit_phase_line(values)
    k = np.arange(1.0, np.asarray(values).size + 1.0)
    return np.asarray(values, dtype=float) - (fit.p1 * k + fit.p2), fit


def unwrap_phase(phases: np.ndarray) -> np.ndarray:
    """Sequentially unwrap phases so successive differences stay within pi.

    Multiples of 2*pi are added so that each step from one element to the
    next lies in [-pi, pi]; differences of exactly +/-pi are kept as given.
    """
    phases = np.asarray(phases, dtype=float)
    out = phases.copy()
    if phases.size > 1:
        out[1:] -= TWO_PI * np.cumsum(np.round(np.diff(phases) / TWO_PI))
    return out


def normalize_and_detrend(psi_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map a raw weight vector to a normalized, detrended imbalance estimate.

    The weights are divided by the reference (first) channel, the phases are
    extracted and unwrapped, and the least-squares linear phase trend is
    removed. The residual phase is referenced to the first channel so that
    the returned imbalance vector has element one exactly equal to 1. Gains
    come from the normalized magnitudes before detrending.

    Returns
    -------
    (xi_hat, gamma_hat, phi_hat) : imbalance vector, gain imbalances, and
    detrended phase imbalances in radians.
    """
    psi_hat = np.asarray(psi_hat, dtype=complex)
    ref = psi_hat[0]
    if abs(ref) < REFERENCE_FLOOR:
        raise ReferenceChannelDegenerateError(
            f"reference-channel weight magnitude {abs(ref):.3e} is below {REFERENCE_FLOOR:.0e}"
        )
    normed = psi_hat / ref
    normed[0] = 1.0  # exact by definition; complex division may round
    raw_phase = unwrap_phase(np.angle(normed))
    fit = fit_phase_line(raw_phase)
    # Removing the line through the reference element keeps phi_hat[0] == 0,
    # hence xi_hat[0] == 1, while still zeroing the fitted slope.
    phi_hat = raw_phase - fit.p1 * np.arange(raw_phase.size, dtype=float)
    gamma_hat = np.abs(normed) - 1.0
    xi_hat = (1.0 + gamma_hat) * np.exp(1j * phi_hat)
    return xi_hat, gamma_hat, phi_hat


@dataclass(frozen=True)
class EstimatorConfig:
    """Step-size schedule for a bank of ``k`` single-tap NLMS filters.

    ``step_schedule`` is an ordered sequence of ``(start_iteration, mu_0)``
    pairs; the value of the last pair whose start is not after the current
    iteration applies. Every normalized step size must lie inside the
    stability range (0, 2K).
    """

    step_schedule: tuple[tuple[int, float], ...]
    k: int

    def __post_init__(self):
        schedule = tuple((int(s), float(m)) for s, m in self.step_schedule)
        object.__setattr__(self, "step_schedule", schedule)
        if self.k < 1:
            raise ValueError("channel count must be at least 1")
        if not schedule:
            raise ValueError("step schedule must not be empty")
        if schedule[0][0] != 1:
            raise ValueError("step schedule must start at iteration 1")
        starts = [s for s, _ in schedule]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("schedule start iterations must be strictly increasing")
        for _, mu0 in schedule:
            if not 0.0 < mu0 < 2.0 * self.k:
                raise ValueError(
                    f"mu_0 = {mu0} outside the stability range (0, {2 * self.k})"
                )

    @classmethod
    def constant(cls, mu0: float, k: int) -> "EstimatorConfig":
        return cls(step_schedule=((1, mu0),), k=k)


def step_size_at(cfg: EstimatorConfig, iteration: int) -> float:
    """Piecewise-constant schedule lookup; the last entry extends forever."""
    if iteration < 1:
        raise ValueError("iteration must be >= 1")
    mu0 = cfg.step_schedule[0][1]
    for start, value in cfg.step_schedule:
        if start > iteration:
            break
        mu0 = value
    return mu0


def schedule_per_iteration(cfg: EstimatorConfig, n_iterations: int) -> np.ndarray:
    """Expand the schedule into one mu_0 value per iteration 1..n."""
    return np.array([step_size_at(cfg, i) for i in range(1, n_iterations + 1)])


@dataclass
class EstimatorState:
    """Mutable state of the NLMS bank.

    ``psi_hat`` holds the raw complex weights; ``xi_hat``, ``gamma_hat`` and
    ``phi_hat`` are the derived normalized/detrended imbalance estimates,
    refreshed after every update. ``iteration`` indexes the step-size
    schedule and counts processed signal vectors, starting at 1. Updates
    skipped because the reconstructed input carried no energy are counted
    in ``skips`` and leave everything else untouched.
    """

    config: EstimatorConfig
    psi_hat: np.ndarray
    iteration: int = 1
    skips: int = 0
    xi_hat: np.ndarray = field(default=None)  # type: ignore[assignment]
    gamma_hat: np.ndarray = field(default=None)  # type: ignore[assignment]
    phi_hat: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.psi_hat = np.asarray(self.psi_hat, dtype=complex)
        if self.psi_hat.shape != (self.config.k,):
            raise ValueError("psi_hat length must equal the configured channel count")
        if self.xi_hat is None:
            self.refresh_derived()

    @classmethod
    def initial(cls, config: EstimatorConfig) -> "EstimatorState":
        """All-ones initial weights, matching the all-ones initial calibration."""
        return cls(config=config, psi_hat=np.ones(config.k, dtype=complex))

    def refresh_derived(self) -> None:
        self.xi_hat, self.gamma_hat, self.phi_hat = normalize_and_detrend(self.psi_hat)

    def to_record(self) -> dict:
        """Snapshot as a plain structure suitable for JSON/CSV logging."""
        return {
            "iteration": self.iteration,
            "skips": self.skips,
            "psi_hat_re": self.psi_hat.real.tolist(),
            "psi_hat_im": self.psi_hat.imag.tolist(),
            "gamma_hat": self.gamma_hat.tolist(),
            "phi_hat": self.phi_hat.tolist(),
        }

    @classmethod
    def from_record(cls, record: dict, config: EstimatorConfig) -> "EstimatorState":
        psi = np.asarray(record["psi_hat_re"]) + 1j * np.asarray(record["psi_hat_im"])
        state = cls(config=config, psi_hat=psi)
        state.iteration = int(record["iteration"])
        state.skips = int(record.get("skips", 0))
        return state


def nlms_update(psi_hat: np.ndarray, s_hat: np.ndarray, x: np.ndarray, mu0: float) -> None:
    """One raw NLMS sweep over all channels, in place.

    Gradient per channel: conj(s_hat) * (psi_hat * s_hat - x); the shared
    scalar step is mu0 / ||s_hat||^2. No stability-range check is applied
    here, so callers can probe divergent step sizes deliberately.
    """
    energy = float(s_hat.real @ s_hat.real + s_hat.imag @ s_hat.imag)
    if energy <= 0.0:
        raise ValueError("reconstructed input has no energy")
    mu = mu0 / energy
    psi_hat -= mu * (np.conj(s_hat) * (psi_hat * s_hat - x))


def nlms_step(state: EstimatorState, x: np.ndarray, s_hat: np.ndarray) -> EstimatorState:
    """Advance the filter bank by one signal vector.

    Parameters
    ----------
    x : measured signal vector (length K).
    s_hat : reconstructed undistorted signal vector (length K).

    A zero-energy ``s_hat`` (empty reconstruction) skips the update and
    increments ``state.skips`` only. Otherwise all K weights are updated
    with the same scalar step, the iteration counter advances, and the
    derived imbalance estimates are refreshed.
    """
    x = np.asarray(x, dtype=complex)
    s_hat = np.asarray(s_hat, dtype=complex)
    k = state.config.k
    if x.shape != (k,) or s_hat.shape != (k,):
        raise ValueError("signal vectors must have the configured channel count")
    energy = float(s_hat.real @ s_hat.real + s_hat.imag @ s_hat.imag)
    if energy == 0.0:
        state.skips += 1
        return state
    mu0 = step_size_at(state.config, state.iteration)
    nlms_update(state.psi_hat, s_hat, x, mu0)
    state.iteration += 1
    state.refresh_derived()
    return state


def current_calibration(state: EstimatorState) -> np.ndarray:
    """Elementwise reciprocal of the current imbalance estimate.

    Raises if any estimate magnitude is below the inversion floor, which
    signals estimator divergence rather than a recoverable condition.
    """
    mags = np.abs(state.xi_hat)
    if mags.min() < CALIBRATION_FLOOR:
        worst = int(mags.argmin())
        raise DegenerateCalibrationError(
            f"imbalance estimate magnitude {mags[worst]:.3e} at channel "
            f"{worst + 1} is below {CALIBRATION_FLOOR:.0e}"
        )
    return 1.0 / state.xi_hat
