"""Direction-of-arrival bias estimation from stationary-target velocities.

A forward-looking radar on a vehicle moving straight at speed ``v_s``
observes stationary targets with relative radial velocity
v_t = v_s * cos(theta_true). When every reported angle carries a common
bias, theta_true = theta_meas + theta_b, so

    v_t = A cos(theta_meas) + B sin(theta_meas),
    A = v_s cos(theta_b),  B = -v_s sin(theta_b),

which is linear in (A, B). The fitted cosine peaks at theta_meas =
-theta_b; the bias is the angle to add to measurements to recover truth.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import InsufficientGeometryError

MIN_OBSERVATIONS = 3
MIN_SPAN_DEG = 10.0


@dataclass(frozen=True)
class DoaBiasObservation:
    """One stationary target: reported angle (degrees) and radial velocity."""

    theta_meas_deg: float
    v_t: float

    def __post_init__(self):
        if not (math.isfinite(self.theta_meas_deg) and math.isfinite(self.v_t)):
            raise ValueError("observations must be finite")


def estimate_doa_bias(observations: list[DoaBiasObservation]) -> tuple[float, float]:
    """Least-squares fit of (ego speed, DoA bias in degrees)."""
    if len(observations) < MIN_OBSERVATIONS:
        raise InsufficientGeometryError(
            f"need at least {MIN_OBSERVATIONS} observations, got {len(observations)}"
        )
    theta = np.array([np.deg2rad(o.theta_meas_deg) for o in observations])
    v = np.array([o.v_t for o in observations])
    span = np.rad2deg(theta.max() - theta.min())
    if span <= MIN_SPAN_DEG:
        raise InsufficientGeometryError(
            f"observations span {span:.2f} deg; need more than {MIN_SPAN_DEG} deg"
        )
    design = np.column_stack([np.cos(theta), np.sin(theta)])
    coef, _, rank, _ = np.linalg.lstsq(design, v, rcond=None)
    if rank < 2:
        raise InsufficientGeometryError("rank-deficient cosine fit")
    a, b = coef
    v_s = float(np.hypot(a, b))
    theta_b = float(np.rad2deg(np.arctan2(-b, a)))
    return v_s, theta_b


def synthesize_observations(
    v_s: float,
    theta_b_deg: float,
    theta_true_deg: np.ndarray,
    velocity_noise_sigma: float = 0.0,
    rng: np.random.Generator | int | None = None,
) -> list[DoaBiasObservation]:
    """Generate observations from the ground-truth model, for tests and demos."""
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    theta_true = np.asarray(theta_true_deg, dtype=float)
    v = v_s * np.cos(np.deg2rad(theta_true))
    if velocity_noise_sigma > 0.0:
        v = v + velocity_noise_sigma * gen.standard_normal(theta_true.size)
    theta_meas = theta_true - theta_b_deg
    return [DoaBiasObservation(float(t), float(x)) for t, x in zip(theta_meas, v)]


def read_observations_csv(path: str | Path) -> list[DoaBiasObservation]:
    """Read observations from a CSV with columns theta_meas_deg, v_t."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(DoaBiasObservation(float(row["theta_meas_deg"]), float(row["v_t"])))
    return out


def write_observations_csv(path: str | Path, observations: list[DoaBiasObservation]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta_meas_deg", "v_t"])
        for o in observations:
            writer.writerow([repr(o.theta_meas_deg), repr(o.v_t)])
