"""Randomized scene and imbalance generation for the simulation harness.

Scenes follow the two-set target model: a primary set whose size is drawn
from a configurable probability mass function with amplitudes uniform in
dB, and a secondary set of weaker targets drawn relative to the dominant
primary peak. Directions of arrival map to angular frequencies through
the array spacing. Injected phase imbalances are detrended at generation
so the ground truth lives in the same normalized space the estimator
reports in (unit reference element, zero fitted phase slope).
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..array_model import (
    ArrayGeometry,
    ImbalanceProfile,
    NoiseModel,
    SignalVector,
    TargetSet,
    apply_imbalance,
    factor_to_va,
    synthesize_ideal,
)
from ..factorization import estimate_txrx_gpi
from ..nlms import TWO_PI, fit_phase_line, normalize_and_detrend, unwrap_phase

DEFAULT_PRIMARY_PMF = {1: 0.40, 2: 0.30, 3: 0.15, 4: 0.10, 5: 0.05}
DEFAULT_SECONDARY_PMF = {0: 0.25, 1: 0.25, 2: 0.25, 3: 0.25}


@dataclass(frozen=True)
class ImbalanceSpec:
    """How ground-truth imbalances are generated for a trial.

    kind:
      - "random": per-trial Tx/Rx gain and phase imbalances drawn uniformly
        from the configured ranges, constant over the trial.
      - "explicit": fixed Tx/Rx factors given directly.
      - "heatup": phase imbalances ramp as phi_inf * (1 - exp(-i / tau))
        for the first ``ramp_iterations`` iterations and stay constant
        afterwards; gains stay constant throughout.

    ``detrend`` removes the linear phase trend of the injected imbalances
    at generation time (the estimator cannot observe that component).
    """

    kind: str = "random"
    phase_range_deg: tuple[float, float] = (-20.0, 20.0)
    gain_range: tuple[float, float] = (-0.2, 0.2)
    tau: float = 250.0
    ramp_iterations: int = 1000
    xi_t: tuple[complex, ...] | None = None
    xi_r: tuple[complex, ...] | None = None
    detrend: bool = True

    def __post_init__(self):
        if self.kind not in ("random", "explicit", "heatup"):
            raise ValueError(f"unknown imbalance kind {self.kind!r}")
        for lo, hi in (self.phase_range_deg, self.gain_range):
            if not lo <= hi:
                raise ValueError("imbalance ranges must be ordered")
        if self.kind == "explicit" and (self.xi_t is None or self.xi_r is None):
            raise ValueError("explicit imbalance requires xi_t and xi_r")
        if self.kind == "heatup" and not self.tau > 0:
            raise ValueError("tau must be positive")


@dataclass(frozen=True)
class SbbInjection:
    """A persistent phase offset on one channel from a given iteration on."""

    side: str = "rx"
    index: int = 3
    offset_deg: float = 30.0
    at_iteration: int = 1000

    def __post_init__(self):
        if self.side not in ("tx", "rx"):
            raise ValueError("side must be 'tx' or 'rx'")
        if self.index < 1:
            raise ValueError("channel index is 1-based")
        if self.at_iteration < 1:
            raise ValueError("at_iteration is 1-based")


def _validated_pmf(pmf: dict, name: str) -> dict[int, float]:
    out = {int(k): float(v) for k, v in pmf.items()}
    if any(v < 0 for v in out.values()):
        raise ValueError(f"{name} has negative probabilities")
    if abs(sum(out.values()) - 1.0) > 1e-9:
        raise ValueError(f"{name} must sum to 1")
    return dict(sorted(out.items()))


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one randomized Monte Carlo scenario."""

    geom: ArrayGeometry = ArrayGeometry(3, 4, 0.5)
    primary_count_pmf: dict = field(default_factory=lambda: dict(DEFAULT_PRIMARY_PMF))
    secondary_count_pmf: dict = field(default_factory=lambda: dict(DEFAULT_SECONDARY_PMF))
    primary_amp_db_range: tuple[float, float] = (-10.0, 0.0)
    secondary_amp_db_range: tuple[float, float] = (-20.0, -10.0)
    doa_range_deg: tuple[float, float] = (-90.0, 90.0)
    snr_db: float = 20.0
    noise_enabled: bool = True
    imbalance: ImbalanceSpec = ImbalanceSpec()
    sbb_injection: SbbInjection | None = None
    n_iterations: int = 2000
    n_mcs: int = 1000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "primary_count_pmf", _validated_pmf(self.primary_count_pmf, "primary_count_pmf")
        )
        object.__setattr__(
            self,
            "secondary_count_pmf",
            _validated_pmf(self.secondary_count_pmf, "secondary_count_pmf"),
        )
        if min(self.primary_count_pmf) < 0 or min(self.secondary_count_pmf) < 0:
            raise ValueError("target counts must be nonnegative")
        for lo, hi in (
            self.primary_amp_db_range,
            self.secondary_amp_db_range,
            self.doa_range_deg,
        ):
            if not lo <= hi:
                raise ValueError("ranges must be ordered")
        if abs(self.doa_range_deg[0]) > 90 or abs(self.doa_range_deg[1]) > 90:
            raise ValueError("DoA range must lie within [-90, 90] degrees")
        if self.n_iterations < 1 or self.n_mcs < 1:
            raise ValueError("n_iterations and n_mcs must be positive")
        if not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")

    def with_updates(self, **kwargs) -> "ScenarioConfig":
        return replace(self, **kwargs)


def _draw_factors(spec: ImbalanceSpec, geom: ArrayGeometry, rng: np.random.Generator):
    lo_p, hi_p = np.deg2rad(spec.phase_range_deg[0]), np.deg2rad(spec.phase_range_deg[1])
    lo_g, hi_g = spec.gain_range
    phi_t = rng.uniform(lo_p, hi_p, geom.k_t)
    phi_r = rng.uniform(lo_p, hi_p, geom.k_r)
    g_t = rng.uniform(lo_g, hi_g, geom.k_t)
    g_r = rng.uniform(lo_g, hi_g, geom.k_r)
    phi_t[0] = phi_r[0] = g_t[0] = g_r[0] = 0.0
    return (1.0 + g_t) * np.exp(1j * phi_t), (1.0 + g_r) * np.exp(1j * phi_r)


class ProfileTimeline:
    """Ground-truth channel-offset trajectory of one trial.

    ``psi_rows`` hold the physical per-channel offsets applied to each
    iteration's signal vector (one row for constant profiles). The cached
    ``gain_rows``/``phase_rows`` hold the normalized, detrended gain and
    phase imbalances per iteration for the virtual array and the Tx/Rx
    factors, concatenated as [va | tx | rx]: the quantities the estimator
    converges to.
    """

    def __init__(self, geom: ArrayGeometry, psi_rows: np.ndarray):
        self.geom = geom
        self.psi_rows = np.atleast_2d(np.asarray(psi_rows, dtype=complex))
        self.varying = self.psi_rows.shape[0] > 1
        k, k_t, k_r = geom.k, geom.k_t, geom.k_r
        rows = self.psi_rows
        normed = rows / rows[:, :1]
        normed[:, 0] = 1.0
        phase = np.unwrap(np.angle(normed), axis=1)
        kk = np.arange(1.0, k + 1.0)
        det = k * (kk @ kk) - kk.sum() ** 2
        slope = (k * (phase @ kk) - kk.sum() * phase.sum(axis=1)) / det
        phi = phase - slope[:, None] * np.arange(k)
        gamma = np.abs(normed) - 1.0
        xi_c = (1.0 + gamma) * np.exp(1j * phi)
        # Tx/Rx factors of the detrended truth, batched over rows.
        b = xi_c.reshape(-1, k_t, k_r)
        xi_t = (b / b[:, :1, :]).mean(axis=2)
        xi_r = (b / b[:, :, :1]).mean(axis=1)
        xi_t[:, 0] = 1.0
        xi_r[:, 0] = 1.0
        self.gain_rows = np.concatenate(
            [gamma, np.abs(xi_t) - 1.0, np.abs(xi_r) - 1.0], axis=1
        )
        self.phase_rows = np.concatenate([phi, np.angle(xi_t), np.angle(xi_r)], axis=1)

    def row(self, iteration: int) -> int:
        """Row index for a 1-based iteration."""
        return min(iteration - 1, self.psi_rows.shape[0] - 1) if self.varying else 0

    def psi_at(self, iteration: int) -> np.ndarray:
        return self.psi_rows[self.row(iteration)]

    def profile_at(self, iteration: int) -> ImbalanceProfile:
        psi = self.psi_at(iteration)
        xi = psi / psi[0]
        xi[0] = 1.0
        gpi = estimate_txrx_gpi(xi, self.geom)
        phi = unwrap_phase(np.angle(xi))
        return ImbalanceProfile(
            psi=psi,
            xi=xi,
            xi_t=gpi.xi_t,
            xi_r=gpi.xi_r,
            gamma=np.abs(xi) - 1.0,
            phi=phi,
            f_delta=fit_phase_line(phi).p1 / TWO_PI,
        )


def draw_profile_timeline(
    cfg: ScenarioConfig, rng: np.random.Generator
) -> ProfileTimeline:
    """Draw the ground-truth imbalance trajectory for one trial."""
    spec = cfg.imbalance
    geom = cfg.geom
    if spec.kind == "explicit":
        xi_t = np.asarray(spec.xi_t, dtype=complex)
        xi_r = np.asarray(spec.xi_r, dtype=complex)
    else:
        xi_t, xi_r = _draw_factors(spec, geom, rng)

    if spec.kind == "heatup":
        base = factor_to_va(xi_t, xi_r)
        if spec.detrend:
            _, gamma, phi_inf = normalize_and_detrend(base)
        else:
            gamma, phi_inf = np.abs(base) - 1.0, unwrap_phase(np.angle(base))
        iters = np.arange(1, cfg.n_iterations + 1, dtype=float)
        scale = 1.0 - np.exp(-np.minimum(iters, spec.ramp_iterations) / spec.tau)
        xi_rows = (1.0 + gamma) * np.exp(1j * np.outer(scale, phi_inf))
    else:
        xi = factor_to_va(xi_t, xi_r)
        if spec.detrend:
            xi, _, _ = normalize_and_detrend(xi)
        xi_rows = xi[None, :]

    if cfg.sbb_injection is not None:
        inj = cfg.sbb_injection
        mask = np.ones(geom.k, dtype=complex)
        offset = np.exp(1j * np.deg2rad(inj.offset_deg))
        if inj.side == "rx":
            mask[np.arange(geom.k) % geom.k_r == inj.index - 1] = offset
        else:
            mask[np.arange(geom.k) // geom.k_r == inj.index - 1] = offset
        n = cfg.n_iterations
        rows = np.broadcast_to(xi_rows, (n, geom.k)).copy() if xi_rows.shape[0] == 1 else xi_rows.copy()
        rows[inj.at_iteration - 1 :] *= mask
        xi_rows = rows

    return ProfileTimeline(geom, xi_rows)


def draw_targets(cfg: ScenarioConfig, rng: np.random.Generator) -> TargetSet:
    """Draw one scene's target set from the two-set model."""
    counts1 = np.fromiter(cfg.primary_count_pmf.keys(), dtype=int)
    cum1 = np.cumsum(np.fromiter(cfg.primary_count_pmf.values(), dtype=float))
    counts2 = np.fromiter(cfg.secondary_count_pmf.keys(), dtype=int)
    cum2 = np.cumsum(np.fromiter(cfg.secondary_count_pmf.values(), dtype=float))
    q1 = int(counts1[min(np.searchsorted(cum1, rng.random(), side="right"), len(counts1) - 1)])
    q2 = int(counts2[min(np.searchsorted(cum2, rng.random(), side="right"), len(counts2) - 1)])
    p_db = rng.uniform(*cfg.primary_amp_db_range, q1)
    dominant_db = p_db.max() if q1 else 0.0
    s_db = dominant_db + rng.uniform(*cfg.secondary_amp_db_range, q2)
    all_db = np.concatenate([p_db, s_db])
    q = q1 + q2
    amps = 10.0 ** (all_db / 20.0) * np.exp(1j * rng.uniform(-np.pi, np.pi, q))
    doas = rng.uniform(*cfg.doa_range_deg, q)
    freqs = cfg.geom.spacing_over_lambda * np.sin(np.deg2rad(doas))
    # Guard the half-open frequency domain; theta = +90 deg maps to +d/lambda.
    freqs[freqs >= 0.5] = -0.5
    return TargetSet(amps, freqs)


def generate_scene(
    cfg: ScenarioConfig,
    rng: np.random.Generator | int,
    profile: ProfileTimeline | ImbalanceProfile | None = None,
    iteration: int = 1,
) -> tuple[TargetSet, ImbalanceProfile, SignalVector]:
    """Draw one scene: targets, ground-truth profile, and the measured vector."""
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if profile is None:
        profile = draw_profile_timeline(cfg, gen)
    prof = profile.profile_at(iteration) if isinstance(profile, ProfileTimeline) else profile
    targets = draw_targets(cfg, gen)
    ideal = synthesize_ideal(targets, cfg.geom)
    peak = float(np.abs(targets.amplitudes).max()) if targets.q else 1.0
    noise = NoiseModel(snr_db=cfg.snr_db, enabled=cfg.noise_enabled)
    measured = apply_imbalance(ideal, prof, noise, gen, peak_amplitude=peak)
    return targets, prof, measured


def scene_batch(cfg: ScenarioConfig, rng: np.random.Generator, n: int) -> dict:
    """Pre-draw all randomness for ``n`` scenes as flat arrays.

    Used by the compiled trial kernels: target counts, amplitude draws,
    phases, directions, and unit-variance complex noise are drawn up
    front so the iteration loop itself is deterministic array math.
    """
    counts1 = np.fromiter(cfg.primary_count_pmf.keys(), dtype=np.int64)
    cum1 = np.cumsum(np.fromiter(cfg.primary_count_pmf.values(), dtype=float))
    counts2 = np.fromiter(cfg.secondary_count_pmf.keys(), dtype=np.int64)
    cum2 = np.cumsum(np.fromiter(cfg.secondary_count_pmf.values(), dtype=float))
    i1 = np.minimum(np.searchsorted(cum1, rng.random(n), side="right"), len(counts1) - 1)
    i2 = np.minimum(np.searchsorted(cum2, rng.random(n), side="right"), len(counts2) - 1)
    q1s = counts1[i1]
    q2s = counts2[i2]
    max1 = int(counts1.max())
    max2 = int(counts2.max())
    max_q = max1 + max2
    k = cfg.geom.k
    return {
        "q1s": q1s,
        "q2s": q2s,
        "p_db": rng.uniform(*cfg.primary_amp_db_range, (n, max(max1, 1))),
        "s_db": rng.uniform(*cfg.secondary_amp_db_range, (n, max(max2, 1))),
        "phases": rng.uniform(-np.pi, np.pi, (n, max(max_q, 1))),
        "doas": rng.uniform(*cfg.doa_range_deg, (n, max(max_q, 1))),
        "noise": math.sqrt(0.5)
        * (rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))),
    }
