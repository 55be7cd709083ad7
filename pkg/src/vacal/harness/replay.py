"""Replay files and the two-pass relative estimation used on recordings.

A replay file stores extracted signal vectors as plain text, one vector
per line:

    frame_id, peak_id, K, re_1, im_1, ..., re_K, im_K

with values in decimal (at least nine significant digits are written) and
``#`` starting comment lines.

Recordings have no imbalance ground truth, so estimation quality is
scored relatively: a first estimation on the odd-position vectors gives a
baseline; per Monte Carlo trial, random artificial imbalances distort the
even-position vectors, a second estimation runs on those, and the ratio
of the second estimate to the baseline is compared against the artificial
injection (detrended, since its linear-phase part is unobservable). The
odd/even split decorrelates the two estimations.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..array_model import ArrayGeometry
from ..errors import InsufficientDataError, ReplayFormatError
from ..nlms import EstimatorConfig, normalize_and_detrend, schedule_per_iteration, unwrap_phase
from ..reconstruction import CleanConfig, dft_operator
from . import _kernels
from .experiments import channel_labels, pool_map, trial_seeds, _rng_from
from .scenario import ImbalanceSpec, ScenarioConfig, draw_profile_timeline, generate_scene

MIN_REPLAY_VECTORS = 100


def write_replay_file(
    path: str | Path,
    vectors: np.ndarray,
    frame_ids: np.ndarray | None = None,
    peak_ids: np.ndarray | None = None,
) -> None:
    """Write signal vectors (n, K) to the line-oriented replay format."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=complex))
    n, k = vectors.shape
    frame_ids = np.arange(n) if frame_ids is None else np.asarray(frame_ids)
    peak_ids = np.zeros(n, dtype=int) if peak_ids is None else np.asarray(peak_ids)
    with open(path, "w") as fh:
        fh.write("# replay: frame_id, peak_id, K, re_1, im_1, ..., re_K, im_K\n")
        for i in range(n):
            parts = [str(int(frame_ids[i])), str(int(peak_ids[i])), str(k)]
            for z in vectors[i]:
                parts.append(f"{z.real:.12g}")
                parts.append(f"{z.imag:.12g}")
            fh.write(", ".join(parts) + "\n")


def read_replay_file(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a replay file; returns (frame_ids, peak_ids, vectors (n, K))."""
    frames, peaks, rows = [], [], []
    k_expected = None
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            fields = [f.strip() for f in text.split(",")]
            try:
                frame, peak, k = int(fields[0]), int(fields[1]), int(fields[2])
                values = [float(f) for f in fields[3:]]
            except (ValueError, IndexError) as exc:
                raise ReplayFormatError(f"line {line_no}: {exc}") from exc
            if len(values) != 2 * k:
                raise ReplayFormatError(
                    f"line {line_no}: expected {2 * k} samples, got {len(values)}"
                )
            if k_expected is None:
                k_expected = k
            elif k != k_expected:
                raise ReplayFormatError(
                    f"line {line_no}: K changed from {k_expected} to {k}"
                )
            frames.append(frame)
            peaks.append(peak)
            rows.append(np.array(values[0::2]) + 1j * np.array(values[1::2]))
    if not rows:
        raise ReplayFormatError(f"{path}: no data lines")
    return np.asarray(frames), np.asarray(peaks), np.vstack(rows)


def synthesize_replay_file(
    path: str | Path, scenario: ScenarioConfig, n_vectors: int, seed: int = 0
) -> np.ndarray:
    """Generate a synthetic recording from a scenario (fixed ground truth)."""
    rng = np.random.default_rng(seed)
    timeline = draw_profile_timeline(scenario, rng)
    vectors = np.empty((n_vectors, scenario.geom.k), dtype=complex)
    for i in range(n_vectors):
        _, _, measured = generate_scene(scenario, rng, profile=timeline, iteration=i + 1)
        vectors[i] = measured.samples
    write_replay_file(path, vectors, frame_ids=np.arange(n_vectors) // 10)
    return vectors


@dataclass
class RelativeEstimationResult:
    """Error metrics of the artificial-imbalance recovery, per method."""

    n_mcs: int
    n_iterations: int
    channels: list[tuple[str, int]]
    mae_phase: dict[str, np.ndarray]  # method -> (n_iter,) radians
    mae_gain: dict[str, np.ndarray]
    final_phase_err: dict[str, np.ndarray]  # method -> (n_mcs, n_ch) radians
    final_gain_err: dict[str, np.ndarray]
    baseline_xi: dict[str, np.ndarray]


def _run_replay_pass(vectors, geom, estimator_cfg, clean_cfg, with_st, record_xi):
    """One estimation pass over provided vectors; returns final/trace states."""
    n, k = vectors.shape
    w, grid = dft_operator(clean_cfg.fft_len, k)
    mu_rows = schedule_per_iteration(estimator_cfg, n)
    dummy_f = np.zeros((1, 1))
    dummy_c = np.zeros((1, 1), dtype=complex)
    ones_row = np.ones((1, k), dtype=complex)
    zeros_row = np.zeros((1, k + geom.k_t + geom.k_r))
    p_xi_trace = np.zeros((n, k), dtype=complex) if record_xi else dummy_c
    s_xi_trace = np.zeros((n, k), dtype=complex) if record_xi and with_st else dummy_c
    finals = [np.ones(k, dtype=complex) for _ in range(4)]
    scalars = _kernels.calibration_trial(
        w,
        grid,
        geom.spacing_over_lambda,
        np.ascontiguousarray(vectors),
        1,
        np.zeros(n, dtype=np.int64),
        np.zeros(n, dtype=np.int64),
        dummy_f,
        dummy_f,
        dummy_f,
        dummy_f,
        dummy_c,
        0,
        0.0,
        ones_row,
        zeros_row,
        zeros_row,
        0,
        mu_rows,
        clean_cfg.stop_ratio_linear,
        clean_cfg.max_targets,
        1,
        1 if with_st else 0,
        0,
        0,
        1 if record_xi else 0,
        -1,
        geom.k_t,
        geom.k_r,
        dummy_f,
        dummy_f,
        np.zeros(1),
        p_xi_trace,
        finals[0],
        finals[1],
        dummy_f,
        dummy_f,
        s_xi_trace,
        finals[2],
        finals[3],
        np.zeros(k),
        np.zeros(k, dtype=complex),
        np.zeros(k, dtype=complex),
    )
    return {
        "p_xi_final": finals[1],
        "s_xi_final": finals[3],
        "p_xi_trace": p_xi_trace,
        "s_xi_trace": s_xi_trace,
        "skips": scalars[0],
    }


def _ratio_errors(xi_trace, baseline_xi, truth_gain, truth_phase, k_t, k_r):
    """Per-iteration gain/phase errors of (trace / baseline) vs the truth."""
    ratio = xi_trace / baseline_xi
    ratio[:, 0] = 1.0
    gain = np.abs(ratio) - 1.0
    phase = np.unwrap(np.angle(ratio), axis=1)
    b = ((1.0 + gain) * np.exp(1j * phase)).reshape(-1, k_t, k_r)
    xi_t = (b / b[:, :1, :]).mean(axis=2)
    xi_r = (b / b[:, :, :1]).mean(axis=1)
    xi_t[:, 0] = 1.0
    xi_r[:, 0] = 1.0
    gain_all = np.concatenate([gain, np.abs(xi_t) - 1.0, np.abs(xi_r) - 1.0], axis=1)
    phase_all = np.concatenate([phase, np.angle(xi_t), np.angle(xi_r)], axis=1)
    return gain_all - truth_gain, phase_all - truth_phase


def relative_estimation(
    source: str | Path | np.ndarray,
    geom: ArrayGeometry,
    estimator_cfg: EstimatorConfig,
    clean_cfg: CleanConfig,
    n_mcs: int,
    seed: int = 0,
    phase_range_deg: tuple[float, float] = (-20.0, 20.0),
    gain_range: tuple[float, float] = (-0.2, 0.2),
    workers: int = 1,
    include_st: bool = True,
) -> RelativeEstimationResult:
    """Two-pass relative imbalance estimation on recorded vectors."""
    if isinstance(source, (str, Path)):
        _, _, vectors = read_replay_file(source)
    else:
        vectors = np.atleast_2d(np.asarray(source, dtype=complex))
    if vectors.shape[0] < MIN_REPLAY_VECTORS:
        raise InsufficientDataError(
            f"need at least {MIN_REPLAY_VECTORS} vectors, got {vectors.shape[0]}"
        )
    if vectors.shape[1] != geom.k:
        raise ReplayFormatError(
            f"vectors have K={vectors.shape[1]} but geometry expects {geom.k}"
        )
    odd = vectors[0::2]
    even = vectors[1::2]
    base = _run_replay_pass(odd, geom, estimator_cfg, clean_cfg, include_st, False)
    baseline = {"proposed": base["p_xi_final"], "st": base["s_xi_final"]}

    spec_cfg = ScenarioConfig(
        geom=geom,
        imbalance=ImbalanceSpec(
            kind="random",
            phase_range_deg=phase_range_deg,
            gain_range=gain_range,
            detrend=False,
        ),
        n_iterations=max(even.shape[0], 1),
        n_mcs=n_mcs,
        seed=seed,
    )
    seeds = trial_seeds(seed, n_mcs)
    methods = ["proposed"] + (["st"] if include_st else [])
    n2 = even.shape[0]
    n_ch = geom.k + geom.k_t + geom.k_r
    payloads = []
    for t in range(n_mcs):
        payloads.append((spec_cfg, even, estimator_cfg, clean_cfg, include_st,
                         tuple(np.atleast_1d(seeds[t + 1].entropy)), seeds[t + 1].spawn_key))
    results = pool_map(_replay_trial, payloads, workers)
    mae_phase = {m: np.zeros(n2) for m in methods}
    mae_gain = {m: np.zeros(n2) for m in methods}
    final_p = {m: np.zeros((n_mcs, n_ch)) for m in methods}
    final_g = {m: np.zeros((n_mcs, n_ch)) for m in methods}
    for t, res in enumerate(results):
        for m in methods:
            eg, ep = _ratio_errors(
                res[f"{m}_xi_trace"],
                baseline[m],
                res["truth_gain"],
                res["truth_phase"],
                geom.k_t,
                geom.k_r,
            )
            mae_gain[m] += np.abs(eg[:, : geom.k]).mean(axis=1)
            mae_phase[m] += np.abs(ep[:, : geom.k]).mean(axis=1)
            final_g[m][t] = eg[-1]
            final_p[m][t] = ep[-1]
    for m in methods:
        mae_gain[m] /= n_mcs
        mae_phase[m] /= n_mcs
    return RelativeEstimationResult(
        n_mcs=n_mcs,
        n_iterations=n2,
        channels=channel_labels(geom),
        mae_phase=mae_phase,
        mae_gain=mae_gain,
        final_phase_err=final_p,
        final_gain_err=final_g,
        baseline_xi={m: baseline[m] for m in methods},
    )


def _replay_trial(payload):
    """Worker: inject artificial imbalances into the even vectors, re-estimate."""
    spec_cfg, even, estimator_cfg, clean_cfg, include_st, entropy, spawn_key = payload
    rng = _rng_from(np.random.SeedSequence(entropy=entropy, spawn_key=spawn_key))
    timeline = draw_profile_timeline(spec_cfg, rng)
    xi_art = timeline.psi_rows[0]
    distorted = even * xi_art
    res = _run_replay_pass(
        distorted, spec_cfg.geom, estimator_cfg, clean_cfg, include_st, True
    )
    xi_c, gamma, phi = normalize_and_detrend(xi_art)
    res["truth_gain"] = np.concatenate(
        [gamma, *_factor_gpis(xi_c, spec_cfg.geom, gains=True)]
    )
    res["truth_phase"] = np.concatenate(
        [phi, *_factor_gpis(xi_c, spec_cfg.geom, gains=False)]
    )
    res["proposed_xi_trace"] = res.pop("p_xi_trace")
    res["st_xi_trace"] = res.pop("s_xi_trace")
    return res


def _factor_gpis(xi, geom, gains: bool):
    from ..factorization import estimate_txrx_gpi

    gpi = estimate_txrx_gpi(xi, geom)
    if gains:
        return gpi.gamma_t, gpi.gamma_r
    return gpi.phi_t, gpi.phi_r
