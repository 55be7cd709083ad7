"""Monte Carlo experiment drivers and metric aggregation.

Each trial is an independent work item: it draws its own ground truth and
scene stream from a per-trial seed (spawned deterministically from the
experiment seed), runs the compiled trial kernel, and returns raw per-trial
results. The parent reduces trials in index order, so metrics are
bit-identical regardless of worker count or completion order.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import ExperimentError
from ..nlms import EstimatorConfig, schedule_per_iteration
from ..reconstruction import CleanConfig, dft_operator
from ..factorization import SbbConfig, SbbReport
from . import _kernels
from .scenario import ProfileTimeline, ScenarioConfig, draw_profile_timeline, scene_batch

MODES = ("calibration", "st_baseline", "sbb", "combined")

_DUMMY_F = np.zeros((1, 1))
_DUMMY_C = np.zeros((1, 1), dtype=complex)


def trial_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    """Deterministic per-trial seed sequences; index 0 is experiment-level."""
    return np.random.SeedSequence(seed).spawn(n + 1)


@dataclass
class GpiErrorCurves:
    """Cross-trial error statistics of one estimator.

    Channel axes concatenate the virtual array and the Tx/Rx factors as
    [va | tx | rx]; ``channels`` labels each column with (side, index).
    Phases are in radians.
    """

    channels: list[tuple[str, int]]
    bias_gain: np.ndarray
    bias_phase: np.ndarray
    var_gain: np.ndarray
    var_phase: np.ndarray
    mae_gain: np.ndarray
    mae_phase: np.ndarray
    mean_recon_error: np.ndarray | None = None
    skips: int = 0
    updates: int | None = None

    def side(self, name: str) -> slice:
        idx = [i for i, (s, _) in enumerate(self.channels) if s == name]
        return slice(idx[0], idx[-1] + 1)


@dataclass
class SbbStats:
    """Detection outcome statistics over all trials."""

    injected_at: int | None
    detection_iterations: np.ndarray  # 1-based; -1 where never detected
    primary_channels: list[tuple[str, int] | None]
    delays: np.ndarray
    n_missed: int
    n_false_alarms: int
    mean_delay: float
    max_delay: float
    skips: int = 0


@dataclass
class Metrics:
    """Aggregated experiment metrics; fields are mode-dependent."""

    n_mcs: int
    n_iterations: int
    proposed: GpiErrorCurves | None = None
    st: GpiErrorCurves | None = None
    sbb: SbbStats | None = None


@dataclass
class TrialTrace:
    """Per-iteration estimates of one retained trial."""

    gamma_hat: np.ndarray
    phi_hat: np.ndarray
    recon_error: np.ndarray | None = None
    fast_phase: np.ndarray | None = None
    sbb: SbbReport | None = None


@dataclass
class ExperimentResult:
    metrics: Metrics
    traces: list[TrialTrace] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)
    elapsed_seconds: float = 0.0


def channel_labels(geom) -> list[tuple[str, int]]:
    return (
        [("va", i + 1) for i in range(geom.k)]
        + [("tx", i + 1) for i in range(geom.k_t)]
        + [("rx", i + 1) for i in range(geom.k_r)]
    )


def _rng_from(seed_seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_seq))


@dataclass(frozen=True)
class _TrialSpec:
    """Everything one worker needs to run one trial."""

    scenario: ScenarioConfig
    estimator: EstimatorConfig
    clean: CleanConfig
    mode: str
    sbb: SbbConfig | None
    seed_entropy: tuple
    spawn_key: tuple
    run_prop: bool
    run_st: bool
    record_err: bool
    record_xi: bool
    record_trace: bool
    exact_recon: bool
    bias_from: int
    fixed_psi: tuple | None  # shared ground truth (re/im pairs) or None


def _build_timeline(spec: _TrialSpec, rng) -> ProfileTimeline:
    if spec.fixed_psi is not None:
        psi = np.array(spec.fixed_psi[0]) + 1j * np.array(spec.fixed_psi[1])
        return ProfileTimeline(spec.scenario.geom, psi[None, :])
    return draw_profile_timeline(spec.scenario, rng)


def run_single_trial(spec: _TrialSpec) -> dict:
    """Execute one trial and return its raw results (worker entry point)."""
    cfg = spec.scenario
    geom = cfg.geom
    n = cfg.n_iterations
    k, k_t, k_r = geom.k, geom.k_t, geom.k_r
    n_ch = k + k_t + k_r
    rng = _rng_from(np.random.SeedSequence(entropy=spec.seed_entropy, spawn_key=spec.spawn_key))
    timeline = _build_timeline(spec, rng)
    batch = scene_batch(cfg, rng, n)
    w, grid = dft_operator(spec.clean.fft_len, k)
    mu_rows = schedule_per_iteration(spec.estimator, n)
    sigma_scale = 10.0 ** (-cfg.snr_db / 20.0)
    varying = 1 if timeline.varying else 0

    if spec.mode in ("sbb", "combined"):
        assert spec.sbb is not None
        trace_phase = np.zeros((n, k_t + k_r)) if spec.record_trace else _DUMMY_F
        first_cross, rx_mask, tx_mask, skips = _kernels.sbb_trial(
            w,
            grid,
            geom.spacing_over_lambda,
            batch["q1s"],
            batch["q2s"],
            batch["p_db"],
            batch["s_db"],
            batch["phases"],
            batch["doas"],
            batch["noise"],
            1 if cfg.noise_enabled else 0,
            sigma_scale,
            timeline.psi_rows,
            varying,
            mu_rows,
            spec.sbb.mu_0_fast,
            1 if spec.mode == "combined" else 0,
            spec.clean.stop_ratio_linear,
            spec.clean.max_targets,
            float(np.deg2rad(spec.sbb.delta)),
            k_t,
            k_r,
            1 if spec.record_trace else 0,
            trace_phase,
        )
        return {
            "first_cross": int(first_cross),
            "rx_mask": int(rx_mask),
            "tx_mask": int(tx_mask),
            "skips": int(skips),
            "trace_phase": trace_phase if spec.record_trace else None,
        }

    p_err_gain = np.zeros((n, n_ch)) if spec.record_err and spec.run_prop else _DUMMY_F
    p_err_phase = np.zeros((n, n_ch)) if spec.record_err and spec.run_prop else _DUMMY_F
    p_rec_err = np.zeros(n) if spec.record_err and spec.run_prop else np.zeros(1)
    s_err_gain = np.zeros((n, n_ch)) if spec.record_err and spec.run_st else _DUMMY_F
    s_err_phase = np.zeros((n, n_ch)) if spec.record_err and spec.run_st else _DUMMY_F
    p_xi_trace = np.zeros((n, k), dtype=complex) if spec.record_xi else _DUMMY_C
    s_xi_trace = (
        np.zeros((n, k), dtype=complex) if spec.record_xi and spec.run_st else _DUMMY_C
    )
    p_psi_final = np.ones(k, dtype=complex)
    p_xi_final = np.ones(k, dtype=complex)
    s_psi_final = np.ones(k, dtype=complex)
    s_xi_final = np.ones(k, dtype=complex)
    u1_sum = np.zeros(k)
    u2_sum = np.zeros(k, dtype=complex)
    err_psi_sum = np.zeros(k, dtype=complex)

    skips, st_updates, bias_count = _kernels.calibration_trial(
        w,
        grid,
        geom.spacing_over_lambda,
        _DUMMY_C,
        0,
        batch["q1s"],
        batch["q2s"],
        batch["p_db"],
        batch["s_db"],
        batch["phases"],
        batch["doas"],
        batch["noise"],
        1 if cfg.noise_enabled else 0,
        sigma_scale,
        timeline.psi_rows,
        timeline.gain_rows,
        timeline.phase_rows,
        varying,
        mu_rows,
        spec.clean.stop_ratio_linear,
        spec.clean.max_targets,
        1 if spec.run_prop else 0,
        1 if spec.run_st else 0,
        1 if spec.exact_recon else 0,
        1 if spec.record_err else 0,
        1 if spec.record_xi else 0,
        spec.bias_from,
        k_t,
        k_r,
        p_err_gain,
        p_err_phase,
        p_rec_err,
        p_xi_trace,
        p_psi_final,
        p_xi_final,
        s_err_gain,
        s_err_phase,
        s_xi_trace,
        s_psi_final,
        s_xi_final,
        u1_sum,
        u2_sum,
        err_psi_sum,
    )
    out = {
        "skips": int(skips),
        "st_updates": int(st_updates),
        "bias_count": int(bias_count),
        "p_psi_final": p_psi_final,
        "p_xi_final": p_xi_final,
        "s_psi_final": s_psi_final,
        "s_xi_final": s_xi_final,
        "psi_truth": timeline.psi_rows[-1].copy(),
        "truth_gain": timeline.gain_rows[-1].copy(),
        "truth_phase": timeline.phase_rows[-1].copy(),
    }
    if spec.record_err and spec.run_prop:
        out.update(p_err_gain=p_err_gain, p_err_phase=p_err_phase, p_rec_err=p_rec_err)
    if spec.record_err and spec.run_st:
        out.update(s_err_gain=s_err_gain, s_err_phase=s_err_phase)
    if spec.record_xi:
        out["p_xi_trace"] = p_xi_trace
        if spec.run_st:
            out["s_xi_trace"] = s_xi_trace
    if spec.bias_from >= 0:
        out.update(u1_sum=u1_sum, u2_sum=u2_sum, err_psi_sum=err_psi_sum)
    if spec.record_err:
        out["truth_gain_rows"] = timeline.gain_rows
        out["truth_phase_rows"] = timeline.phase_rows
    return out


def pool_map(fn, items, workers: int):
    """Order-preserving map, inline for workers <= 1."""
    if workers <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (workers * 4))))


class _CurveAccumulator:
    """Running first/second moments of error curves, reduced in trial order."""

    def __init__(self, n_iter: int, n_ch: int, k: int):
        self.k = k
        self.n = 0
        self.sum_gain = np.zeros((n_iter, n_ch))
        self.sumsq_gain = np.zeros((n_iter, n_ch))
        self.sum_phase = np.zeros((n_iter, n_ch))
        self.sumsq_phase = np.zeros((n_iter, n_ch))
        self.mae_gain = np.zeros(n_iter)
        self.mae_phase = np.zeros(n_iter)
        self.rec_err = np.zeros(n_iter)
        self.skips = 0
        self.updates = 0

    def add(self, err_gain, err_phase, rec_err=None, skips=0, updates=0):
        self.n += 1
        self.sum_gain += err_gain
        self.sumsq_gain += err_gain * err_gain
        self.sum_phase += err_phase
        self.sumsq_phase += err_phase * err_phase
        self.mae_gain += np.abs(err_gain[:, : self.k]).mean(axis=1)
        self.mae_phase += np.abs(err_phase[:, : self.k]).mean(axis=1)
        if rec_err is not None:
            self.rec_err += rec_err
        self.skips += skips
        self.updates += updates

    def finalize(self, channels, with_recon: bool) -> GpiErrorCurves:
        n = max(self.n, 1)
        bias_gain = self.sum_gain / n
        bias_phase = self.sum_phase / n
        denom = max(n - 1, 1)
        var_gain = np.maximum(self.sumsq_gain - n * bias_gain**2, 0.0) / denom
        var_phase = np.maximum(self.sumsq_phase - n * bias_phase**2, 0.0) / denom
        return GpiErrorCurves(
            channels=channels,
            bias_gain=bias_gain,
            bias_phase=bias_phase,
            var_gain=var_gain,
            var_phase=var_phase,
            mae_gain=self.mae_gain / n,
            mae_phase=self.mae_phase / n,
            mean_recon_error=self.rec_err / n if with_recon else None,
            skips=self.skips,
            updates=self.updates,
        )


def _primary_channel(rx_mask: int, tx_mask: int) -> tuple[str, int] | None:
    for r in range(64):
        if rx_mask >> r & 1:
            return ("rx", r + 1)
    for t in range(64):
        if tx_mask >> t & 1:
            return ("tx", t + 1)
    return None


def run_experiment(
    scenario: ScenarioConfig,
    estimator_cfg: EstimatorConfig,
    clean_cfg: CleanConfig,
    mode: str = "calibration",
    sbb_cfg: SbbConfig | None = None,
    include_st: bool = False,
    workers: int = 1,
    keep_traces: int = 0,
    force_exact_reconstruction: bool = False,
    bias_window_start: int | None = None,
    fixed_psi: np.ndarray | None = None,
) -> ExperimentResult:
    """Run ``scenario.n_mcs`` independent trials of the selected pipeline.

    Modes: "calibration" (optionally with the single-target baseline in
    parallel on the same scenes via ``include_st``), "st_baseline",
    "sbb" (standalone fast detection bank), "combined" (shared
    reconstruction driving calibration and detection banks).

    Per-trial failures are recorded, not fatal; more than 5% failed trials
    raises :class:`ExperimentError`.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode in ("sbb", "combined") and sbb_cfg is None:
        raise ValueError(f"mode {mode!r} requires sbb_cfg")
    t0 = time.perf_counter()
    seeds = trial_seeds(scenario.seed, scenario.n_mcs)
    run_prop = mode != "st_baseline"
    run_st = include_st or mode == "st_baseline"
    record_err = mode in ("calibration", "st_baseline")
    specs = [
        _TrialSpec(
            scenario=scenario,
            estimator=estimator_cfg,
            clean=clean_cfg,
            mode=mode,
            sbb=sbb_cfg,
            seed_entropy=tuple(np.atleast_1d(seeds[t + 1].entropy)),
            spawn_key=seeds[t + 1].spawn_key,
            run_prop=run_prop,
            run_st=run_st,
            record_err=record_err,
            record_xi=False,
            record_trace=t < keep_traces,
            exact_recon=force_exact_reconstruction,
            bias_from=(bias_window_start - 1) if bias_window_start else -1,
            fixed_psi=(
                (tuple(fixed_psi.real), tuple(fixed_psi.imag))
                if fixed_psi is not None
                else None
            ),
        )
        for t in range(scenario.n_mcs)
    ]
    results = pool_map(run_single_trial, specs, workers)
    elapsed = time.perf_counter() - t0
    return _reduce(scenario, mode, run_prop, run_st, record_err, sbb_cfg, keep_traces, results, elapsed)


def _trial_failed(res: dict) -> str | None:
    for key in ("p_psi_final", "s_psi_final"):
        if key in res and not np.all(np.isfinite(res[key].view(float))):
            return f"non-finite {key}"
    if "first_cross" not in res:
        for key in ("p_err_gain", "s_err_gain"):
            if key in res and not np.all(np.isfinite(res[key])):
                return f"non-finite {key}"
    return None


def _reduce(
    scenario, mode, run_prop, run_st, record_err, sbb_cfg, keep_traces, results, elapsed
) -> ExperimentResult:
    geom = scenario.geom
    n_iter = scenario.n_iterations
    channels = channel_labels(geom)
    n_ch = len(channels)
    failures: list[tuple[int, str]] = []
    traces: list[TrialTrace] = []

    if mode in ("sbb", "combined"):
        det = np.full(len(results), -1, dtype=int)
        prim: list[tuple[str, int] | None] = []
        skips = 0
        injected_at = scenario.sbb_injection.at_iteration if scenario.sbb_injection else None
        for t, res in enumerate(results):
            skips += res["skips"]
            if res["first_cross"] >= 0:
                det[t] = res["first_cross"] + 1
            prim.append(_primary_channel(res["rx_mask"], res["tx_mask"]))
            if res.get("trace_phase") is not None and len(traces) < keep_traces:
                report = None
                if det[t] > 0:
                    report = SbbReport(
                        detected=True,
                        channels=(prim[-1],) if prim[-1] else (),
                        detection_iteration=int(det[t]),
                    )
                traces.append(
                    TrialTrace(
                        gamma_hat=np.empty((0, 0)),
                        phi_hat=np.empty((0, 0)),
                        fast_phase=res["trace_phase"],
                        sbb=report,
                    )
                )
        detected = det > 0
        if injected_at is None:
            delays = np.empty(0, dtype=int)
            false_alarms = int(detected.sum())
            missed = 0
        else:
            timely = detected & (det >= injected_at)
            delays = det[timely] - injected_at + 1
            false_alarms = int((detected & (det < injected_at)).sum())
            missed = int((~detected).sum())
        stats = SbbStats(
            injected_at=injected_at,
            detection_iterations=det,
            primary_channels=prim,
            delays=delays,
            n_missed=missed,
            n_false_alarms=false_alarms,
            mean_delay=float(delays.mean()) if delays.size else float("nan"),
            max_delay=float(delays.max()) if delays.size else float("nan"),
            skips=skips,
        )
        metrics = Metrics(n_mcs=len(results), n_iterations=n_iter, sbb=stats)
        return ExperimentResult(metrics, traces, failures, elapsed)

    acc_p = _CurveAccumulator(n_iter, n_ch, geom.k) if run_prop and record_err else None
    acc_s = _CurveAccumulator(n_iter, n_ch, geom.k) if run_st and record_err else None
    for t, res in enumerate(results):
        why = _trial_failed(res)
        if why is not None:
            failures.append((t, why))
            continue
        if acc_p is not None:
            acc_p.add(
                res["p_err_gain"], res["p_err_phase"], res.get("p_rec_err"), res["skips"]
            )
        if acc_s is not None:
            acc_s.add(
                res["s_err_gain"],
                res["s_err_phase"],
                None,
                0,
                res["st_updates"],
            )
        if record_err and len(traces) < keep_traces:
            err_g = res["p_err_gain"] if run_prop else res["s_err_gain"]
            err_p = res["p_err_phase"] if run_prop else res["s_err_phase"]
            truth_g = res["truth_gain_rows"]
            truth_p = res["truth_phase_rows"]
            traces.append(
                TrialTrace(
                    gamma_hat=err_g + truth_g[np.minimum(np.arange(n_iter), truth_g.shape[0] - 1)],
                    phi_hat=err_p + truth_p[np.minimum(np.arange(n_iter), truth_p.shape[0] - 1)],
                    recon_error=res.get("p_rec_err") if run_prop else None,
                )
            )
    if len(failures) > 0.05 * max(len(results), 1):
        raise ExperimentError(
            f"{len(failures)} of {len(results)} trials failed: {failures[:3]}"
        )
    metrics = Metrics(
        n_mcs=len(results) - len(failures),
        n_iterations=n_iter,
        proposed=acc_p.finalize(channels, True) if acc_p is not None else None,
        st=acc_s.finalize(channels, False) if acc_s is not None else None,
    )
    return ExperimentResult(metrics, traces, failures, elapsed)
