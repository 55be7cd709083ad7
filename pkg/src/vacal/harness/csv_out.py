"""CSV emission for experiment results.

One file per metric, each with a header row. Floats are written with
``repr`` (shortest round-trip form), so identical runs produce identical
bytes.
"""

import csv
from pathlib import Path

import numpy as np

from .experiments import GpiErrorCurves, Metrics, SbbStats
from .replay import RelativeEstimationResult
from .slls import HeatmapCell, SllsStats


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_gpi_curves(out_dir: str | Path, curves: GpiErrorCurves, method: str) -> list[Path]:
    """bias.csv / variance.csv / mae.csv for one estimator's error curves."""
    out_dir = Path(out_dir)
    paths = []
    n_iter = curves.bias_gain.shape[0]

    def channel_rows(gain, phase_deg):
        for i in range(n_iter):
            for c, (side, idx) in enumerate(curves.channels):
                yield (i + 1, side, idx, gain[i, c], phase_deg[i, c])

    path = out_dir / f"bias_{method}.csv"
    _write_rows(
        path,
        ["iteration", "side", "channel", "gain_bias", "phase_bias_deg"],
        channel_rows(curves.bias_gain, np.rad2deg(curves.bias_phase)),
    )
    paths.append(path)
    path = out_dir / f"variance_{method}.csv"
    _write_rows(
        path,
        ["iteration", "side", "channel", "gain_var", "phase_var_deg2"],
        channel_rows(curves.var_gain, curves.var_phase * np.rad2deg(1.0) ** 2),
    )
    paths.append(path)
    path = out_dir / f"mae_{method}.csv"
    rows = (
        (i + 1, curves.mae_gain[i], np.rad2deg(curves.mae_phase[i]))
        for i in range(n_iter)
    )
    _write_rows(path, ["iteration", "mae_gain", "mae_phase_deg"], rows)
    paths.append(path)
    if curves.mean_recon_error is not None:
        path = out_dir / f"recon_error_{method}.csv"
        _write_rows(
            path,
            ["iteration", "mean_recon_error"],
            ((i + 1, curves.mean_recon_error[i]) for i in range(n_iter)),
        )
        paths.append(path)
    return paths


def write_metrics(out_dir: str | Path, metrics: Metrics) -> list[Path]:
    paths = []
    if metrics.proposed is not None:
        paths += write_gpi_curves(out_dir, metrics.proposed, "proposed")
    if metrics.st is not None:
        paths += write_gpi_curves(out_dir, metrics.st, "st")
    if metrics.sbb is not None:
        paths.append(write_sbb_stats(out_dir, metrics.sbb))
    return paths


def write_sbb_stats(out_dir: str | Path, stats: SbbStats) -> Path:
    path = Path(out_dir) / "sbb_detections.csv"
    rows = []
    for t, det in enumerate(stats.detection_iterations):
        channel = stats.primary_channels[t]
        delay = ""
        if det > 0 and stats.injected_at is not None and det >= stats.injected_at:
            delay = det - stats.injected_at + 1
        rows.append(
            (
                t,
                int(det > 0),
                det if det > 0 else "",
                channel[0] if channel else "",
                channel[1] if channel else "",
                delay,
            )
        )
    _write_rows(
        path,
        ["trial", "detected", "detection_iteration", "side", "channel", "delay"],
        rows,
    )
    return path


def write_slls_stats(out_dir: str | Path, stats: SllsStats, name: str = "slls") -> Path:
    path = Path(out_dir) / f"{name}.csv"
    methods = sorted(stats.values)
    n = max(len(v) for v in stats.values.values())
    rows = []
    for t in range(n):
        for m in methods:
            if t < len(stats.values[m]):
                rows.append((t, m, stats.values[m][t]))
    _write_rows(path, ["trial", "method", "slls_db"], rows)
    return path


def write_heatmap(out_dir: str | Path, cells: list[HeatmapCell]) -> Path:
    path = Path(out_dir) / "slls_heatmap.csv"
    rows = []
    for cell in cells:
        for method in sorted(cell.stats.values):
            rows.append(
                (
                    cell.snr_db,
                    cell.level,
                    method,
                    cell.stats.mean[method],
                    cell.stats.max[method],
                )
            )
    _write_rows(path, ["snr_db", "level", "method", "mean_slls_db", "max_slls_db"], rows)
    return path


def write_relative_estimation(out_dir: str | Path, result: RelativeEstimationResult) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    for method in sorted(result.mae_phase):
        path = out_dir / f"replay_mae_{method}.csv"
        rows = (
            (i + 1, result.mae_gain[method][i], np.rad2deg(result.mae_phase[method][i]))
            for i in range(result.n_iterations)
        )
        _write_rows(path, ["iteration", "mae_gain", "mae_phase_deg"], rows)
        paths.append(path)
    return paths
