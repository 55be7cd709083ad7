"""Static plot emission (optional; every figure's data also lands in CSV)."""

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_convergence(out_dir, metrics, traces, title="GPI estimates") -> list[Path]:
    """Per-channel Tx/Rx phase and gain traces with cross-trial means."""
    plt = _pyplot()
    curves = metrics.proposed or metrics.st
    if curves is None:
        return []
    paths = []
    fig, axes = plt.subplots(2, 1, figsize=(8, 7), sharex=True)
    iters = np.arange(1, curves.bias_phase.shape[0] + 1)
    for ax, data, label in (
        (axes[0], np.rad2deg(curves.bias_phase), "phase bias [deg]"),
        (axes[1], curves.bias_gain, "gain bias"),
    ):
        for c, (side, idx) in enumerate(curves.channels):
            if side == "va":
                continue
            ax.plot(iters, data[:, c], label=f"{side}{idx}", lw=1.0)
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    axes[1].set_xlabel("iteration")
    axes[0].set_title(title)
    axes[0].legend(ncol=4, fontsize=7)
    path = Path(out_dir) / "convergence.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)
    if traces:
        fig, ax = plt.subplots(figsize=(8, 4))
        for trace in traces:
            if trace.phi_hat.size:
                ax.plot(np.rad2deg(trace.phi_hat[:, 0:]), color="0.7", lw=0.4)
        ax.set_xlabel("iteration")
        ax.set_ylabel("phase estimates [deg]")
        ax.grid(True, alpha=0.3)
        path = Path(out_dir) / "trial_traces.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def plot_mae_comparison(out_dir, metrics) -> list[Path]:
    plt = _pyplot()
    fig, axes = plt.subplots(2, 1, figsize=(8, 7), sharex=True)
    for name, curves in (("proposed", metrics.proposed), ("st", metrics.st)):
        if curves is None:
            continue
        iters = np.arange(1, curves.mae_phase.size + 1)
        axes[0].semilogy(iters, np.rad2deg(curves.mae_phase), label=name)
        axes[1].semilogy(iters, curves.mae_gain, label=name)
    axes[0].set_ylabel("MAE(phase) [deg]")
    axes[1].set_ylabel("MAE(gain)")
    axes[1].set_xlabel("iteration")
    for ax in axes:
        ax.grid(True, alpha=0.3)
        ax.legend()
    path = Path(out_dir) / "mae_comparison.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]


def plot_sbb_histogram(out_dir, stats) -> list[Path]:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    if stats.delays.size:
        ax.hist(stats.delays, bins=np.arange(0.5, stats.delays.max() + 1.5), color="C0")
    ax.set_xlabel("detection delay [iterations]")
    ax.set_ylabel("trials")
    ax.grid(True, alpha=0.3)
    path = Path(out_dir) / "sbb_histogram.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]


def plot_slls(out_dir, stats) -> list[Path]:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    methods = sorted(stats.values)
    data = [stats.values[m] for m in methods]
    ax.boxplot(data, tick_labels=methods)
    ax.set_ylabel("SLLS [dB]")
    ax.grid(True, alpha=0.3)
    path = Path(out_dir) / "slls.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]


def plot_heatmap(out_dir, cells) -> list[Path]:
    plt = _pyplot()
    snrs = sorted({c.snr_db for c in cells})
    levels = sorted({c.level for c in cells})
    methods = sorted(cells[0].stats.values)
    fig, axes = plt.subplots(1, len(methods), figsize=(4 * len(methods), 3.5), squeeze=False)
    grids = {}
    for method in methods:
        grid = np.full((len(levels), len(snrs)), np.nan)
        for cell in cells:
            grid[levels.index(cell.level), snrs.index(cell.snr_db)] = cell.stats.mean[method]
        grids[method] = grid
    vmin = min(np.nanmin(g) for g in grids.values())
    vmax = max(np.nanmax(g) for g in grids.values())
    for ax, method in zip(axes[0], methods):
        im = ax.imshow(grids[method], origin="lower", vmin=vmin, vmax=vmax, cmap="viridis")
        ax.set_xticks(range(len(snrs)), [f"{s:g}" for s in snrs])
        ax.set_yticks(range(len(levels)), [f"I{l}" for l in levels])
        ax.set_xlabel("SNR [dB]")
        ax.set_title(f"mean SLLS, {method}")
        fig.colorbar(im, ax=ax, shrink=0.8)
    axes[0][0].set_ylabel("imbalance level")
    path = Path(out_dir) / "slls_heatmap.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]


def plot_replay(out_dir, result) -> list[Path]:
    plt = _pyplot()
    fig, axes = plt.subplots(2, 1, figsize=(8, 7), sharex=True)
    for method in sorted(result.mae_phase):
        iters = np.arange(1, result.n_iterations + 1)
        axes[0].semilogy(iters, np.rad2deg(result.mae_phase[method]), label=method)
        axes[1].semilogy(iters, result.mae_gain[method], label=method)
    axes[0].set_ylabel("MAE(phase) [deg]")
    axes[1].set_ylabel("MAE(gain)")
    axes[1].set_xlabel("iteration")
    for ax in axes:
        ax.grid(True, alpha=0.3)
        ax.legend()
    path = Path(out_dir) / "replay_mae.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]
