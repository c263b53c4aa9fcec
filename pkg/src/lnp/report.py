"""Figure rendering for fit and diagnostic outputs.

Every figure has a CSV twin written by the CLI; the PNGs are a convenience
layer on top of the same arrays.  matplotlib is imported lazily with the
Agg backend so headless runs never touch a display.
"""

import numpy as np

__all__ = ["density_figure", "pacf_figure", "trace_figure"]


def _plt():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def density_figure(summary, path, data=None):
    """Two panels: posterior mean density and credible band per sample,
    with an optional data rug."""
    plt = _plt()
    fig, axes = plt.subplots(1, 2, figsize=(11, 4), sharey=True)
    for ax, mean, band, label, sample in (
        (axes[0], summary.mean1, summary.band1, "sample 1", 1),
        (axes[1], summary.mean2, summary.band2, "sample 2", 2),
    ):
        ax.fill_between(summary.grid, band[0], band[1], alpha=0.25, lw=0,
                        label="90% pointwise band")
        ax.plot(summary.grid, mean, lw=1.5, label="posterior mean")
        if data is not None:
            points = data.sample1 if sample == 1 else data.sample2
            ax.plot(points, np.full(points.shape, -0.004 * mean.max()), "|",
                    ms=8, alpha=0.5, color="k")
        ax.set_title(f"Estimated density, {label}")
        ax.set_xlabel("x")
        ax.legend(frameon=False, fontsize=8)
    axes[0].set_ylabel("density")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def pacf_figure(lags, pacf_sigma, pacf_sigma0, n_draws, path):
    plt = _plt()
    band = 2.0 / np.sqrt(n_draws)
    fig, axes = plt.subplots(1, 2, figsize=(11, 4), sharey=True)
    for ax, series, name in (
        (axes[0], pacf_sigma, "sigma"),
        (axes[1], pacf_sigma0, "sigma0"),
    ):
        ax.bar(lags, series, width=0.6)
        ax.axhline(band, color="r", ls="--", lw=0.8)
        ax.axhline(-band, color="r", ls="--", lw=0.8)
        ax.set_title(f"Partial autocorrelation, {name}")
        ax.set_xlabel("lag")
    axes[0].set_ylabel("PACF")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def trace_figure(iterations, traces, labels, path):
    """Overlaid traces (e.g. the estimated density at chosen grid points)."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(10, 4))
    for series, label in zip(traces, labels):
        ax.plot(iterations, series, lw=0.7, label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("density value")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
