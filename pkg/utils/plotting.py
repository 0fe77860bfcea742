# utils/plotting.py - SVG curve plots
import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_curves(path, series, xlabel, ylabel, title=None, logx=False, logy=False):
    """Write an SVG with one polyline per (label, x, y) series"""
    fig, ax = plt.subplots(figsize=(6, 4))
    try:
        for label, x, y in series:
            y = np.asarray(y, dtype=np.float64)
            if logy:
                y = np.where(y > 0, y, np.nan)
            ax.plot(np.asarray(x, dtype=np.float64), y, label=label, linewidth=1.2)
        if logx:
            ax.set_xscale('log')
        if logy:
            ax.set_yscale('log')
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend(fontsize='small')
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, format='svg')
    finally:
        plt.close(fig)
    return path
