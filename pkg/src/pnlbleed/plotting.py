"""Figure rendering for run reports.

Figures are written next to the CSV/JSON outputs; they are a convenience
view of data that is always also emitted in delimited form.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIG_SIZE = (7.0, 4.3)


def _finish(fig, ax, path):
    ax.grid(alpha=0.3, linewidth=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_pnl_paths(times, cum_pnl, path, mean_terminal=None, title=None):
    """Fan of cumulative P&L trajectories, one thin line per path."""
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    cum_pnl = np.atleast_2d(cum_pnl)
    for row in cum_pnl:
        ax.plot(times, row, linewidth=0.6, alpha=0.45)
    if mean_terminal is not None:
        ax.axhline(mean_terminal, color="black", linestyle="--", linewidth=1.0,
                   label=f"expected terminal P&L {mean_terminal:.3f}")
        ax.legend(loc="lower left", frameon=False)
    ax.set_xlabel("t (years)")
    ax.set_ylabel("cumulative discounted P&L")
    if title:
        ax.set_title(title)
    _finish(fig, ax, path)


def plot_tau_estimates(taus, means, std_errors, reference, path):
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    ax.errorbar(taus, means, yerr=3 * np.asarray(std_errors), fmt="o", capsize=4,
                label="estimate (3 SE)")
    ax.axhline(reference, color="black", linestyle="--", linewidth=1.0, label="closed form")
    ax.set_xlabel("intermediate horizon tau (years)")
    ax.set_ylabel("adjustment")
    ax.legend(frameon=False)
    _finish(fig, ax, path)
