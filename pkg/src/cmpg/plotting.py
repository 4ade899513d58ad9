"""
Figure rendering for the report path: every delimited artifact the CLI
writes gets a matplotlib rendering saved next to it.
"""
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt


def plot_curve(x, series, path, xlabel, ylabel, title=None, hline=None,
               hline_label=None):
    """Line plot of one or more named series over a shared x axis."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, y in series.items():
        ax.plot(x, y, label=label)
    if hline is not None:
        ax.axhline(hline, color="crimson", linestyle="--",
                   label=hline_label or "threshold")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1 or hline is not None:
        ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_dual_trace(trace, path, lambda_star=None, d_star=None):
    """d(lambda) over the lambda grid, with the minimizer marked."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(trace[:, 0], trace[:, 1], label="d(lambda)")
    if lambda_star is not None:
        ax.plot([lambda_star], [d_star], "o", color="crimson",
                label="minimum (%.3g, %.4g)" % (lambda_star, d_star))
    ax.set_xlabel("lambda")
    ax.set_ylabel("dual function")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
