"""Figure rendering for reports.  All functions write a PNG and return.

Kept separate from the numeric code so that matplotlib stays an
import-on-use dependency of the report path only.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finalize(fig, ax, path, xlabel, ylabel, title):
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_msq_plot(path, mean_msq, sem=None, predicted=None, limit=None) -> None:
    """Mean squared deviation vs round, log scale, with predictions."""
    mean_msq = np.asarray(mean_msq, dtype=float)
    ks = np.arange(len(mean_msq))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.semilogy(ks, np.maximum(mean_msq, 1e-300), "o-", ms=3, label="empirical mean")
    if sem is not None:
        sem = np.asarray(sem, dtype=float)
        lo = np.maximum(mean_msq - 1.96 * sem, 1e-300)
        hi = mean_msq + 1.96 * sem
        ax.fill_between(ks, lo, hi, alpha=0.25, label="95% CI")
    if predicted is not None:
        predicted = np.asarray(predicted, dtype=float)
        ax.semilogy(
            np.arange(len(predicted)), np.maximum(predicted, 1e-300),
            "--", label="second-moment prediction",
        )
    if limit is not None and np.isfinite(limit) and limit > 0:
        ax.axhline(limit, color="tab:red", ls=":", label="predicted limit")
    _finalize(fig, ax, path, "round", r"mean $\|x_k - r\mathbf{1}\|^2$",
              "squared deviation vs round")


def save_counters_plot(path, mean_min_n, guaranteed_rate=None) -> None:
    """Mean min-over-nodes iteration counter vs round."""
    mean_min_n = np.asarray(mean_min_n, dtype=float)
    ts = np.arange(len(mean_min_n))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(ts, mean_min_n, "o-", ms=3, label=r"mean $\min_v n_v(t)$")
    ax.plot(ts, ts, ls=":", color="gray", label="noiseless (rate 1)")
    if guaranteed_rate is not None and np.isfinite(guaranteed_rate):
        ax.plot(ts, guaranteed_rate * ts, "--", color="tab:red",
                label=f"guaranteed rate {guaranteed_rate:.3f}")
    _finalize(fig, ax, path, "round t", "iterations", "iteration progress")


def save_tail_plot(path, tail_rows, bound_by_r=None) -> None:
    """Empirical tail probabilities vs nominal rate, with bounds."""
    rs = [row.r_prime for row in tail_rows]
    ps = [row.p_hat for row in tail_rows]
    los = [row.ci_lo for row in tail_rows]
    his = [row.ci_hi for row in tail_rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    floor = 1e-12
    ax.semilogy(rs, np.maximum(ps, floor), "o-", label=r"$\hat P$")
    ax.fill_between(rs, np.maximum(los, floor), np.maximum(his, floor),
                    alpha=0.25, label="95% CI")
    if bound_by_r:
        rb = sorted(r for r in bound_by_r if np.isfinite(bound_by_r[r]))
        if rb:
            ax.semilogy(rb, [max(bound_by_r[r], floor) for r in rb],
                        "--", color="tab:red", label="bound")
    _finalize(fig, ax, path, r"nominal rate $R'$",
              r"$P(\min_v n_v(M) < M R')$", "rate tail probabilities")


def save_gamma_heatmap(path, gamma) -> None:
    """Magnitude heatmap of a second-moment transition matrix."""
    gamma = np.asarray(gamma, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(np.abs(gamma), cmap="viridis")
    fig.colorbar(im, ax=ax, label="|entry|")
    ax.set_xlabel("column")
    ax.set_ylabel("row")
    ax.set_title(f"second-moment matrix ({gamma.shape[0]}x{gamma.shape[1]})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_beta_plot(path, estimate) -> None:
    """Decoding-failure probability vs delay with the fitted exponent."""
    rows = [r for r in estimate.rows if r[2] > 0]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if rows:
        ds = np.array([r[0] for r in rows], dtype=float)
        ph = np.array([r[3] for r in rows], dtype=float)
        ax.semilogy(ds, ph, "o", label="empirical", base=2)
        lo, hi = estimate.fit_range
        span = np.linspace(lo, hi, 50)
        fit = 2.0 ** (-estimate.beta_hat * (span - estimate.d0))
        ax.semilogy(span, fit, "--", color="tab:red", base=2,
                    label=rf"$2^{{-\hat\beta (d - d_0)}}$, $\hat\beta$ = "
                          rf"{estimate.beta_hat:.3f}")
    _finalize(fig, ax, path, "decoding delay d", "P(failure at delay d)",
              "anytime exponent fit")


def save_values_plot(path, value_hist, target=None) -> None:
    """Node value trajectories for a single run."""
    value_hist = np.asarray(value_hist, dtype=float)
    ts = np.arange(value_hist.shape[0])
    label_nodes = value_hist.shape[1] <= 8
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for v in range(value_hist.shape[1]):
        ax.plot(ts, value_hist[:, v],
                label=f"node {v}" if label_nodes else None)
    if target is not None:
        ax.axhline(target, color="black", ls=":", label="average")
    _finalize(fig, ax, path, "round", "value", "node trajectories")


def save_bounds_plot(path, r_grid, bounds_by_name, thresholds=None) -> None:
    """Tail bounds vs nominal rate for several bound families."""
    r_grid = np.asarray(r_grid, dtype=float)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    floor = 1e-30
    for name, values in bounds_by_name.items():
        values = np.asarray(values, dtype=float)
        mask = np.isfinite(values)
        if mask.any():
            ax.semilogy(r_grid[mask], np.maximum(values[mask], floor),
                        "o-", ms=3, label=name)
    for name, r in (thresholds or {}).items():
        if np.isfinite(r):
            ax.axvline(r, ls="--", alpha=0.6,
                       label=f"{name} = {r:.3f}")
    _finalize(fig, ax, path, r"nominal rate $R'$", "bound value",
              "tail bounds vs rate")
