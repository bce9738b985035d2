"""Static figure rendering for CLI outputs.

Every report-style CLI path that writes a delimited artifact also renders a
PNG next to it: sweep curves, policy grids, and simulation visit histograms.
Rendering is headless (Agg) and deterministic in content.
"""

from __future__ import annotations

import itertools

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ContractError
from .mdp import _AVAIL_NAMES, enumerate_states
from .model import OnOffLink, block_packet_count


def sweep_figure(path, param_label: str, values, gains, sim_estimates=None,
                 ci_lows=None, ci_highs=None) -> None:
    """Gain versus the swept parameter, with simulated points if present."""
    fig, ax = plt.subplots(figsize=(7.0, 4.4))
    values = np.asarray(values, dtype=float)
    gains = np.asarray(gains, dtype=float)
    ok = np.isfinite(gains)
    ax.plot(values[ok], 100.0 * gains[ok], "-o", ms=3.5, lw=1.4,
            color="#1f6fb4", label="analytic gain")
    if sim_estimates is not None:
        sims = np.asarray(sim_estimates, dtype=float)
        have = np.isfinite(sims)
        if have.any():
            yerr = None
            if ci_lows is not None and ci_highs is not None:
                lows = np.asarray(ci_lows, dtype=float)
                highs = np.asarray(ci_highs, dtype=float)
                yerr = 100.0 * np.vstack([sims[have] - lows[have], highs[have] - sims[have]])
            ax.errorbar(values[have], 100.0 * sims[have], yerr=yerr, fmt="s",
                        ms=3.5, lw=0, elinewidth=1.0, capsize=2.5,
                        color="#c4541f", label="simulated (99% CI)")
    ax.set_xlabel(param_label)
    ax.set_ylabel("on-time reliability [%]")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def policy_figure(path, policy, config, title: str | None = None) -> None:
    """Per-availability grids of scheduled fractions, shaded by redundancy.

    Defined for one- and two-link configs; other arities are skipped by the
    caller.
    """
    if len(config.links) > 2:
        raise ContractError("policy grids render one- or two-link configs only")
    states = enumerate_states(config)
    k = block_packet_count(config)
    q_levels = config.q_max + 1
    onoff_idx = [i for i, link in enumerate(config.links) if isinstance(link, OnOffLink)]
    combos = list(itertools.product((0, 1), repeat=len(onoff_idx)))

    fig, axes = plt.subplots(1, len(combos),
                             figsize=(0.62 * q_levels * len(combos) + 2.4,
                                      0.62 * q_levels + 1.6),
                             squeeze=False)
    lookup = {(s.queues, s.availability): i for i, s in enumerate(states)}
    for plot_col, combo in enumerate(combos):
        ax = axes[0][plot_col]
        redundancy = np.full((q_levels, q_levels if len(config.links) == 2 else 1), np.nan)
        labels = np.empty(redundancy.shape, dtype=object)
        for q0 in range(q_levels):
            for q1 in range(redundancy.shape[1]):
                queues = (q0, q1) if len(config.links) == 2 else (q0,)
                action = policy.action(lookup[(queues, combo)])
                if action.drop:
                    labels[q0, q1] = "drop"
                else:
                    labels[q0, q1] = "\\".join(f"{n / k:.1f}" for n in action.counts)
                    redundancy[q0, q1] = action.total / k - 1.0
        shade = np.ma.masked_invalid(redundancy)
        mesh = ax.imshow(shade, origin="upper", cmap="YlGnBu", vmin=0.0,
                         vmax=max(1.0, np.nanmax(redundancy) if np.isfinite(redundancy).any() else 1.0))
        for q0 in range(labels.shape[0]):
            for q1 in range(labels.shape[1]):
                ax.text(q1, q0, labels[q0, q1], ha="center", va="center", fontsize=7.5)
        ax.set_xticks(range(redundancy.shape[1]))
        ax.set_yticks(range(q_levels))
        ax.set_xlabel("link 2 queue" if len(config.links) == 2 else "")
        ax.set_ylabel("link 1 queue")
        if combo:
            ax.set_title(" / ".join(
                f"link {onoff_idx[j] + 1} {_AVAIL_NAMES[flag]}" for j, flag in enumerate(combo)),
                fontsize=9)
    fig.colorbar(mesh, ax=[a for row in axes for a in row], label="redundancy",
                 shrink=0.85)
    if title:
        fig.suptitle(title, fontsize=10)
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)


def report_figure(path, report, analytic_gain: float | None = None) -> None:
    """Top visited states as a bar chart, annotated with the CI."""
    items = sorted(report.state_visit_histogram.items(), key=lambda kv: -kv[1])[:15]
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    if items:
        names = [kv[0] for kv in items]
        counts = [kv[1] for kv in items]
        ax.bar(range(len(items)), counts, color="#1f6fb4")
        ax.set_xticks(range(len(items)))
        ax.set_xticklabels(names, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("visits")
    title = (f"estimate {report.estimate:.6f}  "
             f"99% CI [{report.ci_low:.6f}, {report.ci_high:.6f}]  "
             f"n={report.blocks_total}")
    if analytic_gain is not None:
        title += f"  analytic {analytic_gain:.6f}"
    ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
