"""Report figures written to PNG files (Agg backend, no display needed)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_benchmark(rows, path):
    """Left: median time vs N per worker count (log-log). Right: speedup vs G."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    workers = sorted({r["G"] for r in rows})
    sizes = sorted({r["N"] for r in rows})
    seconds = {(r["N"], r["G"]): r["seconds_median"] for r in rows}
    for G in workers:
        ns = [n for n in sizes if (n, G) in seconds]
        ax1.loglog(ns, [seconds[n, G] for n in ns], "o-", label=f"G={G}")
    ax1.set_xlabel("N (events)")
    ax1.set_ylabel("seconds per evaluation")
    ax1.legend()
    base = workers[0]
    for n in sizes:
        gs = [g for g in workers if (n, g) in seconds and (n, base) in seconds]
        ax2.plot(gs, [seconds[n, base] / seconds[n, g] for g in gs], "o-", label=f"N={n}")
    if workers:
        ax2.plot(workers, np.array(workers) / base, "k--", lw=0.8, label="ideal")
    ax2.set_xlabel("workers G")
    ax2.set_ylabel(f"speedup over G={base}")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_traces(chains_by_param: dict, path):
    """One panel per parameter, one line per chain."""
    names = list(chains_by_param)
    fig, axes = plt.subplots(len(names), 1, figsize=(8, 1.8 * len(names)), sharex=True,
                             squeeze=False)
    for ax, name in zip(axes[:, 0], names):
        for m, chain in enumerate(np.atleast_2d(chains_by_param[name])):
            ax.plot(chain, lw=0.5, label=f"chain {m}")
        ax.set_ylabel(name)
    axes[-1, 0].set_xlabel("retained draw")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
