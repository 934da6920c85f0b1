"""Metric export: per-episode CSV, JSON summaries and matplotlib figures."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

CSV_COLUMNS = ("run", "episode", "uav", "role", "region", "sum_rate", "cum_reward",
               "moves", "lifetime_tx", "energy_rate", "final_energy")
Z95 = 1.959963984540054


def _num(x) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 2 ** 53:
        return str(int(x))
    return repr(x)


def metric_rows(result):
    m = result.metrics
    runs, episodes, n = m["sum_rate"].shape
    for r in range(runs):
        for e in range(episodes):
            for u in range(n):
                yield (r, e, u, result.role(r, e, u), int(result.region[r, e, u]),
                       repr(float(m["sum_rate"][r, e, u])), repr(float(m["cum_reward"][r, e, u])),
                       _num(m["moves"][r, e, u]), _num(m["transmissions"][r, e, u]),
                       repr(float(m["energy_rate"][r, e, u])), repr(float(m["final_energy"][r, e, u])))


def write_metrics_csv(result, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(metric_rows(result))


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def mean_ci(values) -> dict:
    """Mean, sample std and a normal-approximation 95% interval."""
    v = np.asarray(values, dtype=float).ravel()
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {"mean": None, "std": None, "ci95": [None, None], "n": 0}
    mean = math.fsum(v) / v.size
    std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    half = Z95 * std / math.sqrt(v.size)
    return {"mean": mean, "std": std, "ci95": [mean - half, mean + half], "n": int(v.size)}


def run_summary(result, last: int = 5) -> dict:
    """Headline numbers over runs, using the final ``last`` episodes."""
    m = result.metrics
    tail = slice(-last, None)
    return {
        "sum_throughput_final": mean_ci(result.sum_throughput()[:, tail].mean(axis=1)),
        "relay_lifetime": mean_ci(result.relay_lifetime()[:, tail].mean(axis=1)),
        "energy_rate": mean_ci(np.nanmean(m["energy_rate"][:, tail], axis=(1, 2))),
        "moves_per_uav_final": mean_ci(m["moves"][:, tail].mean(axis=(1, 2))),
        "moves_per_uav_first": mean_ci(m["moves"][:, :last].mean(axis=(1, 2))),
        "cum_reward_final": mean_ci(m["cum_reward"][:, tail].sum(axis=2).mean(axis=1)),
        "energy_ledger_max_abs_error": float(np.abs(result.energy_ledger_errors()).max(initial=0.0)),
    }


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(type(x))


# --- figures ---------------------------------------------------------------

def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams.update({"font.size": 9, "axes.grid": True, "grid.alpha": 0.3, "savefig.dpi": 120})
    return plt


def plot_run(result, path, title: str = "") -> None:
    """Per-episode curves averaged over runs, one line per UAV."""
    plt = _plt()
    m = result.metrics
    ep = np.arange(1, m["moves"].shape[1] + 1)
    panels = [
        ("sum_rate", "throughput (bit/s/Hz, summed over steps)"),
        ("cum_reward", "cumulative reward"),
        ("moves", "movements"),
        ("energy_rate", "energy rate (J/step)"),
    ]
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
    for ax, (key, label) in zip(axes.flat, panels):
        curve = np.nanmean(m[key], axis=0)
        for u in range(curve.shape[1]):
            role = "relay" if result.is_relay[0, 0, u] else "sensing"
            ax.plot(ep, curve[:, u], lw=1.2, label=f"UAV {u} ({role})")
        ax.set_ylabel(label)
    for ax in axes[-1]:
        ax.set_xlabel("episode")
    axes[0, 0].legend(fontsize=7)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_compare(table: dict, path, title: str = "") -> None:
    """``table[metric][mode] -> list of per-seed values``; bars show mean +- std."""
    plt = _plt()
    metrics = list(table)
    fig, axes = plt.subplots(1, len(metrics), figsize=(3.6 * len(metrics), 3.4))
    axes = np.atleast_1d(axes)
    for ax, metric in zip(axes, metrics):
        modes = sorted(table[metric])
        means = [np.nanmean(table[metric][k]) for k in modes]
        stds = [np.nanstd(table[metric][k]) for k in modes]
        ax.bar([str(k) for k in modes], means, yerr=stds, color="0.6", edgecolor="k", capsize=3)
        ax.set_xlabel("mode")
        ax.set_title(metric.replace("_", " "))
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
