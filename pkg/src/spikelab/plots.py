"""Figure emission: accuracy curves from sweep CSVs and spike rasters."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import numpy as np

from .core import SpikeLabError, SpikeTrainSample
from .harness import read_results


class PlotError(SpikeLabError):
    """Nothing to draw."""


def _agg(rows):
    """-> {(variant, model): (values, mean, lo, hi)} over seeds."""
    groups = defaultdict(lambda: defaultdict(list))
    for r in rows:
        if r["accuracy"] is None:
            continue
        groups[(r["variant"], r["model"])][r["perturb_value"]].append(r["accuracy"])
    out = {}
    for key, by_value in groups.items():
        values = np.array(sorted(by_value))
        mean = np.array([np.mean(by_value[v]) for v in values])
        lo = np.array([np.min(by_value[v]) for v in values])
        hi = np.array([np.max(by_value[v]) for v in values])
        out[key] = (values, mean, lo, hi)
    return out


def emit_curves(csv_path, out_path, *, chance: float | None = None,
                x_label: str = "perturbation", title: str = "") -> Path:
    """Accuracy-vs-parameter curves, one line per (variant, model), with
    per-seed mean and a min/max band. Count-baseline (mlp) series render
    as dashed horizontal references at their clean-input accuracy; an
    optional chance line is drawn dotted.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_results(csv_path)
    series = _agg(rows)
    if not series:
        raise PlotError(f"{csv_path}: no plottable rows")

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for (variant, model), (values, mean, lo, hi) in sorted(series.items()):
        label = f"{variant}/{model}" if variant != "synthetic" else model
        if model == "mlp":
            ax.axhline(mean[0], linestyle="--", alpha=0.8,
                       label=f"{label} (clean)", color="red")
            continue
        line, = ax.plot(values, mean, marker="o", label=label)
        if np.any(hi > lo):
            ax.fill_between(values, lo, hi, alpha=0.2, color=line.get_color())
    if chance is not None:
        ax.axhline(chance, linestyle=":", color="gray", label="chance")
    ax.set_xlabel(x_label)
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.0)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def raster_dump(sample: SpikeTrainSample, out_path,
                perturbed: SpikeTrainSample | None = None, title: str = "") -> Path:
    """Scatter of (time, neuron) events; an optional perturbed twin is
    overlaid in red on the original black."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    for s, color, label in ((sample, "black", "original"),
                            (perturbed, "red", "perturbed")):
        if s is None:
            continue
        xs, ys = [], []
        for i, ts in enumerate(s.neurons):
            xs.extend(ts)
            ys.extend([i] * len(ts))
        ax.scatter(xs, ys, s=4, marker="|", color=color,
                   label=label if perturbed is not None else None)
    ax.set_xlim(0, sample.duration_ms)
    ax.set_ylim(-0.5, sample.num_neurons - 0.5)
    ax.set_xlabel("time (ms)")
    ax.set_ylabel("neuron")
    if title:
        ax.set_title(title)
    if perturbed is not None:
        ax.legend(fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path)
    plt.close(fig)
    return out_path
