"""Timing perturbation operators.

All five operators act in the event domain on continuous spike times, are
per-neuron count-aware, and are deterministic given a seed. Clipping a
time onto the right edge of the sample window would violate the half-open
[0, T) invariant, so clipped values equal to T are pulled back to T minus
a microsecond.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SpikeDataset, SpikeTrainSample
from .seeds import derive_rng

EDGE_PULLBACK_MS = 1e-6

KINDS = ("replace", "jitter_spike", "jitter_neuron", "delete", "reverse")


@dataclass(frozen=True)
class PerturbSpec:
    """One perturbation: kind, its scalar parameter, and a master seed.

    parameter meaning by kind: replace -> fraction f in [0, 1];
    jitter_spike / jitter_neuron -> Gaussian sigma in ms; delete ->
    deletion probability in [0, 1]; reverse -> ignored.
    """

    kind: str
    parameter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        p = float(self.parameter)
        if self.kind in ("replace", "delete") and not 0.0 <= p <= 1.0:
            raise ValueError(f"{self.kind} parameter must lie in [0, 1], got {p}")
        if self.kind in ("jitter_spike", "jitter_neuron") and p < 0:
            raise ValueError(f"{self.kind} sigma must be >= 0, got {p}")


def _rng_of(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _clip_times(ts: np.ndarray, duration_ms: float) -> np.ndarray:
    ts = np.clip(ts, 0.0, duration_ms)
    ts[ts >= duration_ms] = duration_ms - EDGE_PULLBACK_MS
    return ts


def _rebuild(sample: SpikeTrainSample, neurons) -> SpikeTrainSample:
    return SpikeTrainSample(neurons=neurons, label=sample.label, duration_ms=sample.duration_ms)


def random_replace(sample: SpikeTrainSample, f: float, seed) -> SpikeTrainSample:
    """Remove floor(f * n_i) uniformly chosen spikes per neuron and insert as
    many fresh times drawn uniformly over [0, T). Counts are preserved."""
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"f must lie in [0, 1], got {f}")
    rng = _rng_of(seed)
    T = sample.duration_ms
    out = []
    for ts in sample.neurons:
        n = ts.size
        k = int(np.floor(f * n))
        if k == 0:
            out.append(ts)
            continue
        drop = rng.choice(n, size=k, replace=False)
        kept = np.delete(np.asarray(ts), drop)
        fresh = rng.uniform(0.0, T, size=k)
        out.append(np.sort(np.concatenate([kept, fresh])))
    return _rebuild(sample, out)


def jitter_per_spike(sample: SpikeTrainSample, sigma: float, seed) -> SpikeTrainSample:
    """Add i.i.d. Gaussian noise to every spike time, clipped to the window."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    rng = _rng_of(seed)
    if sigma == 0:
        return sample
    out = []
    for ts in sample.neurons:
        if ts.size == 0:
            out.append(ts)
            continue
        moved = np.asarray(ts) + rng.normal(0.0, sigma, size=ts.size)
        out.append(np.sort(_clip_times(moved, sample.duration_ms)))
    return _rebuild(sample, out)


def jitter_per_neuron(sample: SpikeTrainSample, sigma_n: float, seed) -> SpikeTrainSample:
    """Shift each neuron's whole train by one Gaussian offset; intra-neuron
    intervals survive except where clipping bites."""
    if sigma_n < 0:
        raise ValueError(f"sigma_n must be >= 0, got {sigma_n}")
    rng = _rng_of(seed)
    if sigma_n == 0:
        return sample
    offsets = rng.normal(0.0, sigma_n, size=sample.num_neurons)
    out = []
    for ts, delta in zip(sample.neurons, offsets):
        if ts.size == 0:
            out.append(ts)
            continue
        out.append(np.sort(_clip_times(np.asarray(ts) + delta, sample.duration_ms)))
    return _rebuild(sample, out)


def delete_spikes(sample: SpikeTrainSample, p_d: float, seed) -> SpikeTrainSample:
    """Keep each spike independently with probability 1 - p_d."""
    if not 0.0 <= p_d <= 1.0:
        raise ValueError(f"p_d must lie in [0, 1], got {p_d}")
    rng = _rng_of(seed)
    out = []
    for ts in sample.neurons:
        if ts.size == 0:
            out.append(ts)
            continue
        keep = rng.random(ts.size) >= p_d
        out.append(np.asarray(ts)[keep])
    return _rebuild(sample, out)


def time_reverse(sample: SpikeTrainSample) -> SpikeTrainSample:
    """Mirror every spike inside the minimal window covering all spikes.

    The window [t_start, t_end] is global over all neurons; each time maps
    to t_start + t_end - t. Counts, neuron identities, and per-neuron
    interval multisets are preserved; the operator is an involution.
    A sample without spikes is returned unchanged.
    """
    sizes = [ts.size for ts in sample.neurons]
    if sum(sizes) == 0:
        return sample
    t_start = min(ts[0] for ts in sample.neurons if ts.size)
    t_end = max(ts[-1] for ts in sample.neurons if ts.size)
    pivot = t_start + t_end
    out = [(pivot - np.asarray(ts))[::-1] if ts.size else ts for ts in sample.neurons]
    return _rebuild(sample, out)


_SINGLE = {
    "replace": random_replace,
    "jitter_spike": jitter_per_spike,
    "jitter_neuron": jitter_per_neuron,
    "delete": delete_spikes,
}


def apply(spec: PerturbSpec, dataset: SpikeDataset) -> SpikeDataset:
    """Map a perturbation over all samples with per-sample derived seeds.

    Seeds derive from (spec.seed, sample index, kind), so the result is
    independent of iteration order and parallel scheduling. Appends one
    entry to the dataset's transform log.
    """
    if spec.kind not in KINDS:
        raise ValueError(f"unknown perturbation kind {spec.kind!r}")
    out = []
    for i, s in enumerate(dataset.samples):
        if spec.kind == "reverse":
            out.append(time_reverse(s))
        else:
            rng = derive_rng(spec.seed, i, spec.kind)
            out.append(_SINGLE[spec.kind](s, spec.parameter, rng))
    entry = {"op": spec.kind, "param": float(spec.parameter), "seed": int(spec.seed)}
    return dataset.with_samples(out, log_entry=entry)
