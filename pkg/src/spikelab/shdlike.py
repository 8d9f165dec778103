"""SHD/SSC-format synthetic benchmark with planted timing structure.

The real speech recordings are large external downloads, so tests and
demos use this generator instead: it writes HDF5 files with the exact
layout the importer expects (ragged ``spikes/times`` in seconds,
``spikes/units``, ``labels``) and event statistics that give the
normalization chain something real to do:

* a "reliable" channel subset fires a fixed number of background spikes
  in every sample (these survive neuron filtering);
* the remaining channels are silent in many samples (these get dropped);
* a few edge channels go silent in a rare fraction of samples (these
  trigger sample deletion instead of neuron removal).

Class identity is carried by two kinds of timing structure, both built
from volleys (a small channel group firing short bursts together):

* solo volleys: each class owns a few (group, time) volleys. Group
  composition differs by class, so these are learnable from coincidence
  alone, survive time reversal (synchrony has no direction), and also
  leak class information into raw per-channel counts until the
  count-normalized variant strips it.
* lag pairs: a pool of volley pairs shared by all classes; the leading
  group, trailing group, and leading time are identical everywhere, and
  only the lag between the two volleys is class-specific. Reading this
  code requires bridging tens of milliseconds, which per-neuron axonal
  delays do naturally; it inverts under time reversal.

Burst volleys make both codes robust to independent per-spike noise
(burst centers average out) while staying fragile to coherent
per-channel shifts, which destroy volley coherence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SpikeDataset, SpikeTrainSample
from .seeds import derive_rng


@dataclass(frozen=True)
class ShdLikeParams:
    num_channels: int = 700
    num_classes: int = 20
    duration_s: float = 1.0
    reliable_channels: int = 150
    edge_channels: int = 4
    edge_silent_prob: float = 0.004
    group_size: int = 12
    burst_spikes: int = 4
    burst_spread_ms: float = 4.0
    volley_wobble_ms: float = 2.0
    shared_pairs: int = 10
    lag_min_ms: float = 30.0
    lag_max_ms: float = 150.0
    solo_volleys: int = 4
    time_margin_ms: float = 60.0
    min_separation_ms: float = 60.0
    background_spikes: int = 3
    unreliable_active_prob: float = 0.5
    unreliable_mean_spikes: float = 2.0
    late_event_prob: float = 0.02


@dataclass(frozen=True)
class ClassTemplate:
    """Resolved volley schedule for one class: (time_ms, channels) events."""

    volleys: tuple


def _spaced_times(rng, n: int, lo: float, hi: float, sep: float) -> np.ndarray:
    """n uniform times in [lo, hi] with pairwise separation >= sep
    (spacing construction, never rejects)."""
    free = (hi - lo) - (n - 1) * sep
    if free <= 0:
        raise ValueError("volley schedule does not fit the sample duration")
    u = np.sort(rng.uniform(0.0, free, size=n))
    return lo + u + sep * np.arange(n)


def build_templates(seed: int, params: ShdLikeParams):
    """Dataset-level structure shared by all splits.

    Returns (reliable channel array, edge channel set, per-class templates).
    """
    rng = derive_rng(seed, "shdlike-template")
    dur_ms = params.duration_s * 1000.0
    perm = rng.permutation(params.num_channels)
    reliable = np.sort(perm[:params.reliable_channels])
    edge = set(int(c) for c in rng.choice(reliable, size=params.edge_channels, replace=False))

    def draw_group():
        return tuple(int(c) for c in np.sort(rng.choice(reliable, size=params.group_size, replace=False)))

    # shared pool: identical groups and leading times for every class
    lead_hi = dur_ms - params.time_margin_ms - params.lag_max_ms
    lead_times = _spaced_times(rng, params.shared_pairs, params.time_margin_ms,
                               lead_hi, params.min_separation_ms)
    pairs = [(float(t), draw_group(), draw_group()) for t in lead_times]

    templates = []
    for _ in range(params.num_classes):
        volleys = []
        # class-specific lag closes each shared pair
        for t_lead, group_a, group_b in pairs:
            lag = float(rng.uniform(params.lag_min_ms, params.lag_max_ms))
            volleys.append((t_lead, group_a))
            volleys.append((t_lead + lag, group_b))
        # class-specific solo volleys: composition is the code
        solo_times = _spaced_times(rng, params.solo_volleys, params.time_margin_ms,
                                   dur_ms - params.time_margin_ms, params.min_separation_ms)
        for t in solo_times:
            volleys.append((float(t), draw_group()))
        volleys.sort(key=lambda v: v[0])
        templates.append(ClassTemplate(volleys=tuple(volleys)))
    return reliable, edge, templates


def _gen_sample_events(rng, reliable, edge, template: ClassTemplate,
                       params: ShdLikeParams):
    """Returns (times_ms, units) event arrays, time-sorted."""
    dur_ms = params.duration_s * 1000.0
    times: list[np.ndarray] = []
    units: list[np.ndarray] = []

    reliable_set = set(int(c) for c in reliable)
    for ch in reliable:
        ch = int(ch)
        if ch in edge and rng.random() < params.edge_silent_prob:
            continue
        bg = rng.uniform(0.0, dur_ms, size=params.background_spikes)
        times.append(bg)
        units.append(np.full(bg.size, ch, dtype=np.int64))

    for t_v, group in template.volleys:
        t_center = t_v + rng.normal(0.0, params.volley_wobble_ms)
        for ch in group:
            burst = t_center + rng.normal(0.0, params.burst_spread_ms, size=params.burst_spikes)
            burst = np.clip(burst, 1.0, dur_ms - 1.0)
            times.append(burst)
            units.append(np.full(burst.size, int(ch), dtype=np.int64))

    for ch in range(params.num_channels):
        if ch in reliable_set:
            continue
        if rng.random() < params.unreliable_active_prob:
            n = rng.poisson(params.unreliable_mean_spikes) + 1
            t = rng.uniform(0.0, dur_ms, size=n)
            times.append(t)
            units.append(np.full(n, ch, dtype=np.int64))

    if rng.random() < params.late_event_prob:
        # events past the nominal duration; the importer truncates these
        ch = int(rng.integers(0, params.num_channels))
        times.append(np.array([rng.uniform(dur_ms, dur_ms + 80.0)]))
        units.append(np.array([ch], dtype=np.int64))

    t_all = np.concatenate(times)
    u_all = np.concatenate(units)
    order = np.argsort(t_all, kind="stable")
    return t_all[order], u_all[order]


def write_shdlike_hdf5(path, split: str, samples_per_class: int, seed: int = 0,
                       params: ShdLikeParams | None = None) -> str:
    """Write one split as an SHD-format HDF5 file; returns the path.

    Class templates derive from the seed alone, so train and test splits
    written with the same seed share the same planted structure while
    their per-sample noise streams stay disjoint.
    """
    import h5py

    params = params or ShdLikeParams()
    reliable, edge, templates = build_templates(seed, params)
    M = samples_per_class * params.num_classes
    labels = np.arange(M) % params.num_classes

    vlen_f = h5py.vlen_dtype(np.float64)
    vlen_i = h5py.vlen_dtype(np.int64)
    with h5py.File(path, "w") as f:
        times_ds = f.create_dataset("spikes/times", (M,), dtype=vlen_f)
        units_ds = f.create_dataset("spikes/units", (M,), dtype=vlen_i)
        f.create_dataset("labels", data=labels.astype(np.int64))
        for m in range(M):
            rng = derive_rng(seed, split, m, "shdlike-sample")
            t_ms, u = _gen_sample_events(rng, reliable, edge, templates[int(labels[m])], params)
            times_ds[m] = t_ms / 1000.0
            units_ds[m] = u
    return str(path)


def gen_shdlike_dataset(split: str, samples_per_class: int, seed: int = 0,
                        params: ShdLikeParams | None = None) -> SpikeDataset:
    """In-memory whole-variant equivalent of write_shdlike_hdf5 + import,
    minus the past-duration events the importer would drop anyway."""
    params = params or ShdLikeParams()
    reliable, edge, templates = build_templates(seed, params)
    M = samples_per_class * params.num_classes
    dur_ms = params.duration_s * 1000.0
    samples = []
    for m in range(M):
        label = m % params.num_classes
        rng = derive_rng(seed, split, m, "shdlike-sample")
        t_ms, u = _gen_sample_events(rng, reliable, edge, templates[label], params)
        keep = t_ms < dur_ms
        t_ms, u = t_ms[keep], u[keep]
        neurons = [np.array([], dtype=np.float64)] * params.num_channels
        order = np.argsort(u, kind="stable")
        u_sorted, t_sorted = u[order], t_ms[order]
        if u_sorted.size:
            uniq, starts = np.unique(u_sorted, return_index=True)
            bounds = np.append(starts, u_sorted.size)
            for ch, lo, hi in zip(uniq, bounds[:-1], bounds[1:]):
                neurons[int(ch)] = np.sort(t_sorted[lo:hi])
        samples.append(SpikeTrainSample(neurons=neurons, label=label, duration_ms=dur_ms))
    return SpikeDataset(
        samples=tuple(samples),
        num_neurons=params.num_channels,
        num_classes=params.num_classes,
        variant="whole",
        transform_log=({"op": "gen_shdlike", "split": split, "seed": int(seed)},),
    )
