"""Event-dataset import and the whole -> part -> norm normalization chain.

The chain progressively strips spike-count information from an event
dataset while keeping each retained spike's timing:

* whole: raw import (HDF5 with ragged per-sample event arrays).
* part:  neurons that cannot reach a minimum count in every sample are
  removed, unless their failures are confined to a tiny fraction of
  samples, in which case those samples are removed instead; classes are
  then downsampled to a common size.
* norm:  every neuron's train in every sample is subsampled to that
  neuron's dataset-wide minimum count, making per-neuron counts a
  constant function of the sample.

Filtering rules (retained neurons, per-neuron target counts) are learned
on the training split and applied verbatim to the test split so both
variants share geometry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .core import (
    FormatError,
    PipelineError,
    SchemaError,
    SpikeDataset,
    SpikeTrainSample,
    count_matrix,
    write_ndjson,
)
from .seeds import derive_rng

SHD_NUM_CHANNELS = 700
IMPORT_DURATION_MS = 1000.0


@dataclass
class FilterRules:
    """Train-derived decisions needed to normalize another split."""

    retained_neurons: list
    min_counts: list          # per retained neuron, the subsampling target

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FilterReport:
    theta: int
    epsilon: float
    class_floor: float
    retained_neurons: list = field(default_factory=list)
    removed_samples: list = field(default_factory=list)   # [sample id, triggering neuron]
    class_sizes_before: dict = field(default_factory=dict)
    class_sizes_after: dict = field(default_factory=dict)
    min_counts_before: list = field(default_factory=list)  # over all neurons
    min_counts_after: list = field(default_factory=list)   # over retained neurons
    neurons_dropped: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def import_shd_hdf5(path, split: str = "train") -> SpikeDataset:
    """Read an SHD/SSC-format HDF5 file into a whole-variant SpikeDataset.

    Expects ragged groups ``spikes/times`` (seconds) and ``spikes/units``
    (channel ids < 700) plus ``labels``. Times convert to ms; events at or
    beyond 1000 ms are dropped and every sample is fixed to 1000 ms.
    """
    import h5py

    with h5py.File(path, "r") as f:
        try:
            times_ds = f["spikes"]["times"]
            units_ds = f["spikes"]["units"]
            labels_ds = f["labels"]
        except KeyError as e:
            raise FormatError(f"{path}: missing HDF5 group/dataset {e.args[0]!r}") from e
        all_times = [np.asarray(t, dtype=np.float64) for t in times_ds]
        all_units = [np.asarray(u, dtype=np.int64) for u in units_ds]
        labels = np.asarray(labels_ds, dtype=np.int64)

    if not (len(all_times) == len(all_units) == len(labels)):
        raise SchemaError(f"{path}: times/units/labels lengths disagree")

    samples = []
    for i, (t_sec, units) in enumerate(zip(all_times, all_units)):
        if units.size and (units.min() < 0 or units.max() >= SHD_NUM_CHANNELS):
            raise SchemaError(
                f"{path}: sample {i} has unit id outside [0, {SHD_NUM_CHANNELS})"
            )
        t_ms = t_sec * 1000.0
        keep = t_ms < IMPORT_DURATION_MS
        t_ms, units = t_ms[keep], units[keep]
        order = np.argsort(units, kind="stable")
        units_sorted, t_sorted = units[order], t_ms[order]
        neurons = [np.array([], dtype=np.float64)] * SHD_NUM_CHANNELS
        if units_sorted.size:
            uniq, starts = np.unique(units_sorted, return_index=True)
            bounds = np.append(starts, units_sorted.size)
            for u, lo, hi in zip(uniq, bounds[:-1], bounds[1:]):
                neurons[int(u)] = np.sort(t_sorted[lo:hi])
        samples.append(SpikeTrainSample(neurons=neurons, label=int(labels[i]),
                                        duration_ms=IMPORT_DURATION_MS))

    num_classes = int(labels.max()) + 1 if len(labels) else 1
    return SpikeDataset(
        samples=tuple(samples),
        num_neurons=SHD_NUM_CHANNELS,
        num_classes=num_classes,
        variant="whole",
        transform_log=({"op": "import_shd_hdf5", "path": str(path), "split": split},),
    )


def min_spike_counts(dataset: SpikeDataset) -> np.ndarray:
    """Per-neuron minimum spike count over all samples."""
    if not dataset.samples:
        raise ValueError("dataset is empty")
    return count_matrix(dataset).min(axis=0)


def _select_neurons(sample: SpikeTrainSample, idx) -> SpikeTrainSample:
    return SpikeTrainSample(
        neurons=[sample.neurons[i] for i in idx],
        label=sample.label,
        duration_ms=sample.duration_ms,
    )


def _balance_classes(dataset_samples, num_classes: int, rng) -> list:
    """Downsample every class to the smallest class size (uniform, seeded)."""
    by_class = {c: [] for c in range(num_classes)}
    for i, s in enumerate(dataset_samples):
        by_class[s.label].append(i)
    present = {c: idx for c, idx in by_class.items() if idx}
    target = min(len(idx) for idx in present.values())
    keep = []
    for c in sorted(present):
        idx = present[c]
        chosen = rng.choice(len(idx), size=target, replace=False) if len(idx) > target else np.arange(len(idx))
        keep.extend(idx[j] for j in sorted(chosen))
    keep.sort()
    return [dataset_samples[i] for i in keep]


def whole_to_part(dataset: SpikeDataset, theta: int = 2, epsilon: float = 0.01,
                  class_floor: float = 0.5, seed: int = 0):
    """Neuron and sample filtering followed by class balancing.

    Two passes keep the result independent of incidental neuron order:
    pass 1 walks neurons whose minimum count falls below theta (smallest
    offending-sample set first) and accepts their sample deletions while
    the deleted fraction stays below epsilon and no class would sink under
    class_floor of its original size; pass 2 recomputes minimum counts
    after the deletions land and drops every neuron still below theta.

    Returns (part dataset, FilterReport, FilterRules).
    """
    if theta < 1:
        raise ValueError(f"theta must be >= 1, got {theta}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not dataset.samples:
        raise PipelineError("cannot filter an empty dataset")

    counts = count_matrix(dataset)                     # (M, N)
    M, N = counts.shape
    labels = dataset.labels()
    class_sizes0 = {int(c): int(n) for c, n in zip(*np.unique(labels, return_counts=True))}
    floor_sizes = {c: class_floor * n for c, n in class_sizes0.items()}

    report = FilterReport(theta=theta, epsilon=epsilon, class_floor=class_floor)
    report.class_sizes_before = dict(class_sizes0)
    report.min_counts_before = counts.min(axis=0).tolist()

    # pass 1: collect sample deletions, cheapest offender sets first
    low = [(int((counts[:, i] < theta).sum()), i) for i in range(N)]
    offenders = [(n_bad, i) for n_bad, i in low if n_bad > 0]
    offenders.sort()
    deleted = np.zeros(M, dtype=bool)
    removed_for: dict[int, int] = {}
    for n_bad, i in offenders:
        if n_bad / M >= epsilon:
            continue
        bad = np.flatnonzero((counts[:, i] < theta) & ~deleted)
        if bad.size == 0:
            continue
        trial = deleted.copy()
        trial[bad] = True
        kept_labels = labels[~trial]
        sizes = {c: int((kept_labels == c).sum()) for c in class_sizes0}
        if any(sizes[c] < floor_sizes[c] for c in class_sizes0):
            continue
        deleted = trial
        for m in bad:
            removed_for[int(m)] = i

    report.removed_samples = [[m, removed_for[m]] for m in sorted(removed_for)]
    kept_idx = np.flatnonzero(~deleted)
    counts2 = counts[kept_idx]

    # pass 2: neurons still below theta anywhere get dropped
    min2 = counts2.min(axis=0)
    retained = np.flatnonzero(min2 >= theta)
    if retained.size == 0:
        raise PipelineError("no neurons survive filtering")
    report.neurons_dropped = np.flatnonzero(min2 < theta).tolist()
    report.retained_neurons = retained.tolist()

    filtered = [_select_neurons(dataset.samples[m], retained) for m in kept_idx]

    rng = derive_rng(seed, "class-balance")
    balanced = _balance_classes(filtered, dataset.num_classes, rng)

    part = SpikeDataset(
        samples=tuple(balanced),
        num_neurons=int(retained.size),
        num_classes=dataset.num_classes,
        variant="part",
        transform_log=dataset.transform_log + ({
            "op": "whole_to_part", "theta": theta, "epsilon": epsilon,
            "class_floor": class_floor, "seed": int(seed),
        },),
    )

    final_counts = count_matrix(part)
    report.min_counts_after = final_counts.min(axis=0).tolist()
    labels_after = part.labels()
    report.class_sizes_after = {
        int(c): int(n) for c, n in zip(*np.unique(labels_after, return_counts=True))
    }
    rules = FilterRules(retained_neurons=retained.tolist(),
                        min_counts=report.min_counts_after)
    return part, report, rules


def apply_part_rules(dataset: SpikeDataset, rules: FilterRules, seed: int = 0,
                     balance: bool = True):
    """Project another split through train-derived rules.

    Keeps only the retained neurons and drops samples that cannot meet the
    per-neuron subsampling targets. Returns (part dataset, dropped ids).
    """
    idx = list(rules.retained_neurons)
    targets = np.asarray(rules.min_counts)
    kept, dropped = [], []
    for m, s in enumerate(dataset.samples):
        sel = _select_neurons(s, idx)
        if np.all(np.asarray([ts.size for ts in sel.neurons]) >= targets):
            kept.append(sel)
        else:
            dropped.append(m)
    if not kept:
        raise PipelineError("no samples survive the train-derived filter")
    if balance:
        rng = derive_rng(seed, "class-balance-apply")
        kept = _balance_classes(kept, dataset.num_classes, rng)
    part = SpikeDataset(
        samples=tuple(kept),
        num_neurons=len(idx),
        num_classes=dataset.num_classes,
        variant="part",
        transform_log=dataset.transform_log + ({
            "op": "apply_part_rules", "dropped_samples": len(dropped), "seed": int(seed),
        },),
    )
    return part, dropped


def part_to_norm(dataset: SpikeDataset, seed: int = 0,
                 min_counts=None) -> SpikeDataset:
    """Subsample every neuron's train to its dataset-wide minimum count.

    After this, per-neuron spike counts are identical across samples and
    the dataset carries timing information only. Pass `min_counts` to
    reuse targets learned on another split.
    """
    if dataset.variant != "part":
        raise PipelineError(f"part_to_norm expects a part-variant dataset, got {dataset.variant!r}")
    targets = np.asarray(min_counts if min_counts is not None else min_spike_counts(dataset))
    if targets.shape != (dataset.num_neurons,):
        raise ValueError("min_counts length must equal num_neurons")
    out = []
    for m, s in enumerate(dataset.samples):
        rng = derive_rng(seed, m, "norm-subsample")
        neurons = []
        for i, ts in enumerate(s.neurons):
            c = int(targets[i])
            if ts.size < c:
                raise PipelineError(
                    f"sample {m} neuron {i}: {ts.size} spikes < target {c}; "
                    f"input is not a valid part dataset"
                )
            if ts.size == c:
                neurons.append(ts)
            else:
                chosen = rng.choice(ts.size, size=c, replace=False)
                neurons.append(np.sort(np.asarray(ts)[chosen]))
        out.append(SpikeTrainSample(neurons=neurons, label=s.label, duration_ms=s.duration_ms))
    return SpikeDataset(
        samples=tuple(out),
        num_neurons=dataset.num_neurons,
        num_classes=dataset.num_classes,
        variant="norm",
        transform_log=dataset.transform_log + ({
            "op": "part_to_norm", "seed": int(seed),
        },),
    )


@dataclass
class PipelineParams:
    theta: int = 2
    epsilon: float = 0.01
    class_floor: float = 0.5


def pipeline_run(raw_path, out_dir, params: PipelineParams | None = None, seed: int = 0,
                 split: str = "train", rules: FilterRules | None = None) -> dict:
    """Import one split and write its whole/part/norm NDJSON files plus report.

    For the training split the filtering rules are learned here and saved
    inside the report; for any other split pass the train-derived `rules`.
    Returns {"whole": path, "part": path, "norm": path, "report": path}.
    """
    params = params or PipelineParams()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    whole = import_shd_hdf5(raw_path, split=split)
    if rules is None:
        part, report, rules = whole_to_part(
            whole, theta=params.theta, epsilon=params.epsilon,
            class_floor=params.class_floor, seed=seed,
        )
        report_payload = {"split": split, "params": asdict(params), "seed": seed,
                          "report": report.to_dict(), "rules": rules.to_dict()}
    else:
        part, dropped = apply_part_rules(whole, rules, seed=seed)
        report_payload = {"split": split, "params": asdict(params), "seed": seed,
                          "dropped_samples": dropped, "rules": rules.to_dict()}
    norm = part_to_norm(part, seed=seed, min_counts=rules.min_counts)

    paths = {}
    for tag, ds in (("whole", whole), ("part", part), ("norm", norm)):
        p = out_dir / f"{split}_{tag}.sea.ndjson"
        write_ndjson(ds, p)
        paths[tag] = str(p)
    report_path = out_dir / f"{split}_report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report_payload, fh, indent=2)
    paths["report"] = str(report_path)
    return paths


def load_rules(report_path) -> FilterRules:
    """Recover train-derived filtering rules from a written report file."""
    with open(report_path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if "rules" not in payload:
        raise FormatError(f"{report_path}: no rules section")
    return FilterRules(**payload["rules"])
