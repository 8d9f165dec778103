"""Event-domain data model, NDJSON serialization, and dense binning.

Spike trains live in continuous milliseconds; discretization onto a time
grid happens only when a sample is binned for a network's input. The
canonical on-disk interchange is newline-delimited JSON (`.sea.ndjson`):
one header line with dataset metadata, then one line per sample.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

VARIANTS = ("whole", "part", "norm", "synthetic")

NDJSON_EXTENSION = ".sea.ndjson"


class SpikeLabError(Exception):
    """Base class for all package errors."""


class FormatError(SpikeLabError):
    """Malformed input stream or file."""


class SchemaError(SpikeLabError):
    """Structurally valid input that violates dataset-level constraints."""


class GenerationError(SpikeLabError):
    """Synthetic generation could not satisfy its placement constraints."""


class PipelineError(SpikeLabError):
    """Dataset normalization produced an unusable result."""


class TrainingError(SpikeLabError):
    """Training diverged or was misconfigured."""


class ConfigError(SpikeLabError):
    """Bad experiment configuration or CLI arguments."""


def _as_spike_array(times) -> np.ndarray:
    arr = np.asarray(times, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("spike times must be a 1-d sequence")
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SpikeTrainSample:
    """One labelled trial: per-neuron sorted spike times in ms over [0, duration_ms)."""

    neurons: tuple
    label: int
    duration_ms: float

    def __post_init__(self):
        object.__setattr__(self, "neurons", tuple(_as_spike_array(ts) for ts in self.neurons))
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "duration_ms", float(self.duration_ms))
        if self.duration_ms <= 0:
            raise ValueError(f"duration_ms must be positive, got {self.duration_ms}")
        if self.label < 0:
            raise ValueError(f"label must be >= 0, got {self.label}")
        for i, ts in enumerate(self.neurons):
            if ts.size:
                if not np.all(np.isfinite(ts)):
                    raise ValueError(f"neuron {i}: non-finite spike time")
                if ts[0] < 0 or ts[-1] >= self.duration_ms:
                    raise ValueError(
                        f"neuron {i}: spike times must lie in [0, {self.duration_ms}), "
                        f"got range [{ts[0]}, {ts[-1]}]"
                    )
                if np.any(np.diff(ts) < 0):
                    raise ValueError(f"neuron {i}: spike times not sorted")

    @property
    def num_neurons(self) -> int:
        return len(self.neurons)

    @property
    def total_spikes(self) -> int:
        return int(sum(ts.size for ts in self.neurons))


@dataclass(frozen=True)
class SpikeDataset:
    """Ordered sample collection with shared geometry and a transform history.

    `transform_log` is append-only: operations that derive a new dataset
    attach a record of what they did (operation name, parameters, seed).
    """

    samples: tuple
    num_neurons: int
    num_classes: int
    variant: str
    transform_log: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "transform_log", tuple(self.transform_log))
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.num_neurons <= 0:
            raise ValueError("num_neurons must be positive")
        if self.num_classes <= 0:
            raise ValueError("num_classes must be positive")
        dur = None
        for i, s in enumerate(self.samples):
            if s.num_neurons != self.num_neurons:
                raise SchemaError(
                    f"sample {i}: has {s.num_neurons} neurons, dataset declares {self.num_neurons}"
                )
            if s.label >= self.num_classes:
                raise SchemaError(f"sample {i}: label {s.label} >= num_classes {self.num_classes}")
            if dur is None:
                dur = s.duration_ms
            elif s.duration_ms != dur:
                raise SchemaError(f"sample {i}: duration {s.duration_ms} != {dur}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_ms(self) -> float | None:
        return self.samples[0].duration_ms if self.samples else None

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def with_samples(self, samples, variant: str | None = None, log_entry: dict | None = None):
        """New dataset with replaced samples, optionally retagged and logged."""
        log = self.transform_log + ((log_entry,) if log_entry is not None else ())
        return replace(
            self,
            samples=tuple(samples),
            variant=self.variant if variant is None else variant,
            transform_log=log,
        )


@dataclass(frozen=True)
class DenseSpikeGrid:
    """Binary neuron x timestep matrix from binning one sample."""

    bits: np.ndarray
    dt_ms: float
    sample_index: int | None = None

    def __post_init__(self):
        bits = np.ascontiguousarray(np.asarray(self.bits, dtype=np.uint8))
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def num_neurons(self) -> int:
        return self.bits.shape[0]

    @property
    def num_steps(self) -> int:
        return self.bits.shape[1]


def bin_sample(sample: SpikeTrainSample, dt_ms: float, sample_index: int | None = None) -> DenseSpikeGrid:
    """Bin a sample onto a grid of width dt_ms; multiple spikes per bin collapse to 1.

    Bin k covers the half-open interval [k*dt, (k+1)*dt).
    """
    if dt_ms <= 0:
        raise ValueError(f"dt_ms must be positive, got {dt_ms}")
    n_steps = int(math.ceil(sample.duration_ms / dt_ms))
    bits = np.zeros((sample.num_neurons, n_steps), dtype=np.uint8)
    for i, ts in enumerate(sample.neurons):
        if ts.size:
            k = np.floor(ts / dt_ms).astype(np.int64)
            # guard against float division landing exactly on n_steps
            np.clip(k, 0, n_steps - 1, out=k)
            bits[i, k] = 1
    return DenseSpikeGrid(bits=bits, dt_ms=dt_ms, sample_index=sample_index)


def bin_dataset(dataset: SpikeDataset, dt_ms: float) -> tuple[np.ndarray, np.ndarray]:
    """Bin every sample; returns (X, y) with X of shape (M, N, T_steps) uint8."""
    if not dataset.samples:
        raise ValueError("cannot bin an empty dataset")
    grids = [bin_sample(s, dt_ms, i) for i, s in enumerate(dataset.samples)]
    X = np.stack([g.bits for g in grids])
    y = dataset.labels()
    return X, y


def spike_counts(sample: SpikeTrainSample) -> np.ndarray:
    """Per-neuron event counts (computed from events, not bins)."""
    return np.array([ts.size for ts in sample.neurons], dtype=np.int64)


def count_matrix(dataset: SpikeDataset) -> np.ndarray:
    """(M, N) matrix of per-sample per-neuron spike counts."""
    return np.stack([spike_counts(s) for s in dataset.samples])


# --------------------------------------------------------------------------
# NDJSON serialization
# --------------------------------------------------------------------------

def _dump_line(obj) -> str:
    return json.dumps(obj, allow_nan=False, separators=(",", ":"))


def write_ndjson(dataset: SpikeDataset, sink) -> None:
    """Write the canonical NDJSON form: header line, then one line per sample."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as fh:
            write_ndjson(dataset, fh)
        return
    header = {
        "num_neurons": dataset.num_neurons,
        "num_classes": dataset.num_classes,
        "variant": dataset.variant,
        "transform_log": list(dataset.transform_log),
    }
    sink.write(_dump_line(header) + "\n")
    for s in dataset.samples:
        rec = {
            "label": s.label,
            "duration_ms": s.duration_ms,
            "neurons": [ts.tolist() for ts in s.neurons],
        }
        sink.write(_dump_line(rec) + "\n")


def read_ndjson(source) -> SpikeDataset:
    """Inverse of write_ndjson; round-trips datasets exactly.

    Raises FormatError with a line number on malformed JSON, SchemaError on
    per-line neuron counts that disagree with the header.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return read_ndjson(fh)
    if isinstance(source, (bytes, str)):
        raise TypeError("source must be a path or file object")

    def parse(line: str, lineno: int) -> dict:
        try:
            return json.loads(line)
        except json.JSONDecodeError as e:
            raise FormatError(f"line {lineno}: invalid JSON ({e.msg})") from e

    lines = iter(enumerate(source, start=1))
    try:
        lineno, raw = next(lines)
    except StopIteration:
        raise FormatError("empty stream: missing header line") from None
    header = parse(raw, lineno)
    for key in ("num_neurons", "num_classes", "variant"):
        if key not in header:
            raise FormatError(f"line {lineno}: header missing {key!r}")
    num_neurons = int(header["num_neurons"])

    samples = []
    for lineno, raw in lines:
        if not raw.strip():
            continue
        rec = parse(raw, lineno)
        try:
            neurons = rec["neurons"]
            label = rec["label"]
            duration = rec["duration_ms"]
        except KeyError as e:
            raise FormatError(f"line {lineno}: sample missing {e.args[0]!r}") from e
        if len(neurons) != num_neurons:
            raise SchemaError(
                f"line {lineno}: sample has {len(neurons)} neurons, header declares {num_neurons}"
            )
        try:
            samples.append(SpikeTrainSample(neurons=neurons, label=label, duration_ms=duration))
        except ValueError as e:
            raise SchemaError(f"line {lineno}: {e}") from e

    return SpikeDataset(
        samples=tuple(samples),
        num_neurons=num_neurons,
        num_classes=int(header["num_classes"]),
        variant=str(header["variant"]),
        transform_log=tuple(header.get("transform_log", ())),
    )


def ndjson_bytes(dataset: SpikeDataset) -> bytes:
    """Serialized form as bytes (handy for byte-identity checks)."""
    buf = io.StringIO()
    write_ndjson(dataset, buf)
    return buf.getvalue().encode("utf-8")
