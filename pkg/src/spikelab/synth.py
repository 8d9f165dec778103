"""Timing-coded synthetic benchmarks.

Two tasks:

* ``isi`` -- two classes told apart by the interval inside spike pairs.
  Every neuron of a sample emits the same number of (start, end) pairs
  with a class-specific intra-pair gap; pair rate and gap are drawn once
  per sample. Gap ranges are disjoint between classes while rate ranges
  overlap, so timing separates the classes fully but spike counts alone
  cap out at 75% accuracy (the optimal count threshold sits inside the
  rate overlap).

* ``coin`` -- three classes told apart by which two of three neuron
  groups toggle ON/OFF together. Time is split into windows; per window a
  coin flips the shared state, the odd group inverts it, and each group
  activates a Poisson number of distinct neurons that spike once inside a
  5-slot subwindow. An overlap factor lambda pulls the ON and OFF count
  means together, from fully separated (lambda=0) to identical
  (lambda=1), without ever changing the expected total spike count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .core import GenerationError, SpikeDataset, SpikeTrainSample
from .seeds import derive_rng

PAIR_PLACEMENT_RETRY_BUDGET = 10_000


@dataclass(frozen=True)
class IsiTaskParams:
    num_neurons: int = 10
    duration_ms: float = 1000.0
    dt_ms: float = 1.0
    class0_rate_range: tuple = (4.0, 12.0)   # pairs/s
    class1_rate_range: tuple = (8.0, 16.0)
    class0_isi_range: tuple = (5.0, 15.0)    # ms
    class1_isi_range: tuple = (20.0, 40.0)

    def __post_init__(self):
        for name in ("class0_rate_range", "class1_rate_range", "class0_isi_range", "class1_isi_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"{name} must be a positive interval, got ({lo}, {hi})")
        # gap ranges disjoint: timing fully separates the classes
        if not (self.class0_isi_range[1] < self.class1_isi_range[0]
                or self.class1_isi_range[1] < self.class0_isi_range[0]):
            raise ValueError("class ISI ranges must be disjoint")
        # rate ranges partially overlapping: counts alone stay ambiguous
        if not (self.class0_rate_range[1] > self.class1_rate_range[0]
                and self.class1_rate_range[1] > self.class0_rate_range[0]):
            raise ValueError("class rate ranges must overlap")


@dataclass(frozen=True)
class CoinTaskParams:
    num_neurons: int = 60             # three equal groups
    window_steps: int = 10
    subwindow_offsets: tuple = (2, 3, 4, 5, 6)
    mu_on0: float = 12.0
    mu_off0: float = 2.0
    mu_avg: float = 5.0
    duration_steps: int = 100
    step_ms: float = 1.0

    def __post_init__(self):
        if self.num_neurons % 3 != 0:
            raise ValueError("num_neurons must be divisible by 3")
        if max(self.subwindow_offsets) >= self.window_steps:
            raise ValueError("subwindow offsets must fit inside the window")

    @property
    def group_size(self) -> int:
        return self.num_neurons // 3

    @property
    def duration_ms(self) -> float:
        return self.duration_steps * self.step_ms


# which two groups share the toggled state, per class
PAIR_BY_CLASS = ((0, 1), (0, 2), (1, 2))


def isi_pair_count(r: float, T: float) -> int:
    """Number of spike pairs for rate r (pairs/s) over a T ms window: floor(r*T/1000)."""
    if r < 0:
        raise ValueError(f"rate must be >= 0, got {r}")
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    return int(math.floor(r * T / 1000.0))


def isi_steps(delta: float) -> int:
    """Intra-pair gap in integer steps: max(1, floor(delta))."""
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    return max(1, int(math.floor(delta)))


def _place_pairs(rng: np.random.Generator, n_pairs: int, gap: float, T: float) -> np.ndarray:
    """Rejection-sample non-overlapping [t, t+gap] intervals; return sorted spike times."""
    starts: list[float] = []
    budget = PAIR_PLACEMENT_RETRY_BUDGET
    while len(starts) < n_pairs:
        if budget <= 0:
            raise GenerationError(
                f"could not place {n_pairs} pairs with gap {gap} ms in {T} ms "
                f"within the retry budget"
            )
        budget -= 1
        t = rng.uniform(0.0, T - gap)
        if all(abs(t - s) > gap for s in starts):
            starts.append(t)
    starts_arr = np.sort(np.asarray(starts))
    return np.sort(np.concatenate([starts_arr, starts_arr + gap]))


def gen_isi_sample(cls: int, params: IsiTaskParams, seed) -> SpikeTrainSample:
    """One pair-coded sample; rate and gap drawn once, shared by all neurons."""
    if cls not in (0, 1):
        raise ValueError(f"class must be 0 or 1, got {cls}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rate_range = params.class0_rate_range if cls == 0 else params.class1_rate_range
    isi_range = params.class0_isi_range if cls == 0 else params.class1_isi_range
    r = rng.uniform(*rate_range)
    delta = rng.uniform(*isi_range)
    n_pairs = isi_pair_count(r, params.duration_ms)
    gap = isi_steps(delta) * params.dt_ms
    neurons = [_place_pairs(rng, n_pairs, gap, params.duration_ms) for _ in range(params.num_neurons)]
    return SpikeTrainSample(neurons=neurons, label=cls, duration_ms=params.duration_ms)


def interpolate_mu(lam: float, params: CoinTaskParams = CoinTaskParams()) -> tuple[float, float]:
    """ON/OFF activation means pulled toward their common average by lambda."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    mu_on = (1.0 - lam) * params.mu_on0 + lam * params.mu_avg
    mu_off = (1.0 - lam) * params.mu_off0 + lam * params.mu_avg
    return mu_on, mu_off


def gen_coin_sample(cls: int, lam: float, params: CoinTaskParams, seed) -> SpikeTrainSample:
    """One synchrony-coded sample.

    Per window, a uniform toggle bit sets the state of the class's two
    designated groups; the remaining group takes the opposite state. Each
    group then activates k ~ Poisson(mu_state) distinct neurons (k capped
    at the group size), each spiking once at a uniform slot inside the
    window's 5-step subwindow.
    """
    if cls not in (0, 1, 2):
        raise ValueError(f"class must be 0, 1, or 2, got {cls}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mu_on, mu_off = interpolate_mu(lam, params)
    g = params.group_size
    n_windows = params.duration_steps // params.window_steps
    offsets = np.asarray(params.subwindow_offsets)
    synced = PAIR_BY_CLASS[cls]
    times: list[list[float]] = [[] for _ in range(params.num_neurons)]
    for w in range(n_windows):
        t0 = w * params.window_steps
        on_bit = bool(rng.integers(0, 2))
        for grp in range(3):
            state_on = on_bit if grp in synced else not on_bit
            mu = mu_on if state_on else mu_off
            k = min(int(rng.poisson(mu)), g)
            if k == 0:
                continue
            chosen = rng.choice(g, size=k, replace=False)
            slots = rng.choice(offsets, size=k, replace=True)
            for neuron, slot in zip(chosen, slots):
                times[grp * g + int(neuron)].append((t0 + int(slot)) * params.step_ms)
    neurons = [np.sort(np.asarray(ts)) for ts in times]
    return SpikeTrainSample(neurons=neurons, label=cls, duration_ms=params.duration_ms)


# --------------------------------------------------------------------------
# dataset assembly
# --------------------------------------------------------------------------

def _gen_one(task: str, index: int, master_seed: int, split: str, lam: float, params) -> SpikeTrainSample:
    rng = derive_rng(master_seed, split, index, task)
    if task == "isi":
        return gen_isi_sample(index % 2, params, rng)
    return gen_coin_sample(index % 3, lam, params, rng)


def _gen_range(task, lo, hi, master_seed, split, lam, params):
    return [_gen_one(task, i, master_seed, split, lam, params) for i in range(lo, hi)]


def gen_dataset(
    task: str,
    sizes: dict,
    seed: int,
    lam: float = 0.0,
    params=None,
    workers: int = 1,
) -> dict:
    """Generate one balanced SpikeDataset per split.

    Labels cycle through the classes, so any split size divisible by the
    class count is exactly balanced. Per-sample RNG streams derive from
    (seed, split name, sample index), making output independent of worker
    count; identical arguments give byte-identical NDJSON.
    """
    if task not in ("isi", "coin"):
        raise ValueError(f"task must be 'isi' or 'coin', got {task!r}")
    if params is None:
        params = IsiTaskParams() if task == "isi" else CoinTaskParams()
    num_classes = 2 if task == "isi" else 3
    out = {}
    for split, size in sizes.items():
        if size < 1:
            raise ValueError(f"split {split!r}: size must be >= 1, got {size}")
        if workers > 1:
            from concurrent.futures import ProcessPoolExecutor

            bounds = np.linspace(0, size, workers + 1).astype(int)
            chunks = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(_gen_range, task, lo, hi, seed, split, lam, params)
                    for lo, hi in chunks
                ]
                samples = [s for fut in futures for s in fut.result()]
        else:
            samples = _gen_range(task, 0, size, seed, split, lam, params)
        entry = {
            "op": "generate",
            "task": task,
            "split": split,
            "seed": int(seed),
            "params": asdict(params),
        }
        if task == "coin":
            entry["lambda"] = float(lam)
        out[split] = SpikeDataset(
            samples=tuple(samples),
            num_neurons=params.num_neurons,
            num_classes=num_classes,
            variant="synthetic",
            transform_log=(entry,),
        )
    return out


def best_count_threshold_accuracy(dataset: SpikeDataset) -> tuple[float, float]:
    """Brute-force sweep of every total-spike-count threshold (both sign
    conventions); returns (best accuracy, best threshold). This is the
    ceiling of any rate-only classifier for a two-class dataset."""
    totals = np.array([s.total_spikes for s in dataset.samples], dtype=np.int64)
    labels = dataset.labels()
    if dataset.num_classes != 2:
        raise ValueError("count-threshold oracle is defined for two classes")
    cuts = np.unique(totals)
    cuts = np.concatenate([cuts, [cuts[-1] + 1]])
    best_acc, best_cut = 0.0, float(cuts[0])
    for c in cuts:
        pred_hi = (totals >= c).astype(np.int64)
        for pred in (pred_hi, 1 - pred_hi):
            acc = float(np.mean(pred == labels))
            if acc > best_acc:
                best_acc, best_cut = acc, float(c)
    return best_acc, best_cut
