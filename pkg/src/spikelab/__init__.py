"""spikelab: a laboratory for spike-timing codes.

Generates timing-coded synthetic spike datasets, normalizes event
datasets to remove spike-count information, applies controlled temporal
perturbations, and trains spiking networks from scratch with
surrogate-gradient backprop through time (optionally with learnable
axonal delays) to measure how much classification rests on timing versus
rate.
"""

from .core import (
    DenseSpikeGrid,
    SpikeDataset,
    SpikeTrainSample,
    bin_dataset,
    bin_sample,
    read_ndjson,
    spike_counts,
    write_ndjson,
)
from .perturb import (
    PerturbSpec,
    apply,
    delete_spikes,
    jitter_per_neuron,
    jitter_per_spike,
    random_replace,
    time_reverse,
)
from .pipeline import (
    FilterReport,
    import_shd_hdf5,
    min_spike_counts,
    part_to_norm,
    pipeline_run,
    whole_to_part,
)
from .snn import (
    LayerSpec,
    SnnModel,
    apply_delay,
    backprop_through_time,
    lif_forward,
    load_checkpoint,
    loss_final_potential_ce,
    loss_spikemax,
    save_checkpoint,
    surrogate_grad,
)
from .synth import (
    CoinTaskParams,
    IsiTaskParams,
    gen_coin_sample,
    gen_dataset,
    gen_isi_sample,
    interpolate_mu,
    isi_pair_count,
    isi_steps,
)
from .training import TrainConfig, evaluate, mlp_count_baseline, train

__version__ = "0.1.0"

__all__ = [
    "CoinTaskParams", "DenseSpikeGrid", "FilterReport", "IsiTaskParams",
    "LayerSpec", "PerturbSpec", "SnnModel", "SpikeDataset", "SpikeTrainSample",
    "TrainConfig", "apply", "apply_delay", "backprop_through_time",
    "bin_dataset", "bin_sample", "delete_spikes", "evaluate", "gen_coin_sample",
    "gen_dataset", "gen_isi_sample", "import_shd_hdf5", "interpolate_mu",
    "isi_pair_count", "isi_steps", "jitter_per_neuron", "jitter_per_spike",
    "lif_forward", "load_checkpoint", "loss_final_potential_ce", "loss_spikemax",
    "min_spike_counts", "mlp_count_baseline", "part_to_norm", "pipeline_run",
    "random_replace", "read_ndjson", "save_checkpoint", "spike_counts",
    "surrogate_grad", "time_reverse", "train", "whole_to_part", "write_ndjson",
]
