"""Command-line interface.

Subcommands: gen, normalize, perturb, train, eval, sweep, plot, raster.
Exit codes: 0 success, 1 configuration error (bad arguments, missing or
malformed inputs), 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import ConfigError, FormatError, SchemaError, SpikeLabError, read_ndjson, write_ndjson


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="spikelab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic timing-coded dataset")
    g.add_argument("task", choices=["isi", "coin"])
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--train-size", type=int, default=8000)
    g.add_argument("--test-size", type=int, default=2000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--lambda", dest="lam", type=float, default=0.0,
                   help="synchrony overlap factor (coin only)")
    g.add_argument("--workers", type=int, default=1)

    n = sub.add_parser("normalize", help="run the whole->part->norm chain on an HDF5 split")
    n.add_argument("--in", dest="src", required=True, help="SHD/SSC-format HDF5 file")
    n.add_argument("--split", default="train")
    n.add_argument("--theta", type=int, default=2)
    n.add_argument("--eps", type=float, default=0.01)
    n.add_argument("--floor", type=float, default=0.5)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--out", required=True, help="output directory")
    n.add_argument("--rules", default=None,
                   help="report.json of an already-normalized training split; "
                        "required for non-training splits")

    pe = sub.add_parser("perturb", help="apply a timing perturbation to a dataset file")
    pe.add_argument("--in", dest="src", required=True)
    pe.add_argument("--kind", required=True,
                    choices=["replace", "jitter-spike", "jitter-neuron", "delete", "reverse"])
    pe.add_argument("--param", type=float, default=0.0)
    pe.add_argument("--seed", type=int, default=0)
    pe.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train a model on train/test dataset files")
    t.add_argument("--train", dest="train_path", required=True)
    t.add_argument("--test", dest="test_path", required=True)
    t.add_argument("--model", choices=["sgd", "sgd_delay", "mlp"], default="sgd")
    t.add_argument("--arch", choices=["isi", "coin", "shd"], required=True,
                   help="architecture preset")
    t.add_argument("--epochs", type=int, default=0)
    t.add_argument("--lr", type=float, default=0.0)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True, help="checkpoint path (.json)")
    t.add_argument("--metrics", default=None, help="optional per-epoch metrics JSON")

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset file")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--perturb", default=None,
                   choices=["replace", "jitter-spike", "jitter-neuron", "delete", "reverse"])
    e.add_argument("--param", type=float, default=0.0)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default=None, help="optional JSON result path")

    s = sub.add_parser("sweep", help="run a sweep described by a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--force", action="store_true")
    s.add_argument("--workers", type=int, default=None)

    pl = sub.add_parser("plot", help="accuracy curves from a sweep CSV")
    pl.add_argument("--csv", required=True)
    pl.add_argument("--out", required=True, help="output figure (.svg/.pdf)")
    pl.add_argument("--chance", type=float, default=None)
    pl.add_argument("--x-label", default="perturbation")
    pl.add_argument("--title", default="")

    r = sub.add_parser("raster", help="raster plot of one sample (optionally vs a perturbed twin)")
    r.add_argument("--in", dest="src", required=True)
    r.add_argument("--index", type=int, default=0)
    r.add_argument("--perturbed", default=None, help="second dataset file for overlay")
    r.add_argument("--out", required=True)

    return p


def _cmd_gen(args) -> None:
    from .synth import gen_dataset

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sizes = {"train": args.train_size, "test": args.test_size}
    datasets = gen_dataset(args.task, sizes, seed=args.seed, lam=args.lam,
                           workers=args.workers)
    for split, ds in datasets.items():
        path = out / f"{split}.sea.ndjson"
        write_ndjson(ds, path)
        print(f"wrote {path} ({len(ds)} samples)")


def _cmd_normalize(args) -> None:
    from .pipeline import PipelineParams, load_rules, pipeline_run

    if not Path(args.src).exists():
        raise ConfigError(f"input file not found: {args.src}")
    rules = load_rules(args.rules) if args.rules else None
    if args.split != "train" and rules is None:
        raise ConfigError("non-training splits need --rules from the training run")
    params = PipelineParams(theta=args.theta, epsilon=args.eps, class_floor=args.floor)
    paths = pipeline_run(args.src, args.out, params=params, seed=args.seed,
                         split=args.split, rules=rules)
    for tag, path in paths.items():
        print(f"{tag}: {path}")


def _cmd_perturb(args) -> None:
    from .perturb import PerturbSpec, apply

    if not Path(args.src).exists():
        raise ConfigError(f"input file not found: {args.src}")
    ds = read_ndjson(args.src)
    kind = args.kind.replace("-", "_")
    out = apply(PerturbSpec(kind, args.param, args.seed), ds)
    write_ndjson(out, args.out)
    print(f"wrote {args.out}")


def _cmd_train(args) -> None:
    from .harness import DEFAULT_EPOCHS, DEFAULT_LR, make_coin_model, make_isi_model, make_shd_model
    from .snn import save_checkpoint
    from .training import TrainConfig, dataset_counts, save_mlp_checkpoint, train, train_count_mlp

    for p in (args.train_path, args.test_path):
        if not Path(p).exists():
            raise ConfigError(f"dataset file not found: {p}")
    tr = read_ndjson(args.train_path)
    te = read_ndjson(args.test_path)
    cfg = TrainConfig(epochs=args.epochs or DEFAULT_EPOCHS[args.arch],
                      batch_size=args.batch_size,
                      lr=args.lr or DEFAULT_LR[args.arch], seed=args.seed)

    if args.model == "mlp":
        acc, mlp = train_count_mlp(dataset_counts(tr), dataset_counts(te), cfg,
                                   tr.num_classes)
        save_mlp_checkpoint(mlp, args.out)
        metrics = [{"epoch": cfg.epochs - 1, "test_accuracy": acc}]
    else:
        delays = args.model == "sgd_delay"
        if args.arch == "isi":
            model = make_isi_model(args.seed)
        elif args.arch == "coin":
            model = make_coin_model(args.seed)
        else:
            model = make_shd_model(tr.num_neurons, tr.num_classes, delays, seed=args.seed)
        if delays and args.arch != "shd":
            raise ConfigError("sgd_delay is defined for the shd architecture")
        model.variant_tag = tr.variant
        metrics = train(model, tr, te, cfg)
        save_checkpoint(model, args.out, train_config=vars(cfg) | {"model": args.model})
        acc = max(m["test_accuracy"] for m in metrics)
    if args.metrics:
        with open(args.metrics, "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=2)
    print(f"best test accuracy: {acc:.4f}")
    print(f"wrote {args.out}")


def _cmd_eval(args) -> None:
    from .perturb import PerturbSpec, apply
    from .training import CountMlp, dataset_counts, evaluate, load_any_checkpoint

    for p in (args.ckpt, args.data):
        if not Path(p).exists():
            raise ConfigError(f"file not found: {p}")
    ds = read_ndjson(args.data)
    if args.perturb:
        ds = apply(PerturbSpec(args.perturb.replace("-", "_"), args.param, args.seed), ds)
    model = load_any_checkpoint(args.ckpt)
    if isinstance(model, CountMlp):
        counts, labels = dataset_counts(ds)
        pred = model.predict(counts)
        accuracy = float((pred == labels).mean())
        confusion = None
    else:
        accuracy, conf = evaluate(model, ds)
        confusion = conf.tolist()
    print(f"accuracy: {accuracy:.4f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"accuracy": accuracy, "confusion": confusion}, fh, indent=2)
        print(f"wrote {args.out}")


def _cmd_sweep(args) -> None:
    from .harness import load_config, run_sweep

    if not Path(args.config).exists():
        raise ConfigError(f"config file not found: {args.config}")
    cfg = load_config(args.config)
    csv_path = run_sweep(cfg, force=args.force, workers=args.workers)
    print(f"results: {csv_path}")


def _cmd_plot(args) -> None:
    from .plots import emit_curves

    if not Path(args.csv).exists():
        raise ConfigError(f"csv file not found: {args.csv}")
    out = emit_curves(args.csv, args.out, chance=args.chance,
                      x_label=args.x_label, title=args.title)
    print(f"wrote {out}")


def _cmd_raster(args) -> None:
    from .plots import raster_dump

    if not Path(args.src).exists():
        raise ConfigError(f"input file not found: {args.src}")
    ds = read_ndjson(args.src)
    if not 0 <= args.index < len(ds):
        raise ConfigError(f"sample index {args.index} out of range (0..{len(ds) - 1})")
    twin = None
    if args.perturbed:
        ds2 = read_ndjson(args.perturbed)
        twin = ds2.samples[args.index]
    out = raster_dump(ds.samples[args.index], args.out, perturbed=twin)
    print(f"wrote {out}")


_COMMANDS = {
    "gen": _cmd_gen,
    "normalize": _cmd_normalize,
    "perturb": _cmd_perturb,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "plot": _cmd_plot,
    "raster": _cmd_raster,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        _COMMANDS[args.command](args)
        return 0
    except (ConfigError, FormatError, SchemaError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except SpikeLabError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
