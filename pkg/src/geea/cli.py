"""Command-line entry point: ``geea <command> [flags]``.

Exit status is 0 on success, 1 when a command fails at run time and 2 on a
usage error. Machine-readable results go to standard output, progress and
human-readable tables to standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import theory
from .decoders import discretize_prediction
from .encoder import MODALS
from .evalmetrics import evaluate_alignment, evaluate_synthesis, rows_to_csv, sweep_training_ratio
from .kgdata import (
    DANGLING_FRACTION,
    SyntheticConfig,
    build_synthesis_split,
    compute_statistics,
    generate_synthetic_pair,
    load_dataset,
    save_dataset,
)
from .mvae import FlowBatch, FlowTag
from .training import (
    TrainConfig,
    default_config_names,
    embed_all,
    fit,
    load_checkpoint,
    load_named_config,
    save_checkpoint,
)

logger = logging.getLogger("geea")

LOSS_LOG = "losses.jsonl"


class UsageError(Exception):
    """Bad flag combination detected after parsing; exits with status 2."""


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _train_config(name_or_path: str | None, seed: int | None) -> TrainConfig:
    if name_or_path is None:
        config = load_named_config("synthetic")
    elif Path(name_or_path).is_file():
        config = TrainConfig.load(name_or_path)
    elif name_or_path in default_config_names():
        config = load_named_config(name_or_path)
    else:
        raise UsageError(f"--config {name_or_path!r} is neither a file nor one of {list(default_config_names())}")
    return config if seed is None else config.replace(seed=seed)


def _require(args, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"{args.command} needs {', '.join(missing)}")


def _dataset_for_checkpoint(args):
    data = args.data
    if data is None:
        meta = json.loads((Path(args.ckpt) / "meta.json").read_text(encoding="utf-8"))
        data = meta.get("data")
        if data is None:
            raise UsageError("checkpoint does not record its data directory; pass --data")
    return load_dataset(data)


# ------------------------------------------------------------------ commands

def cmd_prepare(args) -> int:
    """Write a dataset directory: a synthetic pair, or a re-split of ``--data``."""
    _require(args, "out")
    seed = 0 if args.seed is None else args.seed
    if args.data:
        dataset = load_dataset(args.data)
    else:
        cfg = SyntheticConfig()
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                cfg = SyntheticConfig(**json.load(fh))
        dataset = generate_synthetic_pair(cfg, seed=seed)
    if args.dangling_fraction is not None:
        dataset = build_synthesis_split(dataset, args.dangling_fraction, seed=seed)
    save_dataset(dataset, args.out)
    _emit({"out": str(Path(args.out)), **compute_statistics(dataset).as_dict()})
    return 0


def cmd_train(args) -> int:
    _require(args, "data", "out")
    config = _train_config(args.config, args.seed)
    dataset = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / LOSS_LOG, "w", encoding="utf-8") as log:
        state = fit(dataset, config, loss_log=log, progress=_progress)
    save_checkpoint(state, config, out, args.data)
    src, tgt = embed_all(state.model)
    report = evaluate_alignment(src, tgt, dataset.test_alignments)
    _emit({"checkpoint": str(out), "epochs": state.epoch, "best_epoch": state.best_epoch,
           "test": report.to_dict()})
    return 0


def cmd_eval_align(args) -> int:
    _require(args, "ckpt")
    dataset = _dataset_for_checkpoint(args)
    model, _, _ = load_checkpoint(args.ckpt, dataset)
    src, tgt = embed_all(model)
    report = evaluate_alignment(src, tgt, dataset.test_alignments)
    _progress(report.table())
    _emit(report.to_dict())
    return 0


def cmd_eval_synth(args) -> int:
    _require(args, "ckpt")
    dataset = _dataset_for_checkpoint(args)
    if len(dataset.dangling_pairs) == 0:
        raise UsageError("dataset has no dangling pairs; prepare it with --dangling-fraction")
    model, _, _ = load_checkpoint(args.ckpt, dataset)
    report = evaluate_synthesis(model, dataset, fid_samples=args.count,
                                seed=0 if args.seed is None else args.seed)
    _emit(report.to_dict())
    return 1 if report.divergent else 0


def _records(model, dataset, subs: dict[str, torch.Tensor], top_k: int) -> list[dict]:
    kg = dataset.reference_target
    pred = model.decoders.decode(subs, "target")
    neighbors = discretize_prediction(pred.graph, "graph", top_k=top_k)
    attributes = discretize_prediction(pred.attr, "attr", top_k=top_k)
    image = discretize_prediction(pred.image, "image", image_table=kg.image_features)
    graph_p = pred.graph.detach().numpy()
    attr_p = pred.attr.detach().numpy()
    out = []
    for i in range(len(neighbors)):
        out.append({
            "neighbors": [kg.names[j] for j in neighbors[i]],
            "attributes": [f"attr_{j}" for j in attributes[i]],
            "nearest_image_entity": kg.names[image[i]],
            "scores": {
                "neighbors": [round(float(graph_p[i, j]), 6) for j in neighbors[i]],
                "attributes": [round(float(attr_p[i, j]), 6) for j in attributes[i]],
            },
        })
    return out


@torch.no_grad()
def cmd_synthesize(args) -> int:
    _require(args, "ckpt")
    dataset = _dataset_for_checkpoint(args)
    model, _, _ = load_checkpoint(args.ckpt, dataset)
    seed = 0 if args.seed is None else args.seed
    if args.mode == "unconditional":
        count = 1 if args.count is None else args.count
        if count < 1:
            raise UsageError("--count must be >= 1")
        subs = model.mvae.sample_unconditional(count, torch.Generator().manual_seed(seed))
        sources = [None] * count
    else:
        if args.ids:
            ids = np.asarray(args.ids, dtype=np.int64)
        else:
            ids = dataset.dangling_pairs[:, 0]
            if len(ids) == 0:
                raise UsageError("no dangling source entities; pass --ids")
        if args.count is not None:
            ids = ids[:args.count]
        src = model.encoder.encode("source", ids)
        flows = model.mvae.run_flows(FlowBatch(src.subs(), None, supervised=True), [FlowTag.XY],
                                     deterministic=True)[FlowTag.XY]
        subs = {m: flows[m].reconstruction for m in MODALS}
        sources = [dataset.source.names[i] for i in ids]
    for source, record in zip(sources, _records(model, dataset, subs, args.top_k)):
        if source is not None:
            record["source"] = source
        sys.stdout.write(json.dumps(record, sort_keys=True) + "\n")
    return 0


def cmd_sweep_ratio(args) -> int:
    _require(args, "data")
    config = _train_config(args.config, None)
    dataset = load_dataset(args.data)
    ratios = args.ratios or [0.2, 0.4, 0.6, 0.8, 1.0]
    seeds = [config.seed] if args.seed is None else [args.seed]
    rows = sweep_training_ratio(dataset, ratios, config, seeds, progress=_progress)
    text = rows_to_csv(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_verify_theory(args) -> int:
    report = theory.verify_all(trials=args.trials, seed=0 if args.seed is None else args.seed)
    print(report.table())
    return 0 if report.passed else 1


def cmd_stats(args) -> int:
    _require(args, "data")
    _emit(compute_statistics(load_dataset(args.data)).as_dict())
    return 0


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "eval-align": cmd_eval_align,
    "eval-synth": cmd_eval_synth,
    "synthesize": cmd_synthesize,
    "sweep-ratio": cmd_sweep_ratio,
    "verify-theory": cmd_verify_theory,
    "stats": cmd_stats,
}


def _ratio_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not values or any(not 0.0 < v <= 1.0 for v in values):
        raise argparse.ArgumentTypeError("ratios must lie in (0, 1]")
    return values


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError("must lie strictly between 0 and 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geea", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name: str, help: str, *flags: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        for flag in flags:
            FLAGS[flag](p)
        return p

    FLAGS = {
        "config": lambda p: p.add_argument("--config", help="JSON config file or bundled config name"),
        "data": lambda p: p.add_argument("--data", help="dataset directory"),
        "out": lambda p: p.add_argument("--out", help="output directory or file"),
        "ckpt": lambda p: p.add_argument("--ckpt", help="checkpoint directory written by train"),
        "seed": lambda p: p.add_argument("--seed", type=int, help="seed for every random choice"),
        "trials": lambda p: p.add_argument("--trials", type=int, default=1000,
                                           help="random trials for the identity checks"),
        "count": lambda p: p.add_argument("--count", type=int, help="number of entities or samples"),
        "ratios": lambda p: p.add_argument("--ratios", type=_ratio_list,
                                           help="comma-separated seed ratios, e.g. 0.1,0.3,1.0"),
        "dangling": lambda p: p.add_argument("--dangling-fraction", type=_fraction,
                                             help=f"move this share of T to the dangling split "
                                                  f"(commonly {DANGLING_FRACTION})"),
    }

    add("prepare", "generate a synthetic pair or re-split a dataset",
        "config", "data", "out", "seed", "dangling")
    add("train", "train a model and write a checkpoint", "config", "data", "out", "seed")
    add("eval-align", "Hits@k / MRR on the test pairs", "ckpt", "data")
    add("eval-synth", "PRE / RE / FID on the dangling pairs", "ckpt", "data", "seed", "count")
    p = add("synthesize", "emit synthesized target entities as JSON lines",
            "ckpt", "data", "seed", "count")
    p.add_argument("--mode", choices=["conditional", "unconditional"], default="conditional")
    p.add_argument("--ids", type=int, nargs="+", help="source entity ids (conditional mode)")
    p.add_argument("--top-k", type=int, default=6, help="neighbours/attributes listed per entity")
    add("sweep-ratio", "train at several seed ratios; CSV rows",
        "config", "data", "out", "seed", "ratios")
    add("verify-theory", "numerical checks of the KL and ELBO identities", "trials", "seed")
    add("stats", "dataset statistics", "data")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"geea {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported, not swallowed
        logger.debug("command failed", exc_info=True)
        print(f"geea {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
