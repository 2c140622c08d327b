"""Command line: ``partition``, ``train``, ``evaluate``, ``export``."""
import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, TrainConfig, parse_config
from .data import DatasetError, InteractionDataset, load_dataset_dir, split_validation
from .embedding import compose, parameter_count
from .graph import build_adjacency, expand_adjacency
from .io import CheckpointError, atomic_write, load_checkpoint, save_checkpoint, save_matrix
from .metrics import evaluate_ranking
from .partition import partition_graph
from .trainer import LOG_HEADER, TrainState, entity_embeddings, train

log = logging.getLogger("compgcf")

METRIC_KEYS = ("ndcg@10", "recall@10", "ndcg@20", "recall@20")


def dataset_checksum(path) -> str:
    h = hashlib.sha256()
    for name in ("train.txt", "test.txt"):
        h.update((Path(path) / name).read_bytes())
    return h.hexdigest()


def run_manifest(data_dir, cfg: TrainConfig, out_dir) -> dict:
    checksum = dataset_checksum(data_dir)
    cfg_text = cfg.to_text()
    run_id = hashlib.sha1((cfg_text + checksum).encode()).hexdigest()[:12]
    return {
        "run_id": run_id,
        "seed": cfg.seed,
        "config": dataclasses.asdict(cfg),
        "dataset": {"path": str(Path(data_dir).resolve()), "sha256": checksum},
        "layout": {
            "manifest": "manifest.json",
            "config": "config.txt",
            "metrics": "metrics.tsv",
            "checkpoint": "checkpoint.bin",
            "report": "report.tsv",
        },
        "out_dir": str(Path(out_dir).resolve()),
    }


def _fit_pairs(data: InteractionDataset, cfg: TrainConfig) -> np.ndarray:
    return split_validation(data, cfg.validation_fraction, cfg.seed)[0]


def _report(metrics: dict[str, float], params: int) -> str:
    head = "\t".join([*METRIC_KEYS, "params"])
    row = "\t".join([*(f"{metrics.get(k, 0.0):.6f}" for k in METRIC_KEYS), str(params)])
    return f"{head}\n{row}\n"


def cmd_partition(args) -> int:
    data = load_dataset_dir(args.data)
    part = partition_graph(build_adjacency(data), args.c, seed=args.seed,
                           balance_factor=args.balance_factor)
    atomic_write(args.out, "".join(f"{x}\n" for x in part.labels))
    return 0


def cmd_train(args) -> int:
    cfg = parse_config(args.config) if args.config else TrainConfig()
    data = load_dataset_dir(args.data)
    cfg.validate(data.num_entities)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "manifest.json", json.dumps(run_manifest(args.data, cfg, out), indent=2) + "\n")
    atomic_write(out / "config.txt", cfg.to_text())

    def echo(line):
        if not args.quiet:
            print(line, flush=True)

    echo(LOG_HEADER)
    result = train(data, cfg, on_log=echo)
    state = result.state
    atomic_write(out / "metrics.tsv", result.log_text)
    save_checkpoint(out / "checkpoint.bin", state.codebook, state.assignment,
                    (state.step, state.adam_m, state.adam_v))
    atomic_write(out / "report.tsv", _report(result.test_metrics,
                                             parameter_count(state.assignment, state.codebook)))
    return 0


def _config_for(checkpoint, explicit) -> TrainConfig:
    if explicit:
        return parse_config(explicit)
    sibling = Path(checkpoint).parent / "config.txt"
    return parse_config(sibling) if sibling.is_file() else TrainConfig()


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    cfg = _config_for(args.checkpoint, args.config)
    data = load_dataset_dir(args.data)
    if ckpt.assignment.n_entities != data.num_entities:
        raise CheckpointError(f"checkpoint has {ckpt.assignment.n_entities} entities, "
                              f"dataset has {data.num_entities}")
    adjacency = build_adjacency(data, _fit_pairs(data, cfg))
    graph = expand_adjacency(adjacency, ckpt.assignment)
    dtype = ckpt.codebook.weights.dtype
    graph = dataclasses.replace(graph, normalized=graph.normalized.astype(dtype))
    state = TrainState(ckpt.codebook, ckpt.assignment, graph, adjacency, None, None)
    h_full = entity_embeddings(state, cfg.L)
    res = evaluate_ranking(h_full, data.num_users, data.user_items("test"), data.user_items("train"))
    sys.stdout.write(_report(res.summary, parameter_count(ckpt.assignment, ckpt.codebook)))
    if args.per_user:
        lines = ["user\t" + "\t".join(METRIC_KEYS)]
        for r, u in enumerate(res.users):
            lines.append(f"{u}\t" + "\t".join(f"{res.per_user[k][r]:.6f}" for k in METRIC_KEYS))
        atomic_write(args.per_user, "\n".join(lines) + "\n")
    return 0


def cmd_export(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    save_matrix(args.out, compose(ckpt.assignment, ckpt.codebook))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compgcf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", help="write balanced partition labels, one per line")
    p.add_argument("--data", required=True, help="directory holding train.txt and test.txt")
    p.add_argument("--c", type=int, required=True, help="number of parts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--balance-factor", type=float, default=1.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("train", help="train a codebook + assignment model")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="key=value config file (defaults if omitted)")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="report test metrics and parameter count")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="config used for training (default: config.txt beside the checkpoint)")
    p.add_argument("--per-user", help="optional per-user metric file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export", help="write composed entity embeddings")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, CheckpointError, FileNotFoundError) as exc:
        print(f"compgcf {args.command}: error: {exc}", file=sys.stderr)
        return 2
