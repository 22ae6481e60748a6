# graph_simulations/temporal_communities/main.py
"""
Command-line surface of the toolkit (terminal only).

    prepare   validate a dataset directory, optionally write it back with derived labels
    gen       generate a synthetic SBM dataset
    pretrain  representation-only training, writes a checkpoint
    train     pretraining + alternating embedding / clustering, writes a full run
    embed     embeddings of a dataset with a frozen checkpoint
    cluster   clustering of exported embeddings
    eval      metric report of a run
    walks     dump sampled context paths, one per line
    report    aggregate metrics.tsv files of several runs

Training hyperparameters come from the registry in data/train_config.py and
are layered defaults -> --params-file -> --<flag>. Every output directory
gets a config.json echo of the effective configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
from typing import Any

import numpy as np

from graph_simulations.temporal_communities import __version__
from graph_simulations.temporal_communities.data.constants import TEMPORAL_LABEL_BINS
from graph_simulations.temporal_communities.data.train_config import (
    RunConfig, TrainConfig, build_train_values, load_params_file, train_config,
    validate_values, variant_config,
)
from graph_simulations.temporal_communities.errors import (
    ConfigError, DatasetFormatError, TemporalCommunityError,
)
from graph_simulations.temporal_communities.logic.clustering import NWPrior, assign, run_clustering
from graph_simulations.temporal_communities.logic.dataset import describe, load_dataset, save_dataset
from graph_simulations.temporal_communities.logic.evaluation import (
    LabelKind, evaluate_run, louvain_labels, split_edges, temporal_labels,
)
from graph_simulations.temporal_communities.logic.export import (
    build_report, export_clusters, export_embeddings, export_history, export_metrics,
    export_report, format_table, get_summary_dict, load_assignments, load_embeddings,
)
from graph_simulations.temporal_communities.logic.pipeline import (
    STREAM_CLUSTER, STREAM_NEGATIVE, STREAM_TEMPORAL, STREAM_TOPO, align_to_encoder,
    embed_all, holdout_nodes, load_checkpoint, pretrain, save_checkpoint, temporal_window, train,
)
from graph_simulations.temporal_communities.logic.plots import save_all_plots
from graph_simulations.temporal_communities.logic.sampling import (
    ballroom_walk, derive_rng, negative_sample, node2vec_walk,
)
from graph_simulations.temporal_communities.logic.synthetic import SyntheticSpec, gen_synthetic

logger = logging.getLogger("temporal_communities")

CONFIG_ECHO = "config.json"
WALK_KINDS = ("node2vec", "ballroom", "negative")


# ---------------------------
# Console formatting helpers
# ---------------------------
ANSI_ENABLED = True


def color_wrap(text: str, code: str) -> str:
    if not ANSI_ENABLED:
        return text
    return f"\033[{code}m{text}\033[0m"


def header(title: str) -> str:
    return color_wrap(f"\n=== {title} ===", "1;34")


def subheader(title: str) -> str:
    return color_wrap(f"\n--- {title} ---", "1;33")


def ok(text: str) -> str:
    return color_wrap(text, "32")


def err(text: str) -> str:
    return color_wrap(text, "31")


def note(text: str) -> str:
    return color_wrap(text, "36")


def fmt_num(x: Any, precision: int = 4) -> str:
    try:
        if isinstance(x, (bool, np.bool_)):
            return str(x)
        if isinstance(x, (int, np.integer)):
            return str(int(x))
        f = float(x)
        if not np.isfinite(f):
            return "n/a"
        if abs(f) >= 1e5 or (0 < abs(f) < 1e-3):
            return f"{f:.{precision}e}"
        return f"{f:.{precision}f}".rstrip("0").rstrip(".")
    except (TypeError, ValueError):
        return str(x)


def format_sequence(seq, max_items: int = 10) -> str:
    length = len(seq)
    if length == 0:
        return "[]"
    if length <= max_items:
        return "[" + ", ".join(fmt_num(v) for v in seq) + "]"
    head = ", ".join(fmt_num(v) for v in seq[: max_items // 2])
    tail = ", ".join(fmt_num(v) for v in seq[-(max_items // 2):])
    return f"[{head}, ..., {tail}] (len={length})"


def pretty_print_dict(d: dict, indent: int = 0) -> None:
    pad = " " * (indent * 2)
    for k, v in d.items():
        key_str = f"{pad}{k}:"
        if isinstance(v, dict):
            print(key_str)
            pretty_print_dict(v, indent + 1)
        elif isinstance(v, (list, tuple)):
            print(f"{key_str} {format_sequence(v)}")
        elif isinstance(v, (int, float, np.number)):
            print(f"{key_str} {fmt_num(v)}")
        else:
            print(f"{key_str} {v}")


# ---------------------------
# Parser
# ---------------------------
def _common_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--verbose", action="store_true", help="Debug logging.")
    parent.add_argument("--quiet", action="store_true", help="Warnings only, no progress bars.")
    parent.add_argument("--no-color", action="store_true", help="Disable ANSI color output.")
    return parent


def _train_parent() -> argparse.ArgumentParser:
    """--params-file plus one flag per registry entry (all default to None = not given)."""
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("training configuration")
    group.add_argument("--params-file", type=str, default=None,
                       help="JSON object of configuration overrides (key: value).")
    for key, meta in train_config.items():
        kind = str if meta["type"] is tuple else meta["type"]
        group.add_argument(f"--{meta['flag']}", dest=key, type=kind, default=None,
                           help=f"{meta['label']} (default: {meta['default']})")
    for key, meta in variant_config.items():
        group.add_argument(f"--{meta['flag']}", dest=key, choices=meta["options"], default=None,
                           help=f"{meta['label']} (default: {meta['default']})")
    return parent


def build_parser() -> argparse.ArgumentParser:
    common, training = _common_parent(), _train_parent()
    parser = argparse.ArgumentParser(
        prog="tcom", description="Multimodal temporal community embedding toolkit"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--list-defaults", action="store_true",
                        help="Print the default training configuration and exit.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("prepare", parents=[common], help="Validate / convert a dataset directory.")
    p.add_argument("dataset")
    p.add_argument("--out", default=None, help="Write the dataset (plus derived labels) here.")
    p.add_argument("--temporal-bins", type=int, default=None,
                   help="Derive labels_time.tsv with this many equal-frequency bins.")
    p.add_argument("--louvain", action="store_true", help="Derive labels_louvain.tsv.")

    p = sub.add_parser("gen", parents=[common], help="Generate a synthetic SBM dataset.")
    p.add_argument("--out", required=True)
    p.add_argument("--spec-file", default=None, help="JSON object of generator settings.")
    p.add_argument("--seed", type=int, default=0)

    for name, text in (("pretrain", "Representation-only pretraining."),
                       ("train", "Full training run.")):
        p = sub.add_parser(name, parents=[common, training], help=text)
        p.add_argument("dataset")
        p.add_argument("--out", required=True)
        p.add_argument("--resume", default=None, help="Checkpoint directory to continue from.")
        p.add_argument("--holdout", type=float, default=0.0,
                       help="Fraction of nodes hidden during training and inferred afterwards.")
        p.add_argument("--all-edges", action="store_true",
                       help="Train on every edge instead of the training split only.")
        p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("embed", parents=[common], help="Embed a dataset with a frozen checkpoint.")
    p.add_argument("dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("cluster", parents=[common, training], help="Cluster exported embeddings.")
    p.add_argument("dataset")
    p.add_argument("--embeddings", required=True, help="Directory holding embeddings.npz/.tsv.")
    p.add_argument("--out", required=True)
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("eval", parents=[common], help="Metric report of a run.")
    p.add_argument("dataset")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--clusters", default=None, help="Directory with clusters.tsv (default: --embeddings).")
    p.add_argument("--out", default=None, help="Output directory (default: --embeddings).")
    p.add_argument("--seed", type=int, default=None,
                   help="Edge split seed (default: the seed echoed next to the embeddings, else 0).")
    p.add_argument("--heldout-only", action="store_true",
                   help="Score community NMI on endpoints of validation and test edges only.")
    p.add_argument("--temporal-bins", type=int, default=None)
    p.add_argument("--run-name", default=None)

    p = sub.add_parser("walks", parents=[common, training], help="Dump sampled context paths.")
    p.add_argument("dataset")
    p.add_argument("--out", required=True, help="Output text file.")
    p.add_argument("--kind", choices=WALK_KINDS, default="node2vec")
    p.add_argument("--nodes", default=None, help="Comma separated global ids (default: every node).")
    p.add_argument("--epoch", type=int, default=0, help="Epoch index the sampler streams are keyed on.")

    p = sub.add_parser("report", parents=[common], help="Aggregate metrics of several runs.")
    p.add_argument("runs", nargs="+", help="Run directories or metrics.tsv files.")
    p.add_argument("--names", default=None, help="Comma separated column names.")
    p.add_argument("--out", default=None)

    return parser


# ---------------------------
# Config and I/O helpers
# ---------------------------
def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="[%(levelname)s] %(name)s: %(message)s", force=True)


def _progress(args: argparse.Namespace) -> bool:
    return not args.quiet and sys.stderr.isatty()


def _read_params_file(path: str | None) -> dict | None:
    if not path:
        return None
    try:
        return load_params_file(path)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Error reading params file {path}: {e}") from e


def _cli_values(args: argparse.Namespace) -> dict:
    keys = list(train_config) + list(variant_config)
    return {k: getattr(args, k, None) for k in keys}


def build_config(args: argparse.Namespace, base: TrainConfig | None = None) -> TrainConfig:
    """defaults (or a checkpoint's config) -> params file -> explicit flags."""
    params = _read_params_file(getattr(args, "params_file", None))
    if base is None:
        return TrainConfig.from_values(build_train_values(_cli_values(args), params))
    values = base.to_dict()
    if params:
        values.update(validate_values(params))
    values.update(validate_values({k: v for k, v in _cli_values(args).items() if v is not None}))
    return TrainConfig.from_values(values)


def _echo(args: argparse.Namespace, cfg: TrainConfig, out: str, **flags) -> None:
    os.makedirs(out, exist_ok=True)
    run = RunConfig(command=args.command, dataset=getattr(args, "dataset", None), out=out,
                    train=cfg, flags=flags)
    run.write_echo(os.path.join(out, CONFIG_ECHO))


def _echoed_seed(directory: str) -> int | None:
    path = os.path.join(directory, CONFIG_ECHO)
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as f:
        return int(json.load(f)["train"]["seed"])


def _full_rows(values: np.ndarray, nodes: np.ndarray, n: int, what: str) -> np.ndarray:
    """Reorders per-node rows into global node order; every node must be present."""
    if np.unique(nodes).size != n or nodes.min(initial=0) < 0 or nodes.max(initial=-1) >= n:
        raise ConfigError(f"{what} cover {np.unique(nodes).size} of {n} nodes; all are required")
    out = np.empty_like(values)
    out[nodes] = values
    return out


def _parse_nodes(text: str | None, n: int) -> np.ndarray:
    if text is None:
        return np.arange(n)
    try:
        nodes = np.array([int(s) for s in text.split(",") if s.strip()], dtype=np.int64)
    except ValueError as e:
        raise ConfigError(f"--nodes expects comma separated integers: {e}") from e
    bad = nodes[(nodes < 0) | (nodes >= n)]
    if bad.size:
        raise ConfigError(f"--nodes contains ids outside 0..{n - 1}: {bad.tolist()}")
    return nodes


def _print_summary(title: str, summary: dict) -> None:
    print(header(title))
    for section, values in summary.items():
        print(subheader(section))
        if isinstance(values, dict) and "ERROR" in values:
            print(err(f"  {values['ERROR']}"))
        elif isinstance(values, dict):
            pretty_print_dict(values, indent=1)
        else:
            print(f"  {values}")


# ---------------------------
# Commands
# ---------------------------
def cmd_prepare(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.dataset)
    g = dataset.graph
    if args.temporal_bins is not None:
        dataset.labels["time"] = temporal_labels(g, args.temporal_bins)
    if args.louvain:
        dataset.labels["louvain"] = louvain_labels(g)
    print(header("DATASET"))
    pretty_print_dict(describe(dataset), indent=1)
    if args.out:
        written = save_dataset(dataset, args.out)
        print(ok(f"\nWrote {len(written)} files to {args.out}"))
    return 0


def cmd_gen(args: argparse.Namespace) -> int:
    spec = SyntheticSpec.load(args.spec_file) if args.spec_file else SyntheticSpec()
    dataset = gen_synthetic(spec, seed=args.seed, out_dir=args.out)
    print(header("SYNTHETIC DATASET"))
    pretty_print_dict(describe(dataset), indent=1)
    print(ok(f"\nDataset written to {args.out}"))
    return 0


def _training_graphs(args: argparse.Namespace, cfg: TrainConfig):
    """(graph to train on, graph to embed at the end, edge split, held-out nodes)."""
    dataset = load_dataset(args.dataset)
    g = dataset.graph
    split = split_edges(g, seed=cfg.seed)
    if not args.all_edges:
        g = g.without_edge_pairs(np.vstack([split.valid, split.test]))
    if args.holdout:
        hold = holdout_nodes(g, args.holdout, cfg.seed)
        logger.info("Holding out %d nodes", hold.nodes.size)
        return hold.train_graph, hold.full_graph, split, hold.nodes
    return g, g, split, np.zeros(0, dtype=np.int64)


def _load_state(args: argparse.Namespace):
    if not args.resume:
        return None, build_config(args)
    state, saved = load_checkpoint(args.resume)
    logger.info("Resuming from %s at epoch %d", args.resume, state.epoch)
    return state, build_config(args, base=saved)


def cmd_pretrain(args: argparse.Namespace) -> int:
    state, cfg = _load_state(args)
    g_train, _, _, held = _training_graphs(args, cfg)
    print(note(f"Pretraining on {g_train.num_nodes} nodes, {g_train.num_edges} edges"))
    state = pretrain(g_train, cfg, state=state, progress=_progress(args))
    save_checkpoint(args.out, state, cfg)
    export_history(state.history, state.cycles, args.out)
    _echo(args, cfg, args.out, holdout=args.holdout, all_edges=args.all_edges,
          resume=args.resume, heldout_nodes=held.tolist())
    if not args.no_plots:
        save_all_plots(args.out, history=state.history)
    _print_summary("PRETRAINING", get_summary_dict(state, cfg, graph=g_train))
    print(ok(f"\nCheckpoint written to {args.out}"))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    state, cfg = _load_state(args)
    g_train, g_final, split, held = _training_graphs(args, cfg)
    print(note(f"Training variant '{cfg.variant}' on {g_train.num_nodes} nodes, {g_train.num_edges} edges"))
    result = train(g_train, cfg, state=state, valid_split=split, progress=_progress(args))
    state = result.state

    Z = embed_all(g_final, state.params, cfg, progress=_progress(args)) if held.size else result.embeddings
    assignments = assign(Z, result.clusters)
    save_checkpoint(args.out, state, cfg)
    export_embeddings(Z, g_final, args.out)
    export_clusters(result.clusters, assignments, g_final, args.out)
    export_history(state.history, state.cycles, args.out)
    _echo(args, cfg, args.out, holdout=args.holdout, all_edges=args.all_edges,
          resume=args.resume, heldout_nodes=held.tolist())
    if not args.no_plots:
        save_all_plots(args.out, history=state.history, cycles=state.cycles,
                       clusters=result.clusters, Z=Z, assignments=assignments, seed=cfg.seed)
    _print_summary("TRAINING", get_summary_dict(state, cfg, graph=g_train))
    print(ok(f"\nRun written to {args.out}"))
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    state, cfg = load_checkpoint(args.checkpoint)
    g = align_to_encoder(load_dataset(args.dataset).graph, state.params)
    Z = embed_all(g, state.params, cfg, progress=_progress(args))
    export_embeddings(Z, g, args.out)
    if state.clusters is not None:
        export_clusters(state.clusters, assign(Z, state.clusters), g, args.out)
    _echo(args, cfg, args.out, checkpoint=args.checkpoint)
    print(ok(f"Embedded {Z.shape[0]} nodes into {args.out}"))
    return 0


def cmd_cluster(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    g = load_dataset(args.dataset).graph
    Z, nodes = load_embeddings(args.embeddings)
    prior = NWPrior.from_data(Z, cfg)
    clusters = run_clustering(Z, prior, cfg.cluster_steps, derive_rng(cfg.seed, STREAM_CLUSTER, 0),
                              k_init=cfg.k_init)
    export_clusters(clusters, clusters.z, g, args.out, nodes=nodes)
    _echo(args, cfg, args.out, embeddings=args.embeddings)
    if not args.no_plots:
        save_all_plots(args.out, clusters=clusters, Z=Z, assignments=clusters.z, seed=cfg.seed)
    _print_summary("CLUSTERING", get_summary_dict(graph=g, clusters=clusters))
    print(ok(f"\nClusters written to {args.out}"))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.dataset)
    g = dataset.graph
    n = g.num_nodes
    Z, nodes = load_embeddings(args.embeddings)
    Z = _full_rows(Z, nodes, n, "Embeddings")
    z, znodes = load_assignments(args.clusters or args.embeddings)
    z = _full_rows(z, znodes, n, "Cluster assignments")

    seed = args.seed
    if seed is None:
        seed = _echoed_seed(args.embeddings) or 0
    split = split_edges(g, seed=seed)

    label_sets = {}
    for kind in LabelKind:
        ls = dataset.label_set(kind)
        if ls is not None:
            label_sets[kind] = ls
    if args.temporal_bins is not None or LabelKind.TEMPORAL not in label_sets:
        label_sets[LabelKind.TEMPORAL] = temporal_labels(g, args.temporal_bins or TEMPORAL_LABEL_BINS)
    if LabelKind.LINK not in label_sets:
        label_sets[LabelKind.LINK] = louvain_labels(g, seed=seed)

    rows = evaluate_run(Z, z, g, split, label_sets, seed=seed, heldout_only=args.heldout_only)
    out = args.out or args.embeddings
    run = args.run_name or os.path.basename(os.path.abspath(args.embeddings))
    text = export_metrics(rows, out, run=run)
    print(header("EVALUATION"))
    print(text)
    print(ok(f"\nMetrics written to {out}"))
    return 0


def cmd_walks(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    g = load_dataset(args.dataset).graph
    nodes = _parse_nodes(args.nodes, g.num_nodes)
    omega = temporal_window(g, cfg)
    if args.kind == "ballroom" and omega is None:
        raise ConfigError("ballroom walks need a graph with timestamped nodes")
    lines = []
    for v in nodes:
        v = int(v)
        if args.kind == "node2vec":
            paths = [node2vec_walk(g, v, cfg.walk_length, cfg.p, cfg.q,
                                   derive_rng(cfg.seed, STREAM_TOPO, args.epoch, v))]
        elif args.kind == "ballroom":
            paths = ballroom_walk(g, v, omega, cfg.walks_per_node, cfg.walk_length,
                                  derive_rng(cfg.seed, STREAM_TEMPORAL, args.epoch, v))
        else:
            paths = [negative_sample(g, cfg.walk_length, derive_rng(cfg.seed, STREAM_NEGATIVE, args.epoch, v))]
        lines += [" ".join(str(int(u)) for u in p) for p in paths]
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("".join(line + "\n" for line in lines))
    print(ok(f"Wrote {len(lines)} {args.kind} paths to {args.out}"))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    names = [s.strip() for s in args.names.split(",")] if args.names else None
    df = build_report(args.runs, names)
    print(header("REPORT"))
    print(format_table(df))
    if args.out:
        path = export_report(df, args.out)
        print(ok(f"\nReport written to {path}"))
    return 0


COMMANDS = {
    "prepare": cmd_prepare,
    "gen": cmd_gen,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "embed": cmd_embed,
    "cluster": cmd_cluster,
    "eval": cmd_eval,
    "walks": cmd_walks,
    "report": cmd_report,
}


def main(argv: list | None = None) -> int:
    global ANSI_ENABLED

    parser = build_parser()
    args = parser.parse_args(argv)

    if args.list_defaults:
        print(json.dumps(TrainConfig().to_dict(), indent=2, sort_keys=True))
        return 0
    if args.command is None:
        parser.print_help()
        return 2

    ANSI_ENABLED = not args.no_color
    _configure_logging(args)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DatasetFormatError) as e:
        print(err(f"Error: {e}"), file=sys.stderr)
        return 2
    except (TemporalCommunityError, OSError, ValueError) as e:
        print(err(f"{args.command} failed: {e}"), file=sys.stderr)
        if args.verbose:
            traceback.print_exc()
        return 1
    except Exception:
        print(err(f"{args.command} failed with an unexpected error:"), file=sys.stderr)
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
