"""Command-line entry point; every subcommand emits a JSON report.

Reports embed a run manifest (command, resolved config, seed, version) so a
run can be reproduced from its own output. Exit codes: 0 success, 2 for bad
input or configuration, 1 for internal errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, idmap, memsim, schedule as sched, trainer
from .errors import ConfigError, FormatError, MiniGLError, NotFoundError, ParseError, ValidationError
from .compute import TileConfig, plan_tiles
from .graph import FeatureMatrix, GraphGenSpec, generate, load_binary, save_binary
from .sampler import Fanouts, make_epoch_batches, sample_khop, sample_random_walk
from .trainer import ModelConfig, PipelineFlags, derive_seed, phase_breakdown, two_cluster_task

_USAGE_ERRORS = (ValidationError, ParseError, FormatError, NotFoundError, ConfigError)


def _default_workers() -> int:
    return int(os.environ.get("MINIGL_WORKERS", "1"))


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected on/off, got {text!r}")
    return text == "on"


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _manifest(args, command):
    config = {
        k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out") and v is not None
    }
    return {
        "command": command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "out": getattr(args, "out", None),
    }


def _emit(payload: dict, args) -> None:
    payload = {"manifest": _manifest(args, args.command), **payload}
    text = json.dumps(payload, indent=2, default=_json_default)
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load_graph(args):
    return load_binary(args.graph)


def _sample_batches(g, args, num_batches=None):
    """Shared sampling path for the window-based subcommands."""
    all_ids = np.arange(g.num_nodes, dtype=np.uint64)
    seed_lists = make_epoch_batches(g, all_ids, args.batch_size, derive_seed(args.seed, 11))
    if num_batches is not None:
        seed_lists = seed_lists[:num_batches]
    batches = []
    for j, seeds in enumerate(seed_lists):
        batch_seed = derive_seed(args.seed, 13, j)
        if getattr(args, "sampler", "khop") == "walk":
            batches.append(sample_random_walk(g, seeds, args.walk_length, batch_seed))
        else:
            batches.append(sample_khop(g, seeds, Fanouts(args.fanouts), batch_seed))
    return batches


def _cmd_gen(args):
    spec = GraphGenSpec(
        model=args.model,
        num_nodes=args.nodes,
        avg_degree=args.avg_degree,
        exponent=args.exponent,
        seed=args.seed,
    )
    g = generate(spec)
    save_binary(g, args.path)
    _emit({"num_nodes": g.num_nodes, "num_edges": g.num_edges, "path": args.path}, args)
    return 0


def _cmd_sample(args):
    g = _load_graph(args)
    seeds = np.array(args.seeds, dtype=np.uint64)
    if args.sampler == "walk":
        batch = sample_random_walk(g, seeds, args.walk_length, args.seed)
    else:
        batch = sample_khop(g, seeds, Fanouts(args.fanouts), args.seed)
    layers = [
        [[int(t), int(s), float(w)] for t, s, w in zip(*layer)] for layer in batch.layers
    ]
    _emit(
        {
            "seeds": batch.seeds.tolist(),
            "layers": layers,
            "unique_nodes": batch.unique_nodes.tolist(),
        },
        args,
    )
    return 0


def _cmd_reorder(args):
    g = _load_graph(args)
    batches = _sample_batches(g, args, num_batches=args.window)
    schedule = sched.schedule_window(batches, enable_reorder=True, feature_dim=args.dim)
    default = sched.schedule_window(batches, enable_reorder=False, feature_dim=args.dim)
    _emit(
        {
            "order": schedule.order,
            "transition_load_sizes": [len(t.load_ids) for t in schedule.transitions],
            "window_traffic_bytes": schedule.window_traffic_bytes,
            "default_traffic_bytes": default.window_traffic_bytes,
        },
        args,
    )
    return 0


def _cmd_stats_match(args):
    g = _load_graph(args)
    batches = _sample_batches(g, args, num_batches=args.window)
    stats = sched.match_stats(batches)
    _emit(stats, args)
    return 0


def _cmd_simulate_io(args):
    g = _load_graph(args)
    limit = args.limit_windows * args.window if args.limit_windows else None
    batches = _sample_batches(g, args, num_batches=limit)
    windows = [batches[i : i + args.window] for i in range(0, len(batches), args.window)]
    schedules = [
        sched.schedule_window(w, enable_reorder=args.reorder, feature_dim=args.dim)
        for w in windows
    ]
    policy = "static-degree" if args.policy == "degree" else "none"
    report = memsim.simulate_epoch_io(
        schedules,
        args.cache_ratio,
        policy,
        (g.num_nodes, args.dim),
        memsim.CostParams(),
        degrees=g.in_degrees(),
        match=args.match,
    )
    _emit(report.to_dict(), args)
    return 0


def _cmd_cost_model(args):
    params = memsim.CostParams(
        shared_bw=args.shared_bw, global_bw=args.global_bw, host_link_bw=args.host_link_bw
    )
    naive = memsim.t_naive(args.fanout, args.dim, params)
    aware = memsim.t_memory_aware(args.fanout, args.dim, params)
    cfg = TileConfig()
    plan = plan_tiles(
        cfg.targets_per_tile,
        args.dim,
        np.full(cfg.targets_per_tile, args.fanout, dtype=np.int64),
        cfg,
    )
    _emit(
        {
            "t_naive": naive,
            "t_memory_aware": aware,
            "ratio": naive / aware,
            "tile": {
                "targets_per_tile": cfg.targets_per_tile,
                "dims_per_tile": cfg.dims_per_tile,
                "dim_chunks": len(plan.dim_chunks),
                "scratch_bytes": plan.row_groups[0][3],
            },
        },
        args,
    )
    return 0


def _cmd_bench_map(args):
    result = idmap.run_bench(args.n, args.workers, args.dup_ratio, args.seed, args.repeats)
    _emit(result, args)
    return 0


def _cmd_train(args):
    if args.graph:
        g = _load_graph(args)
        rng = np.random.Generator(np.random.Philox(derive_seed(args.seed, 23)))
        data = rng.standard_normal((g.num_nodes, args.dim)).astype(np.float32)
        feats = FeatureMatrix(g.num_nodes, args.dim, data)
        # degree-quantile pseudo labels keep the run self-contained
        deg = g.out_degrees()
        labels = (deg > np.median(deg)).astype(np.int64)
        classes = 2
    else:
        g, feats, labels = two_cluster_task(args.nodes, args.dim, seed=derive_seed(args.seed, 23))
        classes = 2
    dims = [feats.dim] + [args.hidden_dim] * (len(args.fanouts) - 1) + [classes]
    cfg = ModelConfig(
        layer_dims=tuple(dims),
        fanouts=Fanouts(args.fanouts),
        arch=args.arch,
        batch_size=args.batch_size,
        window_n=args.window,
        epochs=args.epochs,
        lr=args.lr,
        seed=args.seed,
        map_workers=args.workers,
    )
    flags = PipelineFlags(match=args.match, reorder=args.reorder, memory_aware=args.memory_aware)
    report = trainer.train(g, feats, labels, cfg, flags)
    payload = report.to_dict()
    payload["phase_breakdown"] = phase_breakdown(report)
    if args.deterministic:
        for epoch in payload["epochs"]:
            epoch.pop("phase_seconds", None)
        payload.pop("phase_breakdown", None)
    if args.loss_csv:
        with open(args.loss_csv, "w", encoding="ascii") as fh:
            fh.write("epoch,loss,accuracy\n")
            for i, e in enumerate(report.epochs):
                fh.write(f"{i},{e.loss:.8f},{e.accuracy:.6f}\n")
    _emit(payload, args)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minigl",
        description="Desk-scale sampling-based GNN training pipeline with IO and memory modeling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic graph and save it")
    p.add_argument("--model", choices=["er", "erdos-renyi", "pl", "power-law"], required=True)
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--avg-degree", dest="avg_degree", type=float)
    p.add_argument("--exponent", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--path", required=True, help="output graph file")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("sample", help="sample one mini-batch subgraph")
    p.add_argument("--graph", required=True)
    p.add_argument("--seeds", type=_int_list, required=True)
    p.add_argument("--sampler", choices=["khop", "walk"], default="khop")
    p.add_argument("--fanouts", type=_int_list, default=[5, 10, 15])
    p.add_argument("--walk-length", dest="walk_length", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_sample)

    def window_args(p, dim_default=64):
        p.add_argument("--graph", required=True)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=2000)
        p.add_argument("--window", type=int, default=8)
        p.add_argument("--sampler", choices=["khop", "walk"], default="khop")
        p.add_argument("--fanouts", type=_int_list, default=[5, 10, 15])
        p.add_argument("--walk-length", dest="walk_length", type=int, default=3)
        p.add_argument("--dim", type=int, default=dim_default)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("reorder", help="greedy window reorder and its load sets")
    window_args(p)
    p.set_defaults(func=_cmd_reorder)

    p = sub.add_parser("stats-match", help="match-degree statistics over a window")
    window_args(p)
    p.set_defaults(func=_cmd_stats_match)

    p = sub.add_parser("simulate-io", help="host-to-device traffic simulation")
    window_args(p)
    p.add_argument("--cache-ratio", dest="cache_ratio", type=float, default=0.0)
    p.add_argument("--policy", choices=["none", "degree"], default="none")
    p.add_argument("--match", type=_on_off, default=True)
    p.add_argument("--reorder", type=_on_off, default=True)
    p.add_argument("--limit-windows", dest="limit_windows", type=int)
    p.set_defaults(func=_cmd_simulate_io)

    p = sub.add_parser("cost-model", help="analytic fetch-time model for one target")
    p.add_argument("--fanout", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--shared-bw", dest="shared_bw", type=float, default=12e12)
    p.add_argument("--global-bw", dest="global_bw", type=float, default=938e9)
    p.add_argument("--host-link-bw", dest="host_link_bw", type=float, default=32e9)
    p.set_defaults(func=_cmd_cost_model)

    p = sub.add_parser("bench-map", help="fused ID map vs locked baseline timing")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--workers", type=int, default=_default_workers())
    p.add_argument("--dup-ratio", dest="dup_ratio", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=_cmd_bench_map)

    p = sub.add_parser("train", help="train a GCN/GIN over the sampled pipeline")
    p.add_argument("--graph", help="binary graph path; omit to use the synthetic task")
    p.add_argument("--task", choices=["two-cluster"], default="two-cluster")
    p.add_argument("--nodes", type=int, default=200)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int, default=64)
    p.add_argument("--arch", choices=["gcn", "gin"], default="gcn")
    p.add_argument("--fanouts", type=_int_list, default=[5, 10, 15])
    p.add_argument("--batch-size", dest="batch_size", type=int, default=64)
    p.add_argument("--window", type=int, default=8)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--match", type=_on_off, default=True)
    p.add_argument("--reorder", type=_on_off, default=True)
    p.add_argument("--memory-aware", dest="memory_aware", type=_on_off, default=True)
    p.add_argument("--workers", type=int, default=_default_workers())
    p.add_argument("--loss-csv", dest="loss_csv")
    p.add_argument("--deterministic", action="store_true", help="omit wall-time fields")
    p.set_defaults(func=_cmd_train)

    for sp in sub.choices.values():
        sp.add_argument("--out", help="write the JSON report here instead of stdout")
    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "gen":
        args.model = {"er": "erdos-renyi", "pl": "power-law"}.get(args.model, args.model)
    try:
        return args.func(args)
    except (*_USAGE_ERRORS, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MiniGLError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
