"""Command-line front end: `infer` runs the real multithreaded pipeline,
`simulate` runs the datapath + schedule model, `dse` sizes an accelerator,
and `bench` emits cost-model grids. Reports are written as JSON (machine)
and CSV (plotting) and embed the fully resolved configuration."""

from __future__ import annotations

import argparse
import csv
import json
import queue
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import acksim, costs, dse, models, schedule
from .graph import load_edge_list, load_features, save_features, synth_features, synth_graph
from .ppr import PprParams, induce_subgraph, ppr_local_push, select_important


def _add_common_io(p):
    p.add_argument("--graph", help="edge-list file (src dst [weight] per line)")
    p.add_argument("--undirected", action=argparse.BooleanOptionalAction,
                   default=True, help="mirror edges of --graph (default: on)")
    p.add_argument("--features", help="binary feature file")
    p.add_argument("--synth-vertices", type=int,
                   help="generate a synthetic graph instead of --graph")
    p.add_argument("--synth-degree", type=float, default=10.0)
    p.add_argument("--feature-dim", type=int,
                   help="synthetic feature width (default: model input dim)")
    p.add_argument("--model", required=True, help="model spec yaml")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--targets", help="comma-separated target vertex ids")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=8, help="INI worker threads")
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--ppr-alpha", type=float, default=0.15)
    p.add_argument("--ppr-epsilon", type=float, default=1e-4)
    p.add_argument("--ppr-direction", default="forward",
                   choices=("forward", "reverse", "symmetric"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gnnsim",
        description="decoupled-GNN mini-batch inference and accelerator simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="run INI + forward passes, write embeddings")
    _add_common_io(p)
    p.add_argument("--accel", help="accelerator config json (sets PE worker count)")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("simulate", help="model per-batch latency on the accelerator")
    _add_common_io(p)
    p.add_argument("--accel", help="accelerator config json (default: U250 point)")
    p.add_argument("--t-ini-us", type=float,
                   help="override measured per-vertex INI time (microseconds)")
    p.add_argument("--pcie-gbps", type=float, default=15.6)
    p.add_argument("--t-fixed-us", type=float, default=0.35)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dse", help="size an accelerator for a platform + model set")
    p.add_argument("--platform", required=True,
                   help='json file: {"slr_dsp_counts": [...], "clock_hz": ...}')
    p.add_argument("--models", required=True,
                   help='json file: {"models": [...]} or {"ops": [...]}')
    p.add_argument("--out", required=True, help="accelerator config json to write")
    p.set_defaults(func=cmd_dse)

    p = sub.add_parser("bench", help="emit analytic cost grids")
    p.add_argument("--analysis", action="store_true", required=True)
    p.add_argument("--degrees", default="5,10,15")
    p.add_argument("--layer-counts", default="1,2,3,5,8,16")
    p.add_argument("--hidden-dim", type=int, default=256)
    p.add_argument("--receptive-field", type=int, default=128)
    p.add_argument("--out", required=True, help="csv path to write")
    p.set_defaults(func=cmd_bench)
    return parser


def _load_inputs(args, spec):
    if args.graph:
        graph = load_edge_list(args.graph, directed=not args.undirected)
    elif args.synth_vertices:
        graph = synth_graph(args.synth_vertices, args.synth_degree, args.seed)
    else:
        raise ValueError("need --graph or --synth-vertices")
    if args.features:
        features = load_features(args.features, graph)
    else:
        dim = args.feature_dim or spec.dims[0]
        features = synth_features(graph.num_vertices, dim, args.seed + 1)
    if features.shape[1] != spec.dims[0]:
        raise ValueError(
            f"feature width {features.shape[1]} does not match model input "
            f"dim {spec.dims[0]}")
    return graph, features


def _pick_targets(args, graph):
    if args.targets:
        targets = [int(t) for t in args.targets.split(",")]
    else:
        if args.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        rng = np.random.default_rng(args.seed + 2)
        targets = rng.choice(graph.num_vertices,
                             size=min(args.batch_size, graph.num_vertices),
                             replace=False).tolist()
    for t in targets:
        if not 0 <= t < graph.num_vertices:
            raise ValueError(f"target {t} out of range")
    return targets


def _build_subgraph(graph, features, target, n_select, params):
    start = time.perf_counter()
    result = ppr_local_push(graph, target, params)
    neighbors = select_important(result.scores, target, n_select)
    sub = induce_subgraph(graph, features, target, neighbors)
    return sub, time.perf_counter() - start


def _run_ini_stage(args, graph, features, targets, spec):
    params = PprParams(alpha=args.ppr_alpha, epsilon=args.ppr_epsilon,
                       direction=args.ppr_direction)
    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        futures = [pool.submit(_build_subgraph, graph, features, t,
                               spec.receptive_field, params)
                   for t in targets]
        results = [f.result() for f in futures]
    subs = [r[0] for r in results]
    ini_seconds = [r[1] for r in results]
    return subs, ini_seconds


def _resolved_config(args, spec, extra=None):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["model"] = {
        "model_kind": spec.model_kind, "num_layers": spec.num_layers,
        "receptive_field": spec.receptive_field, "dims": list(spec.dims),
        "aggregator": spec.aggregator, "activation": spec.activation,
        "readout": spec.readout, "seed": spec.seed,
    }
    if extra:
        cfg.update(extra)
    return cfg


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_flat_csv(path, flat: dict):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        for k, v in flat.items():
            w.writerow([k, v])


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _forward_stage(subs, spec, num_workers):
    """num_workers threads pull vertices FIFO (the scheduler's first-idle
    policy); embeddings land in vertex order regardless of completion order.
    Returns (embeddings, per-vertex seconds, vertex -> worker assignment)."""
    work: queue.SimpleQueue = queue.SimpleQueue()
    for i in range(len(subs)):
        work.put(i)
    embeddings = [None] * len(subs)
    seconds = [0.0] * len(subs)
    assignment = {}
    errors = []

    def worker(wid):
        while not errors:
            try:
                i = work.get_nowait()
            except queue.Empty:
                return
            start = time.perf_counter()
            try:
                embeddings[i] = models.forward(subs[i], spec)
            except Exception as exc:
                errors.append(exc)
                return
            seconds[i] = time.perf_counter() - start
            assignment[i] = wid

    threads = [threading.Thread(target=worker, args=(w,))
               for w in range(num_workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return embeddings, seconds, assignment


def cmd_infer(args) -> int:
    spec = models.load_model_spec(args.model)
    graph, features = _load_inputs(args, spec)
    targets = _pick_targets(args, graph)

    wall_start = time.perf_counter()
    subs, ini_seconds = _run_ini_stage(args, graph, features, targets, spec)

    if args.accel:
        pe_workers = acksim.AcceleratorConfig.load(args.accel).num_pes
    else:
        pe_workers = acksim.AcceleratorConfig().num_pes
    embeddings, forward_seconds, assignment = _forward_stage(subs, spec, pe_workers)
    wall = time.perf_counter() - wall_start

    emb_matrix = np.stack(embeddings).astype(np.float32)
    save_features(f"{args.out}.emb.bin", emb_matrix)

    report = {
        "config": _resolved_config(args, spec, {"pe_workers": pe_workers}),
        "targets": targets,
        "embedding_shape": list(emb_matrix.shape),
        "wall_seconds": wall,
        "ini_seconds_mean": float(np.mean(ini_seconds)),
        "ini_seconds_per_vertex": ini_seconds,
        "forward_seconds_per_vertex": forward_seconds,
        "vertex_worker_assignment": {str(t): assignment[i]
                                     for i, t in enumerate(targets)},
        "subgraph_edge_counts": [s.num_edges for s in subs],
    }
    _write_json(f"{args.out}.json", report)
    _write_flat_csv(f"{args.out}.csv", _flatten({
        k: v for k, v in report.items()
        if not isinstance(v, list) or k == "embedding_shape"}))
    print(f"infer: {len(targets)} embeddings of dim {emb_matrix.shape[1]} "
          f"-> {args.out}.emb.bin ({wall:.3f}s)")
    return 0


def cmd_simulate(args) -> int:
    spec = models.load_model_spec(args.model)
    graph, features = _load_inputs(args, spec)
    targets = _pick_targets(args, graph)
    cfg = acksim.AcceleratorConfig.load(args.accel) if args.accel \
        else acksim.AcceleratorConfig()

    subs, measured_ini = _run_ini_stage(args, graph, features, targets, spec)

    host = schedule.HostParams(
        ini_threads=args.threads,
        ini_seconds_per_vertex=(args.t_ini_us * 1e-6 if args.t_ini_us
                                else float(np.mean(measured_ini))),
        pcie_bytes_per_s=args.pcie_gbps * 1e9,
        transfer_overhead_s=args.t_fixed_us * 1e-6,
    )

    traces = []
    compute_s = []
    load_s = []
    embeddings = []
    fidelity = 0.0
    for sub in subs:
        emb, trace = acksim.run_pe(sub, spec, cfg)
        ref = models.forward(sub, spec)   # functional path shared with `infer`
        diff = float(np.max(np.abs(emb - ref))) if emb.size else 0.0
        fidelity = max(fidelity, diff)
        if not np.allclose(emb, ref, rtol=1e-5, atol=1e-6):
            raise RuntimeError(
                f"datapath output diverged from the reference forward pass "
                f"(max abs diff {diff:.3e})")
        embeddings.append(ref)
        traces.append(trace)
        compute_s.append(trace.total_cycles / cfg.clock_hz)
        load_s.append(schedule.load_seconds(
            sub.num_vertices, spec.dims[0], sub.num_edges, host))

    timeline = schedule.schedule_batch(
        compute_s, host, cfg.num_pes, load_time=np.asarray(load_s),
        return_time=schedule.return_seconds(spec.dims[-1], host))
    report = schedule.latency_report(timeline, traces)

    save_features(f"{args.out}.emb.bin", np.stack(embeddings).astype(np.float32))
    timeline.write_csv(f"{args.out}.timeline.csv")
    with open(f"{args.out}.kernels.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex", "kind", "mode", "start_cycle", "end_cycle",
                    "stall_cycles", "switched"])
        for t, trace in zip(targets, traces):
            for row in trace.csv_rows():
                w.writerow([t, *row])
    doc = {
        "config": _resolved_config(args, spec, {
            "accelerator": cfg.to_dict(),
            "host": host.__dict__,
        }),
        "targets": targets,
        "report": report.to_dict(),
        "datapath_vs_reference_max_abs_diff": fidelity,
        "per_vertex": {
            "compute_seconds": compute_s,
            "load_seconds": load_s,
            "total_cycles": [t.total_cycles for t in traces],
            "stall_cycles": [t.stall_cycles for t in traces],
            "mode_switches": [t.mode_switches for t in traces],
        },
    }
    _write_json(f"{args.out}.json", doc)
    _write_flat_csv(f"{args.out}.csv", _flatten(report.to_dict()))
    print(f"simulate: batch of {len(targets)} -> latency "
          f"{report.batch_latency * 1e3:.3f} ms "
          f"(init {report.init_fraction * 100:.2f}%), report {args.out}.json")
    return 0


def cmd_dse(args) -> int:
    platform = dse.DsePlatform.load(args.platform)
    with open(args.models) as fh:
        doc = json.load(fh)
    if "ops" in doc:
        ops = frozenset(doc["ops"])
    elif "models" in doc:
        ops = dse.ops_for_models(doc["models"])
    else:
        raise ValueError(f"{args.models}: need 'models' or 'ops'")
    result = dse.dse_full(platform, ops)
    result.config.save(args.out)
    print(f"dse: dsps_per_alu={result.config.dsps_per_alu} "
          f"array_dim={result.config.array_dim} num_pes={result.config.num_pes} "
          f"{'(heterogeneous SLRs)' if result.heterogeneous else ''}"
          f"-> {args.out}")
    return 0


def cmd_bench(args) -> int:
    degrees = [float(x) for x in args.degrees.split(",")]
    layer_counts = [int(x) for x in args.layer_counts.split(",")]
    rows = costs.cost_grid(degrees, layer_counts, args.hidden_dim,
                           args.receptive_field)
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        w.writerows(rows)
    print(f"bench: {len(rows)} cost rows -> {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
