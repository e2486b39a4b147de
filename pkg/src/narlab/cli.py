"""Command-line surface: reproducible experiments writing CSV/JSON artifacts.

Every subcommand echoes its configuration into a manifest JSON placed next
to its outputs, with a content hash per emitted file. All randomness derives
from --seed through named sub-streams, so each analysis can be reproduced in
isolation.

Exit codes: 0 success, 2 usage error, 3 data/schema error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import AutodiffError
from .graphs import GeneratorSpec, GraphError
from .latent import (
    DirectionDatabase,
    DirectionEntry,
    LatentError,
    TrajectoryTensor,
    attractor_stats,
    build_direction_db,
    mispredict_report,
    node_aggregate,
    pca,
    perturb_eval,
    record_symmetry_clusters,
    record_trajectories,
    step_wise,
    trajectory_wise,
    value_generalisation_report,
)
from .model import (
    Model,
    ModelConfig,
    ModelError,
    load_checkpoint,
    rollout,
    save_checkpoint,
)
from .training import (
    TrainConfig,
    TrainingError,
    aggregate_accuracy,
    evaluate,
    forced_steps_eval,
    oracle_for,
    sample_graphs,
    train_one_seed,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class ManifestWriter:
    """Collects emitted files and writes the single per-run manifest."""

    def __init__(self, command: str, args: argparse.Namespace, out_dir: Path):
        self.command = command
        self.config = {
            k: v for k, v in sorted(vars(args).items()) if k not in ("func", "parser")
        }
        self.out_dir = out_dir
        self.files: list[Path] = []

    def emit_text(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        self.files.append(path)
        return path

    def register(self, path: Path) -> None:
        self.files.append(Path(path))

    def finish(self) -> Path:
        outputs = []
        for f in self.files:
            digest = hashlib.sha256(f.read_bytes()).hexdigest()
            outputs.append({"path": f.name, "sha256": digest})
        manifest = {
            "command": self.command,
            "config": {k: _jsonable(v) for k, v in self.config.items()},
            "tool_version": __version__,
            "outputs": outputs,
        }
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return path


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _csv(rows: list[dict], columns: list[str]) -> str:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(str(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


def _parse_seeds(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.split(",") if s.strip() != "")


def _parse_floats(text: str) -> list[float]:
    return [float(s) for s in text.split(",") if s.strip() != ""]


def _model_config(args) -> ModelConfig:
    agg = args.agg
    temp = args.temp
    if temp is not None and agg != "softmax":
        args.parser.error(f"--temp only applies to --agg softmax (got --agg {agg})")
    if agg == "softmax" and temp is None:
        temp = 0.01
    return ModelConfig(
        latent_dim=args.latent_dim,
        processor=args.processor,
        aggregator=agg,
        softmax_temperature=temp if temp is not None else 0.01,
        decay_factor=args.decay,
        decay_mode=args.decay_mode,
    )


def _train_config(args, model_cfg: ModelConfig, seeds: tuple[int, ...]) -> TrainConfig:
    return TrainConfig(
        task=args.task,
        model=model_cfg,
        train_spec=GeneratorSpec(n=args.train_n, p=args.p),
        eval_spec=GeneratorSpec(n=args.eval_n, p=args.p),
        batch_size=args.batch,
        train_steps=args.steps,
        lr=args.lr,
        seeds=seeds,
        eval_every=args.eval_every,
        hint_feed=args.hint_feed,
    )


def _load_model(path) -> tuple[Model, dict]:
    p = Path(path)
    if not p.exists():
        raise LatentError(f"checkpoint not found: {p}")
    return load_checkpoint(p)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    model_cfg = _model_config(args)
    seeds = _parse_seeds(args.seeds)
    config = _train_config(args, model_cfg, seeds)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    writer = ManifestWriter("train", args, out.parent)

    rows = []
    for seed in seeds:
        result = train_one_seed(
            config,
            seed,
            log=lambda m: print(f"seed {m.run_seed} step {m.step}: loss {m.train_loss:.4f} eval_acc {m.eval_acc:.4f}"),
        )
        rows.extend(result.metrics)
        ckpt_path = out if len(seeds) == 1 else out.with_suffix(f".seed{seed}{out.suffix}")
        save_checkpoint(ckpt_path, result.model, result.metadata)
        writer.register(ckpt_path)
    writer.emit_text(
        out.stem + ".metrics.csv",
        "run_seed,step,train_loss,eval_acc\n" + "".join(r.as_csv() + "\n" for r in rows),
    )
    writer.finish()
    return EXIT_OK


def cmd_eval(args) -> int:
    model, meta = _load_model(args.ckpt)
    task = args.task or meta.get("task", "bellman_ford")
    if args.task and "task" in meta and args.task != meta["task"]:
        raise LatentError(f"checkpoint was trained for {meta['task']!r}, not {args.task!r}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ManifestWriter("eval", args, out_dir)
    spec = GeneratorSpec(n=args.n, p=args.p)
    report = evaluate(model, spec, args.samples, args.seed, task=task)
    writer.emit_text("eval_report.json", report.to_json())
    writer.emit_text(
        "accuracy_vs_steps.csv",
        _csv(
            [{"steps": t, "accuracy": a} for t, a in sorted(report.per_step_accuracy.items())],
            ["steps", "accuracy"],
        ),
    )
    edges = report.distance_bin_edges
    writer.emit_text(
        "mispredict_bins.csv",
        _csv(
            [
                {
                    "bin_lo": lo,
                    "bin_hi": hi,
                    "rate_by_true": rt,
                    "rate_by_predicted": rp,
                }
                for lo, hi, rt, rp in zip(
                    edges[:-1],
                    edges[1:],
                    report.mispredict_rate_by_true_distance,
                    report.mispredict_rate_by_predicted_distance,
                )
            ],
            ["bin_lo", "bin_hi", "rate_by_true", "rate_by_predicted"],
        ),
    )
    writer.emit_text(
        "distance_pairs.csv",
        _csv(
            [
                {"true_distance": a, "predicted_distance": b, "correct": c}
                for a, b, c in report.distance_pairs
            ],
            ["true_distance", "predicted_distance", "correct"],
        ),
    )
    writer.finish()
    print(f"accuracy: {report.accuracy:.4f}")
    return EXIT_OK


def cmd_record(args) -> int:
    model, meta = _load_model(args.ckpt)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ManifestWriter("record", args, out_dir)
    spec = GeneratorSpec(n=args.n, p=args.p)
    task = meta.get("task", "bellman_ford")
    if args.symmetry == "none":
        traj = record_trajectories(
            model,
            spec,
            n_samples=args.samples,
            t_filter=args.t_filter,
            seed=args.seed,
            task=task,
            mode=args.mode,
        )
    else:
        traj = record_symmetry_clusters(
            model,
            kind=args.symmetry,
            spec=spec,
            n_clusters=args.clusters,
            cluster_size=args.cluster_size,
            t_filter=args.t_filter,
            seed=args.seed,
            c=args.c,
            task=task,
            mode=args.mode,
        )
    path = out_dir / "trajectories.nartraj"
    traj.dump(path)
    writer.register(path)
    writer.finish()
    print(f"recorded {traj.shape} -> {path}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    traj = TrajectoryTensor.load(Path(args.traj))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ManifestWriter("analyze", args, out_dir)
    k = args.components
    cluster_size = int(traj.metadata.get("cluster_size", 0))
    if args.mode == "step":
        result, coords, labels = step_wise(traj, k=k, node_mode=args.node_agg)
        rows = []
        for (s, t), c in zip(labels, coords):
            row = {"sample": int(s), "step": int(t)}
            if cluster_size:
                row["cluster"] = int(s) // cluster_size
            row.update({f"pc{i+1}": float(c[i]) for i in range(k)})
            rows.append(row)
        cols = ["sample", "step"] + (["cluster"] if cluster_size else []) + [f"pc{i+1}" for i in range(k)]
        writer.emit_text("stepwise_coords.csv", _csv(rows, cols))
        if cluster_size:
            _emit_cluster_overlays(writer, traj, result, args.node_agg, k)
    else:
        result = trajectory_wise(traj, k=k, node_mode=args.node_agg)
        agg = node_aggregate(traj, args.node_agg)
        coords = result.project(agg.reshape(agg.shape[0], -1))
        rows = [
            {"sample": i, **{f"pc{j+1}": float(coords[i, j]) for j in range(k)}}
            for i in range(coords.shape[0])
        ]
        writer.emit_text(
            "trajwise_coords.csv", _csv(rows, ["sample"] + [f"pc{j+1}" for j in range(k)])
        )
    writer.emit_text(
        "explained_variance.csv",
        _csv(
            [
                {"component": i + 1, "ratio": float(r)}
                for i, r in enumerate(result.explained_variance_ratios)
            ],
            ["component", "ratio"],
        ),
    )
    writer.finish()
    print(f"top-{k} explained variance: {result.top_ratio_sum:.4f}")
    return EXIT_OK


def _emit_cluster_overlays(writer, traj, stepwise_result, node_agg, k) -> None:
    """Per-(cluster, step) dominant-direction segments in the projected basis,
    plus per-step top-1 explained variance (cluster dimensionality)."""
    agg = node_aggregate(traj, node_agg)  # [N, D, T]
    size = int(traj.metadata["cluster_size"])
    n_clusters = agg.shape[0] // size
    steps = agg.shape[2]
    seg_rows = []
    dim_rows = []
    for cid in range(n_clusters):
        block = agg[cid * size : (cid + 1) * size]
        for step in range(steps):
            points = block[:, :, step]
            local = pca(points, 1)
            u, mu, s = local.components[0], local.mean, None
            spread = float(np.std((points - mu) @ u))
            lo = stepwise_result.project((mu - spread * u)[None])[0]
            hi = stepwise_result.project((mu + spread * u)[None])[0]
            seg_rows.append(
                {
                    "cluster": cid,
                    "step": step,
                    "x0": float(lo[0]),
                    "y0": float(lo[1]) if k > 1 else 0.0,
                    "x1": float(hi[0]),
                    "y1": float(hi[1]) if k > 1 else 0.0,
                }
            )
            dim_rows.append(
                {
                    "cluster": cid,
                    "step": step,
                    "top1_ratio": float(local.explained_variance_ratios[0]),
                }
            )
    writer.emit_text(
        "overlay_segments.csv", _csv(seg_rows, ["cluster", "step", "x0", "y0", "x1", "y1"])
    )
    writer.emit_text(
        "cluster_step_dimensionality.csv",
        _csv(dim_rows, ["cluster", "step", "top1_ratio"]),
    )


def _save_db(db: DirectionDatabase, path: Path) -> None:
    cents = np.stack(
        [[db.entries[(c, s)].centroid for s in range(db.n_steps)] for c in range(db.n_clusters)]
    )
    dirs = np.stack(
        [[db.entries[(c, s)].direction for s in range(db.n_steps)] for c in range(db.n_clusters)]
    )
    sigs = np.array(
        [[db.entries[(c, s)].sigma for s in range(db.n_steps)] for c in range(db.n_clusters)]
    )
    np.savez(
        path,
        centroids=cents,
        directions=dirs,
        sigmas=sigs,
        mean_direction=db.mean_direction,
        metadata=json.dumps(db.metadata),
    )


def _load_db(path: Path) -> DirectionDatabase:
    if not path.exists():
        raise LatentError(f"direction database not found: {path}")
    with np.load(path, allow_pickle=False) as z:
        cents, dirs, sigs = z["centroids"], z["directions"], z["sigmas"]
        mean_direction = z["mean_direction"]
        metadata = json.loads(str(z["metadata"]))
    n_clusters, n_steps = sigs.shape
    entries = {
        (c, s): DirectionEntry(direction=dirs[c, s], centroid=cents[c, s], sigma=float(sigs[c, s]))
        for c in range(n_clusters)
        for s in range(n_steps)
    }
    return DirectionDatabase(
        entries=entries,
        n_clusters=n_clusters,
        n_steps=n_steps,
        mean_direction=mean_direction,
        metadata=metadata,
    )


def cmd_directions(args) -> int:
    model, meta = _load_model(args.ckpt)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ManifestWriter("directions", args, out_dir)
    db = build_direction_db(
        model,
        n_clusters=args.clusters,
        cluster_size=args.cluster_size,
        c=args.c,
        t_filter=args.t_filter,
        spec=GeneratorSpec(n=args.n, p=args.p),
        seed=args.seed,
        task=meta.get("task", "bellman_ford"),
    )
    path = out_dir / "directions.npz"
    _save_db(db, path)
    writer.register(path)
    writer.finish()
    print(f"stored {db.n_clusters} clusters x {db.n_steps} steps -> {path}")
    return EXIT_OK


def cmd_perturb(args) -> int:
    model, meta = _load_model(args.ckpt)
    db = _load_db(Path(args.db))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ManifestWriter("perturb", args, out_dir)
    modes = args.modes.split(",") if args.modes else [args.mode]
    rows = []
    for mode in modes:
        acc = perturb_eval(
            model,
            db,
            mode=mode,
            selector=args.selector,
            sigma=args.sigma,
            spec=GeneratorSpec(n=args.n, p=args.p),
            samples=args.samples,
            seed=args.seed,
            task=meta.get("task", "bellman_ford"),
        )
        rows.append({"mode": mode, "selector": args.selector, "sigma": args.sigma, "accuracy": acc})
        print(f"{mode}/{args.selector}: accuracy {acc:.4f}")
    writer.emit_text("perturb.csv", _csv(rows, ["mode", "selector", "sigma", "accuracy"]))
    writer.finish()
    return EXIT_OK


def cmd_attractor(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ManifestWriter("attractor", args, out_dir)
    if args.traj:
        traj = TrajectoryTensor.load(Path(args.traj))
        disp = attractor_stats(traj, node_mode=args.node_agg)
        writer.emit_text(
            "attractor.csv",
            _csv(
                [{"step": i + 1, "mean_displacement": float(d)} for i, d in enumerate(disp)],
                ["step", "mean_displacement"],
            ),
        )
    if args.ckpt and args.deltas:
        model, meta = _load_model(args.ckpt)
        deltas = [int(d) for d in args.deltas.split(",")]
        table = forced_steps_eval(
            model,
            deltas,
            GeneratorSpec(n=args.n, p=args.p),
            samples=args.samples,
            seed=args.seed,
            task=meta.get("task", "bellman_ford"),
            warn=lambda msg: print(f"warning: {msg}", file=sys.stderr),
        )
        writer.emit_text(
            "forced_steps.csv",
            _csv(
                [{"delta": d, "accuracy": a} for d, a in sorted(table.items())],
                ["delta", "accuracy"],
            ),
        )
    if not writer.files:
        args.parser.error("nothing to do: pass --traj and/or (--ckpt with --deltas)")
    writer.finish()
    return EXIT_OK


def cmd_mispredict(args) -> int:
    model, meta = _load_model(args.ckpt)
    task = meta.get("task", "bellman_ford")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ManifestWriter("mispredict", args, out_dir)
    spec = GeneratorSpec(n=args.n, p=args.p)
    report = mispredict_report(model, spec, samples=args.samples, seed=args.seed, task=task)
    rows = [
        {"actor_a": a, "actor_b": b, "agreement": float(report.agreement_matrix[i, j])}
        for i, a in enumerate(report.actors)
        for j, b in enumerate(report.actors)
    ]
    writer.emit_text("agreement.csv", _csv(rows, ["actor_a", "actor_b", "agreement"]))
    quad = report.ever_correct_matrix
    writer.emit_text(
        "ever_correct.csv",
        _csv(
            [
                {"final_correct": 1 - f, "ever_correct": 1 - e, "fraction": float(quad[f, e])}
                for f in (0, 1)
                for e in (0, 1)
            ],
            ["final_correct", "ever_correct", "fraction"],
        ),
    )
    if args.dump_steps:
        _dump_step_snapshots(model, spec, args.seed, task, writer)
    writer.finish()
    return EXIT_OK


def _dump_step_snapshots(model, spec, seed, task, writer) -> None:
    """Per-step predictions for one sample graph, with edge classification
    against the ground-truth tree (for step-by-step rendering)."""
    oracle = oracle_for(task)
    g = sample_graphs(spec, 1, seed, tag_index=3)[0]
    trace = oracle(g)
    t = max(trace.terminated_at, 1)
    pred_traces, final_out, _ = rollout(model, [g], [t], mode="self_rollout")
    pred = pred_traces[0]
    true_pi = trace.final.pi

    node_rows = []
    edge_rows = []
    for step in range(len(pred.steps)):
        snap = pred.steps[step]
        for v in range(g.n):
            node_rows.append(
                {
                    "step": step,
                    "node": v,
                    "predicted_distance": "inf" if np.isinf(snap.dist[v]) else f"{snap.dist[v]:.4f}",
                    "is_source": int(v == g.source),
                }
            )
        for u in range(g.n):
            for v in range(u + 1, g.n):
                if g.weights[u, v] == 0.0 and g.weights[v, u] == 0.0:
                    continue
                in_true = int(true_pi[v] == u or true_pi[u] == v)
                in_pred = int(snap.pi[v] == u or snap.pi[u] == v)
                edge_rows.append(
                    {
                        "step": step,
                        "u": u,
                        "v": v,
                        "weight": f"{max(g.weights[u, v], g.weights[v, u]):.4f}",
                        "in_true_tree": in_true,
                        "in_predicted_tree": in_pred,
                    }
                )
    writer.emit_text(
        "snapshot_nodes.csv",
        _csv(node_rows, ["step", "node", "predicted_distance", "is_source"]),
    )
    writer.emit_text(
        "snapshot_edges.csv",
        _csv(edge_rows, ["step", "u", "v", "weight", "in_true_tree", "in_predicted_tree"]),
    )


def cmd_valgen(args) -> int:
    model, meta = _load_model(args.ckpt)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ManifestWriter("valgen", args, out_dir)
    report = value_generalisation_report(
        model,
        p_values=_parse_floats(args.p_values),
        spec=GeneratorSpec(n=args.n, p=0.5),
        samples=args.samples,
        seed=args.seed,
        task=meta.get("task", "bellman_ford"),
        rescale_control=args.rescale,
    )
    writer.emit_text("value_generalisation.json", report.to_json())
    rows = []
    for p, data in report.per_p.items():
        edges = data["distance_bin_edges"]
        for lo, hi, rt, rp in zip(
            edges[:-1],
            edges[1:],
            data["mispredict_rate_by_true_distance"],
            data["mispredict_rate_by_predicted_distance"],
        ):
            rows.append(
                {"p": p, "bin_lo": lo, "bin_hi": hi, "rate_by_true": rt, "rate_by_predicted": rp}
            )
    writer.emit_text(
        "mispredict_bins.csv", _csv(rows, ["p", "bin_lo", "bin_hi", "rate_by_true", "rate_by_predicted"])
    )
    pair_rows = [
        {"p": p, "true_distance": a, "predicted_distance": b, "correct": c}
        for p, data in report.per_p.items()
        for a, b, c in data["distance_pairs"]
    ]
    writer.emit_text(
        "distance_pairs.csv",
        _csv(pair_rows, ["p", "true_distance", "predicted_distance", "correct"]),
    )
    for p, data in report.per_p.items():
        extra = f" rescaled {data['rescaled_accuracy']:.4f}" if "rescaled_accuracy" in data else ""
        print(f"p={p}: accuracy {data['accuracy']:.4f} mean_true_dist {data['mean_true_distance']:.4f}{extra}")
    writer.finish()
    return EXIT_OK


def cmd_ablate(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ManifestWriter("ablate", args, out_dir)
    seeds = _parse_seeds(args.seeds)
    cells: list[dict] = []
    if args.temp_grid:
        for temp in _parse_floats(args.temp_grid):
            cells.append(
                {"param": "temperature", "value": temp, "decay_mode": "", "temp": temp, "decay": 1.0, "mode": "to_zero"}
            )
    if args.decay_grid:
        seen_baseline = False
        for mode in (args.decay_modes.split(",") if args.decay_modes else ["to_zero"]):
            for c in _parse_floats(args.decay_grid):
                if c >= 1.0:
                    if seen_baseline:
                        continue  # decay 1.0 is mode-independent: one shared baseline cell
                    seen_baseline = True
                cells.append(
                    {"param": "decay", "value": c, "decay_mode": mode if c < 1.0 else "", "temp": None, "decay": c, "mode": mode}
                )
    if not cells:
        args.parser.error("pass --temp-grid and/or --decay-grid")

    rows = []
    for cell in cells:
        temp = cell["temp"]
        if cell["param"] == "temperature" and temp == 0.0:
            model_cfg = ModelConfig(processor=args.processor, aggregator="max")
        elif cell["param"] == "temperature":
            model_cfg = ModelConfig(processor=args.processor, aggregator="softmax", softmax_temperature=temp)
        else:
            model_cfg = ModelConfig(
                processor=args.processor,
                aggregator="max",
                decay_factor=cell["decay"],
                decay_mode=cell["mode"],
            )
        config = TrainConfig(
            task=args.task,
            model=model_cfg,
            train_spec=GeneratorSpec(n=args.train_n, p=args.p),
            eval_spec=GeneratorSpec(n=args.eval_n, p=args.p),
            batch_size=args.batch,
            train_steps=args.steps,
            seeds=seeds,
            eval_every=max(args.steps, 1),
        )
        reports = []
        for seed in seeds:
            result = train_one_seed(config, seed)
            reports.append(
                evaluate(result.model, config.eval_spec, args.samples, seed=seed, task=args.task)
            )
        mean, std = aggregate_accuracy(reports)
        rows.append(
            {
                "param": cell["param"],
                "value": cell["value"],
                "decay_mode": cell["decay_mode"],
                "mean_accuracy": f"{mean:.4f}",
                "std_accuracy": f"{std:.4f}",
                "seeds": len(seeds),
            }
        )
        print(f"{cell['param']}={cell['value']} {cell['decay_mode']}: {mean:.4f} +/- {std:.4f}")
    writer.emit_text(
        "ablation.csv",
        _csv(rows, ["param", "value", "decay_mode", "mean_accuracy", "std_accuracy", "seeds"]),
    )
    writer.finish()
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_graph_flags(p, n_default=64):
    p.add_argument("--n", type=int, default=n_default, help="node count of sampled graphs")
    p.add_argument("--p", type=float, default=0.5, help="edge probability")
    p.add_argument("--samples", type=int, default=64, help="number of sampled graphs")
    p.add_argument("--seed", type=int, default=0, help="root seed for all sub-streams")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="narlab",
        description="Train and dissect neural executors of Bellman-Ford and BFS.",
    )
    parser.add_argument("--version", action="version", version=f"narlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--task", choices=("bellman_ford", "bfs"), default="bellman_ford")
    p.add_argument("--processor", choices=("mpnn", "pgn", "linear_pgn", "triplet_lite"), default="mpnn")
    p.add_argument("--agg", choices=("max", "mean", "sum", "softmax"), default="max")
    p.add_argument("--temp", type=float, default=None, help="softmax temperature (softmax agg only)")
    p.add_argument("--decay", type=float, default=1.0, help="processor decay factor, 1.0 = off")
    p.add_argument("--decay-mode", choices=("to_zero", "to_mean"), default="to_zero")
    p.add_argument("--latent-dim", type=int, default=128)
    p.add_argument("--train-n", type=int, default=16)
    p.add_argument("--eval-n", type=int, default=64)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--eval-every", type=int, default=250)
    p.add_argument("--hint-feed", choices=("self", "teacher"), default="self")
    p.add_argument("--seeds", type=str, default="0", help="comma-separated run seeds")
    p.add_argument("--out", type=str, required=True, help="checkpoint output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint and write report CSV/JSON")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--task", choices=("bellman_ford", "bfs"), default=None)
    _add_graph_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("record", help="record a latent trajectory tensor")
    p.add_argument("--ckpt", required=True)
    _add_graph_flags(p, n_default=16)
    p.add_argument("--t-filter", type=int, required=True, help="keep graphs with this oracle step count")
    p.add_argument("--mode", choices=("self_rollout", "teacher_forced"), default="self_rollout")
    p.add_argument("--symmetry", choices=("none", "reweighting", "scaling"), default="none")
    p.add_argument("--clusters", type=int, default=8, help="cluster count for symmetry recording")
    p.add_argument("--cluster-size", type=int, default=8)
    p.add_argument("--c", type=float, default=0.25, help="reduced weight-range margin (reweighting)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("analyze", help="PCA views of a recorded trajectory tensor")
    p.add_argument("pca", choices=("pca",), help="analysis kind")
    p.add_argument("--traj", required=True, help="trajectory dump path")
    p.add_argument("--mode", choices=("step", "traj"), default="step")
    p.add_argument("--node-agg", choices=("max", "min", "mean"), default="max")
    p.add_argument("--components", type=int, default=3)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("directions", help="build a reweighting-cluster direction database")
    p.add_argument("--ckpt", required=True)
    _add_graph_flags(p, n_default=16)
    p.add_argument("--clusters", type=int, default=100)
    p.add_argument("--cluster-size", type=int, default=8)
    p.add_argument("--c", type=float, default=0.25, help="reduced weight-range margin")
    p.add_argument("--t-filter", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_directions)

    p = sub.add_parser("perturb", help="accuracy under latent-space perturbations")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--db", required=True, help="direction database (.npz)")
    p.add_argument("--mode", choices=("noise_free", "directional", "random", "project_out", "project_onto"), default="noise_free")
    p.add_argument("--modes", type=str, default=None, help="comma-separated list overriding --mode")
    p.add_argument("--selector", choices=("l2_closest", "mean"), default="l2_closest")
    p.add_argument("--sigma", type=float, default=None, help="noise scale; default from the database")
    _add_graph_flags(p, n_default=16)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("attractor", help="latent displacement stats and forced-step accuracy")
    p.add_argument("--traj", default=None, help="trajectory dump path")
    p.add_argument("--node-agg", choices=("max", "min", "mean"), default="max")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--deltas", type=str, default=None, help="comma-separated step offsets")
    _add_graph_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_attractor)

    p = sub.add_parser("mispredict", help="agreement with exact and faulty executors")
    p.add_argument("--ckpt", required=True)
    _add_graph_flags(p)
    p.add_argument("--dump-steps", action="store_true", help="also dump per-step predictions for one graph")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_mispredict)

    p = sub.add_parser("valgen", help="value-generalisation stress test across densities")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--p-values", type=str, default="0.5,0.25")
    p.add_argument("--rescale", action="store_true", help="also run the weight-rescaling control")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_valgen)

    p = sub.add_parser("ablate", help="train/evaluate small grids over decay and temperature")
    p.add_argument("--task", choices=("bellman_ford", "bfs"), default="bellman_ford")
    p.add_argument("--processor", choices=("mpnn", "pgn", "linear_pgn", "triplet_lite"), default="triplet_lite")
    p.add_argument("--temp-grid", type=str, default=None, help="e.g. 0,0.01,0.1,1")
    p.add_argument("--decay-grid", type=str, default=None, help="e.g. 1,0.9,0.5")
    p.add_argument("--decay-modes", type=str, default=None, help="e.g. to_zero,to_mean")
    p.add_argument("--seeds", type=str, default="0,1,2")
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--train-n", type=int, default=16)
    p.add_argument("--eval-n", type=int, default=64)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--samples", type=int, default=32)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_ablate)

    for name, sp in sub.choices.items():
        sp.set_defaults(parser=sp)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Pre-scan for --config FILE and install its values as subcommand
    defaults; explicit flags still win. Keys use flag dest names."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        parser.error("--config needs a file path")
    path = Path(argv[idx + 1])
    if not path.exists():
        parser.error(f"config file not found: {path}")
    try:
        values = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        parser.error(f"config file is not valid JSON: {e}")
    if not isinstance(values, dict):
        parser.error("config file must hold a JSON object of flag defaults")
    argv = argv[:idx] + argv[idx + 2 :]
    if not argv:
        parser.error("--config requires a subcommand")
    sub = argv[0]
    actions = {a.dest for a in parser._subparsers._group_actions[0].choices[sub]._actions}
    unknown = set(values) - actions
    if unknown:
        parser.error(f"config file sets unknown options for {sub!r}: {sorted(unknown)}")
    parser._subparsers._group_actions[0].choices[sub].set_defaults(**values)
    return argv


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    argv = _apply_config_file(parser, list(argv))
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GraphError, ModelError, LatentError, AutodiffError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (FileNotFoundError, json.JSONDecodeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
