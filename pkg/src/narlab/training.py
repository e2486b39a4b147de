"""Dataset assembly, teacher-forced training, and the evaluation protocol.

Training samples fresh graph batches from a derived seed stream each step
and supervises every hint step (pointer cross-entropy over masked
candidates, squared error on finite distances) plus the final pointer
output. Evaluation runs the model on its own predictions for exactly the
oracle's step count and scores the output head, node-averaged, matching the
usual pointer scoring.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .algorithms import ExecutionTrace, bellman_ford_trace, bfs_trace
from .autodiff import AdamState, Tape, Tensor, adam_step, backward
from .graphs import GeneratorSpec, WeightedGraph, generate_er
from .model import (
    DIST_CLIP,
    GraphBatch,
    Model,
    ModelConfig,
    RunningMean,
    feedback_hints,
    predict_pointers,
    rollout,
)
from .seeding import STREAM_DATAGEN, derive_seed

TASKS = ("bellman_ford", "bfs")


class TrainingError(RuntimeError):
    """Divergence or invalid training configuration."""


def oracle_for(task: str):
    if task == "bellman_ford":
        return bellman_ford_trace
    if task == "bfs":
        return bfs_trace
    raise TrainingError(f"unknown task {task!r}; expected one of {TASKS}")


@dataclass(frozen=True)
class TrainConfig:
    task: str = "bellman_ford"
    model: ModelConfig = field(default_factory=ModelConfig)
    train_spec: GeneratorSpec = field(default_factory=lambda: GeneratorSpec(n=16, p=0.5))
    eval_spec: GeneratorSpec = field(default_factory=lambda: GeneratorSpec(n=64, p=0.5))
    batch_size: int = 32
    train_steps: int = 5000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seeds: tuple[int, ...] = (0,)
    eval_every: int = 250
    eval_samples_during_train: int = 8
    clip_norm: float = 1.0  # global gradient-norm clip; 0 disables
    # "self": the model's own (detached) predictions are the next step's hint
    # inputs, ground truth appears only in the loss; this matches how the
    # evaluation rollout feeds hints. "teacher": ground-truth hints as inputs.
    hint_feed: str = "self"

    def __post_init__(self):
        if self.task not in TASKS:
            raise TrainingError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.batch_size < 1 or self.train_steps < 0:
            raise TrainingError("batch_size must be >= 1 and train_steps >= 0")
        if self.hint_feed not in ("self", "teacher"):
            raise TrainingError(f"unknown hint_feed {self.hint_feed!r}")


@dataclass
class MetricsRow:
    run_seed: int
    step: int
    train_loss: float
    eval_acc: float

    def as_csv(self) -> str:
        return f"{self.run_seed},{self.step},{self.train_loss:.6f},{self.eval_acc:.6f}"


@dataclass
class TrainResult:
    model: Model
    metadata: dict
    metrics: list[MetricsRow]


def sample_graphs(spec: GeneratorSpec, count: int, seed: int, tag_index: int = 0) -> list[WeightedGraph]:
    """Deterministic batch of graphs from the datagen sub-stream."""
    return [
        generate_er(replace(spec, seed=derive_seed(seed, STREAM_DATAGEN, tag_index, i)))
        for i in range(count)
    ]


def _hint_arrays(traces: list[ExecutionTrace], t: int) -> tuple[np.ndarray, np.ndarray]:
    pi = np.stack([tr.steps[min(t, tr.terminated_at)].pi for tr in traces])
    dist = np.stack([tr.steps[min(t, tr.terminated_at)].dist for tr in traces])
    return pi, dist


def _pointer_onehot(pi: np.ndarray) -> np.ndarray:
    b, n = pi.shape
    onehot = np.zeros((b, n, n), dtype=np.float32)
    rows = np.repeat(np.arange(b), n)
    onehot[rows, pi.reshape(-1), np.tile(np.arange(n), b)] = 1.0
    return onehot


def _masked_ce(logits: Tensor, onehot: np.ndarray, node_mask: np.ndarray, cand: np.ndarray) -> tuple[Tensor, float]:
    """Cross-entropy summed over selected (graph, node) entries.

    node_mask is [B, 1, n] broadcasting over candidates; the -inf logits of
    non-candidates are zeroed before multiplication so no nan leaks in.
    """
    lsm = ad.log_softmax(logits, axis=1)
    safe = ad.where_const(cand, lsm, 0.0)
    weight = onehot * node_mask
    total = ad.neg(ad.reduce_sum(ad.mul(safe, Tensor(weight.astype(np.float32)))))
    return total, float(weight.sum())


def train_one_seed(config: TrainConfig, seed: int, log=None) -> TrainResult:
    """Teacher-forced training of a single model; deterministic given seed."""
    oracle = oracle_for(config.task)
    model = Model.init(config.model, seed)
    state = AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    metrics: list[MetricsRow] = []

    for step_idx in range(config.train_steps):
        graphs = sample_graphs(config.train_spec, config.batch_size, seed, tag_index=step_idx)
        traces = [oracle(g) for g in graphs]
        batch = GraphBatch.from_graphs(graphs)
        lengths = np.array([tr.terminated_at for tr in traces])
        t_max = int(lengths.max())

        with Tape() as tape:
            z = model.zero_latent(batch)
            rm = RunningMean()
            pi_sum = None
            d_sum = None
            out_sum = None
            pi_count = d_count = out_count = 0.0
            pi_in, d_in = _hint_arrays(traces, 0)
            for t in range(t_max):
                if config.hint_feed == "teacher":
                    pi_in, d_in = _hint_arrays(traces, t)
                out = model.step(z, batch, pi_in, d_in, rm)
                z = out.z
                if config.hint_feed == "self":
                    pi_in, d_in = feedback_hints(
                        predict_pointers(out.pi_logits.data), out.d_pred.data, batch
                    )

                valid = (t < lengths).astype(np.float32)  # [B]
                pi_tgt, d_tgt = _hint_arrays(traces, t + 1)
                node_mask = valid[:, None, None] * np.ones((1, 1, batch.n), dtype=np.float32)
                ce, cnt = _masked_ce(out.pi_logits, _pointer_onehot(pi_tgt), node_mask, batch.cand)
                pi_sum = ce if pi_sum is None else ad.add(pi_sum, ce)
                pi_count += cnt

                finite = np.isfinite(d_tgt) & (valid[:, None] > 0)
                target = np.where(finite, np.clip(d_tgt, 0.0, DIST_CLIP), 0.0).astype(np.float32)
                diff = ad.mul(
                    ad.add(out.d_pred, Tensor(-target)), Tensor(finite.astype(np.float32))
                )
                sq = ad.reduce_sum(ad.mul(diff, diff))
                d_sum = sq if d_sum is None else ad.add(d_sum, sq)
                d_count += float(finite.sum())

                is_final = (lengths == t + 1).astype(np.float32)
                if is_final.any():
                    final_mask = is_final[:, None, None] * np.ones((1, 1, batch.n), dtype=np.float32)
                    final_pi = np.stack([tr.final.pi for tr in traces])
                    ce_out, cnt_out = _masked_ce(
                        out.out_logits, _pointer_onehot(final_pi), final_mask, batch.cand
                    )
                    out_sum = ce_out if out_sum is None else ad.add(out_sum, ce_out)
                    out_count += cnt_out

            loss = ad.add(
                ad.add(ad.scale(pi_sum, 1.0 / max(pi_count, 1.0)), ad.scale(d_sum, 1.0 / max(d_count, 1.0))),
                ad.scale(out_sum, 1.0 / max(out_count, 1.0)),
            )

        loss_val = float(loss.data)
        if not np.isfinite(loss_val):
            raise TrainingError(f"training diverged at step {step_idx}: loss={loss_val}")
        backward(tape, loss)
        grads = {}
        for name, p in model.params.items():
            if p.grad is not None:
                grads[name] = p.grad
                p.grad = None
        if config.clip_norm > 0:
            total = np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
            if total > config.clip_norm:
                scale = config.clip_norm / total
                grads = {k: g * scale for k, g in grads.items()}
        adam_step(state, model.params, grads)

        if (step_idx + 1) % config.eval_every == 0 or step_idx + 1 == config.train_steps:
            acc = quick_eval(model, config, seed)
            metrics.append(MetricsRow(seed, step_idx + 1, loss_val, acc))
            if log is not None:
                log(metrics[-1])

    if config.train_steps == 0:
        metrics.append(MetricsRow(seed, 0, float("nan"), quick_eval(model, config, seed)))

    metadata = {
        "task": config.task,
        "seed": seed,
        "train_steps": config.train_steps,
        "batch_size": config.batch_size,
        "train_spec": vars(config.train_spec) | {},
        "eval_spec": vars(config.eval_spec) | {},
        "lr": config.lr,
    }
    return TrainResult(model=model, metadata=metadata, metrics=metrics)


def train(config: TrainConfig, log=None) -> TrainResult:
    """Train with the first configured seed (multi-seed runs use train_multi)."""
    return train_one_seed(config, config.seeds[0], log=log)


def train_multi(config: TrainConfig, log=None) -> list[TrainResult]:
    return [train_one_seed(config, s, log=log) for s in config.seeds]


def quick_eval(model: Model, config: TrainConfig, seed: int) -> float:
    report = evaluate(
        model,
        config.eval_spec,
        samples=config.eval_samples_during_train,
        seed=derive_seed(seed, "quick-eval"),
        task=config.task,
    )
    return report.accuracy


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    accuracy: float
    accuracy_std: float
    n_seeds: int
    samples: int
    node_count: int
    per_step_accuracy: dict[int, float]
    distance_bin_edges: list[float]
    mispredict_rate_by_true_distance: list[float]
    mispredict_rate_by_predicted_distance: list[float]
    distance_pairs: list[tuple[float, float, int]]  # (true, predicted, correct), finite true only

    def to_json(self) -> str:
        payload = {
            "accuracy": self.accuracy,
            "accuracy_std": self.accuracy_std,
            "n_seeds": self.n_seeds,
            "samples": self.samples,
            "node_count": self.node_count,
            "per_step_accuracy": {str(k): v for k, v in sorted(self.per_step_accuracy.items())},
            "distance_bin_edges": self.distance_bin_edges,
            "mispredict_rate_by_true_distance": self.mispredict_rate_by_true_distance,
            "mispredict_rate_by_predicted_distance": self.mispredict_rate_by_predicted_distance,
            "distance_pairs": self.distance_pairs,
        }
        return json.dumps(payload)


BIN_WIDTH = 0.25


def _bin_rates(values: np.ndarray, wrong: np.ndarray, edges: np.ndarray) -> list[float]:
    rates = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        in_bin = (values >= lo) & (values < hi)
        rates.append(float(wrong[in_bin].mean()) if in_bin.any() else float("nan"))
    return rates


def evaluate(
    model: Model,
    spec: GeneratorSpec,
    samples: int,
    seed: int,
    task: str = "bellman_ford",
    batch_size: int = 16,
    weight_scale: float | None = None,
) -> EvalReport:
    """Self-rollout evaluation with the oracle's step budget per graph.

    weight_scale, when given, rescales every eval graph's weights before
    running both the oracle and the model (the value-generalisation control).
    """
    oracle = oracle_for(task)
    graphs = sample_graphs(spec, samples, seed, tag_index=0)
    if weight_scale is not None:
        from .graphs import scale_weights

        graphs = [scale_weights(g, weight_scale) for g in graphs]

    correct_all: list[np.ndarray] = []
    per_t: dict[int, list[float]] = {}
    true_d: list[np.ndarray] = []
    pred_d: list[np.ndarray] = []
    wrong_nodes: list[np.ndarray] = []

    for lo in range(0, samples, batch_size):
        chunk = graphs[lo : lo + batch_size]
        traces = [oracle(g) for g in chunk]
        ts = [max(tr.terminated_at, 1) for tr in traces]
        pred_traces, final_out, _ = rollout(model, chunk, ts, mode="self_rollout")
        for g, tr, pt, out_pi in zip(chunk, traces, pred_traces, final_out):
            correct = out_pi == tr.final.pi
            correct_all.append(correct)
            per_t.setdefault(tr.terminated_at, []).append(float(correct.mean()))
            finite = np.isfinite(tr.final.dist)
            true_d.append(tr.final.dist[finite])
            pred_d.append(pt.final.dist[finite])
            wrong_nodes.append(~correct[finite])

    correct_flat = np.concatenate(correct_all)
    true_flat = np.concatenate(true_d)
    pred_flat = np.concatenate(pred_d)
    wrong_flat = np.concatenate(wrong_nodes)

    top = max(float(true_flat.max(initial=0.0)), float(pred_flat[np.isfinite(pred_flat)].max(initial=0.0)), BIN_WIDTH)
    edges = np.arange(0.0, top + BIN_WIDTH, BIN_WIDTH)
    finite_pred = np.isfinite(pred_flat)

    return EvalReport(
        accuracy=float(correct_flat.mean()),
        accuracy_std=0.0,
        n_seeds=1,
        samples=samples,
        node_count=spec.n,
        per_step_accuracy={t: float(np.mean(v)) for t, v in per_t.items()},
        distance_bin_edges=[float(e) for e in edges],
        mispredict_rate_by_true_distance=_bin_rates(true_flat, wrong_flat, edges),
        mispredict_rate_by_predicted_distance=_bin_rates(
            pred_flat[finite_pred], wrong_flat[finite_pred], edges
        ),
        distance_pairs=[
            (float(a), float(b), int(not w)) for a, b, w in zip(true_flat, pred_flat, wrong_flat)
        ],
    )


def accuracy_vs_steps(model: Model, spec: GeneratorSpec, samples: int, seed: int, task: str = "bellman_ford") -> dict[int, float]:
    """Accuracy grouped post hoc by the oracle termination step."""
    return evaluate(model, spec, samples, seed, task=task).per_step_accuracy


def forced_steps_eval(
    model: Model,
    deltas: list[int],
    spec: GeneratorSpec,
    samples: int,
    seed: int,
    task: str = "bellman_ford",
    batch_size: int = 16,
    warn=None,
) -> dict[int, float]:
    """Run each sample for oracle T + delta steps and score the final decoding."""
    oracle = oracle_for(task)
    graphs = sample_graphs(spec, samples, seed, tag_index=0)
    traces = [oracle(g) for g in graphs]
    result: dict[int, float] = {}
    for delta in deltas:
        correct: list[np.ndarray] = []
        skipped = 0
        for lo in range(0, samples, batch_size):
            chunk = graphs[lo : lo + batch_size]
            chunk_traces = traces[lo : lo + batch_size]
            keep = [i for i, tr in enumerate(chunk_traces) if tr.terminated_at + delta >= 1]
            skipped += len(chunk) - len(keep)
            if not keep:
                continue
            kept_graphs = [chunk[i] for i in keep]
            ts = [chunk_traces[i].terminated_at + delta for i in keep]
            _, final_out, _ = rollout(model, kept_graphs, ts, mode="self_rollout")
            for i, out_pi in zip(keep, final_out):
                correct.append(out_pi == chunk_traces[i].final.pi)
        if skipped and warn is not None:
            warn(f"delta={delta}: skipped {skipped} samples with T+delta < 1")
        result[delta] = float(np.concatenate(correct).mean()) if correct else float("nan")
    return result


def aggregate_accuracy(reports: list[EvalReport]) -> tuple[float, float]:
    accs = np.array([r.accuracy for r in reports])
    return float(accs.mean()), float(accs.std())
