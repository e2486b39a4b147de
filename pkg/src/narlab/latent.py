"""Latent-space analyses: trajectory recording, PCA views, symmetry clusters,
principal-direction perturbations, attractor diagnostics, and the mispredict
taxonomy.

Trajectory tensors hold the latent state after every processor step for a
set of graphs that all terminate at the same oracle step count, shape
samples x nodes x latent_dim x steps.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .algorithms import ExecutionTrace, VariantSpec, agreement, variant_trace
from .graphs import (
    GeneratorSpec,
    WeightedGraph,
    generate_er,
    make_reweighting_cluster,
    scale_weights,
)
from .model import Model, rollout
from .seeding import STREAM_DATAGEN, STREAM_NOISE, derive_seed, substream
from .training import oracle_for, sample_graphs

TRAJ_MAGIC = b"NARTRAJ1"


class LatentError(ValueError):
    """Invalid analysis input or unsatisfiable sampling request."""


# ---------------------------------------------------------------------------
# trajectory tensors
# ---------------------------------------------------------------------------


@dataclass
class TrajectoryTensor:
    """Recorded latents, axes (sample, node, latent dim, step)."""

    data: np.ndarray  # [N, V, D, T] float32
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 4:
            raise LatentError(f"trajectory tensor must have 4 axes, got {self.data.ndim}")
        if not np.all(np.isfinite(self.data)):
            raise LatentError("trajectory tensor contains non-finite entries")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    def dump(self, path) -> None:
        header = json.dumps(
            {
                "shape": list(self.data.shape),
                "dtype": "f32",
                "order": "row-major",
                "metadata": self.metadata,
            },
            sort_keys=True,
        ).encode("utf-8")
        with open(path, "wb") as f:
            f.write(TRAJ_MAGIC)
            f.write(struct.pack("<Q", len(header)))
            f.write(header)
            f.write(np.ascontiguousarray(self.data.astype("<f4")).tobytes())

    @classmethod
    def load(cls, path) -> "TrajectoryTensor":
        with open(path, "rb") as f:
            magic = f.read(8)
            if magic != TRAJ_MAGIC:
                raise LatentError(f"bad magic {magic!r}; not a trajectory dump")
            (hlen,) = struct.unpack("<Q", f.read(8))
            header = json.loads(f.read(hlen).decode("utf-8"))
            payload = f.read()
        shape = tuple(header["shape"])
        data = np.frombuffer(payload, dtype="<f4").reshape(shape)
        return cls(data=data.copy(), metadata=header.get("metadata", {}))


def record_trajectories(
    model: Model,
    spec: GeneratorSpec,
    n_samples: int,
    t_filter: int,
    seed: int,
    task: str = "bellman_ford",
    mode: str = "self_rollout",
    max_attempts: int | None = None,
    batch_size: int = 32,
) -> TrajectoryTensor:
    """Run the model on graphs whose oracle terminates at exactly t_filter.

    Graphs are sampled until n_samples matches are found (or the attempt
    budget, default 200 per requested sample, is exhausted).
    """
    oracle = oracle_for(task)
    budget = max_attempts if max_attempts is not None else 200 * n_samples
    kept: list[WeightedGraph] = []
    kept_traces: list[ExecutionTrace] = []
    attempt = 0
    while len(kept) < n_samples and attempt < budget:
        g = generate_er(replace(spec, seed=derive_seed(seed, STREAM_DATAGEN, attempt)))
        attempt += 1
        trace = oracle(g)
        if trace.terminated_at == t_filter:
            kept.append(g)
            kept_traces.append(trace)
    if len(kept) < n_samples:
        raise LatentError(
            f"found only {len(kept)}/{n_samples} graphs with oracle T={t_filter} "
            f"in {budget} attempts (n={spec.n}, p={spec.p})"
        )

    chunks = []
    for lo in range(0, n_samples, batch_size):
        graphs = kept[lo : lo + batch_size]
        traces = kept_traces[lo : lo + batch_size]
        _, _, latents = rollout(
            model, graphs, [t_filter] * len(graphs), mode=mode, oracle_traces=traces
        )
        chunks.append(latents)  # [b, T, V, D]
    stacked = np.concatenate(chunks, axis=0)
    data = np.transpose(stacked, (0, 2, 3, 1))  # -> [N, V, D, T]
    return TrajectoryTensor(
        data=data,
        metadata={
            "n_samples": n_samples,
            "t_filter": t_filter,
            "task": task,
            "mode": mode,
            "generator": vars(spec) | {},
            "seed": seed,
        },
    )


def record_trajectories_for_graphs(
    model: Model,
    graphs: list[WeightedGraph],
    t_steps: int,
    task: str = "bellman_ford",
    mode: str = "self_rollout",
    metadata: dict | None = None,
) -> TrajectoryTensor:
    """Record latents for an explicit graph list (symmetry clusters)."""
    oracle = oracle_for(task)
    traces = [oracle(g) for g in graphs] if mode == "teacher_forced" else None
    _, _, latents = rollout(model, graphs, [t_steps] * len(graphs), mode=mode, oracle_traces=traces)
    return TrajectoryTensor(
        data=np.transpose(latents, (0, 2, 3, 1)), metadata=metadata or {}
    )


def record_symmetry_clusters(
    model: Model,
    kind: str,
    spec: GeneratorSpec,
    n_clusters: int,
    cluster_size: int,
    t_filter: int,
    seed: int,
    c: float = 0.25,
    task: str = "bellman_ford",
    mode: str = "self_rollout",
    max_attempts: int | None = None,
) -> TrajectoryTensor:
    """Trajectories for graphs related by an execution-preserving symmetry.

    kind "reweighting": each cluster is one base graph plus potential-shifted
    variants; kind "scaling": one base graph scaled by factors in (0.5, 1).
    Both transforms preserve the oracle pointer trace, so every member of a
    cluster terminates at the base graph's step count; base graphs are
    resampled until that count equals t_filter. Samples are stored
    cluster-major and the cluster layout is recorded in the metadata.
    """
    if kind not in ("reweighting", "scaling"):
        raise LatentError(f"unknown symmetry kind {kind!r}; expected reweighting or scaling")
    oracle = oracle_for(task)
    budget = max_attempts if max_attempts is not None else 400 * n_clusters
    clusters: list[list[WeightedGraph]] = []
    attempt = 0
    while len(clusters) < n_clusters and attempt < budget:
        base_seed = derive_seed(seed, STREAM_DATAGEN, attempt)
        attempt += 1
        if kind == "reweighting":
            members = make_reweighting_cluster(
                replace(spec, seed=base_seed),
                c=c,
                k=cluster_size,
                seed=derive_seed(seed, STREAM_NOISE, attempt),
            )
        else:
            base = generate_er(replace(spec, seed=base_seed))
            lams = np.linspace(0.5, 1.0, cluster_size + 1)[1:]
            members = [scale_weights(base, float(lam)) for lam in lams]
        if oracle(members[0]).terminated_at != t_filter:
            continue
        clusters.append(members)
    if len(clusters) < n_clusters:
        raise LatentError(
            f"found only {len(clusters)}/{n_clusters} {kind} clusters with oracle T={t_filter}"
        )
    graphs = [g for cluster in clusters for g in cluster]
    traj = record_trajectories_for_graphs(
        model,
        graphs,
        t_filter,
        task=task,
        mode=mode,
        metadata={
            "symmetry": kind,
            "n_clusters": n_clusters,
            "cluster_size": cluster_size,
            "t_filter": t_filter,
            "c": c,
            "seed": seed,
        },
    )
    return traj


def node_aggregate(t: TrajectoryTensor, mode: str = "max") -> np.ndarray:
    """Reduce the node axis: [N, V, D, T] -> [N, D, T]."""
    if mode == "max":
        return t.data.max(axis=1)
    if mode == "min":
        return t.data.min(axis=1)
    if mode == "mean":
        return t.data.mean(axis=1)
    raise LatentError(f"unknown node aggregation {mode!r}; expected max, min, or mean")


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PcaResult:
    components: np.ndarray  # [k, dim], orthonormal rows
    explained_variance_ratios: np.ndarray  # [k], non-increasing
    mean: np.ndarray  # [dim]

    def project(self, data: np.ndarray) -> np.ndarray:
        return (np.asarray(data, dtype=np.float64) - self.mean) @ self.components.T

    @property
    def top_ratio_sum(self) -> float:
        return float(self.explained_variance_ratios.sum())


def pca(data: np.ndarray, k: int) -> PcaResult:
    """Top-k principal components via thin SVD of the centered matrix.

    Ratios are squared singular values over the total variance. Component
    sign is fixed by making each row's largest-magnitude coordinate
    positive, so emitted coordinates are reproducible.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise LatentError(f"pca expects a 2-D matrix, got shape {x.shape}")
    m, dim = x.shape
    if m < 2:
        raise LatentError("pca needs at least 2 rows")
    if not (1 <= k <= min(m, dim)):
        raise LatentError(f"k={k} out of range for a {m}x{dim} matrix")
    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    total = float((s**2).sum())
    ratios = (s[:k] ** 2 / total) if total > 0 else np.zeros(k)
    comps = vt[:k].copy()
    for row in comps:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    return PcaResult(components=comps, explained_variance_ratios=ratios, mean=mean)


def trajectory_wise(t: TrajectoryTensor, k: int = 3, node_mode: str = "max") -> PcaResult:
    """One point per graph: node-aggregate, then flatten (D, T)."""
    agg = node_aggregate(t, node_mode)
    n = agg.shape[0]
    return pca(agg.reshape(n, -1), k)


def step_wise(
    t: TrajectoryTensor, k: int = 3, node_mode: str = "max"
) -> tuple[PcaResult, np.ndarray, np.ndarray]:
    """T points per graph: rows are per-(sample, step) aggregated latents.

    Returns (result, projected coordinates [(N*T), k], labels [(N*T), 2] of
    (sample, step)) for downstream plotting.
    """
    agg = node_aggregate(t, node_mode)  # [N, D, T]
    n, d, steps = agg.shape
    rows = np.transpose(agg, (0, 2, 1)).reshape(n * steps, d)
    result = pca(rows, k)
    coords = result.project(rows)
    labels = np.stack(
        [np.repeat(np.arange(n), steps), np.tile(np.arange(steps), n)], axis=1
    )
    return result, coords, labels


def per_step_pca(t: TrajectoryTensor, k: int = 1, node_mode: str = "max") -> list[PcaResult]:
    """Independent PCA of the aggregated latents at each step."""
    agg = node_aggregate(t, node_mode)
    return [pca(agg[:, :, i], k) for i in range(agg.shape[2])]


# ---------------------------------------------------------------------------
# direction database and perturbations
# ---------------------------------------------------------------------------


@dataclass
class DirectionEntry:
    direction: np.ndarray  # unit vector in D-space
    centroid: np.ndarray  # cluster centroid at this step
    sigma: float  # std of the cluster along the direction


@dataclass
class DirectionDatabase:
    """First principal directions of reweighting clusters, per (cluster, step)."""

    entries: dict[tuple[int, int], DirectionEntry]
    n_clusters: int
    n_steps: int
    mean_direction: np.ndarray
    metadata: dict = field(default_factory=dict)

    def directions_at(self, step: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(centroids [C, D], directions [C, D], sigmas [C]) at a step index."""
        step = min(step, self.n_steps - 1)
        cents, dirs, sigs = [], [], []
        for c in range(self.n_clusters):
            e = self.entries[(c, step)]
            cents.append(e.centroid)
            dirs.append(e.direction)
            sigs.append(e.sigma)
        return np.stack(cents), np.stack(dirs), np.array(sigs)

    def default_sigma(self) -> float:
        return float(np.mean([e.sigma for e in self.entries.values()]))


def build_direction_db(
    model: Model,
    n_clusters: int,
    cluster_size: int,
    c: float,
    t_filter: int,
    spec: GeneratorSpec,
    seed: int,
    task: str = "bellman_ford",
    node_mode: str = "max",
    max_attempts_per_cluster: int = 400,
) -> DirectionDatabase:
    """Record reweighting clusters and extract per-(cluster, step) directions.

    Cluster members share the oracle trace by construction, so the whole
    cluster inherits the base graph's termination step; base graphs are
    resampled until that step equals t_filter.
    """
    oracle = oracle_for(task)
    entries: dict[tuple[int, int], DirectionEntry] = {}
    found = 0
    attempt = 0
    while found < n_clusters and attempt < max_attempts_per_cluster * n_clusters:
        base_seed = derive_seed(seed, "db-base", attempt)
        attempt += 1
        cluster = make_reweighting_cluster(
            replace(spec, seed=base_seed), c=c, k=cluster_size, seed=derive_seed(seed, STREAM_NOISE, attempt)
        )
        if oracle(cluster[0]).terminated_at != t_filter:
            continue
        traj = record_trajectories_for_graphs(model, cluster, t_filter, task=task)
        agg = node_aggregate(traj, node_mode)  # [k, D, T]
        for step in range(t_filter):
            points = agg[:, :, step]
            result = pca(points, 1)
            direction = result.components[0]
            spread = float(np.std((points - result.mean) @ direction))
            entries[(found, step)] = DirectionEntry(
                direction=direction, centroid=result.mean, sigma=spread
            )
        found += 1
    if found < n_clusters:
        raise LatentError(
            f"built only {found}/{n_clusters} clusters with oracle T={t_filter}"
        )
    # Directions are axes (sign-ambiguous), so a naive average cancels; the
    # right "mean direction" is the dominant eigenvector of their scatter.
    dirs = np.stack([e.direction for e in entries.values()])
    _, evecs = np.linalg.eigh(dirs.T @ dirs)
    mean_dir = evecs[:, -1]
    mean_dir = mean_dir * np.sign(mean_dir[np.argmax(np.abs(mean_dir))])
    return DirectionDatabase(
        entries=entries,
        n_clusters=n_clusters,
        n_steps=t_filter,
        mean_direction=mean_dir,
        metadata={"c": c, "cluster_size": cluster_size, "t_filter": t_filter, "seed": seed},
    )


PERTURB_MODES = ("noise_free", "directional", "random", "project_out", "project_onto")
SELECTORS = ("l2_closest", "mean")


def perturb_eval(
    model: Model,
    db: DirectionDatabase,
    mode: str,
    selector: str,
    sigma: float | None,
    spec: GeneratorSpec,
    samples: int,
    seed: int,
    task: str = "bellman_ford",
    node_mode: str = "max",
    batch_size: int = 16,
) -> float:
    """Accuracy under test-time latent perturbations along stored directions.

    At every execution step the node-aggregated latent selects a direction
    (first PC of the L2-closest cluster centroid at that step, or the global
    mean direction); the perturbation is then applied to every node's latent
    individually: Gaussian noise along the direction (directional) or along
    a fresh random unit vector (random), removing each node's component
    along the direction (project_out), or keeping only that component
    (project_onto). Projections are taken in centered coordinates when a
    centroid exists (l2_closest); the mean selector has none and projects
    the raw vectors.

    Per-node application matters: adding one shared offset to every node is
    provably invisible to the model's decisions (pointer scores shift by the
    same constant for every candidate, and with a linear processor the
    offset propagates without ever flipping a max), so a broadcast
    perturbation would measure nothing.
    """
    if mode not in PERTURB_MODES:
        raise LatentError(f"unknown perturbation mode {mode!r}; expected one of {PERTURB_MODES}")
    if selector not in SELECTORS:
        raise LatentError(f"unknown selector {selector!r}; expected one of {SELECTORS}")
    if sigma is None:
        sigma = db.default_sigma()
    if sigma < 0:
        raise LatentError("sigma must be >= 0")

    oracle = oracle_for(task)
    graphs = sample_graphs(spec, samples, seed, tag_index=1)
    traces = [oracle(g) for g in graphs]
    rng = substream(seed, STREAM_NOISE, _mode_tag(mode))
    reduce_nodes = {"max": np.max, "min": np.min, "mean": np.mean}[node_mode]

    correct: list[np.ndarray] = []
    for lo in range(0, samples, batch_size):
        chunk = graphs[lo : lo + batch_size]
        chunk_traces = traces[lo : lo + batch_size]
        ts = [max(tr.terminated_at, 1) for tr in chunk_traces]

        def hook(step: int, z: np.ndarray) -> np.ndarray:
            if mode == "noise_free":
                return z
            agg = reduce_nodes(z, axis=1)  # [b, D]
            cents, dirs, _ = db.directions_at(step)
            n_nodes = z.shape[1]
            for i in range(z.shape[0]):
                if selector == "l2_closest":
                    j = int(np.argmin(np.linalg.norm(cents - agg[i], axis=1)))
                    # stored centroids live in aggregated space; the
                    # type-correct per-node center is the sample's node mean
                    u, center = dirs[j], z[i].mean(axis=0)
                else:
                    u, center = db.mean_direction, None
                if mode == "directional":
                    z[i] += rng.normal(0.0, sigma, size=(n_nodes, 1)) * u
                elif mode == "random":
                    r = rng.normal(size=u.shape)
                    r /= np.linalg.norm(r)
                    z[i] += rng.normal(0.0, sigma, size=(n_nodes, 1)) * r
                else:
                    rel = z[i] - center if center is not None else z[i]
                    along = (rel @ u)[:, None] * u
                    kept = rel - along if mode == "project_out" else along
                    z[i] = kept + center if center is not None else kept
            return z

        _, final_out, _ = rollout(model, chunk, ts, mode="self_rollout", latent_hook=hook)
        for tr, out_pi in zip(chunk_traces, final_out):
            correct.append(out_pi == tr.final.pi)
    return float(np.concatenate(correct).mean())


def _mode_tag(mode: str) -> int:
    return sum(ord(ch) for ch in mode)


# ---------------------------------------------------------------------------
# attractor diagnostics
# ---------------------------------------------------------------------------


def attractor_stats(t: TrajectoryTensor, node_mode: str = "max") -> np.ndarray:
    """Mean node-aggregated displacement norm per step transition.

    Entry i is the average over samples of the distance travelled between
    steps i and i+1; a decaying profile indicates convergence toward an
    attractor.
    """
    agg = node_aggregate(t, node_mode)  # [N, D, T]
    if agg.shape[2] < 2:
        raise LatentError("need at least 2 steps for displacement statistics")
    deltas = np.diff(agg, axis=2)
    return np.linalg.norm(deltas, axis=1).mean(axis=0)


# ---------------------------------------------------------------------------
# mispredict taxonomy
# ---------------------------------------------------------------------------


VARIANT_NAMES = ("exact", "greedy", "decay", "noisy")


@dataclass
class MispredictReport:
    actors: list[str]  # model + variant names
    agreement_matrix: np.ndarray  # pairwise final agreement
    ever_correct_matrix: np.ndarray  # 2x2: [final correct?][ever correct?]
    samples: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "actors": self.actors,
                "agreement_matrix": self.agreement_matrix.tolist(),
                "ever_correct_matrix": self.ever_correct_matrix.tolist(),
                "samples": self.samples,
            }
        )


def mispredict_matrices(
    traces_by_actor: dict[str, list[ExecutionTrace]]
) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Pairwise final agreement plus the model-vs-exact ever-correct split.

    The 2x2 matrix rows are final-correct (row 0) / final-wrong; columns are
    ever-correct (col 0) / never-correct. Entry [0, 1] (correct at the end
    but never during execution) is structurally zero because the final
    snapshot is one of the snapshots.
    """
    actors = list(traces_by_actor)
    k = len(actors)
    agree = np.zeros((k, k))
    for i, a in enumerate(actors):
        for j, b in enumerate(actors):
            vals = [
                agreement(ta, tb, "final")
                for ta, tb in zip(traces_by_actor[a], traces_by_actor[b])
            ]
            agree[i, j] = float(np.mean(vals))

    quad = np.zeros((2, 2))
    for exact_tr, model_tr in zip(traces_by_actor["exact"], traces_by_actor["model"]):
        target = exact_tr.final.pi
        final_ok = model_tr.final.pi == target
        ever_ok = np.zeros_like(final_ok)
        for s in model_tr.steps:
            ever_ok |= s.pi == target
        for f in (0, 1):
            for e in (0, 1):
                quad[f, e] += np.sum((final_ok == bool(f)) & (ever_ok == bool(e)))
    quad /= quad.sum()
    quad = quad[::-1, ::-1]  # row/col 0 = correct
    return actors, agree, quad


def mispredict_report(
    model: Model,
    spec: GeneratorSpec,
    samples: int,
    seed: int,
    task: str = "bellman_ford",
    variant_specs: dict[str, VariantSpec] | None = None,
    batch_size: int = 16,
) -> MispredictReport:
    """Pairwise final-prediction agreement among the model, the exact
    executor, and the faulty variants, plus the (final-correct x
    ever-correct) node split of the model against ground truth."""
    oracle = oracle_for(task)
    if variant_specs is None:
        variant_specs = {
            "greedy": VariantSpec(kind="greedy"),
            "decay": VariantSpec(kind="decay"),
            "noisy": VariantSpec(kind="noisy", seed=derive_seed(seed, STREAM_NOISE)),
        }
    graphs = sample_graphs(spec, samples, seed, tag_index=2)

    actors = ["model", "exact", *variant_specs.keys()]
    traces_by_actor: dict[str, list[ExecutionTrace]] = {a: [] for a in actors}
    for lo in range(0, samples, batch_size):
        chunk = graphs[lo : lo + batch_size]
        oracle_traces = [oracle(g) for g in chunk]
        ts = [max(tr.terminated_at, 1) for tr in oracle_traces]
        pred_traces, final_out, _ = rollout(model, chunk, ts, mode="self_rollout")
        # score the model on its output head: splice output pointers into the
        # final snapshot so agreement() sees what evaluate() scores
        for pt, out_pi in zip(pred_traces, final_out):
            steps = list(pt.steps)
            steps[-1] = type(steps[-1])(pi=out_pi, dist=steps[-1].dist)
            traces_by_actor["model"].append(ExecutionTrace(steps=tuple(steps)))
        traces_by_actor["exact"].extend(oracle_traces)
        for name, vs in variant_specs.items():
            traces_by_actor[name].extend(variant_trace(g, vs) for g in chunk)

    actors, agree, quad = mispredict_matrices(traces_by_actor)
    return MispredictReport(
        actors=actors, agreement_matrix=agree, ever_correct_matrix=quad, samples=samples
    )


# ---------------------------------------------------------------------------
# value generalisation
# ---------------------------------------------------------------------------


@dataclass
class ValueGeneralisationReport:
    per_p: dict[float, dict]

    def to_json(self) -> str:
        return json.dumps({str(p): v for p, v in self.per_p.items()})


def value_generalisation_report(
    model: Model,
    p_values: list[float],
    spec: GeneratorSpec,
    samples: int,
    seed: int,
    task: str = "bellman_ford",
    rescale_control: bool = False,
) -> ValueGeneralisationReport:
    """Accuracy and distance-binned mispredict rates across edge densities.

    With rescale_control, each density is also evaluated with weights
    pre-scaled by the ratio of mean true distances (reference density =
    p_values[0]), the control showing the drop is a value-range effect.
    """
    from .training import evaluate

    per_p: dict[float, dict] = {}
    mean_dist: dict[float, float] = {}
    for p in p_values:
        pspec = replace(spec, p=p)
        report = evaluate(model, pspec, samples, seed, task=task)
        true_vals = np.array([a for a, *_ in report.distance_pairs])
        mean_dist[p] = float(true_vals.mean()) if true_vals.size else float("nan")
        per_p[p] = {
            "accuracy": report.accuracy,
            "mean_true_distance": mean_dist[p],
            "distance_bin_edges": report.distance_bin_edges,
            "mispredict_rate_by_true_distance": report.mispredict_rate_by_true_distance,
            "mispredict_rate_by_predicted_distance": report.mispredict_rate_by_predicted_distance,
            "distance_pairs": report.distance_pairs,
        }
    if rescale_control:
        ref = p_values[0]
        for p in p_values[1:]:
            scale = mean_dist[ref] / mean_dist[p]
            pspec = replace(spec, p=p)
            report = evaluate(model, pspec, samples, seed, task=task, weight_scale=scale)
            per_p[p]["rescaled_accuracy"] = report.accuracy
            per_p[p]["weight_scale"] = scale
    return ValueGeneralisationReport(per_p=per_p)
