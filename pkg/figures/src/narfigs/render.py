"""Deterministic figure rendering from experiment CSV outputs.

Every renderer is a pure function of its input bytes and options: fixed
figure geometry, no randomness, no timestamps. Step-wise scatter plots color
points by execution step and trace each sample's trajectory with a red
polyline; graph snapshots follow the edge-color convention blue (true tree),
green (true tree and predicted), black (neither), red (predicted only).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .schema import SchemaError, load_columns

FIGURE_KINDS = (
    "stepwise_scatter",
    "trajectorywise_scatter",
    "cluster_overlay",
    "accuracy_vs_steps",
    "mispredict_bins",
    "agreement_matrix",
    "correlation_scatter",
    "graph_snapshot",
)

STEP_CMAP = "viridis"
TRAJECTORY_COLOR = "red"


@dataclass
class FigureSpec:
    kind: str
    inputs: dict[str, Path]
    output: Path
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; expected one of {FIGURE_KINDS}")
        self.output = Path(self.output)
        if self.output.suffix.lower() not in (".png", ".svg"):
            raise SchemaError(f"output must be .png or .svg, got {self.output.suffix!r}")


def render(spec: FigureSpec) -> Path:
    """Render one figure and return the written path."""
    plt.rcParams["svg.hashsalt"] = "narlab"  # deterministic SVG ids
    fig = _RENDERERS[spec.kind](spec)
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output, dpi=150, metadata=_metadata(spec.output))
    plt.close(fig)
    return spec.output


def _metadata(path: Path):
    if path.suffix.lower() == ".svg":
        return {"Date": None}  # strip the embedded timestamp
    return None


def _new_axes(title: str, xlabel: str, ylabel: str, size=(6.0, 4.5)):
    fig, ax = plt.subplots(figsize=size)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return fig, ax


def _stepwise_points(spec, required=("sample", "step", "pc1", "pc2")):
    cols = load_columns(spec.inputs["coords"], list(required))
    sample = np.array(cols["sample"], dtype=int)
    step = np.array(cols["step"], dtype=int)
    x = np.array(cols["pc1"], dtype=float)
    y = np.array(cols["pc2"], dtype=float)
    return cols, sample, step, x, y


def _draw_trajectories(ax, sample, step, x, y):
    for sid in np.unique(sample):
        mask = sample == sid
        order = np.argsort(step[mask])
        ax.plot(
            x[mask][order],
            y[mask][order],
            color=TRAJECTORY_COLOR,
            linewidth=0.7,
            alpha=0.6,
            zorder=1,
        )


def render_stepwise_scatter(spec: FigureSpec):
    """One point per (sample, step), colored by step, red trajectory lines.

    The x axis is the direction of highest variance.
    """
    _, sample, step, x, y = _stepwise_points(spec)
    fig, ax = _new_axes("Step-wise latent embedding", "PC1", "PC2")
    _draw_trajectories(ax, sample, step, x, y)
    sc = ax.scatter(x, y, c=step, cmap=STEP_CMAP, s=14, zorder=2)
    fig.colorbar(sc, ax=ax, label="execution step")
    fig.tight_layout()
    return fig


def render_trajectorywise_scatter(spec: FigureSpec):
    """One point per sample: whole trajectories compressed to single points."""
    cols = load_columns(spec.inputs["coords"], ["sample", "pc1", "pc2"])
    x = np.array(cols["pc1"], dtype=float)
    y = np.array(cols["pc2"], dtype=float)
    color_col = spec.options.get("color_by")
    fig, ax = _new_axes("Trajectory-wise latent embedding", "PC1", "PC2")
    if color_col:
        if color_col not in cols:
            raise SchemaError(f"color_by column {color_col!r} not in input")
        c = np.array(cols[color_col], dtype=float)
        sc = ax.scatter(x, y, c=c, cmap="tab10", s=18)
        fig.colorbar(sc, ax=ax, label=color_col)
    else:
        ax.scatter(x, y, s=18, color="steelblue")
    fig.tight_layout()
    return fig


def render_cluster_overlay(spec: FigureSpec):
    """Step-wise scatter colored by cluster, with per-cluster dominant
    directions overlaid in red when segments are provided."""
    cols, sample, step, x, y = _stepwise_points(spec)
    if "cluster" not in cols:
        raise SchemaError("cluster_overlay needs a 'cluster' column (record with --symmetry)")
    cluster = np.array(cols["cluster"], dtype=int)
    fig, ax = _new_axes("Symmetry clusters in latent space", "PC1", "PC2")
    ax.scatter(x, y, c=cluster, cmap="tab10", s=14, zorder=2)
    if "segments" in spec.inputs:
        seg = load_columns(spec.inputs["segments"], ["cluster", "step", "x0", "y0", "x1", "y1"])
        for x0, y0, x1, y1 in zip(seg["x0"], seg["y0"], seg["x1"], seg["y1"]):
            ax.plot([x0, x1], [y0, y1], color=TRAJECTORY_COLOR, linewidth=1.4, zorder=3)
    fig.tight_layout()
    return fig


def render_accuracy_vs_steps(spec: FigureSpec):
    """Accuracy as a function of step count (or forced-step offset)."""
    x_col = spec.options.get("x_col", "steps")
    cols = load_columns(spec.inputs["table"], [x_col, "accuracy"])
    x = np.array(cols[x_col], dtype=float)
    y = np.array(cols["accuracy"], dtype=float)
    order = np.argsort(x)
    fig, ax = _new_axes("Accuracy vs " + x_col.replace("_", " "), x_col, "pointer accuracy")
    ax.plot(x[order], y[order], marker="o", color="steelblue")
    ax.set_ylim(0.0, 1.05)
    fig.tight_layout()
    return fig


def render_mispredict_bins(spec: FigureSpec):
    """Misprediction rate binned by true and by predicted distance."""
    cols = load_columns(
        spec.inputs["bins"], ["bin_lo", "bin_hi", "rate_by_true", "rate_by_predicted"]
    )
    if "p" in cols and spec.options.get("p") is not None:
        want = float(spec.options["p"])
        keep = [i for i, v in enumerate(cols["p"]) if float(v) == want]
        if not keep:
            raise SchemaError(f"no rows with p={want}")
        cols = {k: [v[i] for i in keep] for k, v in cols.items()}
    lo = np.array(cols["bin_lo"], dtype=float)
    hi = np.array(cols["bin_hi"], dtype=float)
    centers = (lo + hi) / 2.0
    width = (hi - lo) * 0.42
    fig, axes = plt.subplots(1, 2, figsize=(9.5, 4.0), sharey=True)
    for ax, col, label in (
        (axes[0], "rate_by_true", "true distance"),
        (axes[1], "rate_by_predicted", "predicted distance"),
    ):
        rates = np.array([np.nan if v == "nan" else float(v) for v in cols[col]])
        valid = ~np.isnan(rates)
        ax.bar(centers[valid], rates[valid], width=width[valid] * 2, color="indianred", edgecolor="black", linewidth=0.4)
        ax.set_xlabel(label)
        ax.set_ylim(0.0, 1.05)
        ax.set_title(f"Misprediction rate by {label}")
    axes[0].set_ylabel("misprediction rate")
    fig.tight_layout()
    return fig


def render_agreement_matrix(spec: FigureSpec):
    """Heatmap of a long-form square matrix (actor_a, actor_b, value)."""
    key_a = spec.options.get("row_col", "actor_a")
    key_b = spec.options.get("col_col", "actor_b")
    val = spec.options.get("value_col", "agreement")
    cols = load_columns(spec.inputs["matrix"], [key_a, key_b, val])
    rows = [str(v) for v in cols[key_a]]
    cols_b = [str(v) for v in cols[key_b]]
    labels_r = list(dict.fromkeys(rows))
    labels_c = list(dict.fromkeys(cols_b))
    mat = np.full((len(labels_r), len(labels_c)), np.nan)
    for a, b, v in zip(rows, cols_b, cols[val]):
        mat[labels_r.index(a), labels_c.index(b)] = float(v)
    if np.isnan(mat).any():
        raise SchemaError("matrix rows do not cover the full label grid")
    fig, ax = plt.subplots(figsize=(5.2, 4.6))
    im = ax.imshow(mat, cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(labels_c)), labels_c, rotation=45, ha="right")
    ax.set_yticks(range(len(labels_r)), labels_r)
    for i in range(len(labels_r)):
        for j in range(len(labels_c)):
            ax.text(j, i, f"{mat[i, j]:.2f}", ha="center", va="center",
                    color="white" if mat[i, j] < 0.6 else "black", fontsize=8)
    ax.set_title(spec.options.get("title", "Final-prediction agreement"))
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    return fig


def render_correlation_scatter(spec: FigureSpec):
    """Predicted vs true distance, correct nodes in blue, mispredicts orange."""
    cols = load_columns(spec.inputs["pairs"], ["true_distance", "predicted_distance", "correct"])
    t = np.array(cols["true_distance"], dtype=float)
    p = np.array(cols["predicted_distance"], dtype=float)
    ok = np.array(cols["correct"], dtype=float) > 0.5
    finite = np.isfinite(p)
    fig, ax = _new_axes("Predicted vs true distance", "true distance", "predicted distance", size=(5.2, 5.0))
    ax.scatter(t[finite & ok], p[finite & ok], s=10, color="tab:blue", label="correct")
    ax.scatter(t[finite & ~ok], p[finite & ~ok], s=10, color="tab:orange", label="mispredict")
    top = max(t.max(), p[finite].max() if finite.any() else 1.0)
    ax.plot([0, top], [0, top], color="gray", linewidth=0.8, linestyle="--")
    ax.legend()
    fig.tight_layout()
    return fig


def _spring_layout(n: int, adjacency: np.ndarray, iterations: int = 120) -> np.ndarray:
    """Deterministic force-directed layout from a circular start."""
    theta = 2 * np.pi * np.arange(n) / n
    pos = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    k = 1.0 / np.sqrt(n)
    for it in range(iterations):
        delta = pos[:, None, :] - pos[None, :, :]
        dist = np.linalg.norm(delta, axis=-1) + 1e-9
        rep = k * k / dist**2
        att = np.where(adjacency, dist / k, 0.0)
        force = ((rep - att)[:, :, None] * delta / dist[:, :, None]).sum(axis=1)
        step = 0.05 * (1.0 - it / iterations)
        pos += step * force / (np.linalg.norm(force, axis=1, keepdims=True) + 1e-9)
    return pos


def render_graph_snapshot(spec: FigureSpec):
    """Node-link diagram of one execution step with tree-membership colors."""
    step = int(spec.options.get("step", 0))
    edges = load_columns(spec.inputs["edges"], ["step", "u", "v", "weight", "in_true_tree", "in_predicted_tree"])
    nodes = load_columns(spec.inputs["nodes"], ["step", "node", "predicted_distance", "is_source"])
    esel = [i for i, s in enumerate(edges["step"]) if int(s) == step]
    nsel = [i for i, s in enumerate(nodes["step"]) if int(s) == step]
    if not esel or not nsel:
        raise SchemaError(f"step {step} not present in snapshot files")
    n = int(max(nodes["node"][i] for i in nsel)) + 1
    adjacency = np.zeros((n, n), dtype=bool)
    for i in esel:
        u, v = int(edges["u"][i]), int(edges["v"][i])
        adjacency[u, v] = adjacency[v, u] = True
    pos = _spring_layout(n, adjacency)

    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    for i in esel:
        u, v = int(edges["u"][i]), int(edges["v"][i])
        true_t = bool(edges["in_true_tree"][i])
        pred_t = bool(edges["in_predicted_tree"][i])
        if true_t and pred_t:
            color, lw = "green", 2.0
        elif true_t:
            color, lw = "blue", 2.0
        elif pred_t:
            color, lw = "red", 2.0
        else:
            color, lw = "black", 0.8
        ax.plot(*zip(pos[u], pos[v]), color=color, linewidth=lw, zorder=1)
    for i in nsel:
        v = int(nodes["node"][i])
        is_src = bool(nodes["is_source"][i])
        ax.scatter(*pos[v], s=420, color="red" if is_src else "lightgray",
                   edgecolors="black", zorder=2)
        d = nodes["predicted_distance"][i]
        label = f"{v}\n{d if isinstance(d, str) else f'{d:.2f}'}"
        ax.text(*pos[v], label, ha="center", va="center", fontsize=7, zorder=3)
    ax.set_title(f"Predictions after step {step}")
    ax.set_axis_off()
    fig.tight_layout()
    return fig


_RENDERERS = {
    "stepwise_scatter": render_stepwise_scatter,
    "trajectorywise_scatter": render_trajectorywise_scatter,
    "cluster_overlay": render_cluster_overlay,
    "accuracy_vs_steps": render_accuracy_vs_steps,
    "mispredict_bins": render_mispredict_bins,
    "agreement_matrix": render_agreement_matrix,
    "correlation_scatter": render_correlation_scatter,
    "graph_snapshot": render_graph_snapshot,
}
