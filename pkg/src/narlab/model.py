"""Encode-process-decode network that executes algorithm steps in latent space.

One processor application corresponds to one algorithm step. Node inputs
(source flag) and the current hints (predecessor pointers, distances) are
embedded linearly into a latent state of width D; the processor passes
messages over existing edges plus a self-message; linear heads decode the
next step's hints and the final pointer output.

Orientation convention: every [n, n] grid is indexed [u, v] = (sender or
candidate predecessor u, receiver v). Aggregation reduces axis u.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .algorithms import ExecutionTrace, Snapshot
from .autodiff import Tensor
from .graphs import WeightedGraph
from .seeding import STREAM_INIT, substream

PROCESSORS = ("mpnn", "pgn", "linear_pgn", "triplet_lite")
AGGREGATORS = ("max", "mean", "sum", "softmax")

NODE_FEATS = 3  # is_source, distance value, distance-is-unreached flag
EDGE_FEATS = 4  # weight, edge-exists, is-self, pointer-one-hot
DIST_CLIP = 10.0

CHECKPOINT_VERSION = 1


class ModelError(ValueError):
    """Bad model configuration or malformed checkpoint."""


@dataclass(frozen=True)
class ModelConfig:
    latent_dim: int = 128
    processor: str = "mpnn"
    aggregator: str = "max"
    softmax_temperature: float = 0.01
    decay_factor: float = 1.0
    decay_mode: str = "to_zero"
    msg_hidden: int = 128
    update_hidden: int = 128
    triplet_dim: int = 8

    def __post_init__(self):
        if self.processor not in PROCESSORS:
            raise ModelError(f"unknown processor {self.processor!r}; expected one of {PROCESSORS}")
        if self.aggregator not in AGGREGATORS:
            raise ModelError(f"unknown aggregator {self.aggregator!r}; expected one of {AGGREGATORS}")
        if self.aggregator == "softmax" and not self.softmax_temperature > 0:
            raise ModelError("softmax aggregation requires temperature > 0")
        if not (0.0 < self.decay_factor <= 1.0):
            raise ModelError(f"decay_factor must be in (0, 1], got {self.decay_factor}")
        if self.decay_mode not in ("to_zero", "to_mean"):
            raise ModelError(f"unknown decay_mode {self.decay_mode!r}")

    @property
    def msg_width(self) -> int:
        return self.msg_hidden if self.processor == "mpnn" else self.latent_dim


@dataclass
class RunningMean:
    """Per-node running mean of latents over the current execution."""

    count: int = 0
    mean: np.ndarray | None = None

    def update(self, z: np.ndarray) -> None:
        if self.mean is None:
            self.mean = z.astype(np.float64).copy()
        else:
            self.mean += (z.astype(np.float64) - self.mean) / (self.count + 1)
        self.count += 1


def apply_decay(z: Tensor, c: float, mode: str, running_mean: RunningMean) -> Tensor:
    """Pull the latent state toward zero or toward its per-node running mean.

    to_zero: z' = c * z. to_mean: z' = mean + c * (z - mean), where the mean
    is over the previous steps' latents of the current execution and is
    treated as a constant (no gradient flows into it). The running mean is
    updated with the decayed state. c = 1 is the identity.
    """
    if not (0.0 < c <= 1.0):
        raise ModelError(f"decay factor must be in (0, 1], got {c}")
    if mode == "to_zero":
        out = ad.scale(z, c) if c != 1.0 else z
    elif mode == "to_mean":
        if running_mean.count == 0:
            out = z  # no history yet: decaying toward itself is the identity
        else:
            mu = Tensor(running_mean.mean.astype(z.dtype))
            out = ad.add(mu, ad.scale(ad.add(z, ad.neg(mu)), c))
    else:
        raise ModelError(f"unknown decay_mode {mode!r}")
    running_mean.update(out.data)
    return out


# ---------------------------------------------------------------------------
# batched inputs and hint encoding
# ---------------------------------------------------------------------------


@dataclass
class GraphBatch:
    """Static per-batch arrays shared by every step (float32 / bool)."""

    n: int
    size: int
    weights: np.ndarray  # [B, n, n]
    exists: np.ndarray  # [B, n, n] bool
    cand: np.ndarray  # [B, n, n] bool: exists or self
    is_source: np.ndarray  # [B, n]
    sources: np.ndarray  # [B]

    @classmethod
    def from_graphs(cls, graphs: list[WeightedGraph]) -> "GraphBatch":
        n = graphs[0].n
        if any(g.n != n for g in graphs):
            raise ModelError("all graphs in a batch must share the node count")
        b = len(graphs)
        weights = np.stack([g.weights for g in graphs]).astype(np.float32)
        exists = weights != 0.0
        cand = exists | np.eye(n, dtype=bool)[None]
        is_source = np.zeros((b, n), dtype=np.float32)
        for i, g in enumerate(graphs):
            is_source[i, g.source] = 1.0
        return cls(
            n=n,
            size=b,
            weights=weights,
            exists=exists,
            cand=cand,
            is_source=is_source,
            sources=np.array([g.source for g in graphs]),
        )


def initial_hints(batch: GraphBatch) -> tuple[np.ndarray, np.ndarray]:
    """Canonical initialization: self-pointers, zero distance at the source."""
    pi = np.tile(np.arange(batch.n), (batch.size, 1))
    dist = np.full((batch.size, batch.n), np.inf)
    dist[np.arange(batch.size), batch.sources] = 0.0
    return pi, dist


def hint_features(batch: GraphBatch, pi: np.ndarray, dist: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Encode hints as (node features [B,n,3], edge features [B,n,n,4]).

    Unreached distances enter as a (0 value, flag 1) pair, never as a magic
    number; finite values are clipped to [0, DIST_CLIP].
    """
    finite = np.isfinite(dist)
    d_val = np.where(finite, np.clip(dist, 0.0, DIST_CLIP), 0.0).astype(np.float32)
    node = np.stack([batch.is_source, d_val, (~finite).astype(np.float32)], axis=-1)
    b, n = dist.shape
    pi_onehot = np.zeros((b, n, n), dtype=np.float32)
    rows = np.repeat(np.arange(b), n)
    pi_onehot[rows, pi.reshape(-1), np.tile(np.arange(n), b)] = 1.0  # [b, u=pi[v], v]
    edge = np.stack(
        [
            batch.weights,
            batch.exists.astype(np.float32),
            np.broadcast_to(np.eye(n, dtype=np.float32), (b, n, n)),
            pi_onehot,
        ],
        axis=-1,
    )
    return node, edge


# ---------------------------------------------------------------------------
# the model
# ---------------------------------------------------------------------------


@dataclass
class StepOutput:
    z: Tensor  # [B, n, D]
    pi_logits: Tensor  # [B, n(u), n(v)], masked to candidates
    d_pred: Tensor  # [B, n]
    out_logits: Tensor  # final-pointer head, same layout as pi_logits
    eenc: Tensor  # encoded edge features, reusable for re-decoding


class Model:
    """Parameter container plus the per-step forward computation."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    # -- construction -------------------------------------------------------

    @classmethod
    def init(cls, config: ModelConfig, seed: int) -> "Model":
        d = config.latent_dim
        w = config.msg_width
        shapes: dict[str, tuple[int, ...]] = {
            "enc_node_w": (NODE_FEATS, d),
            "enc_node_b": (d,),
            "enc_z_w": (d, d),
            "enc_edge_w": (EDGE_FEATS, w),
            "msg_send": (d, w),
            "msg_recv": (d, w),
            "msg_b": (w,),
            "dec_ptr_send": (d, 1),
            "dec_ptr_recv": (d, 1),
            "dec_ptr_edge": (w, 1),
            "dec_ptr_b": (1,),
            "dec_d_w": (d, 1),
            "dec_d_b": (1,),
            "out_ptr_send": (d, 1),
            "out_ptr_recv": (d, 1),
            "out_ptr_edge": (w, 1),
            "out_ptr_b": (1,),
        }
        if config.processor == "mpnn":
            shapes.update(
                {
                    "msg_out_w": (config.msg_hidden, d),
                    "msg_out_b": (d,),
                    "upd_self": (d, config.update_hidden),
                    "upd_agg": (d, config.update_hidden),
                    "upd_b1": (config.update_hidden,),
                    "upd_out": (config.update_hidden, d),
                    "upd_b2": (d,),
                }
            )
        else:
            shapes.update({"upd_self": (d, d), "upd_agg": (d, d), "upd_b": (d,)})
        if config.processor == "triplet_lite":
            k = config.triplet_dim
            shapes.update(
                {
                    "tri_i": (d, k),
                    "tri_j": (d, k),
                    "tri_k": (d, k),
                    "tri_eij": (EDGE_FEATS, k),
                    "tri_ejk": (EDGE_FEATS, k),
                    "tri_b": (k,),
                    "tri_out": (k, w),
                }
            )
        params: dict[str, Tensor] = {}
        for idx, (name, shape) in enumerate(sorted(shapes.items())):
            rng = substream(seed, STREAM_INIT, idx)
            if len(shape) == 1:
                data = np.zeros(shape, dtype=np.float32)
            else:
                limit = np.sqrt(6.0 / (shape[0] + shape[1]))
                data = rng.uniform(-limit, limit, size=shape).astype(np.float32)
            params[name] = Tensor(data, requires_grad=True)
        return cls(config, params)

    def zero_latent(self, batch: GraphBatch) -> Tensor:
        return Tensor(np.zeros((batch.size, batch.n, self.config.latent_dim), dtype=np.float32))

    # -- pieces -------------------------------------------------------------

    def encode(self, node_feats: np.ndarray, z_prev: Tensor) -> Tensor:
        """Linear node encoder: features plus a learned map of the previous latent."""
        p = self.params
        x = ad.affine(Tensor(node_feats), p["enc_node_w"], p["enc_node_b"])
        return ad.add(x, ad.matmul(z_prev, p["enc_z_w"]))

    def encode_edges(self, edge_feats: np.ndarray) -> Tensor:
        return ad.matmul(Tensor(edge_feats), self.params["enc_edge_w"])

    def process_step(
        self,
        z: Tensor,
        x: Tensor,
        eenc: Tensor,
        cand: np.ndarray,
        edge_feats: np.ndarray | None = None,
    ) -> Tensor:
        """One message-passing step over existing edges plus self-messages.

        Messages are built from per-endpoint linear maps of h = z + x summed
        with the encoded edge features, reduced over senders by the
        configured aggregator; non-candidates are masked out of the
        reduction. linear_pgn keeps the whole step free of elementwise
        nonlinearities, so aggregation is the only one.
        """
        cfg = self.config
        p = self.params
        b, n, d = z.shape
        h = ad.add(z, x)
        send = ad.matmul(h, p["msg_send"])
        recv = ad.matmul(h, p["msg_recv"])
        pre = ad.edge_broadcast_sum(send, recv, eenc, p["msg_b"])
        if cfg.processor == "triplet_lite":
            if edge_feats is None:
                raise ModelError("triplet_lite needs the raw edge features")
            pre = ad.add(pre, self._triplet_features(h, edge_feats))

        if cfg.processor == "mpnn":
            msg = ad.affine(ad.relu(pre), p["msg_out_w"], p["msg_out_b"])
        elif cfg.processor in ("pgn", "triplet_lite"):
            msg = ad.relu(pre)
        else:  # linear_pgn
            msg = pre

        agg = self._aggregate(msg, cand)

        if cfg.processor == "mpnn":
            hidden = ad.relu(
                ad.add(
                    ad.add(ad.matmul(h, p["upd_self"]), ad.matmul(agg, p["upd_agg"])),
                    p["upd_b1"],
                )
            )
            out = ad.affine(hidden, p["upd_out"], p["upd_b2"])
        else:
            out = ad.add(
                ad.add(ad.matmul(h, p["upd_self"]), ad.matmul(agg, p["upd_agg"])), p["upd_b"]
            )
        # linear_pgn keeps the step free of elementwise nonlinearities; the
        # others clamp the new latent, which tames drift over long rollouts
        if cfg.processor == "linear_pgn":
            return out
        return ad.relu(out)

    def _aggregate(self, msg: Tensor, cand: np.ndarray) -> Tensor:
        cfg = self.config
        mask4 = cand[:, :, :, None]
        if cfg.aggregator == "max":
            return ad.reduce_max(ad.where_const(mask4, msg, -np.inf), axis=1)
        if cfg.aggregator == "softmax":
            return ad.softmax_weighted_sum(
                ad.where_const(mask4, msg, -np.inf), cfg.softmax_temperature, axis=1
            )
        masked = ad.mul(msg, Tensor(mask4.astype(np.float32)))
        total = ad.reduce_sum(masked, axis=1)
        if cfg.aggregator == "sum":
            return total
        counts = cand.sum(axis=1)[:, :, None].astype(np.float32)  # self-message keeps this >= 1
        return ad.mul(total, Tensor(1.0 / counts))

    def _triplet_features(self, h: Tensor, edge_feats: np.ndarray) -> Tensor:
        """Edge-level triplet summaries: linear features over (i, j, k), max over k."""
        p = self.params
        b, n, _ = h.shape
        k = self.config.triplet_dim
        ef = Tensor(edge_feats)
        ti = ad.reshape(ad.matmul(h, p["tri_i"]), (b, n, 1, 1, k))
        tj = ad.reshape(ad.matmul(h, p["tri_j"]), (b, 1, n, 1, k))
        tk = ad.reshape(ad.matmul(h, p["tri_k"]), (b, 1, 1, n, k))
        eij = ad.reshape(ad.matmul(ef, p["tri_eij"]), (b, n, n, 1, k))
        ejk = ad.reshape(ad.matmul(ef, p["tri_ejk"]), (b, 1, n, n, k))
        t = ad.add(ad.add(ad.add(ti, tj), ad.add(tk, p["tri_b"])), ad.add(eij, ejk))
        reduced = ad.reduce_max(t, axis=3)  # over k
        return ad.matmul(reduced, p["tri_out"])

    def decode(self, z: Tensor, eenc: Tensor, cand: np.ndarray, head: str = "dec") -> tuple[Tensor, Tensor | None]:
        """Pointer logits over candidate predecessors and (for the hint head)
        a scalar distance readout per node."""
        p = self.params
        b, n, _ = z.shape
        send = ad.reshape(ad.matmul(z, p[f"{head}_ptr_send"]), (b, n, 1))
        recv = ad.reshape(ad.matmul(z, p[f"{head}_ptr_recv"]), (b, 1, n))
        edge = ad.reshape(ad.matmul(eenc, p[f"{head}_ptr_edge"]), (b, n, n))
        logits = ad.add(ad.add(send, recv), ad.add(edge, p[f"{head}_ptr_b"]))
        logits = ad.where_const(cand, logits, -np.inf)
        if head != "dec":
            return logits, None
        d_pred = ad.reshape(ad.affine(z, p["dec_d_w"], p["dec_d_b"]), (b, n))
        return logits, d_pred

    # -- one full step ------------------------------------------------------

    def step(
        self,
        z: Tensor,
        batch: GraphBatch,
        pi: np.ndarray,
        dist: np.ndarray,
        running_mean: RunningMean,
    ) -> StepOutput:
        node_feats, edge_feats = hint_features(batch, pi, dist)
        x = self.encode(node_feats, z)
        eenc = self.encode_edges(edge_feats)
        z_new = self.process_step(z, x, eenc, batch.cand, edge_feats)
        if self.config.decay_factor < 1.0:
            z_new = apply_decay(z_new, self.config.decay_factor, self.config.decay_mode, running_mean)
        pi_logits, d_pred = self.decode(z_new, eenc, batch.cand, head="dec")
        out_logits, _ = self.decode(z_new, eenc, batch.cand, head="out")
        return StepOutput(z=z_new, pi_logits=pi_logits, d_pred=d_pred, out_logits=out_logits, eenc=eenc)


def predict_pointers(logits: np.ndarray) -> np.ndarray:
    """Argmax over candidate predecessors (axis u); ties go to the lowest index."""
    return logits.argmax(axis=1)


def run(
    model: "Model",
    graph: WeightedGraph,
    t_steps: int,
    mode: str = "self_rollout",
    oracle_trace: ExecutionTrace | None = None,
    latent_hook=None,
) -> tuple[ExecutionTrace, list[np.ndarray]]:
    """Execute one graph for t_steps processor applications.

    Returns the predicted trace (snapshots 0..t_steps) and the latent state
    after each step. Forced step counts (oracle T plus or minus a delta) are
    expressed directly through t_steps.
    """
    traces, _, latents = rollout(
        model,
        [graph],
        [t_steps],
        mode=mode,
        oracle_traces=[oracle_trace] if oracle_trace is not None else None,
        latent_hook=latent_hook,
    )
    return traces[0], [latents[0, t] for t in range(t_steps)]


def feedback_hints(
    pred_pi: np.ndarray, pred_d: np.ndarray, batch: GraphBatch
) -> tuple[np.ndarray, np.ndarray]:
    """Turn raw predictions into next-step hint inputs.

    A non-source node pointing at itself is the model's own "unreached"
    convention, so its distance is fed back as the +inf sentinel; other
    distances are clipped to the trained range.
    """
    n = batch.n
    self_ptr = pred_pi == np.arange(n)[None, :]
    inferred_inf = self_ptr & (batch.is_source == 0.0)
    dist = np.where(inferred_inf, np.inf, np.clip(pred_d.astype(np.float64), 0.0, DIST_CLIP))
    return pred_pi, dist


def rollout(
    model: Model,
    graphs: list[WeightedGraph],
    t_steps: list[int] | np.ndarray,
    mode: str = "self_rollout",
    oracle_traces: list[ExecutionTrace] | None = None,
    latent_hook=None,
) -> tuple[list[ExecutionTrace], np.ndarray, np.ndarray]:
    """Inference-mode unrolled execution (no gradients).

    Each graph b runs t_steps[b] processor applications; graphs that have
    finished keep their state frozen while the rest of the batch continues.
    teacher_forced feeds oracle hints (clamped to the trace's fixed point) as
    step inputs; self_rollout feeds the model's own predictions. latent_hook,
    when given, maps (step_index, z array) -> z array before decoding, which
    is how test-time perturbations are injected.

    Returns (predicted traces, final output-head pointers [B, n], recorded
    latents [B, max_T, n, D]).
    """
    if mode not in ("teacher_forced", "self_rollout"):
        raise ModelError(f"unknown rollout mode {mode!r}")
    if mode == "teacher_forced" and oracle_traces is None:
        raise ModelError("teacher_forced rollout requires oracle traces")
    t_steps = np.asarray(t_steps)
    if np.any(t_steps < 1):
        raise ModelError("every graph must run at least one step")
    batch = GraphBatch.from_graphs(graphs)
    b, n = batch.size, batch.n
    max_t = int(t_steps.max())

    pi, dist = initial_hints(batch)
    snapshots: list[list[Snapshot]] = [[Snapshot(pi=pi[i], dist=dist[i])] for i in range(b)]
    z = model.zero_latent(batch)
    latents = np.zeros((b, max_t, n, model.config.latent_dim), dtype=np.float32)
    final_out = np.zeros((b, n), dtype=np.int64)

    rm = RunningMean()  # frozen graphs' rows are overwritten below, so sharing one mean is safe
    for t in range(max_t):
        active = t < t_steps
        out = model.step(z, batch, pi, dist, rm)
        z_data = out.z.data
        if latent_hook is not None:
            z_data = latent_hook(t, z_data.copy())
        # frozen graphs keep their previous latent and hints
        z_data = np.where(active[:, None, None], z_data, z.data)
        z = Tensor(z_data)
        latents[:, t] = np.where(active[:, None, None], z_data, latents[:, t - 1] if t else z_data)

        if latent_hook is not None:
            # the hook changed z after the recorded decode; decode again
            pi_logits, d_pred = model.decode(z, out.eenc, batch.cand, "dec")
            out_logits, _ = model.decode(z, out.eenc, batch.cand, "out")
        else:
            pi_logits, d_pred, out_logits = out.pi_logits, out.d_pred, out.out_logits

        pred_pi = predict_pointers(pi_logits.data)
        pred_d = d_pred.data.astype(np.float64)
        out_pi = predict_pointers(out_logits.data)
        final_out[active] = out_pi[active]

        if mode == "teacher_forced":
            next_pi = np.stack(
                [oracle_traces[i].steps[min(t + 1, oracle_traces[i].terminated_at)].pi for i in range(b)]
            )
            next_d = np.stack(
                [oracle_traces[i].steps[min(t + 1, oracle_traces[i].terminated_at)].dist for i in range(b)]
            )
        else:
            next_pi, next_d = feedback_hints(pred_pi, pred_d, batch)
        pi = np.where(active[:, None], next_pi, pi)
        dist = np.where(active[:, None], next_d, dist)
        for i in range(b):
            if active[i]:
                snapshots[i].append(Snapshot(pi=pi[i], dist=dist[i]))

    traces = [ExecutionTrace(steps=tuple(s)) for s in snapshots]
    return traces, final_out, latents


# ---------------------------------------------------------------------------
# checkpoint persistence
# ---------------------------------------------------------------------------


def save_checkpoint(path, model: Model, metadata: dict | None = None) -> None:
    """Single-line JSON manifest, newline, then a little-endian float32 payload."""
    names = sorted(model.params)
    payload = bytearray()
    entries = []
    for name in names:
        arr = np.ascontiguousarray(model.params[name].data.astype("<f4"))
        entries.append({"name": name, "shape": list(arr.shape), "byte_offset": len(payload)})
        payload.extend(arr.tobytes())
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "config": vars(model.config) | {},
        "params": entries,
        "metadata": metadata or {},
    }
    header = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(bytes(payload))


def load_checkpoint(path) -> tuple[Model, dict]:
    with open(path, "rb") as f:
        header = f.readline()
        payload = f.read()
    try:
        manifest = json.loads(header.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelError(f"unreadable checkpoint manifest: {e}") from e
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise ModelError(
            f"checkpoint format_version {manifest.get('format_version')} "
            f"not supported (expected {CHECKPOINT_VERSION})"
        )
    config = ModelConfig(**manifest["config"])
    params = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        off = entry["byte_offset"]
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=off).reshape(shape)
        params[entry["name"]] = Tensor(arr.copy(), requires_grad=True)
    model = Model(config, params)
    return model, manifest.get("metadata", {})
