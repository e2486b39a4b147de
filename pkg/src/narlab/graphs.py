"""Weighted-graph containers, random generation, and execution-preserving transforms.

Graphs are stored as dense directed adjacency matrices. A weight of exactly
0.0 encodes "no edge"; real edges carry weights strictly inside (0, 1). The
random generator produces symmetric matrices, while the potential-based
reweighting transform may produce asymmetric (directed) ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

GENERATION_RETRIES = 100


class GraphError(ValueError):
    """Invalid graph, generator spec, or transform argument."""


@dataclass(frozen=True)
class WeightedGraph:
    """Directed weighted graph with a distinguished source node.

    weights[u][v] is the weight of edge u -> v, or exactly 0.0 if absent.
    """

    n: int
    weights: np.ndarray
    source: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if self.n < 2:
            raise GraphError(f"node count must be >= 2, got {self.n}")
        if w.shape != (self.n, self.n):
            raise GraphError(f"weights must be {self.n}x{self.n}, got {w.shape}")
        if not (0 <= self.source < self.n):
            raise GraphError(f"source {self.source} out of range [0, {self.n})")
        if np.any(np.diag(w) != 0.0):
            raise GraphError("self-edges are not allowed")
        nz = w[w != 0.0]
        if nz.size and (np.any(nz <= 0.0) or np.any(nz >= 1.0)):
            raise GraphError("edge weights must lie strictly inside (0, 1)")

    @property
    def edge_mask(self) -> np.ndarray:
        """Boolean adjacency: True where an edge exists."""
        return self.weights != 0.0

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.weights, self.weights.T))

    def to_json(self) -> str:
        """Serialize to the canonical JSON form.

        Weights are printed at 17 significant digits, which round-trips
        float64 exactly.
        """
        edges = [
            f"[{u}, {v}, {self.weights[u, v]:.17g}]"
            for u in range(self.n)
            for v in range(self.n)
            if self.weights[u, v] != 0.0
        ]
        return '{"n": %d, "source": %d, "edges": [%s]}' % (self.n, self.source, ", ".join(edges))

    @classmethod
    def from_json(cls, text: str) -> "WeightedGraph":
        obj = json.loads(text)
        n = int(obj["n"])
        w = np.zeros((n, n), dtype=np.float64)
        for u, v, weight in obj["edges"]:
            w[int(u), int(v)] = float(weight)
        return cls(n=n, weights=w, source=int(obj["source"]))


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of the Erdos-Renyi graph generator."""

    n: int = 16
    p: float = 0.5
    weight_low: float = 0.0
    weight_high: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise GraphError(f"node count must be >= 2, got {self.n}")
        if not (0.0 <= self.p <= 1.0):
            raise GraphError(f"edge probability must be in [0, 1], got {self.p}")
        if not (0.0 <= self.weight_low < self.weight_high <= 1.0):
            raise GraphError(
                f"need 0 <= weight_low < weight_high <= 1, got ({self.weight_low}, {self.weight_high})"
            )


@dataclass(frozen=True)
class NodePotential:
    """Per-node potential values used by the reweighting transform."""

    h: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "h", np.asarray(self.h, dtype=np.float64))
        if self.h.ndim != 1:
            raise GraphError("potential must be a 1-D array")


def generate_er(spec: GeneratorSpec) -> WeightedGraph:
    """Sample a symmetric Erdos-Renyi graph from (spec, seed).

    Each unordered node pair becomes an edge independently with probability
    spec.p; edge weights are uniform in (weight_low, weight_high) and shared
    by both directions; the source is chosen uniformly. Retries (bounded)
    when the source has no outgoing edge, which would make the execution
    trace degenerate.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(spec.seed)))
    for _ in range(GENERATION_RETRIES):
        n = spec.n
        # Sample the strict upper triangle, then mirror.
        coin = rng.random((n, n))
        raw = rng.uniform(spec.weight_low, spec.weight_high, size=(n, n))
        upper = np.triu(np.ones((n, n), dtype=bool), k=1)
        present = upper & (coin < spec.p)
        # Degenerate uniform draws at the interval ends would violate the
        # open-interval invariant; nudge them inward.
        eps = np.finfo(np.float64).tiny
        raw = np.clip(raw, eps, np.nextafter(1.0, 0.0))
        w = np.where(present, raw, 0.0)
        w = w + w.T
        source = int(rng.integers(0, n))
        if np.any(w[source] != 0.0):
            return WeightedGraph(n=n, weights=w, source=source)
    raise GraphError(
        f"failed to generate a non-degenerate graph after {GENERATION_RETRIES} attempts "
        f"(n={spec.n}, p={spec.p})"
    )


def scale_weights(g: WeightedGraph, lam: float) -> WeightedGraph:
    """Multiply every edge weight by lam > 0; non-edges stay 0.

    Negative factors would introduce negative cycles and are rejected.
    """
    if lam <= 0:
        raise GraphError(f"scale factor must be positive, got {lam}")
    scaled = np.where(g.edge_mask, g.weights * lam, 0.0)
    return WeightedGraph(n=g.n, weights=scaled, source=g.source)


def reweight(g: WeightedGraph, potential: NodePotential, strict: bool = True) -> WeightedGraph:
    """Apply the potential-based reweighting w'(u,v) = w(u,v) + h[u] - h[v].

    Non-edges stay 0 and the source is unchanged. This preserves the
    shortest-path tree exactly while shifting distances by h[source] - h[u].
    With strict=True (default) an out-of-range resulting weight raises here
    with a sampling hint; strict=False defers to the container's (0, 1)
    invariant, which still rejects such graphs.
    """
    h = potential.h
    if h.shape != (g.n,):
        raise GraphError(f"potential must have {g.n} entries, got {h.shape}")
    shift = h[:, None] - h[None, :]
    new_w = np.where(g.edge_mask, g.weights + shift, 0.0)
    if strict:
        bad = g.edge_mask & ((new_w <= 0.0) | (new_w >= 1.0))
        if np.any(bad):
            u, v = np.argwhere(bad)[0]
            raise GraphError(
                f"reweighted edge ({u},{v}) has weight {new_w[u, v]:.6g} outside (0, 1); "
                "sample base weights from (c, 1-c) and potentials from (0, c)"
            )
    return WeightedGraph(n=g.n, weights=new_w, source=g.source)


def make_reweighting_cluster(
    spec: GeneratorSpec, c: float, k: int, seed: int
) -> list[WeightedGraph]:
    """Build one base graph plus k-1 reweighted variants with identical execution.

    The base graph draws weights from (c, 1-c) and each variant applies a
    random potential drawn from (0, c), so every member stays inside the
    (0, 1) weight distribution. All members share the same per-step pointer
    trace.
    """
    if not (0.0 < c <= 0.5):
        raise GraphError(f"range margin c must be in (0, 0.5], got {c}")
    if k < 1:
        raise GraphError(f"cluster size must be >= 1, got {k}")
    # c = 0.5 collapses the reduced weight range (c, 1-c) to a point; keep it
    # a hair open so the generator accepts it while the in-range guarantee
    # (w + h(u) - h(v) strictly inside (0, 1)) still holds.
    c_eff = min(c, 0.5 - 1e-6)
    base_spec = GeneratorSpec(
        n=spec.n, p=spec.p, weight_low=c_eff, weight_high=1.0 - c_eff, seed=spec.seed
    )
    base = generate_er(base_spec)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    cluster = [base]
    for _ in range(k - 1):
        h = rng.uniform(0.0, c_eff, size=spec.n)
        cluster.append(reweight(base, NodePotential(h)))
    return cluster
