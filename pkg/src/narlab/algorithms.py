"""Ground-truth executors emitting per-step hint traces.

The exact Bellman-Ford executor performs synchronous relaxation (all edges
read the previous step's distances), so traces are independent of edge
order. Three deliberately faulty variants mimic simplifications a learned
model might internalize, and a BFS executor provides a second task.

Pointer convention: the predecessor of the source and of unreachable nodes
is the node itself.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .graphs import GraphError, WeightedGraph

VARIANT_KINDS = ("exact", "greedy", "decay", "noisy")


@dataclass(frozen=True)
class Snapshot:
    """One step of execution state: predecessor pointers and distances."""

    pi: np.ndarray
    dist: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pi", np.asarray(self.pi, dtype=np.int64))
        object.__setattr__(self, "dist", np.asarray(self.dist, dtype=np.float64))


@dataclass(frozen=True)
class ExecutionTrace:
    """Sequence of snapshots from initialization to the final state.

    steps[0] is the initialization snapshot; steps[-1] is a fixed point of
    the update rule. terminated_at == len(steps) - 1.
    """

    steps: tuple[Snapshot, ...]

    @property
    def n(self) -> int:
        return len(self.steps[0].pi)

    @property
    def terminated_at(self) -> int:
        return len(self.steps) - 1

    @property
    def final(self) -> Snapshot:
        return self.steps[-1]

    def to_json(self) -> str:
        payload = {
            "steps": [
                {
                    "pi": [int(x) for x in s.pi],
                    "dist": ["inf" if np.isinf(d) else float(d) for d in s.dist],
                }
                for s in self.steps
            ]
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "ExecutionTrace":
        obj = json.loads(text)
        steps = tuple(
            Snapshot(
                pi=np.array(s["pi"], dtype=np.int64),
                dist=np.array(
                    [np.inf if d == "inf" else float(d) for d in s["dist"]], dtype=np.float64
                ),
            )
            for s in obj["steps"]
        )
        return cls(steps=steps)


@dataclass(frozen=True)
class VariantSpec:
    """Selects one of the exact/faulty executors and its constants."""

    kind: str = "exact"
    decay_const: float = 0.9
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.kind not in VARIANT_KINDS:
            raise GraphError(f"unknown variant kind {self.kind!r}; expected one of {VARIANT_KINDS}")
        if not (0.0 < self.decay_const <= 1.0):
            raise GraphError(f"decay_const must be in (0, 1], got {self.decay_const}")
        if self.noise_sigma < 0.0:
            raise GraphError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


def _initial_snapshot(g: WeightedGraph) -> Snapshot:
    dist = np.full(g.n, np.inf)
    dist[g.source] = 0.0
    return Snapshot(pi=np.arange(g.n), dist=dist)


def _relax_once(
    g: WeightedGraph,
    snap: Snapshot,
    decay_const: float = 1.0,
    noise: np.ndarray | None = None,
) -> Snapshot:
    """One synchronous relaxation step of the (possibly faulty) update rule.

    For each node v, candidate values are decay_const * (d[u] + w(u,v)) over
    in-neighbors u, with optional additive noise used for the comparison.
    The pointer moves only on strict improvement over d[v]; ties between
    candidates break toward the lowest node index.
    """
    d, pi = snap.dist, snap.pi
    cand = np.where(g.edge_mask, d[:, None] + g.weights, np.inf)  # cand[u, v]
    cand = np.where(np.isfinite(cand), decay_const * cand, np.inf)
    compare = cand if noise is None else np.where(np.isfinite(cand), cand + noise, np.inf)
    best_u = np.argmin(compare, axis=0)
    best_val = compare[best_u, np.arange(g.n)]
    improved = best_val < d
    new_d = np.where(improved, cand[best_u, np.arange(g.n)], d)
    new_pi = np.where(improved, best_u, pi)
    return Snapshot(pi=new_pi, dist=new_d)


def _run_until_fixed(
    g: WeightedGraph,
    step_fn,
    max_steps: int,
) -> ExecutionTrace:
    steps = [_initial_snapshot(g)]
    for _ in range(max_steps):
        nxt = step_fn(steps[-1])
        if np.array_equal(nxt.pi, steps[-1].pi) and np.array_equal(nxt.dist, steps[-1].dist):
            break
        steps.append(nxt)
    return ExecutionTrace(steps=tuple(steps))


def bellman_ford_trace(g: WeightedGraph) -> ExecutionTrace:
    """Exact synchronous Bellman-Ford with per-step snapshots.

    Runs until the distance vector is a fixed point; with non-negative
    weights this takes at most n-1 steps.
    """
    return _run_until_fixed(g, lambda s: _relax_once(g, s), max_steps=g.n - 1)


def _greedy_relax(g: WeightedGraph, snap: Snapshot) -> Snapshot:
    """Greedy update: pick the predecessor by minimum edge weight alone.

    Among in-neighbors already reached (finite distance), the candidate
    predecessor minimizes w(u,v) rather than d[u] + w(u,v); the stored
    distance is still the true path length through that choice.
    """
    d, pi = snap.dist, snap.pi
    reachable = np.isfinite(d)[:, None] & g.edge_mask
    wcomp = np.where(reachable, g.weights, np.inf)
    best_u = np.argmin(wcomp, axis=0)
    cols = np.arange(g.n)
    has_cand = np.isfinite(wcomp[best_u, cols])
    value = np.where(has_cand, d[best_u] + g.weights[best_u, cols], np.inf)
    improved = value < d
    new_d = np.where(improved, value, d)
    new_pi = np.where(improved, best_u, pi)
    return Snapshot(pi=new_pi, dist=new_d)


def variant_trace(g: WeightedGraph, spec: VariantSpec) -> ExecutionTrace:
    """Run one of the exact or faulty Bellman-Ford executors.

    greedy compares only edge weights when choosing the update; decay scales
    candidate distances by decay_const; noisy perturbs each candidate with
    zero-mean Gaussian noise (seeded) before comparison. All run for at most
    n-1 steps or until a fixed point.
    """
    if spec.kind == "exact":
        return bellman_ford_trace(g)
    if spec.kind == "greedy":
        return _run_until_fixed(g, lambda s: _greedy_relax(g, s), max_steps=g.n - 1)
    if spec.kind == "decay":
        return _run_until_fixed(
            g, lambda s: _relax_once(g, s, decay_const=spec.decay_const), max_steps=g.n - 1
        )
    # noisy
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(spec.seed)))

    def noisy_step(s: Snapshot) -> Snapshot:
        noise = (
            rng.normal(0.0, spec.noise_sigma, size=(g.n, g.n)) if spec.noise_sigma > 0 else None
        )
        return _relax_once(g, s, noise=noise)

    return _run_until_fixed(g, noisy_step, max_steps=g.n - 1)


def bfs_trace(g: WeightedGraph) -> ExecutionTrace:
    """Parallel BFS expansion over the unweighted adjacency.

    dist holds hop counts; pi[v] is set once, on first discovery, to the
    lowest-index discovering neighbor.
    """
    adj = g.edge_mask
    steps = [_initial_snapshot(g)]
    while True:
        cur = steps[-1]
        discovered = np.isfinite(cur.dist)
        frontier_from = discovered[:, None] & adj & ~discovered[None, :]
        reached = frontier_from.any(axis=0)
        if not reached.any():
            break
        first_parent = np.argmax(frontier_from, axis=0)
        new_d = cur.dist.copy()
        new_d[reached] = float(len(steps))  # hop count equals the step index
        new_pi = cur.pi.copy()
        new_pi[reached] = first_parent[reached]
        steps.append(Snapshot(pi=new_pi, dist=new_d))
    return ExecutionTrace(steps=tuple(steps))


def agreement(a: ExecutionTrace, b: ExecutionTrace, mode: str = "final") -> float:
    """Fraction of nodes on which two traces agree.

    final: compare the final pointer arrays entrywise. any_step: fraction of
    nodes whose pointer in a's final snapshot appears in at least one of b's
    snapshots (the "ever-correct" measure when a is the ground truth).
    """
    if a.n != b.n:
        raise GraphError(f"trace node counts differ: {a.n} vs {b.n}")
    if mode == "final":
        return float(np.mean(a.final.pi == b.final.pi))
    if mode == "any_step":
        target = a.final.pi
        hit = np.zeros(a.n, dtype=bool)
        for s in b.steps:
            hit |= s.pi == target
        return float(np.mean(hit))
    raise GraphError(f"unknown agreement mode {mode!r}; expected 'final' or 'any_step'")
