import numpy as np
import pytest

from narlab.algorithms import bellman_ford_trace
from narlab.graphs import (
    GeneratorSpec,
    GraphError,
    NodePotential,
    WeightedGraph,
    generate_er,
    make_reweighting_cluster,
    reweight,
    scale_weights,
)


def graph_from_edges(n, edges, source=0):
    w = np.zeros((n, n))
    for u, v, weight in edges:
        w[u, v] = weight
    return WeightedGraph(n=n, weights=w, source=source)


def test_complete_graph_when_p_one():
    g = generate_er(GeneratorSpec(n=4, p=1.0, seed=3))
    offdiag = ~np.eye(4, dtype=bool)
    assert np.all(g.weights[offdiag] > 0.0)
    assert np.all(g.weights[offdiag] < 1.0)
    assert g.is_symmetric()
    assert np.all(np.diag(g.weights) == 0.0)


def test_empty_graph_is_rejected():
    with pytest.raises(GraphError):
        generate_er(GeneratorSpec(n=16, p=0.0, seed=1))


def test_small_n_rejected():
    with pytest.raises(GraphError):
        GeneratorSpec(n=1, p=0.5, seed=0)


def test_generation_is_deterministic():
    spec = GeneratorSpec(n=16, p=0.5, seed=42)
    a, b = generate_er(spec), generate_er(spec)
    assert np.array_equal(a.weights, b.weights)
    assert a.source == b.source


def test_generated_graphs_satisfy_invariants():
    for seed in range(50):
        g = generate_er(GeneratorSpec(n=12, p=0.4, seed=seed))
        assert g.is_symmetric()
        assert np.all(np.diag(g.weights) == 0.0)
        nz = g.weights[g.weights != 0.0]
        assert np.all((nz > 0.0) & (nz < 1.0))
        assert np.any(g.weights[g.source] != 0.0)


def test_scale_identity():
    g = generate_er(GeneratorSpec(n=6, p=0.8, seed=7))
    assert np.array_equal(scale_weights(g, 1.0).weights, g.weights)


def test_scale_direct_arithmetic():
    g = graph_from_edges(3, [(0, 1, 0.4), (1, 2, 0.8)])
    s = scale_weights(g, 0.5)
    assert s.weights[0, 1] == pytest.approx(0.2)
    assert s.weights[1, 2] == pytest.approx(0.4)
    assert s.weights[0, 2] == 0.0


def test_scale_rejects_nonpositive():
    g = generate_er(GeneratorSpec(n=4, p=1.0, seed=0))
    for lam in (0.0, -1.0):
        with pytest.raises(GraphError):
            scale_weights(g, lam)


def test_scaling_preserves_pointers_and_scales_distances():
    rng = np.random.default_rng(11)
    for i in range(100):
        g = generate_er(GeneratorSpec(n=10, p=0.5, seed=2000 + i))
        lam = rng.uniform(0.5, 1.0)
        base = bellman_ford_trace(g)
        scaled = bellman_ford_trace(scale_weights(g, lam))
        assert len(base.steps) == len(scaled.steps)
        for sb, ss in zip(base.steps, scaled.steps):
            assert np.array_equal(sb.pi, ss.pi)
            finite = np.isfinite(sb.dist)
            assert np.array_equal(finite, np.isfinite(ss.dist))
            assert np.allclose(ss.dist[finite], lam * sb.dist[finite], atol=1e-9)


def test_reweight_zero_potential_is_identity():
    g = generate_er(GeneratorSpec(n=8, p=0.6, seed=5))
    rw = reweight(g, NodePotential(np.zeros(8)))
    assert np.array_equal(rw.weights, g.weights)


def test_reweight_direct_arithmetic():
    g = graph_from_edges(3, [(0, 1, 0.5), (1, 2, 0.2), (0, 2, 0.9)])
    rw = reweight(g, NodePotential([0.1, 0.0, 0.05]), strict=False)
    assert rw.weights[0, 1] == pytest.approx(0.6)
    assert rw.weights[1, 2] == pytest.approx(0.15)
    assert rw.weights[0, 2] == pytest.approx(0.95)
    assert rw.weights[1, 0] == 0.0


def test_reweight_strict_rejects_out_of_range():
    g = graph_from_edges(3, [(0, 1, 0.95), (1, 2, 0.5)])
    with pytest.raises(GraphError):
        reweight(g, NodePotential([0.2, 0.0, 0.0]))


def test_reweighting_preserves_execution():
    # Lemma property: pointer traces identical, distances shifted by
    # h[source] - h[u].
    rng = np.random.default_rng(23)
    for i in range(200):
        c = 0.25
        g = generate_er(GeneratorSpec(n=8, p=0.6, weight_low=c, weight_high=1 - c, seed=3000 + i))
        h = rng.uniform(0.0, c, size=8)
        rw = reweight(g, NodePotential(h))
        a, b = bellman_ford_trace(g), bellman_ford_trace(rw)
        assert len(a.steps) == len(b.steps)
        for sa, sb in zip(a.steps, b.steps):
            assert np.array_equal(sa.pi, sb.pi)
            finite = np.isfinite(sa.dist)
            shift = h[g.source] - h[finite]
            assert np.allclose(sb.dist[finite], sa.dist[finite] + shift, atol=1e-9)


def test_cluster_of_one_is_base_graph():
    spec = GeneratorSpec(n=8, p=0.7, seed=9)
    cluster = make_reweighting_cluster(spec, c=0.25, k=1, seed=1)
    assert len(cluster) == 1


@pytest.mark.parametrize("c", [0.5, 0.25])
def test_cluster_members_stay_in_range(c):
    cluster = make_reweighting_cluster(GeneratorSpec(n=10, p=0.6, seed=4), c=c, k=8, seed=2)
    assert len(cluster) == 8
    for g in cluster:
        nz = g.weights[g.weights != 0.0]
        assert np.all((nz > 0.0) & (nz < 1.0))


def test_cluster_members_share_pointer_trace():
    cluster = make_reweighting_cluster(GeneratorSpec(n=10, p=0.6, seed=13), c=0.25, k=8, seed=3)
    ref = bellman_ford_trace(cluster[0])
    for g in cluster[1:]:
        t = bellman_ford_trace(g)
        assert len(t.steps) == len(ref.steps)
        for sr, st in zip(ref.steps, t.steps):
            assert np.array_equal(sr.pi, st.pi)


def test_json_round_trip_is_exact():
    g = generate_er(GeneratorSpec(n=9, p=0.5, seed=77))
    back = WeightedGraph.from_json(g.to_json())
    assert back.n == g.n and back.source == g.source
    assert np.array_equal(back.weights, g.weights)


def test_graph_invariant_validation():
    with pytest.raises(GraphError):
        WeightedGraph(n=2, weights=np.array([[0.1, 0.5], [0.5, 0.0]]), source=0)
    with pytest.raises(GraphError):
        WeightedGraph(n=2, weights=np.array([[0.0, 1.5], [0.5, 0.0]]), source=0)
    with pytest.raises(GraphError):
        WeightedGraph(n=2, weights=np.zeros((2, 2)), source=5)
